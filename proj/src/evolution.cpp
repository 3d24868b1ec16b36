#include "epbt/evolution.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstring>
#include <thread>

#include "epbt/errors.hpp"

namespace epbt {

namespace {

constexpr std::uint64_t kEvolutionStream = 1;
constexpr std::uint64_t kSgdBaselineStream = 2;

std::uint64_t evaluation_seed(std::uint64_t run_seed, IndividualId id, std::size_t generation) {
  return mix_seed(mix_seed(run_seed, id), generation);
}

} // namespace

std::string_view to_string(Strategy s) {
  switch (s) {
    case Strategy::epbt: return "epbt";
    case Strategy::pbt_baseline: return "pbt_baseline";
    case Strategy::sgd_baseline: return "sgd_baseline";
  }
  return "unknown";
}

Strategy parse_strategy(std::string_view name) {
  if (name == "epbt") return Strategy::epbt;
  if (name == "pbt_baseline") return Strategy::pbt_baseline;
  if (name == "sgd_baseline") return Strategy::sgd_baseline;
  throw ConfigError("unknown strategy '" + std::string(name) +
                    "' (expected epbt, pbt_baseline or sgd_baseline)");
}

void EvolutionConfig::validate() const {
  if (generations == 0) {
    throw ConfigError("generations must be at least 1");
  }
  if (epochs_per_generation == 0) {
    throw ConfigError("epochs_per_generation must be at least 1");
  }
  if (!(distill_alpha >= 0.0 && distill_alpha <= 1.0)) {
    throw ConfigError("distill_alpha must lie in [0, 1]");
  }
  ranges.validate();
  if (strategy == Strategy::sgd_baseline) {
    return;
  }
  if (population_size < 2) {
    throw ConfigError("population must be at least 2");
  }
  if (strategy == Strategy::pbt_baseline) {
    if (population_size < 4) {
      throw ConfigError("pbt_baseline needs a population of at least 4 (empty quartiles)");
    }
    return;
  }
  operators.validate(population_size);
  pulsation.validate(operators.elite_count, population_size);
}

TrainerEvaluator::TrainerEvaluator(Split data, MlpArchitecture arch, SgdConfig base_sgd,
                                   std::size_t probe_size, std::uint64_t probe_seed)
    : data_(std::move(data)), arch_(std::move(arch)), base_sgd_(std::move(base_sgd)) {
  arch_.validate();
  base_sgd_.validate();
  if (data_.validation.size() == 0) {
    throw ConfigError("validation split is empty");
  }
  if (data_.train.dims() != arch_.input_size()) {
    throw ConfigError("architecture input size does not match the data");
  }
  if (data_.train.class_count != arch_.output_size()) {
    throw ConfigError("architecture output size does not match the class count");
  }
  Rng rng(probe_seed);
  probe_ = probe_subset(data_.validation, probe_size, rng);
  const Dataset probe = data_.validation.subset(probe_);
  probe_features_ = probe.features;
  probe_labels_ = probe.labels;
}

std::shared_ptr<const Weights> TrainerEvaluator::initial_weights(RandomSource& rng) const {
  return std::make_shared<const Weights>(he_init(arch_, rng));
}

EvaluationResult TrainerEvaluator::evaluate(const EvaluationRequest& request) const {
  if (!request.weights) {
    throw StateError("TrainerEvaluator: individual " + std::to_string(request.id) +
                     " has no weights");
  }
  Rng rng(request.seed);
  const SgdConfig sgd = sgd_for_genome(base_sgd_, request.genome);
  const LossSpec loss = request.cross_entropy ? LossSpec{CrossEntropyLoss{}}
                                              : LossSpec{request.genome.loss_params};
  const Teacher teacher{request.teacher.get(), request.distill_alpha};
  TrainResult trained = train_epochs(*request.weights, data_.train, sgd, loss, request.epochs,
                                     teacher, request.epochs_already, request.total_epochs, rng);

  EvaluationResult result;
  result.epochs = request.epochs;
  if (trained.report.diverged) {
    result.failed = true;
    result.weights = request.weights;
    result.fitness = 0.0;
    result.behavior = BehaviorVector(probe_.size());
    return result;
  }
  auto weights = std::make_shared<const Weights>(std::move(trained.weights));
  result.fitness = evaluate_accuracy(*weights, data_.validation);
  result.behavior = behavior(predict_labels(*weights, probe_features_), probe_labels_);
  if (data_.test.size() > 0) {
    result.test_accuracy = evaluate_accuracy(*weights, data_.test);
  }
  result.weights = std::move(weights);
  return result;
}

std::uint64_t GenomeHashEvaluator::genome_hash(const Genome& g) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (double v : g.genes()) {
    std::uint64_t bits = 0;
    std::memcpy(&bits, &v, sizeof bits);
    for (int i = 0; i < 8; ++i) {
      h ^= (bits >> (8 * i)) & 0xFF;
      h *= 0x100000001b3ULL;
    }
  }
  return mix_seed(h, 0);
}

EvaluationResult GenomeHashEvaluator::evaluate(const EvaluationRequest& request) const {
  const std::uint64_t h = genome_hash(request.genome);
  EvaluationResult result;
  result.weights = request.weights;
  result.fitness = static_cast<double>(h >> 11) * 0x1.0p-53;
  result.epochs = request.epochs;
  BehaviorVector b(behavior_size_);
  Rng bits(h);
  for (std::size_t i = 0; i < behavior_size_; ++i) {
    b.set(i, bits.uniform() < 0.5);
  }
  result.behavior = std::move(b);
  return result;
}

std::vector<EvaluationResult> evaluate_all(const Evaluator& evaluator,
                                           const std::vector<EvaluationRequest>& requests,
                                           std::size_t workers) {
  std::vector<EvaluationResult> results(requests.size());
  auto run_one = [&](std::size_t i) {
    try {
      results[i] = evaluator.evaluate(requests[i]);
    } catch (const std::exception&) {
      EvaluationResult failed;
      failed.failed = true;
      failed.weights = requests[i].weights;
      failed.epochs = requests[i].epochs;
      results[i] = std::move(failed);
    }
  };
  if (workers == 0) {
    workers = std::max(1U, std::thread::hardware_concurrency());
  }
  workers = std::min(workers, requests.size());
  if (workers <= 1) {
    for (std::size_t i = 0; i < requests.size(); ++i) {
      run_one(i);
    }
    return results;
  }
  std::atomic<std::size_t> next{0};
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next++; i < requests.size(); i = next++) {
          run_one(i);
        }
      });
    }
  }
  return results;
}

RunCounters predict_counters(const EvolutionConfig& cfg) {
  cfg.validate();
  RunCounters c;
  const std::size_t p = cfg.population_size;
  const std::size_t n = cfg.generations;
  const std::size_t e = cfg.epochs_per_generation;
  switch (cfg.strategy) {
    case Strategy::epbt:
      c.evaluations = p + (n - 1) * (p - cfg.operators.elite_count);
      c.genomes_evaluated = c.evaluations;
      c.trained_epochs = c.evaluations * e;
      c.budget_epochs = p * n * e;
      break;
    case Strategy::pbt_baseline:
      c.evaluations = p * n;
      c.genomes_evaluated = p + (n - 1) * (p / 4);
      c.trained_epochs = p * n * e;
      c.budget_epochs = p * n * e;
      break;
    case Strategy::sgd_baseline:
      c.evaluations = 1;
      c.genomes_evaluated = 1;
      c.trained_epochs = n * e;
      c.budget_epochs = n * e;
      break;
  }
  return c;
}

EvolutionRun::EvolutionRun(EvolutionConfig cfg, const Evaluator& evaluator)
    : cfg_(std::move(cfg)), evaluator_(evaluator), rng_(mix_seed(cfg_.seed, kEvolutionStream)) {
  cfg_.validate();
  if (cfg_.strategy == Strategy::sgd_baseline) {
    throw ConfigError("EvolutionRun: sgd_baseline is not a population strategy");
  }
}

std::vector<EvaluationResult> EvolutionRun::evaluate(std::vector<Individual>& individuals,
                                                     std::shared_ptr<const Weights> teacher) {
  const std::size_t generation = next_generation_;
  std::vector<EvaluationRequest> requests;
  requests.reserve(individuals.size());
  for (const auto& ind : individuals) {
    EvaluationRequest r;
    r.id = ind.id;
    r.genome = ind.genome;
    r.weights = ind.weights;
    r.epochs_already = ind.epochs_trained;
    r.epochs = cfg_.epochs_per_generation;
    r.total_epochs = cfg_.total_epochs();
    r.teacher = teacher;
    r.distill_alpha = cfg_.distill_alpha;
    r.cross_entropy = cfg_.strategy == Strategy::pbt_baseline;
    r.seed = evaluation_seed(cfg_.seed, ind.id, generation);
    requests.push_back(std::move(r));
  }
  auto results = evaluate_all(evaluator_, requests, cfg_.workers);
  for (std::size_t i = 0; i < individuals.size(); ++i) {
    Individual& ind = individuals[i];
    EvaluationResult& res = results[i];
    const bool first_evaluation = !ind.fitness.has_value();
    ++counters_.evaluations;
    counters_.genomes_evaluated += first_evaluation ? 1 : 0;
    counters_.trained_epochs += requests[i].epochs;
    if (res.failed) {
      ++counters_.failed_evaluations;
      ind.fitness = 0.0;
      ind.behavior = res.behavior ? *res.behavior : BehaviorVector(evaluator_.behavior_size());
      ind.test_accuracy.reset();
      continue;
    }
    ind.weights = std::move(res.weights);
    ind.fitness = res.fitness;
    ind.behavior = std::move(res.behavior);
    ind.test_accuracy = res.test_accuracy;
    ind.epochs_trained += res.epochs;
  }
  counters_.budget_epochs += cfg_.population_size * cfg_.epochs_per_generation;
  return results;
}

GenerationRecord EvolutionRun::step() {
  if (finished()) {
    throw StateError("EvolutionRun::step: run already finished");
  }
  const auto start = std::chrono::steady_clock::now();
  GenerationRecord rec;
  if (next_generation_ == 0) {
    rec = step_initial();
  } else if (cfg_.strategy == Strategy::epbt) {
    rec = step_epbt();
  } else {
    rec = step_pbt();
  }
  rec.wall_seconds =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  ++next_generation_;
  return rec;
}

GenerationRecord EvolutionRun::step_initial() {
  auto make_weights = [this](RandomSource& r) { return evaluator_.initial_weights(r); };
  if (cfg_.strategy == Strategy::pbt_baseline) {
    population_ = Population{};
    for (std::size_t i = 0; i < cfg_.population_size; ++i) {
      Individual ind;
      ind.id = ids_.next();
      ind.genome = pbt_initial_genome(cfg_.ranges, rng_);
      population_.members.push_back(std::move(ind));
    }
    for (auto& ind : population_.members) {
      ind.weights = make_weights(rng_);
    }
  } else {
    population_ = init_population(cfg_.population_size, cfg_.ranges, rng_, ids_, make_weights);
  }
  population_.generation = 0;
  evaluate(population_.members, nullptr);
  return GenerationRecord::from_population(population_);
}

GenerationRecord EvolutionRun::step_epbt() {
  const std::size_t g = next_generation_;
  const std::size_t k = cfg_.operators.elite_count;
  const std::size_t p = cfg_.population_size;

  const auto parents = tournament_select(population_, cfg_.operators.tournament_size, p - k, rng_);
  auto children = make_offspring(parents, cfg_.operators, cfg_.ranges, g, ids_, rng_);

  std::shared_ptr<const Weights> teacher;
  if (cfg_.distillation) {
    teacher = population_.best().weights;
  }
  evaluate(children, teacher);

  // Elites come from the population the children were bred from.
  const bool novelty = pulsation_active(g - 1, cfg_.pulsation.period);
  std::vector<Individual> elites =
      novelty ? novelty_elite_select(population_, k, cfg_.pulsation.expanded_count)
              : elite_select(population_, k);

  Population next;
  next.generation = g;
  next.members.reserve(p);
  std::vector<IndividualId> elite_ids;
  for (auto& e : elites) {
    elite_ids.push_back(e.id);
    next.members.push_back(std::move(e));
  }
  for (auto& c : children) {
    next.members.push_back(std::move(c));
  }
  population_ = std::move(next);

  GenerationRecord rec = GenerationRecord::from_population(population_);
  rec.elite_ids = std::move(elite_ids);
  rec.novelty_active = novelty;
  return rec;
}

GenerationRecord EvolutionRun::step_pbt() {
  const std::size_t g = next_generation_;
  pbt_exploit_explore(population_, cfg_.operators, cfg_.ranges, g, ids_, rng_);
  evaluate(population_.members, nullptr);
  population_.generation = g;
  return GenerationRecord::from_population(population_);
}

RunState EvolutionRun::state() const {
  return RunState{next_generation_, population_, ids_.peek(), rng_.save_state(), counters_};
}

void EvolutionRun::restore(const RunState& state) {
  if (state.next_generation > cfg_.generations) {
    throw StateError("EvolutionRun::restore: checkpoint is past the configured generations");
  }
  if (state.next_generation > 0 && state.population.size() != cfg_.population_size) {
    throw StateError("EvolutionRun::restore: checkpoint population size differs from config");
  }
  next_generation_ = state.next_generation;
  population_ = state.population;
  ids_ = IdAllocator(state.next_id);
  rng_.restore_state(state.rng_state);
  counters_ = state.counters;
}

namespace {

std::vector<GenerationRecord> run_strategy(EvolutionConfig cfg, Strategy strategy,
                                           const Evaluator& evaluator,
                                           const GenerationCallback& on_generation) {
  cfg.strategy = strategy;
  EvolutionRun run(std::move(cfg), evaluator);
  std::vector<GenerationRecord> records;
  while (!run.finished()) {
    records.push_back(run.step());
    if (on_generation) {
      on_generation(run, records.back());
    }
  }
  return records;
}

} // namespace

std::vector<GenerationRecord> run_epbt(const EvolutionConfig& cfg, const Evaluator& evaluator,
                                       const GenerationCallback& on_generation) {
  return run_strategy(cfg, Strategy::epbt, evaluator, on_generation);
}

std::vector<GenerationRecord> run_pbt_baseline(const EvolutionConfig& cfg,
                                               const Evaluator& evaluator,
                                               const GenerationCallback& on_generation) {
  return run_strategy(cfg, Strategy::pbt_baseline, evaluator, on_generation);
}

Genome pbt_initial_genome(const GeneRanges& ranges, RandomSource& rng) {
  Genome g;
  const GeneRange& lr = ranges[Genome::kLrScale];
  g.lr_scale = lr.clamp(rng.uniform(lr.low, lr.high));
  g.lr_decay_factor = 5.0;
  g.momentum = 0.9;
  g.validate();
  return g;
}

double perturb_learning_rate(double lr_scale, bool up) {
  return up ? lr_scale * 1.2 : lr_scale / 1.2;
}

void pbt_exploit_explore(Population& pop, const OperatorConfig& ops, const GeneRanges& ranges,
                         std::size_t generation, IdAllocator& ids, RandomSource& rng) {
  const std::size_t p = pop.members.size();
  const std::size_t quarter = p / 4;
  if (quarter == 0) {
    throw ConfigError("pbt: population of " + std::to_string(p) + " has empty quartiles");
  }
  std::vector<std::size_t> ranked(p);
  for (std::size_t i = 0; i < p; ++i) {
    ranked[i] = i;
  }
  std::sort(ranked.begin(), ranked.end(), [&](std::size_t a, std::size_t b) {
    return fitter_than(pop.members[a], pop.members[b]);
  });
  const GeneRange& lr = ranges[Genome::kLrScale];
  for (std::size_t i = 0; i < quarter; ++i) {
    const std::size_t target = ranked[p - quarter + i];
    const Individual source = pop.members[ranked[rng.index(quarter)]];
    Individual copy;
    copy.id = ids.next();
    copy.parent_id = source.id;
    copy.genome = source.genome;
    copy.weights = source.weights;
    copy.epochs_trained = source.epochs_trained;
    copy.born = generation;
    if (rng.bernoulli(ops.reset_prob)) {
      copy.genome.lr_scale = rng.uniform(lr.low, lr.high);
    } else {
      copy.genome.lr_scale = perturb_learning_rate(source.genome.lr_scale, rng.bernoulli(0.5));
    }
    copy.genome.lr_scale = lr.clamp(copy.genome.lr_scale);
    pop.members[target] = std::move(copy);
  }
}

SgdBaselineResult run_sgd_baseline(const EvolutionConfig& cfg, const Split& data,
                                   const MlpArchitecture& arch, const SgdConfig& sgd) {
  if (cfg.generations == 0 || cfg.epochs_per_generation == 0) {
    throw ConfigError("sgd baseline needs a positive epoch budget");
  }
  if (data.validation.size() == 0) {
    throw ConfigError("validation split is empty");
  }
  Rng rng(mix_seed(cfg.seed, kSgdBaselineStream));
  const Weights initial = he_init(arch, rng);
  const std::size_t total = cfg.total_epochs();

  SgdBaselineResult result;
  auto observe = [&](std::size_t epoch, const Weights& w, double loss) {
    SgdCurvePoint point;
    point.epoch = epoch + 1;
    point.train_loss = loss;
    point.validation_accuracy = evaluate_accuracy(w, data.validation);
    point.test_accuracy = data.test.size() > 0 ? evaluate_accuracy(w, data.test) : 0.0;
    result.curve.push_back(point);
  };
  TrainResult trained =
      train_epochs(initial, data.train, sgd, CrossEntropyLoss{}, total, Teacher{}, 0, total, rng,
                   observe);
  result.weights = std::move(trained.weights);
  result.diverged = trained.report.diverged;
  return result;
}

} // namespace epbt
