#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "epbt/data.hpp"
#include "epbt/genetic_ops.hpp"
#include "epbt/novelty.hpp"
#include "epbt/population.hpp"
#include "epbt/random.hpp"
#include "epbt/trainer.hpp"

namespace epbt {

enum class Strategy { epbt, pbt_baseline, sgd_baseline };

std::string_view to_string(Strategy s);
/// Throws ConfigError for unknown names.
Strategy parse_strategy(std::string_view name);

struct EvolutionConfig {
  Strategy strategy = Strategy::epbt;
  std::size_t population_size = 40;
  std::size_t generations = 25;
  std::size_t epochs_per_generation = 8;
  /// elite_count lives here (k).
  OperatorConfig operators;
  PulsationConfig pulsation;
  GeneRanges ranges = GeneRanges::defaults();
  /// Final distillation strength; the ramp reaches it at the last epoch.
  double distill_alpha = 0.5;
  /// When false no teacher is passed to the evaluator at all.
  bool distillation = true;
  std::uint64_t seed = 0;
  /// Concurrent evaluations; 0 means one per hardware thread.
  std::size_t workers = 1;

  std::size_t total_epochs() const { return generations * epochs_per_generation; }

  /// Throws ConfigError. Checked before any work starts.
  void validate() const;
};

struct EvaluationRequest {
  IndividualId id = 0;
  Genome genome;
  std::shared_ptr<const Weights> weights;
  std::size_t epochs_already = 0;
  std::size_t epochs = 0;
  std::size_t total_epochs = 0;
  /// Null when no distillation applies.
  std::shared_ptr<const Weights> teacher;
  double distill_alpha = 0.0;
  /// Train with the genome's Taylor loss, or plain cross-entropy.
  bool cross_entropy = false;
  std::uint64_t seed = 0;
};

struct EvaluationResult {
  std::shared_ptr<const Weights> weights;
  double fitness = 0.0;
  std::optional<BehaviorVector> behavior;
  std::optional<double> test_accuracy;
  std::size_t epochs = 0;
  bool failed = false;
};

/// Trains and scores one individual. Implementations must be deterministic
/// in the request and safe to call concurrently.
class Evaluator {
public:
  virtual ~Evaluator() = default;
  virtual EvaluationResult evaluate(const EvaluationRequest& request) const = 0;
  /// Fresh weights for a generation-0 individual; may return null when the
  /// evaluator does not use weights.
  virtual std::shared_ptr<const Weights> initial_weights(RandomSource& rng) const = 0;
  /// Length of every behavior vector this evaluator produces.
  virtual std::size_t behavior_size() const = 0;
};

/// The real evaluator: trains the MLP on the training split, scores
/// validation accuracy, and records probe-set behavior and test accuracy.
class TrainerEvaluator final : public Evaluator {
public:
  /// `data` should already be normalized. The probe subset is drawn once
  /// from `probe_seed`.
  TrainerEvaluator(Split data, MlpArchitecture arch, SgdConfig base_sgd, std::size_t probe_size,
                   std::uint64_t probe_seed);

  EvaluationResult evaluate(const EvaluationRequest& request) const override;
  std::shared_ptr<const Weights> initial_weights(RandomSource& rng) const override;
  std::size_t behavior_size() const override { return probe_.size(); }

  const Split& data() const { return data_; }
  const MlpArchitecture& architecture() const { return arch_; }
  const SgdConfig& base_sgd() const { return base_sgd_; }
  const std::vector<std::size_t>& probe_indices() const { return probe_; }

private:
  Split data_;
  MlpArchitecture arch_;
  SgdConfig base_sgd_;
  std::vector<std::size_t> probe_;
  FeatureMatrix probe_features_;
  std::vector<int> probe_labels_;
};

/// Weight-free evaluator whose fitness is a hash of the genome. Behavior bits
/// are drawn from the same hash. Used for tests and bookkeeping checks.
class GenomeHashEvaluator final : public Evaluator {
public:
  explicit GenomeHashEvaluator(std::size_t behavior_size = 16) : behavior_size_(behavior_size) {}

  EvaluationResult evaluate(const EvaluationRequest& request) const override;
  std::shared_ptr<const Weights> initial_weights(RandomSource&) const override { return nullptr; }
  std::size_t behavior_size() const override { return behavior_size_; }

  static std::uint64_t genome_hash(const Genome& g);

private:
  std::size_t behavior_size_;
};

/// Runs every request, up to `workers` at a time. Results come back in
/// request order. Exceptions thrown by the evaluator become failed results.
std::vector<EvaluationResult> evaluate_all(const Evaluator& evaluator,
                                           const std::vector<EvaluationRequest>& requests,
                                           std::size_t workers);

struct RunCounters {
  /// Calls to the evaluator.
  std::size_t evaluations = 0;
  /// Evaluations of newly created individuals (distinct ids).
  std::size_t genomes_evaluated = 0;
  /// Epochs actually run by evaluations.
  std::size_t trained_epochs = 0;
  /// Population-slot budget: every member occupies epochs_per_generation
  /// epochs of every generation, trained or carried as a frozen elite.
  std::size_t budget_epochs = 0;
  std::size_t failed_evaluations = 0;

  bool operator==(const RunCounters&) const = default;
};

/// Counters a run of `cfg` will report, computed without evaluating.
RunCounters predict_counters(const EvolutionConfig& cfg);

/// Everything needed to continue a run after the last completed generation.
struct RunState {
  std::size_t next_generation = 0;
  Population population;
  IndividualId next_id = 0;
  std::string rng_state;
  RunCounters counters;
};

/// Drives EPBT or the PBT baseline one generation at a time.
class EvolutionRun {
public:
  EvolutionRun(EvolutionConfig cfg, const Evaluator& evaluator);

  bool finished() const { return next_generation_ >= cfg_.generations; }
  /// Runs the next generation and returns its record. Generation 0 creates
  /// and evaluates the initial population.
  GenerationRecord step();

  const Population& population() const { return population_; }
  const RunCounters& counters() const { return counters_; }
  const EvolutionConfig& config() const { return cfg_; }

  RunState state() const;
  void restore(const RunState& state);

private:
  GenerationRecord step_initial();
  GenerationRecord step_epbt();
  GenerationRecord step_pbt();
  std::vector<EvaluationResult> evaluate(std::vector<Individual>& individuals,
                                         std::shared_ptr<const Weights> teacher);

  EvolutionConfig cfg_;
  const Evaluator& evaluator_;
  Rng rng_;
  IdAllocator ids_;
  Population population_;
  RunCounters counters_;
  std::size_t next_generation_ = 0;
};

using GenerationCallback = std::function<void(const EvolutionRun&, const GenerationRecord&)>;

/// Full EPBT loop; one record per generation.
std::vector<GenerationRecord> run_epbt(const EvolutionConfig& cfg, const Evaluator& evaluator,
                                       const GenerationCallback& on_generation = {});

/// Truncation-selection PBT over the learning rate with cross-entropy loss.
std::vector<GenerationRecord> run_pbt_baseline(const EvolutionConfig& cfg,
                                               const Evaluator& evaluator,
                                               const GenerationCallback& on_generation = {});

/// Genome used by PBT members before exploration: cross-entropy is applied
/// separately, so only lr_scale matters; decay 5 and momentum 0.9 are fixed.
Genome pbt_initial_genome(const GeneRanges& ranges, RandomSource& rng);

/// x1.2 when `up`, /1.2 otherwise.
double perturb_learning_rate(double lr_scale, bool up);

/// Bottom quarter of `pop` (by fitness) replaced with copies of uniformly drawn
/// top-quarter members whose lr_scale is perturbed or reset. Copies get new
/// ids and keep the source's weights. Throws ConfigError when P < 4.
void pbt_exploit_explore(Population& pop, const OperatorConfig& ops, const GeneRanges& ranges,
                         std::size_t generation, IdAllocator& ids, RandomSource& rng);

struct SgdCurvePoint {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double validation_accuracy = 0.0;
  double test_accuracy = 0.0;
};

struct SgdBaselineResult {
  std::vector<SgdCurvePoint> curve;
  Weights weights;
  bool diverged = false;
};

/// Single model, cross-entropy, fixed schedule (scale 1, decay 5, momentum
/// 0.9 unless `sgd` says otherwise), trained for generations x
/// epochs_per_generation epochs.
SgdBaselineResult run_sgd_baseline(const EvolutionConfig& cfg, const Split& data,
                                   const MlpArchitecture& arch, const SgdConfig& sgd);

} // namespace epbt
