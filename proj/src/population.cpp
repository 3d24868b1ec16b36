#include "epbt/population.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>
#include <string>
#include <unordered_map>

#include "epbt/errors.hpp"
#include "epbt/io.hpp"

namespace epbt {

double Genome::gene(std::size_t i) const {
  if (i < kTaylorParamCount) {
    return loss_params[i];
  }
  switch (i) {
    case kLrScale: return lr_scale;
    case kLrDecay: return lr_decay_factor;
    case kMomentum: return momentum;
    default: throw InputError("Genome::gene: index out of range");
  }
}

std::array<double, Genome::kGeneCount> Genome::genes() const {
  std::array<double, kGeneCount> out{};
  for (std::size_t i = 0; i < kGeneCount; ++i) {
    out[i] = gene(i);
  }
  return out;
}

Genome Genome::from_genes(const std::array<double, kGeneCount>& genes) {
  Genome g;
  g.loss_params = LossParams::from_span(std::span(genes).first<kTaylorParamCount>());
  g.lr_scale = genes[kLrScale];
  g.lr_decay_factor = genes[kLrDecay];
  g.momentum = genes[kMomentum];
  g.validate();
  return g;
}

bool Genome::valid() const {
  return std::isfinite(lr_scale) && std::isfinite(lr_decay_factor) && std::isfinite(momentum) &&
         lr_scale > 0.0 && lr_decay_factor > 1.0 && momentum >= 0.0 && momentum < 1.0;
}

void Genome::validate() const {
  if (!std::isfinite(lr_scale) || lr_scale <= 0.0) {
    throw InputError("genome: lr_scale must be positive and finite");
  }
  if (!std::isfinite(lr_decay_factor) || lr_decay_factor <= 1.0) {
    throw InputError("genome: lr_decay_factor must exceed 1");
  }
  if (!std::isfinite(momentum) || momentum < 0.0 || momentum >= 1.0) {
    throw InputError("genome: momentum must lie in [0, 1)");
  }
}

std::string_view Genome::gene_name(std::size_t i) {
  static constexpr std::array<std::string_view, kGeneCount> names{
      "theta0", "theta1", "theta2", "theta3", "theta4", "theta5",
      "theta6", "theta7", "lr_scale", "lr_decay", "momentum"};
  if (i >= kGeneCount) {
    throw InputError("Genome::gene_name: index out of range");
  }
  return names[i];
}

GeneRanges GeneRanges::defaults() {
  GeneRanges r;
  for (std::size_t i = 0; i < kTaylorParamCount; ++i) {
    r.ranges[i] = {-10.0, 10.0};
  }
  r.ranges[Genome::kLrScale] = {0.001, 1.0};
  r.ranges[Genome::kLrDecay] = {1.5, 10.0};
  r.ranges[Genome::kMomentum] = {0.8, 0.99};
  return r;
}

void GeneRanges::validate() const {
  for (std::size_t i = 0; i < Genome::kGeneCount; ++i) {
    const auto& r = ranges[i];
    const std::string name(Genome::gene_name(i));
    if (!std::isfinite(r.low) || !std::isfinite(r.high)) {
      throw ConfigError("range for " + name + " must be finite");
    }
    if (r.low > r.high) {
      throw ConfigError("range for " + name + " is empty (low > high)");
    }
  }
  if (ranges[Genome::kLrScale].low <= 0.0) {
    throw ConfigError("range for lr_scale must be strictly positive");
  }
  if (ranges[Genome::kLrDecay].low <= 1.0) {
    throw ConfigError("range for lr_decay must lie above 1");
  }
  if (ranges[Genome::kMomentum].low < 0.0 || ranges[Genome::kMomentum].high >= 1.0) {
    throw ConfigError("range for momentum must lie within [0, 1)");
  }
}

Genome GeneRanges::sample(RandomSource& rng) const {
  std::array<double, Genome::kGeneCount> genes{};
  for (std::size_t i = 0; i < Genome::kGeneCount; ++i) {
    genes[i] = ranges[i].clamp(rng.uniform(ranges[i].low, ranges[i].high));
  }
  return Genome::from_genes(genes);
}

bool fitter_than(const Individual& a, const Individual& b) {
  const double fa = a.fitness_or_zero();
  const double fb = b.fitness_or_zero();
  if (fa != fb) {
    return fa > fb;
  }
  return a.id < b.id;
}

const Individual& Population::best() const {
  if (members.empty()) {
    throw StateError("Population::best: empty population");
  }
  return *std::min_element(members.begin(), members.end(), fitter_than);
}

Population init_population(std::size_t size, const GeneRanges& ranges, RandomSource& rng,
                           IdAllocator& ids, const WeightFactory& make_weights) {
  if (size < 2) {
    throw ConfigError("population size must be at least 2");
  }
  ranges.validate();
  Population pop;
  pop.generation = 0;
  pop.members.reserve(size);
  for (std::size_t i = 0; i < size; ++i) {
    Individual ind;
    ind.id = ids.next();
    ind.genome = ranges.sample(rng);
    pop.members.push_back(std::move(ind));
  }
  // Weights are drawn after all genomes so the genome stream does not depend
  // on the architecture.
  if (make_weights) {
    for (auto& ind : pop.members) {
      ind.weights = make_weights(rng);
    }
  }
  return pop;
}

GenerationRecord GenerationRecord::from_population(const Population& pop) {
  GenerationRecord rec;
  rec.generation = pop.generation;
  std::vector<double> fitnesses;
  for (const auto& ind : pop.members) {
    MemberRecord m;
    m.id = ind.id;
    m.parent_id = ind.parent_id;
    m.genome = ind.genome;
    m.fitness = ind.fitness_or_zero();
    m.test_accuracy = ind.test_accuracy;
    m.epochs_trained = ind.epochs_trained;
    m.born = ind.born;
    rec.members.push_back(m);
    fitnesses.push_back(m.fitness);
  }
  if (!fitnesses.empty()) {
    rec.best_fitness = *std::max_element(fitnesses.begin(), fitnesses.end());
    std::sort(fitnesses.begin(), fitnesses.end());
    const std::size_t n = fitnesses.size();
    rec.median_fitness =
        n % 2 == 1 ? fitnesses[n / 2] : 0.5 * (fitnesses[n / 2 - 1] + fitnesses[n / 2]);
  }
  return rec;
}

std::vector<AncestorEntry> ancestry(const std::vector<GenerationRecord>& history, IndividualId id) {
  // First appearance of each id in the log.
  std::unordered_map<IndividualId, std::pair<std::size_t, const MemberRecord*>> first_seen;
  for (const auto& rec : history) {
    for (const auto& m : rec.members) {
      first_seen.try_emplace(m.id, rec.generation, &m);
    }
  }
  std::vector<AncestorEntry> chain;
  std::optional<IndividualId> cursor = id;
  while (cursor) {
    auto it = first_seen.find(*cursor);
    if (it == first_seen.end()) {
      if (chain.empty()) {
        throw LookupError("ancestry: unknown individual id " + std::to_string(id));
      }
      throw LookupError("ancestry: broken lineage at id " + std::to_string(*cursor));
    }
    const auto& [generation, member] = it->second;
    if (!chain.empty() && generation >= chain.back().generation) {
      throw FormatError("ancestry: parent not from an earlier generation");
    }
    chain.push_back({generation, member->id, member->genome, member->fitness});
    cursor = member->parent_id;
  }
  std::reverse(chain.begin(), chain.end());

  std::vector<AncestorEntry> deduped;
  for (auto& entry : chain) {
    if (deduped.empty() || !(deduped.back().genome == entry.genome)) {
      deduped.push_back(std::move(entry));
    }
  }
  return deduped;
}

std::string ancestry_csv(const std::vector<AncestorEntry>& chain) {
  std::ostringstream out;
  out << "generation,id";
  for (std::size_t i = 0; i < Genome::kGeneCount; ++i) {
    out << ',' << Genome::gene_name(i);
  }
  out << ",fitness\n";
  for (const auto& e : chain) {
    out << e.generation << ',' << e.id;
    for (double g : e.genome.genes()) {
      out << ',' << format_double(g);
    }
    out << ',' << format_double(e.fitness) << '\n';
  }
  return out.str();
}

} // namespace epbt
