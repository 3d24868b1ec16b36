#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <string_view>
#include <vector>

#include "epbt/loss_taylor.hpp"
#include "epbt/behavior.hpp"
#include "epbt/random.hpp"

namespace epbt {

struct Weights;

using IndividualId = std::uint64_t;

/// Evolvable hyperparameters: the eight loss coefficients followed by the
/// learning-rate scale, learning-rate decay factor and momentum.
struct Genome {
  static constexpr std::size_t kGeneCount = kTaylorParamCount + 3;
  static constexpr std::size_t kLrScale = kTaylorParamCount;
  static constexpr std::size_t kLrDecay = kTaylorParamCount + 1;
  static constexpr std::size_t kMomentum = kTaylorParamCount + 2;

  LossParams loss_params;
  double lr_scale = 1.0;
  double lr_decay_factor = 5.0;
  double momentum = 0.9;

  double gene(std::size_t i) const;
  std::array<double, kGeneCount> genes() const;
  /// Throws InputError if the genes violate the genome invariants.
  static Genome from_genes(const std::array<double, kGeneCount>& genes);

  bool valid() const;
  /// Throws InputError naming the first violated invariant.
  void validate() const;

  static std::string_view gene_name(std::size_t i);

  bool operator==(const Genome&) const = default;
};

struct GeneRange {
  double low = 0.0;
  double high = 0.0;

  double clamp(double v) const { return v < low ? low : (v > high ? high : v); }
  bool contains(double v) const { return v >= low && v <= high; }
};

/// Per-gene sampling intervals, indexed like Genome::gene.
struct GeneRanges {
  std::array<GeneRange, Genome::kGeneCount> ranges;

  /// theta in [-10, 10], lr_scale in [0.001, 1], decay in [1.5, 10],
  /// momentum in [0.8, 0.99].
  static GeneRanges defaults();

  const GeneRange& operator[](std::size_t i) const { return ranges[i]; }
  GeneRange& operator[](std::size_t i) { return ranges[i]; }

  /// Throws ConfigError on empty ranges or ranges whose points would break
  /// genome invariants.
  void validate() const;

  Genome sample(RandomSource& rng) const;
};

struct Individual {
  IndividualId id = 0;
  std::optional<IndividualId> parent_id;
  Genome genome;
  /// Shared, immutable; children alias their parent's weights until trained.
  std::shared_ptr<const Weights> weights;
  std::optional<double> fitness;
  std::optional<BehaviorVector> behavior;
  std::size_t epochs_trained = 0;
  std::optional<double> test_accuracy;
  /// Generation in which the individual was created.
  std::size_t born = 0;

  /// Unset fitness compares as zero.
  double fitness_or_zero() const { return fitness.value_or(0.0); }
};

/// Strict weak ordering used by every selection operator: higher fitness
/// first, then lower id.
bool fitter_than(const Individual& a, const Individual& b);

struct Population {
  std::size_t generation = 0;
  std::vector<Individual> members;

  std::size_t size() const { return members.size(); }
  const Individual& best() const;
};

/// Hands out run-unique individual ids.
class IdAllocator {
public:
  explicit IdAllocator(IndividualId next = 0) : next_(next) {}
  IndividualId next() { return next_++; }
  IndividualId peek() const { return next_; }

private:
  IndividualId next_;
};

using WeightFactory = std::function<std::shared_ptr<const Weights>(RandomSource&)>;

/// Samples `size` genomes uniformly from `ranges`; weights come from
/// `make_weights` when given. Fitness is left unset.
Population init_population(std::size_t size, const GeneRanges& ranges, RandomSource& rng,
                           IdAllocator& ids, const WeightFactory& make_weights = {});

struct MemberRecord {
  IndividualId id = 0;
  std::optional<IndividualId> parent_id;
  Genome genome;
  double fitness = 0.0;
  std::optional<double> test_accuracy;
  std::size_t epochs_trained = 0;
  std::size_t born = 0;
  bool failed = false;
};

/// One entry of the per-generation run log.
struct GenerationRecord {
  std::size_t generation = 0;
  std::vector<MemberRecord> members;
  double best_fitness = 0.0;
  double median_fitness = 0.0;
  std::vector<IndividualId> elite_ids;
  bool novelty_active = false;
  double wall_seconds = 0.0;

  static GenerationRecord from_population(const Population& pop);
};

struct AncestorEntry {
  std::size_t generation = 0;
  IndividualId id = 0;
  Genome genome;
  double fitness = 0.0;
};

/// Parent chain of `id`, root first, with consecutive entries that carry an
/// identical genome collapsed into the earliest one. Throws LookupError for
/// ids absent from `history`.
std::vector<AncestorEntry> ancestry(const std::vector<GenerationRecord>& history, IndividualId id);

/// CSV: generation,id,theta0..theta7,lr_scale,lr_decay,momentum,fitness
std::string ancestry_csv(const std::vector<AncestorEntry>& chain);

} // namespace epbt
