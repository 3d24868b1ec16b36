#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "epbt/behavior.hpp"
#include "epbt/population.hpp"

namespace epbt {

struct PulsationConfig {
  /// Generations per on/off block. Unset disables novelty selection entirely.
  std::optional<std::size_t> period = 5;
  /// Fitness-ranked candidates considered before novelty filtering (m > k).
  std::size_t expanded_count = 30;
  /// Size of the fixed validation probe subset.
  std::size_t probe_size = 400;

  /// m = ceil(3k / 2).
  static std::size_t default_expanded_count(std::size_t elite_count);

  void validate(std::size_t elite_count, std::size_t population_size) const;
};

/// Correctness bits of `predictions` against `truth`.
BehaviorVector behavior(std::span<const int> predictions, std::span<const int> truth);

/// S_i = sum over j of Hamming(b_i, b_j).
std::vector<double> novelty_scores(std::span<const BehaviorVector> behaviors);

/// Picks k elites: the m fittest members are ranked by descending novelty
/// (ties: higher fitness, then lower id) and taken greedily, skipping any
/// candidate whose behavior equals one already taken. Skipped candidates
/// back-fill in rank order if fewer than k distinct behaviors exist.
std::vector<Individual> novelty_elite_select(const Population& pop, std::size_t k, std::size_t m);

/// True iff floor(generation / period) is odd: off for the first block,
/// then alternating. Always false when period is unset.
bool pulsation_active(std::size_t generation, std::optional<std::size_t> period);

} // namespace epbt
