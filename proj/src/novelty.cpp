#include "epbt/novelty.hpp"

#include <algorithm>
#include <numeric>
#include <string>

#include "epbt/errors.hpp"
#include "epbt/genetic_ops.hpp"

namespace epbt {

std::size_t PulsationConfig::default_expanded_count(std::size_t elite_count) {
  return (3 * elite_count + 1) / 2;
}

void PulsationConfig::validate(std::size_t elite_count, std::size_t population_size) const {
  if (period && *period == 0) {
    throw ConfigError("novelty_period must be at least 1 (or 'off')");
  }
  if (probe_size == 0) {
    throw ConfigError("probe_size must be positive");
  }
  if (!period) {
    return;
  }
  if (expanded_count <= elite_count) {
    throw ConfigError("novelty_candidates (m) must exceed elite_count (k)");
  }
  if (expanded_count > population_size) {
    throw ConfigError("novelty_candidates (m) exceeds population size");
  }
}

BehaviorVector behavior(std::span<const int> predictions, std::span<const int> truth) {
  if (predictions.size() != truth.size()) {
    throw InputError("behavior: " + std::to_string(predictions.size()) + " predictions for " +
                     std::to_string(truth.size()) + " labels");
  }
  BehaviorVector out(truth.size());
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out.set(i, predictions[i] == truth[i]);
  }
  return out;
}

std::vector<double> novelty_scores(std::span<const BehaviorVector> behaviors) {
  const std::size_t m = behaviors.size();
  for (const auto& b : behaviors) {
    if (b.size() != behaviors.front().size()) {
      throw InputError("novelty_scores: behavior vectors differ in length");
    }
  }
  std::vector<double> scores(m, 0.0);
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = i + 1; j < m; ++j) {
      const auto d = static_cast<double>(behaviors[i].distance(behaviors[j]));
      scores[i] += d;
      scores[j] += d;
    }
  }
  return scores;
}

std::vector<Individual> novelty_elite_select(const Population& pop, std::size_t k, std::size_t m) {
  if (m > pop.members.size()) {
    throw ConfigError("novelty_elite_select: m exceeds population size");
  }
  if (k > m) {
    throw ConfigError("novelty_elite_select: k exceeds m");
  }
  std::vector<Individual> candidates = elite_select(pop, m);
  std::vector<BehaviorVector> behaviors;
  behaviors.reserve(m);
  for (const auto& c : candidates) {
    if (!c.behavior) {
      throw StateError("novelty_elite_select: individual " + std::to_string(c.id) +
                       " has no behavior vector");
    }
    behaviors.push_back(*c.behavior);
  }
  const std::vector<double> scores = novelty_scores(behaviors);

  std::vector<std::size_t> rank(m);
  std::iota(rank.begin(), rank.end(), 0);
  std::sort(rank.begin(), rank.end(), [&](std::size_t a, std::size_t b) {
    if (scores[a] != scores[b]) {
      return scores[a] > scores[b];
    }
    return fitter_than(candidates[a], candidates[b]);
  });

  std::vector<std::size_t> chosen;
  std::vector<std::size_t> skipped;
  for (std::size_t r : rank) {
    if (chosen.size() == k) {
      break;
    }
    const bool duplicate = std::any_of(chosen.begin(), chosen.end(), [&](std::size_t c) {
      return behaviors[c] == behaviors[r];
    });
    (duplicate ? skipped : chosen).push_back(r);
  }
  for (std::size_t r : skipped) {
    if (chosen.size() == k) {
      break;
    }
    chosen.push_back(r);
  }

  std::vector<Individual> elites;
  elites.reserve(k);
  for (std::size_t c : chosen) {
    elites.push_back(candidates[c]);
  }
  return elites;
}

bool pulsation_active(std::size_t generation, std::optional<std::size_t> period) {
  if (!period) {
    return false;
  }
  if (*period == 0) {
    throw InputError("pulsation_active: period must be at least 1");
  }
  return (generation / *period) % 2 == 1;
}

} // namespace epbt
