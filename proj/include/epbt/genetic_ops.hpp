#pragma once

#include <cstddef>
#include <vector>

#include "epbt/population.hpp"
#include "epbt/random.hpp"

namespace epbt {

struct OperatorConfig {
  std::size_t tournament_size = 2;
  double mutation_sigma = 0.1;
  double reset_prob = 0.05;
  double per_gene_mutation_prob = 0.25;
  double swap_prob = 0.5;
  std::size_t elite_count = 20;

  /// Throws ConfigError; requires k < P and t <= P.
  void validate(std::size_t population_size) const;
};

/// `count` tournaments of `t` distinct members each; each winner is the
/// fittest of its draw (ties to lower id).
std::vector<Individual> tournament_select(const Population& pop, std::size_t t, std::size_t count,
                                          RandomSource& rng);

/// Multiplicative Gaussian step value * (1 + noise); zero-valued genes move
/// additively since scaling cannot leave zero.
double perturb_gene(double value, double noise);

/// Per gene: reset with reset_prob, else perturb with per_gene_mutation_prob.
/// The result is clamped into `ranges`.
Genome mutate(const Genome& g, const OperatorConfig& cfg, const GeneRanges& ranges,
              RandomSource& rng);

/// Uniform crossover: each gene comes from `b` with probability swap_prob.
Genome crossover(const Genome& a, const Genome& b, double swap_prob, RandomSource& rng);

/// The k fittest members (ties to lower id), in rank order.
std::vector<Individual> elite_select(const Population& pop, std::size_t k);

/// Mutation followed by crossover with a uniformly drawn other parent. Each
/// child gets a fresh id, points at its parent, and shares the parent's
/// weights and training history.
std::vector<Individual> make_offspring(const std::vector<Individual>& parents,
                                       const OperatorConfig& cfg, const GeneRanges& ranges,
                                       std::size_t generation, IdAllocator& ids,
                                       RandomSource& rng);

} // namespace epbt
