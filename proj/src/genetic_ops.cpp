#include "epbt/genetic_ops.hpp"

#include <algorithm>
#include <string>

#include "epbt/errors.hpp"

namespace epbt {

namespace {

void check_probability(double p, const char* name) {
  if (!(p >= 0.0 && p <= 1.0)) {
    throw ConfigError(std::string(name) + " must lie in [0, 1]");
  }
}

} // namespace

void OperatorConfig::validate(std::size_t population_size) const {
  if (tournament_size < 1) {
    throw ConfigError("tournament_size must be at least 1");
  }
  if (tournament_size > population_size) {
    throw ConfigError("tournament_size exceeds population size");
  }
  if (!(mutation_sigma > 0.0)) {
    throw ConfigError("mutation_sigma must be positive");
  }
  check_probability(reset_prob, "reset_prob");
  check_probability(per_gene_mutation_prob, "per_gene_mutation_prob");
  check_probability(swap_prob, "swap_prob");
  if (elite_count == 0) {
    throw ConfigError("elite_count must be positive");
  }
  if (elite_count >= population_size) {
    throw ConfigError("elite_count must be smaller than the population size");
  }
}

std::vector<Individual> tournament_select(const Population& pop, std::size_t t, std::size_t count,
                                          RandomSource& rng) {
  if (pop.members.empty()) {
    throw StateError("tournament_select: empty population");
  }
  if (t < 1) {
    throw InputError("tournament_select: tournament size must be at least 1");
  }
  if (count == 0) {
    throw InputError("tournament_select: count must be positive");
  }
  const std::size_t n = pop.members.size();
  const std::size_t draw = std::min(t, n);
  std::vector<std::size_t> order(n);
  std::vector<Individual> winners;
  winners.reserve(count);
  for (std::size_t c = 0; c < count; ++c) {
    // Partial Fisher-Yates: the first `draw` slots are a uniform sample
    // without replacement.
    for (std::size_t i = 0; i < n; ++i) {
      order[i] = i;
    }
    const Individual* winner = nullptr;
    for (std::size_t i = 0; i < draw; ++i) {
      const std::size_t j = i + rng.index(n - i);
      std::swap(order[i], order[j]);
      const Individual& candidate = pop.members[order[i]];
      if (winner == nullptr || fitter_than(candidate, *winner)) {
        winner = &candidate;
      }
    }
    winners.push_back(*winner);
  }
  return winners;
}

double perturb_gene(double value, double noise) {
  if (value == 0.0) {
    return noise;
  }
  return value * (1.0 + noise);
}

Genome mutate(const Genome& g, const OperatorConfig& cfg, const GeneRanges& ranges,
              RandomSource& rng) {
  auto genes = g.genes();
  for (std::size_t i = 0; i < Genome::kGeneCount; ++i) {
    const GeneRange& range = ranges[i];
    if (rng.bernoulli(cfg.reset_prob)) {
      genes[i] = rng.uniform(range.low, range.high);
    } else if (rng.bernoulli(cfg.per_gene_mutation_prob)) {
      genes[i] = perturb_gene(genes[i], cfg.mutation_sigma * rng.normal());
    }
    genes[i] = range.clamp(genes[i]);
  }
  return Genome::from_genes(genes);
}

Genome crossover(const Genome& a, const Genome& b, double swap_prob, RandomSource& rng) {
  auto genes = a.genes();
  const auto other = b.genes();
  for (std::size_t i = 0; i < Genome::kGeneCount; ++i) {
    if (rng.bernoulli(swap_prob)) {
      genes[i] = other[i];
    }
  }
  return Genome::from_genes(genes);
}

std::vector<Individual> elite_select(const Population& pop, std::size_t k) {
  if (k > pop.members.size()) {
    throw ConfigError("elite_select: k = " + std::to_string(k) + " exceeds population size " +
                      std::to_string(pop.members.size()));
  }
  std::vector<Individual> ranked = pop.members;
  std::partial_sort(ranked.begin(), ranked.begin() + static_cast<std::ptrdiff_t>(k), ranked.end(),
                    fitter_than);
  ranked.resize(k);
  return ranked;
}

std::vector<Individual> make_offspring(const std::vector<Individual>& parents,
                                       const OperatorConfig& cfg, const GeneRanges& ranges,
                                       std::size_t generation, IdAllocator& ids,
                                       RandomSource& rng) {
  std::vector<Individual> children;
  children.reserve(parents.size());
  for (std::size_t i = 0; i < parents.size(); ++i) {
    const Individual& parent = parents[i];
    Genome genome = mutate(parent.genome, cfg, ranges, rng);
    if (parents.size() > 1) {
      std::size_t partner = rng.index(parents.size() - 1);
      if (partner >= i) {
        ++partner;
      }
      genome = crossover(genome, parents[partner].genome, cfg.swap_prob, rng);
    }
    Individual child;
    child.id = ids.next();
    child.parent_id = parent.id;
    child.genome = genome;
    child.weights = parent.weights;
    child.epochs_trained = parent.epochs_trained;
    child.born = generation;
    children.push_back(std::move(child));
  }
  return children;
}

} // namespace epbt
