#include <doctest.h>

#include <algorithm>

#include "epbt/behavior.hpp"
#include "epbt/errors.hpp"
#include "epbt/novelty.hpp"
#include "epbt/random.hpp"
#include "oracles.hpp"

using namespace epbt;

namespace {

BehaviorVector bv(std::initializer_list<int> bits) {
  std::vector<std::uint8_t> b;
  for (int v : bits) {
    b.push_back(static_cast<std::uint8_t>(v));
  }
  return BehaviorVector::from_bits(b);
}

oracle::Bits random_bits(std::size_t n, Rng& rng) {
  oracle::Bits b(n);
  for (auto& v : b) {
    v = rng.uniform() < 0.5 ? 1 : 0;
  }
  return b;
}

Individual member(IndividualId id, double fitness, const oracle::Bits& bits) {
  Individual ind;
  ind.id = id;
  ind.fitness = fitness;
  ind.behavior = BehaviorVector::from_bits(bits);
  return ind;
}

std::vector<IndividualId> ids_of(const std::vector<Individual>& v) {
  std::vector<IndividualId> ids;
  for (const auto& i : v) {
    ids.push_back(i.id);
  }
  return ids;
}

/// Population with a small fitness and behavior alphabet so ties and
/// repeated behaviors are common.
std::pair<Population, std::vector<oracle::Candidate>> random_population(std::size_t size,
                                                                        std::size_t bits,
                                                                        Rng& rng) {
  Population pop;
  std::vector<oracle::Candidate> cands;
  std::vector<IndividualId> ids(size);
  for (std::size_t i = 0; i < size; ++i) {
    ids[i] = i * 3 + rng.index(3);
  }
  for (std::size_t i = 0; i < size; ++i) {
    const double f = static_cast<double>(rng.index(5)) / 4.0;
    oracle::Bits b = random_bits(bits, rng);
    if (i > 0 && rng.uniform() < 0.3) {
      b = cands[rng.index(i)].bits;
    }
    pop.members.push_back(member(ids[i], f, b));
    cands.push_back({ids[i], f, b});
  }
  return {pop, cands};
}

} // namespace

TEST_CASE("behavior vector bit operations") {
  BehaviorVector b(130);
  CHECK(b.size() == 130);
  CHECK(b.count() == 0);
  b.set(0, true);
  b.set(64, true);
  b.set(129, true);
  CHECK(b.count() == 3);
  CHECK(b.bit(64));
  CHECK_FALSE(b.bit(63));
  b.set(64, false);
  CHECK(b.count() == 2);
  const auto bits = b.to_bits();
  CHECK(BehaviorVector::from_bits(bits) == b);
  CHECK_THROWS_AS(b.distance(BehaviorVector(129)), InputError);
}

TEST_CASE("popcount distance equals elementwise hamming") {
  Rng rng(10);
  for (int trial = 0; trial < 500; ++trial) {
    const std::size_t n = 1 + rng.index(300);
    const auto a = random_bits(n, rng);
    const auto b = random_bits(n, rng);
    CHECK(BehaviorVector::from_bits(a).distance(BehaviorVector::from_bits(b)) ==
          oracle::hamming(a, b));
  }
}

TEST_CASE("behavior from predictions") {
  const std::vector<int> truth{0, 1, 2, 1};
  CHECK(behavior(truth, truth).count() == 4);
  const std::vector<int> wrong{1, 2, 0, 0};
  CHECK(behavior(wrong, truth).count() == 0);
  const std::vector<int> p{0, 1, 2}, t{0, 2, 2};
  CHECK(behavior(p, t) == bv({1, 0, 1}));
  CHECK_THROWS_AS(behavior(p, truth), InputError);
}

TEST_CASE("novelty score examples") {
  const std::vector<BehaviorVector> one{bv({1, 0, 1})};
  CHECK(novelty_scores(one) == std::vector<double>{0.0});
  const std::vector<BehaviorVector> same(4, bv({1, 1, 0}));
  CHECK(novelty_scores(same) == std::vector<double>(4, 0.0));
  const std::vector<BehaviorVector> three{bv({0, 0}), bv({0, 1}), bv({1, 1})};
  CHECK(novelty_scores(three) == std::vector<double>{3.0, 2.0, 3.0});
}

TEST_CASE("novelty scores match brute force and permute with the input") {
  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t m = 1 + rng.index(20);
    const std::size_t len = 1 + rng.index(16);
    std::vector<oracle::Bits> raw;
    std::vector<BehaviorVector> packed;
    for (std::size_t i = 0; i < m; ++i) {
      raw.push_back(random_bits(len, rng));
      packed.push_back(BehaviorVector::from_bits(raw.back()));
    }
    const auto scores = novelty_scores(packed);
    CHECK(scores == oracle::novelty_scores(raw));

    std::vector<std::size_t> perm(m);
    for (std::size_t i = 0; i < m; ++i) {
      perm[i] = i;
    }
    for (std::size_t i = m; i > 1; --i) {
      std::swap(perm[i - 1], perm[rng.index(i)]);
    }
    std::vector<BehaviorVector> shuffled;
    for (auto i : perm) {
      shuffled.push_back(packed[i]);
    }
    const auto s2 = novelty_scores(shuffled);
    for (std::size_t i = 0; i < m; ++i) {
      CHECK(s2[i] == scores[perm[i]]);
    }
  }
}

TEST_CASE("distinct behaviors with k = m are all selected in novelty order") {
  Population pop;
  pop.members = {member(0, 0.9, {0, 0, 0}), member(1, 0.8, {1, 1, 1}), member(2, 0.7, {1, 0, 0})};
  // Scores: id0 = 3+1 = 4, id1 = 3+2 = 5, id2 = 1+2 = 3.
  const auto sel = novelty_elite_select(pop, 3, 3);
  CHECK(ids_of(sel) == std::vector<IndividualId>{1, 0, 2});
}

TEST_CASE("identical behaviors: only the higher-ranked one is eligible") {
  Population pop;
  pop.members = {member(0, 0.9, {1, 0}), member(1, 0.5, {1, 0})};
  const auto sel = novelty_elite_select(pop, 1, 2);
  CHECK(ids_of(sel) == std::vector<IndividualId>{0});
}

TEST_CASE("skipped candidates back-fill when distinct behaviors run out") {
  Population pop;
  pop.members = {member(0, 0.9, {1, 0}), member(1, 0.8, {1, 0}), member(2, 0.7, {1, 0}),
                 member(3, 0.6, {0, 1})};
  const auto sel = novelty_elite_select(pop, 3, 4);
  // Scores: ids 0-2 get 2 each, id 3 gets 6.
  CHECK(ids_of(sel) == std::vector<IndividualId>{3, 0, 1});
}

TEST_CASE("novelty selection matches the reference procedure") {
  Rng rng(12);
  for (int trial = 0; trial < 300; ++trial) {
    const std::size_t size = 3 + rng.index(18);
    const std::size_t bits = 1 + rng.index(16);
    auto [pop, cands] = random_population(size, bits, rng);
    const std::size_t k = 1 + rng.index(size - 1);
    const std::size_t m = k + 1 + rng.index(size - k);
    const auto sel = novelty_elite_select(pop, k, m);
    CHECK(ids_of(sel) == oracle::novelty_elite_ids(cands, k, m));
  }
}

TEST_CASE("population of 12, m = 9, k = 6 matches the reference") {
  Rng rng(13);
  for (int trial = 0; trial < 50; ++trial) {
    auto [pop, cands] = random_population(12, 10, rng);
    CHECK(ids_of(novelty_elite_select(pop, 6, 9)) == oracle::novelty_elite_ids(cands, 6, 9));
  }
}

TEST_CASE("novelty selection returns k members from the top m, distinct when possible") {
  Rng rng(14);
  for (int trial = 0; trial < 200; ++trial) {
    const std::size_t size = 4 + rng.index(16);
    auto [pop, cands] = random_population(size, 1 + rng.index(6), rng);
    const std::size_t k = 1 + rng.index(size - 2);
    const std::size_t m = k + 1 + rng.index(size - k);
    const auto sel = novelty_elite_select(pop, k, m);
    REQUIRE(sel.size() == k);
    const auto top = oracle::elite_ids(cands, m);
    std::vector<oracle::Bits> distinct;
    for (const auto& c : oracle::by_fitness(cands)) {
      if (std::find(top.begin(), top.end(), c.id) != top.end() &&
          std::find(distinct.begin(), distinct.end(), c.bits) == distinct.end()) {
        distinct.push_back(c.bits);
      }
    }
    for (const auto& s : sel) {
      CHECK(std::find(top.begin(), top.end(), s.id) != top.end());
    }
    if (distinct.size() >= k) {
      for (std::size_t i = 0; i < k; ++i) {
        for (std::size_t j = i + 1; j < k; ++j) {
          CHECK_FALSE(*sel[i].behavior == *sel[j].behavior);
        }
      }
    }
  }
}

TEST_CASE("novelty selection needs behaviors and a sane m") {
  Population pop;
  pop.members = {member(0, 0.9, {1}), member(1, 0.5, {0})};
  pop.members[1].behavior.reset();
  CHECK_THROWS_AS(novelty_elite_select(pop, 1, 2), StateError);
  pop.members[1].behavior = bv({0});
  CHECK_THROWS(novelty_elite_select(pop, 2, 1));
  CHECK_THROWS(novelty_elite_select(pop, 1, 3));
}

TEST_CASE("pulsation schedule") {
  for (std::size_t g = 0; g < 5; ++g) {
    CHECK_FALSE(pulsation_active(g, 5));
  }
  for (std::size_t g = 5; g < 10; ++g) {
    CHECK(pulsation_active(g, 5));
  }
  CHECK_FALSE(pulsation_active(10, 5));
  for (std::size_t g = 0; g < 20; ++g) {
    CHECK(pulsation_active(g, 1) == (g % 2 == 1));
    CHECK_FALSE(pulsation_active(g, std::nullopt));
  }
}

TEST_CASE("pulsation config defaults and validation") {
  CHECK(PulsationConfig::default_expanded_count(20) == 30);
  CHECK(PulsationConfig::default_expanded_count(3) == 5);
  CHECK(PulsationConfig::default_expanded_count(1) == 2);
  PulsationConfig c;
  c.expanded_count = 20;
  CHECK_THROWS_AS(c.validate(20, 40), ConfigError);
  c.expanded_count = 41;
  CHECK_THROWS_AS(c.validate(20, 40), ConfigError);
  c.expanded_count = 30;
  CHECK_NOTHROW(c.validate(20, 40));
  c.period = 0;
  CHECK_THROWS_AS(c.validate(20, 40), ConfigError);
}
