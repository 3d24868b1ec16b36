#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <string>

namespace epbt {

/// Source of randomness for the genetic operators. Kept abstract so tests can
/// script exact draws.
class RandomSource {
public:
  virtual ~RandomSource() = default;

  /// Uniform in [0, 1).
  virtual double uniform() = 0;
  /// Standard normal.
  virtual double normal() = 0;
  /// Uniform integer in [0, n). n must be positive.
  virtual std::size_t index(std::size_t n) = 0;

  double uniform(double low, double high) { return low + (high - low) * uniform(); }
  bool bernoulli(double p) { return p > 0.0 && uniform() < p; }
};

/// Seeded Mersenne-Twister source. State can be saved and restored as text.
class Rng final : public RandomSource {
public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  using RandomSource::uniform;

  double uniform() override;
  double normal() override;
  std::size_t index(std::size_t n) override;

  std::mt19937_64& engine() { return engine_; }

  std::string save_state() const;
  void restore_state(const std::string& state);

private:
  std::mt19937_64 engine_;
};

/// splitmix64 finalizer; derives independent stream seeds from (seed, tag).
std::uint64_t mix_seed(std::uint64_t seed, std::uint64_t tag);

} // namespace epbt
