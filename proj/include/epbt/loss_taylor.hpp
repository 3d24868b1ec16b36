#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <span>
#include <vector>

namespace epbt {

inline constexpr std::size_t kTaylorParamCount = 8;

/// Coefficients of the third-order Taylor loss. theta[0] and theta[1] are the
/// expansion centers for the target and the prediction; theta[2..7] weight the
/// monomials. Always finite.
class LossParams {
public:
  LossParams() = default;
  explicit LossParams(const std::array<double, kTaylorParamCount>& theta);
  /// Throws InputError unless exactly eight finite values are given.
  static LossParams from_span(std::span<const double> theta);

  const std::array<double, kTaylorParamCount>& theta() const { return theta_; }
  double operator[](std::size_t i) const { return theta_[i]; }

  bool operator==(const LossParams&) const = default;

private:
  std::array<double, kTaylorParamCount> theta_{};
};

/// Class-probability vector (softmax output or target distribution).
/// Entries lie in [0, 1] and sum to one within 1e-6.
class ProbVector {
public:
  static constexpr double kSumTolerance = 1e-6;

  explicit ProbVector(std::vector<double> values);
  static ProbVector one_hot(std::size_t classes, std::size_t hot);

  std::span<const double> values() const { return values_; }
  std::size_t size() const { return values_.size(); }
  double operator[](std::size_t i) const { return values_[i]; }

private:
  std::vector<double> values_;
};

// The loss and its gradient take plain spans: the target may be a soft
// distillation target and the finite-difference checks perturb the
// prediction off the simplex, so only length and finiteness are enforced.

/// Per-sample Taylor loss averaged over the n classes. Can be negative.
double taylor_loss(std::span<const double> target, std::span<const double> prediction,
                   const LossParams& params);

/// d(taylor_loss)/d(prediction_i) for every class i.
std::vector<double> taylor_loss_grad(std::span<const double> target,
                                     std::span<const double> prediction,
                                     const LossParams& params);

/// Same as taylor_loss_grad, written into `out` (size n) without allocating.
void taylor_loss_grad_into(std::span<const double> target, std::span<const double> prediction,
                           const LossParams& params, std::span<double> out);

struct LossSample {
  double x = 0.0;
  double loss = 0.0;
};

/// Loss sampled along a binary prediction sweep; x strictly increasing 0..1.
struct LossCurve {
  std::vector<LossSample> samples;
};

/// Evaluates the loss at target (1, 0), prediction (x, 1 - x) for `resolution`
/// evenly spaced x in [0, 1]. x = 1 is a perfect prediction.
LossCurve project_binary(const LossParams& params, std::size_t resolution);

/// Writes `x,loss` CSV with shortest round-trip number formatting.
void write_loss_curve_csv(const LossCurve& curve, const std::filesystem::path& path);

/// Linear distillation ramp: alpha * elapsed / total.
double distill_alpha(double alpha, double elapsed_epochs, double total_epochs);

/// alpha_hat * teacher + (1 - alpha_hat) * truth, componentwise.
ProbVector distill_targets(const ProbVector& truth, const ProbVector& teacher, double alpha_hat);

/// Allocation-free form used inside the training loop.
void distill_targets_into(std::span<const double> truth, std::span<const double> teacher,
                          double alpha_hat, std::span<double> out);

} // namespace epbt
