#include "epbt/loss_taylor.hpp"

#include <cmath>
#include <numeric>
#include <sstream>
#include <string>

#include "epbt/errors.hpp"
#include "epbt/io.hpp"

namespace epbt {

namespace {

void check_finite(std::span<const double> values, const char* what) {
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw InputError(std::string(what) + ": non-finite value");
    }
  }
}

void check_pair(std::span<const double> target, std::span<const double> prediction) {
  if (target.size() != prediction.size()) {
    throw InputError("taylor loss: target has " + std::to_string(target.size()) +
                     " entries, prediction has " + std::to_string(prediction.size()));
  }
  if (target.size() < 2) {
    throw InputError("taylor loss: need at least two classes");
  }
}

} // namespace

LossParams::LossParams(const std::array<double, kTaylorParamCount>& theta) : theta_(theta) {
  check_finite(theta_, "LossParams");
}

LossParams LossParams::from_span(std::span<const double> theta) {
  if (theta.size() != kTaylorParamCount) {
    throw InputError("LossParams: expected 8 values, got " + std::to_string(theta.size()));
  }
  std::array<double, kTaylorParamCount> values{};
  std::copy(theta.begin(), theta.end(), values.begin());
  return LossParams(values);
}

ProbVector::ProbVector(std::vector<double> values) : values_(std::move(values)) {
  if (values_.empty()) {
    throw InputError("ProbVector: empty");
  }
  double sum = 0.0;
  for (double v : values_) {
    if (!std::isfinite(v) || v < 0.0 || v > 1.0) {
      throw InputError("ProbVector: entry outside [0, 1]");
    }
    sum += v;
  }
  if (std::abs(sum - 1.0) > kSumTolerance) {
    throw InputError("ProbVector: entries sum to " + format_double(sum));
  }
}

ProbVector ProbVector::one_hot(std::size_t classes, std::size_t hot) {
  if (hot >= classes) {
    throw InputError("ProbVector::one_hot: index out of range");
  }
  std::vector<double> values(classes, 0.0);
  values[hot] = 1.0;
  return ProbVector(std::move(values));
}

double taylor_loss(std::span<const double> target, std::span<const double> prediction,
                   const LossParams& params) {
  check_pair(target, prediction);
  const auto& t = params.theta();
  double sum = 0.0;
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double dy = target[i] - t[0];
    const double dp = prediction[i] - t[1];
    sum += t[2] * dp + 0.5 * t[3] * dp * dp + (1.0 / 6.0) * t[4] * dp * dp * dp +
           t[5] * dy * dp + 0.5 * t[6] * dy * dp * dp + 0.5 * t[7] * dy * dy * dp;
  }
  return -sum / static_cast<double>(target.size());
}

void taylor_loss_grad_into(std::span<const double> target, std::span<const double> prediction,
                           const LossParams& params, std::span<double> out) {
  check_pair(target, prediction);
  if (out.size() != target.size()) {
    throw InputError("taylor_loss_grad: output size mismatch");
  }
  const auto& t = params.theta();
  const double scale = -1.0 / static_cast<double>(target.size());
  for (std::size_t i = 0; i < target.size(); ++i) {
    const double dy = target[i] - t[0];
    const double dp = prediction[i] - t[1];
    out[i] = scale * (t[2] + t[3] * dp + 0.5 * t[4] * dp * dp + t[5] * dy + t[6] * dy * dp +
                      0.5 * t[7] * dy * dy);
  }
}

std::vector<double> taylor_loss_grad(std::span<const double> target,
                                     std::span<const double> prediction,
                                     const LossParams& params) {
  std::vector<double> grad(target.size());
  taylor_loss_grad_into(target, prediction, params, grad);
  return grad;
}

LossCurve project_binary(const LossParams& params, std::size_t resolution) {
  if (resolution < 2) {
    throw InputError("project_binary: resolution must be at least 2");
  }
  LossCurve curve;
  curve.samples.reserve(resolution);
  const std::array<double, 2> target{1.0, 0.0};
  for (std::size_t i = 0; i < resolution; ++i) {
    // Pin the endpoints exactly; interior points are i / (resolution - 1).
    const double x = (i + 1 == resolution)
                         ? 1.0
                         : static_cast<double>(i) / static_cast<double>(resolution - 1);
    const std::array<double, 2> prediction{x, 1.0 - x};
    curve.samples.push_back({x, taylor_loss(target, prediction, params)});
  }
  return curve;
}

void write_loss_curve_csv(const LossCurve& curve, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "x,loss\n";
  for (const auto& s : curve.samples) {
    out << format_double(s.x) << ',' << format_double(s.loss) << '\n';
  }
  write_file_atomic(path, out.str());
}

double distill_alpha(double alpha, double elapsed_epochs, double total_epochs) {
  if (!(total_epochs > 0.0)) {
    throw InputError("distill_alpha: total epochs must be positive");
  }
  if (alpha < 0.0 || alpha > 1.0) {
    throw InputError("distill_alpha: alpha outside [0, 1]");
  }
  if (elapsed_epochs < 0.0 || elapsed_epochs > total_epochs) {
    throw InputError("distill_alpha: elapsed epochs outside [0, total]");
  }
  return alpha * (elapsed_epochs / total_epochs);
}

void distill_targets_into(std::span<const double> truth, std::span<const double> teacher,
                          double alpha_hat, std::span<double> out) {
  if (truth.size() != teacher.size() || out.size() != truth.size()) {
    throw InputError("distill_targets: length mismatch");
  }
  if (alpha_hat < 0.0 || alpha_hat > 1.0) {
    throw InputError("distill_targets: alpha_hat outside [0, 1]");
  }
  for (std::size_t i = 0; i < truth.size(); ++i) {
    out[i] = alpha_hat * teacher[i] + (1.0 - alpha_hat) * truth[i];
  }
}

ProbVector distill_targets(const ProbVector& truth, const ProbVector& teacher, double alpha_hat) {
  std::vector<double> out(truth.size());
  distill_targets_into(truth.values(), teacher.values(), alpha_hat, out);
  return ProbVector(std::move(out));
}

} // namespace epbt
