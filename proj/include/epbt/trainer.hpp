#pragma once

#include <cstddef>
#include <filesystem>
#include <functional>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Core>

#include "epbt/data.hpp"
#include "epbt/loss_taylor.hpp"
#include "epbt/population.hpp"
#include "epbt/random.hpp"

namespace epbt {

/// Layer widths from input to output. Hidden layers use ReLU, the output
/// layer softmax.
struct MlpArchitecture {
  std::vector<std::size_t> layer_sizes;

  std::size_t input_size() const { return layer_sizes.front(); }
  std::size_t output_size() const { return layer_sizes.back(); }
  std::size_t layer_count() const { return layer_sizes.size() - 1; }

  void validate() const;
  bool operator==(const MlpArchitecture&) const = default;
};

struct DenseLayer {
  Eigen::MatrixXd weight;  // out x in
  Eigen::VectorXd bias;
};

struct Weights {
  MlpArchitecture arch;
  std::vector<DenseLayer> layers;

  bool all_finite() const;
  std::size_t parameter_count() const;
};

struct SgdConfig {
  double base_lr = 0.1;
  double momentum = 0.9;
  std::size_t batch_size = 128;
  std::vector<double> milestones{0.3, 0.6, 0.8};
  double decay_factor = 5.0;
  double lr_scale = 1.0;

  void validate() const;
};

/// Settings shared by every individual; the genome supplies lr_scale,
/// decay_factor and momentum.
SgdConfig sgd_for_genome(const SgdConfig& base, const Genome& genome);

struct CrossEntropyLoss {};
using LossSpec = std::variant<LossParams, CrossEntropyLoss>;

/// Weights ~ N(0, 2 / fan_in), biases zero.
Weights he_init(const MlpArchitecture& arch, RandomSource& rng);

/// base_lr * lr_scale / decay_factor^j, j = number of milestones with
/// milestone * total_epochs <= epoch.
double lr_at(const SgdConfig& cfg, std::size_t epoch, std::size_t total_epochs);

/// Forward pass on a batch laid out one sample per column. Returns class
/// probabilities, one column per sample.
Eigen::MatrixXd forward(const Weights& w, const Eigen::MatrixXd& inputs);

/// Forward pass over dataset rows; returns one probability row per sample.
Eigen::MatrixXd predict_proba(const Weights& w, const FeatureMatrix& features);

/// argmax per sample; ties go to the lowest class index.
std::vector<int> predict_labels(const Weights& w, const FeatureMatrix& features);

/// Fraction of correct argmax predictions. Throws InputError when empty.
double evaluate_accuracy(const Weights& w, const Dataset& data);

/// Mean loss of a batch (samples as columns) against `targets` (classes x
/// samples).
double batch_loss(const Weights& w, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  const LossSpec& loss);

struct LossGradient {
  double loss = 0.0;
  /// Same shapes as the weights; arch is copied from the input.
  Weights gradient;
};

/// Backpropagated gradient of batch_loss with respect to every parameter.
LossGradient loss_and_gradient(const Weights& w, const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& targets, const LossSpec& loss);

struct Teacher {
  const Weights* weights = nullptr;
  /// Distillation strength at the end of the run.
  double alpha = 0.0;
};

struct TrainReport {
  std::size_t epochs = 0;
  double final_loss = 0.0;
  /// Non-finite loss or weights were produced; the returned weights are the
  /// inputs, unchanged.
  bool diverged = false;
};

struct TrainResult {
  Weights weights;
  TrainReport report;
};

/// Called after each completed epoch with the epoch index within this call,
/// the current weights and the epoch's mean training loss.
using EpochObserver = std::function<void(std::size_t, const Weights&, double)>;

/// Shuffled mini-batch SGD with momentum for `epochs` epochs. Learning rate
/// and distillation ramp are evaluated at the cumulative epoch
/// epochs_already + e against total_epochs. Velocity starts at zero.
TrainResult train_epochs(const Weights& initial, const Dataset& train, const SgdConfig& sgd,
                         const LossSpec& loss, std::size_t epochs, const Teacher& teacher,
                         std::size_t epochs_already, std::size_t total_epochs, RandomSource& rng,
                         const EpochObserver& observer = {});

/// Binary weight checkpoint, little-endian:
///   char[8]  "EPBTWGT1"
///   u32      format version (1)
///   u32      number of layer sizes L
///   u32[L]   layer sizes
///   per dense layer: f64[out*in] weight, row-major; f64[out] bias
std::string serialize_weights(const Weights& w);
Weights deserialize_weights(std::string_view bytes);
void save_weights(const Weights& w, const std::filesystem::path& path);
Weights load_weights(const std::filesystem::path& path);

} // namespace epbt
