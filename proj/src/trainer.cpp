#include "epbt/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <numeric>

#include "epbt/errors.hpp"
#include "epbt/io.hpp"

namespace epbt {

namespace {

constexpr char kWeightsMagic[8] = {'E', 'P', 'B', 'T', 'W', 'G', 'T', '1'};
constexpr std::uint32_t kWeightsVersion = 1;

void softmax_columns(Eigen::MatrixXd& logits) {
  for (Eigen::Index c = 0; c < logits.cols(); ++c) {
    auto col = logits.col(c);
    const double max = col.maxCoeff();
    col = (col.array() - max).exp();
    col /= col.sum();
  }
}

struct ForwardTrace {
  std::vector<Eigen::MatrixXd> activations;  // input, hidden outputs
  std::vector<Eigen::MatrixXd> preacts;      // every layer, including logits
  Eigen::MatrixXd probs;
};

ForwardTrace trace_forward(const Weights& w, const Eigen::MatrixXd& inputs) {
  if (static_cast<std::size_t>(inputs.rows()) != w.arch.input_size()) {
    throw InputError("forward: input width " + std::to_string(inputs.rows()) +
                     " does not match architecture input " +
                     std::to_string(w.arch.input_size()));
  }
  ForwardTrace t;
  t.activations.push_back(inputs);
  for (std::size_t l = 0; l < w.layers.size(); ++l) {
    const auto& layer = w.layers[l];
    Eigen::MatrixXd z = layer.weight * t.activations.back();
    z.colwise() += layer.bias;
    t.preacts.push_back(z);
    if (l + 1 < w.layers.size()) {
      t.activations.push_back(z.cwiseMax(0.0));
    }
  }
  t.probs = t.preacts.back();
  softmax_columns(t.probs);
  return t;
}

// Loss summed over the batch; fills dL/dlogits (unscaled) when requested.
double output_loss(const Eigen::MatrixXd& logits, const Eigen::MatrixXd& probs,
                   const Eigen::MatrixXd& targets, const LossSpec& loss,
                   Eigen::MatrixXd* dlogits) {
  if (targets.rows() != probs.rows() || targets.cols() != probs.cols()) {
    throw InputError("loss: target shape does not match network output");
  }
  const auto classes = static_cast<std::size_t>(probs.rows());
  double total = 0.0;
  if (dlogits != nullptr) {
    dlogits->resize(probs.rows(), probs.cols());
  }
  std::vector<double> grad(classes);
  for (Eigen::Index s = 0; s < probs.cols(); ++s) {
    const std::span<const double> y(targets.col(s).data(), classes);
    const std::span<const double> p(probs.col(s).data(), classes);
    if (const auto* params = std::get_if<LossParams>(&loss)) {
      total += taylor_loss(y, p, *params);
      if (dlogits != nullptr) {
        taylor_loss_grad_into(y, p, *params, grad);
        double dot = 0.0;
        for (std::size_t i = 0; i < classes; ++i) {
          dot += grad[i] * p[i];
        }
        for (std::size_t i = 0; i < classes; ++i) {
          (*dlogits)(static_cast<Eigen::Index>(i), s) = p[i] * (grad[i] - dot);
        }
      }
    } else {
      const auto z = logits.col(s);
      const double max = z.maxCoeff();
      const double lse = max + std::log((z.array() - max).exp().sum());
      double ysum = 0.0;
      for (std::size_t i = 0; i < classes; ++i) {
        total -= y[i] * (z(static_cast<Eigen::Index>(i)) - lse);
        ysum += y[i];
      }
      if (dlogits != nullptr) {
        for (std::size_t i = 0; i < classes; ++i) {
          (*dlogits)(static_cast<Eigen::Index>(i), s) = p[i] * ysum - y[i];
        }
      }
    }
  }
  return total;
}

Weights zeros_like(const Weights& w) {
  Weights z;
  z.arch = w.arch;
  for (const auto& layer : w.layers) {
    z.layers.push_back({Eigen::MatrixXd::Zero(layer.weight.rows(), layer.weight.cols()),
                        Eigen::VectorXd::Zero(layer.bias.size())});
  }
  return z;
}

void append_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) {
    out.push_back(static_cast<char>((v >> (8 * i)) & 0xFF));
  }
}

void append_f64(std::string& out, double v) {
  const auto bits = std::bit_cast<std::uint64_t>(v);
  for (int i = 0; i < 8; ++i) {
    out.push_back(static_cast<char>((bits >> (8 * i)) & 0xFF));
  }
}

class ByteReader {
public:
  explicit ByteReader(std::string_view bytes) : bytes_(bytes) {}

  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) {
      v |= std::uint32_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    }
    pos_ += 4;
    return v;
  }

  double f64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) {
      v |= std::uint64_t{static_cast<unsigned char>(bytes_[pos_ + i])} << (8 * i);
    }
    pos_ += 8;
    return std::bit_cast<double>(v);
  }

  std::string_view take(std::size_t n) {
    need(n);
    auto s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }

  bool done() const { return pos_ == bytes_.size(); }

private:
  void need(std::size_t n) const {
    if (pos_ + n > bytes_.size()) {
      throw FormatError("weights checkpoint: truncated at byte " + std::to_string(pos_));
    }
  }

  std::string_view bytes_;
  std::size_t pos_ = 0;
};

} // namespace

void MlpArchitecture::validate() const {
  if (layer_sizes.size() < 2) {
    throw ConfigError("architecture needs at least an input and an output layer");
  }
  for (auto s : layer_sizes) {
    if (s == 0) {
      throw ConfigError("architecture layer sizes must be positive");
    }
  }
  if (output_size() < 2) {
    throw ConfigError("architecture output must have at least two classes");
  }
}

bool Weights::all_finite() const {
  return std::all_of(layers.begin(), layers.end(), [](const DenseLayer& l) {
    return l.weight.allFinite() && l.bias.allFinite();
  });
}

std::size_t Weights::parameter_count() const {
  std::size_t n = 0;
  for (const auto& l : layers) {
    n += static_cast<std::size_t>(l.weight.size() + l.bias.size());
  }
  return n;
}

void SgdConfig::validate() const {
  if (!(base_lr > 0.0) || !(lr_scale > 0.0)) {
    throw ConfigError("learning rate and its scale must be positive");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (batch_size == 0) {
    throw ConfigError("batch_size must be positive");
  }
  if (!(decay_factor > 1.0)) {
    throw ConfigError("decay factor must exceed 1");
  }
  for (std::size_t i = 0; i < milestones.size(); ++i) {
    if (!(milestones[i] > 0.0 && milestones[i] < 1.0)) {
      throw ConfigError("milestones must lie in (0, 1)");
    }
    if (i > 0 && !(milestones[i] > milestones[i - 1])) {
      throw ConfigError("milestones must be strictly increasing");
    }
  }
}

SgdConfig sgd_for_genome(const SgdConfig& base, const Genome& genome) {
  SgdConfig cfg = base;
  cfg.lr_scale = genome.lr_scale;
  cfg.decay_factor = genome.lr_decay_factor;
  cfg.momentum = genome.momentum;
  return cfg;
}

Weights he_init(const MlpArchitecture& arch, RandomSource& rng) {
  arch.validate();
  Weights w;
  w.arch = arch;
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const auto fan_in = static_cast<Eigen::Index>(arch.layer_sizes[l]);
    const auto fan_out = static_cast<Eigen::Index>(arch.layer_sizes[l + 1]);
    const double stddev = std::sqrt(2.0 / static_cast<double>(fan_in));
    DenseLayer layer{Eigen::MatrixXd(fan_out, fan_in), Eigen::VectorXd::Zero(fan_out)};
    for (Eigen::Index r = 0; r < fan_out; ++r) {
      for (Eigen::Index c = 0; c < fan_in; ++c) {
        layer.weight(r, c) = stddev * rng.normal();
      }
    }
    w.layers.push_back(std::move(layer));
  }
  return w;
}

double lr_at(const SgdConfig& cfg, std::size_t epoch, std::size_t total_epochs) {
  double lr = cfg.base_lr * cfg.lr_scale;
  for (double m : cfg.milestones) {
    // Tolerance absorbs representation error in fractions such as 0.6 * 200.
    if (m * static_cast<double>(total_epochs) <= static_cast<double>(epoch) + 1e-9) {
      lr /= cfg.decay_factor;
    }
  }
  return lr;
}

Eigen::MatrixXd forward(const Weights& w, const Eigen::MatrixXd& inputs) {
  return trace_forward(w, inputs).probs;
}

Eigen::MatrixXd predict_proba(const Weights& w, const FeatureMatrix& features) {
  const Eigen::MatrixXd inputs = features.transpose();
  return forward(w, inputs).transpose();
}

std::vector<int> predict_labels(const Weights& w, const FeatureMatrix& features) {
  const Eigen::MatrixXd probs = predict_proba(w, features);
  std::vector<int> labels(static_cast<std::size_t>(probs.rows()));
  for (Eigen::Index r = 0; r < probs.rows(); ++r) {
    Eigen::Index best = 0;
    for (Eigen::Index c = 1; c < probs.cols(); ++c) {
      if (probs(r, c) > probs(r, best)) {
        best = c;
      }
    }
    labels[static_cast<std::size_t>(r)] = static_cast<int>(best);
  }
  return labels;
}

double evaluate_accuracy(const Weights& w, const Dataset& data) {
  if (data.size() == 0) {
    throw InputError("evaluate_accuracy: empty dataset");
  }
  const auto predicted = predict_labels(w, data.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < predicted.size(); ++i) {
    correct += predicted[i] == data.labels[i] ? 1 : 0;
  }
  return static_cast<double>(correct) / static_cast<double>(data.size());
}

double batch_loss(const Weights& w, const Eigen::MatrixXd& inputs, const Eigen::MatrixXd& targets,
                  const LossSpec& loss) {
  const auto t = trace_forward(w, inputs);
  return output_loss(t.preacts.back(), t.probs, targets, loss, nullptr) /
         static_cast<double>(inputs.cols());
}

LossGradient loss_and_gradient(const Weights& w, const Eigen::MatrixXd& inputs,
                               const Eigen::MatrixXd& targets, const LossSpec& loss) {
  const auto t = trace_forward(w, inputs);
  const double batch = static_cast<double>(inputs.cols());
  Eigen::MatrixXd delta;
  LossGradient out;
  out.loss = output_loss(t.preacts.back(), t.probs, targets, loss, &delta) / batch;
  delta /= batch;
  out.gradient = zeros_like(w);
  for (std::size_t l = w.layers.size(); l-- > 0;) {
    out.gradient.layers[l].weight.noalias() = delta * t.activations[l].transpose();
    out.gradient.layers[l].bias = delta.rowwise().sum();
    if (l > 0) {
      Eigen::MatrixXd back = w.layers[l].weight.transpose() * delta;
      delta = back.cwiseProduct((t.preacts[l - 1].array() > 0.0).cast<double>().matrix());
    }
  }
  return out;
}

TrainResult train_epochs(const Weights& initial, const Dataset& train, const SgdConfig& sgd,
                         const LossSpec& loss, std::size_t epochs, const Teacher& teacher,
                         std::size_t epochs_already, std::size_t total_epochs, RandomSource& rng,
                         const EpochObserver& observer) {
  if (epochs == 0) {
    throw InputError("train_epochs: epochs must be at least 1");
  }
  if (total_epochs == 0) {
    throw InputError("train_epochs: total_epochs must be positive");
  }
  if (train.size() == 0) {
    throw InputError("train_epochs: empty training set");
  }
  if (train.dims() != initial.arch.input_size() || train.class_count != initial.arch.output_size()) {
    throw InputError("train_epochs: dataset shape does not match the architecture");
  }
  sgd.validate();

  TrainResult result{initial, {}};
  Weights& w = result.weights;
  Weights velocity = zeros_like(w);
  const std::size_t n = train.size();
  const auto classes = static_cast<Eigen::Index>(train.class_count);
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);

  for (std::size_t e = 0; e < epochs; ++e) {
    const std::size_t cumulative = std::min(epochs_already + e, total_epochs);
    const double lr = lr_at(sgd, cumulative, total_epochs);
    const double alpha_hat =
        teacher.weights != nullptr
            ? distill_alpha(teacher.alpha, static_cast<double>(cumulative),
                            static_cast<double>(total_epochs))
            : 0.0;
    for (std::size_t i = n; i > 1; --i) {
      std::swap(order[i - 1], order[rng.index(i)]);
    }
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < n; start += sgd.batch_size) {
      const std::size_t count = std::min(sgd.batch_size, n - start);
      Eigen::MatrixXd x(static_cast<Eigen::Index>(train.dims()), static_cast<Eigen::Index>(count));
      Eigen::MatrixXd y = Eigen::MatrixXd::Zero(classes, static_cast<Eigen::Index>(count));
      for (std::size_t j = 0; j < count; ++j) {
        const auto row = static_cast<Eigen::Index>(order[start + j]);
        const auto col = static_cast<Eigen::Index>(j);
        x.col(col) = train.features.row(row).transpose();
        y(train.labels[order[start + j]], col) = 1.0;
      }
      if (teacher.weights != nullptr) {
        const Eigen::MatrixXd soft = forward(*teacher.weights, x);
        for (Eigen::Index c = 0; c < y.cols(); ++c) {
          std::span<double> target(y.col(c).data(), static_cast<std::size_t>(classes));
          distill_targets_into(target, std::span<const double>(soft.col(c).data(), target.size()),
                               alpha_hat, target);
        }
      }
      const LossGradient g = loss_and_gradient(w, x, y, loss);
      if (!std::isfinite(g.loss)) {
        return {initial, {e, g.loss, true}};
      }
      for (std::size_t l = 0; l < w.layers.size(); ++l) {
        velocity.layers[l].weight = sgd.momentum * velocity.layers[l].weight -
                                    lr * g.gradient.layers[l].weight;
        velocity.layers[l].bias =
            sgd.momentum * velocity.layers[l].bias - lr * g.gradient.layers[l].bias;
        w.layers[l].weight += velocity.layers[l].weight;
        w.layers[l].bias += velocity.layers[l].bias;
      }
      epoch_loss += g.loss * static_cast<double>(count);
    }
    if (!w.all_finite()) {
      return {initial, {e + 1, epoch_loss, true}};
    }
    result.report.final_loss = epoch_loss / static_cast<double>(n);
    result.report.epochs = e + 1;
    if (observer) {
      observer(e, w, result.report.final_loss);
    }
  }
  return result;
}

std::string serialize_weights(const Weights& w) {
  std::string out(kWeightsMagic, sizeof(kWeightsMagic));
  append_u32(out, kWeightsVersion);
  append_u32(out, static_cast<std::uint32_t>(w.arch.layer_sizes.size()));
  for (auto s : w.arch.layer_sizes) {
    append_u32(out, static_cast<std::uint32_t>(s));
  }
  for (const auto& layer : w.layers) {
    for (Eigen::Index r = 0; r < layer.weight.rows(); ++r) {
      for (Eigen::Index c = 0; c < layer.weight.cols(); ++c) {
        append_f64(out, layer.weight(r, c));
      }
    }
    for (Eigen::Index r = 0; r < layer.bias.size(); ++r) {
      append_f64(out, layer.bias(r));
    }
  }
  return out;
}

Weights deserialize_weights(std::string_view bytes) {
  ByteReader in(bytes);
  if (in.take(sizeof(kWeightsMagic)) != std::string_view(kWeightsMagic, sizeof(kWeightsMagic))) {
    throw FormatError("weights checkpoint: bad magic");
  }
  const std::uint32_t version = in.u32();
  if (version != kWeightsVersion) {
    throw FormatError("weights checkpoint: unsupported version " + std::to_string(version));
  }
  Weights w;
  const std::uint32_t sizes = in.u32();
  if (sizes < 2 || sizes > 1024) {
    throw FormatError("weights checkpoint: implausible layer count");
  }
  for (std::uint32_t i = 0; i < sizes; ++i) {
    w.arch.layer_sizes.push_back(in.u32());
  }
  try {
    w.arch.validate();
  } catch (const ConfigError& e) {
    throw FormatError(std::string("weights checkpoint: ") + e.what());
  }
  for (std::size_t l = 0; l < w.arch.layer_count(); ++l) {
    const auto rows = static_cast<Eigen::Index>(w.arch.layer_sizes[l + 1]);
    const auto cols = static_cast<Eigen::Index>(w.arch.layer_sizes[l]);
    DenseLayer layer{Eigen::MatrixXd(rows, cols), Eigen::VectorXd(rows)};
    for (Eigen::Index r = 0; r < rows; ++r) {
      for (Eigen::Index c = 0; c < cols; ++c) {
        layer.weight(r, c) = in.f64();
      }
    }
    for (Eigen::Index r = 0; r < rows; ++r) {
      layer.bias(r) = in.f64();
    }
    w.layers.push_back(std::move(layer));
  }
  if (!in.done()) {
    throw FormatError("weights checkpoint: trailing bytes");
  }
  return w;
}

void save_weights(const Weights& w, const std::filesystem::path& path) {
  write_file_atomic(path, serialize_weights(w));
}

Weights load_weights(const std::filesystem::path& path) {
  return deserialize_weights(read_file(path));
}

} // namespace epbt
