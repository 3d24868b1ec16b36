#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>

#include "epbt/data.hpp"
#include "epbt/errors.hpp"
#include "epbt/io.hpp"
#include "epbt/random.hpp"
#include "epbt/trainer.hpp"
#include "oracles.hpp"

using namespace epbt;

namespace {

Weights zero_weights(const MlpArchitecture& arch) {
  Weights w{arch, {}};
  for (std::size_t l = 0; l < arch.layer_count(); ++l) {
    const auto in = static_cast<Eigen::Index>(arch.layer_sizes[l]);
    const auto out = static_cast<Eigen::Index>(arch.layer_sizes[l + 1]);
    w.layers.push_back({Eigen::MatrixXd::Zero(out, in), Eigen::VectorXd::Zero(out)});
  }
  return w;
}

/// Flattens weights then biases of every layer.
std::vector<double> flatten(const Weights& w) {
  std::vector<double> v;
  for (const auto& l : w.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) v.push_back(l.weight.data()[i]);
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) v.push_back(l.bias.data()[i]);
  }
  return v;
}

Weights unflatten(Weights w, const std::vector<double>& v) {
  std::size_t k = 0;
  for (auto& l : w.layers) {
    for (Eigen::Index i = 0; i < l.weight.size(); ++i) l.weight.data()[i] = v[k++];
    for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias.data()[i] = v[k++];
  }
  return w;
}

/// True when no hidden pre-activation lies within `margin` of the ReLU kink.
bool away_from_kinks(const Weights& w, const Eigen::MatrixXd& x, double margin) {
  Eigen::MatrixXd a = x;
  for (std::size_t l = 0; l + 1 < w.layers.size(); ++l) {
    const Eigen::MatrixXd z = (w.layers[l].weight * a).colwise() + w.layers[l].bias;
    if ((z.array().abs() < margin).any()) {
      return false;
    }
    a = z.cwiseMax(0.0);
  }
  return true;
}

Eigen::MatrixXd soft_targets(Eigen::Index classes, Eigen::Index n, Rng& rng, bool one_hot) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(classes, n);
  for (Eigen::Index j = 0; j < n; ++j) {
    const auto hot = static_cast<Eigen::Index>(rng.index(static_cast<std::size_t>(classes)));
    if (one_hot) {
      t(hot, j) = 1.0;
      continue;
    }
    // Distilled target: mix of a one-hot label and a random teacher output.
    const double a = rng.uniform();
    double sum = 0.0;
    for (Eigen::Index c = 0; c < classes; ++c) {
      t(c, j) = rng.uniform() + 0.01;
      sum += t(c, j);
    }
    t.col(j) *= a / sum;
    t(hot, j) += 1.0 - a;
  }
  return t;
}

Dataset separable_blobs(std::uint64_t seed) {
  Rng rng(seed);
  return synth_blobs(2, 100, 0.5, rng);
}

} // namespace

TEST_CASE("architecture validation") {
  const auto check = [](std::vector<std::size_t> sizes) { MlpArchitecture{std::move(sizes)}.validate(); };
  CHECK_NOTHROW(check({2, 2}));
  CHECK_THROWS_AS(check({3}), ConfigError);
  CHECK_THROWS_AS(check({3, 1}), ConfigError);
  CHECK_THROWS_AS(check({3, 0, 2}), ConfigError);
}

TEST_CASE("He initialization variance at fan-in 8") {
  Rng rng(70);
  const Weights w = he_init(MlpArchitecture{{8, 2000, 2}}, rng);
  const auto& m = w.layers[0].weight;
  REQUIRE(m.size() == 16000);
  const double mean = m.mean();
  const double var = (m.array() - mean).square().mean();
  CHECK(var == doctest::Approx(0.25).epsilon(0.10));
  CHECK(w.layers[0].bias.isZero(0.0));
  CHECK(w.layers[1].bias.isZero(0.0));
  Rng again(70);
  const Weights w2 = he_init(MlpArchitecture{{8, 2000, 2}}, again);
  CHECK(w2.layers[0].weight == w.layers[0].weight);
  CHECK(w2.layers[1].weight == w.layers[1].weight);
  CHECK(w.parameter_count() == 8 * 2000 + 2000 + 2000 * 2 + 2);
}

TEST_CASE("step schedule: 0.1 decaying by 5 at 30, 60 and 80 percent") {
  SgdConfig s;
  CHECK(lr_at(s, 0, 200) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(lr_at(s, 59, 200) == doctest::Approx(0.1).epsilon(1e-15));
  CHECK(lr_at(s, 60, 200) == doctest::Approx(0.02).epsilon(1e-15));
  CHECK(lr_at(s, 120, 200) == doctest::Approx(0.004).epsilon(1e-15));
  CHECK(lr_at(s, 160, 200) == doctest::Approx(0.0008).epsilon(1e-15));
  CHECK(lr_at(s, 199, 200) == doctest::Approx(0.0008).epsilon(1e-15));
  s.lr_scale = 0.5;
  CHECK(lr_at(s, 0, 200) == doctest::Approx(0.05).epsilon(1e-15));
}

TEST_CASE("learning rate never increases") {
  Rng rng(71);
  for (int trial = 0; trial < 50; ++trial) {
    SgdConfig s;
    s.decay_factor = rng.uniform(1.01, 10.0);
    s.lr_scale = rng.uniform(0.001, 1.0);
    const std::size_t total = 1 + rng.index(300);
    for (std::size_t e = 1; e <= total; ++e) {
      CHECK(lr_at(s, e, total) <= lr_at(s, e - 1, total));
    }
  }
}

TEST_CASE("sgd config validation") {
  SgdConfig s;
  s.milestones = {0.6, 0.3};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.milestones = {0.3, 0.3};
  CHECK_THROWS_AS(s.validate(), ConfigError);
  s.milestones = {};
  CHECK_NOTHROW(s.validate());
  s.decay_factor = 1.0;
  CHECK_THROWS_AS(s.validate(), ConfigError);
}

TEST_CASE("zero network outputs the uniform distribution") {
  const Weights w = zero_weights(MlpArchitecture{{3, 4, 5}});
  const Eigen::MatrixXd x = Eigen::MatrixXd::Random(3, 7);
  const Eigen::MatrixXd p = forward(w, x);
  REQUIRE(p.rows() == 5);
  REQUIRE(p.cols() == 7);
  CHECK((p.array() - 0.2).abs().maxCoeff() < 1e-15);
}

TEST_CASE("hand-computed single hidden unit") {
  Weights w = zero_weights(MlpArchitecture{{1, 1, 2}});
  w.layers[0].weight(0, 0) = 2.0;
  w.layers[0].bias(0) = -1.0;
  w.layers[1].weight(0, 0) = 1.0;
  w.layers[1].weight(1, 0) = -1.0;
  w.layers[1].bias(1) = 0.5;
  Eigen::MatrixXd x(1, 1);
  x(0, 0) = 1.5;
  // h = relu(2 * 1.5 - 1) = 2; logits (2, -1.5).
  const Eigen::MatrixXd p = forward(w, x);
  const double e0 = std::exp(2.0), e1 = std::exp(-1.5);
  CHECK(p(0, 0) == doctest::Approx(e0 / (e0 + e1)).epsilon(1e-14));
  CHECK(p(1, 0) == doctest::Approx(e1 / (e0 + e1)).epsilon(1e-14));
  x(0, 0) = -3.0;  // ReLU clamps the hidden unit; logits (0, 0.5).
  const Eigen::MatrixXd q = forward(w, x);
  CHECK(q(0, 0) == doctest::Approx(1.0 / (1.0 + std::exp(0.5))).epsilon(1e-14));
}

TEST_CASE("softmax outputs are normalized and strictly inside (0, 1)") {
  Rng rng(72);
  for (int trial = 0; trial < 50; ++trial) {
    const Weights w = he_init(MlpArchitecture{{4, 8, 3}}, rng);
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(4, 16) * 3.0;
    const Eigen::MatrixXd p = forward(w, x);
    CHECK((p.array() > 0.0).all());
    CHECK((p.array() < 1.0).all());
    CHECK(((p.colwise().sum().array() - 1.0).abs() < 1e-6).all());
  }
}

TEST_CASE("accuracy counting and tie-breaking") {
  Weights w = zero_weights(MlpArchitecture{{2, 3}});
  Dataset d;
  d.features = FeatureMatrix::Random(4, 2);
  d.class_count = 3;
  // Zero weights tie every class; the lowest index wins.
  d.labels = {0, 0, 0, 0};
  CHECK(evaluate_accuracy(w, d) == 1.0);
  w.layers[0].bias(2) = 1.0;
  d.labels = {2, 2, 2, 2};
  CHECK(evaluate_accuracy(w, d) == 1.0);
  d.labels = {0, 1, 0, 1};
  CHECK(evaluate_accuracy(w, d) == 0.0);
  d.labels = {2, 2, 0, 2};
  CHECK(evaluate_accuracy(w, d) == 0.75);
  Dataset empty;
  empty.features.resize(0, 2);
  empty.class_count = 3;
  CHECK_THROWS_AS(evaluate_accuracy(w, empty), InputError);
}

TEST_CASE("backprop matches finite differences for Taylor losses") {
  Rng rng(73);
  int checked = 0;
  while (checked < 100) {
    const std::size_t in = 1 + rng.index(4);
    const std::size_t hidden = 1 + rng.index(5);
    const std::size_t classes = 2 + rng.index(3);
    const Weights w = he_init(MlpArchitecture{{in, hidden, classes}}, rng);
    Weights jittered = w;
    for (auto& l : jittered.layers) {
      for (Eigen::Index i = 0; i < l.bias.size(); ++i) l.bias(i) = 0.3 * rng.normal();
    }
    Eigen::MatrixXd x(static_cast<Eigen::Index>(in), 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    if (!away_from_kinks(jittered, x, 1e-3)) {
      continue;
    }
    std::array<double, 8> t{};
    for (auto& v : t) v = rng.uniform(-10.0, 10.0);
    const LossSpec loss = LossParams(t);
    const Eigen::MatrixXd y =
        soft_targets(static_cast<Eigen::Index>(classes), 4, rng, checked % 2 == 0);
    const auto analytic = flatten(loss_and_gradient(jittered, x, y, loss).gradient);
    const auto numeric = oracle::fd_gradient(
        [&](const std::vector<double>& v) { return batch_loss(unflatten(jittered, v), x, y, loss); },
        flatten(jittered), 1e-6);
    CHECK(oracle::relative_error(analytic, numeric) <= 1e-4);
    ++checked;
  }
}

TEST_CASE("backprop matches finite differences for cross-entropy, deeper net") {
  Rng rng(74);
  int checked = 0;
  while (checked < 30) {
    const Weights w = he_init(MlpArchitecture{{3, 5, 4, 3}}, rng);
    Eigen::MatrixXd x(3, 4);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = rng.normal();
    if (!away_from_kinks(w, x, 1e-3)) {
      continue;
    }
    const Eigen::MatrixXd y = soft_targets(3, 4, rng, checked % 2 == 0);
    const LossSpec loss = CrossEntropyLoss{};
    const auto lg = loss_and_gradient(w, x, y, loss);
    CHECK(lg.loss == doctest::Approx(batch_loss(w, x, y, loss)).epsilon(1e-14));
    const auto numeric = oracle::fd_gradient(
        [&](const std::vector<double>& v) { return batch_loss(unflatten(w, v), x, y, loss); },
        flatten(w), 1e-6);
    CHECK(oracle::relative_error(flatten(lg.gradient), numeric) <= 1e-4);
    ++checked;
  }
}

TEST_CASE("one epoch of a cross-entropy-like Taylor loss improves training accuracy") {
  // theta5 > 0 rewards probability mass on the true class.
  const LossParams ce_like({0, 0, 0, 0, 0, 1, 0, 0});
  int improved = 0;
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Dataset d = separable_blobs(100 + seed);
    Rng rng(200 + seed);
    const Weights w0 = he_init(MlpArchitecture{{2, 16, 2}}, rng);
    SgdConfig s;
    s.batch_size = 16;
    s.base_lr = 0.5;
    const auto r = train_epochs(w0, d, s, ce_like, 1, Teacher{}, 0, 10, rng);
    CHECK_FALSE(r.report.diverged);
    CHECK(r.report.epochs == 1);
    if (evaluate_accuracy(r.weights, d) > evaluate_accuracy(w0, d)) {
      ++improved;
    }
  }
  CHECK(improved >= 4);
}

TEST_CASE("training preconditions") {
  const Dataset d = separable_blobs(1);
  Rng rng(75);
  const Weights w = he_init(MlpArchitecture{{2, 4, 2}}, rng);
  CHECK_THROWS_AS(train_epochs(w, d, SgdConfig{}, CrossEntropyLoss{}, 0, Teacher{}, 0, 10, rng),
                  InputError);
  const Weights wrong = he_init(MlpArchitecture{{3, 4, 2}}, rng);
  CHECK_THROWS_AS(
      train_epochs(wrong, d, SgdConfig{}, CrossEntropyLoss{}, 1, Teacher{}, 0, 10, rng),
      InputError);
}

TEST_CASE("teacher with alpha 0 equals no teacher") {
  const Dataset d = separable_blobs(2);
  Rng init(76);
  const Weights w = he_init(MlpArchitecture{{2, 8, 2}}, init);
  const Weights teacher = he_init(MlpArchitecture{{2, 8, 2}}, init);
  const LossParams loss({0.3, -0.2, 1.0, -2.0, 0.5, 3.0, 0.1, -0.4});
  SgdConfig s;
  s.batch_size = 32;
  Rng a(9), b(9);
  const auto plain = train_epochs(w, d, s, loss, 3, Teacher{}, 2, 10, a);
  const auto zero = train_epochs(w, d, s, loss, 3, Teacher{&teacher, 0.0}, 2, 10, b);
  CHECK(flatten(plain.weights) == flatten(zero.weights));
  Rng c(9);
  const auto distilled = train_epochs(w, d, s, loss, 3, Teacher{&teacher, 0.9}, 2, 10, c);
  CHECK(flatten(distilled.weights) != flatten(plain.weights));
}

TEST_CASE("training is deterministic") {
  const Dataset d = separable_blobs(3);
  Rng init(77);
  const Weights w = he_init(MlpArchitecture{{2, 8, 2}}, init);
  Rng a(5), b(5);
  const auto r1 = train_epochs(w, d, SgdConfig{}, CrossEntropyLoss{}, 2, Teacher{}, 0, 4, a);
  const auto r2 = train_epochs(w, d, SgdConfig{}, CrossEntropyLoss{}, 2, Teacher{}, 0, 4, b);
  CHECK(flatten(r1.weights) == flatten(r2.weights));
  CHECK(r1.report.final_loss == r2.report.final_loss);
}

TEST_CASE("divergence returns the initial weights and a flag") {
  const Dataset d = separable_blobs(4);
  Rng rng(78);
  const Weights w = he_init(MlpArchitecture{{2, 8, 2}}, rng);
  SgdConfig s;
  s.base_lr = 1e200;
  const LossParams cubic({0, 0, 0, 0, 10, 0, 0, 0});
  const auto r = train_epochs(w, d, s, cubic, 3, Teacher{}, 0, 3, rng);
  CHECK(r.report.diverged);
  CHECK(flatten(r.weights) == flatten(w));
}

TEST_CASE("observer sees every epoch") {
  const Dataset d = separable_blobs(5);
  Rng rng(79);
  const Weights w = he_init(MlpArchitecture{{2, 4, 2}}, rng);
  std::vector<std::size_t> seen;
  train_epochs(w, d, SgdConfig{}, CrossEntropyLoss{}, 3, Teacher{}, 0, 3, rng,
               [&](std::size_t e, const Weights&, double loss) {
                 seen.push_back(e);
                 CHECK(std::isfinite(loss));
               });
  CHECK(seen == std::vector<std::size_t>{0, 1, 2});
}

TEST_CASE("weight checkpoint round trip and layout") {
  Rng rng(80);
  const Weights w = he_init(MlpArchitecture{{3, 2, 2}}, rng);
  const std::string bytes = serialize_weights(w);
  CHECK(bytes.substr(0, 8) == "EPBTWGT1");
  // magic + version + L + 3 sizes + (3*2 + 2) + (2*2 + 2) doubles.
  CHECK(bytes.size() == 8 + 4 + 4 + 3 * 4 + (8 + 6) * 8);
  CHECK(static_cast<unsigned char>(bytes[8]) == 1);
  double first = 0.0;
  std::memcpy(&first, bytes.data() + 28, 8);
  CHECK(first == w.layers[0].weight(0, 0));
  double second = 0.0;
  std::memcpy(&second, bytes.data() + 36, 8);
  CHECK(second == w.layers[0].weight(0, 1));
  const Weights back = deserialize_weights(bytes);
  CHECK(back.arch == w.arch);
  CHECK(flatten(back) == flatten(w));
  CHECK_THROWS_AS(deserialize_weights(bytes.substr(0, bytes.size() - 1)), FormatError);
  CHECK_THROWS_AS(deserialize_weights("NOTMAGIC" + bytes.substr(8)), FormatError);
  const auto path = std::filesystem::temp_directory_path() / "epbt_test_weights.bin";
  save_weights(w, path);
  CHECK(flatten(load_weights(path)) == flatten(w));
  std::filesystem::remove(path);
}
