#include "epbt/data.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <numbers>
#include <numeric>
#include <sstream>

#include "epbt/errors.hpp"
#include "epbt/io.hpp"

namespace epbt {

namespace {

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) {
    s.remove_prefix(1);
  }
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) {
    s.remove_suffix(1);
  }
  return s;
}

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    fields.push_back(trim(line.substr(start, comma - start)));
    if (comma == std::string_view::npos) {
      break;
    }
    start = comma + 1;
  }
  return fields;
}

std::optional<double> parse_double(std::string_view text) {
  if (!text.empty() && text.front() == '+') {
    text.remove_prefix(1);
  }
  double value = 0.0;
  const auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), value);
  if (ec != std::errc{} || ptr != text.data() + text.size() || text.empty()) {
    return std::nullopt;
  }
  return value;
}

std::uint32_t read_be32(std::istream& in, const std::string& what) {
  unsigned char bytes[4];
  if (!in.read(reinterpret_cast<char*>(bytes), 4)) {
    throw FormatError(what + ": truncated header");
  }
  return (std::uint32_t{bytes[0]} << 24) | (std::uint32_t{bytes[1]} << 16) |
         (std::uint32_t{bytes[2]} << 8) | std::uint32_t{bytes[3]};
}

} // namespace

void Dataset::validate() const {
  if (static_cast<std::size_t>(features.rows()) != labels.size()) {
    throw InputError("dataset: feature rows and label count differ");
  }
  for (int label : labels) {
    if (label < 0 || static_cast<std::size_t>(label) >= class_count) {
      throw InputError("dataset: label " + std::to_string(label) + " outside [0, " +
                       std::to_string(class_count) + ")");
    }
  }
  if (!features.allFinite()) {
    throw InputError("dataset: non-finite feature value");
  }
}

Dataset Dataset::subset(std::span<const std::size_t> indices) const {
  Dataset out;
  out.class_count = class_count;
  out.normalization = normalization;
  out.features.resize(static_cast<Eigen::Index>(indices.size()), features.cols());
  out.labels.reserve(indices.size());
  for (std::size_t r = 0; r < indices.size(); ++r) {
    if (indices[r] >= size()) {
      throw InputError("dataset subset: index out of range");
    }
    out.features.row(static_cast<Eigen::Index>(r)) =
        features.row(static_cast<Eigen::Index>(indices[r]));
    out.labels.push_back(labels[indices[r]]);
  }
  return out;
}

Dataset load_csv(const std::filesystem::path& path, const std::string& label_column) {
  std::ifstream in(path);
  if (!in) {
    throw LookupError("cannot open CSV " + path.string());
  }
  std::string line;
  if (!std::getline(in, line)) {
    throw FormatError(path.string() + ": missing header row");
  }
  const auto header = split_fields(line);
  const auto label_it = std::find(header.begin(), header.end(), label_column);
  if (label_it == header.end()) {
    throw FormatError(path.string() + ": no label column '" + label_column + "'");
  }
  const auto label_index = static_cast<std::size_t>(label_it - header.begin());
  const std::size_t dims = header.size() - 1;

  std::vector<double> values;
  std::vector<int> labels;
  std::size_t row = 1;
  while (std::getline(in, line)) {
    ++row;
    if (trim(line).empty()) {
      continue;
    }
    const auto fields = split_fields(line);
    if (fields.size() != header.size()) {
      throw FormatError(path.string() + ": line " + std::to_string(row) + " has " +
                        std::to_string(fields.size()) + " fields, expected " +
                        std::to_string(header.size()));
    }
    for (std::size_t c = 0; c < fields.size(); ++c) {
      const auto parsed = parse_double(fields[c]);
      if (!parsed || !std::isfinite(*parsed)) {
        throw FormatError(path.string() + ": line " + std::to_string(row) + ", column '" +
                          std::string(header[c]) + "': not a number: '" +
                          std::string(fields[c]) + "'");
      }
      if (c == label_index) {
        if (*parsed < 0 || *parsed != std::floor(*parsed) || *parsed > 1e9) {
          throw FormatError(path.string() + ": line " + std::to_string(row) +
                            ": label must be a non-negative integer");
        }
        labels.push_back(static_cast<int>(*parsed));
      } else {
        values.push_back(*parsed);
      }
    }
  }
  if (labels.empty()) {
    throw FormatError(path.string() + ": no data rows");
  }
  Dataset out;
  out.features.resize(static_cast<Eigen::Index>(labels.size()), static_cast<Eigen::Index>(dims));
  std::copy(values.begin(), values.end(), out.features.data());
  out.labels = std::move(labels);
  out.class_count = static_cast<std::size_t>(*std::max_element(out.labels.begin(), out.labels.end())) + 1;
  out.validate();
  return out;
}

void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::string& label_column) {
  std::ostringstream out;
  for (std::size_t c = 0; c < data.dims(); ++c) {
    out << 'f' << c << ',';
  }
  out << label_column << '\n';
  for (std::size_t r = 0; r < data.size(); ++r) {
    for (std::size_t c = 0; c < data.dims(); ++c) {
      out << format_double(data.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)))
          << ',';
    }
    out << data.labels[r] << '\n';
  }
  write_file_atomic(path, out.str());
}

Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  std::ifstream images(images_path, std::ios::binary);
  if (!images) {
    throw LookupError("cannot open IDX images " + images_path.string());
  }
  std::ifstream labels(labels_path, std::ios::binary);
  if (!labels) {
    throw LookupError("cannot open IDX labels " + labels_path.string());
  }
  const std::string iname = images_path.string();
  const std::string lname = labels_path.string();
  if (read_be32(images, iname) != 0x00000803) {
    throw FormatError(iname + ": bad magic number (expected IDX3 unsigned byte)");
  }
  const std::uint32_t count = read_be32(images, iname);
  const std::uint32_t rows = read_be32(images, iname);
  const std::uint32_t cols = read_be32(images, iname);
  if (read_be32(labels, lname) != 0x00000801) {
    throw FormatError(lname + ": bad magic number (expected IDX1 unsigned byte)");
  }
  const std::uint32_t label_count = read_be32(labels, lname);
  if (label_count != count) {
    throw FormatError("IDX image count " + std::to_string(count) + " differs from label count " +
                      std::to_string(label_count));
  }
  if (count == 0) {
    throw FormatError(iname + ": no images");
  }
  const std::size_t pixels = std::size_t{rows} * cols;
  std::vector<unsigned char> raw(std::size_t{count} * pixels);
  if (!images.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(raw.size()))) {
    throw FormatError(iname + ": truncated pixel data");
  }
  std::vector<unsigned char> raw_labels(count);
  if (!labels.read(reinterpret_cast<char*>(raw_labels.data()), count)) {
    throw FormatError(lname + ": truncated label data");
  }

  Dataset out;
  out.features.resize(count, static_cast<Eigen::Index>(pixels));
  for (std::size_t i = 0; i < raw.size(); ++i) {
    out.features.data()[i] = static_cast<double>(raw[i]) / 255.0;
  }
  const double n = static_cast<double>(out.features.size());
  const double mean = out.features.sum() / n;
  const double var = (out.features.array() - mean).square().sum() / n;
  const double scale = var > 0.0 ? std::sqrt(var) : 1.0;
  out.features = (out.features.array() - mean) / scale;
  out.normalization = Normalization{std::vector<double>(pixels, mean), std::vector<double>(pixels, scale)};

  int max_label = 0;
  for (auto l : raw_labels) {
    out.labels.push_back(l);
    max_label = std::max(max_label, static_cast<int>(l));
  }
  out.class_count = static_cast<std::size_t>(max_label) + 1;
  return out;
}

std::array<double, 2> blob_center(std::size_t c, std::size_t class_count) {
  const double angle = 2.0 * std::numbers::pi * static_cast<double>(c) / static_cast<double>(class_count);
  return {3.0 * std::cos(angle), 3.0 * std::sin(angle)};
}

Dataset synth_blobs(std::size_t class_count, std::size_t samples_per_class, double noise_sigma,
                    RandomSource& rng) {
  if (class_count < 2) {
    throw InputError("synth_blobs: need at least two classes");
  }
  if (noise_sigma < 0.0) {
    throw InputError("synth_blobs: noise_sigma must be non-negative");
  }
  Dataset out;
  out.class_count = class_count;
  out.features.resize(static_cast<Eigen::Index>(class_count * samples_per_class), 2);
  out.labels.reserve(class_count * samples_per_class);
  Eigen::Index row = 0;
  for (std::size_t c = 0; c < class_count; ++c) {
    const auto center = blob_center(c, class_count);
    for (std::size_t s = 0; s < samples_per_class; ++s, ++row) {
      out.features(row, 0) = center[0] + noise_sigma * rng.normal();
      out.features(row, 1) = center[1] + noise_sigma * rng.normal();
      out.labels.push_back(static_cast<int>(c));
    }
  }
  return out;
}

Split split(const Dataset& data, double val_fraction, double test_fraction, RandomSource& rng) {
  if (!(val_fraction > 0.0) || !(test_fraction > 0.0) || !(val_fraction + test_fraction < 1.0)) {
    throw ConfigError("split: fractions must be positive and sum to less than 1");
  }
  std::vector<std::vector<std::size_t>> by_class(data.class_count);
  for (std::size_t i = 0; i < data.size(); ++i) {
    by_class[static_cast<std::size_t>(data.labels[i])].push_back(i);
  }
  std::vector<std::size_t> train, val, test;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& idx = by_class[c];
    if (idx.empty()) {
      continue;
    }
    for (std::size_t i = idx.size(); i > 1; --i) {
      std::swap(idx[i - 1], idx[rng.index(i)]);
    }
    const auto n = static_cast<double>(idx.size());
    const auto n_val = static_cast<std::size_t>(std::llround(val_fraction * n));
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * n));
    if (n_val == 0 || n_test == 0 || n_val + n_test >= idx.size()) {
      throw ConfigError("split: class " + std::to_string(c) + " has " +
                        std::to_string(idx.size()) +
                        " samples, too few for the requested fractions");
    }
    val.insert(val.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_val));
    test.insert(test.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val),
                idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test));
    train.insert(train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_val + n_test), idx.end());
  }
  auto shuffle = [&rng](std::vector<std::size_t>& v) {
    for (std::size_t i = v.size(); i > 1; --i) {
      std::swap(v[i - 1], v[rng.index(i)]);
    }
  };
  shuffle(train);
  shuffle(val);
  shuffle(test);
  return Split{data.subset(train), data.subset(val), data.subset(test)};
}

Normalization fit_normalization(const Dataset& data) {
  if (data.size() == 0) {
    throw InputError("fit_normalization: empty dataset");
  }
  Normalization norm;
  const double n = static_cast<double>(data.size());
  for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
    const double mean = data.features.col(c).sum() / n;
    const double var = (data.features.col(c).array() - mean).square().sum() / n;
    norm.mean.push_back(mean);
    norm.scale.push_back(var > 0.0 ? std::sqrt(var) : 1.0);
  }
  return norm;
}

void apply_normalization(Dataset& data, const Normalization& norm) {
  if (norm.mean.size() != data.dims() || norm.scale.size() != data.dims()) {
    throw InputError("apply_normalization: dimension mismatch");
  }
  for (Eigen::Index c = 0; c < data.features.cols(); ++c) {
    const auto i = static_cast<std::size_t>(c);
    data.features.col(c) = (data.features.col(c).array() - norm.mean[i]) / norm.scale[i];
  }
  data.normalization = norm;
}

void normalize_split(Split& s) {
  const Normalization norm = fit_normalization(s.train);
  apply_normalization(s.train, norm);
  apply_normalization(s.validation, norm);
  apply_normalization(s.test, norm);
}

std::vector<std::size_t> probe_subset(const Dataset& validation, std::size_t count,
                                      RandomSource& rng) {
  const std::size_t n = validation.size();
  if (count > n) {
    throw ConfigError("probe_subset: requested " + std::to_string(count) +
                      " samples from a validation set of " + std::to_string(n));
  }
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  for (std::size_t i = 0; i < count; ++i) {
    std::swap(idx[i], idx[i + rng.index(n - i)]);
  }
  idx.resize(count);
  std::sort(idx.begin(), idx.end());
  return idx;
}

} // namespace epbt
