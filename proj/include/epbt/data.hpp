#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "epbt/random.hpp"

namespace epbt {

/// One sample per row.
using FeatureMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Affine per-feature transform x' = (x - mean) / scale.
struct Normalization {
  std::vector<double> mean;
  std::vector<double> scale;
};

struct Dataset {
  FeatureMatrix features;
  std::vector<int> labels;
  std::size_t class_count = 0;
  std::optional<Normalization> normalization;

  std::size_t size() const { return labels.size(); }
  std::size_t dims() const { return static_cast<std::size_t>(features.cols()); }

  /// Throws InputError on shape mismatch, out-of-range labels or
  /// non-finite features.
  void validate() const;

  Dataset subset(std::span<const std::size_t> indices) const;
};

struct Split {
  Dataset train;
  Dataset validation;
  Dataset test;
};

/// Reads a headered numeric CSV; `label_column` names the integer label
/// column, every other column is a feature. class_count = max label + 1.
/// Throws LookupError if the file is missing, FormatError (citing the file
/// line) on malformed rows.
Dataset load_csv(const std::filesystem::path& path, const std::string& label_column);

/// Inverse of load_csv: feature columns f0..f{d-1}, then the label column.
void write_csv(const Dataset& data, const std::filesystem::path& path,
               const std::string& label_column = "label");

/// Big-endian IDX3 images + IDX1 labels. Pixels are scaled to [0, 1] and then
/// shifted and scaled to zero mean and unit variance over all pixels.
/// Throws LookupError if a file is missing, FormatError on bad magic numbers,
/// truncation or mismatched counts.
Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path);

/// Isotropic 2-D Gaussian clusters with centers evenly spaced on a circle of
/// radius 3. Class c's center sits at angle 2*pi*c/class_count.
Dataset synth_blobs(std::size_t class_count, std::size_t samples_per_class, double noise_sigma,
                    RandomSource& rng);

/// Center of class `c` used by synth_blobs.
std::array<double, 2> blob_center(std::size_t c, std::size_t class_count);

/// Stratified seeded partition into train / validation / test.
Split split(const Dataset& data, double val_fraction, double test_fraction, RandomSource& rng);

/// Per-feature mean and standard deviation (population). Constant features
/// get scale 1.
Normalization fit_normalization(const Dataset& data);
void apply_normalization(Dataset& data, const Normalization& norm);

/// Fits on the training split and applies the same transform to all three.
void normalize_split(Split& s);

/// `count` distinct validation indices, sorted ascending.
std::vector<std::size_t> probe_subset(const Dataset& validation, std::size_t count,
                                      RandomSource& rng);

} // namespace epbt
