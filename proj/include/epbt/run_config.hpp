#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "epbt/data.hpp"
#include "epbt/evolution.hpp"
#include "epbt/trainer.hpp"

namespace epbt {

enum class DatasetKind { blobs, csv, idx };

struct DatasetSource {
  DatasetKind kind = DatasetKind::blobs;
  std::size_t blob_classes = 3;
  std::size_t blob_samples_per_class = 200;
  double blob_noise = 1.0;
  std::filesystem::path csv_path;
  std::string csv_label_column = "label";
  std::filesystem::path idx_images;
  std::filesystem::path idx_labels;
  double val_fraction = 0.2;
  double test_fraction = 0.2;
};

/// Flat `key = value` run description. '#' starts a comment. Unknown and
/// repeated keys are rejected.
///
/// Keys: strategy, dataset (blobs|csv|idx), blobs_classes,
/// blobs_samples_per_class, blobs_noise, csv_path, csv_label_column,
/// idx_images, idx_labels, val_fraction, test_fraction, hidden_layers
/// (comma list or "none"), population, generations, elite_count,
/// epochs_per_generation, batch_size, base_lr, milestones, tournament_size,
/// mutation_sigma, reset_prob, per_gene_mutation_prob, swap_prob,
/// novelty_period (integer or "off"), novelty_candidates, probe_size,
/// distill_alpha, distillation (on|off), seed, workers (0 = one per core,
/// the default), output_dir,
/// theta_range, lr_scale_range, lr_decay_range, momentum_range ("low,high"),
/// baseline_lr_scale, baseline_decay, baseline_momentum.
struct RunConfig {
  EvolutionConfig evolution;
  DatasetSource dataset;
  std::vector<std::size_t> hidden_layers{64, 32};
  /// base_lr, batch_size and milestones apply to every strategy; lr_scale,
  /// decay_factor and momentum are the fixed SGD-baseline schedule.
  SgdConfig sgd;
  /// Unset: min(400, validation size).
  std::optional<std::size_t> probe_size;
  std::filesystem::path output_dir = "epbt_run";

  /// Throws ConfigError with the offending line and key.
  static RunConfig parse(std::string_view text);
  static RunConfig load(const std::filesystem::path& path);

  /// Cross-field checks that do not need the data.
  void validate() const;
};

/// Loads (or synthesizes), splits and normalizes the configured dataset.
Split build_split(const RunConfig& cfg);

MlpArchitecture build_architecture(const RunConfig& cfg, const Split& data);

/// Resolves the probe size against the validation split and returns the
/// evolution config the runner should use.
EvolutionConfig resolve_evolution(const RunConfig& cfg, const Split& data);

/// Seed of the fixed validation probe subset.
std::uint64_t probe_seed(const RunConfig& cfg);

} // namespace epbt
