#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <ostream>
#include <span>
#include <string>

namespace epbt {

/// Process exit statuses of the command-line tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

/// Overrides the configured output directory when set.
inline constexpr const char* kOutputDirEnv = "EPBT_OUTPUT_DIR";

struct RunOptions {
  std::optional<std::size_t> workers;
  bool resume = false;
};

/// Runs the configured strategy. EPBT and PBT write generations.jsonl,
/// timings.jsonl, checkpoint/ and summary.json; the SGD baseline writes
/// curve.csv and summary.json.
int cmd_run(const std::filesystem::path& config_path, const RunOptions& options,
            std::ostream& out, std::ostream& err);

/// Writes the binary projection of the Taylor loss as `x,loss` CSV.
int cmd_loss_curve(std::span<const double> theta, std::size_t resolution,
                   const std::filesystem::path& out_path, std::ostream& out, std::ostream& err);

/// `id` is a decimal individual id or "best" (fittest member of the last
/// generation). Writes ancestry_<id>.csv and ancestry_<id>/ with one loss
/// curve per ancestor into `run_dir`.
int cmd_ancestry(const std::filesystem::path& run_dir, const std::string& id, std::ostream& out,
                 std::ostream& err);

/// Prints predicted evaluation and epoch counts without training.
int cmd_dry_run(const std::filesystem::path& config_path, std::ostream& out, std::ostream& err);

/// Resolution used for per-ancestor loss curves.
inline constexpr std::size_t kAncestryCurveResolution = 101;

} // namespace epbt
