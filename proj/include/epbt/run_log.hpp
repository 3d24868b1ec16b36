#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "epbt/evolution.hpp"
#include "epbt/population.hpp"

namespace epbt {

/// Version of the generations.jsonl object layout. Bump on any field change.
inline constexpr int kGenerationLogVersion = 1;

/// One JSON object (no trailing newline). Wall time is excluded so the log is
/// reproducible byte for byte; see timing_json.
std::string generation_json(const GenerationRecord& rec, Strategy strategy);
std::string timing_json(const GenerationRecord& rec);

GenerationRecord parse_generation_json(const std::string& line);

/// Reads every record of a generations.jsonl file.
std::vector<GenerationRecord> load_generation_log(const std::filesystem::path& path);

/// Writes `state` to `dir`: state.json plus weights/<id>.bin per member with
/// weights. state.json is written last so a complete file implies complete
/// weights; files of departed members are removed afterwards.
void save_run_state(const RunState& state, std::size_t records_written,
                    const std::filesystem::path& dir);

struct LoadedRunState {
  RunState state;
  std::size_t records_written = 0;
};

LoadedRunState load_run_state(const std::filesystem::path& dir);

} // namespace epbt
