#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace epbt {

/// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);

/// Writes `contents` to a sibling temp file, then renames it over `path`.
/// Readers never observe a partially written file.
void write_file_atomic(const std::filesystem::path& path, std::string_view contents);

std::string read_file(const std::filesystem::path& path);

} // namespace epbt
