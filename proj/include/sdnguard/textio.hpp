#pragma once

// Small helpers shared by the CSV/text writers and readers.

#include <filesystem>
#include <fstream>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace sdnguard {

/// Shortest decimal rendering that round-trips to the same double.
std::string format_double(double v);

std::optional<double> parse_double(std::string_view s);
std::vector<std::string_view> split(std::string_view line, char sep);
std::string_view trim_view(std::string_view s);

/// Opens `path` for writing (creating parent directories); Io error on failure.
std::ofstream open_output(const std::filesystem::path& path, std::string_view module);
std::ifstream open_input(const std::filesystem::path& path, std::string_view module);

/// Writes each preamble line as `# line`.
void write_preamble(std::ostream& out, std::span<const std::string> preamble);

}  // namespace sdnguard
