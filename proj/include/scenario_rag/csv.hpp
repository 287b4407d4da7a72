#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <string_view>
#include <vector>

namespace scenario_rag {

// Shortest decimal text that parses back to exactly `value`.
std::string format_double(double value);
double parse_double(std::string_view text);

std::vector<std::string> split_csv_line(std::string_view line);

// Opens for writing/reading or throws Error{kIo}.
std::ofstream open_output(const std::filesystem::path& path, bool binary = false);
std::ifstream open_input(const std::filesystem::path& path, bool binary = false);

}  // namespace scenario_rag
