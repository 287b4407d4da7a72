#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>
#include <vector>

#include "scenario_rag/scenario.hpp"

namespace scenario_rag {

// One scenario per line:
// {"scenario_id": str, "metadata": {str: str},
//  "frames": [{"t": int, "nodes": [{"id", "kind", "state"}], "edges": [{"src", "dst", "kind"}]}]}
// Scenarios are validated and canonicalized on both write and read. Unknown
// keys are rejected with Error{kParse} naming the line and field.
std::string to_json_line(const ScenarioPrimitive& s);
ScenarioPrimitive from_json_line(const std::string& line, std::size_t line_number = 1);

void write_jsonl(const std::vector<ScenarioPrimitive>& dataset, std::ostream& out);
std::vector<ScenarioPrimitive> read_jsonl(std::istream& in);

void write_jsonl(const std::vector<ScenarioPrimitive>& dataset, const std::filesystem::path& path);
std::vector<ScenarioPrimitive> read_jsonl(const std::filesystem::path& path);

}  // namespace scenario_rag
