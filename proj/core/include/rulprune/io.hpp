#pragma once

#include <nlohmann/json.hpp>

#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace rulprune::io {

using Json = nlohmann::ordered_json;

/// Shortest decimal string that parses back to the same double.
std::string format_double(double value);

/// Parses a complete token as a double; nullopt on any trailing garbage or empty input.
std::optional<double> parse_double(std::string_view text);

Json read_json(const std::filesystem::path& path);
void write_json(const std::filesystem::path& path, const Json& value);

std::vector<Json> read_jsonl(const std::filesystem::path& path);
void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records);

}  // namespace rulprune::io
