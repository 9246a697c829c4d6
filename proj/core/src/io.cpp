#include "rulprune/io.hpp"

#include "rulprune/errors.hpp"

#include <charconv>
#include <fstream>
#include <system_error>

namespace rulprune::io {

std::string format_double(double value) {
    char buf[64];
    const auto result = std::to_chars(buf, buf + sizeof(buf), value);
    return std::string(buf, result.ptr);
}

std::optional<double> parse_double(std::string_view text) {
    while (!text.empty() && (text.front() == ' ' || text.front() == '\t')) text.remove_prefix(1);
    while (!text.empty() && (text.back() == ' ' || text.back() == '\t' || text.back() == '\r'))
        text.remove_suffix(1);
    if (text.empty()) return std::nullopt;
    if (text.front() == '+') text.remove_prefix(1);
    double value = 0.0;
    const auto result = std::from_chars(text.data(), text.data() + text.size(), value);
    if (result.ec != std::errc{} || result.ptr != text.data() + text.size()) return std::nullopt;
    return value;
}

Json read_json(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    try {
        return Json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed JSON in " + path.string() + ": " + e.what());
    }
}

void write_json(const std::filesystem::path& path, const Json& value) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    out << value.dump(2) << '\n';
}

std::vector<Json> read_jsonl(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());
    std::vector<Json> records;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        try {
            records.push_back(Json::parse(line));
        } catch (const nlohmann::json::exception& e) {
            throw IngestError("malformed record in " + path.string() + ": " + e.what(), lineno);
        }
    }
    return records;
}

void write_jsonl(const std::filesystem::path& path, const std::vector<Json>& records) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    for (const auto& r : records) out << r.dump() << '\n';
}

}  // namespace rulprune::io
