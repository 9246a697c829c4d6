#include "rulprune/series.hpp"

#include "rulprune/errors.hpp"
#include "rulprune/io.hpp"

#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <unordered_map>

namespace rulprune {

namespace {

std::vector<std::string_view> split_line(std::string_view line, char delim) {
    std::vector<std::string_view> cells;
    std::size_t pos = 0;
    while (true) {
        const std::size_t next = line.find(delim, pos);
        if (next == std::string_view::npos) {
            cells.push_back(line.substr(pos));
            break;
        }
        cells.push_back(line.substr(pos, next - pos));
        pos = next + 1;
    }
    for (auto& c : cells) {
        while (!c.empty() && (c.front() == ' ' || c.front() == '"')) c.remove_prefix(1);
        while (!c.empty() && (c.back() == ' ' || c.back() == '"' || c.back() == '\r')) c.remove_suffix(1);
    }
    return cells;
}

std::size_t find_column(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i) {
        if (header[i] == name) return i;
    }
    throw SchemaError("missing column '" + name + "'");
}

struct UnitRows {
    std::vector<double> rul;
    std::vector<double> cycle;
    std::vector<double> values;  // row-major, d per row
};

}  // namespace

void SensorSeries::validate() const {
    const auto t = length();
    if (t == 0 || channels() == 0) throw ArgumentError("series '" + unit_id + "' is empty");
    if (rul.size() != t) throw ArgumentError("series '" + unit_id + "': rul length mismatch");
    if (!cycle.empty() && cycle.size() != t)
        throw ArgumentError("series '" + unit_id + "': cycle length mismatch");
    for (double r : rul) {
        if (!(r >= 0.0)) throw ArgumentError("series '" + unit_id + "': negative or NaN RUL");
    }
}

std::vector<SensorSeries> load_series(const std::filesystem::path& path, const CsvSchema& schema) {
    std::ifstream in(path);
    if (!in) throw Error("cannot open " + path.string());

    std::string line;
    if (!std::getline(in, line)) throw SchemaError("empty file " + path.string());
    std::vector<std::string> header;
    for (auto cell : split_line(line, schema.delimiter)) header.emplace_back(cell);

    const std::size_t unit_col = find_column(header, schema.unit);
    const std::size_t rul_col = find_column(header, schema.rul);
    const bool has_cycle = !schema.cycle.empty();
    const std::size_t cycle_col = has_cycle ? find_column(header, schema.cycle) : 0;

    std::vector<std::size_t> sensor_cols;
    std::vector<std::string> sensor_names;
    if (schema.sensors.empty()) {
        for (std::size_t i = 0; i < header.size(); ++i) {
            if (i == unit_col || i == rul_col || (has_cycle && i == cycle_col)) continue;
            sensor_cols.push_back(i);
            sensor_names.push_back(header[i]);
        }
    } else {
        for (const auto& name : schema.sensors) {
            sensor_cols.push_back(find_column(header, name));
            sensor_names.push_back(name);
        }
    }
    if (sensor_cols.empty()) throw SchemaError("no sensor columns in " + path.string());

    std::vector<std::string> order;
    std::unordered_map<std::string, UnitRows> units;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line == "\r") continue;
        const auto cells = split_line(line, schema.delimiter);
        if (cells.size() != header.size())
            throw IngestError("expected " + std::to_string(header.size()) + " cells, got " +
                                  std::to_string(cells.size()),
                              lineno);
        auto number = [&](std::size_t col) {
            const auto v = io::parse_double(cells[col]);
            if (!v) throw IngestError("unparseable value '" + std::string(cells[col]) + "' in column '" +
                                          header[col] + "'",
                                      lineno);
            return *v;
        };
        std::string unit(cells[unit_col]);
        auto [it, inserted] = units.try_emplace(unit);
        if (inserted) order.push_back(unit);
        UnitRows& rows = it->second;
        const double rul = number(rul_col);
        if (rul < 0.0) throw IngestError("negative RUL", lineno);
        rows.rul.push_back(rul);
        if (has_cycle) rows.cycle.push_back(number(cycle_col));
        for (auto col : sensor_cols) rows.values.push_back(number(col));
    }

    std::vector<SensorSeries> out;
    out.reserve(order.size());
    const auto d = static_cast<Eigen::Index>(sensor_cols.size());
    for (const auto& unit : order) {
        UnitRows& rows = units.at(unit);
        SensorSeries s;
        s.unit_id = unit;
        const auto t = static_cast<Eigen::Index>(rows.rul.size());
        s.readings = Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>(
            rows.values.data(), t, d);
        s.rul = std::move(rows.rul);
        s.cycle = std::move(rows.cycle);
        s.sensor_names = sensor_names;
        out.push_back(std::move(s));
    }
    return out;
}

void write_series(const std::filesystem::path& path, std::span<const SensorSeries> series,
                  const CsvSchema& schema) {
    if (series.empty()) throw ArgumentError("write_series: nothing to write");
    const std::size_t d = series.front().channels();
    std::vector<std::string> names = schema.sensors;
    if (names.empty()) names = series.front().sensor_names;
    if (names.empty()) {
        for (std::size_t j = 0; j < d; ++j) names.push_back("s" + std::to_string(j + 1));
    }
    if (names.size() != d) throw ArgumentError("write_series: sensor name count does not match d");

    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write " + path.string());
    const char sep = schema.delimiter;
    const bool has_cycle = !schema.cycle.empty();
    out << schema.unit;
    if (has_cycle) out << sep << schema.cycle;
    out << sep << schema.rul;
    for (const auto& n : names) out << sep << n;
    out << '\n';

    std::string row;
    for (const auto& s : series) {
        s.validate();
        if (s.channels() != d) throw ArgumentError("write_series: units disagree on channel count");
        for (std::size_t t = 0; t < s.length(); ++t) {
            row.clear();
            row += s.unit_id;
            if (has_cycle) {
                row += sep;
                row += io::format_double(s.cycle.empty() ? static_cast<double>(t + 1) : s.cycle[t]);
            }
            row += sep;
            row += io::format_double(s.rul[t]);
            for (std::size_t j = 0; j < d; ++j) {
                row += sep;
                row += io::format_double(s.readings(static_cast<Eigen::Index>(t), static_cast<Eigen::Index>(j)));
            }
            row += '\n';
            out << row;
        }
    }
}

SensorSeries downsample(const SensorSeries& series, std::size_t factor) {
    if (factor == 0) throw ArgumentError("downsample: factor must be >= 1");
    const std::size_t t = series.length();
    const std::size_t kept = (t + factor - 1) / factor;
    SensorSeries out;
    out.unit_id = series.unit_id;
    out.sensor_names = series.sensor_names;
    out.sample_period = series.sample_period * static_cast<double>(factor);
    out.readings.resize(static_cast<Eigen::Index>(kept), series.readings.cols());
    out.rul.resize(kept);
    if (!series.cycle.empty()) out.cycle.resize(kept);
    for (std::size_t k = 0; k < kept; ++k) {
        const std::size_t src = k * factor;
        out.readings.row(static_cast<Eigen::Index>(k)) = series.readings.row(static_cast<Eigen::Index>(src));
        out.rul[k] = series.rul[src];
        if (!series.cycle.empty()) out.cycle[k] = series.cycle[src];
    }
    return out;
}

WindowSet make_windows(const SensorSeries& series, std::size_t w, std::size_t stride) {
    if (w == 0 || stride == 0) throw ArgumentError("make_windows: w and stride must be >= 1");
    WindowSet out;
    const std::size_t t = series.length();
    if (t < w) return out;

    auto augmented = std::make_shared<Eigen::MatrixXd>(series.readings.rows(), series.readings.cols() + 1);
    augmented->leftCols(series.readings.cols()) = series.readings;
    for (std::size_t i = 0; i < t; ++i) {
        (*augmented)(static_cast<Eigen::Index>(i), series.readings.cols()) = series.rul[i];
    }
    std::shared_ptr<const Eigen::MatrixXd> source = std::move(augmented);

    out.reserve((t - w) / stride + 1);
    for (std::size_t start = 0; start + w <= t; start += stride) {
        Window win;
        win.source = source;
        win.unit_id = series.unit_id;
        win.start = start;
        win.length = w;
        win.label = series.rul[start + w - 1];
        win.rul_level = std::floor(win.label);
        out.push_back(std::move(win));
    }
    return out;
}

WindowSet make_windows(std::span<const SensorSeries> series, std::size_t w, std::size_t stride) {
    WindowSet out;
    for (const auto& s : series) {
        auto part = make_windows(s, w, stride);
        out.insert(out.end(), std::make_move_iterator(part.begin()), std::make_move_iterator(part.end()));
    }
    return out;
}

NormalizerParams fit_normalizer(std::span<const SensorSeries> train) {
    if (train.empty()) throw ArgumentError("fit_normalizer: no training series");
    const auto d = train.front().readings.cols();
    NormalizerParams p;
    p.min.assign(static_cast<std::size_t>(d), std::numeric_limits<double>::infinity());
    p.max.assign(static_cast<std::size_t>(d), -std::numeric_limits<double>::infinity());
    for (const auto& s : train) {
        if (s.readings.cols() != d) throw ArgumentError("fit_normalizer: units disagree on channel count");
        if (s.readings.rows() == 0) continue;
        for (Eigen::Index j = 0; j < d; ++j) {
            const auto k = static_cast<std::size_t>(j);
            p.min[k] = std::min(p.min[k], s.readings.col(j).minCoeff());
            p.max[k] = std::max(p.max[k], s.readings.col(j).maxCoeff());
        }
    }
    return p;
}

SensorSeries apply_normalizer(const SensorSeries& series, const NormalizerParams& params) {
    const auto d = series.readings.cols();
    if (params.min.size() != static_cast<std::size_t>(d) || params.max.size() != static_cast<std::size_t>(d))
        throw ArgumentError("apply_normalizer: parameter count does not match channel count");
    SensorSeries out = series;
    for (Eigen::Index j = 0; j < d; ++j) {
        const double lo = params.min[static_cast<std::size_t>(j)];
        const double span = params.max[static_cast<std::size_t>(j)] - lo;
        if (span > 0.0) {
            out.readings.col(j) = (series.readings.col(j).array() - lo) / span;
        } else {
            out.readings.col(j).setZero();
        }
    }
    return out;
}

void write_window_index(const std::filesystem::path& path, const WindowSet& windows) {
    std::vector<io::Json> records;
    records.reserve(windows.size());
    for (const auto& w : windows) {
        records.push_back({{"unit", w.unit_id}, {"rul_level", w.rul_level}, {"start", w.start}, {"label", w.label}});
    }
    io::write_jsonl(path, records);
}

}  // namespace rulprune
