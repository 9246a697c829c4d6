#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace rulprune {

/// One unit's run-to-failure record.
struct SensorSeries {
    std::string unit_id;
    Eigen::MatrixXd readings;  // T x d
    std::vector<double> rul;   // length T, cycles remaining
    std::vector<double> cycle; // length T when the source has a cycle column, else empty
    std::vector<std::string> sensor_names;
    double sample_period = 1.0;

    std::size_t length() const noexcept { return static_cast<std::size_t>(readings.rows()); }
    std::size_t channels() const noexcept { return static_cast<std::size_t>(readings.cols()); }

    /// Throws ArgumentError when shapes disagree, T or d is zero, or a RUL value is negative.
    void validate() const;
};

/// A fixed-length slice of a series with the RUL channel appended as the last column.
///
/// The window does not copy its rows; it shares the unit's augmented matrix.
struct Window {
    std::shared_ptr<const Eigen::MatrixXd> source;  // T x (d+1)
    std::string unit_id;
    double rul_level = 0.0;
    std::size_t start = 0;
    std::size_t length = 0;
    double label = 0.0;

    auto values() const {
        return source->middleRows(static_cast<Eigen::Index>(start), static_cast<Eigen::Index>(length));
    }
    std::size_t channels() const noexcept { return static_cast<std::size_t>(source->cols()) - 1; }
};

using WindowSet = std::vector<Window>;

struct NormalizerParams {
    std::vector<double> min;
    std::vector<double> max;
};

/// Column mapping for delimited input files.
struct CsvSchema {
    std::string unit = "unit";
    std::string cycle = "cycle";  // empty: no cycle column
    std::string rul = "RUL";
    std::vector<std::string> sensors;  // empty: every other column, in file order
    char delimiter = ',';
};

std::vector<SensorSeries> load_series(const std::filesystem::path& path, const CsvSchema& schema = {});

/// Writes series with shortest round-trip decimal formatting so load_series reproduces them exactly.
void write_series(const std::filesystem::path& path, std::span<const SensorSeries> series,
                  const CsvSchema& schema = {});

/// Keeps rows 0, factor, 2*factor, ...
SensorSeries downsample(const SensorSeries& series, std::size_t factor);

/// Windows at starts 0, stride, 2*stride, ... with start + w <= T. Empty when T < w.
WindowSet make_windows(const SensorSeries& series, std::size_t w, std::size_t stride);

/// Windows for several units, concatenated in input order. Never crosses units.
WindowSet make_windows(std::span<const SensorSeries> series, std::size_t w, std::size_t stride);

NormalizerParams fit_normalizer(std::span<const SensorSeries> train);

/// Min-max scaling per sensor channel. Constant channels map to 0. No clipping.
SensorSeries apply_normalizer(const SensorSeries& series, const NormalizerParams& params);

/// Line-delimited JSON, one {unit, rul_level, start, label} record per window.
void write_window_index(const std::filesystem::path& path, const WindowSet& windows);

}  // namespace rulprune
