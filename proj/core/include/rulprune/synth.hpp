#pragma once

#include "rulprune/io.hpp"
#include "rulprune/series.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace rulprune {

/// Linear structural model. adjacency(i, j) is the coefficient of X_i in X_j at the
/// same time step; lagged(i, j) the coefficient of X_i(t-1) in X_j(t).
struct ScmSpec {
    int d = 0;
    Eigen::MatrixXd adjacency;
    Eigen::MatrixXd lagged;  // empty: no lagged links
    double noise_std = 1.0;
    std::size_t n = 1000;
    std::uint64_t seed = 0;

    void validate() const;
};

struct ScmData {
    Eigen::MatrixXd data;  // n x d
    Eigen::MatrixXd adjacency;
    Eigen::MatrixXd lagged;
};

/// Variable order in which every instantaneous parent precedes its children.
/// Ties go to the lower index. Throws ArgumentError on a cycle.
std::vector<int> topological_order(const Eigen::MatrixXd& adjacency);

ScmData gen_scm(const ScmSpec& spec);

enum class CorruptionKind { channel_shuffle, heavy_noise, constant_stuck };

std::string to_string(CorruptionKind kind);
CorruptionKind corruption_kind_from_string(const std::string& name);

struct DegradationSpec {
    std::size_t units = 10;
    std::size_t cycles_per_unit = 500;
    std::size_t samples_per_cycle = 150;
    int d = 4;
    std::vector<double> trend_coeffs;  // per sensor; empty selects +1 for odd pairs, -1 for even pairs
    double noise_std = 0.15;
    double coupling = 0.95;         // pair coefficient leader -> follower
    double regime_amplitude = 1.0;  // operating regime level driving each pair leader
    double regime_switch = 0.2;     // per-row switch probability
    double corrupt_fraction = 0.0;
    CorruptionKind corruption_kind = CorruptionKind::heavy_noise;
    double corruption_scale = 1.0;  // heavy-noise std in units of the span's channel std
    std::size_t span_length = 50;
    std::uint64_t seed = 0;

    void validate() const;
    std::vector<double> trends() const;
};

struct CorruptedSpan {
    std::string unit_id;
    std::size_t span_index = 0;
    std::size_t start = 0;  // row
    std::size_t length = 0;
};

struct DegradationData {
    std::vector<SensorSeries> series;
    std::vector<CorruptedSpan> corrupted;  // sorted by unit then span
    std::size_t total_spans = 0;
};

DegradationData gen_degradation(const DegradationSpec& spec);

enum class WindowTruth { clean, corrupted, ambiguous };

/// Clean: no row inside a corrupted span. Corrupted: at least half the rows inside one.
/// `factor` maps window rows back to generated rows after downsampling.
std::vector<WindowTruth> window_truth(const WindowSet& windows, const std::vector<CorruptedSpan>& spans,
                                      std::size_t factor = 1);

void write_corruption_labels(const std::filesystem::path& path, const std::vector<CorruptedSpan>& spans);
std::vector<CorruptedSpan> read_corruption_labels(const std::filesystem::path& path);

DegradationSpec degradation_spec_from_json(const io::Json& j);
io::Json to_json(const DegradationSpec& spec);

}  // namespace rulprune
