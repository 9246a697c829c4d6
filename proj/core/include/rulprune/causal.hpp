#pragma once

#include "rulprune/series.hpp"

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace rulprune {

/// Outcome of one partial-correlation conditional-independence test.
struct CiResult {
    double rho = 0.0;
    double p_value = 1.0;
    std::size_t cond_size = 0;
};

/// Causal-strength matrix over the sensor channels plus the RUL channel.
struct CausalGraph {
    Eigen::MatrixXd strength;  // entries in [-1, 1], zero diagonal
    Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic> significant;
    double alpha = 0.01;

    Eigen::Index dimension() const noexcept { return strength.rows(); }
};

struct CausalPruneConfig {
    double alpha = 0.01;
    int tau_max = 0;
    double gamma = 2.0;
    /// When set, replaces the adaptive mean - gamma * std threshold.
    std::optional<double> fixed_epsilon = 0.1;
    int max_cond_set = 3;
    double epsilon_floor = 1e-9;

    void validate() const;
};

/// Two-sided p-value of a Fisher z test for a partial correlation with
/// `cond_size` conditioning variables over `n` samples.
double fisher_z_pvalue(double rho, std::size_t n, std::size_t cond_size);

/// Correlation of least-squares residuals of x and y after regressing both on [1, Z].
///
/// Z holds one conditioning variable per column (zero columns for a plain
/// Pearson correlation). Residuals with no variance yield rho = 0, p = 1.
CiResult parcorr(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                 const Eigen::Ref<const Eigen::MatrixXd>& z);

/// PC candidate selection followed by MCI re-testing over the columns of `segment` (n x V).
CausalGraph pcmci_graph(const Eigen::Ref<const Eigen::MatrixXd>& segment, const CausalPruneConfig& config);

/// Mean squared difference between two strength matrices.
double causal_fidelity(const CausalGraph& global, const CausalGraph& local);

/// Retention threshold for one (unit, RUL level) group of fidelity values.
double alignment_threshold(std::span<const double> mses, const CausalPruneConfig& config);

struct WindowFidelity {
    std::size_t window_id = 0;
    double mse = 0.0;
    double threshold = 0.0;
    bool retained = false;
};

struct CausalPruneResult {
    std::vector<std::size_t> retained;     // window ids, ascending
    std::vector<WindowFidelity> records;   // one per input window, in input order
    std::size_t group_count = 0;
};

/// Stage-1 pruning: per (unit, RUL level) group, compares every window's local
/// graph with the graph of the rows the group's windows span.
CausalPruneResult prune_causal(const WindowSet& windows, const CausalPruneConfig& config);

void write_graph(const std::filesystem::path& path, const CausalGraph& graph);
CausalGraph read_graph(const std::filesystem::path& path);
void write_fidelity_report(const std::filesystem::path& path, const CausalPruneResult& result);

}  // namespace rulprune
