#pragma once

#include "rulprune/io.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace rulprune {

double rmse(std::span<const double> preds, std::span<const double> labels);

/// Sum of exp(-e/13)-1 for e < 0 and exp(e/10)-1 for e >= 0, with e = pred - label.
double nasa_score(std::span<const double> preds, std::span<const double> labels);

/// Rows of the pooled (retained then discarded) features projected onto their first k principal axes.
Eigen::MatrixXd pca_project(const Eigen::MatrixXd& pooled, int k = 2);

struct SeparabilityConfig {
    int epochs = 50;
};

/// Balanced training accuracy of a seeded perceptron on the 2-D PCA projection.
/// Absent when either set has fewer than 2 rows.
std::optional<double> separability(const Eigen::MatrixXd& retained, const Eigen::MatrixXd& discarded,
                                   std::uint64_t seed, const SeparabilityConfig& config = {});

struct RetentionSummary {
    std::size_t total = 0;
    std::size_t retained = 0;
    std::size_t causal_removed = 0;
    std::size_t quality_removed = 0;
    double fraction = 1.0;
};

/// causal_kept[k]: window k survived stage 1; retained[k]: window k survived both stages.
RetentionSummary retention_stats(const std::vector<bool>& causal_kept, const std::vector<bool>& retained);

struct EvalReport {
    double rmse = 0.0;
    double nasa_score = 0.0;
    std::size_t n = 0;
    double retention_fraction = 1.0;
    std::optional<double> separability_accuracy;
};

EvalReport evaluate(std::span<const double> preds, std::span<const double> labels, double retention_fraction = 1.0);

io::Json to_json(const EvalReport& report);
io::Json to_json(const RetentionSummary& summary);

/// Line-delimited {pc1, pc2, retained} rows.
void write_scatter(const std::filesystem::path& path, const Eigen::MatrixXd& projection,
                   const std::vector<bool>& retained);

}  // namespace rulprune
