#pragma once

#include "rulprune/gp_optimizer.hpp"
#include "rulprune/series.hpp"

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <vector>

namespace rulprune {

/// [std, mean, entropy] of a window's sensor channels, each averaged across channels.
struct WindowFeatures {
    Eigen::Vector3d f = Eigen::Vector3d::Zero();

    double std_dev() const noexcept { return f[0]; }
    double mean() const noexcept { return f[1]; }
    double entropy() const noexcept { return f[2]; }
};

/// Distribution the retained features are compared against in the threshold objective.
enum class KlReference {
    full,                ///< every window, equally weighted
    posterior_weighted,  ///< every window, weighted by its high-quality posterior
};

struct ScreenConfig {
    int entropy_bins = 16;
    double lambda = 1.0;
    int em_max_iters = 200;
    double em_tol = 1e-6;
    double cov_reg = 1e-6;
    int kl_bins = 32;
    double kl_smoothing = 1e-6;
    std::optional<double> target_retention = 0.9;
    /// Use the q quantile matching target_retention instead of calibrating lambda.
    bool hard_quota = false;
    KlReference kl_reference = KlReference::full;

    void validate() const;
};

struct GmmModel {
    std::array<double, 2> weights{0.5, 0.5};
    std::array<Eigen::Vector3d, 2> means{Eigen::Vector3d::Zero(), Eigen::Vector3d::Zero()};
    std::array<Eigen::Matrix3d, 2> covariances{Eigen::Matrix3d::Identity(), Eigen::Matrix3d::Identity()};
    int hq = 0;  // 0-based index of the high-quality component
};

struct GmmFit {
    GmmModel model;
    std::vector<double> log_likelihood;  // one entry per E-step
    int iterations = 0;
};

double shannon_entropy(std::span<const double> samples, int bins);

WindowFeatures window_features(const Window& window, const ScreenConfig& config);
WindowFeatures window_features(const Eigen::Ref<const Eigen::MatrixXd>& sensors, const ScreenConfig& config);

/// Two-component EM fit. Requires at least four feature vectors.
GmmFit fit_gmm(std::span<const WindowFeatures> features, const ScreenConfig& config, std::uint64_t seed);

double log_component_density(const Eigen::Vector3d& f, const GmmModel& model, int component);
double mixture_density(const Eigen::Vector3d& f, const GmmModel& model);

/// Posterior probability of the model's high-quality component.
double posterior_hq(const WindowFeatures& f, const GmmModel& model);

/// Summed per-dimension histogram KL(retained || full) with shared edges over the full range.
double kl_penalty(std::span<const WindowFeatures> retained, std::span<const WindowFeatures> full,
                  const ScreenConfig& config);

/// count{q >= theta} - lambda * KL(retained || reference).
double threshold_objective(double theta, std::span<const double> q, std::span<const WindowFeatures> features,
                           const ScreenConfig& config);

/// Objective at theta = i / (points - 1) for every i, from incrementally maintained counts.
std::vector<double> threshold_objective_grid(std::span<const double> q, std::span<const WindowFeatures> features,
                                             const ScreenConfig& config, int points = 1001);

struct ThresholdResult {
    double theta = 0.0;
    double objective = 0.0;
    double lambda = 0.0;          // lambda actually optimized with
    double retention = 1.0;       // fraction with q >= theta
    std::vector<TracePoint> trace;  // optimizer evaluations
};

ThresholdResult optimize_threshold(std::span<const double> q, std::span<const WindowFeatures> features,
                                   const ScreenConfig& config, int budget, std::uint64_t seed);

/// Indices with q >= theta.
std::vector<std::size_t> prune_quality(std::span<const double> q, double theta);

void write_gmm(const std::filesystem::path& path, const GmmModel& model);
GmmModel read_gmm(const std::filesystem::path& path);

}  // namespace rulprune
