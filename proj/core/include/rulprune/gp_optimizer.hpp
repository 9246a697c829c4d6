#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <vector>

namespace rulprune {

/// Matern 5/2 covariance between two scalar inputs.
double matern52(double x, double y, double lengthscale, double signal_variance);

/// Observations and hyperparameters of a zero-mean 1-D Gaussian process.
struct GpModel {
    std::vector<double> inputs;
    std::vector<double> values;
    double lengthscale = 0.2;
    double signal_variance = 1.0;
    double noise_variance = 0.0;
};

struct GpPrediction {
    double mean = 0.0;
    double variance = 0.0;
};

/// Factorizes the kernel matrix once; answers many posterior queries.
class GpRegressor {
public:
    /// Throws NumericalError if the kernel matrix stays indefinite after the largest jitter.
    explicit GpRegressor(GpModel model);

    GpPrediction predict(double x) const;
    double log_marginal_likelihood() const;
    double jitter() const noexcept { return jitter_; }

private:
    GpModel model_;
    Eigen::LLT<Eigen::MatrixXd> llt_;
    Eigen::VectorXd alpha_;
    double jitter_ = 0.0;
};

GpPrediction gp_posterior(const GpModel& model, double x);

/// Expected improvement for maximization. Zero variance gives max(mean - best, 0).
double expected_improvement(double mean, double variance, double best_so_far);

struct BayesOptConfig {
    int grid_points = 1001;
    std::vector<double> lengthscales{0.03, 0.06, 0.1, 0.2, 0.4, 0.8};
    std::vector<double> signal_variances{0.25, 1.0, 4.0};
    double noise_variance = 1e-6;
};

struct TracePoint {
    int iteration = 0;
    double theta = 0.0;
    double value = 0.0;
};

struct BayesOptResult {
    double theta = 0.0;
    double value = 0.0;
    std::vector<TracePoint> trace;
};

/// Maximizes `objective` over [0, 1]: five fixed design points, then expected
/// improvement on a grid until `budget` distinct evaluations have been spent.
/// Returns the best evaluated point.
BayesOptResult bayes_opt(const std::function<double(double)>& objective, int budget, std::uint64_t seed,
                         const BayesOptConfig& config = {});

void write_trace(const std::filesystem::path& path, const std::vector<TracePoint>& trace);

}  // namespace rulprune
