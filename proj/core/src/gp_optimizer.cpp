#include "rulprune/gp_optimizer.hpp"

#include "rulprune/errors.hpp"
#include "rulprune/io.hpp"
#include "rulprune/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numbers>
#include <optional>

namespace rulprune {

double matern52(double x, double y, double lengthscale, double signal_variance) {
    const double r = std::abs(x - y) / lengthscale;
    const double s5r = std::sqrt(5.0) * r;
    return signal_variance * (1.0 + s5r + 5.0 * r * r / 3.0) * std::exp(-s5r);
}

GpRegressor::GpRegressor(GpModel model) : model_(std::move(model)) {
    const auto n = static_cast<Eigen::Index>(model_.inputs.size());
    if (n == 0) throw ArgumentError("gp: at least one observation is required");
    if (model_.values.size() != model_.inputs.size()) throw ArgumentError("gp: inputs and values differ in length");
    if (!(model_.lengthscale > 0.0) || !(model_.signal_variance > 0.0) || model_.noise_variance < 0.0)
        throw ArgumentError("gp: invalid hyperparameters");

    Eigen::MatrixXd k(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j <= i; ++j) {
            k(i, j) = k(j, i) = matern52(model_.inputs[static_cast<std::size_t>(i)],
                                         model_.inputs[static_cast<std::size_t>(j)], model_.lengthscale,
                                         model_.signal_variance);
        }
    }
    k.diagonal().array() += model_.noise_variance;

    // Exact factorization first; jitter only when that fails.
    bool ok = false;
    for (double jitter : {0.0, 1e-10, 1e-9, 1e-8, 1e-7, 1e-6}) {
        Eigen::MatrixXd kj = k;
        kj.diagonal().array() += jitter * model_.signal_variance;
        llt_.compute(kj);
        if (llt_.info() == Eigen::Success && llt_.matrixL().toDenseMatrix().diagonal().minCoeff() > 0.0) {
            jitter_ = jitter;
            ok = true;
            break;
        }
    }
    if (!ok) throw NumericalError("gp: kernel matrix not positive definite after maximum jitter");
    const Eigen::Map<const Eigen::VectorXd> y(model_.values.data(), n);
    alpha_ = llt_.solve(y);
}

GpPrediction GpRegressor::predict(double x) const {
    const auto n = static_cast<Eigen::Index>(model_.inputs.size());
    Eigen::VectorXd ks(n);
    for (Eigen::Index i = 0; i < n; ++i) {
        ks(i) = matern52(x, model_.inputs[static_cast<std::size_t>(i)], model_.lengthscale, model_.signal_variance);
    }
    GpPrediction p;
    p.mean = ks.dot(alpha_);
    const Eigen::VectorXd v = llt_.matrixL().solve(ks);
    p.variance = std::max(0.0, model_.signal_variance - v.squaredNorm());
    return p;
}

double GpRegressor::log_marginal_likelihood() const {
    const auto n = static_cast<Eigen::Index>(model_.inputs.size());
    const Eigen::Map<const Eigen::VectorXd> y(model_.values.data(), n);
    const double logdet = 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
    return -0.5 * y.dot(alpha_) - 0.5 * logdet - 0.5 * static_cast<double>(n) * std::log(2.0 * std::numbers::pi);
}

GpPrediction gp_posterior(const GpModel& model, double x) { return GpRegressor(model).predict(x); }

double expected_improvement(double mean, double variance, double best_so_far) {
    const double gap = mean - best_so_far;
    if (!(variance > 0.0)) return std::max(gap, 0.0);
    const double sd = std::sqrt(variance);
    const double z = gap / sd;
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi);
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    return std::max(0.0, gap * cdf + sd * pdf);
}

BayesOptResult bayes_opt(const std::function<double(double)>& objective, int budget, std::uint64_t seed,
                         const BayesOptConfig& config) {
    if (budget < 5) throw ArgumentError("bayes_opt: budget must be >= 5");
    if (config.grid_points < 5) throw ArgumentError("bayes_opt: grid needs at least 5 points");
    const int last = config.grid_points - 1;
    budget = std::min(budget, config.grid_points);
    auto theta_of = [last](int i) { return static_cast<double>(i) / static_cast<double>(last); };

    Rng rng(seed);
    BayesOptResult result;
    std::map<int, double> cache;  // grid index -> value

    auto evaluate = [&](int i) {
        const double theta = theta_of(i);
        double value = 0.0;
        try {
            value = objective(theta);
        } catch (const std::exception& e) {
            throw OptimizationError(std::string("objective failed: ") + e.what(), theta);
        }
        if (!std::isfinite(value)) throw OptimizationError("objective returned a non-finite value", theta);
        cache.emplace(i, value);
        result.trace.push_back({static_cast<int>(result.trace.size()), theta, value});
    };

    for (int k = 0; k < 5; ++k) {
        const int i = static_cast<int>(std::lround(0.25 * k * last));
        if (!cache.contains(i)) evaluate(i);
    }

    while (static_cast<int>(cache.size()) < budget) {
        std::vector<double> xs;
        std::vector<double> ys;
        for (const auto& [i, v] : cache) {
            xs.push_back(theta_of(i));
            ys.push_back(v);
        }
        const double n = static_cast<double>(ys.size());
        double mean = 0.0;
        for (double y : ys) mean += y;
        mean /= n;
        double var = 0.0;
        for (double y : ys) var += (y - mean) * (y - mean);
        const double sd = std::sqrt(var / n);
        const double scale = sd > 0.0 ? sd : 1.0;
        for (double& y : ys) y = (y - mean) / scale;
        const double best = *std::max_element(ys.begin(), ys.end());

        // Hyperparameters by maximum marginal likelihood over the grid.
        std::optional<GpRegressor> gp;
        double best_lml = -std::numeric_limits<double>::infinity();
        for (double ls : config.lengthscales) {
            for (double sv : config.signal_variances) {
                GpRegressor candidate(GpModel{xs, ys, ls, sv, config.noise_variance});
                const double lml = candidate.log_marginal_likelihood();
                if (lml > best_lml) {
                    best_lml = lml;
                    gp.emplace(std::move(candidate));
                }
            }
        }

        double best_ei = -1.0;
        std::vector<int> ties;
        for (int i = 0; i <= last; ++i) {
            if (cache.contains(i)) continue;
            const auto p = gp->predict(theta_of(i));
            const double ei = expected_improvement(p.mean, p.variance, best);
            if (ei > best_ei) {
                best_ei = ei;
                ties.assign(1, i);
            } else if (ei == best_ei) {
                ties.push_back(i);
            }
        }
        if (ties.empty()) break;
        evaluate(ties[static_cast<std::size_t>(rng.below(ties.size()))]);
    }

    result.value = -std::numeric_limits<double>::infinity();
    for (const auto& point : result.trace) {
        if (point.value > result.value) {
            result.value = point.value;
            result.theta = point.theta;
        }
    }
    return result;
}

void write_trace(const std::filesystem::path& path, const std::vector<TracePoint>& trace) {
    std::vector<io::Json> records;
    records.reserve(trace.size());
    for (const auto& p : trace) records.push_back({{"iteration", p.iteration}, {"theta", p.theta}, {"J", p.value}});
    io::write_jsonl(path, records);
}

}  // namespace rulprune
