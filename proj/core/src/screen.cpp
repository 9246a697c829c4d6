#include "rulprune/screen.hpp"

#include "rulprune/errors.hpp"
#include "rulprune/io.hpp"
#include "rulprune/random.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>

namespace rulprune {

void ScreenConfig::validate() const {
    if (entropy_bins < 2 || kl_bins < 2) throw ArgumentError("histogram bin counts must be >= 2");
    if (!(kl_smoothing > 0.0)) throw ArgumentError("kl_smoothing must be positive");
    if (!(lambda >= 0.0)) throw ArgumentError("lambda must be >= 0");
    if (em_max_iters < 1) throw ArgumentError("em_max_iters must be >= 1");
    if (!(cov_reg > 0.0)) throw ArgumentError("cov_reg must be positive");
    if (target_retention && !(*target_retention > 0.0 && *target_retention <= 1.0))
        throw ArgumentError("target_retention must lie in (0, 1]");
}

namespace {

int bin_of(double x, double lo, double width, int bins) {
    if (!(width > 0.0)) return 0;
    const auto b = static_cast<long>(std::floor((x - lo) / width * bins));
    return static_cast<int>(std::clamp<long>(b, 0, bins - 1));
}

struct FeatureHistograms {
    std::array<double, 3> lo{};
    std::array<double, 3> width{};
    int bins = 0;

    FeatureHistograms(std::span<const WindowFeatures> reference, int nbins) : bins(nbins) {
        for (int d = 0; d < 3; ++d) {
            double mn = std::numeric_limits<double>::infinity();
            double mx = -std::numeric_limits<double>::infinity();
            for (const auto& f : reference) {
                mn = std::min(mn, f.f[d]);
                mx = std::max(mx, f.f[d]);
            }
            lo[static_cast<std::size_t>(d)] = mn;
            width[static_cast<std::size_t>(d)] = mx - mn;
        }
    }

    int bin(const WindowFeatures& f, int d) const {
        return bin_of(f.f[d], lo[static_cast<std::size_t>(d)], width[static_cast<std::size_t>(d)], bins);
    }
};

// Discrete KL between two histograms given as bin masses, each smoothed then renormalized.
// A histogram with zero total mass becomes uniform.
double smoothed_kl(std::span<const double> p_mass, double p_total, std::span<const double> q_mass, double q_total,
                   double smoothing) {
    // An empty side becomes the smoothed uniform histogram.
    const double bins = static_cast<double>(p_mass.size());
    const double p_norm = (p_total > 0.0 ? 1.0 : 0.0) + bins * smoothing;
    const double q_norm = (q_total > 0.0 ? 1.0 : 0.0) + bins * smoothing;
    double kl = 0.0;
    for (std::size_t b = 0; b < p_mass.size(); ++b) {
        const double p = ((p_total > 0.0 ? p_mass[b] / p_total : 0.0) + smoothing) / p_norm;
        const double q = ((q_total > 0.0 ? q_mass[b] / q_total : 0.0) + smoothing) / q_norm;
        kl += p * std::log(p / q);
    }
    return std::max(kl, 0.0);
}

// Reference histogram masses per feature dimension.
std::array<std::vector<double>, 3> reference_mass(std::span<const double> q, std::span<const WindowFeatures> features,
                                                  const FeatureHistograms& hist, KlReference reference,
                                                  double& total) {
    std::array<std::vector<double>, 3> mass;
    for (auto& m : mass) m.assign(static_cast<std::size_t>(hist.bins), 0.0);
    total = 0.0;
    for (std::size_t k = 0; k < features.size(); ++k) {
        const double w = reference == KlReference::full ? 1.0 : q[k];
        total += w;
        for (int d = 0; d < 3; ++d) mass[static_cast<std::size_t>(d)][static_cast<std::size_t>(hist.bin(features[k], d))] += w;
    }
    return mass;
}

double kl_from_counts(const std::array<std::vector<double>, 3>& retained, double retained_total,
                      const std::array<std::vector<double>, 3>& reference, double reference_total,
                      double smoothing) {
    double kl = 0.0;
    for (std::size_t d = 0; d < 3; ++d) {
        kl += smoothed_kl(retained[d], retained_total, reference[d], reference_total, smoothing);
    }
    return kl;
}

double log_det_and_mahalanobis(const Eigen::Matrix3d& cov, const Eigen::Vector3d& diff, double& mahal) {
    Eigen::LLT<Eigen::Matrix3d> llt(cov);
    if (llt.info() != Eigen::Success) throw NumericalError("gmm: covariance is not positive definite");
    const Eigen::Vector3d half = llt.matrixL().solve(diff);
    mahal = half.squaredNorm();
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

double log_sum_exp(double a, double b) {
    const double m = std::max(a, b);
    if (m == -std::numeric_limits<double>::infinity()) return m;
    return m + std::log(std::exp(a - m) + std::exp(b - m));
}

int identify_hq(const GmmModel& m) {
    if (m.means[0][2] != m.means[1][2]) return m.means[0][2] < m.means[1][2] ? 0 : 1;
    return m.weights[1] > m.weights[0] ? 1 : 0;
}

}  // namespace

double shannon_entropy(std::span<const double> samples, int bins) {
    if (samples.empty()) throw ArgumentError("shannon_entropy: no samples");
    if (bins < 1) throw ArgumentError("shannon_entropy: bins must be >= 1");
    const auto [mn, mx] = std::minmax_element(samples.begin(), samples.end());
    const double lo = *mn;
    const double width = *mx - *mn;
    if (!(width > 0.0)) return 0.0;
    std::vector<std::size_t> counts(static_cast<std::size_t>(bins), 0);
    for (double x : samples) ++counts[static_cast<std::size_t>(bin_of(x, lo, width, bins))];
    const double n = static_cast<double>(samples.size());
    double h = 0.0;
    for (auto c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / n;
        h -= p * std::log(p);
    }
    return std::max(h, 0.0);
}

WindowFeatures window_features(const Eigen::Ref<const Eigen::MatrixXd>& sensors, const ScreenConfig& config) {
    if (sensors.rows() == 0 || sensors.cols() == 0) throw ArgumentError("window_features: empty window");
    WindowFeatures out;
    const double n = static_cast<double>(sensors.rows());
    std::vector<double> column(static_cast<std::size_t>(sensors.rows()));
    for (Eigen::Index j = 0; j < sensors.cols(); ++j) {
        for (Eigen::Index i = 0; i < sensors.rows(); ++i) column[static_cast<std::size_t>(i)] = sensors(i, j);
        double mean = 0.0;
        for (double x : column) mean += x;
        mean /= n;
        double ss = 0.0;
        for (double x : column) ss += (x - mean) * (x - mean);
        out.f[0] += std::sqrt(ss / n);
        out.f[1] += mean;
        out.f[2] += shannon_entropy(column, config.entropy_bins);
    }
    out.f /= static_cast<double>(sensors.cols());
    return out;
}

WindowFeatures window_features(const Window& window, const ScreenConfig& config) {
    const auto values = window.values();
    return window_features(values.leftCols(values.cols() - 1), config);
}

double log_component_density(const Eigen::Vector3d& f, const GmmModel& model, int component) {
    const auto c = static_cast<std::size_t>(component);
    double mahal = 0.0;
    const double logdet = log_det_and_mahalanobis(model.covariances[c], f - model.means[c], mahal);
    return -0.5 * (3.0 * std::log(2.0 * std::numbers::pi) + logdet + mahal);
}

double mixture_density(const Eigen::Vector3d& f, const GmmModel& model) {
    return model.weights[0] * std::exp(log_component_density(f, model, 0)) +
           model.weights[1] * std::exp(log_component_density(f, model, 1));
}

double posterior_hq(const WindowFeatures& f, const GmmModel& model) {
    const double a = std::log(model.weights[0]) + log_component_density(f.f, model, 0);
    const double b = std::log(model.weights[1]) + log_component_density(f.f, model, 1);
    const double hq = model.hq == 0 ? a : b;
    const double other = model.hq == 0 ? b : a;
    // q = 1 / (1 + exp(other - hq)), evaluated without overflow.
    const double d = other - hq;
    if (d > 0.0) {
        const double e = std::exp(-d);
        return e / (1.0 + e);
    }
    return 1.0 / (1.0 + std::exp(d));
}

GmmFit fit_gmm(std::span<const WindowFeatures> features, const ScreenConfig& config, std::uint64_t seed) {
    config.validate();
    const std::size_t n = features.size();
    if (n < 4) throw ArgumentError("fit_gmm: need at least 4 feature vectors");
    const Eigen::Matrix3d reg = config.cov_reg * Eigen::Matrix3d::Identity();

    // Seeding: a random first centre, then the point farthest from it.
    Rng rng(seed);
    const Eigen::Vector3d c0 = features[static_cast<std::size_t>(rng.below(n))].f;
    std::size_t far = 0;
    double far_d = -1.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double d = (features[k].f - c0).squaredNorm();
        if (d > far_d) {
            far_d = d;
            far = k;
        }
    }
    const Eigen::Vector3d c1 = features[far].f;

    Eigen::MatrixXd resp(static_cast<Eigen::Index>(n), 2);
    for (std::size_t k = 0; k < n; ++k) {
        const bool second = (features[k].f - c1).squaredNorm() < (features[k].f - c0).squaredNorm();
        resp(static_cast<Eigen::Index>(k), 0) = second ? 0.0 : 1.0;
        resp(static_cast<Eigen::Index>(k), 1) = second ? 1.0 : 0.0;
    }

    GmmFit fit;
    GmmModel& m = fit.model;
    // Starting parameters, kept by a component that receives no points.
    Eigen::Vector3d pooled_mean = Eigen::Vector3d::Zero();
    for (const auto& f : features) pooled_mean += f.f;
    pooled_mean /= static_cast<double>(n);
    Eigen::Matrix3d pooled_cov = Eigen::Matrix3d::Zero();
    for (const auto& f : features) pooled_cov += (f.f - pooled_mean) * (f.f - pooled_mean).transpose();
    pooled_cov = pooled_cov / static_cast<double>(n) + reg;
    m.means = {c0, c1};
    m.covariances = {pooled_cov, pooled_cov};
    auto m_step = [&] {
        for (int c = 0; c < 2; ++c) {
            const auto cc = static_cast<std::size_t>(c);
            const double nk = resp.col(c).sum();
            if (!(nk > 1e-10)) continue;  // keep the previous parameters of an empty component
            Eigen::Vector3d mu = Eigen::Vector3d::Zero();
            for (std::size_t k = 0; k < n; ++k) mu += resp(static_cast<Eigen::Index>(k), c) * features[k].f;
            mu /= nk;
            Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
            for (std::size_t k = 0; k < n; ++k) {
                const Eigen::Vector3d d = features[k].f - mu;
                cov += resp(static_cast<Eigen::Index>(k), c) * d * d.transpose();
            }
            m.weights[cc] = nk / static_cast<double>(n);
            m.means[cc] = mu;
            m.covariances[cc] = cov / nk + reg;
        }
        const double total = m.weights[0] + m.weights[1];
        m.weights[0] /= total;
        m.weights[1] = 1.0 - m.weights[0];
    };
    auto e_step = [&] {
        double ll = 0.0;
        for (std::size_t k = 0; k < n; ++k) {
            const double a = std::log(m.weights[0]) + log_component_density(features[k].f, m, 0);
            const double b = std::log(m.weights[1]) + log_component_density(features[k].f, m, 1);
            const double lse = log_sum_exp(a, b);
            resp(static_cast<Eigen::Index>(k), 0) = std::exp(a - lse);
            resp(static_cast<Eigen::Index>(k), 1) = std::exp(b - lse);
            ll += lse;
        }
        return ll;
    };

    m_step();
    fit.log_likelihood.push_back(e_step());
    for (int it = 0; it < config.em_max_iters; ++it) {
        m_step();
        fit.log_likelihood.push_back(e_step());
        fit.iterations = it + 1;
        const auto sz = fit.log_likelihood.size();
        if (std::abs(fit.log_likelihood[sz - 1] - fit.log_likelihood[sz - 2]) < config.em_tol) break;
    }
    m.hq = identify_hq(m);
    return fit;
}

double kl_penalty(std::span<const WindowFeatures> retained, std::span<const WindowFeatures> full,
                  const ScreenConfig& config) {
    if (full.empty()) throw ArgumentError("kl_penalty: full set is empty");
    const FeatureHistograms hist(full, config.kl_bins);
    double ref_total = 0.0;
    const auto ref = reference_mass({}, full, hist, KlReference::full, ref_total);
    std::array<std::vector<double>, 3> ret;
    for (auto& r : ret) r.assign(static_cast<std::size_t>(config.kl_bins), 0.0);
    for (const auto& f : retained) {
        for (int d = 0; d < 3; ++d) ret[static_cast<std::size_t>(d)][static_cast<std::size_t>(hist.bin(f, d))] += 1.0;
    }
    return kl_from_counts(ret, static_cast<double>(retained.size()), ref, ref_total, config.kl_smoothing);
}

double threshold_objective(double theta, std::span<const double> q, std::span<const WindowFeatures> features,
                           const ScreenConfig& config) {
    if (q.size() != features.size()) throw ArgumentError("threshold_objective: q and features differ in length");
    if (features.empty()) return 0.0;
    const FeatureHistograms hist(features, config.kl_bins);
    double ref_total = 0.0;
    const auto ref = reference_mass(q, features, hist, config.kl_reference, ref_total);
    std::array<std::vector<double>, 3> ret;
    for (auto& r : ret) r.assign(static_cast<std::size_t>(config.kl_bins), 0.0);
    std::size_t count = 0;
    for (std::size_t k = 0; k < q.size(); ++k) {
        if (!(q[k] >= theta)) continue;
        ++count;
        for (int d = 0; d < 3; ++d)
            ret[static_cast<std::size_t>(d)][static_cast<std::size_t>(hist.bin(features[k], d))] += 1.0;
    }
    const double kl = kl_from_counts(ret, static_cast<double>(count), ref, ref_total, config.kl_smoothing);
    return static_cast<double>(count) - config.lambda * kl;
}

namespace {

// Counts and KL at every grid threshold; windows leave the retained set in ascending q order.
struct GridCurve {
    std::vector<double> count;
    std::vector<double> kl;
};

GridCurve grid_curve(std::span<const double> q, std::span<const WindowFeatures> features, const ScreenConfig& config,
                     int points) {
    if (q.size() != features.size()) throw ArgumentError("threshold grid: q and features differ in length");
    if (points < 2) throw ArgumentError("threshold grid: need at least 2 points");
    GridCurve curve;
    curve.count.resize(static_cast<std::size_t>(points));
    curve.kl.resize(static_cast<std::size_t>(points));
    if (features.empty()) return curve;

    const FeatureHistograms hist(features, config.kl_bins);
    double ref_total = 0.0;
    const auto ref = reference_mass(q, features, hist, config.kl_reference, ref_total);
    std::array<std::vector<double>, 3> ret;
    for (auto& r : ret) r.assign(static_cast<std::size_t>(config.kl_bins), 0.0);
    for (const auto& f : features) {
        for (int d = 0; d < 3; ++d) ret[static_cast<std::size_t>(d)][static_cast<std::size_t>(hist.bin(f, d))] += 1.0;
    }
    std::vector<std::size_t> order(q.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return q[a] < q[b]; });

    std::size_t removed = 0;
    const int last = points - 1;
    for (int g = 0; g <= last; ++g) {
        const double theta = static_cast<double>(g) / static_cast<double>(last);
        while (removed < order.size() && !(q[order[removed]] >= theta)) {
            const auto& f = features[order[removed]];
            for (int d = 0; d < 3; ++d)
                ret[static_cast<std::size_t>(d)][static_cast<std::size_t>(hist.bin(f, d))] -= 1.0;
            ++removed;
        }
        const double count = static_cast<double>(order.size() - removed);
        curve.count[static_cast<std::size_t>(g)] = count;
        curve.kl[static_cast<std::size_t>(g)] = kl_from_counts(ret, count, ref, ref_total, config.kl_smoothing);
    }
    return curve;
}

std::size_t argmax_index(const GridCurve& curve, double lambda) {
    std::size_t best = 0;
    double best_j = -std::numeric_limits<double>::infinity();
    for (std::size_t g = 0; g < curve.count.size(); ++g) {
        const double j = curve.count[g] - lambda * curve.kl[g];
        if (j > best_j) {
            best_j = j;
            best = g;
        }
    }
    return best;
}

// Smallest-error lambda such that the grid optimum keeps about `target` of the windows.
double calibrate_lambda(const GridCurve& curve, double total, double target) {
    auto retention = [&](double log_lambda) {
        return curve.count[argmax_index(curve, std::pow(10.0, log_lambda))] / total;
    };
    double lo = -6.0;  // log10 lambda
    double hi = 12.0;
    if (retention(hi) > target) {
        // Target unreachable; the strongest penalty gets closest.
        return std::abs(retention(hi) - target) < std::abs(retention(-300.0) - target) ? std::pow(10.0, hi) : 0.0;
    }
    if (retention(lo) <= target) return std::pow(10.0, lo);
    for (int it = 0; it < 80; ++it) {
        const double mid = 0.5 * (lo + hi);
        (retention(mid) > target ? lo : hi) = mid;
    }
    // The bisection ends on a break-even lambda where two thresholds tie, so step
    // off it before choosing. Ties in retention error go to stricter screening.
    const double below = lo - 1e-3;
    const double above = hi + 1e-3;
    return std::abs(retention(above) - target) <= std::abs(retention(below) - target) ? std::pow(10.0, above)
                                                                                      : std::pow(10.0, below);
}

}  // namespace

std::vector<double> threshold_objective_grid(std::span<const double> q, std::span<const WindowFeatures> features,
                                             const ScreenConfig& config, int points) {
    const GridCurve curve = grid_curve(q, features, config, points);
    std::vector<double> out(curve.count.size());
    for (std::size_t g = 0; g < out.size(); ++g) out[g] = curve.count[g] - config.lambda * curve.kl[g];
    return out;
}

ThresholdResult optimize_threshold(std::span<const double> q, std::span<const WindowFeatures> features,
                                   const ScreenConfig& config, int budget, std::uint64_t seed) {
    config.validate();
    if (q.size() != features.size()) throw ArgumentError("optimize_threshold: q and features differ in length");
    ThresholdResult result;
    if (q.empty()) return result;
    const double total = static_cast<double>(q.size());
    auto retention_at = [&](double theta) {
        return static_cast<double>(std::count_if(q.begin(), q.end(), [theta](double v) { return v >= theta; })) /
               total;
    };

    ScreenConfig effective = config;
    if (config.target_retention && config.hard_quota) {
        std::vector<double> sorted(q.begin(), q.end());
        std::sort(sorted.begin(), sorted.end(), std::greater<>());
        const auto keep = static_cast<std::size_t>(
            std::clamp<double>(std::ceil(*config.target_retention * total), 1.0, total));
        result.theta = sorted[keep - 1];
        result.lambda = config.lambda;
        result.objective = threshold_objective(result.theta, q, features, config);
        result.retention = retention_at(result.theta);
        return result;
    }
    if (config.target_retention) {
        effective.kl_reference = KlReference::posterior_weighted;
        const GridCurve curve = grid_curve(q, features, effective, 1001);
        effective.lambda = calibrate_lambda(curve, total, *config.target_retention);
    }

    const auto bo = bayes_opt(
        [&](double theta) { return threshold_objective(theta, q, features, effective); }, budget, seed);
    result.theta = bo.theta;
    result.objective = bo.value;
    result.lambda = effective.lambda;
    result.retention = retention_at(bo.theta);
    result.trace = bo.trace;
    return result;
}

std::vector<std::size_t> prune_quality(std::span<const double> q, double theta) {
    std::vector<std::size_t> kept;
    for (std::size_t k = 0; k < q.size(); ++k) {
        if (q[k] >= theta) kept.push_back(k);
    }
    return kept;
}

void write_gmm(const std::filesystem::path& path, const GmmModel& model) {
    io::Json j;
    j["weights"] = {model.weights[0], model.weights[1]};
    io::Json means = io::Json::array();
    io::Json covs = io::Json::array();
    for (int c = 0; c < 2; ++c) {
        const auto cc = static_cast<std::size_t>(c);
        means.push_back({model.means[cc][0], model.means[cc][1], model.means[cc][2]});
        io::Json cov = io::Json::array();
        for (int r = 0; r < 3; ++r) {
            cov.push_back({model.covariances[cc](r, 0), model.covariances[cc](r, 1), model.covariances[cc](r, 2)});
        }
        covs.push_back(std::move(cov));
    }
    j["means"] = std::move(means);
    j["covariances"] = std::move(covs);
    j["hq_index"] = model.hq + 1;
    io::write_json(path, j);
}

GmmModel read_gmm(const std::filesystem::path& path) {
    const auto j = io::read_json(path);
    try {
        GmmModel m;
        for (std::size_t c = 0; c < 2; ++c) {
            m.weights[c] = j.at("weights").at(c).get<double>();
            for (std::size_t r = 0; r < 3; ++r) {
                m.means[c][static_cast<Eigen::Index>(r)] = j.at("means").at(c).at(r).get<double>();
                for (std::size_t k = 0; k < 3; ++k) {
                    m.covariances[c](static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(k)) =
                        j.at("covariances").at(c).at(r).at(k).get<double>();
                }
            }
        }
        const int hq = j.at("hq_index").get<int>();
        if (hq != 1 && hq != 2) throw ConfigError("hq_index must be 1 or 2");
        m.hq = hq - 1;
        return m;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("malformed GMM file " + path.string() + ": " + e.what());
    }
}

}  // namespace rulprune
