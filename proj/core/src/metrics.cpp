#include "rulprune/metrics.hpp"

#include "rulprune/errors.hpp"
#include "rulprune/random.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <array>
#include <cmath>
#include <numeric>

namespace rulprune {

namespace {

void check_aligned(std::span<const double> preds, std::span<const double> labels, const char* what) {
    if (preds.empty()) throw ArgumentError(std::string(what) + ": empty input");
    if (preds.size() != labels.size()) throw ArgumentError(std::string(what) + ": preds and labels differ in length");
}

double balanced_accuracy(const Eigen::MatrixXd& x, const std::vector<int>& y, const Eigen::Vector2d& w, double b) {
    std::array<std::size_t, 2> hit{};
    std::array<std::size_t, 2> count{};
    for (Eigen::Index i = 0; i < x.rows(); ++i) {
        const int cls = y[static_cast<std::size_t>(i)] > 0 ? 1 : 0;
        const int pred = x.row(i).dot(w) + b > 0.0 ? 1 : 0;
        ++count[static_cast<std::size_t>(cls)];
        if (pred == cls) ++hit[static_cast<std::size_t>(cls)];
    }
    return 0.5 * (static_cast<double>(hit[0]) / static_cast<double>(count[0]) +
                  static_cast<double>(hit[1]) / static_cast<double>(count[1]));
}

}  // namespace

double rmse(std::span<const double> preds, std::span<const double> labels) {
    check_aligned(preds, labels, "rmse");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) s += (preds[i] - labels[i]) * (preds[i] - labels[i]);
    return std::sqrt(s / static_cast<double>(preds.size()));
}

double nasa_score(std::span<const double> preds, std::span<const double> labels) {
    check_aligned(preds, labels, "nasa_score");
    double s = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double e = preds[i] - labels[i];
        s += e < 0.0 ? std::expm1(-e / 13.0) : std::expm1(e / 10.0);
    }
    return s;
}

Eigen::MatrixXd pca_project(const Eigen::MatrixXd& pooled, int k) {
    if (pooled.rows() < 1 || k < 1 || k > pooled.cols()) throw ArgumentError("pca_project: bad shape");
    const Eigen::RowVectorXd mean = pooled.colwise().mean();
    const Eigen::MatrixXd centred = pooled.rowwise() - mean;
    const Eigen::MatrixXd cov = centred.transpose() * centred / static_cast<double>(pooled.rows());
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    // Eigenvalues ascend; take the last k columns in descending order with a deterministic sign.
    Eigen::MatrixXd axes(pooled.cols(), k);
    for (int j = 0; j < k; ++j) {
        Eigen::VectorXd v = eig.eigenvectors().col(pooled.cols() - 1 - j);
        Eigen::Index arg = 0;
        v.cwiseAbs().maxCoeff(&arg);
        if (v[arg] < 0.0) v = -v;
        axes.col(j) = v;
    }
    return centred * axes;
}

std::optional<double> separability(const Eigen::MatrixXd& retained, const Eigen::MatrixXd& discarded,
                                   std::uint64_t seed, const SeparabilityConfig& config) {
    if (retained.rows() < 2 || discarded.rows() < 2) return std::nullopt;
    if (retained.cols() != discarded.cols()) throw ArgumentError("separability: feature dimensions differ");
    const Eigen::Index n = retained.rows() + discarded.rows();

    // Sort the pooled points so the result does not depend on which set came first.
    std::vector<std::pair<std::vector<double>, int>> rows;
    rows.reserve(static_cast<std::size_t>(n));
    auto push = [&](const Eigen::MatrixXd& m, int label) {
        for (Eigen::Index i = 0; i < m.rows(); ++i) {
            std::vector<double> r(static_cast<std::size_t>(m.cols()));
            for (Eigen::Index j = 0; j < m.cols(); ++j) r[static_cast<std::size_t>(j)] = m(i, j);
            rows.emplace_back(std::move(r), label);
        }
    };
    push(retained, 1);
    push(discarded, -1);
    std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) { return a.first < b.first; });

    Eigen::MatrixXd pooled(n, retained.cols());
    std::vector<int> y(static_cast<std::size_t>(n));
    for (Eigen::Index i = 0; i < n; ++i) {
        const auto& r = rows[static_cast<std::size_t>(i)];
        for (Eigen::Index j = 0; j < pooled.cols(); ++j) pooled(i, j) = r.first[static_cast<std::size_t>(j)];
        y[static_cast<std::size_t>(i)] = r.second;
    }
    const int k = static_cast<int>(std::min<Eigen::Index>(2, pooled.cols()));
    Eigen::MatrixXd proj = Eigen::MatrixXd::Zero(n, 2);
    proj.leftCols(k) = pca_project(pooled, k);
    for (int j = 0; j < 2; ++j) {
        const double sd = std::sqrt(proj.col(j).squaredNorm() / static_cast<double>(n));
        if (sd > 0.0) proj.col(j) /= sd;
    }

    // Pocket perceptron: keep the weights with the best balanced accuracy seen after any epoch.
    Eigen::Vector2d w = Eigen::Vector2d::Zero();
    double b = 0.0;
    double best = balanced_accuracy(proj, y, w, b);
    std::vector<std::size_t> order(static_cast<std::size_t>(n));
    std::iota(order.begin(), order.end(), 0);
    Rng rng(seed);
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        rng.shuffle(std::span<std::size_t>(order));
        for (std::size_t i : order) {
            const auto yi = static_cast<double>(y[i]);
            const auto idx = static_cast<Eigen::Index>(i);
            if (yi * (proj.row(idx).dot(w) + b) <= 0.0) {
                w += yi * proj.row(idx).transpose();
                b += yi;
            }
        }
        best = std::max(best, balanced_accuracy(proj, y, w, b));
    }
    return best;
}

RetentionSummary retention_stats(const std::vector<bool>& causal_kept, const std::vector<bool>& retained) {
    if (causal_kept.size() != retained.size()) throw ArgumentError("retention_stats: flag vectors differ in length");
    if (retained.empty()) throw ArgumentError("retention_stats: empty report");
    RetentionSummary s;
    s.total = retained.size();
    for (std::size_t k = 0; k < retained.size(); ++k) {
        if (retained[k] && !causal_kept[k]) throw ArgumentError("retention_stats: retained window failed stage 1");
        if (!causal_kept[k]) {
            ++s.causal_removed;
        } else if (!retained[k]) {
            ++s.quality_removed;
        } else {
            ++s.retained;
        }
    }
    s.fraction = static_cast<double>(s.retained) / static_cast<double>(s.total);
    return s;
}

EvalReport evaluate(std::span<const double> preds, std::span<const double> labels, double retention_fraction) {
    EvalReport r;
    r.rmse = rmse(preds, labels);
    r.nasa_score = nasa_score(preds, labels);
    r.n = preds.size();
    r.retention_fraction = retention_fraction;
    return r;
}

io::Json to_json(const EvalReport& report) {
    io::Json j;
    j["rmse"] = report.rmse;
    j["nasa_score"] = report.nasa_score;
    j["n"] = report.n;
    j["retention_fraction"] = report.retention_fraction;
    j["separability_accuracy"] = report.separability_accuracy ? io::Json(*report.separability_accuracy) : io::Json();
    return j;
}

io::Json to_json(const RetentionSummary& s) {
    return {{"total", s.total},
            {"retained", s.retained},
            {"fraction", s.fraction},
            {"causal_removed", s.causal_removed},
            {"quality_removed", s.quality_removed}};
}

void write_scatter(const std::filesystem::path& path, const Eigen::MatrixXd& projection,
                   const std::vector<bool>& retained) {
    if (static_cast<std::size_t>(projection.rows()) != retained.size() || projection.cols() < 2) {
        throw ArgumentError("write_scatter: projection and flags disagree");
    }
    std::vector<io::Json> lines;
    lines.reserve(retained.size());
    for (std::size_t i = 0; i < retained.size(); ++i) {
        const auto r = static_cast<Eigen::Index>(i);
        lines.push_back({{"pc1", projection(r, 0)}, {"pc2", projection(r, 1)}, {"retained", retained[i]}});
    }
    io::write_jsonl(path, lines);
}

}  // namespace rulprune
