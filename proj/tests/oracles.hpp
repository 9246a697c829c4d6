#pragma once

// Straightforward reference implementations used to cross-check the library.
// They favour obviousness over speed and share no code with core/.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace oracle {

inline double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    const double mx = mean(x), my = mean(y);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxy += (x[i] - mx) * (y[i] - my);
        sxx += (x[i] - mx) * (x[i] - mx);
        syy += (y[i] - my) * (y[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// Residual of y after least squares on [1, Z] via the normal equations.
inline std::vector<double> residual(const std::vector<double>& y, const std::vector<std::vector<double>>& z) {
    const std::size_t n = y.size();
    const std::size_t p = z.size() + 1;
    Eigen::MatrixXd a = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
    Eigen::VectorXd b = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
    auto reg = [&](std::size_t j, std::size_t i) { return j == 0 ? 1.0 : z[j - 1][i]; };
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t r = 0; r < p; ++r) {
            b[static_cast<Eigen::Index>(r)] += reg(r, i) * y[i];
            for (std::size_t c = 0; c < p; ++c) a(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) += reg(r, i) * reg(c, i);
        }
    }
    const Eigen::VectorXd beta = a.ldlt().solve(b);
    std::vector<double> out(n);
    for (std::size_t i = 0; i < n; ++i) {
        double fit = 0.0;
        for (std::size_t r = 0; r < p; ++r) fit += beta[static_cast<Eigen::Index>(r)] * reg(r, i);
        out[i] = y[i] - fit;
    }
    return out;
}

inline double partial_corr(const std::vector<double>& x, const std::vector<double>& y,
                           const std::vector<std::vector<double>>& z) {
    return pearson(residual(x, z), residual(y, z));
}

inline double fidelity(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
    double s = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
        for (Eigen::Index j = 0; j < a.cols(); ++j) s += (a(i, j) - b(i, j)) * (a(i, j) - b(i, j));
    }
    return s / static_cast<double>(a.size());
}

inline double entropy(const std::vector<double>& x, int bins) {
    const double lo = *std::min_element(x.begin(), x.end());
    const double hi = *std::max_element(x.begin(), x.end());
    if (hi == lo) return 0.0;
    std::vector<int> counts(static_cast<std::size_t>(bins), 0);
    for (double v : x) {
        int b = static_cast<int>((v - lo) / (hi - lo) * bins);
        if (b >= bins) b = bins - 1;
        counts[static_cast<std::size_t>(b)]++;
    }
    double h = 0.0;
    for (int c : counts) {
        if (c == 0) continue;
        const double p = static_cast<double>(c) / static_cast<double>(x.size());
        h -= p * std::log(p);
    }
    return h;
}

inline double rmse(const std::vector<double>& p, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) s += (p[i] - y[i]) * (p[i] - y[i]);
    return std::sqrt(s / static_cast<double>(p.size()));
}

inline double nasa(const std::vector<double>& p, const std::vector<double>& y) {
    double s = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double e = p[i] - y[i];
        s += e < 0 ? std::exp(-e / 13.0) - 1.0 : std::exp(e / 10.0) - 1.0;
    }
    return s;
}

inline double matern52(double x, double y, double l, double s2) {
    const double r = std::abs(x - y);
    const double a = std::sqrt(5.0) * r / l;
    return s2 * (1.0 + a + a * a / 3.0) * std::exp(-a);
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::stringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch_dir(const std::string& name) {
    auto dir = std::filesystem::temp_directory_path() / ("rulprune_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

}  // namespace oracle
