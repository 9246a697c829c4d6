#include "ci_internal.hpp"
#include "rulprune/errors.hpp"

#include <Eigen/Cholesky>
#include <Eigen/Eigenvalues>
#include <Eigen/QR>

#include <algorithm>
#include <cmath>

namespace rulprune {

namespace {

// Residual variance at or below this fraction of the raw variance counts as zero.
// The covariance route subtracts two nearly equal numbers, so it needs a looser bound.
constexpr double kResidualTolQr = 1e-20;
constexpr double kResidualTolCov = 1e-10;

double correlation_or_zero(double sxy, double sxx, double syy, double raw_xx, double raw_yy, double tol) {
    if (!(sxx > tol * raw_xx) || !(syy > tol * raw_yy) || sxx <= 0.0 || syy <= 0.0) return 0.0;
    return std::clamp(sxy / std::sqrt(sxx * syy), -1.0, 1.0);
}

}  // namespace

double fisher_z_pvalue(double rho, std::size_t n, std::size_t cond_size) {
    if (n < cond_size + 4) return 1.0;
    const double dof = static_cast<double>(n - cond_size - 3);
    const double r = std::clamp(rho, -1.0, 1.0);
    if (std::abs(r) >= 1.0) return 0.0;
    const double z = std::atanh(r) * std::sqrt(dof);
    return std::clamp(std::erfc(std::abs(z) / std::sqrt(2.0)), 0.0, 1.0);
}

CiResult parcorr(const Eigen::Ref<const Eigen::VectorXd>& x, const Eigen::Ref<const Eigen::VectorXd>& y,
                 const Eigen::Ref<const Eigen::MatrixXd>& z) {
    const Eigen::Index n = x.size();
    if (y.size() != n || (z.cols() > 0 && z.rows() != n))
        throw ArgumentError("parcorr: sequences must have equal length");
    const auto k = static_cast<std::size_t>(z.cols());
    if (static_cast<std::size_t>(n) < k + 3) throw ArgumentError("parcorr: need n >= |Z| + 3 samples");

    CiResult out;
    out.cond_size = k;

    const Eigen::VectorXd xc = x.array() - x.mean();
    const Eigen::VectorXd yc = y.array() - y.mean();
    Eigen::VectorXd rx = xc;
    Eigen::VectorXd ry = yc;
    if (k > 0) {
        Eigen::MatrixXd zc = z.rowwise() - z.colwise().mean();
        Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(zc);
        rx = xc - zc * qr.solve(xc);
        ry = yc - zc * qr.solve(yc);
    }
    out.rho = correlation_or_zero(rx.dot(ry), rx.squaredNorm(), ry.squaredNorm(), xc.squaredNorm(),
                                  yc.squaredNorm(), kResidualTolQr);
    out.p_value = out.rho == 0.0 ? 1.0 : fisher_z_pvalue(out.rho, static_cast<std::size_t>(n), k);
    return out;
}

namespace detail {

CovarianceCi::CovarianceCi(const Eigen::Ref<const Eigen::MatrixXd>& data)
    : n_(static_cast<std::size_t>(data.rows())) {
    const Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
    cov_ = centered.transpose() * centered;
    constant_.resize(static_cast<std::size_t>(data.cols()));
    for (Eigen::Index j = 0; j < data.cols(); ++j) {
        constant_[static_cast<std::size_t>(j)] = !(centered.col(j).cwiseAbs().maxCoeff() > 0.0);
    }
}

CiResult CovarianceCi::test(int a, int b, std::span<const int> cond) const {
    CiResult out;
    out.cond_size = cond.size();
    if (is_constant(a) || is_constant(b) || n_ < cond.size() + 3) return out;

    const double raw_aa = cov_(a, a);
    const double raw_bb = cov_(b, b);
    double saa = raw_aa;
    double sbb = raw_bb;
    double sab = cov_(a, b);

    const auto k = static_cast<Eigen::Index>(cond.size());
    if (k > 0) {
        Eigen::MatrixXd css(k, k);
        Eigen::MatrixXd csx(k, 2);
        for (Eigen::Index r = 0; r < k; ++r) {
            for (Eigen::Index c = 0; c < k; ++c) css(r, c) = cov_(cond[r], cond[c]);
            csx(r, 0) = cov_(cond[r], a);
            csx(r, 1) = cov_(cond[r], b);
        }
        Eigen::MatrixXd proj;
        Eigen::LLT<Eigen::MatrixXd> llt(css);
        const double scale = std::max(css.diagonal().maxCoeff(), 1e-300);
        bool ok = llt.info() == Eigen::Success;
        if (ok) {
            const Eigen::MatrixXd l = llt.matrixL();
            ok = l.diagonal().minCoeff() > 1e-7 * std::sqrt(scale);
        }
        if (ok) {
            const Eigen::MatrixXd half = llt.matrixL().solve(csx);
            proj = half.transpose() * half;
        } else {
            // Collinear or constant conditioners: minimum-norm projection.
            Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(css);
            const Eigen::VectorXd& ev = eig.eigenvalues();
            Eigen::VectorXd inv = Eigen::VectorXd::Zero(k);
            for (Eigen::Index i = 0; i < k; ++i) {
                if (ev(i) > 1e-12 * scale) inv(i) = 1.0 / ev(i);
            }
            const Eigen::MatrixXd t = eig.eigenvectors().transpose() * csx;
            proj = t.transpose() * inv.asDiagonal() * t;
        }
        saa -= proj(0, 0);
        sbb -= proj(1, 1);
        sab -= proj(0, 1);
    }
    out.rho = correlation_or_zero(sab, saa, sbb, raw_aa, raw_bb, kResidualTolCov);
    out.p_value = out.rho == 0.0 ? 1.0 : fisher_z_pvalue(out.rho, n_, cond.size());
    return out;
}

}  // namespace detail
}  // namespace rulprune
