#pragma once

#include "rulprune/causal.hpp"

#include <Eigen/Core>

#include <span>

namespace rulprune::detail {

/// Partial-correlation tests answered from one sample covariance matrix.
///
/// Residual covariance of (a, b) given S is Cov_ab - Cov_aS Cov_SS^+ Cov_Sb,
/// which equals the covariance of least-squares residuals with an intercept.
class CovarianceCi {
public:
    explicit CovarianceCi(const Eigen::Ref<const Eigen::MatrixXd>& data);

    CiResult test(int a, int b, std::span<const int> cond) const;

    std::size_t samples() const noexcept { return n_; }
    bool is_constant(int v) const noexcept { return constant_[static_cast<std::size_t>(v)]; }

private:
    Eigen::MatrixXd cov_;
    std::vector<bool> constant_;
    std::size_t n_ = 0;
};

}  // namespace rulprune::detail
