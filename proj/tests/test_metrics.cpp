#include "oracles.hpp"

#include "rulprune/errors.hpp"
#include "rulprune/metrics.hpp"
#include "rulprune/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

using namespace rulprune;
using Eigen::MatrixXd;

namespace {

MatrixXd cloud(Eigen::Index n, double shift, Rng& rng) {
    MatrixXd m(n, 3);
    for (Eigen::Index r = 0; r < n; ++r) {
        m(r, 0) = rng.normal() + shift;
        m(r, 1) = rng.normal();
        m(r, 2) = 0.5 * rng.normal();
    }
    return m;
}

}  // namespace

TEST(Rmse, KnownValues) {
    const std::vector<double> a{1, 2}, b{3, 2};
    EXPECT_EQ(rmse(a, a), 0.0);
    EXPECT_NEAR(rmse(a, b), std::sqrt(2.0), 1e-15);
    EXPECT_THROW(rmse(std::vector<double>{}, std::vector<double>{}), ArgumentError);
    EXPECT_THROW(rmse(a, std::vector<double>{1.0}), ArgumentError);
}

TEST(Rmse, OracleAndPairedPermutation) {
    Rng rng(1);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> p(10 + t), y(p.size());
        for (std::size_t i = 0; i < p.size(); ++i) {
            p[i] = rng.normal() * 50;
            y[i] = rng.normal() * 50;
        }
        EXPECT_NEAR(rmse(p, y), oracle::rmse(p, y), 1e-12);
        std::vector<std::size_t> perm(p.size());
        std::iota(perm.begin(), perm.end(), 0);
        rng.shuffle(std::span<std::size_t>(perm));
        std::vector<double> pp, yy;
        for (auto i : perm) {
            pp.push_back(p[i]);
            yy.push_back(y[i]);
        }
        EXPECT_NEAR(rmse(pp, yy), rmse(p, y), 1e-12);
    }
}

TEST(NasaScore, KnownValues) {
    const std::vector<double> y{50.0};
    EXPECT_EQ(nasa_score(y, y), 0.0);
    EXPECT_NEAR(nasa_score(std::vector<double>{60.0}, y), std::exp(1.0) - 1, 1e-12);
    EXPECT_NEAR(nasa_score(std::vector<double>{63.0}, y), 2.66930, 1e-5);
    EXPECT_NEAR(nasa_score(std::vector<double>{37.0}, y), 1.71828, 1e-5);
    EXPECT_THROW(nasa_score(std::vector<double>{}, std::vector<double>{}), ArgumentError);
}

TEST(NasaScore, AsymmetricMonotoneAndOracle) {
    const std::vector<double> zero{0.0};
    double prev_pos = 0.0, prev_neg = 0.0;
    for (int k = 1; k <= 100; ++k) {
        const double e = 0.5 * k;
        const double pos = nasa_score(std::vector<double>{e}, zero);
        const double neg = nasa_score(std::vector<double>{-e}, zero);
        EXPECT_GT(pos, neg);
        EXPECT_GT(pos, prev_pos);
        EXPECT_GT(neg, prev_neg);
        prev_pos = pos;
        prev_neg = neg;
    }
    Rng rng(2);
    for (int t = 0; t < 50; ++t) {
        std::vector<double> p(20), y(20);
        for (std::size_t i = 0; i < 20; ++i) {
            p[i] = rng.uniform(0, 150);
            y[i] = rng.uniform(0, 150);
        }
        const double s = nasa_score(p, y);
        EXPECT_NEAR(s, oracle::nasa(p, y), 1e-9 * std::max(1.0, s));
        EXPECT_GE(s, 0.0);
    }
}

TEST(Separability, ChanceForSameDistribution) {
    for (std::uint64_t seed = 0; seed < 5; ++seed) {
        Rng rng(seed);
        const auto acc = separability(cloud(300, 0.0, rng), cloud(300, 0.0, rng), seed);
        ASSERT_TRUE(acc.has_value());
        EXPECT_GE(*acc, 0.4);
        EXPECT_LE(*acc, 0.65);
    }
}

TEST(Separability, SeparatedClusters) {
    Rng rng(3);
    const auto acc = separability(cloud(200, 0.0, rng), cloud(200, 10.0, rng), 1);
    ASSERT_TRUE(acc.has_value());
    EXPECT_GE(*acc, 0.99);
}

TEST(Separability, SymmetricAndAbsentForTinySets) {
    Rng rng(4);
    const MatrixXd a = cloud(150, 0.0, rng), b = cloud(90, 1.5, rng);
    EXPECT_EQ(separability(a, b, 2), separability(b, a, 2));
    EXPECT_FALSE(separability(a, cloud(1, 0.0, rng), 2).has_value());
}

TEST(Pca, ProjectionIsCenteredAndOrdered) {
    Rng rng(5);
    MatrixXd pooled = cloud(400, 0.0, rng);
    pooled.col(1) *= 5.0;
    const MatrixXd p = pca_project(pooled, 2);
    ASSERT_EQ(p.cols(), 2);
    EXPECT_NEAR(p.col(0).mean(), 0.0, 1e-10);
    const double v0 = p.col(0).squaredNorm(), v1 = p.col(1).squaredNorm();
    EXPECT_GE(v0, v1);
    EXPECT_NEAR(p.col(0).dot(p.col(1)), 0.0, 1e-8 * v0);
}

TEST(RetentionStats, NothingPruned) {
    const std::vector<bool> all(10, true);
    const auto s = retention_stats(all, all);
    EXPECT_EQ(s.fraction, 1.0);
    EXPECT_EQ(s.causal_removed + s.quality_removed, 0u);
}

TEST(RetentionStats, FullScaleFixture) {
    // Full-scale sample counts: 441333 windows, 44539 retained after both stages.
    const std::size_t total = 441333, stage1 = 49488, kept = 44539;
    std::vector<bool> causal(total, false), retained(total, false);
    for (std::size_t i = 0; i < stage1; ++i) causal[i * 8] = true;
    for (std::size_t i = 0; i < kept; ++i) retained[i * 8] = true;
    const auto s = retention_stats(causal, retained);
    EXPECT_EQ(s.total, total);
    EXPECT_EQ(s.retained, kept);
    EXPECT_NEAR(s.fraction, 0.1009, 5e-5);
    EXPECT_EQ(s.causal_removed, total - stage1);
    EXPECT_EQ(s.quality_removed, stage1 - kept);
    EXPECT_EQ(s.causal_removed + s.quality_removed, total - s.retained);
}

TEST(Evaluate, ReportFields) {
    const std::vector<double> p{10, 20, 30}, y{12, 20, 25};
    const auto r = evaluate(p, y, 0.25);
    EXPECT_EQ(r.n, 3u);
    EXPECT_EQ(r.rmse, rmse(p, y));
    EXPECT_EQ(r.nasa_score, nasa_score(p, y));
    const auto j = to_json(r);
    EXPECT_EQ(j.at("retention_fraction").get<double>(), 0.25);
    EXPECT_EQ(j.at("n").get<std::size_t>(), 3u);
}
