#include "fixtures.hpp"
#include "oracles.hpp"

#include "curvestream/curves.hpp"
#include "curvestream/errors.hpp"
#include "curvestream/simbench.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace curvestream;

TEST(Simulation, TrueCurveAtMidpoint)
{
    EXPECT_NEAR(true_global_curve(0.5), 3.0 * std::sqrt(0.4) * 0.5, 1e-15);
    EXPECT_NEAR(true_global_curve(0.5), 0.9487, 1e-4);
}

TEST(Simulation, DefaultNoiseLevel) { EXPECT_DOUBLE_EQ(SimConfig{}.sigma_eps, 0.2); }

TEST(Simulation, ShapesAndRanges)
{
    SimConfig cfg;
    cfg.m = 40;
    const auto data = simulate_two_level(cfg);
    ASSERT_EQ(data.groups.size(), 40u);
    for (std::size_t i = 0; i < data.groups.size(); ++i) {
        const auto& g = data.groups[i];
        EXPECT_GE(g.x.size(), 30);
        EXPECT_LE(g.x.size(), 60);
        EXPECT_EQ(g.y.size(), g.x.size());
        EXPECT_GE(g.x.minCoeff(), 0.0);
        EXPECT_LE(g.x.maxCoeff(), 1.0);
        EXPECT_EQ(data.labels[i], std::to_string(i + 1));
    }
}

TEST(Simulation, SameSeedIsBitIdentical)
{
    SimConfig cfg;
    cfg.m = 25;
    cfg.seed = 99;
    const auto a = simulate_two_level(cfg), b = simulate_two_level(cfg);
    for (std::size_t i = 0; i < a.groups.size(); ++i) {
        EXPECT_EQ(a.groups[i].x, b.groups[i].x);
        EXPECT_EQ(a.groups[i].y, b.groups[i].y);
    }
    cfg.seed = 100;
    const auto c = simulate_two_level(cfg);
    EXPECT_NE(a.groups[0].y, c.groups[0].y);
}

TEST(Simulation, GroupStreamsIndependentOfGroupCount)
{
    SimConfig cfg;
    cfg.m = 5;
    cfg.seed = 7;
    const auto small = simulate_two_level(cfg);
    cfg.m = 12;
    const auto large = simulate_two_level(cfg);
    for (int i = 0; i < 5; ++i) EXPECT_EQ(small.groups[i].y, large.groups[i].y);
}

TEST(Simulation, NoiseStandardDeviation)
{
    // identical streams at two noise levels differ by exactly (0.4 - 0.2) z
    SimConfig cfg;
    cfg.m = 2300;
    cfg.seed = 3;
    const auto a = simulate_two_level(cfg);
    cfg.sigma_eps = 0.4;
    const auto b = simulate_two_level(cfg);
    double ss = 0.0, s = 0.0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < a.groups.size(); ++i) {
        ASSERT_EQ(a.groups[i].x, b.groups[i].x);
        const VectorXd e = b.groups[i].y - a.groups[i].y;
        s += e.sum();
        ss += e.squaredNorm();
        n += static_cast<std::size_t>(e.size());
    }
    ASSERT_GE(n, 100000u);
    const double mean = s / static_cast<double>(n);
    const double sd = std::sqrt(ss / static_cast<double>(n) - mean * mean);
    EXPECT_NEAR(sd, 0.2, 0.02 * 0.2);
}

TEST(Simulation, ThreeLevelDefaultShape)
{
    const auto data = simulate_three_level(ThreeLevelSimConfig{});
    ASSERT_EQ(data.groups.size(), 10u);
    for (const auto& g : data.groups) {
        ASSERT_EQ(g.cells.size(), 5u);
        for (const auto& c : g.cells) EXPECT_EQ(c.x.size(), 128);
    }
    const auto again = simulate_three_level(ThreeLevelSimConfig{});
    EXPECT_EQ(data.groups[3].cells[2].y, again.groups[3].cells[2].y);
}

TEST(Simulation, InvalidConfigRejected)
{
    SimConfig cfg;
    cfg.m = 0;
    EXPECT_THROW(simulate_two_level(cfg), ValidationError);
    cfg = {};
    cfg.n_min = 10;
    cfg.n_max = 5;
    EXPECT_THROW(simulate_two_level(cfg), ValidationError);
}

TEST(Naive, TwoLevelMatchesStreamlinedAfterTenCycles)
{
    const auto des = fixture::small_two_level(4, 5);
    const auto h = HyperparametersTwoLevel::defaults();
    FitOptions opts;
    opts.max_iterations = 10;
    opts.fixed_iterations = true;
    const auto fast = fit_mfvb(des, h, opts);
    const auto slow = naive_mfvb(des, h, 10);
    EXPECT_EQ(slow.iterations, 10);
    EXPECT_LT(oracle::max_state_rel_err(fast.state, slow.state), 1e-6);
    ASSERT_EQ(fast.elbo_trace.size(), slow.elbo_trace.size());
    for (std::size_t t = 0; t < fast.elbo_trace.size(); ++t)
        EXPECT_NEAR(fast.elbo_trace[t], slow.elbo_trace[t], 1e-6 * std::abs(slow.elbo_trace[t]));
}

TEST(Naive, ThreeLevelMatchesStreamlinedAfterTenCycles)
{
    const auto des = fixture::small_three_level(3, 2, 3, 6);
    const auto h = HyperparametersThreeLevel::defaults();
    FitOptions opts{.max_iterations = 10, .metric = ConvergenceMetric::ParamChange, .fixed_iterations = true};
    const auto fast = fit_mfvb(des, h, opts);
    const auto slow = naive_mfvb(des, h, 10);
    EXPECT_LT(oracle::max_state_rel_err(fast.state, slow.state), 1e-6);
}

namespace {
ThreeLevelDesign d3_dims()
{
    ThreeLevelSimConfig cfg;
    cfg.o_min = cfg.o_max = 20;
    return build_three_level_design(simulate_three_level(cfg));
}
} // namespace

TEST(Naive, DimensionCapGuard)
{
    const auto des = fixture::small_two_level(4, 7);
    EXPECT_EQ(naive_dimension(des), static_cast<std::size_t>(des.p() + 4 * des.q()));
    EXPECT_EQ(naive_dimension(d3_dims()), 24u + 10u * 14u + 50u * 14u);
    EXPECT_THROW(naive_mfvb(des, HyperparametersTwoLevel::defaults(), 1, 10), DimensionCapExceeded);
    const auto d3 = fixture::small_three_level(2, 2, 2, 8);
    EXPECT_THROW(naive_mfvb(d3, HyperparametersThreeLevel::defaults(), 1, 10), DimensionCapExceeded);
}

TEST(Benchmark, SingleMGivesOneRecordPerVariant)
{
    BenchmarkOptions opts;
    opts.ms = {8};
    opts.replications = 2;
    opts.fixed_iterations = 3;
    const auto res = run_benchmark(opts);
    ASSERT_EQ(res.records.size(), 2u);
    EXPECT_TRUE(std::isnan(res.slope_streamlined));
    EXPECT_EQ(res.records[0].replications, 2);
}

TEST(Benchmark, CapSkipsNaive)
{
    BenchmarkOptions opts;
    opts.ms = {5, 10};
    opts.replications = 1;
    opts.fixed_iterations = 2;
    // default knots: p = 24, q = 14, so m = 5 needs 94 and m = 10 needs 164
    opts.dimension_cap = 120;
    const auto res = run_benchmark(opts);
    EXPECT_EQ(res.naive_skipped, std::vector<int>{10});
    EXPECT_EQ(res.records.size(), 3u);
}

TEST(Benchmark, RejectsUnsortedSizes)
{
    BenchmarkOptions opts;
    opts.ms = {100, 50};
    EXPECT_THROW(run_benchmark(opts), ValidationError);
}

TEST(Benchmark, SameSeedSameFit)
{
    const auto des = fixture::small_two_level(6, 9);
    FitOptions opts;
    opts.max_iterations = 20;
    opts.fixed_iterations = true;
    const auto a = fit_mfvb(des, HyperparametersTwoLevel::defaults(), opts);
    const auto b = fit_mfvb(fixture::small_two_level(6, 9), HyperparametersTwoLevel::defaults(), opts);
    EXPECT_EQ(a.state.coef.x1, b.state.coef.x1);
    EXPECT_EQ(a.elbo_trace, b.elbo_trace);
}

TEST(Benchmark, LogLogSlope)
{
    const std::vector<double> x{50, 100, 200, 400};
    std::vector<double> y;
    for (double v : x) y.push_back(3e-4 * std::pow(v, 1.5));
    EXPECT_NEAR(log_log_slope(x, y), 1.5, 1e-12);
}

TEST(Accuracy, IdenticalDensities)
{
    const VectorXd x = VectorXd::LinSpaced(2001, -8.0, 8.0);
    const VectorXd p = x.unaryExpr([](double v) { return std::exp(-0.5 * v * v) / std::sqrt(2.0 * M_PI); });
    EXPECT_NEAR(accuracy(x, p, p), 100.0, 1e-12);
}

TEST(Accuracy, DisjointSupports)
{
    const VectorXd x = VectorXd::LinSpaced(501, 0.0, 5.0);
    auto tri = [](double c) {
        return [c](double v) { return std::max(0.0, 1.0 - std::abs(v - c)); };
    };
    const VectorXd q = x.unaryExpr(tri(1.0)), p = x.unaryExpr(tri(3.5));
    EXPECT_NEAR(accuracy(x, q, p), 0.0, 1e-10);
}

TEST(Accuracy, ShiftedNormalsMatchQuadrature)
{
    auto phi = [](double mu) {
        return [mu](double v) { return std::exp(-0.5 * (v - mu) * (v - mu)) / std::sqrt(2.0 * M_PI); };
    };
    const VectorXd x = VectorXd::LinSpaced(1601, -8.0, 8.5);
    const double got = accuracy(x, x.unaryExpr(phi(0.0)), x.unaryExpr(phi(0.5)));
    const double tv = oracle::total_variation(phi(0.0), phi(0.5), -12.0, 12.5, 200000);
    EXPECT_NEAR(got, 100.0 * (1.0 - tv), 0.1);
    // closed form: 0.5 int |p - q| = 2 Phi(1/4) - 1
    EXPECT_NEAR(tv, 2.0 * normal_cdf(0.25) - 1.0, 1e-9);
}

TEST(Accuracy, GridAndNormalizationErrors)
{
    const VectorXd x = VectorXd::LinSpaced(101, 0.0, 1.0);
    const VectorXd u = VectorXd::Ones(101);
    EXPECT_THROW(accuracy(x, u, VectorXd::LinSpaced(101, 0.0, 2.0), u), GridMismatch);
    EXPECT_THROW(accuracy(x, u, VectorXd::Ones(50)), GridMismatch);
    EXPECT_THROW(accuracy(x, u, 2.0 * u), NotNormalized);
    VectorXd neg = u;
    neg[3] = -0.1;
    EXPECT_THROW(accuracy(x, u, neg), NotNormalized);
}
