#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "instances.hpp"
#include "oracles.hpp"
#include "twostop/numerics.hpp"
#include "twostop/quadrature.hpp"

using namespace twostop;
using twostop::testing::expect_pdf;

TEST(GaussLegendre, ExactForPolynomialsOfDegree2nMinus1)
{
    const auto& rule = gauss_legendre(5);
    // int_0^2 x^9 dx = 2^10 / 10
    EXPECT_NEAR(rule.integrate([](double x) { return std::pow(x, 9); }, 0.0, 2.0), 102.4, 1e-11);
    EXPECT_NEAR(gauss_legendre(12).integrate([](double x) { return std::exp(x); }, 0.0, 1.0), std::exp(1.0) - 1.0,
                1e-15);
}

TEST(GridSpec, DefaultsAndChecks)
{
    GridSpec g;
    EXPECT_DOUBLE_EQ(g.mass_max, 10.0);
    EXPECT_EQ(g.mass_nodes, 33);
    EXPECT_EQ(g.time_nodes, 17);
    EXPECT_NO_THROW(g.check());
    g.time_nodes = 1;
    EXPECT_THROW(g.check(), std::invalid_argument);
}

TEST(GridSpec, DefaultMassMaxBoundsTheTail)
{
    // Monte Carlo frequency of the total catch exceeding A stays below the target tail
    auto p = twostop::testing::mixed_a();
    double A = default_mass_max(p, 1e-3);
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> U(0.0, 1.0);
    const auto& fast = p.site1.inter_arrival.mean() < p.site2.inter_arrival.mean() ? p.site1 : p.site2;
    const auto& big = p.site1.catch_size.mean() > p.site2.catch_size.mean() ? p.site1 : p.site2;
    int exceed = 0;
    const int n = 20000;
    for (int k = 0; k < n; ++k) {
        double t = 0.0, m = 0.0;
        while ((t += fast.inter_arrival.quantile(U(rng))) <= p.horizon)
            m += big.catch_size.quantile(U(rng));
        exceed += m > A;
    }
    EXPECT_LE(exceed, 5 * n * 1e-3);
    EXPECT_GT(A, 0.0);
}

TEST(Axis, LocateClampsAndSplits)
{
    Axis ax{"a", 0.0, 2.0, 5};
    EXPECT_DOUBLE_EQ(ax.step(), 0.5);
    auto [i, t] = ax.locate(1.2);
    EXPECT_EQ(i, 2);
    EXPECT_NEAR(t, 0.4, 1e-15);
    EXPECT_EQ(ax.locate(-1.0).first, 0);
    EXPECT_EQ(ax.locate(9.0).first, 3);
    EXPECT_DOUBLE_EQ(ax.locate(9.0).second, 1.0);
    EXPECT_DOUBLE_EQ(ax.node(4), 2.0);
}

TEST(ValueField, MultilinearInterpolationIsExactForMultilinearFunctions)
{
    GridSpec g{4.0, 9, 5, 8};
    auto f = ValueField::abc(g, 2.0);
    auto fn = [](double a, double b, double c) { return 1.0 + 2.0 * a - 0.5 * b + 0.25 * c + 0.1 * a * b * c; };
    for (int i = 0; i < 9; ++i)
        for (int j = 0; j < 5; ++j)
            for (int k = 0; k < 5; ++k)
                f.node(i, j, k) = fn(f.axis(0).node(i), f.axis(1).node(j), f.axis(2).node(k));
    for (auto [a, b, c] : {std::tuple{0.3, 0.2, 1.7}, {3.9, 1.1, 0.05}, {2.0, 0.5, 0.5}})
        EXPECT_NEAR(f.at(a, b, c), fn(a, b, c), 1e-13);
    // clamped outside the grid
    EXPECT_NEAR(f.at(10.0, 0.5, 0.5), fn(4.0, 0.5, 0.5), 1e-13);
}

TEST(ValueField, TwoAxisFieldIgnoresElapsedTime)
{
    GridSpec g{4.0, 9, 5, 8};
    auto f = ValueField::ac(g, 2.0);
    for (int i = 0; i < 9; ++i)
        for (int k = 0; k < 5; ++k)
            f.node(i, k) = i + 10.0 * k;
    EXPECT_DOUBLE_EQ(f.at(1.0, 0.0, 1.0), f.at(1.0, 1.7, 1.0));
    EXPECT_DOUBLE_EQ(f.at(1.0, 0.0, 1.0), 2.0 + 20.0);
}

TEST(ValueField, NormAndDistance)
{
    GridSpec g{1.0, 3, 3, 8};
    auto x = ValueField::ac(g, 1.0, 0.5);
    auto y = ValueField::ac(g, 1.0, -0.25);
    y.node(2, 1) = -3.0;
    EXPECT_DOUBLE_EQ(distance(x, y), 3.5);
    EXPECT_DOUBLE_EQ(y.sup_norm(), 3.0);
    EXPECT_TRUE(x.all_finite());
    EXPECT_THROW(distance(x, ValueField::abc(g, 1.0)), std::invalid_argument);
}

TEST(DeltaExpect, MatchesQuadratureOracle)
{
    std::vector<SiteModel> sites{
        {DistributionSpec::exponential(1.0), DistributionSpec::gamma(2.0, 0.4), UtilitySpec::saturating(4.0, 0.4), {}},
        {DistributionSpec::exponential(1.0), DistributionSpec::weibull(1.5, 0.6), UtilitySpec::saturating(3.0, 0.6), {}},
        {DistributionSpec::exponential(1.0), DistributionSpec::uniform(0.2, 1.0), UtilitySpec::power_capped(1.0, 0.7, 3.0), {}},
        {DistributionSpec::exponential(1.0), DistributionSpec::exponential(2.0), UtilitySpec::linear(1.5), {}},
    };
    for (const auto& s : sites) {
        for (double a : {0.0, 0.7, 2.5}) {
            const auto& g = s.utility;
            double ref = expect_pdf(s.catch_size, [&](double x) { return g(a + x) - g(a); });
            EXPECT_NEAR(delta_expect(s, a), ref, 1e-8) << to_string(s.catch_size.kind) << " a=" << a;
        }
    }
}

TEST(DeltaExpect, ThresholdExampleClosedForm)
{
    // g(x) = 1 - e^{-x}, X ~ Exp(1): Delta(a) = e^{-a}/2
    SiteModel s{DistributionSpec::exponential(2.0), DistributionSpec::exponential(1.0), UtilitySpec::saturating(1.0, 1.0),
                CostSpec::linear(0.25)};
    for (double a : {0.0, 0.5, 3.0})
        EXPECT_NEAR(delta_expect(s, a), 0.5 * std::exp(-a), 1e-15);
}

TEST(Hazard, ExponentialIsConstant)
{
    EXPECT_DOUBLE_EQ(hazard(DistributionSpec::exponential(0.8), 3.0), 0.8);
}

TEST(CatchExpectation, ExactForPiecewiseLinearFunctions)
{
    Axis ax{"a", 0.0, 4.0, 9};
    // random piecewise-linear function on the nodes, constant past the end
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> U(-1.0, 1.0);
    twostop::testing::PiecewiseLinear p;
    for (int i = 0; i < ax.n; ++i) {
        p.x.push_back(ax.node(i));
        p.v.push_back(U(rng));
    }
    for (const auto& law : {DistributionSpec::uniform(0.2, 1.4), DistributionSpec::exponential(1.3),
                            DistributionSpec::gamma(2.0, 0.4), DistributionSpec::weibull(1.5, 0.6)}) {
        CatchExpectation op(law, ax, 16);
        for (double a : {0.0, 0.3, 1.0, 3.7}) {
            std::vector<double> kinks;
            for (double xi : p.x)
                kinks.push_back(xi - a);
            double ref = expect_pdf(law, [&](double x) { return p(a + x); }, kinks);
            double got = op.expect(a, [&](int i) { return p.v[i]; });
            EXPECT_NEAR(got, ref, 1e-9) << to_string(law.kind) << " a=" << a;
            double wsum = 0.0;
            for (auto [i, w] : op.weights(a)) {
                EXPECT_GE(w, 0.0);
                wsum += w;
            }
            EXPECT_NEAR(wsum, 1.0, 1e-12);
        }
    }
}

TEST(CatchExpectation, DeterministicCatchShiftsExactly)
{
    Axis ax{"a", 0.0, 4.0, 9};
    CatchExpectation op(DistributionSpec::deterministic(0.75), ax, 8);
    auto f = [](int i) { return static_cast<double>(i * i); };
    // a + x = 1.75 lies between nodes 3 (1.5) and 4 (2.0)
    EXPECT_NEAR(op.expect(1.0, f), 0.5 * 9.0 + 0.5 * 16.0, 1e-14);
}

TEST(ExpectOverCatch, UsesTheFieldMassAxis)
{
    GridSpec g{4.0, 9, 5, 16};
    auto f = ValueField::ac(g, 2.0);
    for (int i = 0; i < 9; ++i)
        for (int k = 0; k < 5; ++k)
            f.node(i, k) = f.axis(0).node(i) * f.axis(1).node(k);
    SiteModel s{DistributionSpec::exponential(1.0), DistributionSpec::uniform(0.0, 1.0), UtilitySpec::linear(1.0), {}};
    // f linear in a away from the clamp: E f(0.5 + X, c = 1) = (0.5 + 0.5) * 1
    EXPECT_NEAR(expect_over_catch(s, f, 0.0, 1.0, 0.5), 1.0, 1e-13);
}

TEST(RunningIntegral, TrapezoidExactForLinear)
{
    std::vector<double> v{0.0, 1.0, 2.0, 3.0, 4.0};  // z on [0, 2] -> 2z
    auto out = running_integral(v, {}, 2.0);
    ASSERT_EQ(out.size(), 5u);
    EXPECT_DOUBLE_EQ(out[0], 0.0);
    EXPECT_NEAR(out[4], 4.0, 1e-15);
    EXPECT_NEAR(out[2], 1.0, 1e-15);
    std::vector<double> w{1.0, 1.0, 1.0, 1.0};
    EXPECT_THROW(running_integral(v, w, 2.0), std::invalid_argument);
}
