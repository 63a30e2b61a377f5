#include <algorithm>
#include <cmath>

#include <gtest/gtest.h>

#include "instances.hpp"
#include "twostop/stage1.hpp"

using namespace twostop;
using twostop::testing::linear_two_site;
using twostop::testing::rho;

namespace {

struct LinearCase {
    double a1, n1, k1, a2, n2, k2, t0;
};

const LinearCase cases[] = {
    {2.0, 1.0, 1.0, 1.0, 2.0, 1.5, 2.0},  // rho1 = 1.0 > rho2 = 0.5
    {1.0, 1.0, 0.5, 1.5, 1.0, 0.2, 1.5},  // rho2 = 1.3 > rho1 = 0.5
    {1.0, 0.5, 1.0, 0.8, 0.5, 0.6, 1.0},  // both negative
    {1.2, 1.0, 0.2, 1.0, 0.5, 0.9, 1.8},  // rho1 = 1.0 > 0 > rho2
};

ProblemSpec make(const LinearCase& c) { return linear_two_site(c.a1, c.n1, c.k1, c.a2, c.n2, c.k2, c.t0); }

}  // namespace

TEST(UPayoff, LinearInstanceClosedForm)
{
    const auto& c = cases[0];
    auto p = make(c);
    GridSpec g{8.0, 17, 17, 8};
    auto s2 = solve_y2(p, g);
    const double r2 = rho(c.a2, c.n2, c.k2);
    for (double m : {0.0, 1.3})
        for (double s : {0.0, 0.5, 1.25, 2.0})
            EXPECT_NEAR(u_payoff(p, s2, m, s), m - c.k1 * s + r2 * (c.t0 - s), 1e-5) << m << "," << s;
    EXPECT_THROW(u_payoff(p, s2, 0.0, 2.5), std::domain_error);
}

TEST(Phi1Profile, LinearInstanceClosedForm)
{
    // zero continuation: integrand S1(z) (rho1 - rho2+)
    for (const auto& c : cases) {
        auto p = make(c);
        GridSpec g{8.0, 17, 17, 8};
        auto s2 = solve_y2(p, g);
        Stage1Operator op(p, g, s2);
        const double slope = rho(c.a1, c.n1, c.k1) - std::max(rho(c.a2, c.n2, c.k2), 0.0);
        const double h = c.t0 / (g.time_nodes - 1);
        auto prof = op.profile(op.make_field(), 2, 16);
        for (int j = 0; j <= 16; ++j)
            EXPECT_NEAR(prof[j], slope * (1.0 - std::exp(-c.a1 * j * h)) / c.a1, 1e-6);
    }
}

TEST(SolveY1, LinearTwoSiteTotalValue)
{
    for (const auto& c : cases) {
        auto p = make(c);
        GridSpec g{8.0, 17, 17, 8};
        auto s2 = solve_y2(p, g);
        auto s1 = solve_y1(p, s2, g);
        const double expect = c.t0 * std::max({rho(c.a1, c.n1, c.k1), rho(c.a2, c.n2, c.k2), 0.0});
        EXPECT_NEAR(s1.total_value, expect, 1e-5 * std::max(1.0, expect));
    }
}

TEST(SolveY1, LinearDelayIsAllOrNothing)
{
    for (const auto& c : {cases[0], cases[1]}) {
        auto p = make(c);
        GridSpec g{8.0, 17, 17, 8};
        auto s2 = solve_y2(p, g);
        auto s1 = solve_y1(p, s2, g);
        const bool wait = rho(c.a1, c.n1, c.k1) > std::max(rho(c.a2, c.n2, c.k2), 0.0);
        for (int ia = 0; ia < g.mass_nodes; ++ia)
            for (int kc = 0; kc < g.time_nodes; ++kc) {
                double cc = c.t0 * kc / (g.time_nodes - 1);
                EXPECT_NEAR(s1.r_star.node(ia, kc), wait ? cc : 0.0, 1e-12);
            }
    }
}

TEST(SolveY1, ContinuationSlopesAreDifferenceQuotients)
{
    auto p = twostop::testing::mixed_a();
    GridSpec g{default_mass_max(p), 17, 9, 8};
    auto s2 = solve_y2(p, g);
    auto s1 = solve_y1(p, s2, g);
    const double h = p.horizon / (g.time_nodes - 1);
    ASSERT_EQ(s1.ybar2.size(), static_cast<std::size_t>(g.time_nodes));
    for (int k = 1; k < g.time_nodes; ++k) {
        EXPECT_NEAR(s1.ybar2[k], s2.y2.at(0.0, 0.0, k * h), 1e-12);
        EXPECT_NEAR(s1.ybar2_slope[k], (s1.ybar2[k] - s1.ybar2[k - 1]) / h, 1e-12);
    }
}

TEST(SolveY1, ValueDominatesImmediateSwitchAndResidualIsSmall)
{
    for (const auto& inst : twostop::testing::catalog()) {
        GridSpec g{default_mass_max(inst.spec), 17, 9, 8};
        auto s2 = solve_y2(inst.spec, g);
        Stage1Operator op(inst.spec, g, s2);
        auto s1 = solve_y1(op, s2);
        EXPECT_GE(s1.total_value, u_payoff(inst.spec, s2, 0.0, 0.0) - 1e-12) << inst.name;
        EXPECT_LE(distance(op.apply(s1.y1).first, s1.y1), 1e-6) << inst.name;
        EXPECT_DOUBLE_EQ(s1.modulus, inst.spec.q1());
    }
}

TEST(SolveY1, ContractionViolationThrows)
{
    auto p = twostop::testing::mixed_a();
    GridSpec g{8.0, 9, 9, 8};
    auto s2 = solve_y2(p, g);
    p.site1.inter_arrival = DistributionSpec::uniform(0.0, 1.0);
    EXPECT_THROW(solve_y1(p, s2, g), std::domain_error);
}

TEST(JValue, EqualsSwitchPayoff)
{
    auto p = twostop::testing::mixed_b();
    GridSpec g{default_mass_max(p), 17, 9, 8};
    auto s2 = solve_y2(p, g);
    for (double s : {0.0, 0.75, 2.0})
        EXPECT_DOUBLE_EQ(j_value(p, s2, 1.1, s), u_payoff(p, s2, 1.1, s));
}
