#ifndef TWOSTOP_STAGE1_HPP
#define TWOSTOP_STAGE1_HPP

#include <algorithm>
#include <string>
#include <utility>
#include <vector>

#include "twostop/model.hpp"
#include "twostop/numerics.hpp"
#include "twostop/parallel.hpp"
#include "twostop/profile_kernel.hpp"
#include "twostop/stage2.hpp"

namespace twostop {

struct Stage1Solution {
    ValueField y1;                    ///< over (a, c)
    ValueField r_star;                ///< optimal delay before switching, in [0, c]
    std::vector<double> ybar2;        ///< y2(0, 0, c_k) on the c-grid
    std::vector<double> ybar2_slope;  ///< left difference quotients; entry 0 is unused
    double total_value = 0.0;         ///< V = u(0, 0) + y1(0, t0)
    int iterations = 0;
    double residual = 0.0;
    double modulus = 0.0;             ///< q1 = F1(t0)
};

namespace detail {

/// c -> y2(0, 0, c), the continuation right after a switch.
inline double ybar2(const Stage2Solution& s2, double c) { return s2.y2.at(0.0, 0.0, c); }

}  // namespace detail

/// u(m, s) = g1(m) - c1(s) + g2(0) - c2(0) + ybar2(t0 - s).
inline double u_payoff(const ProblemSpec& spec, const Stage2Solution& s2, double m, double s)
{
    if (s < 0.0 || s > spec.horizon || m < 0.0)
        throw std::domain_error("u_payoff: need m >= 0 and 0 <= s <= t0");
    return spec.site1.utility(m) - spec.site1.cost(s) + spec.site2.utility(0.0) - spec.site2.cost(0.0)
         + detail::ybar2(s2, spec.horizon - s);
}

/**
 * Stage-1 operator on (a, c) with s = t0 - c.
 *
 * Same delay-profile structure as stage 2, with the site-1 law and the
 * time drift of u: -c1'(s + z) - ybar2'(t0 - s - z). ybar2 is linear
 * between c-nodes, so its left derivative is constant on each cell.
 */
class Stage1Operator {
public:
    Stage1Operator(const ProblemSpec& spec, const GridSpec& grid, const Stage2Solution& s2,
                   SolverOptions options = {})
        : spec_(spec), grid_(grid), options_(options),
          kernel_(spec.site1.inter_arrival, spec.site1.cost, spec.horizon, grid.time_nodes, grid.quadrature_nodes)
    {
        grid_.check();
        Axis mass_axis{"a", 0.0, grid_.mass_max, grid_.mass_nodes};
        catch_ = CatchExpectation(spec.site1.catch_size, mass_axis, grid_.quadrature_nodes).node_matrix();
        delta_.resize(static_cast<std::size_t>(grid_.mass_nodes));
        for (int i = 0; i < grid_.mass_nodes; ++i)
            delta_[i] = delta_expect(spec.site1, mass_axis.node(i));

        const int nT = grid_.time_nodes;
        Axis time{"c", 0.0, spec.horizon, nT};
        ybar_.resize(static_cast<std::size_t>(nT));
        slope_.assign(static_cast<std::size_t>(nT), 0.0);
        for (int k = 0; k < nT; ++k)
            ybar_[k] = detail::ybar2(s2, time.node(k));
        for (int k = 1; k < nT; ++k)
            slope_[k] = (ybar_[k] - ybar_[k - 1]) / kernel_.step();
    }

    const ProblemSpec& spec() const { return spec_; }
    const GridSpec& grid() const { return grid_; }
    const SolverOptions& options() const { return options_; }
    double modulus() const { return spec_.q1(); }
    const std::vector<double>& ybar2() const { return ybar_; }
    const std::vector<double>& ybar2_slope() const { return slope_; }

    ValueField make_field(double fill = 0.0) const { return ValueField::ac(grid_, spec_.horizon, fill); }

    std::pair<ValueField, ValueField> apply(const ValueField& field) const
    {
        check_layout(field);
        const ValueField expected = expect(field);
        ValueField out = make_field();
        ValueField arg = make_field();
        const int nT = grid_.time_nodes;
        par_for(grid_.mass_nodes, options_.threads, [&](int ia) {
            std::vector<double> cont, drift;
            for (int kc = 0; kc < nT; ++kc) {
                inputs(expected, ia, kc, cont, drift);
                auto res = kernel_.maximize(kc, delta_[ia], cont, nT - 1 - kc, drift, options_.refine,
                                            options_.tie_tolerance);
                out.node(ia, kc) = res.value;
                arg.node(ia, kc) = std::clamp(res.r, 0.0, kc * kernel_.step());
            }
        });
        return {std::move(out), std::move(arg)};
    }

    /// phi1 at r = 0, h, ..., c_k for state (a_i, c_k).
    std::vector<double> profile(const ValueField& field, int ia, int kc) const
    {
        check_layout(field);
        const ValueField expected = expect(field);
        std::vector<double> cont, drift;
        inputs(expected, ia, kc, cont, drift);
        return kernel_.profile(kc, delta_[ia], cont, grid_.time_nodes - 1 - kc, drift);
    }

    ValueField expect(const ValueField& field) const
    {
        ValueField out = make_field();
        const std::size_t stride = static_cast<std::size_t>(grid_.time_nodes);
        auto src = field.values();
        auto dst = out.values();
        for (int ia = 0; ia < grid_.mass_nodes; ++ia) {
            double* row = dst.data() + static_cast<std::size_t>(ia) * stride;
            for (auto [j, w] : catch_[ia]) {
                const double* from = src.data() + static_cast<std::size_t>(j) * stride;
                for (std::size_t s = 0; s < stride; ++s)
                    row[s] += w * from[s];
            }
        }
        return out;
    }

private:
    void check_layout(const ValueField& field) const
    {
        if (!field.same_layout(make_field()))
            throw std::invalid_argument("Stage1Operator: field layout does not match the grid");
    }

    void inputs(const ValueField& expected, int ia, int kc, std::vector<double>& cont,
                std::vector<double>& drift) const
    {
        cont.resize(static_cast<std::size_t>(kc) + 1);
        drift.resize(static_cast<std::size_t>(kc));
        for (int j = 0; j <= kc; ++j)
            cont[j] = expected.node(ia, kc - j);
        // on cell j the remaining time after a switch runs over (c_{kc-j-1}, c_{kc-j}]
        for (int j = 0; j < kc; ++j)
            drift[j] = slope_[kc - j];
    }

    ProblemSpec spec_;
    GridSpec grid_;
    SolverOptions options_;
    detail::ProfileKernel kernel_;
    std::vector<std::vector<std::pair<int, double>>> catch_;
    std::vector<double> delta_;
    std::vector<double> ybar_, slope_;
};

inline std::vector<double> phi1_profile(const ProblemSpec& spec, const GridSpec& grid, const Stage2Solution& s2,
                                        const ValueField& delta, double a, double c, SolverOptions options = {})
{
    Stage1Operator op(spec, grid, s2, options);
    Axis mass{"a", 0.0, grid.mass_max, grid.mass_nodes};
    Axis time{"t", 0.0, spec.horizon, grid.time_nodes};
    return op.profile(delta, detail::nearest_node(mass, a), detail::nearest_node(time, c));
}

inline Stage1Solution solve_y1(const Stage1Operator& op, const Stage2Solution& s2)
{
    const double q = op.modulus();
    if (!(q < 1.0))
        throw std::domain_error("solve_y1: contraction violated, F1(t0) = 1");
    const auto& opt = op.options();
    const int cap = opt.max_iterations > 0 ? opt.max_iterations : detail::iteration_cap(opt.tolerance, q);
    const double threshold = detail::update_threshold(opt.tolerance, q);

    Stage1Solution sol;
    sol.modulus = q;
    sol.ybar2 = op.ybar2();
    sol.ybar2_slope = op.ybar2_slope();
    sol.y1 = op.make_field();
    for (int k = 1; k <= cap; ++k) {
        auto [next, arg] = op.apply(sol.y1);
        sol.residual = distance(next, sol.y1);
        sol.y1 = std::move(next);
        sol.r_star = std::move(arg);
        sol.iterations = k;
        if (sol.residual <= threshold) {
            const auto& spec = op.spec();
            sol.total_value = u_payoff(spec, s2, 0.0, 0.0) + sol.y1.at(0.0, 0.0, spec.horizon);
            return sol;
        }
    }
    throw ConvergenceError("solve_y1: no convergence after " + std::to_string(cap) + " iterations (last update "
                           + std::to_string(sol.residual) + ")");
}

inline Stage1Solution solve_y1(const ProblemSpec& spec, const Stage2Solution& s2, const GridSpec& grid,
                               SolverOptions options = {})
{
    return solve_y1(Stage1Operator(spec, grid, s2, options), s2);
}

/// J(s) = gamma^{s,m}(m, s); equals u(m, s) for s <= t0.
inline double j_value(const ProblemSpec& spec, const Stage2Solution& s2, double m, double s)
{
    return gamma_value(spec, s2, m, s, m, s);
}

}  // namespace twostop

#endif  // TWOSTOP_STAGE1_HPP
