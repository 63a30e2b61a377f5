#ifndef TWOSTOP_STAGE2_HPP
#define TWOSTOP_STAGE2_HPP

#include <algorithm>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "twostop/model.hpp"
#include "twostop/numerics.hpp"
#include "twostop/parallel.hpp"
#include "twostop/profile_kernel.hpp"

namespace twostop {

/// Fixed point y2 of the after-switch operator and its maximizer field.
struct Stage2Solution {
    ValueField y2;      ///< over (a, b, c), or (a, c) when the elapsed axis is collapsed
    ValueField r_star;  ///< optimal delay, in [0, c]
    int iterations = 0;
    double residual = 0.0;  ///< sup-norm of the last update
    double modulus = 0.0;   ///< q = F2(t0)
};

/**
 * The operator (Phi2 delta)(a,b,c) = max_{0<=r<=c} phi_{2,delta}(a,b,c,r)
 * on a fixed grid.
 *
 * Fields live on nodes (ia, ib, kc); only nodes with ib + kc <= nT - 1
 * (b + c <= t0) are states. Other nodes copy the state with the same c and
 * the largest admissible b so that interpolation near the diagonal stays
 * meaningful. When the site-2 cost is linear, phi does not depend on b and
 * the elapsed axis is dropped.
 */
class Stage2Operator {
public:
    Stage2Operator(const ProblemSpec& spec, const GridSpec& grid, SolverOptions options = {})
        : spec_(spec), grid_(grid), options_(options),
          kernel_(spec.site2.inter_arrival, spec.site2.cost, spec.horizon, grid.time_nodes, grid.quadrature_nodes)
    {
        grid_.check();
        collapsed_ = options_.collapse_elapsed && spec.site2.cost.is_linear();
        Axis mass_axis{"a", 0.0, grid_.mass_max, grid_.mass_nodes};
        catch_ = CatchExpectation(spec.site2.catch_size, mass_axis, grid_.quadrature_nodes).node_matrix();
        delta_.resize(static_cast<std::size_t>(grid_.mass_nodes));
        for (int i = 0; i < grid_.mass_nodes; ++i)
            delta_[i] = delta_expect(spec.site2, mass_axis.node(i));
    }

    const ProblemSpec& spec() const { return spec_; }
    const GridSpec& grid() const { return grid_; }
    const SolverOptions& options() const { return options_; }
    bool collapsed() const { return collapsed_; }
    double modulus() const { return spec_.q2(); }
    /// Delta2 at the mass nodes.
    const std::vector<double>& delta() const { return delta_; }

    ValueField make_field(double fill = 0.0) const
    {
        return collapsed_ ? ValueField::ac(grid_, spec_.horizon, fill) : ValueField::abc(grid_, spec_.horizon, fill);
    }

    /// Phi2 delta and the smallest maximizing delay at every node.
    std::pair<ValueField, ValueField> apply(const ValueField& field) const
    {
        check_layout(field);
        const ValueField expected = expect(field);
        ValueField out = make_field();
        ValueField arg = make_field();
        const int nA = grid_.mass_nodes, nT = grid_.time_nodes, nB = collapsed_ ? 1 : nT;
        par_for(nA, options_.threads, [&](int ia) {
            std::vector<double> cont;
            for (int ib = 0; ib < nB; ++ib) {
                for (int kc = 0; kc + ib < nT; ++kc) {
                    continuation(expected, ia, ib, kc, cont);
                    auto res = kernel_.maximize(kc, delta_[ia], cont, ib, {}, options_.refine,
                                                options_.tie_tolerance);
                    at(out, ia, ib, kc) = res.value;
                    at(arg, ia, ib, kc) = std::clamp(res.r, 0.0, kc * kernel_.step());
                }
            }
        });
        fill_inadmissible(out);
        fill_inadmissible(arg);
        return {std::move(out), std::move(arg)};
    }

    /// phi_{2,delta}(a_i, b_j, c_k, r) at r = 0, h, ..., c_k.
    std::vector<double> profile(const ValueField& field, int ia, int ib, int kc) const
    {
        check_layout(field);
        if (ib + kc > grid_.time_nodes - 1)
            throw std::domain_error("phi2_profile: need b + c <= t0");
        const ValueField expected = expect(field);
        std::vector<double> cont;
        continuation(expected, ia, collapsed_ ? 0 : ib, kc, cont);
        return kernel_.profile(kc, delta_[ia], cont, ib, {});
    }

    /// E[field(a_i + X2, ., .)] at every node.
    ValueField expect(const ValueField& field) const
    {
        ValueField out = make_field();
        const std::size_t stride = field.size() / static_cast<std::size_t>(grid_.mass_nodes);
        auto src = field.values();
        auto dst = out.values();
        par_for(grid_.mass_nodes, options_.threads, [&](int ia) {
            double* row = dst.data() + static_cast<std::size_t>(ia) * stride;
            for (auto [j, w] : catch_[ia]) {
                const double* from = src.data() + static_cast<std::size_t>(j) * stride;
                for (std::size_t s = 0; s < stride; ++s)
                    row[s] += w * from[s];
            }
        });
        return out;
    }

    /// Largest admissible elapsed index for remaining index kc.
    int admissible_b(int kc) const { return grid_.time_nodes - 1 - kc; }

private:
    void check_layout(const ValueField& field) const
    {
        if (!field.same_layout(make_field()))
            throw std::invalid_argument("Stage2Operator: field layout does not match the grid");
    }

    double& at(ValueField& f, int ia, int ib, int kc) const
    {
        return collapsed_ ? f.node(ia, kc) : f.node(ia, ib, kc);
    }
    double at(const ValueField& f, int ia, int ib, int kc) const
    {
        return collapsed_ ? f.node(ia, kc) : f.node(ia, ib, kc);
    }

    // E delta(a + X, b + z_j, c - z_j) for j = 0..kc
    void continuation(const ValueField& expected, int ia, int ib, int kc, std::vector<double>& cont) const
    {
        cont.resize(static_cast<std::size_t>(kc) + 1);
        for (int j = 0; j <= kc; ++j)
            cont[j] = at(expected, ia, collapsed_ ? 0 : ib + j, kc - j);
    }

    void fill_inadmissible(ValueField& f) const
    {
        if (collapsed_)
            return;
        const int nT = grid_.time_nodes;
        for (int ia = 0; ia < grid_.mass_nodes; ++ia)
            for (int kc = 0; kc < nT; ++kc)
                for (int ib = admissible_b(kc) + 1; ib < nT; ++ib)
                    f.node(ia, ib, kc) = f.node(ia, admissible_b(kc), kc);
    }

    ProblemSpec spec_;
    GridSpec grid_;
    SolverOptions options_;
    detail::ProfileKernel kernel_;
    bool collapsed_ = false;
    std::vector<std::vector<std::pair<int, double>>> catch_;
    std::vector<double> delta_;
};

namespace detail {

inline int nearest_node(const Axis& ax, double x)
{
    auto [i, t] = ax.locate(x);
    return t < 0.5 ? i : i + 1;
}

}  // namespace detail

/// phi2 profile at the grid node nearest to (a, b, c), sampled on the r-grid.
inline std::vector<double> phi2_profile(const ProblemSpec& spec, const GridSpec& grid, const ValueField& delta,
                                        double a, double b, double c, SolverOptions options = {})
{
    Stage2Operator op(spec, grid, options);
    Axis mass{"a", 0.0, grid.mass_max, grid.mass_nodes};
    Axis time{"t", 0.0, spec.horizon, grid.time_nodes};
    return op.profile(delta, detail::nearest_node(mass, a), detail::nearest_node(time, b),
                      detail::nearest_node(time, c));
}

/// (Phi2 delta, argmax r).
inline std::pair<ValueField, ValueField> apply_phi2(const ProblemSpec& spec, const GridSpec& grid,
                                                    const ValueField& delta, SolverOptions options = {})
{
    return Stage2Operator(spec, grid, options).apply(delta);
}

/// Iterate y <- Phi2 y from zero until within tolerance of the fixed point.
inline Stage2Solution solve_y2(const Stage2Operator& op)
{
    const double q = op.modulus();
    if (!(q < 1.0))
        throw std::domain_error("solve_y2: contraction violated, F2(t0) = 1");
    const auto& opt = op.options();
    const int cap = opt.max_iterations > 0 ? opt.max_iterations : detail::iteration_cap(opt.tolerance, q);
    const double threshold = detail::update_threshold(opt.tolerance, q);

    Stage2Solution sol;
    sol.modulus = q;
    sol.y2 = op.make_field();
    for (int k = 1; k <= cap; ++k) {
        auto [next, arg] = op.apply(sol.y2);
        sol.residual = distance(next, sol.y2);
        sol.y2 = std::move(next);
        sol.r_star = std::move(arg);
        sol.iterations = k;
        if (sol.residual <= threshold)
            return sol;
    }
    throw ConvergenceError("solve_y2: no convergence after " + std::to_string(cap) + " iterations (last update "
                           + std::to_string(sol.residual) + ")");
}

inline Stage2Solution solve_y2(const ProblemSpec& spec, const GridSpec& grid, SolverOptions options = {})
{
    return solve_y2(Stage2Operator(spec, grid, options));
}

/// y_{2,0..K}: y_{2,0} = 0 and y_{2,j} = Phi2 y_{2,j-1}.
inline std::vector<ValueField> finite_k_y2(const Stage2Operator& op, int K)
{
    if (K < 0)
        throw std::invalid_argument("finite_k_y2: K must be >= 0");
    std::vector<ValueField> out;
    out.push_back(op.make_field());
    for (int j = 1; j <= K; ++j)
        out.push_back(op.apply(out.back()).first);
    return out;
}

inline std::vector<ValueField> finite_k_y2(const ProblemSpec& spec, const GridSpec& grid, int K,
                                           SolverOptions options = {})
{
    return finite_k_y2(Stage2Operator(spec, grid, options), K);
}

/**
 * gamma^{s,m}(mt, t): value of having switched at s with mass m, now at time t
 * with total mass mt, continuing optimally.
 */
inline double gamma_value(const ProblemSpec& spec, const Stage2Solution& sol, double m, double s, double mt,
                          double t)
{
    if (mt < m || t < s)
        throw std::invalid_argument("gamma_value: need mt >= m and t >= s");
    if (t > spec.horizon)
        return -spec.penalty();
    return payoff_w2(spec, m, s, mt, t) + sol.y2.at(mt - m, t - s, spec.horizon - t);
}

}  // namespace twostop

#endif  // TWOSTOP_STAGE2_HPP
