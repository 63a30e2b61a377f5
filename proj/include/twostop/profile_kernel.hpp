#ifndef TWOSTOP_PROFILE_KERNEL_HPP
#define TWOSTOP_PROFILE_KERNEL_HPP

#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <stdexcept>
#include <vector>

#include <boost/math/tools/roots.hpp>

#include "twostop/model.hpp"
#include "twostop/quadrature.hpp"

namespace twostop {

struct SolverOptions {
    double tolerance = 1e-6;     ///< target distance to the fixed point
    int max_iterations = 0;      ///< 0: 10 * ceil(log tol / log q)
    bool refine = true;          ///< locate interior maximizers between r-nodes
    bool collapse_elapsed = true;///< drop the elapsed axis for time-homogeneous cost
    double tie_tolerance = 1e-10;///< flat-profile tolerance; smallest maximizer wins
    unsigned threads = 0;        ///< 0: hardware concurrency
};

class ConvergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

namespace detail {

/// Default iteration cap 10 * ceil(log tol / log q), at least 10.
inline int iteration_cap(double tolerance, double q)
{
    if (!(q > 0.0))
        return 10;
    double k = std::ceil(std::log(tolerance) / std::log(q));
    return std::max(10, static_cast<int>(10.0 * std::max(1.0, k)));
}

/// Stop once successive iterates are within tol (1 - q)/q (Banach a-priori bound).
inline double update_threshold(double tolerance, double q)
{
    if (!(q > 0.0))
        return std::numeric_limits<double>::infinity();
    return tolerance * (1.0 - q) / q;
}

/**
 * Delay-profile integrals on the shared time grid.
 *
 * For a node with k cells of width h remaining, the profile is
 *
 *   phi(r) = int_0^r { f(z) [delta + E(z)] - S(z) [c'(t_o + z) + s(z)] } dz
 *
 * with f, S the density and survival of the inter-arrival law, E the
 * continuation (known at z-nodes, linear in between), t_o the elapsed-time
 * origin of the cost, and s an optional per-cell constant drift.
 * f-weighted terms use product weights that are exact for the piecewise
 * linear continuation; the drift terms are integrated by Gauss-Legendre.
 */
class ProfileKernel {
public:
    struct Result {
        double value = 0.0;
        double r = 0.0;
    };

    ProfileKernel(const DistributionSpec& arrivals, const CostSpec& cost, double horizon, int time_nodes,
                  int quadrature_nodes)
        : law_(arrivals), cost_(cost), n_(time_nodes), h_(horizon / (time_nodes - 1)),
          rule_(&gauss_legendre(std::max(quadrature_nodes, 2)))
    {
        const int cells = n_ - 1;
        z_.resize(static_cast<std::size_t>(n_));
        f_.resize(z_.size());
        sf_.resize(z_.size());
        for (int j = 0; j < n_; ++j) {
            z_[j] = j == n_ - 1 ? horizon : j * h_;
            f_[j] = law_.pdf(z_[j]);
            sf_[j] = law_.survival(z_[j]);
        }
        cprime_.resize(static_cast<std::size_t>(2 * n_));
        for (int i = 0; i < 2 * n_; ++i)
            cprime_[i] = cost_.derivative(i * h_);

        w_lo_.resize(static_cast<std::size_t>(cells));
        w_hi_.resize(static_cast<std::size_t>(cells));
        sf_cell_.resize(static_cast<std::size_t>(cells));
        for (int j = 0; j < cells; ++j) {
            double lo = z_[j], hi = z_[j + 1];
            double mass = law_.cdf(hi) - law_.cdf(lo);
            // int f(z) theta dz = F(hi) - (1/h) int F dz,  theta = (z - lo)/h
            double upper = law_.cdf(hi) - law_.cdf_integral(lo, hi, quadrature_nodes) / (hi - lo);
            w_hi_[j] = std::clamp(upper, 0.0, mass);
            w_lo_[j] = mass - w_hi_[j];
            sf_cell_[j] = (hi - lo) - law_.cdf_integral(lo, hi, quadrature_nodes);
        }

        // cost_cell_[o][j] = int_{cell j} S(z) c'(o h + z) dz
        cost_cell_.assign(static_cast<std::size_t>(n_) * cells, 0.0);
        for (int o = 0; o < n_; ++o)
            for (int j = 0; j < cells; ++j)
                cost_cell_[static_cast<std::size_t>(o) * cells + j] = rule_->integrate(
                    [&](double z) { return law_.survival(z) * cost_.derivative(o * h_ + z); }, z_[j], z_[j + 1]);
    }

    double step() const { return h_; }
    int nodes() const { return n_; }
    /// int_{cell j} S(z) dz
    double survival_cell(int j) const { return sf_cell_[j]; }

    /**
     * Profile values phi(r_0..r_k) at the r-nodes.
     * cont has k+1 entries; slope is empty or has k entries (one per cell).
     */
    std::vector<double> profile(int k, double delta, std::span<const double> cont, int origin,
                                std::span<const double> slope) const
    {
        std::vector<double> out(static_cast<std::size_t>(k) + 1, 0.0);
        for (int j = 0; j < k; ++j)
            out[j + 1] = out[j] + cell_increment(j, delta, cont, origin, slope);
        return out;
    }

    /// Maximum of the profile over r in [0, k h] and its smallest maximizer.
    Result maximize(int k, double delta, std::span<const double> cont, int origin, std::span<const double> slope,
                    bool refine, double tie) const
    {
        // candidates in increasing r: node 0, then (interior root, node j+1) per cell
        double best = 0.0;
        Result pick{0.0, 0.0};
        double cum = 0.0;
        struct Candidate {
            double r, v;
        };
        thread_local std::vector<Candidate> candidates;
        candidates.clear();
        candidates.push_back({0.0, 0.0});
        for (int j = 0; j < k; ++j) {
            double s = slope.empty() ? 0.0 : slope[j];
            if (refine) {
                double left = integrand_node(j, delta, cont[j], origin, s);
                double right = f_[j + 1] * (delta + cont[j + 1]) - sf_[j + 1] * (cprime_[origin + j + 1] + s);
                if (left > 0.0 && right < 0.0) {
                    auto g = [&](double z) { return integrand(z, j, delta, cont, origin, s); };
                    double root = find_root(g, z_[j], z_[j + 1]);
                    double part = rule_->integrate(g, z_[j], root);
                    candidates.push_back({root, cum + part});
                }
            }
            cum += cell_increment(j, delta, cont, origin, slope);
            candidates.push_back({z_[j + 1], cum});
        }
        for (const auto& cand : candidates)
            best = std::max(best, cand.v);
        for (const auto& cand : candidates) {
            if (cand.v >= best - tie) {
                pick = {best, cand.r};
                break;
            }
        }
        return pick;
    }

private:
    double cell_increment(int j, double delta, std::span<const double> cont, int origin,
                          std::span<const double> slope) const
    {
        double inc = w_lo_[j] * (delta + cont[j]) + w_hi_[j] * (delta + cont[j + 1])
                   - cost_cell_[static_cast<std::size_t>(origin) * (n_ - 1) + j];
        if (!slope.empty())
            inc -= slope[j] * sf_cell_[j];
        return inc;
    }

    double integrand_node(int j, double delta, double cont_j, int origin, double s) const
    {
        double f = f_[j];
        if (!std::isfinite(f))
            return std::numeric_limits<double>::infinity();
        return f * (delta + cont_j) - sf_[j] * (cprime_[origin + j] + s);
    }

    double integrand(double z, int j, double delta, std::span<const double> cont, int origin, double s) const
    {
        double theta = (z - z_[j]) / h_;
        double e = (1.0 - theta) * cont[j] + theta * cont[j + 1];
        return law_.pdf(z) * (delta + e) - law_.survival(z) * (cost_.derivative(origin * h_ + z) + s);
    }

    template <class G>
    double find_root(G&& g, double lo, double hi) const
    {
        // keep the bracket away from a density singularity at z = 0
        double a = lo;
        double ga = g(a);
        if (!std::isfinite(ga)) {
            a = lo + 1e-12 * h_;
            ga = g(a);
        }
        double gb = g(hi);
        if (!(ga > 0.0) || !(gb < 0.0) || !std::isfinite(ga))
            return ga > 0.0 ? hi : lo;
        std::uintmax_t iters = 40;
        auto [x0, x1] = boost::math::tools::toms748_solve(g, a, hi, ga, gb,
                                                          boost::math::tools::eps_tolerance<double>(44), iters);
        return 0.5 * (x0 + x1);
    }

    DistributionSpec law_;
    CostSpec cost_;
    int n_;
    double h_;
    const GaussLegendre* rule_;
    std::vector<double> z_, f_, sf_, cprime_;
    std::vector<double> w_lo_, w_hi_, sf_cell_;
    std::vector<double> cost_cell_;
};

}  // namespace detail
}  // namespace twostop

#endif  // TWOSTOP_PROFILE_KERNEL_HPP
