#ifndef TWOSTOP_NUMERICS_HPP
#define TWOSTOP_NUMERICS_HPP

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/distributions/poisson.hpp>
#include <boost/math/special_functions/gamma.hpp>

#include "twostop/model.hpp"
#include "twostop/quadrature.hpp"

namespace twostop {

//---------------------------------------------------------------------------//
// Grids
//---------------------------------------------------------------------------//

struct GridSpec {
    double mass_max = 10.0;   ///< A, upper end of the mass axis
    int mass_nodes = 33;      ///< nA
    int time_nodes = 17;      ///< nT, shared by the elapsed and remaining axes
    int quadrature_nodes = 8; ///< Gauss-Legendre nodes per cell integral

    void check() const
    {
        if (!(mass_max > 0.0) || mass_nodes < 2 || time_nodes < 2 || quadrature_nodes < 1)
            throw std::invalid_argument("GridSpec: need A > 0, nA >= 2, nT >= 2, nQ >= 1");
    }
};

/**
 * Mass-axis truncation so that P(M_{t0} > A) < tail.
 *
 * Surrogate: compound Poisson with the larger site rate lambda and
 * exponential marks of the larger catch mean mu, whose tail is the
 * Poisson mixture sum_n P(N = n) Q(n, A / mu). A is found by bisection.
 */
inline double default_mass_max(const ProblemSpec& spec, double tail = 1e-4)
{
    const double rate = std::max(1.0 / spec.site1.inter_arrival.mean(), 1.0 / spec.site2.inter_arrival.mean());
    const double mu = std::max(spec.site1.catch_size.mean(), spec.site2.catch_size.mean());
    const double lambda_t = rate * spec.horizon;
    if (!(lambda_t > 0.0) || !(mu > 0.0) || !std::isfinite(lambda_t) || !std::isfinite(mu))
        throw std::domain_error("default_mass_max: need positive, finite rates and catch means");
    const boost::math::poisson_distribution<double> counts(lambda_t);
    const int n_max = static_cast<int>(lambda_t + 12.0 * std::sqrt(lambda_t) + 40.0);
    auto exceed = [&](double A) {
        double sum = 0.0;
        for (int n = 1; n <= n_max; ++n)
            sum += boost::math::pdf(counts, n) * boost::math::gamma_q(static_cast<double>(n), A / mu);
        return sum;
    };
    double lo = 0.0, hi = mu * (lambda_t + 1.0);
    while (exceed(hi) >= tail)
        hi *= 2.0;
    for (int it = 0; it < 200 && hi - lo > 1e-6 * hi; ++it) {
        const double mid = 0.5 * (lo + hi);
        (exceed(mid) >= tail ? lo : hi) = mid;
    }
    return hi;
}

struct Axis {
    std::string name;
    double lo = 0.0;
    double hi = 1.0;
    int n = 2;

    double step() const { return (hi - lo) / (n - 1); }
    double node(int i) const { return i == n - 1 ? hi : lo + i * step(); }

    /// Cell index and fractional offset for a clamped coordinate.
    std::pair<int, double> locate(double x) const
    {
        if (!(x > lo))
            return {0, 0.0};
        if (x >= hi)
            return {n - 2, 1.0};
        double t = (x - lo) / step();
        int i = std::min(static_cast<int>(t), n - 2);
        return {i, t - i};
    }

    bool operator==(const Axis&) const = default;
};

//---------------------------------------------------------------------------//
// ValueField
//---------------------------------------------------------------------------//

/**
 * Bounded function sampled on a uniform tensor grid of up to three axes.
 *
 * Off-node evaluation is multilinear; coordinates outside an axis clamp to
 * its end. Values are stored row-major with the first axis slowest. A
 * field may carry any subset of the (mass, elapsed, remaining) axes; lookups
 * through at() ignore coordinates for axes the field does not have.
 */
class ValueField {
public:
    enum Role : int { mass = 0, elapsed = 1, remaining = 2 };

    ValueField() = default;

    ValueField(std::vector<Axis> axes, std::vector<int> roles, double fill = 0.0)
        : axes_(std::move(axes)), roles_(std::move(roles))
    {
        if (axes_.empty() || axes_.size() > 3 || axes_.size() != roles_.size())
            throw std::invalid_argument("ValueField: 1 to 3 axes with one role each");
        std::size_t total = 1;
        for (const auto& ax : axes_) {
            if (ax.n < 2 || !(ax.hi > ax.lo))
                throw std::invalid_argument("ValueField: axis '" + ax.name + "' is degenerate");
            total *= static_cast<std::size_t>(ax.n);
        }
        values_.assign(total, fill);
    }

    /// Field over (mass, elapsed, remaining).
    static ValueField abc(const GridSpec& g, double horizon, double fill = 0.0)
    {
        return ValueField({{"a", 0.0, g.mass_max, g.mass_nodes},
                           {"b", 0.0, horizon, g.time_nodes},
                           {"c", 0.0, horizon, g.time_nodes}},
                          {mass, elapsed, remaining}, fill);
    }

    /// Field over (mass, remaining).
    static ValueField ac(const GridSpec& g, double horizon, double fill = 0.0)
    {
        return ValueField({{"a", 0.0, g.mass_max, g.mass_nodes}, {"c", 0.0, horizon, g.time_nodes}},
                          {mass, remaining}, fill);
    }

    std::size_t rank() const { return axes_.size(); }
    const std::vector<Axis>& axes() const { return axes_; }
    const std::vector<int>& roles() const { return roles_; }
    const Axis& axis(std::size_t i) const { return axes_[i]; }
    bool has_role(int role) const { return std::find(roles_.begin(), roles_.end(), role) != roles_.end(); }

    std::span<double> values() { return values_; }
    std::span<const double> values() const { return values_; }
    std::size_t size() const { return values_.size(); }

    std::size_t index(std::span<const int> idx) const
    {
        std::size_t flat = 0;
        for (std::size_t d = 0; d < axes_.size(); ++d)
            flat = flat * static_cast<std::size_t>(axes_[d].n) + static_cast<std::size_t>(idx[d]);
        return flat;
    }

    double& node(int i) { return values_[static_cast<std::size_t>(i)]; }
    double& node(int i, int j) { return values_[static_cast<std::size_t>(i) * axes_[1].n + j]; }
    double& node(int i, int j, int k)
    {
        return values_[(static_cast<std::size_t>(i) * axes_[1].n + j) * axes_[2].n + k];
    }
    double node(int i) const { return values_[static_cast<std::size_t>(i)]; }
    double node(int i, int j) const { return values_[static_cast<std::size_t>(i) * axes_[1].n + j]; }
    double node(int i, int j, int k) const
    {
        return values_[(static_cast<std::size_t>(i) * axes_[1].n + j) * axes_[2].n + k];
    }

    /// Multilinear interpolation at the given coordinates, one per axis.
    double interpolate(std::span<const double> x) const
    {
        std::array<int, 3> base{};
        std::array<double, 3> frac{};
        for (std::size_t d = 0; d < axes_.size(); ++d)
            std::tie(base[d], frac[d]) = axes_[d].locate(x[d]);
        double sum = 0.0;
        const std::size_t corners = std::size_t{1} << axes_.size();
        for (std::size_t corner = 0; corner < corners; ++corner) {
            double w = 1.0;
            std::array<int, 3> idx{};
            for (std::size_t d = 0; d < axes_.size(); ++d) {
                bool up = (corner >> d) & 1U;
                w *= up ? frac[d] : 1.0 - frac[d];
                idx[d] = base[d] + (up ? 1 : 0);
            }
            if (w != 0.0)
                sum += w * values_[index(std::span<const int>(idx.data(), axes_.size()))];
        }
        return sum;
    }

    /// Evaluate by role: coordinates for axes absent from this field are ignored.
    double at(double a, double b, double c) const
    {
        const std::array<double, 3> by_role{a, b, c};
        std::array<double, 3> x{};
        for (std::size_t d = 0; d < axes_.size(); ++d)
            x[d] = by_role[static_cast<std::size_t>(roles_[d])];
        return interpolate(std::span<const double>(x.data(), axes_.size()));
    }

    double sup_norm() const
    {
        double m = 0.0;
        for (double v : values_)
            m = std::max(m, std::abs(v));
        return m;
    }

    bool all_finite() const
    {
        return std::all_of(values_.begin(), values_.end(), [](double v) { return std::isfinite(v); });
    }

    bool same_layout(const ValueField& other) const { return axes_ == other.axes_ && roles_ == other.roles_; }

private:
    std::vector<Axis> axes_;
    std::vector<int> roles_;
    std::vector<double> values_;
};

/// Sup-norm distance between two fields on the same grid.
inline double distance(const ValueField& x, const ValueField& y)
{
    if (!x.same_layout(y))
        throw std::invalid_argument("distance: fields have different layouts");
    double m = 0.0;
    auto xs = x.values();
    auto ys = y.values();
    for (std::size_t i = 0; i < xs.size(); ++i)
        m = std::max(m, std::abs(xs[i] - ys[i]));
    return m;
}

//---------------------------------------------------------------------------//
// Pointwise primitives
//---------------------------------------------------------------------------//

/// Hazard rate f(z)/(1 - F(z)) of an inter-arrival law.
inline double hazard(const DistributionSpec& dist, double z) { return dist.hazard(z); }

namespace detail {

/// Composite Gauss-Legendre of u -> f(Q(u)) over [0, 1) with panels refined toward 1.
template <class F>
double quantile_expectation(const DistributionSpec& dist, F&& f, int nodes)
{
    const auto& rule = gauss_legendre(nodes);
    double sum = 0.0;
    // dyadic panels toward 0 (power-law quantiles), [1/16, 1/2] in 7 panels,
    // then dyadic panels [1 - 2^-k, 1 - 2^-(k+1)] toward 1
    for (int k = 48; k >= 4; --k)
        sum += rule.integrate([&](double u) { return f(dist.quantile(u)); }, std::ldexp(1.0, -(k + 1)),
                              std::ldexp(1.0, -k));
    for (int p = 1; p < 8; ++p)
        sum += rule.integrate([&](double u) { return f(dist.quantile(u)); }, p / 16.0, (p + 1) / 16.0);
    for (int k = 1; k < 48; ++k) {
        double lo = 1.0 - std::ldexp(1.0, -k);
        double hi = 1.0 - std::ldexp(1.0, -(k + 1));
        sum += rule.integrate([&](double u) { return f(dist.quantile(u)); }, lo, hi);
    }
    return sum;
}

/// E[exp(-k X)] for catalog laws with a closed form; NaN otherwise.
inline double laplace_transform(const DistributionSpec& d, double k)
{
    switch (d.kind) {
    case DistributionKind::exponential: return d.p1 / (d.p1 + k);
    case DistributionKind::gamma: return std::pow(1.0 + k * d.p2, -d.p1);
    case DistributionKind::uniform:
        if (k == 0.0) return 1.0;
        return (std::exp(-k * d.p1) - std::exp(-k * d.p2)) / (k * (d.p2 - d.p1));
    case DistributionKind::deterministic: return std::exp(-k * d.p1);
    default: return std::nan("");
    }
}

}  // namespace detail

/**
 * Delta(a) = E[g(a + X) - g(a)] for the site's utility and catch law.
 *
 * Closed forms for linear utilities and for saturating utilities against
 * laws with a known Laplace transform; composite Gauss-Legendre in the
 * quantile variable otherwise.
 */
inline double delta_expect(const SiteModel& site, double a, int nodes = 16)
{
    if (a < 0.0)
        throw std::domain_error("delta_expect: negative mass");
    const auto& g = site.utility;
    const auto& X = site.catch_size;
    if (g.kind == UtilityKind::linear)
        return g.p1 * X.mean();
    if (g.kind == UtilityKind::saturating) {
        double lt = detail::laplace_transform(X, g.p2);
        if (std::isfinite(lt))
            return g.p1 * std::exp(-g.p2 * a) * (1.0 - lt);
    }
    if (X.kind == DistributionKind::deterministic)
        return g(a + X.p1) - g(a);
    double ga = g(a);
    double value = detail::quantile_expectation(X, [&](double x) { return g(a + x) - ga; }, nodes);
    if (!std::isfinite(value))
        throw std::runtime_error("delta_expect: non-integrable configuration");
    return value;
}

/**
 * Exact expectation of a piecewise-linear function of mass under a catch law.
 *
 * For a mass axis and a shift a, weights() gives w[i] with
 * E[f(a + X)] = sum_i w[i] f(a_i) for every f that is linear between the
 * axis nodes and constant beyond the last one. Weights sum to one.
 */
class CatchExpectation {
public:
    CatchExpectation(const DistributionSpec& law, const Axis& mass_axis, int nodes)
        : law_(law), axis_(mass_axis), nodes_(nodes)
    {
    }

    /// Sparse weights as (node index, weight) pairs.
    std::vector<std::pair<int, double>> weights(double a) const
    {
        std::vector<std::pair<int, double>> out;
        const int last = axis_.n - 1;
        const double h = axis_.step();
        if (a >= axis_.hi) {
            out.emplace_back(last, 1.0);
            return out;
        }
        // cells of the mass axis that a + X can land in
        const int first_cell = axis_.locate(a).first;
        double covered = 0.0;
        for (int i = first_cell; i < last; ++i) {
            double lo = std::max(0.0, axis_.node(i) - a);
            double hi = axis_.node(i + 1) - a;
            if (hi <= lo)
                continue;
            double p = law_.cdf(hi) - law_.cdf(lo);
            if (p <= 0.0)
                continue;
            // int_(lo,hi] (x - lo) dH(x) = (hi - lo) H(hi) - int_lo^hi H(x) dx
            double first_moment = (hi - lo) * law_.cdf(hi) - law_.cdf_integral(lo, hi, nodes_);
            // upper-node weight is E[theta; cell] with theta = (a + x - a_i)/h
            double upper = ((a + lo - axis_.node(i)) * p + first_moment) / h;
            upper = std::clamp(upper, 0.0, p);
            out.emplace_back(i, p - upper);
            out.emplace_back(i + 1, upper);
            covered += p;
        }
        out.emplace_back(last, std::max(0.0, 1.0 - covered));
        return out;
    }

    template <class F>
    double expect(double a, F&& node_value) const
    {
        double sum = 0.0;
        for (auto [i, w] : weights(a))
            sum += w * node_value(i);
        return sum;
    }

    /// Dense row-stochastic matrix W[i][j] for shifts at every axis node.
    std::vector<std::vector<std::pair<int, double>>> node_matrix() const
    {
        std::vector<std::vector<std::pair<int, double>>> rows(static_cast<std::size_t>(axis_.n));
        for (int i = 0; i < axis_.n; ++i)
            rows[static_cast<std::size_t>(i)] = merge(weights(axis_.node(i)));
        return rows;
    }

private:
    static std::vector<std::pair<int, double>> merge(std::vector<std::pair<int, double>> w)
    {
        std::sort(w.begin(), w.end());
        std::vector<std::pair<int, double>> out;
        for (auto [i, v] : w) {
            if (!out.empty() && out.back().first == i)
                out.back().second += v;
            else
                out.emplace_back(i, v);
        }
        return out;
    }

    DistributionSpec law_;
    Axis axis_;
    int nodes_;
};

/// E[field(a + X, b, c)] under the site's catch law, exact for the interpolant.
inline double expect_over_catch(const SiteModel& site, const ValueField& field, double b, double c, double a,
                                int nodes = 8)
{
    std::size_t mass_dim = 0;
    while (mass_dim < field.rank() && field.roles()[mass_dim] != ValueField::mass)
        ++mass_dim;
    if (mass_dim == field.rank())
        return field.at(a, b, c);
    const Axis& ax = field.axis(mass_dim);
    CatchExpectation op(site.catch_size, ax, nodes);
    return op.expect(a, [&](int i) { return field.at(ax.node(i), b, c); });
}

/**
 * Cumulative trapezoid integral of weight(z) * integrand(z) on a uniform
 * grid over [0, c]. out[0] = 0 and out[k] approximates the integral up to
 * the k-th node. An empty weight span means weight = 1.
 */
inline std::vector<double> running_integral(std::span<const double> integrand, std::span<const double> weight,
                                            double c)
{
    const std::size_t n = integrand.size();
    std::vector<double> out(n, 0.0);
    if (n < 2)
        return out;
    if (!weight.empty() && weight.size() != n)
        throw std::invalid_argument("running_integral: weight size mismatch");
    const double h = c / static_cast<double>(n - 1);
    auto v = [&](std::size_t i) { return integrand[i] * (weight.empty() ? 1.0 : weight[i]); };
    for (std::size_t i = 1; i < n; ++i)
        out[i] = out[i - 1] + 0.5 * h * (v(i - 1) + v(i));
    return out;
}

}  // namespace twostop

#endif  // TWOSTOP_NUMERICS_HPP
