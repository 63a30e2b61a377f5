#ifndef TWOSTOP_MODEL_HPP
#define TWOSTOP_MODEL_HPP

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

#include <boost/math/special_functions/gamma.hpp>

#include "twostop/quadrature.hpp"

namespace twostop {

//---------------------------------------------------------------------------//
// Distribution catalog
//---------------------------------------------------------------------------//

enum class DistributionKind { exponential, weibull, uniform, gamma, deterministic };

inline const char* to_string(DistributionKind kind)
{
    switch (kind) {
    case DistributionKind::exponential: return "exponential";
    case DistributionKind::weibull: return "weibull";
    case DistributionKind::uniform: return "uniform";
    case DistributionKind::gamma: return "gamma";
    case DistributionKind::deterministic: return "deterministic";
    }
    return "?";
}

/**
 * A nonnegative continuous law from a closed catalog.
 *
 * Used both for inter-arrival times (F_i) and catch sizes (H_i). Parameters
 * are positional; use the named factories to build one:
 *
 *   exponential(rate)         F(x) = 1 - exp(-rate x)
 *   weibull(shape, scale)     F(x) = 1 - exp(-(x/scale)^shape)
 *   uniform(low, high)        F(x) = (x - low)/(high - low) on [low, high]
 *   gamma(shape, scale)       F(x) = P(shape, x/scale)
 *   deterministic(value)      point mass at value (no density)
 */
struct DistributionSpec {
    DistributionKind kind = DistributionKind::exponential;
    double p1 = 1.0;
    double p2 = 0.0;

    static DistributionSpec exponential(double rate) { return {DistributionKind::exponential, rate, 0.0}; }
    static DistributionSpec weibull(double shape, double scale) { return {DistributionKind::weibull, shape, scale}; }
    static DistributionSpec uniform(double low, double high) { return {DistributionKind::uniform, low, high}; }
    static DistributionSpec gamma(double shape, double scale) { return {DistributionKind::gamma, shape, scale}; }
    static DistributionSpec deterministic(double value) { return {DistributionKind::deterministic, value, 0.0}; }

    bool has_density() const { return kind != DistributionKind::deterministic; }

    double cdf(double x) const
    {
        if (x <= 0.0 && kind != DistributionKind::deterministic)
            return 0.0;
        switch (kind) {
        case DistributionKind::exponential: return -std::expm1(-p1 * x);
        case DistributionKind::weibull: return -std::expm1(-std::pow(x / p2, p1));
        case DistributionKind::uniform:
            if (x <= p1) return 0.0;
            if (x >= p2) return 1.0;
            return (x - p1) / (p2 - p1);
        case DistributionKind::gamma: return boost::math::gamma_p(p1, x / p2);
        case DistributionKind::deterministic: return x >= p1 ? 1.0 : 0.0;
        }
        return 0.0;
    }

    double survival(double x) const
    {
        if (x <= 0.0 && kind != DistributionKind::deterministic)
            return 1.0;
        switch (kind) {
        case DistributionKind::exponential: return std::exp(-p1 * x);
        case DistributionKind::weibull: return std::exp(-std::pow(x / p2, p1));
        case DistributionKind::gamma: return boost::math::gamma_q(p1, x / p2);
        default: return 1.0 - cdf(x);
        }
    }

    double pdf(double x) const
    {
        if (x < 0.0)
            return 0.0;
        switch (kind) {
        case DistributionKind::exponential: return p1 * std::exp(-p1 * x);
        case DistributionKind::weibull: {
            if (x == 0.0)
                return p1 < 1.0 ? std::numeric_limits<double>::infinity() : (p1 == 1.0 ? 1.0 / p2 : 0.0);
            double u = x / p2;
            return p1 / p2 * std::pow(u, p1 - 1.0) * std::exp(-std::pow(u, p1));
        }
        case DistributionKind::uniform: return (x >= p1 && x <= p2) ? 1.0 / (p2 - p1) : 0.0;
        case DistributionKind::gamma:
            if (x == 0.0)
                return p1 < 1.0 ? std::numeric_limits<double>::infinity() : (p1 == 1.0 ? 1.0 / p2 : 0.0);
            return boost::math::gamma_p_derivative(p1, x / p2) / p2;
        case DistributionKind::deterministic: return 0.0;
        }
        return 0.0;
    }

    /// f(z)/(1 - F(z)); throws when the survival function vanishes.
    double hazard(double z) const
    {
        double sf = survival(z);
        if (!(sf > 0.0))
            throw std::domain_error("hazard: survival function is zero at z = " + std::to_string(z));
        switch (kind) {
        case DistributionKind::exponential: return p1;
        case DistributionKind::weibull:
            if (z <= 0.0)
                return pdf(0.0);
            return p1 / p2 * std::pow(z / p2, p1 - 1.0);
        default: return pdf(z) / sf;
        }
    }

    /// Inverse cdf on [0, 1).
    double quantile(double u) const
    {
        if (u <= 0.0)
            return kind == DistributionKind::uniform ? p1
                 : kind == DistributionKind::deterministic ? p1 : 0.0;
        if (u >= 1.0)
            return kind == DistributionKind::uniform ? p2
                 : kind == DistributionKind::deterministic ? p1
                                                           : std::numeric_limits<double>::infinity();
        switch (kind) {
        case DistributionKind::exponential: return -std::log1p(-u) / p1;
        case DistributionKind::weibull: return p2 * std::pow(-std::log1p(-u), 1.0 / p1);
        case DistributionKind::uniform: return p1 + u * (p2 - p1);
        case DistributionKind::gamma: return p2 * boost::math::gamma_p_inv(p1, u);
        case DistributionKind::deterministic: return p1;
        }
        return 0.0;
    }

    double mean() const
    {
        switch (kind) {
        case DistributionKind::exponential: return 1.0 / p1;
        case DistributionKind::weibull: return p2 * std::tgamma(1.0 + 1.0 / p1);
        case DistributionKind::uniform: return 0.5 * (p1 + p2);
        case DistributionKind::gamma: return p1 * p2;
        case DistributionKind::deterministic: return p1;
        }
        return 0.0;
    }

    double second_moment() const
    {
        switch (kind) {
        case DistributionKind::exponential: return 2.0 / (p1 * p1);
        case DistributionKind::weibull: return p2 * p2 * std::tgamma(1.0 + 2.0 / p1);
        case DistributionKind::uniform: return (p1 * p1 + p1 * p2 + p2 * p2) / 3.0;
        case DistributionKind::gamma: return p1 * (p1 + 1.0) * p2 * p2;
        case DistributionKind::deterministic: return p1 * p1;
        }
        return 0.0;
    }

    /// Integral of the cdf over [lo, hi], 0 <= lo <= hi.
    double cdf_integral(double lo, double hi, int nodes = 8) const
    {
        if (hi <= lo)
            return 0.0;
        switch (kind) {
        case DistributionKind::exponential:
            // int (1 - e^{-r x}) dx
            return (hi - lo) - (std::exp(-p1 * lo) - std::exp(-p1 * hi)) / p1;
        case DistributionKind::uniform: {
            // piecewise linear cdf: integrate exactly on each linear piece
            auto piece = [&](double a, double b) {
                return 0.5 * (cdf(a) + cdf(b)) * (b - a);
            };
            std::vector<double> cuts{lo};
            for (double k : {p1, p2})
                if (k > lo && k < hi)
                    cuts.push_back(k);
            cuts.push_back(hi);
            double sum = 0.0;
            for (std::size_t i = 0; i + 1 < cuts.size(); ++i)
                sum += piece(cuts[i], cuts[i + 1]);
            return sum;
        }
        case DistributionKind::deterministic: return std::max(0.0, hi - std::max(lo, p1));
        case DistributionKind::weibull:
        case DistributionKind::gamma: {
            // closed forms through the regularized lower incomplete gamma function
            double a = hi - lo;
            double b = cdf_primitive(hi) - cdf_primitive(lo);
            // cancellation guard for narrow intervals far in the tail
            if (std::abs(b) < 1e-3 * a)
                return gauss_legendre(nodes).integrate([this](double x) { return cdf(x); }, lo, hi);
            return b;
        }
        }
        return 0.0;
    }

private:
    /// int_0^x F(u) du for the Weibull and gamma laws.
    double cdf_primitive(double x) const
    {
        if (x <= 0.0)
            return 0.0;
        if (kind == DistributionKind::weibull) {
            // int_0^x S(u) du = lambda Gamma(1 + 1/k) P(1/k, (x/lambda)^k)
            double k = p1, lambda = p2;
            return x - lambda * std::tgamma(1.0 + 1.0 / k) * boost::math::gamma_p(1.0 / k, std::pow(x / lambda, k));
        }
        // by parts: x F(x) - E[X; X <= x] = x P(k, x/theta) - k theta P(k + 1, x/theta)
        double k = p1, theta = p2;
        return x * boost::math::gamma_p(k, x / theta) - k * theta * boost::math::gamma_p(k + 1.0, x / theta);
    }

public:
};

//---------------------------------------------------------------------------//
// Utility and cost catalogs
//---------------------------------------------------------------------------//

enum class UtilityKind { linear, saturating, power_capped };

inline const char* to_string(UtilityKind kind)
{
    switch (kind) {
    case UtilityKind::linear: return "linear";
    case UtilityKind::saturating: return "saturating";
    case UtilityKind::power_capped: return "power_capped";
    }
    return "?";
}

/**
 * Utility of caught mass.
 *
 *   linear(slope, intercept)         g(x) = intercept + slope x  (bound G = inf)
 *   saturating(bound, rate)          g(x) = G (1 - exp(-rate x))
 *   power_capped(scale, power, cap)  g(x) = min(scale x^power, cap)
 */
struct UtilitySpec {
    UtilityKind kind = UtilityKind::linear;
    double p1 = 1.0;
    double p2 = 0.0;
    double p3 = 0.0;

    static UtilitySpec linear(double slope, double intercept = 0.0) { return {UtilityKind::linear, slope, intercept, 0.0}; }
    static UtilitySpec saturating(double bound, double rate) { return {UtilityKind::saturating, bound, rate, 0.0}; }
    static UtilitySpec power_capped(double scale, double power, double cap) { return {UtilityKind::power_capped, scale, power, cap}; }

    double operator()(double x) const
    {
        switch (kind) {
        case UtilityKind::linear: return p2 + p1 * x;
        case UtilityKind::saturating: return -p1 * std::expm1(-p2 * x);
        case UtilityKind::power_capped: return std::min(p1 * std::pow(x, p2), p3);
        }
        return 0.0;
    }

    double bound() const
    {
        switch (kind) {
        case UtilityKind::linear: return p1 > 0.0 ? std::numeric_limits<double>::infinity() : p2;
        case UtilityKind::saturating: return p1;
        case UtilityKind::power_capped: return p3;
        }
        return 0.0;
    }

    bool is_linear() const { return kind == UtilityKind::linear; }
    bool is_concave() const
    {
        return kind == UtilityKind::linear || kind == UtilityKind::saturating
            || (kind == UtilityKind::power_capped && p2 <= 1.0);
    }
    bool is_convex() const { return kind == UtilityKind::linear; }
};

enum class CostKind { linear, quadratic, exponential };

inline const char* to_string(CostKind kind)
{
    switch (kind) {
    case CostKind::linear: return "linear";
    case CostKind::quadratic: return "quadratic";
    case CostKind::exponential: return "exponential";
    }
    return "?";
}

/**
 * Cost of elapsed time.
 *
 *   linear(rate, offset)                 c(t) = offset + rate t
 *   quadratic(offset, linear, quadratic) c(t) = offset + linear t + quadratic t^2
 *   exponential(scale, rate)             c(t) = scale (exp(rate t) - 1)
 */
struct CostSpec {
    CostKind kind = CostKind::linear;
    double p1 = 0.0;
    double p2 = 0.0;
    double p3 = 0.0;

    static CostSpec linear(double rate, double offset = 0.0) { return {CostKind::linear, rate, offset, 0.0}; }
    static CostSpec quadratic(double offset, double lin, double quad) { return {CostKind::quadratic, offset, lin, quad}; }
    static CostSpec exponential(double scale, double rate) { return {CostKind::exponential, scale, rate, 0.0}; }

    double operator()(double t) const
    {
        switch (kind) {
        case CostKind::linear: return p2 + p1 * t;
        case CostKind::quadratic: return p1 + p2 * t + p3 * t * t;
        case CostKind::exponential: return p1 * std::expm1(p2 * t);
        }
        return 0.0;
    }

    double derivative(double t) const
    {
        switch (kind) {
        case CostKind::linear: return p1;
        case CostKind::quadratic: return p2 + 2.0 * p3 * t;
        case CostKind::exponential: return p1 * p2 * std::exp(p2 * t);
        }
        return 0.0;
    }

    /// Largest value on [0, horizon]; every catalog cost is monotone there.
    double bound(double horizon) const { return std::max((*this)(0.0), (*this)(horizon)); }

    bool is_linear() const { return kind == CostKind::linear || (kind == CostKind::quadratic && p3 == 0.0); }
    bool is_convex() const { return kind != CostKind::quadratic || p3 >= 0.0; }
    bool is_concave() const { return is_linear(); }
};

//---------------------------------------------------------------------------//
// Problem instance
//---------------------------------------------------------------------------//

struct SiteModel {
    DistributionSpec inter_arrival;
    DistributionSpec catch_size;
    UtilitySpec utility;
    CostSpec cost;
};

struct ProblemSpec {
    SiteModel site1;
    SiteModel site2;
    double horizon = 1.0;

    const SiteModel& site(int i) const { return i == 1 ? site1 : site2; }

    /// C = C_1 + C_2, the penalty for stopping after the horizon.
    double penalty() const { return site1.cost.bound(horizon) + site2.cost.bound(horizon); }

    /// Contraction modulus of the stage-2 operator, F_2(t0).
    double q2() const { return site2.inter_arrival.cdf(horizon); }
    /// Contraction modulus of the stage-1 operator, F_1(t0).
    double q1() const { return site1.inter_arrival.cdf(horizon); }
};

struct StateStage2 {
    double a = 0.0;  ///< mass caught since the switch
    double b = 0.0;  ///< time since the switch
    double c = 0.0;  ///< remaining horizon
};

struct StateStage1 {
    double a = 0.0;  ///< mass caught at site 1
    double c = 0.0;  ///< remaining horizon
};

//---------------------------------------------------------------------------//
// Payoffs
//---------------------------------------------------------------------------//

/// w1(m, t) = g1(m) - c1(t).
inline double payoff_w1(const ProblemSpec& spec, double m, double t)
{
    if (t < 0.0 || t > spec.horizon)
        throw std::domain_error("payoff_w1: time outside [0, horizon]");
    return spec.site1.utility(m) - spec.site1.cost(t);
}

/// w2(m, s, mt, t) = w1(m, s) + g2(mt - m) - c2(t - s).
inline double payoff_w2(const ProblemSpec& spec, double m, double s, double mt, double t)
{
    return payoff_w1(spec, m, s) + spec.site2.utility(mt - m) - spec.site2.cost(t - s);
}

/**
 * Payoff for switching at s with mass m and stopping at t with total mass mt.
 *
 * For t < s the whole catch mt is from site 1. Stopping after the horizon
 * costs the penalty -C.
 */
inline double payoff_z(const ProblemSpec& spec, double s, double t, double m, double mt)
{
    if (s < 0.0 || t < 0.0 || mt < m || m < 0.0)
        throw std::invalid_argument("payoff_z: require s, t >= 0 and mt >= m >= 0");
    if (t > spec.horizon)
        return -spec.penalty();
    if (t < s)
        return payoff_w1(spec, mt, t);
    return payoff_w2(spec, m, s, mt, t);
}

//---------------------------------------------------------------------------//
// Validation
//---------------------------------------------------------------------------//

enum class Severity { warning, error };

struct Diagnostic {
    Severity severity;
    std::string code;
    std::string message;
};

namespace detail {

inline void check_distribution(const DistributionSpec& d, const std::string& where, std::vector<Diagnostic>& out)
{
    auto err = [&](const std::string& msg) {
        out.push_back({Severity::error, "bad-parameter", where + ": " + msg});
    };
    switch (d.kind) {
    case DistributionKind::exponential:
        if (!(d.p1 > 0.0)) err("exponential rate must be positive");
        break;
    case DistributionKind::weibull:
    case DistributionKind::gamma:
        if (!(d.p1 > 0.0) || !(d.p2 > 0.0)) err("shape and scale must be positive");
        break;
    case DistributionKind::uniform:
        if (!(d.p1 >= 0.0) || !(d.p2 > d.p1)) err("uniform requires 0 <= low < high");
        break;
    case DistributionKind::deterministic:
        if (!(d.p1 > 0.0)) err("deterministic value must be positive");
        break;
    }
}

inline void check_site(const SiteModel& site, double horizon, const std::string& where,
                       std::vector<Diagnostic>& out)
{
    check_distribution(site.inter_arrival, where + ".inter_arrival", out);
    check_distribution(site.catch_size, where + ".catch_size", out);

    const auto& g = site.utility;
    switch (g.kind) {
    case UtilityKind::linear:
        if (!(g.p1 >= 0.0))
            out.push_back({Severity::error, "non-monotone-utility", where + ".utility: slope must be >= 0"});
        if (!(g.p2 >= 0.0))
            out.push_back({Severity::error, "bad-parameter", where + ".utility: intercept must be >= 0"});
        break;
    case UtilityKind::saturating:
        if (!(g.p1 >= 0.0) || !(g.p2 >= 0.0))
            out.push_back({Severity::error, "non-monotone-utility", where + ".utility: bound and rate must be >= 0"});
        break;
    case UtilityKind::power_capped:
        if (!(g.p1 >= 0.0) || !(g.p2 > 0.0) || !(g.p3 >= 0.0))
            out.push_back({Severity::error, "non-monotone-utility",
                           where + ".utility: scale, cap >= 0 and power > 0 required"});
        break;
    }

    const auto& c = site.cost;
    bool bad_cost = false;
    switch (c.kind) {
    case CostKind::linear: bad_cost = !(c.p1 >= 0.0) || !(c.p2 >= 0.0); break;
    case CostKind::quadratic: bad_cost = !(c.p1 >= 0.0) || !(c.p2 >= 0.0) || !(c.p3 >= 0.0); break;
    case CostKind::exponential: bad_cost = !(c.p1 >= 0.0) || !(c.p2 >= 0.0); break;
    }
    if (bad_cost)
        out.push_back({Severity::error, "bad-parameter", where + ".cost: parameters must be >= 0"});

    if (horizon > 0.0) {
        double q = site.inter_arrival.cdf(horizon);
        if (q >= 1.0)
            out.push_back({Severity::error, "contraction-violated",
                           where + ": contraction violated, F(t0) = 1 (inter-arrival surely shorter than horizon)"});
        else if (q > 0.99)
            out.push_back({Severity::warning, "slow-contraction",
                           where + ": F(t0) = " + std::to_string(q) + " > 0.99, fixed-point iteration will be slow"});
    }
}

}  // namespace detail

/// Errors and warnings for a problem instance; empty when everything is fine.
inline std::vector<Diagnostic> validate(const ProblemSpec& spec)
{
    std::vector<Diagnostic> out;
    if (!(spec.horizon > 0.0) || !std::isfinite(spec.horizon))
        out.push_back({Severity::error, "bad-parameter", "horizon must be positive and finite"});
    detail::check_site(spec.site1, spec.horizon, "site1", out);
    detail::check_site(spec.site2, spec.horizon, "site2", out);
    return out;
}

inline bool has_errors(const std::vector<Diagnostic>& diags)
{
    return std::any_of(diags.begin(), diags.end(),
                       [](const Diagnostic& d) { return d.severity == Severity::error; });
}

}  // namespace twostop

#endif  // TWOSTOP_MODEL_HPP
