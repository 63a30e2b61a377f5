#ifndef TWOSTOP_POLICY_HPP
#define TWOSTOP_POLICY_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <utility>

#include "twostop/model.hpp"
#include "twostop/numerics.hpp"

namespace twostop {

enum class PolicyKind { gridded, threshold, never_stop, stop_now };

inline const char* to_string(PolicyKind kind)
{
    switch (kind) {
    case PolicyKind::gridded: return "gridded";
    case PolicyKind::threshold: return "threshold";
    case PolicyKind::never_stop: return "never-stop";
    case PolicyKind::stop_now: return "stop-now";
    }
    return "?";
}

class UnsupportedInstance : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Myopic rule: stop once hazard * Delta(a) <= c'(elapsed).
struct ThresholdRule {
    SiteModel site;
    double hazard = 0.0;
    double horizon = 1.0;

    double gain_rate(double a) const { return hazard * delta_expect(site, a); }

    /// Smallest r in [0, c] with gain_rate(a) <= c'(b + r), else c.
    double delay(double a, double b, double c) const
    {
        const double target = gain_rate(a);
        const auto& cost = site.cost;
        if (target <= cost.derivative(b))
            return 0.0;
        if (target > cost.derivative(b + c))
            return c;
        // c' is nondecreasing for convex cost: unique crossing
        double lo = 0.0, hi = c;
        const double tol = 1e-9 * horizon;
        while (hi - lo > tol) {
            double mid = 0.5 * (lo + hi);
            (target <= cost.derivative(b + mid) ? hi : lo) = mid;
        }
        return hi;
    }
};

/**
 * Delay rule for one stage: after each claim, the planned extra wait R
 * given the post-claim state (a, b, c). The stage ends at T + R unless
 * another claim arrives first.
 *
 * Gridded policies interpolate a solver maximizer field. A scale factor
 * multiplies the delay (clamped to [0, c]); it exists for perturbation
 * studies and is 1 otherwise.
 */
class StagePolicy {
public:
    StagePolicy() = default;

    static StagePolicy gridded(ValueField r_star)
    {
        StagePolicy p;
        p.kind_ = PolicyKind::gridded;
        p.r_star_ = std::move(r_star);
        return p;
    }
    static StagePolicy never_stop() { return with_kind(PolicyKind::never_stop); }
    static StagePolicy stop_now() { return with_kind(PolicyKind::stop_now); }
    static StagePolicy threshold(ThresholdRule rule)
    {
        StagePolicy p;
        p.kind_ = PolicyKind::threshold;
        p.rule_ = std::move(rule);
        return p;
    }

    PolicyKind kind() const { return kind_; }
    double scale() const { return scale_; }
    const ValueField& r_star() const { return r_star_; }
    const std::optional<ThresholdRule>& rule() const { return rule_; }

    StagePolicy scaled(double factor) const
    {
        StagePolicy p = *this;
        p.scale_ *= factor;
        return p;
    }

    double delay(double a, double b, double c) const
    {
        if (c <= 0.0)
            return 0.0;
        double r = 0.0;
        switch (kind_) {
        case PolicyKind::stop_now: r = 0.0; break;
        case PolicyKind::never_stop: r = c; break;
        case PolicyKind::gridded: r = r_star_.at(a, b, c); break;
        case PolicyKind::threshold: r = rule_->delay(a, b, c); break;
        }
        r = std::clamp(scale_ * r, 0.0, c);
        // interpolating r* = c between nodes can land a rounding error short of c
        return r >= c * (1.0 - 1e-12) ? c : r;
    }

    double delay(const StateStage2& s) const { return delay(s.a, s.b, s.c); }
    /// Stage-1 states start at time 0, so elapsed time is horizon - c.
    double delay(const StateStage1& s, double horizon) const { return delay(s.a, horizon - s.c, s.c); }

private:
    static StagePolicy with_kind(PolicyKind k)
    {
        StagePolicy p;
        p.kind_ = k;
        return p;
    }

    PolicyKind kind_ = PolicyKind::stop_now;
    ValueField r_star_;
    std::optional<ThresholdRule> rule_;
    double scale_ = 1.0;
};

struct DoublePolicy {
    StagePolicy stage1;
    StagePolicy stage2;
    std::string label;
};

inline DoublePolicy scale_delays(const DoublePolicy& p, double factor, std::string label = {})
{
    return {p.stage1.scaled(factor), p.stage2.scaled(factor), std::move(label)};
}

/**
 * Closed-form policy for exponential arrivals, concave nondecreasing g and
 * convex c: wait until hazard * Delta(a) <= c'(elapsed). Linear g with
 * linear c compares constants and reduces to never-stop or stop-now.
 * The stage argument only selects the error message; stage-1 rules use
 * elapsed time since 0 and ignore the continuation after a switch.
 */
inline StagePolicy threshold_policy(const SiteModel& site, int stage, double horizon)
{
    const std::string where = "threshold_policy(stage " + std::to_string(stage) + "): ";
    if (site.inter_arrival.kind != DistributionKind::exponential)
        throw UnsupportedInstance(where + "inter-arrival law is not exponential");
    if (!site.utility.is_concave())
        throw UnsupportedInstance(where + "utility is not concave");
    if (!site.cost.is_convex())
        throw UnsupportedInstance(where + "cost is not convex");
    ThresholdRule rule{site, site.inter_arrival.p1, horizon};
    if (site.utility.is_linear() && site.cost.is_linear()) {
        double gain = rule.gain_rate(0.0);
        return gain <= site.cost.derivative(0.0) ? StagePolicy::stop_now() : StagePolicy::never_stop();
    }
    return StagePolicy::threshold(rule);
}

/// Index of the stopping claim and the stop time.
struct StopDecision {
    int index = 0;
    double time = 0.0;
};

/**
 * Walk a claim sequence and apply the delay rule.
 *
 * times[0] is the stage start with masses[0] = 0; later entries are the
 * claims (strictly increasing, at most the horizon). Stops at the first i
 * with R_i < T_{i+1} - T_i; the stop time is T_i + R_i, and exactly the
 * horizon when the delay uses up the remaining time.
 */
inline StopDecision stop_index(const StagePolicy& policy, std::span<const double> times,
                               std::span<const double> masses, double horizon)
{
    if (times.empty() || times.size() != masses.size())
        throw std::invalid_argument("stop_index: need matching, nonempty claim lists");
    const double start = times[0];
    double a = 0.0;
    for (std::size_t i = 0; i < times.size(); ++i) {
        if (i > 0 && !(times[i] > times[i - 1]))
            throw std::invalid_argument("stop_index: claim times must be strictly increasing");
        a += masses[i];
        const double c = horizon - times[i];
        const double r = policy.delay(a, times[i] - start, c);
        const bool last = i + 1 == times.size();
        if (last || r < times[i + 1] - times[i]) {
            double tau = r >= c ? horizon : std::min(times[i] + r, horizon);
            return {static_cast<int>(i), tau};
        }
    }
    return {static_cast<int>(times.size()) - 1, horizon};
}

}  // namespace twostop

#endif  // TWOSTOP_POLICY_HPP
