#ifndef TWOSTOP_SIM_HPP
#define TWOSTOP_SIM_HPP

#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include "twostop/model.hpp"
#include "twostop/parallel.hpp"
#include "twostop/policy.hpp"

namespace twostop {

//---------------------------------------------------------------------------//
// Random streams
//---------------------------------------------------------------------------//

inline std::uint64_t splitmix64(std::uint64_t x)
{
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/**
 * Reproducible substream for (seed, replication, lane).
 *
 * Replication k always sees the same numbers no matter how replications
 * are scheduled across threads. Uniforms are built from the top 53 bits so
 * output is identical across standard libraries.
 */
class Stream {
public:
    Stream(std::uint64_t seed, std::uint64_t replication, std::uint64_t lane)
    {
        std::uint64_t key = splitmix64(splitmix64(seed) ^ splitmix64(replication * 4 + lane + 1));
        std::seed_seq seq{static_cast<std::uint32_t>(key), static_cast<std::uint32_t>(key >> 32),
                          static_cast<std::uint32_t>(lane)};
        engine_.seed(seq);
    }

    /// Uniform on [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double sample(const DistributionSpec& d) { return d.quantile(uniform()); }

private:
    std::mt19937_64 engine_;
};

//---------------------------------------------------------------------------//
// Claim streams and rollouts
//---------------------------------------------------------------------------//

struct Claim {
    double time = 0.0;
    double mass = 0.0;
};

/// Lazy renewal catch stream from `start`, truncated at the horizon.
class ClaimStream {
public:
    ClaimStream(const SiteModel& site, double start, double horizon, Stream& rng)
        : site_(&site), now_(start), horizon_(horizon), rng_(&rng)
    {
    }

    std::optional<Claim> next()
    {
        if (done_)
            return std::nullopt;
        double gap = rng_->sample(site_->inter_arrival);
        double mass = rng_->sample(site_->catch_size);
        now_ += gap;
        if (now_ > horizon_) {
            done_ = true;
            return std::nullopt;
        }
        return Claim{now_, mass};
    }

private:
    const SiteModel* site_;
    double now_;
    double horizon_;
    Stream* rng_;
    bool done_ = false;
};

inline ClaimStream sample_stage(const SiteModel& site, double start, double horizon, Stream& rng)
{
    if (start > horizon)
        throw std::invalid_argument("sample_stage: start after horizon");
    return ClaimStream(site, start, horizon, rng);
}

struct Trajectory {
    std::vector<Claim> stage1;  ///< site-1 claims up to the switch
    std::vector<Claim> stage2;  ///< site-2 claims up to the stop
    double switch_time = 0.0;
    double stop_time = 0.0;
    double payoff = 0.0;

    double mass_at_switch() const
    {
        double m = 0.0;
        for (const auto& c : stage1)
            m += c.mass;
        return m;
    }
    double total_mass() const
    {
        double m = mass_at_switch();
        for (const auto& c : stage2)
            m += c.mass;
        return m;
    }
};

namespace detail {

/// Run one stage on a lazy stream; returns the stop time, appends used claims.
inline double run_stage(const StagePolicy& policy, ClaimStream& stream, double start, double horizon,
                        std::vector<Claim>& claims)
{
    double t = start;
    double a = 0.0;
    for (;;) {
        const double c = horizon - t;
        const double r = policy.delay(a, t - start, c);
        auto next = stream.next();
        if (!next || next->time > t + r)
            return r >= c ? horizon : std::min(t + r, horizon);
        t = next->time;
        a += next->mass;
        claims.push_back(*next);
    }
}

}  // namespace detail

/// One realization of the switch-then-stop process under a policy.
inline Trajectory rollout(const ProblemSpec& spec, const DoublePolicy& policy, std::uint64_t seed,
                          std::uint64_t replication)
{
    Trajectory tr;
    Stream rng1(seed, replication, 1);
    Stream rng2(seed, replication, 2);
    auto s1 = sample_stage(spec.site1, 0.0, spec.horizon, rng1);
    tr.switch_time = detail::run_stage(policy.stage1, s1, 0.0, spec.horizon, tr.stage1);
    auto s2 = sample_stage(spec.site2, tr.switch_time, spec.horizon, rng2);
    tr.stop_time = detail::run_stage(policy.stage2, s2, tr.switch_time, spec.horizon, tr.stage2);
    tr.payoff = payoff_z(spec, tr.switch_time, tr.stop_time, tr.mass_at_switch(), tr.total_mass());
    return tr;
}

//---------------------------------------------------------------------------//
// Estimation
//---------------------------------------------------------------------------//

struct MCEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::uint64_t replications = 0;
    std::uint64_t seed = 0;
};

inline MCEstimate summarize(const std::vector<double>& z, std::uint64_t seed)
{
    MCEstimate est;
    est.replications = z.size();
    est.seed = seed;
    if (z.empty())
        return est;
    double sum = 0.0;
    for (double v : z)
        sum += v;
    est.mean = sum / static_cast<double>(z.size());
    if (z.size() > 1) {
        double ss = 0.0;
        for (double v : z)
            ss += (v - est.mean) * (v - est.mean);
        est.std_error = std::sqrt(ss / static_cast<double>(z.size() - 1) / static_cast<double>(z.size()));
    }
    return est;
}

/// Payoffs of replications [0, n), identical for any thread count.
inline std::vector<double> payoffs(const ProblemSpec& spec, const DoublePolicy& policy, std::uint64_t n,
                                   std::uint64_t seed, unsigned threads = 0)
{
    std::vector<double> z(n);
    const int blocks = static_cast<int>(std::min<std::uint64_t>(n, 256));
    par_for(blocks, threads, [&](int b) {
        for (std::uint64_t k = static_cast<std::uint64_t>(b); k < n; k += static_cast<std::uint64_t>(blocks))
            z[k] = rollout(spec, policy, seed, k).payoff;
    });
    return z;
}

inline MCEstimate estimate(const ProblemSpec& spec, const DoublePolicy& policy, std::uint64_t n,
                           std::uint64_t seed, unsigned threads = 0)
{
    if (n < 2)
        throw std::invalid_argument("estimate: need at least 2 replications");
    return summarize(payoffs(spec, policy, n, seed, threads), seed);
}

struct DominanceEntry {
    std::string label;
    MCEstimate estimate;
    double mean_difference = 0.0;  ///< perturbed minus solver, paired
    double joint_std_error = 0.0;  ///< standard error of the paired difference
    bool flagged = false;          ///< difference exceeds 3 joint standard errors
};

struct DominanceReport {
    MCEstimate solver;
    std::vector<DominanceEntry> entries;

    bool any_flagged() const
    {
        for (const auto& e : entries)
            if (e.flagged)
                return true;
        return false;
    }
};

/**
 * Compare perturbed policies against the solver policy with common random
 * numbers (replication k uses the same substreams for every policy).
 */
inline DominanceReport dominance_probe(const ProblemSpec& spec, const DoublePolicy& solver,
                                       const std::vector<DoublePolicy>& perturbations, std::uint64_t n,
                                       std::uint64_t seed, unsigned threads = 0)
{
    DominanceReport report;
    const auto base = payoffs(spec, solver, n, seed, threads);
    report.solver = summarize(base, seed);
    for (const auto& p : perturbations) {
        const auto z = payoffs(spec, p, n, seed, threads);
        std::vector<double> diff(n);
        for (std::uint64_t k = 0; k < n; ++k)
            diff[k] = z[k] - base[k];
        auto d = summarize(diff, seed);
        DominanceEntry e;
        e.label = p.label;
        e.estimate = summarize(z, seed);
        e.mean_difference = d.mean;
        e.joint_std_error = d.std_error;
        e.flagged = d.mean > 3.0 * d.std_error && d.mean > 0.0;
        report.entries.push_back(std::move(e));
    }
    return report;
}

/// The usual perturbation set: delays scaled by 0.5, 0.9, 1.1 and 2.
inline std::vector<DoublePolicy> delay_perturbations(const DoublePolicy& base)
{
    std::vector<DoublePolicy> out;
    for (double f : {0.5, 0.9, 1.1, 2.0})
        out.push_back(scale_delays(base, f, "scale x" + std::to_string(f).substr(0, 3)));
    return out;
}

}  // namespace twostop

#endif  // TWOSTOP_SIM_HPP
