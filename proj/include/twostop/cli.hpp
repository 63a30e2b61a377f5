#ifndef TWOSTOP_CLI_HPP
#define TWOSTOP_CLI_HPP

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "twostop/config.hpp"
#include "twostop/io.hpp"
#include "twostop/model.hpp"
#include "twostop/policy.hpp"
#include "twostop/sim.hpp"
#include "twostop/stage1.hpp"
#include "twostop/stage2.hpp"

namespace twostop {

/// Process exit codes shared by every command.
enum ExitCode : int {
    exit_ok = 0,
    exit_io = 1,
    exit_invalid = 2,
    exit_convergence = 3,
    exit_missing_artifact = 4,
};

namespace artifact {
inline constexpr const char* stage2_value = "stage2_y2.csv";
inline constexpr const char* stage2_delay = "stage2_rstar.csv";
inline constexpr const char* stage1_value = "stage1_y1.csv";
inline constexpr const char* stage1_delay = "stage1_rstar.csv";
inline constexpr const char* stage2_boundary = "boundary_stage2.csv";
inline constexpr const char* stage1_boundary = "boundary_stage1.csv";
inline constexpr const char* summary_json = "summary.json";
inline constexpr const char* summary_csv = "summary.csv";
inline constexpr const char* estimate = "estimate.json";
inline constexpr const char* trajectories = "trajectories.csv";
inline constexpr const char* compare = "compare.json";
inline constexpr const char* sweep = "sweep.csv";
}  // namespace artifact

/// Thrown when a command needs an artifact from an earlier run.
class MissingArtifact : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SolveOutcome {
    Stage2Solution stage2;
    Stage1Solution stage1;

    double value() const { return stage1.total_value; }
    /// Optimal delay at the very start, r*1(0, t0).
    double initial_delay(double horizon) const { return stage1.r_star.at(0.0, 0.0, horizon); }
    DoublePolicy policy() const
    {
        return {StagePolicy::gridded(stage1.r_star), StagePolicy::gridded(stage2.r_star), "solver"};
    }
};

/// Both stages; throws domain_error, ConvergenceError.
inline SolveOutcome solve_all(const RunConfig& cfg)
{
    SolveOutcome out;
    out.stage2 = solve_y2(cfg.problem, cfg.grid, cfg.solver);
    out.stage1 = solve_y1(cfg.problem, out.stage2, cfg.grid, cfg.solver);
    return out;
}

namespace detail {

inline std::filesystem::path prepare_dir(const RunConfig& cfg)
{
    std::filesystem::path dir(cfg.out_dir);
    std::filesystem::create_directories(dir);
    return dir;
}

inline std::ofstream open_out(const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path.string());
    return out;
}

/// Print diagnostics; true when the problem is unusable.
inline bool report_validation(const ProblemSpec& problem, std::ostream& err)
{
    const auto diags = validate(problem);
    for (const auto& d : diags)
        err << (d.severity == Severity::error ? "error: " : "warning: ") << d.code << ": " << d.message << '\n';
    return has_errors(diags);
}

inline json provenance(const std::string& hash, const char* schema)
{
    return {{"schema", schema}, {"generator", std::string("twostop ") + tool_version}, {"config_hash", hash}};
}

inline void write_json(const std::filesystem::path& path, const json& j)
{
    auto out = open_out(path);
    out << j.dump(2) << '\n';
}

/// Run a command body, mapping the error taxonomy to exit codes.
template <class F>
int guarded(std::ostream& err, F&& body)
{
    try {
        return body();
    } catch (const MissingArtifact& e) {
        err << "error: " << e.what() << '\n';
        return exit_missing_artifact;
    } catch (const ConfigError& e) {
        err << "error: " << e.what() << '\n';
        return exit_invalid;
    } catch (const UnsupportedInstance& e) {
        err << "error: " << e.what() << '\n';
        return exit_invalid;
    } catch (const ConvergenceError& e) {
        err << "error: " << e.what() << '\n';
        return exit_convergence;
    } catch (const std::domain_error& e) {
        err << "error: " << e.what() << '\n';
        return exit_invalid;
    } catch (const std::invalid_argument& e) {
        err << "error: " << e.what() << '\n';
        return exit_invalid;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return exit_io;
    }
}

}  // namespace detail

//---------------------------------------------------------------------------//
// solve
//---------------------------------------------------------------------------//

inline json summary_json(const RunConfig& cfg, const SolveOutcome& s)
{
    json j = detail::provenance(config_hash(cfg), "twostop-summary/1");
    j["V"] = s.value();
    j["q2"] = s.stage2.modulus;
    j["q1"] = s.stage1.modulus;
    j["stage2"] = {{"iterations", s.stage2.iterations}, {"residual", s.stage2.residual},
                   {"collapsed_elapsed", s.stage2.y2.rank() == 2}};
    j["stage1"] = {{"iterations", s.stage1.iterations}, {"residual", s.stage1.residual}};
    j["initial_delay"] = s.initial_delay(cfg.problem.horizon);
    j["grid"] = {{"mass_max", cfg.grid.mass_max}, {"mass_nodes", cfg.grid.mass_nodes},
                 {"time_nodes", cfg.grid.time_nodes}, {"quadrature_nodes", cfg.grid.quadrature_nodes}};
    return j;
}

/**
 * Solve both stages and write into the output directory:
 *
 *   stage2_y2.csv, stage2_rstar.csv   after-switch value and delay fields
 *   stage1_y1.csv, stage1_rstar.csv   before-switch value and delay fields
 *   boundary_stage2.csv               b,c,a_star (smallest mass with delay 0)
 *   boundary_stage1.csv               c,a_star
 *   summary.json or summary.csv       V, q2, q1, iterations, residuals
 */
inline int cmd_solve(const RunConfig& cfg, std::ostream& log = std::cout, std::ostream& err = std::cerr)
{
    return detail::guarded(err, [&] {
        if (detail::report_validation(cfg.problem, err))
            return static_cast<int>(exit_invalid);
        const auto s = solve_all(cfg);
        const auto dir = detail::prepare_dir(cfg);
        const auto hash = config_hash(cfg);

        save_field((dir / artifact::stage2_value).string(), s.stage2.y2, hash);
        save_field((dir / artifact::stage2_delay).string(), s.stage2.r_star, hash);
        save_field((dir / artifact::stage1_value).string(), s.stage1.y1, hash);
        save_field((dir / artifact::stage1_delay).string(), s.stage1.r_star, hash);

        const Axis mass{"a", 0.0, cfg.grid.mass_max, cfg.grid.mass_nodes};
        const Axis time{"t", 0.0, cfg.problem.horizon, cfg.grid.time_nodes};
        const auto policy = s.policy();
        {
            auto out = detail::open_out(dir / artifact::stage2_boundary);
            write_boundary(out, policy.stage2, mass, time, true, hash);
        }
        {
            auto out = detail::open_out(dir / artifact::stage1_boundary);
            write_boundary(out, policy.stage1, mass, time, false, hash);
        }

        const json summary = summary_json(cfg, s);
        if (cfg.format == "json") {
            detail::write_json(dir / artifact::summary_json, summary);
        } else {
            auto out = detail::open_out(dir / artifact::summary_csv);
            out << provenance_line(hash)
                << "V,q2,q1,stage2_iterations,stage2_residual,stage1_iterations,stage1_residual,initial_delay\n"
                << format_double(s.value()) << ',' << format_double(s.stage2.modulus) << ','
                << format_double(s.stage1.modulus) << ',' << s.stage2.iterations << ','
                << format_double(s.stage2.residual) << ',' << s.stage1.iterations << ','
                << format_double(s.stage1.residual) << ',' << format_double(s.initial_delay(cfg.problem.horizon))
                << '\n';
        }
        log << "V = " << format_double(s.value()) << " (q2 = " << s.stage2.modulus << ", q1 = " << s.stage1.modulus
            << ", iterations " << s.stage2.iterations << "/" << s.stage1.iterations << ")\n";
        return static_cast<int>(exit_ok);
    });
}

//---------------------------------------------------------------------------//
// simulate
//---------------------------------------------------------------------------//

enum class PolicySource { solved, threshold, baseline, never_stop };

inline std::optional<PolicySource> parse_policy_source(const std::string& name)
{
    if (name == "solved") return PolicySource::solved;
    if (name == "threshold") return PolicySource::threshold;
    if (name == "baseline" || name == "stop-now") return PolicySource::baseline;
    if (name == "never-stop") return PolicySource::never_stop;
    return std::nullopt;
}

inline const char* to_string(PolicySource s)
{
    switch (s) {
    case PolicySource::solved: return "solved";
    case PolicySource::threshold: return "threshold";
    case PolicySource::baseline: return "baseline";
    case PolicySource::never_stop: return "never-stop";
    }
    return "?";
}

/// Rebuild the solver policy from the delay fields of a prior solve.
inline DoublePolicy load_solved_policy(const RunConfig& cfg)
{
    const std::filesystem::path dir(cfg.out_dir);
    const auto p1 = dir / artifact::stage1_delay;
    const auto p2 = dir / artifact::stage2_delay;
    for (const auto& p : {p1, p2})
        if (!std::filesystem::exists(p))
            throw MissingArtifact("missing " + p.string() + "; run 'twostop solve' with this config first");
    return {StagePolicy::gridded(load_field(p1.string())), StagePolicy::gridded(load_field(p2.string())), "solved"};
}

inline DoublePolicy make_policy(const RunConfig& cfg, PolicySource source)
{
    const auto& p = cfg.problem;
    switch (source) {
    case PolicySource::solved: return load_solved_policy(cfg);
    case PolicySource::threshold:
        return {threshold_policy(p.site1, 1, p.horizon), threshold_policy(p.site2, 2, p.horizon), "threshold"};
    case PolicySource::baseline: return {StagePolicy::stop_now(), StagePolicy::stop_now(), "baseline"};
    case PolicySource::never_stop: return {StagePolicy::never_stop(), StagePolicy::never_stop(), "never-stop"};
    }
    throw std::invalid_argument("unknown policy source");
}

inline json estimate_json(const MCEstimate& e, const std::string& policy, const std::string& hash)
{
    json j = detail::provenance(hash, "twostop-estimate/1");
    j["policy"] = policy;
    j["mean"] = e.mean;
    j["std_error"] = e.std_error;
    j["replications"] = e.replications;
    j["seed"] = e.seed;
    return j;
}

/**
 * Monte Carlo estimate of a policy. Writes estimate.json and, when
 * `trajectories` > 0, the first that many rollouts to trajectories.csv.
 */
inline int cmd_simulate(const RunConfig& cfg, PolicySource source, std::uint64_t trajectories = 0,
                        std::ostream& log = std::cout, std::ostream& err = std::cerr)
{
    return detail::guarded(err, [&] {
        if (detail::report_validation(cfg.problem, err))
            return static_cast<int>(exit_invalid);
        const auto policy = make_policy(cfg, source);
        const auto dir = detail::prepare_dir(cfg);
        const auto hash = config_hash(cfg);
        const auto est = estimate(cfg.problem, policy, cfg.simulation.replications, cfg.simulation.seed,
                                  cfg.solver.threads);
        detail::write_json(dir / artifact::estimate, estimate_json(est, to_string(source), hash));
        if (trajectories > 0) {
            auto out = detail::open_out(dir / artifact::trajectories);
            write_trajectories_header(out, hash);
            for (std::uint64_t k = 0; k < trajectories; ++k)
                write_trajectory(out, k, rollout(cfg.problem, policy, cfg.simulation.seed, k));
        }
        log << to_string(source) << ": mean " << format_double(est.mean) << " (SE "
            << format_double(est.std_error) << ", n = " << est.replications << ")\n";
        return static_cast<int>(exit_ok);
    });
}

//---------------------------------------------------------------------------//
// compare
//---------------------------------------------------------------------------//

struct DecayPoint {
    int k = 0;
    double error = 0.0;  ///< sup-norm distance of the K-step iterate to the fixed point
    double ratio = NAN;  ///< error(K) / error(K-1); NaN when undefined
};

struct PerturbationRow {
    std::string label;
    double mean = 0.0;
    double std_error = 0.0;
    double mean_difference = 0.0;
    double joint_std_error = 0.0;
    bool flagged = false;
};

struct CompareReport {
    std::string config_hash;
    double solver_value = 0.0;
    double q2 = 0.0;
    MCEstimate mc;
    std::vector<PerturbationRow> perturbations;
    std::vector<DecayPoint> decay;

    bool any_flagged() const
    {
        for (const auto& p : perturbations)
            if (p.flagged)
                return true;
        return false;
    }
};

namespace detail {

// NaN is not representable in JSON: it travels as null.
inline json number_or_null(double x) { return std::isfinite(x) ? json(x) : json(nullptr); }
inline double number_or_nan(const json& j) { return j.is_null() ? NAN : j.get<double>(); }

}  // namespace detail

inline json to_json(const CompareReport& r)
{
    json j = detail::provenance(r.config_hash, "twostop-compare/1");
    j["solver_value"] = r.solver_value;
    j["q2"] = r.q2;
    j["monte_carlo"] = {{"mean", r.mc.mean}, {"std_error", r.mc.std_error},
                        {"replications", r.mc.replications}, {"seed", r.mc.seed}};
    json rows = json::array();
    for (const auto& p : r.perturbations)
        rows.push_back({{"label", p.label}, {"mean", p.mean}, {"std_error", p.std_error},
                        {"mean_difference", p.mean_difference}, {"joint_std_error", p.joint_std_error},
                        {"flagged", p.flagged}});
    j["perturbations"] = rows;
    json decay = json::array();
    for (const auto& d : r.decay)
        decay.push_back({{"k", d.k}, {"error", d.error}, {"ratio", detail::number_or_null(d.ratio)}});
    j["finite_k"] = decay;
    return j;
}

inline CompareReport compare_report_from_json(const json& j)
{
    if (j.value("schema", "") != "twostop-compare/1")
        throw ConfigError("not a twostop-compare/1 document");
    CompareReport r;
    r.config_hash = j.at("config_hash").get<std::string>();
    r.solver_value = j.at("solver_value").get<double>();
    r.q2 = j.at("q2").get<double>();
    const auto& mc = j.at("monte_carlo");
    r.mc = {mc.at("mean").get<double>(), mc.at("std_error").get<double>(),
            mc.at("replications").get<std::uint64_t>(), mc.at("seed").get<std::uint64_t>()};
    for (const auto& p : j.at("perturbations"))
        r.perturbations.push_back({p.at("label").get<std::string>(), p.at("mean").get<double>(),
                                   p.at("std_error").get<double>(), p.at("mean_difference").get<double>(),
                                   p.at("joint_std_error").get<double>(), p.at("flagged").get<bool>()});
    for (const auto& d : j.at("finite_k"))
        r.decay.push_back({d.at("k").get<int>(), d.at("error").get<double>(), detail::number_or_nan(d.at("ratio"))});
    return r;
}

/**
 * Distances ||y_{2,K} - y2|| for K = 0..max_k against a tightly converged
 * reference, with successive ratios. Ratios are left undefined once the
 * error reaches the reference accuracy.
 */
inline std::vector<DecayPoint> finite_k_decay(const RunConfig& cfg, int max_k, double reference_tolerance = 1e-13)
{
    SolverOptions tight = cfg.solver;
    tight.tolerance = std::min(cfg.solver.tolerance, reference_tolerance);
    tight.max_iterations = 0;
    const Stage2Operator op(cfg.problem, cfg.grid, tight);
    const auto reference = solve_y2(op);
    const auto iterates = finite_k_y2(op, max_k);
    const double floor = 100.0 * tight.tolerance;
    std::vector<DecayPoint> out;
    for (int k = 0; k <= max_k; ++k) {
        DecayPoint p;
        p.k = k;
        p.error = distance(iterates[k], reference.y2);
        if (k > 0 && out.back().error > floor && p.error > floor)
            p.ratio = p.error / out.back().error;
        out.push_back(p);
    }
    return out;
}

inline CompareReport run_compare(const RunConfig& cfg, int max_k = 10)
{
    const auto s = solve_all(cfg);
    const auto policy = s.policy();
    const auto probe = dominance_probe(cfg.problem, policy, delay_perturbations(policy),
                                       cfg.simulation.replications, cfg.simulation.seed, cfg.solver.threads);
    CompareReport r;
    r.config_hash = config_hash(cfg);
    r.solver_value = s.value();
    r.q2 = s.stage2.modulus;
    r.mc = probe.solver;
    for (const auto& e : probe.entries)
        r.perturbations.push_back({e.label, e.estimate.mean, e.estimate.std_error, e.mean_difference,
                                   e.joint_std_error, e.flagged});
    r.decay = finite_k_decay(cfg, max_k);
    return r;
}

/// Solver value vs Monte Carlo vs perturbed policies, plus the finite-K decay curve, into compare.json.
inline int cmd_compare(const RunConfig& cfg, int max_k = 10, std::ostream& log = std::cout,
                       std::ostream& err = std::cerr)
{
    return detail::guarded(err, [&] {
        if (detail::report_validation(cfg.problem, err))
            return static_cast<int>(exit_invalid);
        const auto report = run_compare(cfg, max_k);
        const auto dir = detail::prepare_dir(cfg);
        detail::write_json(dir / artifact::compare, to_json(report));
        log << "solver V " << format_double(report.solver_value) << ", MC " << format_double(report.mc.mean)
            << " (SE " << format_double(report.mc.std_error) << ")\n";
        for (const auto& p : report.perturbations)
            log << "  " << p.label << ": diff " << format_double(p.mean_difference) << " (SE "
                << format_double(p.joint_std_error) << ")" << (p.flagged ? " beats solver" : "") << '\n';
        return static_cast<int>(exit_ok);
    });
}

//---------------------------------------------------------------------------//
// sweep
//---------------------------------------------------------------------------//

/// Copy of `cfg` with the dotted parameter (e.g. "site2.inter_arrival.rate") set to `value`.
inline RunConfig with_parameter(const RunConfig& cfg, const std::string& path, double value)
{
    json j = emit_config(cfg);
    json* node = &j;
    std::string key;
    std::istringstream parts(path);
    std::vector<std::string> keys;
    while (std::getline(parts, key, '.'))
        keys.push_back(key);
    if (keys.empty())
        throw ConfigError("sweep: empty parameter path");
    for (std::size_t i = 0; i + 1 < keys.size(); ++i) {
        if (!node->is_object() || !node->contains(keys[i]))
            throw ConfigError("sweep: '" + path + "' does not name a parameter");
        node = &(*node)[keys[i]];
    }
    if (!node->is_object())
        throw ConfigError("sweep: '" + path + "' does not name a parameter");
    auto& slot = (*node)[keys.back()];
    if (slot.is_number_integer() && value == std::floor(value))
        slot = static_cast<std::int64_t>(value);
    else
        slot = value;
    RunConfig out = parse_config(j);
    out.solver.threads = cfg.solver.threads;
    return out;
}

struct SweepRow {
    double value = 0.0;
    double V = NAN;
    double q2 = NAN;
    double q1 = NAN;
    int iterations2 = 0;
    int iterations1 = 0;
    double initial_delay = NAN;
    std::string status = "ok";
};

inline SweepRow sweep_point(const RunConfig& cfg, const std::string& path, double value)
{
    SweepRow row;
    row.value = value;
    try {
        const RunConfig point = with_parameter(cfg, path, value);
        const auto diags = validate(point.problem);
        if (has_errors(diags)) {
            for (const auto& d : diags)
                if (d.severity == Severity::error) {
                    row.status = "invalid: " + d.code;
                    break;
                }
            return row;
        }
        const auto s = solve_all(point);
        row.V = s.value();
        row.q2 = s.stage2.modulus;
        row.q1 = s.stage1.modulus;
        row.iterations2 = s.stage2.iterations;
        row.iterations1 = s.stage1.iterations;
        row.initial_delay = s.initial_delay(point.problem.horizon);
    } catch (const ConvergenceError&) {
        row.status = "no-convergence";
    } catch (const std::exception& e) {
        row.status = std::string("error: ") + e.what();
    }
    return row;
}

inline std::string csv_field(std::string s)
{
    if (s.find_first_of(",\"\n") == std::string::npos)
        return s;
    std::string out = "\"";
    for (char ch : s)
        out += ch == '"' ? std::string("\"\"") : std::string(1, ch);
    return out + '"';
}

/**
 * One solve per value of a dotted parameter; writes sweep.csv with columns
 * value,V,q2,q1,stage2_iterations,stage1_iterations,initial_delay,status.
 * Failed points keep their row (status other than "ok") and the sweep
 * continues; the exit code is then nonzero.
 */
inline int cmd_sweep(const RunConfig& cfg, const std::string& path, const std::vector<double>& values,
                     std::ostream& log = std::cout, std::ostream& err = std::cerr)
{
    return detail::guarded(err, [&] {
        // reject a bad path before doing any work
        with_parameter(cfg, path, values.empty() ? 0.0 : values.front());
        const auto dir = detail::prepare_dir(cfg);
        auto out = detail::open_out(dir / artifact::sweep);
        out << provenance_line(config_hash(cfg)) << "# parameter " << path << '\n'
            << "value,V,q2,q1,stage2_iterations,stage1_iterations,initial_delay,status\n";
        bool failed = false;
        for (double v : values) {
            const auto row = sweep_point(cfg, path, v);
            out << format_double(row.value) << ',' << format_double(row.V) << ',' << format_double(row.q2) << ','
                << format_double(row.q1) << ',' << row.iterations2 << ',' << row.iterations1 << ','
                << format_double(row.initial_delay) << ',' << csv_field(row.status) << '\n';
            log << path << " = " << format_double(v) << ": "
                << (row.status == "ok" ? "V = " + format_double(row.V) : row.status) << '\n';
            if (row.status != "ok") {
                err << "error: " << path << " = " << format_double(v) << ": " << row.status << '\n';
                failed = true;
            }
        }
        if (failed)
            return static_cast<int>(exit_invalid);
        return static_cast<int>(exit_ok);
    });
}

}  // namespace twostop

#endif  // TWOSTOP_CLI_HPP
