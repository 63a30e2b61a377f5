#ifndef TWOSTOP_CONFIG_HPP
#define TWOSTOP_CONFIG_HPP

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "twostop/model.hpp"
#include "twostop/numerics.hpp"
#include "twostop/profile_kernel.hpp"

namespace twostop {

using json = nlohmann::json;

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct SimulationConfig {
    std::uint64_t replications = 100000;
    std::uint64_t seed = 1;
};

/// Everything a command needs, parsed from one JSON document.
struct RunConfig {
    ProblemSpec problem;
    GridSpec grid;
    bool auto_mass_max = false;  ///< mass_max omitted: derived from the problem
    SolverOptions solver;
    SimulationConfig simulation;
    std::string out_dir = "out";
    std::string format = "json";
};

namespace detail {

// Parameter names per catalog entry, in positional order.
using Catalog = std::map<std::string, std::vector<std::pair<std::string, double>>>;

// NaN default means required.
inline const Catalog& distribution_catalog()
{
    static const Catalog c{
        {"exponential", {{"rate", NAN}}},
        {"weibull", {{"shape", NAN}, {"scale", NAN}}},
        {"uniform", {{"low", NAN}, {"high", NAN}}},
        {"gamma", {{"shape", NAN}, {"scale", NAN}}},
        {"deterministic", {{"value", NAN}}},
    };
    return c;
}

inline const Catalog& utility_catalog()
{
    static const Catalog c{
        {"linear", {{"slope", NAN}, {"intercept", 0.0}}},
        {"saturating", {{"bound", NAN}, {"rate", NAN}}},
        {"power_capped", {{"scale", NAN}, {"power", NAN}, {"cap", NAN}}},
    };
    return c;
}

inline const Catalog& cost_catalog()
{
    static const Catalog c{
        {"linear", {{"rate", NAN}, {"offset", 0.0}}},
        {"quadratic", {{"offset", 0.0}, {"linear", NAN}, {"quadratic", NAN}}},
        {"exponential", {{"scale", NAN}, {"rate", NAN}}},
    };
    return c;
}

inline void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& where)
{
    if (!j.is_object())
        throw ConfigError(where + ": expected an object");
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError(where + ": unknown key '" + it.key() + "'");
}

inline double number(const json& j, const std::string& key, const std::string& where)
{
    if (!j.contains(key))
        throw ConfigError(where + ": missing '" + key + "'");
    if (!j.at(key).is_number())
        throw ConfigError(where + "." + key + ": expected a number");
    return j.at(key).get<double>();
}

/// kind + parameter map -> (kind name, positional parameters)
inline std::pair<std::string, std::vector<double>> parse_entry(const json& j, const Catalog& catalog,
                                                               const std::string& where)
{
    if (!j.is_object() || !j.contains("kind") || !j.at("kind").is_string())
        throw ConfigError(where + ": need an object with a string 'kind'");
    const auto kind = j.at("kind").get<std::string>();
    auto it = catalog.find(kind);
    if (it == catalog.end())
        throw ConfigError(where + ": unknown kind '" + kind + "'");
    std::set<std::string> allowed{"kind"};
    for (const auto& [name, def] : it->second)
        allowed.insert(name);
    reject_unknown(j, allowed, where);
    std::vector<double> params;
    for (const auto& [name, def] : it->second)
        params.push_back(j.contains(name) || std::isnan(def) ? number(j, name, where) : def);
    return {kind, params};
}

inline json emit_entry(const std::string& kind, const std::vector<double>& params, const Catalog& catalog)
{
    json j;
    j["kind"] = kind;
    const auto& names = catalog.at(kind);
    for (std::size_t i = 0; i < names.size(); ++i)
        j[names[i].first] = params[i];
    return j;
}

inline DistributionSpec parse_distribution(const json& j, const std::string& where)
{
    auto [kind, p] = parse_entry(j, distribution_catalog(), where);
    if (kind == "exponential") return DistributionSpec::exponential(p[0]);
    if (kind == "weibull") return DistributionSpec::weibull(p[0], p[1]);
    if (kind == "uniform") return DistributionSpec::uniform(p[0], p[1]);
    if (kind == "gamma") return DistributionSpec::gamma(p[0], p[1]);
    return DistributionSpec::deterministic(p[0]);
}

inline json emit_distribution(const DistributionSpec& d)
{
    std::vector<double> p{d.p1};
    if (d.kind == DistributionKind::weibull || d.kind == DistributionKind::uniform
        || d.kind == DistributionKind::gamma)
        p.push_back(d.p2);
    return emit_entry(to_string(d.kind), p, distribution_catalog());
}

inline UtilitySpec parse_utility(const json& j, const std::string& where)
{
    auto [kind, p] = parse_entry(j, utility_catalog(), where);
    if (kind == "linear") return UtilitySpec::linear(p[0], p[1]);
    if (kind == "saturating") return UtilitySpec::saturating(p[0], p[1]);
    return UtilitySpec::power_capped(p[0], p[1], p[2]);
}

inline json emit_utility(const UtilitySpec& g)
{
    switch (g.kind) {
    case UtilityKind::linear: return emit_entry("linear", {g.p1, g.p2}, utility_catalog());
    case UtilityKind::saturating: return emit_entry("saturating", {g.p1, g.p2}, utility_catalog());
    case UtilityKind::power_capped: return emit_entry("power_capped", {g.p1, g.p2, g.p3}, utility_catalog());
    }
    return {};
}

inline CostSpec parse_cost(const json& j, const std::string& where)
{
    auto [kind, p] = parse_entry(j, cost_catalog(), where);
    if (kind == "linear") return CostSpec::linear(p[0], p[1]);
    if (kind == "quadratic") return CostSpec::quadratic(p[0], p[1], p[2]);
    return CostSpec::exponential(p[0], p[1]);
}

inline json emit_cost(const CostSpec& c)
{
    switch (c.kind) {
    case CostKind::linear: return emit_entry("linear", {c.p1, c.p2}, cost_catalog());
    case CostKind::quadratic: return emit_entry("quadratic", {c.p1, c.p2, c.p3}, cost_catalog());
    case CostKind::exponential: return emit_entry("exponential", {c.p1, c.p2}, cost_catalog());
    }
    return {};
}

inline SiteModel parse_site(const json& j, const std::string& where)
{
    reject_unknown(j, {"inter_arrival", "catch_size", "utility", "cost"}, where);
    for (const char* key : {"inter_arrival", "catch_size", "utility", "cost"})
        if (!j.contains(key))
            throw ConfigError(where + ": missing '" + key + "'");
    return {parse_distribution(j.at("inter_arrival"), where + ".inter_arrival"),
            parse_distribution(j.at("catch_size"), where + ".catch_size"),
            parse_utility(j.at("utility"), where + ".utility"), parse_cost(j.at("cost"), where + ".cost")};
}

inline json emit_site(const SiteModel& s)
{
    return {{"inter_arrival", emit_distribution(s.inter_arrival)},
            {"catch_size", emit_distribution(s.catch_size)},
            {"utility", emit_utility(s.utility)},
            {"cost", emit_cost(s.cost)}};
}

inline int integer(const json& j, const std::string& key, const std::string& where)
{
    if (!j.at(key).is_number_integer())
        throw ConfigError(where + "." + key + ": expected an integer");
    return j.at(key).get<int>();
}

}  // namespace detail

/**
 * Parse a run configuration. Unknown keys anywhere are errors.
 *
 * {
 *   "horizon": 2.0,
 *   "site1": {"inter_arrival": {...}, "catch_size": {...}, "utility": {...}, "cost": {...}},
 *   "site2": {...},
 *   "grid": {"mass_max": 10, "mass_nodes": 33, "time_nodes": 17, "quadrature_nodes": 8},
 *   "solver": {"tolerance": 1e-6, "max_iterations": 0, "refine": true},
 *   "simulation": {"replications": 100000, "seed": 1},
 *   "output": {"dir": "out", "format": "json"}
 * }
 *
 * Only horizon, site1 and site2 are required.
 */
inline RunConfig parse_config(const json& j)
{
    detail::reject_unknown(j, {"horizon", "site1", "site2", "grid", "solver", "simulation", "output"}, "config");
    RunConfig cfg;
    cfg.problem.horizon = detail::number(j, "horizon", "config");
    for (const char* key : {"site1", "site2"})
        if (!j.contains(key))
            throw ConfigError(std::string("config: missing '") + key + "'");
    cfg.problem.site1 = detail::parse_site(j.at("site1"), "site1");
    cfg.problem.site2 = detail::parse_site(j.at("site2"), "site2");

    cfg.auto_mass_max = true;
    if (j.contains("grid")) {
        const auto& g = j.at("grid");
        detail::reject_unknown(g, {"mass_max", "mass_nodes", "time_nodes", "quadrature_nodes"}, "grid");
        if (g.contains("mass_max")) {
            cfg.grid.mass_max = detail::number(g, "mass_max", "grid");
            cfg.auto_mass_max = false;
        }
        if (g.contains("mass_nodes")) cfg.grid.mass_nodes = detail::integer(g, "mass_nodes", "grid");
        if (g.contains("time_nodes")) cfg.grid.time_nodes = detail::integer(g, "time_nodes", "grid");
        if (g.contains("quadrature_nodes")) cfg.grid.quadrature_nodes = detail::integer(g, "quadrature_nodes", "grid");
    }
    if (j.contains("solver")) {
        const auto& s = j.at("solver");
        detail::reject_unknown(s, {"tolerance", "max_iterations", "refine"}, "solver");
        if (s.contains("tolerance")) cfg.solver.tolerance = detail::number(s, "tolerance", "solver");
        if (s.contains("max_iterations")) cfg.solver.max_iterations = detail::integer(s, "max_iterations", "solver");
        if (s.contains("refine")) {
            if (!s.at("refine").is_boolean())
                throw ConfigError("solver.refine: expected a boolean");
            cfg.solver.refine = s.at("refine").get<bool>();
        }
        if (!(cfg.solver.tolerance > 0.0))
            throw ConfigError("solver.tolerance: must be positive");
    }
    if (j.contains("simulation")) {
        const auto& s = j.at("simulation");
        detail::reject_unknown(s, {"replications", "seed"}, "simulation");
        if (s.contains("replications")) {
            if (!s.at("replications").is_number_unsigned())
                throw ConfigError("simulation.replications: expected a nonnegative integer");
            cfg.simulation.replications = s.at("replications").get<std::uint64_t>();
        }
        if (s.contains("seed")) {
            if (!s.at("seed").is_number_unsigned())
                throw ConfigError("simulation.seed: expected a nonnegative integer");
            cfg.simulation.seed = s.at("seed").get<std::uint64_t>();
        }
    }
    if (j.contains("output")) {
        const auto& o = j.at("output");
        detail::reject_unknown(o, {"dir", "format"}, "output");
        if (o.contains("dir")) cfg.out_dir = o.at("dir").get<std::string>();
        if (o.contains("format")) cfg.format = o.at("format").get<std::string>();
    }
    if (cfg.format != "json" && cfg.format != "csv")
        throw ConfigError("output.format: expected 'csv' or 'json'");
    if (cfg.auto_mass_max && cfg.problem.horizon > 0.0)
        cfg.grid.mass_max = default_mass_max(cfg.problem);
    try {
        cfg.grid.check();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("grid: ") + e.what());
    }
    return cfg;
}

inline json emit_config(const RunConfig& cfg)
{
    json j;
    j["horizon"] = cfg.problem.horizon;
    j["site1"] = detail::emit_site(cfg.problem.site1);
    j["site2"] = detail::emit_site(cfg.problem.site2);
    json g{{"mass_nodes", cfg.grid.mass_nodes},
           {"time_nodes", cfg.grid.time_nodes},
           {"quadrature_nodes", cfg.grid.quadrature_nodes}};
    if (!cfg.auto_mass_max)
        g["mass_max"] = cfg.grid.mass_max;
    j["grid"] = g;
    j["solver"] = {{"tolerance", cfg.solver.tolerance},
                   {"max_iterations", cfg.solver.max_iterations},
                   {"refine", cfg.solver.refine}};
    j["simulation"] = {{"replications", cfg.simulation.replications}, {"seed", cfg.simulation.seed}};
    j["output"] = {{"dir", cfg.out_dir}, {"format", cfg.format}};
    return j;
}

inline RunConfig load_config(const std::string& path)
{
    std::ifstream in(path);
    if (!in)
        throw ConfigError("cannot read config file " + path);
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

/// FNV-1a 64 of the canonical emitted config without the output section, as 16 hex digits.
inline std::string config_hash(const RunConfig& cfg)
{
    json j = emit_config(cfg);
    j.erase("output");
    const std::string text = j.dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

}  // namespace twostop

#endif  // TWOSTOP_CONFIG_HPP
