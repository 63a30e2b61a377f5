#ifndef TWOSTOP_IO_HPP
#define TWOSTOP_IO_HPP

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "twostop/numerics.hpp"
#include "twostop/policy.hpp"
#include "twostop/sim.hpp"

namespace twostop {

inline constexpr const char* tool_version = "0.1.0";

/// Shortest round-trippable text for a double.
inline std::string format_double(double x)
{
    if (std::isnan(x))
        return "nan";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

/// Header line carried by every CSV artifact.
inline std::string provenance_line(const std::string& config_hash)
{
    return std::string("# generator twostop ") + tool_version + " config " + config_hash + "\n";
}

/**
 * Field CSV layout:
 *
 *   # twostop-field 1
 *   # generator twostop <version> config <hash>
 *   # axis <name> <lo> <hi> <n>          one line per axis, slowest first
 *   <name>,...,value
 *   one row per node, row-major
 *
 * Axis names a, b, c map to the mass, elapsed and remaining roles.
 */
inline void write_field(std::ostream& out, const ValueField& field, const std::string& config_hash = "-")
{
    out << "# twostop-field 1\n" << provenance_line(config_hash);
    for (const auto& ax : field.axes())
        out << "# axis " << ax.name << ' ' << format_double(ax.lo) << ' ' << format_double(ax.hi) << ' ' << ax.n
            << '\n';
    for (const auto& ax : field.axes())
        out << ax.name << ',';
    out << "value\n";
    const std::size_t rank = field.rank();
    std::vector<int> idx(rank, 0);
    for (std::size_t flat = 0; flat < field.size(); ++flat) {
        for (std::size_t d = 0; d < rank; ++d)
            out << format_double(field.axis(d).node(idx[d])) << ',';
        out << format_double(field.values()[flat]) << '\n';
        for (std::size_t d = rank; d-- > 0;) {
            if (++idx[d] < field.axis(d).n)
                break;
            idx[d] = 0;
        }
    }
}

inline ValueField read_field(std::istream& in)
{
    std::string line;
    std::vector<Axis> axes;
    std::vector<int> roles;
    bool header_seen = false;
    while (std::getline(in, line)) {
        if (line.rfind("# twostop-field", 0) == 0) {
            header_seen = true;
            continue;
        }
        if (line.rfind("# axis ", 0) == 0) {
            std::istringstream ls(line.substr(7));
            Axis ax;
            ls >> ax.name >> ax.lo >> ax.hi >> ax.n;
            if (!ls)
                throw std::runtime_error("read_field: malformed axis line '" + line + "'");
            int role = ax.name == "a" ? ValueField::mass : ax.name == "b" ? ValueField::elapsed
                     : ax.name == "c" ? ValueField::remaining : -1;
            if (role < 0)
                throw std::runtime_error("read_field: unknown axis '" + ax.name + "'");
            axes.push_back(ax);
            roles.push_back(role);
            continue;
        }
        if (!line.empty() && line[0] == '#')
            continue;
        break;  // column header
    }
    if (!header_seen || axes.empty())
        throw std::runtime_error("read_field: not a twostop field file");
    ValueField field(axes, roles);
    auto values = field.values();
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::getline(in, line))
            throw std::runtime_error("read_field: truncated value table");
        auto pos = line.rfind(',');
        values[i] = std::stod(line.substr(pos + 1));
    }
    return field;
}

inline void save_field(const std::string& path, const ValueField& field, const std::string& config_hash = "-")
{
    std::ofstream out(path, std::ios::binary);
    if (!out)
        throw std::runtime_error("cannot write " + path);
    write_field(out, field, config_hash);
}

inline ValueField load_field(const std::string& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw std::runtime_error("cannot read " + path);
    return read_field(in);
}

//---------------------------------------------------------------------------//
// Stop/continue boundary
//---------------------------------------------------------------------------//

/**
 * Threshold curve a*(b, c): the smallest mass node at which the policy
 * stops immediately (delay 0). Empty cell when it never does. Rows with
 * c = 0 are skipped (no time left, every policy stops).
 */
inline void write_boundary(std::ostream& out, const StagePolicy& policy, const Axis& mass, const Axis& time,
                           bool with_elapsed, const std::string& config_hash = "-")
{
    out << provenance_line(config_hash);
    out << (with_elapsed ? "b,c,a_star\n" : "c,a_star\n");
    const int nT = time.n;
    const double horizon = time.hi;
    for (int ib = 0; ib < (with_elapsed ? nT : 1); ++ib) {
        for (int kc = 1; kc + ib < nT; ++kc) {
            double b = with_elapsed ? time.node(ib) : horizon - time.node(kc);
            double c = time.node(kc);
            std::string a_star;
            for (int ia = 0; ia < mass.n; ++ia) {
                if (policy.delay(mass.node(ia), b, c) == 0.0) {
                    a_star = format_double(mass.node(ia));
                    break;
                }
            }
            if (with_elapsed)
                out << format_double(b) << ',';
            out << format_double(c) << ',' << a_star << '\n';
        }
    }
}

//---------------------------------------------------------------------------//
// Trajectory dump
//---------------------------------------------------------------------------//

inline void write_trajectories_header(std::ostream& out, const std::string& config_hash = "-")
{
    out << provenance_line(config_hash) << "replication,stage,claim_index,time,mass\n";
}

/// Claims of one trajectory; claim_index 0 rows carry the switch and stop times.
inline void write_trajectory(std::ostream& out, std::uint64_t replication, const Trajectory& tr)
{
    for (std::size_t i = 0; i < tr.stage1.size(); ++i)
        out << replication << ",1," << i + 1 << ',' << format_double(tr.stage1[i].time) << ','
            << format_double(tr.stage1[i].mass) << '\n';
    for (std::size_t i = 0; i < tr.stage2.size(); ++i)
        out << replication << ",2," << i + 1 << ',' << format_double(tr.stage2[i].time) << ','
            << format_double(tr.stage2[i].mass) << '\n';
    out << replication << ",1,0," << format_double(tr.switch_time) << ",0\n";
    out << replication << ",2,0," << format_double(tr.stop_time) << ",0\n";
}

}  // namespace twostop

#endif  // TWOSTOP_IO_HPP
