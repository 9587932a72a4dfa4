#pragma once

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "errors.hpp"
#include "grid.hpp"
#include "integrate.hpp"
#include "ldt.hpp"
#include "mc_rare.hpp"
#include "saddle_flux.hpp"

namespace capsize {

using json = nlohmann::ordered_json;

/// Shortest decimal text that parses back to the same double.
inline std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, x);
    return {buf, r.ptr};
}

/// JSON number, or a string for non-finite values.
inline json json_number(double x) {
    if (std::isfinite(x)) return x;
    return format_double(x);
}

inline std::ofstream open_output(const std::filesystem::path& file) {
    std::ofstream os(file, std::ios::binary);
    if (!os) throw ConfigError("cannot open output file " + file.string());
    return os;
}

/// CSV with header `t,x0,...,x{n-1}` unless column names are given.
inline void write_path_csv(const Path& p, const std::filesystem::path& file, std::vector<std::string> columns = {}) {
    if (columns.empty()) {
        columns.push_back("t");
        for (int i = 0; i < p.dim; ++i) columns.push_back("x" + std::to_string(i));
    }
    auto os = open_output(file);
    for (std::size_t c = 0; c < columns.size(); ++c) os << (c ? "," : "") << columns[c];
    os << '\n';
    for (std::size_t k = 0; k < p.size(); ++k) {
        os << format_double(p.times[k]);
        for (double v : p.state(k)) os << ',' << format_double(v);
        os << '\n';
    }
}

/// Minimizer path as `t,theta,v` (generic names beyond two coordinates).
inline void write_discrete_path_csv(const DiscretePath& p, const std::filesystem::path& file) {
    Path q;
    q.dim = p.dim;
    for (int k = 0; k < p.n_points(); ++k) q.push(k * p.dt(), p.point(k));
    std::vector<std::string> cols{"t"};
    if (p.dim == 2) {
        cols.insert(cols.end(), {"theta", "v"});
    } else {
        for (int i = 0; i < p.dim; ++i) cols.push_back("x" + std::to_string(i));
    }
    write_path_csv(q, file, cols);
}

inline json grid_json(const Grid2D& g) {
    return json{{"theta", {g.theta_lo, g.theta_hi}}, {"v", {g.v_lo, g.v_hi}}, {"n_theta", g.n_theta}, {"n_v", g.n_v}};
}

inline json field_sidecar(const ScalarField& f) {
    return json{{"bounds", {{"theta", {f.grid.theta_lo, f.grid.theta_hi}}, {"v", {f.grid.v_lo, f.grid.v_hi}}}},
                {"shape", {f.grid.n_theta, f.grid.n_v}},
                {"kind", to_string(f.kind)},
                {"normalized", f.normalized},
                {"order", "row-major, theta outer"}};
}

/// `theta,v,value` rows in node order.
inline void write_field_csv(const ScalarField& f, const std::filesystem::path& file) {
    auto os = open_output(file);
    os << "theta,v,value\n";
    for (int i = 0; i < f.grid.n_theta; ++i)
        for (int j = 0; j < f.grid.n_v; ++j)
            os << format_double(f.grid.theta(i)) << ',' << format_double(f.grid.v(j)) << ','
               << format_double(f.at(i, j)) << '\n';
}

inline void write_json(const json& j, const std::filesystem::path& file) {
    auto os = open_output(file);
    os << j.dump(2) << '\n';
}

inline json to_json(const CapsizeStats& s) {
    json curve = json::array(), hist = json::array(), rate = json::array();
    for (std::size_t k = 0; k < s.s_times.size(); ++k) curve.push_back({s.s_times[k], s.s_values[k]});
    for (std::size_t b = 0; b < s.hist_counts.size(); ++b)
        hist.push_back({s.hist_edges[b], s.hist_edges[b + 1], s.hist_counts[b]});
    for (std::size_t k = 0; k < s.rate_times.size(); ++k) rate.push_back({s.rate_times[k], s.rate_values[k]});
    return json{{"horizon", s.horizon},       {"s_curve", curve},         {"histogram", hist},
                {"p_capsize", s.p_capsize},   {"stderr", s.p_stderr},     {"rate_curve", rate},
                {"n_samples", s.n_samples},   {"n_capsized", s.n_capsized}, {"n_failed", s.n_failed}};
}

inline json to_json(const TransitionRecord& r) {
    return json{{"n_transitions", r.n_transitions},
                {"total_time", r.total_time},
                {"rate", r.rate},
                {"stderr", r.rate_stderr},
                {"rate_upper95", json_number(r.rate_upper95)},
                {"mean_segment_duration", r.mean_segment_duration()},
                {"stored_segments", r.segments.size()}};
}

inline json to_json(const ActionResult& r) {
    json prof = json::array();
    for (const auto& e : r.t_profile) prof.push_back({{"T", e.duration}, {"value", e.value}, {"converged", e.converged}});
    return json{{"value", r.value},
                {"T", r.path.duration},
                {"n_points", r.path.n_points()},
                {"converged", r.converged},
                {"gradient_norm", r.gradient_norm},
                {"infeasibility", r.infeasibility},
                {"initialization", r.initialization},
                {"initial_gradient_check", r.initial_gradient_check},
                {"t_profile", prof}};
}

}  // namespace capsize
