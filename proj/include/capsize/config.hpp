#pragma once

#include <cstdint>
#include <fstream>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "core_model.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "tpt.hpp"

namespace capsize {

inline const std::vector<std::string>& pipeline_names() {
    static const std::vector<std::string> names{"simulate", "capsize-time", "committor", "mc-rate", "minact", "figure2"};
    return names;
}

struct FilterConfig {
    std::vector<std::vector<double>> A, C;
    double epsilon = 0.0;
    /// Ship drift component forced by the first filter coordinate.
    int coupling_channel = 1;
    double coupling_gain = 1.0;
    bool operator==(const FilterConfig&) const = default;
};

struct ModelConfig {
    RollModelParams roll;
    std::optional<FilterConfig> filter;
    bool operator==(const ModelConfig&) const = default;
};

struct InitialConfig {
    /// point, gaussian or uniform.
    std::string type = "point";
    std::vector<double> mean;
    std::vector<std::vector<double>> covariance;
    std::vector<double> lo, hi;
    bool operator==(const InitialConfig&) const = default;
};

/// Numeric parameters; absent values fall back to pipeline defaults.
struct NumericsConfig {
    std::optional<double> dt, horizon, total_time, duration, t_min, t_max, manifold_arclength, tube_radius;
    std::optional<std::uint64_t> n_samples, max_stored_segments;
    std::optional<int> n_points, streams;
    std::optional<std::vector<double>> x0, x_end, epsilons;
    std::optional<std::vector<bool>> end_free;
    std::optional<InitialConfig> initial;
    std::optional<bool> write_segments;
    bool operator==(const NumericsConfig&) const = default;
};

struct ExperimentConfig {
    std::string pipeline;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> output_dir;
    ModelConfig model;
    RegionSpec region_a = disk_region(0.0, 0.0, 0.2, 'A');
    RegionSpec region_b = capsize_region(1.5, 'B');
    Grid2D grid;
    WallMode theta_walls = WallMode::specular;
    NumericsConfig numerics;
    bool operator==(const ExperimentConfig&) const = default;
};

namespace detail {

using cjson = nlohmann::json;

inline void check_keys(const cjson& j, const std::string& where, const std::set<std::string>& allowed) {
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
    for (const auto& [k, v] : j.items())
        if (!allowed.count(k)) throw ConfigError("unknown key '" + (where.empty() ? k : where + "." + k) + "'");
}

inline std::string key_path(const std::string& where, const std::string& k) { return where.empty() ? k : where + "." + k; }

inline double get_double(const cjson& j, const std::string& where) {
    if (!j.is_number()) throw ConfigError(where + ": expected a number");
    const double v = j.get<double>();
    if (!std::isfinite(v)) throw ConfigError(where + ": expected a finite number");
    return v;
}

inline std::int64_t get_int(const cjson& j, const std::string& where) {
    if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
    return j.get<std::int64_t>();
}

inline std::uint64_t get_uint(const cjson& j, const std::string& where) {
    if (!j.is_number_unsigned() && !(j.is_number_integer() && j.get<std::int64_t>() >= 0))
        throw ConfigError(where + ": expected a non-negative integer");
    return j.get<std::uint64_t>();
}

inline std::vector<double> get_vector(const cjson& j, const std::string& where, std::size_t expected = 0) {
    if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
    std::vector<double> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_double(j[i], where + "[" + std::to_string(i) + "]"));
    if (expected && out.size() != expected)
        throw ConfigError(where + ": expected " + std::to_string(expected) + " entries");
    return out;
}

inline std::vector<std::vector<double>> get_matrix(const cjson& j, const std::string& where) {
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array of rows");
    std::vector<std::vector<double>> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(get_vector(j[i], where + "[" + std::to_string(i) + "]"));
    for (const auto& row : out)
        if (row.size() != out.size()) throw ConfigError(where + ": expected a square matrix");
    return out;
}

inline std::array<double, 2> get_pair(const cjson& j, const std::string& where) {
    const auto v = get_vector(j, where, 2);
    return {v[0], v[1]};
}

inline RegionSpec parse_region(const cjson& j, const std::string& where, char label) {
    if (!j.is_array() || j.empty()) throw ConfigError(where + ": expected a non-empty array of shapes");
    RegionSpec r;
    r.label = label;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const std::string w = where + "[" + std::to_string(i) + "]";
        const auto& s = j[i];
        if (!s.is_object() || !s.contains("type") || !s["type"].is_string())
            throw ConfigError(w + ".type: required string");
        const auto type = s["type"].get<std::string>();
        if (type == "ellipse") {
            check_keys(s, w, {"type", "center", "radii"});
            if (!s.contains("center") || !s.contains("radii")) throw ConfigError(w + ": ellipse needs center and radii");
            r.shapes.push_back(Ellipse{get_pair(s["center"], w + ".center"), get_pair(s["radii"], w + ".radii")});
        } else if (type == "half_plane") {
            check_keys(s, w, {"type", "normal", "offset"});
            if (!s.contains("normal") || !s.contains("offset")) throw ConfigError(w + ": half_plane needs normal and offset");
            r.shapes.push_back(HalfPlane{get_pair(s["normal"], w + ".normal"), get_double(s["offset"], w + ".offset")});
        } else {
            throw ConfigError(w + ".type: unknown shape '" + type + "'");
        }
    }
    try {
        r.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return r;
}

inline cjson region_to_json(const RegionSpec& r) {
    cjson arr = cjson::array();
    for (const auto& s : r.shapes) {
        if (const auto* e = std::get_if<Ellipse>(&s))
            arr.push_back({{"type", "ellipse"}, {"center", e->center}, {"radii", e->radii}});
        else {
            const auto& h = std::get<HalfPlane>(s);
            arr.push_back({{"type", "half_plane"}, {"normal", h.normal}, {"offset", h.offset}});
        }
    }
    return arr;
}

}  // namespace detail

/// Strict parse: unknown keys and wrongly typed values are rejected with the offending key path.
inline ExperimentConfig parse_config(const nlohmann::json& j) {
    using namespace detail;
    check_keys(j, "", {"pipeline", "seed", "output_dir", "model", "regions", "grid", "numerics"});
    ExperimentConfig c;
    if (!j.contains("pipeline") || !j["pipeline"].is_string()) throw ConfigError("pipeline: required string");
    c.pipeline = j["pipeline"].get<std::string>();
    const auto& names = pipeline_names();
    if (std::find(names.begin(), names.end(), c.pipeline) == names.end())
        throw ConfigError("pipeline: unknown pipeline '" + c.pipeline + "'");
    if (j.contains("seed")) c.seed = get_uint(j["seed"], "seed");
    if (j.contains("output_dir")) {
        if (!j["output_dir"].is_string()) throw ConfigError("output_dir: expected a string");
        c.output_dir = j["output_dir"].get<std::string>();
    }
    if (!j.contains("model")) throw ConfigError("model: required object");
    const auto& m = j["model"];
    check_keys(m, "model", {"omega0_sq", "alpha", "delta", "epsilon", "filter"});
    for (const char* k : {"omega0_sq", "alpha", "delta", "epsilon"})
        if (!m.contains(k)) throw ConfigError(std::string("model.") + k + ": required number");
    c.model.roll.omega0_sq = get_double(m["omega0_sq"], "model.omega0_sq");
    c.model.roll.alpha = get_double(m["alpha"], "model.alpha");
    c.model.roll.delta = get_double(m["delta"], "model.delta");
    c.model.roll.epsilon = get_double(m["epsilon"], "model.epsilon");
    try {
        c.model.roll.validate();
    } catch (const ConfigError& e) {
        throw ConfigError(std::string("model: ") + e.what());
    }
    if (m.contains("filter")) {
        const auto& f = m["filter"];
        check_keys(f, "model.filter", {"A", "C", "epsilon", "coupling_channel", "coupling_gain"});
        for (const char* k : {"A", "C", "epsilon"})
            if (!f.contains(k)) throw ConfigError(std::string("model.filter.") + k + ": required");
        FilterConfig fc;
        fc.A = get_matrix(f["A"], "model.filter.A");
        fc.C = get_matrix(f["C"], "model.filter.C");
        fc.epsilon = get_double(f["epsilon"], "model.filter.epsilon");
        if (f.contains("coupling_channel"))
            fc.coupling_channel = static_cast<int>(get_int(f["coupling_channel"], "model.filter.coupling_channel"));
        if (f.contains("coupling_gain")) fc.coupling_gain = get_double(f["coupling_gain"], "model.filter.coupling_gain");
        if (fc.A.size() != fc.C.size()) throw ConfigError("model.filter: A and C must have the same size");
        if (fc.coupling_channel < 0 || fc.coupling_channel > 1)
            throw ConfigError("model.filter.coupling_channel: must be 0 or 1");
        c.model.filter = fc;
    }
    if (j.contains("regions")) {
        const auto& r = j["regions"];
        check_keys(r, "regions", {"A", "B"});
        if (r.contains("A")) c.region_a = parse_region(r["A"], "regions.A", 'A');
        if (r.contains("B")) c.region_b = parse_region(r["B"], "regions.B", 'B');
    }
    if (j.contains("grid")) {
        const auto& g = j["grid"];
        check_keys(g, "grid", {"theta", "v", "n_theta", "n_v", "theta_walls"});
        if (g.contains("theta")) {
            const auto t = get_pair(g["theta"], "grid.theta");
            c.grid.theta_lo = t[0];
            c.grid.theta_hi = t[1];
        }
        if (g.contains("v")) {
            const auto v = get_pair(g["v"], "grid.v");
            c.grid.v_lo = v[0];
            c.grid.v_hi = v[1];
        }
        if (g.contains("n_theta")) c.grid.n_theta = static_cast<int>(get_int(g["n_theta"], "grid.n_theta"));
        if (g.contains("n_v")) c.grid.n_v = static_cast<int>(get_int(g["n_v"], "grid.n_v"));
        if (g.contains("theta_walls")) {
            if (!g["theta_walls"].is_string()) throw ConfigError("grid.theta_walls: expected a string");
            const auto w = g["theta_walls"].get<std::string>();
            if (w == "specular")
                c.theta_walls = WallMode::specular;
            else if (w == "no_flux")
                c.theta_walls = WallMode::no_flux;
            else
                throw ConfigError("grid.theta_walls: expected 'specular' or 'no_flux'");
        }
        try {
            c.grid.validate();
        } catch (const ConfigError& e) {
            throw ConfigError(std::string("grid: ") + e.what());
        }
    }
    if (j.contains("numerics")) {
        const auto& n = j["numerics"];
        check_keys(n, "numerics",
                   {"dt", "horizon", "total_time", "duration", "t_min", "t_max", "manifold_arclength", "tube_radius",
                    "n_samples", "max_stored_segments", "n_points", "streams", "x0", "x_end", "epsilons", "end_free",
                    "initial", "write_segments"});
        auto& nc = c.numerics;
        auto num = [&](const char* k, std::optional<double>& dst, bool positive) {
            if (!n.contains(k)) return;
            dst = get_double(n[k], std::string("numerics.") + k);
            if (positive ? !(*dst > 0.0) : !(*dst >= 0.0))
                throw ConfigError(std::string("numerics.") + k + (positive ? ": must be > 0" : ": must be >= 0"));
        };
        num("dt", nc.dt, true);
        num("horizon", nc.horizon, false);
        num("total_time", nc.total_time, true);
        num("duration", nc.duration, true);
        num("t_min", nc.t_min, true);
        num("t_max", nc.t_max, true);
        num("manifold_arclength", nc.manifold_arclength, false);
        num("tube_radius", nc.tube_radius, true);
        if (n.contains("n_samples")) {
            nc.n_samples = get_uint(n["n_samples"], "numerics.n_samples");
            if (*nc.n_samples < 1) throw ConfigError("numerics.n_samples: must be >= 1");
        }
        if (n.contains("max_stored_segments"))
            nc.max_stored_segments = get_uint(n["max_stored_segments"], "numerics.max_stored_segments");
        if (n.contains("n_points")) {
            nc.n_points = static_cast<int>(get_int(n["n_points"], "numerics.n_points"));
            if (*nc.n_points < 50) throw ConfigError("numerics.n_points: must be >= 50");
        }
        if (n.contains("streams")) {
            nc.streams = static_cast<int>(get_int(n["streams"], "numerics.streams"));
            if (*nc.streams < 1) throw ConfigError("numerics.streams: must be >= 1");
        }
        if (n.contains("x0")) nc.x0 = get_vector(n["x0"], "numerics.x0");
        if (n.contains("x_end")) nc.x_end = get_vector(n["x_end"], "numerics.x_end");
        if (n.contains("epsilons")) {
            nc.epsilons = get_vector(n["epsilons"], "numerics.epsilons");
            if (nc.epsilons->empty()) throw ConfigError("numerics.epsilons: must not be empty");
            for (double e : *nc.epsilons)
                if (!(e > 0.0)) throw ConfigError("numerics.epsilons: entries must be > 0");
        }
        if (n.contains("end_free")) {
            const auto& e = n["end_free"];
            if (!e.is_array()) throw ConfigError("numerics.end_free: expected an array of booleans");
            std::vector<bool> flags;
            for (std::size_t i = 0; i < e.size(); ++i) {
                if (!e[i].is_boolean()) throw ConfigError("numerics.end_free[" + std::to_string(i) + "]: expected a boolean");
                flags.push_back(e[i].get<bool>());
            }
            nc.end_free = flags;
        }
        if (n.contains("write_segments")) {
            if (!n["write_segments"].is_boolean()) throw ConfigError("numerics.write_segments: expected a boolean");
            nc.write_segments = n["write_segments"].get<bool>();
        }
        if (n.contains("initial")) {
            const auto& in = n["initial"];
            if (!in.is_object() || !in.contains("type") || !in["type"].is_string())
                throw ConfigError("numerics.initial.type: required string");
            InitialConfig ic;
            ic.type = in["type"].get<std::string>();
            if (ic.type == "point") {
                check_keys(in, "numerics.initial", {"type", "mean"});
                if (!in.contains("mean")) throw ConfigError("numerics.initial.mean: required");
                ic.mean = get_vector(in["mean"], "numerics.initial.mean");
            } else if (ic.type == "gaussian") {
                check_keys(in, "numerics.initial", {"type", "mean", "covariance"});
                if (!in.contains("mean") || !in.contains("covariance"))
                    throw ConfigError("numerics.initial: gaussian needs mean and covariance");
                ic.mean = get_vector(in["mean"], "numerics.initial.mean");
                ic.covariance = get_matrix(in["covariance"], "numerics.initial.covariance");
            } else if (ic.type == "uniform") {
                check_keys(in, "numerics.initial", {"type", "lo", "hi"});
                if (!in.contains("lo") || !in.contains("hi")) throw ConfigError("numerics.initial: uniform needs lo and hi");
                ic.lo = get_vector(in["lo"], "numerics.initial.lo");
                ic.hi = get_vector(in["hi"], "numerics.initial.hi");
            } else {
                throw ConfigError("numerics.initial.type: unknown distribution '" + ic.type + "'");
            }
            nc.initial = ic;
        }
        if (nc.t_min && nc.t_max && !(*nc.t_min < *nc.t_max)) throw ConfigError("numerics.t_min: must be < t_max");
    }
    // Pipeline requirements.
    auto need = [&](bool present, const std::string& key) {
        if (!present) throw ConfigError(key + ": required by pipeline " + c.pipeline);
    };
    const auto& nc = c.numerics;
    const auto& p = c.pipeline;
    if (p == "simulate") {
        need(nc.dt.has_value(), "numerics.dt");
        need(nc.horizon.has_value(), "numerics.horizon");
        need(nc.x0.has_value(), "numerics.x0");
        need(c.seed.has_value(), "seed");
    } else if (p == "capsize-time") {
        need(nc.dt.has_value(), "numerics.dt");
        need(nc.horizon.has_value(), "numerics.horizon");
        need(nc.n_samples.has_value(), "numerics.n_samples");
        need(nc.initial.has_value(), "numerics.initial");
        need(c.seed.has_value(), "seed");
    } else if (p == "mc-rate") {
        need(nc.dt.has_value(), "numerics.dt");
        need(nc.total_time.has_value(), "numerics.total_time");
        need(c.seed.has_value(), "seed");
    } else if (p == "minact") {
        need(nc.n_points.has_value(), "numerics.n_points");
        need(nc.x_end.has_value(), "numerics.x_end");
    } else if (p == "figure2") {
        need(nc.dt.has_value(), "numerics.dt");
        need(nc.total_time.has_value(), "numerics.total_time");
        need(nc.n_points.has_value(), "numerics.n_points");
        need(nc.x_end.has_value(), "numerics.x_end");
        need(c.seed.has_value(), "seed");
    }
    return c;
}

inline nlohmann::json to_json(const ExperimentConfig& c) {
    using detail::cjson;
    cjson j;
    j["pipeline"] = c.pipeline;
    if (c.seed) j["seed"] = *c.seed;
    if (c.output_dir) j["output_dir"] = *c.output_dir;
    cjson m{{"omega0_sq", c.model.roll.omega0_sq},
            {"alpha", c.model.roll.alpha},
            {"delta", c.model.roll.delta},
            {"epsilon", c.model.roll.epsilon}};
    if (c.model.filter) {
        const auto& f = *c.model.filter;
        m["filter"] = {{"A", f.A},
                       {"C", f.C},
                       {"epsilon", f.epsilon},
                       {"coupling_channel", f.coupling_channel},
                       {"coupling_gain", f.coupling_gain}};
    }
    j["model"] = m;
    j["regions"] = {{"A", detail::region_to_json(c.region_a)}, {"B", detail::region_to_json(c.region_b)}};
    j["grid"] = {{"theta", {c.grid.theta_lo, c.grid.theta_hi}},
                 {"v", {c.grid.v_lo, c.grid.v_hi}},
                 {"n_theta", c.grid.n_theta},
                 {"n_v", c.grid.n_v},
                 {"theta_walls", c.theta_walls == WallMode::specular ? "specular" : "no_flux"}};
    cjson n = cjson::object();
    const auto& nc = c.numerics;
    auto put = [&](const char* k, const auto& opt) {
        if (opt) n[k] = *opt;
    };
    put("dt", nc.dt);
    put("horizon", nc.horizon);
    put("total_time", nc.total_time);
    put("duration", nc.duration);
    put("t_min", nc.t_min);
    put("t_max", nc.t_max);
    put("manifold_arclength", nc.manifold_arclength);
    put("tube_radius", nc.tube_radius);
    put("n_samples", nc.n_samples);
    put("max_stored_segments", nc.max_stored_segments);
    put("n_points", nc.n_points);
    put("streams", nc.streams);
    put("x0", nc.x0);
    put("x_end", nc.x_end);
    put("epsilons", nc.epsilons);
    put("end_free", nc.end_free);
    put("write_segments", nc.write_segments);
    if (nc.initial) {
        const auto& ic = *nc.initial;
        cjson in{{"type", ic.type}};
        if (ic.type == "point") in["mean"] = ic.mean;
        if (ic.type == "gaussian") {
            in["mean"] = ic.mean;
            in["covariance"] = ic.covariance;
        }
        if (ic.type == "uniform") {
            in["lo"] = ic.lo;
            in["hi"] = ic.hi;
        }
        n["initial"] = in;
    }
    j["numerics"] = n;
    return j;
}

inline ExperimentConfig parse_config_text(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    return parse_config(j);
}

inline ExperimentConfig load_config(const std::string& file) {
    std::ifstream is(file);
    if (!is) throw ConfigError("cannot read config file " + file);
    std::stringstream ss;
    ss << is.rdbuf();
    return parse_config_text(ss.str());
}

}  // namespace capsize
