#pragma once

#include <chrono>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "analysis.hpp"
#include "config.hpp"
#include "core_model.hpp"
#include "integrate.hpp"
#include "io.hpp"
#include "ldt.hpp"
#include "mc_rare.hpp"
#include "saddle_flux.hpp"
#include "tpt.hpp"

namespace capsize {

inline constexpr const char* library_version = "1.0.0";

struct RunOptions {
    int workers = 1;
    /// Overrides the config's output_dir when set.
    std::optional<std::string> out_dir;
};

/// Roll model, optionally driven by the configured filter through its velocity channel.
inline SystemSpec build_system(const ModelConfig& m) {
    const SystemSpec ship = toy_roll_system(m.roll);
    if (!m.filter) return ship;
    const auto& f = *m.filter;
    FilterSpec fs;
    fs.k = static_cast<int>(f.A.size());
    fs.A.resize(fs.k, fs.k);
    fs.C.resize(fs.k, fs.k);
    for (int i = 0; i < fs.k; ++i)
        for (int j = 0; j < fs.k; ++j) {
            fs.A(i, j) = f.A[i][j];
            fs.C(i, j) = f.C[i][j];
        }
    fs.epsilon = f.epsilon;
    fs.coupling = velocity_forcing(f.coupling_channel, f.coupling_gain);
    return couple_filter(ship, fs);
}

/// Port (-) and starboard (+) capsize saddles of the roll model, embedded in the system's state space.
inline std::vector<SaddleInfo> roll_saddles(const SystemSpec& sys, const RollModelParams& p) {
    std::vector<SaddleInfo> out;
    for (double sign : {-1.0, 1.0}) {
        std::vector<double> guess(sys.dim, 0.0);
        guess[0] = sign * p.saddle_angle();
        out.push_back(find_saddle(sys, guess));
    }
    return out;
}

inline InitialSampler make_sampler(const InitialConfig& ic, int dim) {
    auto check = [&](const std::vector<double>& v, const char* key) {
        if (static_cast<int>(v.size()) != dim)
            throw ConfigError(std::string("numerics.initial.") + key + ": expected " + std::to_string(dim) + " entries");
    };
    if (ic.type == "point") {
        check(ic.mean, "mean");
        return InitialSampler(PointMass{ic.mean});
    }
    if (ic.type == "gaussian") {
        check(ic.mean, "mean");
        if (static_cast<int>(ic.covariance.size()) != dim)
            throw ConfigError("numerics.initial.covariance: expected a " + std::to_string(dim) + "x" + std::to_string(dim) +
                              " matrix");
        Eigen::MatrixXd cov(dim, dim);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < dim; ++j) cov(i, j) = ic.covariance[i][j];
        return InitialSampler(GaussianInit{ic.mean, cov});
    }
    check(ic.lo, "lo");
    check(ic.hi, "hi");
    return InitialSampler(UniformBox{ic.lo, ic.hi});
}

/// Files written by a run; the manifest lists every one of them.
class ArtifactLog {
public:
    explicit ArtifactLog(std::filesystem::path dir) : dir_(std::move(dir)) {}
    std::filesystem::path path(const std::string& name) const { return dir_ / name; }
    void data(const std::string& name, const std::string& what) { add(name, "data", what); }
    void sidecar(const std::string& name, const std::string& what) { add(name, "sidecar", what); }
    json list() const { return entries_; }

    void field(const ScalarField& f, const std::string& stem, const std::string& what) {
        write_field_csv(f, path(stem + ".csv"));
        data(stem + ".csv", what);
        write_json(field_sidecar(f), path(stem + ".json"));
        sidecar(stem + ".json", "grid metadata for " + stem + ".csv");
    }

private:
    void add(const std::string& name, const std::string& role, const std::string& what) {
        entries_.push_back({{"path", name}, {"role", role}, {"description", what}});
    }
    std::filesystem::path dir_;
    json entries_ = json::array();
};

namespace detail {

struct PipelineContext {
    const ExperimentConfig& cfg;
    const RunOptions& run;
    ArtifactLog& log;
    json& results;
};

inline void require_planar_model(const ExperimentConfig& cfg) {
    if (cfg.model.filter) throw ConfigError("model.filter: pipeline " + cfg.pipeline + " needs the planar roll model");
}

inline void run_simulate(PipelineContext& ctx) {
    const auto sys = build_system(ctx.cfg.model);
    const auto& nc = ctx.cfg.numerics;
    if (static_cast<int>(nc.x0->size()) != sys.dim)
        throw ConfigError("numerics.x0: expected " + std::to_string(sys.dim) + " entries");
    const Path p = sys.epsilon > 0.0 ? integrate_sde(sys, *nc.x0, 0.0, *nc.horizon, *nc.dt, *ctx.cfg.seed)
                                     : integrate_ode(sys, *nc.x0, 0.0, *nc.horizon, *nc.dt);
    write_path_csv(p, ctx.log.path("path.csv"));
    ctx.log.data("path.csv", "trajectory, one row per step");
    ctx.results["n_steps"] = p.size() - 1;
}

inline void run_capsize_time(PipelineContext& ctx) {
    const auto& cfg = ctx.cfg;
    const auto sys = build_system(cfg.model);
    const auto& nc = cfg.numerics;
    const auto saddles = roll_saddles(sys, cfg.model.roll);
    const auto surface = union_surface({default_dividing_surface(saddles[0]), default_dividing_surface(saddles[1])});
    const auto sampler = make_sampler(*nc.initial, sys.dim);
    EnsembleOptions eo;
    eo.workers = ctx.run.workers;
    const auto stats = capsize_time_ensemble(sys, sampler, surface, *nc.horizon, *nc.dt, *nc.n_samples, *cfg.seed, eo);
    write_json(to_json(stats), ctx.log.path("capsize_stats.json"));
    ctx.log.data("capsize_stats.json", "survivability curve, time-to-capsize histogram, capsize probability");
    if (sys.dim == 2) {
        const double arc = nc.manifold_arclength.value_or(2.0);
        const char* names[2] = {"wplus_port.csv", "wplus_starboard.csv"};
        for (int s = 0; s < 2; ++s) {
            const auto curve = stable_manifold_2d(sys, saddles[s], arc, 1e-5);
            write_path_csv(curve.curve, ctx.log.path(names[s]), {"s", "theta", "theta_dot"});
            ctx.log.data(names[s], "stable manifold of the saddle, signed arclength");
            ctx.results[s ? "wplus_starboard_truncated" : "wplus_port_truncated"] =
                curve.truncated_negative || curve.truncated_positive;
        }
    }
    ctx.results["p_capsize"] = stats.p_capsize;
    ctx.results["stderr"] = stats.p_stderr;
    ctx.results["n_failed"] = stats.n_failed;
}

struct CommitterFields {
    ScalarField rho, q_plus, q_minus, reactive;
    TptRate rate;
};

inline CommitterFields solve_fields(const ExperimentConfig& cfg) {
    require_planar_model(cfg);
    const auto sys = build_system(cfg.model);
    if (!(sys.epsilon > 0.0)) throw ConfigError("model.epsilon: grid solvers need epsilon > 0");
    TptOptions to;
    to.theta_walls = cfg.theta_walls;
    CommitterFields f;
    f.rho = solve_stationary_density(sys, cfg.grid, to);
    f.q_plus = solve_committor_forward(sys, cfg.grid, cfg.region_a, cfg.region_b, to);
    f.q_minus = solve_committor_backward(sys, cfg.grid, cfg.region_a, cfg.region_b, f.rho, to);
    f.reactive = normalized(reactive_density(f.rho, f.q_plus, f.q_minus));
    f.rate = transition_rate_tpt(sys, cfg.grid, f.rho, f.q_plus, f.q_minus, to);
    return f;
}

inline void write_fields(PipelineContext& ctx, const CommitterFields& f) {
    ctx.log.field(f.rho, "rho", "stationary density");
    ctx.log.field(f.q_plus, "q_plus", "forward committor");
    ctx.log.field(f.q_minus, "q_minus", "backward committor");
    ctx.log.field(f.reactive, "reactive_density", "normalized reactive density q+ rho q-");
    ctx.results["k_ab"] = f.rate.k_ab;
    ctx.results["k_ab_discrete"] = f.rate.k_ab_discrete;
    ctx.results["reactive_flux"] = f.rate.nu;
    ctx.results["rho_a"] = f.rate.rho_a;
    ctx.results["masked_nodes"] = f.q_minus.diagnostics.masked.size();
}

inline void run_committor(PipelineContext& ctx) { write_fields(ctx, solve_fields(ctx.cfg)); }

inline TransitionOptions transition_options(const ExperimentConfig& cfg, const RunOptions& run) {
    TransitionOptions to;
    to.streams = cfg.numerics.streams.value_or(1);
    to.workers = run.workers;
    to.max_stored_segments = cfg.numerics.max_stored_segments.value_or(10'000);
    to.store_segments = cfg.numerics.write_segments.value_or(false);
    return to;
}

inline void run_mc_rate(PipelineContext& ctx) {
    const auto& cfg = ctx.cfg;
    const auto base = build_system(cfg.model);
    const auto& nc = cfg.numerics;
    const std::vector<double> eps = nc.epsilons.value_or(std::vector<double>{base.epsilon});
    auto to = transition_options(cfg, ctx.run);
    json records = json::array();
    std::vector<double> x, y, sig;
    for (std::size_t e = 0; e < eps.size(); ++e) {
        const auto sys = base.with_epsilon(eps[e]);
        const auto rec = sample_transitions(sys, cfg.region_a, cfg.region_b, *nc.total_time, *nc.dt, *cfg.seed, to);
        json r = to_json(rec);
        r["epsilon"] = eps[e];
        records.push_back(r);
        if (to.store_segments) {
            std::filesystem::create_directories(ctx.log.path("segments"));
            for (std::size_t s = 0; s < rec.segments.size(); ++s) {
                const std::string name = "segments/eps" + std::to_string(e) + "_seg" + std::to_string(s) + ".csv";
                write_path_csv(rec.segments[s], ctx.log.path(name));
                ctx.log.data(name, "reactive segment");
            }
        }
        if (rec.n_transitions > 0) {
            x.push_back(1.0 / (eps[e] * eps[e]));
            y.push_back(std::log(rec.rate));
            sig.push_back(1.0 / std::sqrt(static_cast<double>(rec.n_transitions)));
        }
    }
    write_json(records, ctx.log.path("transitions.json"));
    ctx.log.data("transitions.json", "transition counts and rates per noise level");
    ctx.results["rates"] = records;
    if (x.size() >= 2) {
        const auto fit = linear_fit(x, y, sig);
        ctx.results["ldp_slope"] = fit.slope;
        ctx.results["ldp_slope_stderr"] = fit.slope_stderr;
    }
}

inline ActionResult run_minimizer(const ExperimentConfig& cfg, const SystemSpec& sys) {
    const auto& nc = cfg.numerics;
    std::vector<double> x0 = nc.x0.value_or(std::vector<double>(sys.dim, 0.0));
    const auto& x1 = *nc.x_end;
    if (static_cast<int>(x0.size()) != sys.dim) throw ConfigError("numerics.x0: expected " + std::to_string(sys.dim) + " entries");
    if (static_cast<int>(x1.size()) != sys.dim)
        throw ConfigError("numerics.x_end: expected " + std::to_string(sys.dim) + " entries");
    MinimizeOptions mo;
    mo.n_points = *nc.n_points;
    mo.duration = nc.duration;
    mo.t_min = nc.t_min.value_or(5.0);
    mo.t_max = nc.t_max.value_or(100.0);
    if (nc.end_free) {
        if (static_cast<int>(nc.end_free->size()) != sys.dim)
            throw ConfigError("numerics.end_free: expected " + std::to_string(sys.dim) + " entries");
        mo.end_free = *nc.end_free;
    }
    if (x1[0] != 0.0) {
        std::vector<double> guess(sys.dim, 0.0);
        guess[0] = (x1[0] > 0 ? 1.0 : -1.0) * cfg.model.roll.saddle_angle();
        try {
            mo.via = find_saddle(sys, guess);
        } catch (const SaddleSearchError&) {
            mo.via.reset();
        }
    }
    return minimize_action(sys, x0, x1, mo);
}

inline void run_minact(PipelineContext& ctx) {
    const auto sys = build_system(ctx.cfg.model);
    const auto res = run_minimizer(ctx.cfg, sys);
    write_discrete_path_csv(res.path, ctx.log.path("minimizer.csv"));
    ctx.log.data("minimizer.csv", "minimum-action path");
    write_json(to_json(res), ctx.log.path("action.json"));
    ctx.log.data("action.json", "minimal action, duration profile and convergence");
    ctx.results["action"] = res.value;
    ctx.results["converged"] = res.converged;
    if (sys.epsilon > 0.0) ctx.results["log_rate"] = rate_asymptotic(res.value, sys.epsilon);
}

inline void run_figure2(PipelineContext& ctx) {
    const auto& cfg = ctx.cfg;
    require_planar_model(cfg);
    const auto sys = build_system(cfg.model);
    const auto fields = solve_fields(cfg);
    write_fields(ctx, fields);
    auto to = transition_options(cfg, ctx.run);
    to.store_segments = false;
    to.histogram_grid = cfg.grid;
    const auto rec = sample_transitions(sys, cfg.region_a, cfg.region_b, *cfg.numerics.total_time, *cfg.numerics.dt,
                                        *cfg.seed, to);
    ctx.results["mc_rate"] = rec.rate;
    ctx.results["mc_rate_stderr"] = rec.rate_stderr;
    ctx.results["mc_transitions"] = rec.n_transitions;
    std::optional<ScalarField> hist;
    if (rec.n_transitions > 0) {
        hist = mass_to_density(*rec.histogram_mass);
    } else {
        hist = ScalarField{cfg.grid, std::vector<double>(cfg.grid.size(), 0.0), FieldKind::reactive_density, true};
    }
    ctx.log.field(*hist, "mc_reactive_histogram", "Monte Carlo reactive-segment histogram");
    const auto act = run_minimizer(cfg, sys);
    write_discrete_path_csv(act.path, ctx.log.path("minimizer.csv"));
    ctx.log.data("minimizer.csv", "minimum-action path");
    ctx.results["action"] = act.value;
    ctx.results["action_T"] = act.path.duration;
    ctx.results["action_converged"] = act.converged;
    ctx.results["log_rate"] = rate_asymptotic(act.value, sys.epsilon);
    if (rec.n_transitions > 0) {
        ctx.results["correlation_pde_mc"] = normalized_correlation(fields.reactive, *hist);
        auto line = planar_polyline(act.path);
        auto mirror = line;
        for (auto& p : mirror) p = {-p[0], -p[1]};
        ctx.results["tube_mass_fraction"] = tube_mass_fraction(*hist, {line, mirror}, cfg.numerics.tube_radius.value_or(0.35));
    }
    // Drift field on a coarse lattice for the phase portrait.
    {
        auto os = open_output(ctx.log.path("drift_field.csv"));
        os << "theta,v,b_theta,b_v\n";
        const int m = 21;
        for (int i = 0; i < m; ++i)
            for (int j = 0; j < m; ++j) {
                const double x[2] = {cfg.grid.theta_lo + (cfg.grid.theta_hi - cfg.grid.theta_lo) * i / (m - 1),
                                     cfg.grid.v_lo + (cfg.grid.v_hi - cfg.grid.v_lo) * j / (m - 1)};
                double b[2];
                sys.drift(x, 0.0, b);
                os << format_double(x[0]) << ',' << format_double(x[1]) << ',' << format_double(b[0]) << ','
                   << format_double(b[1]) << '\n';
            }
    }
    ctx.log.data("drift_field.csv", "deterministic vector field on a 21x21 lattice");
}

}  // namespace detail

/// Runs the configured pipeline and writes its outputs plus manifest.json.
/// Numerical failures leave a manifest with an error record and are rethrown.
inline json run_experiment(const ExperimentConfig& cfg, const RunOptions& run = {}) {
    const auto start = std::chrono::steady_clock::now();
    const std::filesystem::path dir = run.out_dir ? *run.out_dir : cfg.output_dir.value_or("capsize_out");
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec || !std::filesystem::is_directory(dir)) throw ConfigError("output_dir: cannot create " + dir.string());
    ArtifactLog log(dir);
    json results = json::object();
    json manifest{{"library", "capsize"},    {"version", library_version},        {"pipeline", cfg.pipeline},
                  {"seed", cfg.seed ? json(*cfg.seed) : json(nullptr)}, {"config", to_json(cfg)}};
    auto finish = [&](const char* status) {
        manifest["status"] = status;
        manifest["artifacts"] = log.list();
        manifest["results"] = results;
        manifest["wall_time_seconds"] =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        write_json(manifest, dir / "manifest.json");
    };
    detail::PipelineContext ctx{cfg, run, log, results};
    try {
        const auto& p = cfg.pipeline;
        if (p == "simulate") detail::run_simulate(ctx);
        else if (p == "capsize-time") detail::run_capsize_time(ctx);
        else if (p == "committor") detail::run_committor(ctx);
        else if (p == "mc-rate") detail::run_mc_rate(ctx);
        else if (p == "minact") detail::run_minact(ctx);
        else if (p == "figure2") detail::run_figure2(ctx);
        else throw ConfigError("pipeline: unknown pipeline '" + p + "'");
    } catch (const ConfigError& e) {
        manifest["error"] = {{"type", "config"}, {"message", e.what()}};
        finish("error");
        throw;
    } catch (const NumericalError& e) {
        manifest["error"] = {{"type", "numerical"}, {"message", e.what()}};
        if (const auto* d = dynamic_cast<const DivergenceError*>(&e)) manifest["error"]["divergence_time"] = d->time();
        finish("error");
        throw;
    }
    finish("ok");
    return manifest;
}

}  // namespace capsize
