// Acceptance checks, one per criterion: `acceptance --criterion N` or no arguments for all.

#include <capsize/analysis.hpp>
#include <capsize/core_model.hpp>
#include <capsize/integrate.hpp>
#include <capsize/ldt.hpp>
#include <capsize/mc_rare.hpp>
#include <capsize/saddle_flux.hpp>
#include <capsize/tpt.hpp>

#include "oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <optional>
#include <sstream>
#include <string>

using namespace capsize;
using namespace oracles;

namespace {

constexpr int kWorkers = 4;

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* f, auto... args) {
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

struct Fields {
    ScalarField rho, qp, qm;
    TptRate rate;
};

const Fields& toy_fields() {
    static const Fields f = [] {
        const auto sys = toy(0.4);
        const Grid2D g;
        Fields out;
        out.rho = solve_stationary_density(sys, g);
        out.qp = solve_committor_forward(sys, g, region_a(), region_b());
        out.qm = solve_committor_backward(sys, g, region_a(), region_b(), out.rho);
        out.rate = transition_rate_tpt(sys, g, out.rho, out.qp, out.qm);
        return out;
    }();
    return f;
}

const ActionResult& escape_path() {
    static const ActionResult r = [] {
        MinimizeOptions m;
        m.end_free = {false, true};
        m.via = find_saddle(toy(0.4), std::vector<double>{1.0, 0.0});
        return minimize_action(toy(0.4), std::vector<double>{0.0, 0.0}, std::vector<double>{1.5, 0.0}, m);
    }();
    return r;
}

TransitionRecord long_run(double eps, std::uint64_t seed, double total_time, bool histogram) {
    TransitionOptions o;
    o.streams = 4;
    o.workers = kWorkers;
    o.store_segments = false;
    if (histogram) o.histogram_grid = Grid2D{};
    return sample_transitions(toy(eps), region_a(), region_b(), total_time, 1e-3, seed, o);
}

const TransitionRecord& reference_run() {
    static const TransitionRecord r = long_run(0.4, 1, 1e5, true);
    return r;
}

bool survival_shape_ok(const CapsizeStats& st) {
    if (st.s_values.empty() || st.s_values.front() != 1.0) return false;
    for (std::size_t j = 1; j < st.s_values.size(); ++j)
        if (st.s_values[j] > st.s_values[j - 1]) return false;
    return true;
}

Outcome criterion1() {
    const auto& rho = toy_fields().rho;
    const auto ref = gibbs_density(rho.grid, toy_params(0.4));
    double worst = 0.0;
    std::size_t at = 0;
    for (std::size_t k = 0; k < rho.values.size(); ++k)
        if (rho.values[k] > 1e-6) {
            const double e = std::abs(rho.values[k] / ref.values[k] - 1.0);
            if (e > worst) {
                worst = e;
                at = k;
            }
        }
    const Grid2D& g = rho.grid;
    const int i = static_cast<int>(at) / g.n_v, j = static_cast<int>(at) % g.n_v;
    double well = 0.0, well_ref = 0.0;
    for (int a = 0; a < g.n_theta; ++a)
        for (int b = 0; b < g.n_v; ++b)
            if (std::abs(g.theta(a)) < 1.0) {
                well += rho.at(a, b) * g.weight(a, b);
                well_ref += ref.at(a, b) * g.weight(a, b);
            }
    return {worst < 0.05, fmt("max relative error %.4g at (%.3f, %.3f), tolerance 0.05; mass in |theta|<1 grid %.4g vs "
                              "Gibbs %.4g",
                              worst, g.theta(i), g.v(j), well, well_ref)};
}

Outcome criterion2() {
    const auto& qp = toy_fields().qp;
    const double grid_q = qp.interpolate(1.0, 0.0);
    const auto mc = first_hit_probability(toy(0.4), {1.0, 0.0}, region_a(), region_b(), 20000, 1e-3, 2024, 1e4, kWorkers);
    const Grid2D g{-2.0, 2.0, -2.5, 2.5, 201, 201};
    TptOptions o;
    o.theta_walls = WallMode::no_flux;
    const auto sym = solve_committor_forward(double_well(0.4), g, well_a(), well_b(), o);
    const double q_saddle = sym.values[node_at(g, 0.0, 0.0)];
    const bool ok = std::abs(grid_q - mc.p) < 0.03 && std::abs(q_saddle - 0.5) <= 0.02;
    return {ok, fmt("grid q+(1,0) %.4f vs MC %.4f +- %.4f (%zu undecided), |diff| %.4f < 0.03; symmetric q+(saddle) "
                    "%.4f",
                    grid_q, mc.p, mc.stderr_, mc.undecided, std::abs(grid_q - mc.p), q_saddle)};
}

Outcome criterion3() {
    const auto& f = toy_fields();
    const Grid2D& g = f.rho.grid;
    double worst = 0.0;
    for (int i = 0; i < g.n_theta; ++i)
        for (int j = 0; j < g.n_v; ++j) {
            if (!(f.rho.at(i, j) > 1e-6)) continue;
            worst = std::max(worst, std::abs(f.qm.at(i, j) - (1.0 - f.qp.at(i, g.n_v - 1 - j))));
        }
    return {worst < 0.02, fmt("sup |q- - (1 - q+ mirrored)| = %.4f, tolerance 0.02", worst)};
}

Outcome criterion4() {
    const double k = toy_fields().rate.k_ab;
    const auto& a = reference_run();
    const auto b = long_run(0.4, 2, 1e5, false);
    const double ratio = std::max(k, a.rate) / std::min(k, a.rate);
    const double z = std::abs(a.rate - b.rate) / std::hypot(a.rate_stderr, b.rate_stderr);
    return {ratio < 2.0 && z < 3.0,
            fmt("TPT k_AB %.5f (discrete %.5f), MC %.5f +- %.5f, ratio %.3f < 2; seeds 1 vs 2 differ by %.2f SE",
                k, toy_fields().rate.k_ab_discrete, a.rate, a.rate_stderr, ratio, z)};
}

Outcome criterion5() {
    const auto& r = escape_path();
    const auto& p = r.path;
    int k = 0;
    while (k < p.n_points() && p.point(k)[0] < 1.0) ++k;
    const double downhill = k < p.n_points() - 1 ? partial_action(p, toy(0.4), k, p.n_points() - 1) : 0.0;
    const bool ok = std::abs(r.value - 0.25) <= 0.02 * 0.25 && downhill < 1e-3 && k < p.n_points() - 1;
    return {ok, fmt("S* %.6f at T %.2f (converged %d, infeasibility %.1e), target 0.25 +- 2%%; downhill action %.2e",
                    r.value, p.duration, static_cast<int>(r.converged), r.infeasibility, downhill)};
}

Outcome criterion6() {
    const std::vector<double> eps{0.35, 0.4, 0.45, 0.5};
    std::vector<double> x, y, s;
    std::string rates;
    for (double e : eps) {
        const auto r = long_run(e, 31, 1e5, false);
        if (r.n_transitions == 0) return {false, fmt("no transitions at eps %.2f", e)};
        x.push_back(1.0 / (e * e));
        y.push_back(std::log(r.rate));
        s.push_back(1.0 / std::sqrt(static_cast<double>(r.n_transitions)));
        rates += fmt(" %.5f", r.rate);
    }
    const auto fit = linear_fit(x, y, s);
    const double S = escape_path().value;
    const double rel = std::abs(-fit.slope - S) / S;
    return {rel <= 0.30, fmt("slope %.4f +- %.4f vs -S* %.4f, relative deviation %.3f <= 0.30; rates%s", fit.slope,
                             fit.slope_stderr, -S, rel, rates.c_str())};
}

Outcome criterion7() {
    const auto& f = toy_fields();
    const auto pde = reactive_density(f.rho, f.qp, f.qm);
    const auto hist = mass_to_density(*reference_run().histogram_mass);
    auto line = planar_polyline(escape_path().path);
    auto mirror = line;
    for (auto& p : mirror) p = {-p[0], -p[1]};
    const double tube = tube_mass_fraction(hist, {line, mirror}, 0.35);
    const double corr = normalized_correlation(pde, hist);
    return {tube >= 0.6 && corr > 0.8, fmt("tube mass fraction %.3f >= 0.6; PDE/MC correlation %.4f > 0.8", tube, corr)};
}

Outcome criterion8() {
    const auto s0 = toy(0.0), s4 = toy(0.4);
    const auto saddles = std::vector<SaddleInfo>{find_saddle(s4, std::vector<double>{-1.0, 0.0}),
                                                 find_saddle(s4, std::vector<double>{1.0, 0.0})};
    const auto surface = union_surface({default_dividing_surface(saddles[0]), default_dividing_surface(saddles[1])});
    RegionSpec B{{}, 'B'};
    for (const auto& sp : saddles) {
        const auto& u = sp.unstable_direction;
        B.shapes.push_back(HalfPlane{{u[0], u[1]}, u[0] * sp.point[0] + u[1] * sp.point[1]});
    }
    const InitialSampler box(UniformBox{{-0.3, -0.3}, {0.3, 0.3}});
    EnsembleOptions eo;
    eo.workers = kWorkers;
    bool ok = true;
    std::string detail;

    const auto quiet = capsize_time_ensemble(s0, box, surface, 20.0, 1e-2, 1000, 3, eo);
    bool all_inf = true;
    for (double T : quiet.capsize_times) all_inf = all_inf && std::isinf(T) && T > 0;
    bool s_one = true;
    for (double v : quiet.s_values) s_one = s_one && v == 1.0;
    ok = ok && all_inf && s_one && survival_shape_ok(quiet);
    detail += fmt("eps 0: S==1 %d, all T infinite %d;", static_cast<int>(s_one), static_cast<int>(all_inf));

    for (double horizon : {5.0, 20.0}) {
        const auto a = capsize_time_ensemble(s4, box, surface, horizon, 1e-2, 10000, 41, eo);
        const auto b = survivability_mc(s4, box, B, horizon, 1e-2, 10000, 43, eo);
        const double z = std::abs(a.p_capsize - b.p_capsize) / std::hypot(a.p_stderr, b.p_stderr);
        ok = ok && z < 3.0 && survival_shape_ok(a) && survival_shape_ok(b);
        detail += fmt(" horizon %.0f: p %.4f vs %.4f (%.2f SE);", horizon, a.p_capsize, b.p_capsize, z);
    }
    detail += " survival curves start at 1 and never increase";
    return {ok, detail};
}

Outcome criterion9() {
    // Lyapunov residual on a coupled two-dimensional filter.
    FilterSpec f;
    f.k = 2;
    f.A.resize(2, 2);
    f.A << -0.5, 1.0, -1.0, -0.5;
    f.C.resize(2, 2);
    f.C << 1.0, 0.3, 0.3, 0.5;
    f.epsilon = 0.7;
    const auto S = ou_stationary_covariance(f);
    const double lyap = (f.A * S + S * f.A.transpose() + f.epsilon * f.epsilon * f.C).cwiseAbs().maxCoeff();

    // Action gradient on pseudo-random paths.
    double grad = 0.0;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        NormalStream rng(seed, StreamTag::initial_state);
        DiscretePath p;
        p.dim = 2;
        p.duration = 5.0;
        for (std::uint64_t i = 0; i < 200; ++i) p.states.push_back(0.5 * rng.at(i));
        grad = std::max(grad, gradient_check(p, toy(0.4)));
    }

    // RK4 order on the damped linear oscillator against its exact solution.
    SystemSpec lin;
    lin.dim = 2;
    lin.drift = [](std::span<const double> x, double, std::span<double> out) {
        out[0] = x[1];
        out[1] = -x[0] - 0.5 * x[1];
    };
    const double T = 5.0, w = std::sqrt(1.0 - 0.0625);
    const double exact = std::exp(-0.25 * T) * (std::cos(w * T) + 0.25 / w * std::sin(w * T));
    std::vector<double> err;
    for (double dt : {0.2, 0.1, 0.05}) err.push_back(std::abs(integrate_ode(lin, std::vector<double>{1.0, 0.0}, 0.0, T, dt).back()[0] - exact));
    const double order = std::min(std::log2(err[0] / err[1]), std::log2(err[1] / err[2]));

    // Committor ranges as produced by the solver.
    double lo = INFINITY, hi = -INFINITY;
    for (const auto* q : {&toy_fields().qp, &toy_fields().qm})
        for (double v : q->values) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const bool ok = lyap < 1e-10 && grad < 1e-6 && order >= 3.5 && lo >= 0.0 && hi <= 1.0;
    return {ok, fmt("Lyapunov residual %.1e; gradient error %.1e; RK4 order %.2f; committor range [%.3g, %.17g]", lyap,
                    grad, order, lo, hi)};
}

struct Criterion {
    std::function<Outcome()> run;
    double budget_seconds;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{{criterion1, 60.0},  {criterion2, 300.0},  {criterion3, 600.0},
                                     {criterion4, 600.0}, {criterion5, 600.0},  {criterion6, 1800.0},
                                     {criterion7, 1800.0}, {criterion8, 1800.0}, {criterion9, 600.0}};
    std::vector<int> chosen;
    if (argc == 3 && std::string(argv[1]) == "--criterion") {
        const int n = std::atoi(argv[2]);
        if (n < 1 || n > static_cast<int>(all.size())) {
            std::fprintf(stderr, "criterion must be 1..%zu\n", all.size());
            return 2;
        }
        chosen.push_back(n);
    } else if (argc == 1) {
        for (int n = 1; n <= static_cast<int>(all.size()); ++n) chosen.push_back(n);
    } else {
        std::fprintf(stderr, "usage: acceptance [--criterion N]\n");
        return 2;
    }
    int failures = 0;
    for (int n : chosen) {
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = all[n - 1].run();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        const bool in_time = secs <= all[n - 1].budget_seconds;
        const bool pass = o.pass && in_time;
        std::printf("criterion %d: %s %s; %.1f s (budget %.0f s)\n", n, pass ? "PASS" : "FAIL", o.detail.c_str(), secs,
                    all[n - 1].budget_seconds);
        std::fflush(stdout);
        failures += pass ? 0 : 1;
    }
    return failures ? 1 : 0;
}
