#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "core_model.hpp"
#include "errors.hpp"
#include "grid.hpp"
#include "integrate.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "saddle_flux.hpp"

namespace capsize {

/// Reactive segments and transition counts of a long A <-> B run.
struct TransitionRecord {
    /// Stored segments (reservoir sample when more transitions than the cap occurred).
    std::vector<Path> segments;
    double total_time = 0.0;
    std::size_t n_transitions = 0;
    /// Summed duration of all reactive segments, stored or not.
    double reactive_time = 0.0;
    double rate = 0.0;
    double rate_stderr = 0.0;
    /// One-sided 95% upper bound on the rate (3 / total_time when no transition occurred).
    double rate_upper95 = 0.0;
    /// Exact time-weighted histogram of all segments when a grid was requested.
    std::optional<ScalarField> histogram_mass;

    double mean_segment_duration() const { return n_transitions ? reactive_time / n_transitions : 0.0; }

    void finalize() {
        const double n = static_cast<double>(n_transitions);
        rate = total_time > 0.0 ? n / total_time : 0.0;
        rate_stderr = total_time > 0.0 ? std::sqrt(n) / total_time : 0.0;
        rate_upper95 = n_transitions == 0 ? (total_time > 0.0 ? 3.0 / total_time : INFINITY)
                                          : rate + 1.6448536269514722 * rate_stderr;
    }
};

/// Concatenates segments and sums counts and times; associative.
inline TransitionRecord merge(const TransitionRecord& a, const TransitionRecord& b) {
    TransitionRecord out;
    out.segments = a.segments;
    out.segments.insert(out.segments.end(), b.segments.begin(), b.segments.end());
    out.total_time = a.total_time + b.total_time;
    out.n_transitions = a.n_transitions + b.n_transitions;
    out.reactive_time = a.reactive_time + b.reactive_time;
    if (a.histogram_mass && b.histogram_mass) {
        if (!(a.histogram_mass->grid == b.histogram_mass->grid)) throw ConfigError("histogram grids differ");
        out.histogram_mass = a.histogram_mass;
        for (std::size_t k = 0; k < out.histogram_mass->values.size(); ++k)
            out.histogram_mass->values[k] += b.histogram_mass->values[k];
    } else {
        out.histogram_mass = a.histogram_mass ? a.histogram_mass : b.histogram_mass;
    }
    out.finalize();
    return out;
}

struct TransitionOptions {
    bool store_segments = true;
    std::size_t max_stored_segments = 10'000;
    /// Independent streams, each simulating total_time / streams with a derived seed.
    int streams = 1;
    /// Threads used to run the streams; does not change results.
    int workers = 1;
    /// Accumulate the exact time-weighted histogram of every segment on this grid.
    std::optional<Grid2D> histogram_grid;
};

namespace detail {

/// Centre of the first ellipse of A, used as the re-injection point.
inline std::vector<double> region_center(const RegionSpec& A, int dim) {
    for (const auto& s : A.shapes)
        if (const auto* e = std::get_if<Ellipse>(&s)) {
            std::vector<double> c(dim, 0.0);
            c[0] = e->center[0];
            c[1] = e->center[1];
            return c;
        }
    throw ConfigError("region A needs an ellipse to define its centre");
}

/// Nearest-node binning; returns false outside the grid box.
inline bool nearest_node(const Grid2D& g, double th, double v, std::size_t& k) {
    if (th < g.theta_lo || th > g.theta_hi || v < g.v_lo || v > g.v_hi) return false;
    const int i = static_cast<int>(std::lround((th - g.theta_lo) / g.h_theta()));
    const int j = static_cast<int>(std::lround((v - g.v_lo) / g.h_v()));
    k = g.index(std::clamp(i, 0, g.n_theta - 1), std::clamp(j, 0, g.n_v - 1));
    return true;
}

inline TransitionRecord run_transition_stream(const SystemSpec& sys, const RegionSpec& A, const RegionSpec& B,
                                              double total_time, double dt, std::uint64_t seed, std::size_t cap,
                                              const TransitionOptions& opt) {
    const int n = sys.dim;
    const auto center = region_center(A, n);
    if (!A.contains(center)) throw ConfigError("centre of region A is not inside A");
    TransitionRecord rec;
    rec.total_time = total_time;
    if (opt.histogram_grid)
        rec.histogram_mass = ScalarField{*opt.histogram_grid, std::vector<double>(opt.histogram_grid->size(), 0.0),
                                         FieldKind::reactive_density};
    const auto steps = static_cast<std::uint64_t>(std::llround(total_time / dt));
    EulerMaruyama em(sys, seed);
    NormalStream reservoir(seed, StreamTag::reservoir);
    std::vector<double> x = center, next(n);
    Path buf;
    buf.dim = n;
    buf.step = dt;
    buf.seed = seed;
    buf.stochastic = true;
    buf.push(0.0, x);
    for (std::uint64_t k = 0; k < steps; ++k) {
        const double t = static_cast<double>(k) * dt;
        em.step(x, t, dt, k, next);
        check_finite(next, t + dt);
        x.swap(next);
        const double tn = static_cast<double>(k + 1) * dt;
        if (A.contains(x)) {
            buf.times.clear();
            buf.states.clear();
            buf.push(tn, x);
            continue;
        }
        buf.push(tn, x);
        if (!B.contains(x)) continue;
        ++rec.n_transitions;
        rec.reactive_time += buf.times.back() - buf.times.front();
        if (rec.histogram_mass) {
            auto& h = *rec.histogram_mass;
            for (std::size_t s = 0; s < buf.size(); ++s) {
                std::size_t node;
                if (nearest_node(h.grid, buf.state(s)[0], buf.state(s)[1], node)) h.values[node] += dt;
            }
        }
        if (opt.store_segments && cap > 0) {
            if (rec.segments.size() < cap) {
                rec.segments.push_back(buf);
            } else {
                const auto j = static_cast<std::size_t>(reservoir.uniform(rec.n_transitions) *
                                                        static_cast<double>(rec.n_transitions));
                if (j < cap) rec.segments[j] = buf;
            }
        }
        x = center;
        buf.times.clear();
        buf.states.clear();
        buf.push(tn, x);
    }
    rec.finalize();
    return rec;
}

}  // namespace detail

/// Long-run A -> B transition counting with re-injection at the centre of A after every capsize.
inline TransitionRecord sample_transitions(const SystemSpec& sys, const RegionSpec& A, const RegionSpec& B,
                                           double total_time, double dt, std::uint64_t seed,
                                           TransitionOptions opt = {}) {
    sys.validate();
    A.validate();
    B.validate();
    if (sys.dim < 2) throw ConfigError("transition sampling needs at least two state coordinates");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (!(total_time >= 0.0)) throw ConfigError("total_time must be >= 0");
    if (opt.streams < 1) throw ConfigError("streams must be >= 1");
    if (opt.histogram_grid) opt.histogram_grid->validate();
    if (opt.streams == 1)
        return detail::run_transition_stream(sys, A, B, total_time, dt, seed, opt.max_stored_segments, opt);
    const std::size_t w = static_cast<std::size_t>(opt.streams);
    const std::size_t cap = (opt.max_stored_segments + w - 1) / w;
    std::vector<TransitionRecord> parts(w);
    parallel_for(w, opt.workers, [&](std::size_t s) {
        parts[s] = detail::run_transition_stream(sys, A, B, total_time / static_cast<double>(w), dt,
                                                 derive_seed(seed, s), cap, opt);
    });
    TransitionRecord out = parts[0];
    for (std::size_t s = 1; s < w; ++s) out = merge(out, parts[s]);
    return out;
}

/// Time-weighted histogram density of the stored segments, unit mass on the grid.
inline ScalarField reactive_histogram(const TransitionRecord& rec, const Grid2D& g) {
    g.validate();
    if (rec.segments.empty()) throw ConfigError("transition record holds no segments");
    ScalarField out{g, std::vector<double>(g.size(), 0.0), FieldKind::reactive_density, true};
    for (const auto& seg : rec.segments) {
        const double w = seg.step > 0.0 ? seg.step : 1.0;
        for (std::size_t s = 0; s < seg.size(); ++s) {
            std::size_t node;
            if (detail::nearest_node(g, seg.state(s)[0], seg.state(s)[1], node)) out.values[node] += w;
        }
    }
    double mass = 0.0;
    for (double v : out.values) mass += v;
    if (!(mass > 0.0)) throw NumericalError("no segment state falls inside the grid");
    for (int i = 0; i < g.n_theta; ++i)
        for (int j = 0; j < g.n_v; ++j) out.values[g.index(i, j)] /= mass * g.weight(i, j);
    return out;
}

/// Converts accumulated per-node masses (e.g. TransitionRecord::histogram_mass) into a unit-mass density.
inline ScalarField mass_to_density(const ScalarField& mass_field) {
    const Grid2D& g = mass_field.grid;
    double mass = 0.0;
    for (double v : mass_field.values) mass += v;
    if (!(mass > 0.0)) throw NumericalError("histogram is empty");
    ScalarField out{g, std::vector<double>(g.size(), 0.0), FieldKind::reactive_density, true};
    for (int i = 0; i < g.n_theta; ++i)
        for (int j = 0; j < g.n_v; ++j) out.values[g.index(i, j)] = mass_field.at(i, j) / (mass * g.weight(i, j));
    return out;
}

/// Time of first entry into B for independent members; same aggregation as capsize_time_ensemble.
inline CapsizeStats survivability_mc(const SystemSpec& sys, const InitialSampler& sampler, const RegionSpec& B,
                                     double horizon, double dt, std::size_t n_samples, std::uint64_t seed,
                                     EnsembleOptions opt = {}) {
    sys.validate();
    B.validate();
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (!(horizon >= 0.0)) throw ConfigError("horizon must be >= 0");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    if (static_cast<int>(sampler.dim()) != sys.dim) throw ConfigError("initial sampler dimension mismatch");
    std::vector<double> T(n_samples);
    parallel_for(n_samples, opt.workers, [&](std::size_t i) {
        const std::uint64_t s = derive_seed(seed, i);
        try {
            std::vector<double> x = sampler.sample(s), next(sys.dim);
            if (B.contains(x)) {
                T[i] = 0.0;
                return;
            }
            detail::EulerMaruyama em(sys, s);
            T[i] = INFINITY;
            for (std::uint64_t k = 0;; ++k) {
                const double t = static_cast<double>(k) * dt;
                if (t >= horizon || t + dt > horizon) break;
                em.step(x, t, dt, k, next);
                detail::check_finite(next, t + dt);
                x.swap(next);
                if (B.contains(x)) {
                    T[i] = t + dt;
                    break;
                }
            }
        } catch (const NumericalError&) {
            T[i] = NAN;
        }
    });
    return aggregate_capsize_times(std::move(T), horizon, opt.stats);
}

}  // namespace capsize
