#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "core_model.hpp"
#include "errors.hpp"
#include "rng.hpp"
#include "surface.hpp"

namespace capsize {

/// Time-stamped states, row-major.
struct Path {
    int dim = 0;
    std::vector<double> times;
    std::vector<double> states;
    std::uint64_t seed = 0;
    double step = 0.0;
    bool stochastic = false;

    std::size_t size() const { return times.size(); }
    std::span<const double> state(std::size_t i) const {
        return {states.data() + i * static_cast<std::size_t>(dim), static_cast<std::size_t>(dim)};
    }
    std::span<const double> back() const { return state(size() - 1); }
    void push(double t, std::span<const double> x) {
        times.push_back(t);
        states.insert(states.end(), x.begin(), x.end());
    }
};

struct CrossingResult {
    bool crossed = false;
    double time = INFINITY;
    std::vector<double> state;
};

namespace detail {

inline void check_finite(std::span<const double> x, double t) {
    for (double v : x)
        if (!std::isfinite(v)) throw DivergenceError(t, "non-finite state");
}

inline void check_interval(double t0, double t1, double dt) {
    if (!(dt > 0.0) || !std::isfinite(dt)) throw ConfigError("dt must be positive");
    if (!(t1 >= t0)) throw ConfigError("t1 must not precede t0");
}

/// Workspace for one-step methods.
struct StepBuffers {
    explicit StepBuffers(int n) : k1(n), k2(n), k3(n), k4(n), tmp(n), next(n) {}
    std::vector<double> k1, k2, k3, k4, tmp, next;
};

inline void rk4_step(const SystemSpec& sys, std::span<const double> x, double t, double h, StepBuffers& b,
                     std::span<double> out) {
    const int n = sys.dim;
    sys.drift(x, t, b.k1);
    for (int i = 0; i < n; ++i) b.tmp[i] = x[i] + 0.5 * h * b.k1[i];
    sys.drift(b.tmp, t + 0.5 * h, b.k2);
    for (int i = 0; i < n; ++i) b.tmp[i] = x[i] + 0.5 * h * b.k2[i];
    sys.drift(b.tmp, t + 0.5 * h, b.k3);
    for (int i = 0; i < n; ++i) b.tmp[i] = x[i] + h * b.k3[i];
    sys.drift(b.tmp, t + h, b.k4);
    for (int i = 0; i < n; ++i) out[i] = x[i] + h / 6.0 * (b.k1[i] + 2.0 * b.k2[i] + 2.0 * b.k3[i] + b.k4[i]);
}

/// Euler-Maruyama stepper; noise of step `k`, channel `c` is normal number k*m + c of the stream.
class EulerMaruyama {
public:
    EulerMaruyama(const SystemSpec& sys, std::uint64_t seed)
        : sys_(sys), noise_(seed, StreamTag::noise), drift_(sys.dim), sig_(static_cast<std::size_t>(sys.dim) * sys.noise_channels),
          eta_(sys.noise_channels) {}

    void step(std::span<const double> x, double t, double h, std::uint64_t k, std::span<double> out) {
        const int n = sys_.dim, m = sys_.noise_channels;
        sys_.drift(x, t, drift_);
        for (int i = 0; i < n; ++i) out[i] = x[i] + h * drift_[i];
        if (sys_.epsilon == 0.0 || m == 0) return;
        sys_.diffusion(x, sig_);
        const double amp = sys_.epsilon * std::sqrt(h);
        for (int c = 0; c < m; ++c) eta_[c] = noise_.at(k * static_cast<std::uint64_t>(m) + c);
        for (int i = 0; i < n; ++i) {
            double acc = 0.0;
            for (int c = 0; c < m; ++c) acc += sig_[static_cast<std::size_t>(i) * m + c] * eta_[c];
            out[i] += amp * acc;
        }
    }

private:
    const SystemSpec& sys_;
    NormalStream noise_;
    std::vector<double> drift_, sig_, eta_;
};

inline std::size_t step_count(double t0, double t1, double dt) {
    if (t1 == t0) return 0;
    return static_cast<std::size_t>(std::ceil((t1 - t0) / dt * (1.0 - 1e-12)));
}

}  // namespace detail

/// Classical RK4 on [t0, t1] with the step shrunk so the path ends at t1.
inline Path integrate_ode(const SystemSpec& sys, std::span<const double> x0, double t0, double t1, double dt) {
    sys.validate();
    detail::check_interval(t0, t1, dt);
    if (static_cast<int>(x0.size()) != sys.dim) throw ConfigError("initial state dimension mismatch");
    const std::size_t steps = detail::step_count(t0, t1, dt);
    const double h = steps ? (t1 - t0) / static_cast<double>(steps) : dt;
    Path p;
    p.dim = sys.dim;
    p.step = h;
    p.times.reserve(steps + 1);
    p.states.reserve((steps + 1) * sys.dim);
    detail::check_finite(x0, t0);
    p.push(t0, x0);
    detail::StepBuffers b(sys.dim);
    std::vector<double> x(x0.begin(), x0.end());
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = t0 + static_cast<double>(k) * h;
        detail::rk4_step(sys, x, t, h, b, b.next);
        const double tn = (k + 1 == steps) ? t1 : t0 + static_cast<double>(k + 1) * h;
        detail::check_finite(b.next, tn);
        x.swap(b.next);
        p.push(tn, x);
    }
    return p;
}

/// Euler-Maruyama on [t0, t1]; eps = 0 gives explicit Euler.
inline Path integrate_sde(const SystemSpec& sys, std::span<const double> x0, double t0, double t1, double dt,
                          std::uint64_t seed) {
    sys.validate();
    detail::check_interval(t0, t1, dt);
    if (static_cast<int>(x0.size()) != sys.dim) throw ConfigError("initial state dimension mismatch");
    const std::size_t steps = detail::step_count(t0, t1, dt);
    const double h = steps ? (t1 - t0) / static_cast<double>(steps) : dt;
    Path p;
    p.dim = sys.dim;
    p.step = h;
    p.seed = seed;
    p.stochastic = true;
    p.times.reserve(steps + 1);
    p.states.reserve((steps + 1) * sys.dim);
    detail::check_finite(x0, t0);
    p.push(t0, x0);
    detail::EulerMaruyama em(sys, seed);
    std::vector<double> x(x0.begin(), x0.end()), next(sys.dim);
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = t0 + static_cast<double>(k) * h;
        em.step(x, t, h, k, next);
        const double tn = (k + 1 == steps) ? t1 : t0 + static_cast<double>(k + 1) * h;
        detail::check_finite(next, tn);
        x.swap(next);
        p.push(tn, x);
    }
    return p;
}

/// First crossing of `surface` from g <= 0 to g > 0 with velocity along grad g, within `horizon`.
/// Stochastic iff a seed is given and eps > 0; steps have fixed size dt.
inline CrossingResult first_crossing(const SystemSpec& sys, std::span<const double> x0, const DividingSurface& surface,
                                     double horizon, double dt, std::optional<std::uint64_t> seed) {
    sys.validate();
    if (!(horizon >= 0.0)) throw ConfigError("horizon must be >= 0");
    if (!(dt > 0.0)) throw ConfigError("dt must be positive");
    const int n = sys.dim;
    CrossingResult res;
    if (surface(x0, 0.0) > 0.0) {
        res.crossed = true;
        res.time = 0.0;
        res.state.assign(x0.begin(), x0.end());
        return res;
    }
    const bool noisy = seed.has_value() && sys.epsilon > 0.0 && sys.noise_channels > 0;
    detail::EulerMaruyama em(sys, seed.value_or(0));
    detail::StepBuffers b(n);
    std::vector<double> x(x0.begin(), x0.end()), next(n), probe(n), grad(n), vel(n);
    double g_prev = surface(x, 0.0);
    for (std::uint64_t k = 0;; ++k) {
        const double t = static_cast<double>(k) * dt;
        if (t >= horizon) break;
        if (noisy)
            em.step(x, t, dt, k, next);
        else
            detail::rk4_step(sys, x, t, dt, b, next);
        detail::check_finite(next, t + dt);
        const double g_next = surface(next, t + dt);
        if (g_prev <= 0.0 && g_next > 0.0) {
            // Bisection on the fraction s of the step where g changes sign.
            double lo = 0.0, hi = 1.0;
            auto point_at = [&](double s, std::span<double> out) {
                if (s == 1.0) {
                    std::copy(next.begin(), next.end(), out.begin());
                } else if (noisy) {
                    for (int i = 0; i < n; ++i) out[i] = x[i] + s * (next[i] - x[i]);
                } else {
                    detail::StepBuffers sb(n);
                    detail::rk4_step(sys, x, t, s * dt, sb, out);
                }
            };
            while (hi - lo > 1e-8) {
                const double mid = 0.5 * (lo + hi);
                point_at(mid, probe);
                if (surface(probe, t + mid * dt) > 0.0)
                    hi = mid;
                else
                    lo = mid;
            }
            point_at(hi, probe);
            const double tc = t + hi * dt;
            if (tc > horizon) break;
            surface.grad(probe, tc, grad);
            if (noisy)
                for (int i = 0; i < n; ++i) vel[i] = next[i] - x[i];
            else
                sys.drift(probe, tc, vel);
            double dir = 0.0;
            for (int i = 0; i < n; ++i) dir += vel[i] * grad[i];
            if (dir > 0.0) {
                res.crossed = true;
                res.time = tc;
                res.state = probe;
                return res;
            }
        }
        g_prev = g_next;
        x.swap(next);
    }
    return res;
}

}  // namespace capsize
