#pragma once

#include <algorithm>
#include <cmath>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Sparse>
#include <Eigen/SparseCholesky>

#include "core_model.hpp"
#include "errors.hpp"
#include "integrate.hpp"
#include "lbfgs.hpp"
#include "saddle_flux.hpp"

namespace capsize {

/// Path on a uniform time grid over [0, duration].
struct DiscretePath {
    int dim = 0;
    double duration = 0.0;
    /// Row-major, n_points x dim.
    std::vector<double> states;
    std::vector<bool> fixed_start, fixed_end;

    int n_points() const { return dim ? static_cast<int>(states.size() / dim) : 0; }
    double dt() const { return duration / (n_points() - 1); }
    std::span<const double> point(int k) const {
        return {states.data() + static_cast<std::size_t>(k) * dim, static_cast<std::size_t>(dim)};
    }
    std::span<double> point(int k) {
        return {states.data() + static_cast<std::size_t>(k) * dim, static_cast<std::size_t>(dim)};
    }
};

struct ActionEvaluation {
    /// Action at unit noise amplitude.
    double value = 0.0;
    /// Max violation of the deterministic equations of the unforced channels.
    double infeasibility = 0.0;
};

/// Forced/unforced coordinate split and the metric (sigma sigma^T restricted to F)^-1.
struct ChannelSplit {
    std::vector<int> forced, unforced;
    Eigen::MatrixXd metric;
};

inline ChannelSplit channel_split(const SystemSpec& sys, std::span<const double> x) {
    const Eigen::MatrixXd s = sys.sigma(x);
    ChannelSplit cs;
    for (int i = 0; i < sys.dim; ++i) {
        if (s.cols() > 0 && s.row(i).cwiseAbs().maxCoeff() > 0.0)
            cs.forced.push_back(i);
        else
            cs.unforced.push_back(i);
    }
    if (cs.forced.empty()) throw ConfigError("system has no forced channel");
    const int f = static_cast<int>(cs.forced.size());
    Eigen::MatrixXd a(f, f);
    const Eigen::MatrixXd ss = s * s.transpose();
    for (int i = 0; i < f; ++i)
        for (int j = 0; j < f; ++j) a(i, j) = ss(cs.forced[i], cs.forced[j]);
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(a);
    if (!(es.eigenvalues().minCoeff() > 1e-12 * std::max(1.0, es.eigenvalues().maxCoeff())))
        throw ConfigError("sigma sigma^T is singular on the forced channels");
    cs.metric = a.inverse();
    return cs;
}

namespace detail {

inline void check_path(const DiscretePath& p, const SystemSpec& sys) {
    if (p.dim != sys.dim) throw ConfigError("path dimension does not match the system");
    if (p.n_points() < 2 || p.states.size() % p.dim) throw ConfigError("path needs at least two points");
    if (!(p.duration > 0.0)) throw ConfigError("path duration must be positive");
}

inline void require_constant_noise(const SystemSpec& sys, const DiscretePath& p, const ChannelSplit& cs) {
    const Eigen::MatrixXd s0 = sys.sigma(p.point(0));
    for (int k : {p.n_points() / 2, p.n_points() - 1})
        if ((sys.sigma(p.point(k)) - s0).cwiseAbs().maxCoeff() > 0.0)
            throw ConfigError("the action minimizer supports state-independent diffusion only");
    (void)cs;
}

/// Action terms; optional gradient and augmented-Lagrangian terms on the unforced residuals.
/// Holds scratch buffers, so one kernel must not be shared between threads.
struct ActionKernel {
    const SystemSpec& sys;
    ChannelSplit cs;
    mutable std::vector<double> mid, b, r, xp, fp, fm, G, JG, Mr;

    ActionKernel(const SystemSpec& s, ChannelSplit c) : sys(s), cs(std::move(c)) {
        const int n = sys.dim;
        for (auto* v : {&mid, &b, &r, &xp, &fp, &fm, &G, &JG}) v->assign(n, 0.0);
        Mr.assign(cs.forced.size(), 0.0);
    }

    /// Writes J^T g for the drift Jacobian at x (central differences, step 1e-6 (1 + |x_j|)).
    void jacobian_t_times(std::span<const double> x, double t, std::span<const double> g, std::span<double> out,
                          Eigen::MatrixXd* J) const {
        const int n = sys.dim;
        std::copy(x.begin(), x.end(), xp.begin());
        for (int j = 0; j < n; ++j) {
            const double h = 1e-6 * (1.0 + std::abs(x[j]));
            xp[j] = x[j] + h;
            sys.drift(xp, t, fp);
            xp[j] = x[j] - h;
            sys.drift(xp, t, fm);
            xp[j] = x[j];
            double acc = 0.0;
            for (int i = 0; i < n; ++i) {
                const double d = (fp[i] - fm[i]) / (2.0 * h);
                acc += d * g[i];
                if (J) (*J)(i, j) = d;
            }
            out[j] = acc;
        }
    }

    /// Returns S (+ AL terms when lambda given). Residual on interval k is (phi_{k+1}-phi_k)/dt - b(midpoint).
    double evaluate(const DiscretePath& p, std::vector<double>* grad, const std::vector<double>* lambda, double mu,
                    double* infeasibility, std::vector<double>* constraint = nullptr,
                    std::vector<Eigen::MatrixXd>* jacobians = nullptr, int k_begin = 0, int k_end = -1) const {
        const int n = p.dim, N = p.n_points();
        if (k_end < 0) k_end = N - 1;
        const double dt = p.dt(), sdt = std::sqrt(dt);
        const int nf = static_cast<int>(cs.forced.size()), nu = static_cast<int>(cs.unforced.size());
        if (grad) grad->assign(p.states.size(), 0.0);
        if (constraint) constraint->assign(static_cast<std::size_t>(N - 1) * nu, 0.0);
        if (jacobians) jacobians->assign(N - 1, Eigen::MatrixXd::Zero(n, n));
        double S = 0.0, inf = 0.0;
        for (int k = k_begin; k < k_end; ++k) {
            const auto a = p.point(k), c = p.point(k + 1);
            for (int i = 0; i < n; ++i) mid[i] = 0.5 * (a[i] + c[i]);
            const double tm = (k + 0.5) * dt;
            sys.drift(mid, tm, b);
            for (int i = 0; i < n; ++i) r[i] = (c[i] - a[i]) / dt - b[i];
            double quad = 0.0;
            for (int i = 0; i < nf; ++i) {
                double acc = 0.0;
                for (int j = 0; j < nf; ++j) acc += cs.metric(i, j) * r[cs.forced[j]];
                Mr[i] = acc;
                quad += r[cs.forced[i]] * acc;
            }
            S += 0.5 * dt * quad;
            std::fill(G.begin(), G.end(), 0.0);
            for (int i = 0; i < nf; ++i) G[cs.forced[i]] = dt * Mr[i];
            for (int u = 0; u < nu; ++u) {
                const double ru = r[cs.unforced[u]];
                inf = std::max(inf, std::abs(ru));
                const double cu = sdt * ru;
                if (constraint) (*constraint)[static_cast<std::size_t>(k) * nu + u] = cu;
                if (lambda) {
                    const double l = (*lambda)[static_cast<std::size_t>(k) * nu + u];
                    S += l * cu + 0.5 * mu * cu * cu;
                    G[cs.unforced[u]] = sdt * (l + mu * cu);
                }
            }
            if (grad || jacobians) {
                jacobian_t_times(mid, tm, G, JG, jacobians ? &(*jacobians)[k] : nullptr);
                if (grad) {
                    double* gk = grad->data() + static_cast<std::size_t>(k) * n;
                    for (int i = 0; i < n; ++i) {
                        gk[i] += -G[i] / dt - 0.5 * JG[i];
                        gk[n + i] += G[i] / dt - 0.5 * JG[i];
                    }
                }
            }
        }
        if (infeasibility) *infeasibility = inf;
        return S;
    }
};

}  // namespace detail

/// Discrete Freidlin-Wentzell action with midpoint differences; unforced channels enter as constraints.
inline ActionEvaluation action(const DiscretePath& path, const SystemSpec& sys) {
    sys.validate();
    detail::check_path(path, sys);
    const auto cs = channel_split(sys, path.point(0));
    detail::require_constant_noise(sys, path, cs);
    detail::ActionKernel kern{sys, cs};
    ActionEvaluation ev;
    ev.value = kern.evaluate(path, nullptr, nullptr, 0.0, &ev.infeasibility);
    return ev;
}

/// Action over the intervals [k_begin, k_end).
inline double partial_action(const DiscretePath& path, const SystemSpec& sys, int k_begin, int k_end) {
    sys.validate();
    detail::check_path(path, sys);
    detail::ActionKernel kern{sys, channel_split(sys, path.point(0))};
    return kern.evaluate(path, nullptr, nullptr, 0.0, nullptr, nullptr, nullptr, k_begin, k_end);
}

/// Analytic gradient of the action with respect to every path coordinate.
inline std::vector<double> action_gradient(const DiscretePath& path, const SystemSpec& sys) {
    sys.validate();
    detail::check_path(path, sys);
    detail::ActionKernel kern{sys, channel_split(sys, path.point(0))};
    std::vector<double> g;
    kern.evaluate(path, &g, nullptr, 0.0, nullptr);
    return g;
}

/// Central finite-difference gradient of the action, for verification.
inline std::vector<double> action_gradient_fd(const DiscretePath& path, const SystemSpec& sys) {
    detail::ActionKernel kern{sys, channel_split(sys, path.point(0))};
    DiscretePath p = path;
    std::vector<double> g(p.states.size());
    for (std::size_t i = 0; i < p.states.size(); ++i) {
        const double x = p.states[i], h = 1e-6 * (1.0 + std::abs(x));
        p.states[i] = x + h;
        const double fp = kern.evaluate(p, nullptr, nullptr, 0.0, nullptr);
        p.states[i] = x - h;
        const double fm = kern.evaluate(p, nullptr, nullptr, 0.0, nullptr);
        p.states[i] = x;
        g[i] = (fp - fm) / (2.0 * h);
    }
    return g;
}

/// Relative 2-norm discrepancy between analytic and finite-difference gradients.
inline double gradient_check(const DiscretePath& path, const SystemSpec& sys) {
    const auto ga = action_gradient(path, sys), gf = action_gradient_fd(path, sys);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < ga.size(); ++i) {
        num += (ga[i] - gf[i]) * (ga[i] - gf[i]);
        den += gf[i] * gf[i];
    }
    return den > 0.0 ? std::sqrt(num / den) : std::sqrt(num);
}

struct TProfileEntry {
    double duration = 0.0;
    double value = 0.0;
    bool converged = false;
};

struct ActionResult {
    double value = 0.0;
    DiscretePath path;
    bool converged = false;
    /// Max-norm of the Lagrangian gradient over the free path coordinates.
    double gradient_norm = 0.0;
    double infeasibility = 0.0;
    int iterations = 0;
    /// Relative error of the analytic gradient against finite differences at the initial path.
    double initial_gradient_check = 0.0;
    /// "linear" or "saddle" initialization that produced the result.
    std::string initialization;
    std::vector<TProfileEntry> t_profile;
};

struct MinimizeOptions {
    int n_points = 200;
    /// Fixed duration; adaptive search over [t_min, t_max] when unset.
    std::optional<double> duration;
    double t_min = 5.0, t_max = 100.0;
    int t_grid_points = 8;
    int golden_iterations = 6;
    /// Coordinates of x_end left free (e.g. terminal velocity when the target is a set).
    std::vector<bool> end_free;
    /// Saddle used for the routed initialization.
    std::optional<SaddleInfo> via;
    int max_iterations = 10'000;
    double feasibility_tolerance = 1e-9;
    /// Run the finite-difference gradient check at initialization.
    bool check_gradient = true;
};

namespace detail {

inline DiscretePath linear_path(std::span<const double> a, std::span<const double> b, int n_points, double T) {
    DiscretePath p;
    p.dim = static_cast<int>(a.size());
    p.duration = T;
    p.states.resize(static_cast<std::size_t>(n_points) * p.dim);
    for (int k = 0; k < n_points; ++k) {
        const double s = static_cast<double>(k) / (n_points - 1);
        for (int i = 0; i < p.dim; ++i) p.point(k)[i] = a[i] + s * (b[i] - a[i]);
    }
    return p;
}

/// Resamples a polyline given at times `t` (increasing, starting at 0) onto n uniform points over [0, T].
inline DiscretePath resample(const std::vector<double>& t, const std::vector<double>& x, int dim, int n_points,
                             double T) {
    DiscretePath p;
    p.dim = dim;
    p.duration = T;
    p.states.resize(static_cast<std::size_t>(n_points) * dim);
    const double scale = t.back() / T;
    std::size_t seg = 0;
    for (int k = 0; k < n_points; ++k) {
        const double tk = std::min(t.back(), k * (T / (n_points - 1)) * scale);
        while (seg + 2 < t.size() && t[seg + 1] < tk) ++seg;
        const double w = t[seg + 1] > t[seg] ? std::clamp((tk - t[seg]) / (t[seg + 1] - t[seg]), 0.0, 1.0) : 0.0;
        for (int i = 0; i < dim; ++i)
            p.point(k)[i] = (1 - w) * x[seg * dim + i] + w * x[(seg + 1) * dim + i];
    }
    return p;
}

/// Time-reversed relaxation from the saddle to x_start joined with the relaxation from the saddle toward x_end.
inline std::optional<DiscretePath> saddle_routed_path(const SystemSpec& sys, std::span<const double> a,
                                                      std::span<const double> b, const SaddleInfo& via, int n_points,
                                                      double T) {
    const int n = sys.dim;
    const auto& p = via.point;
    const auto& u = via.unstable_direction;
    auto dot_to = [&](std::span<const double> target) {
        double acc = 0.0;
        for (int i = 0; i < n; ++i) acc += u[i] * (target[i] - p[i]);
        return acc;
    };
    const double h = 1e-4, dt = 1e-2, t_max = 400.0;
    auto relax = [&](double sign, std::span<const double> target, bool stop_at_plane) {
        std::vector<double> x(n), next(n);
        for (int i = 0; i < n; ++i) x[i] = p[i] + sign * h * u[i];
        std::vector<double> tt{0.0}, xs(p.begin(), p.end());
        xs.insert(xs.end(), x.begin(), x.end());
        tt.push_back(1.0 / std::max(1e-12, via.unstable_eigenvalue));
        double dist2 = 0.0, plane = 0.0;
        for (int i = 0; i < n; ++i) {
            dist2 += (target[i] - p[i]) * (target[i] - p[i]);
        }
        StepBuffers buf(n);
        double best = INFINITY;
        std::size_t best_idx = 1;
        for (double t = tt.back(); t < t_max; t += dt) {
            rk4_step(sys, x, 0.0, dt, buf, next);
            if (!std::all_of(next.begin(), next.end(), [](double v) { return std::isfinite(v); })) break;
            x.swap(next);
            tt.push_back(t + dt);
            xs.insert(xs.end(), x.begin(), x.end());
            double d = 0.0;
            plane = 0.0;
            for (int i = 0; i < n; ++i) {
                d += (x[i] - target[i]) * (x[i] - target[i]);
                plane += (x[i] - p[i]) * (target[i] - p[i]);
            }
            if (d < best) {
                best = d;
                best_idx = tt.size() - 1;
            }
            if (stop_at_plane && plane >= dist2) break;
            if (!stop_at_plane && d < 1e-8) break;
        }
        tt.resize(best_idx + 1);
        xs.resize((best_idx + 1) * n);
        return std::pair{tt, xs};
    };
    const double s_up = dot_to(a) >= 0.0 ? 1.0 : -1.0;
    const double s_dn = dot_to(b) >= 0.0 ? 1.0 : -1.0;
    if (s_up == s_dn) return std::nullopt;
    auto [t_up, x_up] = relax(s_up, a, false);
    auto [t_dn, x_dn] = relax(s_dn, b, true);
    // Uphill leg runs backwards in time: from a to the saddle.
    std::vector<double> t, x;
    const double T_up = t_up.back();
    for (std::size_t k = t_up.size(); k-- > 0;) {
        t.push_back(T_up - t_up[k]);
        x.insert(x.end(), x_up.begin() + k * n, x_up.begin() + (k + 1) * n);
    }
    for (int i = 0; i < n; ++i) x[i] = a[i];
    for (std::size_t k = 1; k < t_dn.size(); ++k) {
        t.push_back(T_up + t_dn[k]);
        x.insert(x.end(), x_dn.begin() + k * n, x_dn.begin() + (k + 1) * n);
    }
    for (int i = 0; i < n; ++i) x[x.size() - n + i] = b[i];
    return resample(t, x, n, n_points, T);
}

struct FixedTResult {
    DiscretePath path;
    double value = 0.0;
    double infeasibility = 0.0;
    double gradient_norm = 0.0;
    bool converged = false;
    int iterations = 0;
};

/// Augmented-Lagrangian minimization at fixed duration; L-BFGS inner solves preconditioned by Gauss-Newton.
inline FixedTResult minimize_fixed_T(const SystemSpec& sys, const ChannelSplit& cs, DiscretePath path,
                                     const MinimizeOptions& opt) {
    const int n = path.dim, N = path.n_points();
    const int nu = static_cast<int>(cs.unforced.size());
    ActionKernel kern{sys, cs};
    // Free variables.
    std::vector<std::size_t> var;
    for (int k = 0; k < N; ++k)
        for (int i = 0; i < n; ++i) {
            const bool fixed = (k == 0 && path.fixed_start[i]) || (k == N - 1 && path.fixed_end[i]);
            if (!fixed) var.push_back(static_cast<std::size_t>(k) * n + i);
        }
    const int nv = static_cast<int>(var.size());
    FixedTResult out;
    if (nv == 0) {
        out.path = path;
        out.value = kern.evaluate(path, nullptr, nullptr, 0.0, &out.infeasibility);
        out.converged = out.infeasibility <= opt.feasibility_tolerance;
        return out;
    }
    std::vector<int> pos(path.states.size(), -1);
    for (int v = 0; v < nv; ++v) pos[var[v]] = v;
    std::vector<double> lambda(static_cast<std::size_t>(N - 1) * nu, 0.0);
    double mu = 10.0;
    Eigen::VectorXd z(nv);
    for (int v = 0; v < nv; ++v) z[v] = path.states[var[v]];
    DiscretePath work = path;
    std::vector<double> full_grad;
    auto load = [&](const Eigen::VectorXd& zz) {
        for (int v = 0; v < nv; ++v) work.states[var[v]] = zz[v];
    };
    ObjectiveFn fg = [&](const Eigen::VectorXd& zz, Eigen::VectorXd& g) {
        load(zz);
        const double f = kern.evaluate(work, &full_grad, &lambda, mu, nullptr);
        for (int v = 0; v < nv; ++v) g[v] = full_grad[var[v]];
        return f;
    };
    const double dt = path.dt();
    PreconditionerFactory precond = [&](const Eigen::VectorXd& zz) {
        load(zz);
        std::vector<Eigen::MatrixXd> J;
        kern.evaluate(work, nullptr, nullptr, 0.0, nullptr, nullptr, &J);
        // W: dt * metric on F, mu * dt on U.
        Eigen::MatrixXd W = Eigen::MatrixXd::Zero(n, n);
        for (std::size_t a = 0; a < cs.forced.size(); ++a)
            for (std::size_t b = 0; b < cs.forced.size(); ++b) W(cs.forced[a], cs.forced[b]) = dt * cs.metric(a, b);
        for (int u : cs.unforced) W(u, u) = mu * dt;
        std::vector<Eigen::Triplet<double>> trip;
        const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(n, n);
        double diag_max = 0.0;
        for (int k = 0; k + 1 < N; ++k) {
            Eigen::MatrixXd D(n, 2 * n);
            D.leftCols(n) = -I / dt - 0.5 * J[k];
            D.rightCols(n) = I / dt - 0.5 * J[k];
            const Eigen::MatrixXd H = D.transpose() * W * D;
            for (int r = 0; r < 2 * n; ++r)
                for (int c = 0; c < 2 * n; ++c) {
                    const std::size_t gr = static_cast<std::size_t>(k) * n + r, gc = static_cast<std::size_t>(k) * n + c;
                    if (pos[gr] >= 0 && pos[gc] >= 0) trip.emplace_back(pos[gr], pos[gc], H(r, c));
                    if (r == c) diag_max = std::max(diag_max, H(r, c));
                }
        }
        for (int v = 0; v < nv; ++v) trip.emplace_back(v, v, 1e-10 * diag_max);
        Eigen::SparseMatrix<double> M(nv, nv);
        M.setFromTriplets(trip.begin(), trip.end());
        auto solver = std::make_shared<Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>>>(M);
        std::function<Eigen::VectorXd(const Eigen::VectorXd&)> apply;
        if (solver->info() == Eigen::Success)
            apply = [solver](const Eigen::VectorXd& q) { return Eigen::VectorXd(solver->solve(q)); };
        return apply;
    };
    double inf_prev = INFINITY;
    for (int outer = 0; outer < 60 && out.iterations < opt.max_iterations; ++outer) {
        LbfgsOptions lo;
        lo.max_iterations = opt.max_iterations - out.iterations;
        lo.gradient_tolerance = 1e-9;
        const auto r = lbfgs_minimize(fg, z, lo, precond);
        out.iterations += r.iterations;
        load(z);
        std::vector<double> c;
        double inf = 0.0;
        kern.evaluate(work, nullptr, nullptr, 0.0, &inf, &c);
        out.gradient_norm = r.gradient_norm;
        out.converged = r.converged;
        if (inf <= opt.feasibility_tolerance && r.converged) break;
        for (std::size_t m = 0; m < c.size(); ++m) lambda[m] += mu * c[m];
        if (inf > 0.25 * inf_prev) mu = std::min(mu * 4.0, 1e6);
        inf_prev = inf;
    }
    load(z);
    out.path = work;
    out.value = kern.evaluate(work, nullptr, nullptr, 0.0, &out.infeasibility);
    out.converged = out.converged && out.infeasibility <= opt.feasibility_tolerance &&
                    out.gradient_norm < 1e-6 * std::max(1.0, out.value);
    return out;
}

}  // namespace detail

/// Minimum-action path from x_start to x_end (free coordinates of x_end per opt.end_free).
inline ActionResult minimize_action(const SystemSpec& sys, std::span<const double> x_start,
                                    std::span<const double> x_end, const MinimizeOptions& opt = {}) {
    sys.validate();
    const int n = sys.dim;
    if (static_cast<int>(x_start.size()) != n || static_cast<int>(x_end.size()) != n)
        throw ConfigError("endpoint dimension mismatch");
    if (opt.n_points < 50) throw ConfigError("n_points must be >= 50");
    if (!sys.in_domain(x_start) || !sys.in_domain(x_end)) throw ConfigError("endpoints must lie in the domain box");
    if (opt.duration && !(*opt.duration > 0.0)) throw ConfigError("duration must be positive");
    if (!opt.duration && !(opt.t_min > 0.0 && opt.t_max > opt.t_min)) throw ConfigError("invalid duration range");
    std::vector<bool> end_free = opt.end_free;
    if (end_free.empty()) end_free.assign(n, false);
    if (static_cast<int>(end_free.size()) != n) throw ConfigError("end_free must have one flag per coordinate");
    const auto cs = channel_split(sys, x_start);

    auto prepare = [&](DiscretePath p) {
        p.fixed_start.assign(n, true);
        p.fixed_end.resize(n);
        for (int i = 0; i < n; ++i) p.fixed_end[i] = !end_free[i];
        return p;
    };
    ActionResult result;
    bool gradient_checked = !opt.check_gradient;
    bool degenerate = true;
    for (int i = 0; i < n; ++i)
        if (x_start[i] != x_end[i] && !end_free[i]) degenerate = false;
    // Fresh starts (linear, saddle-routed) unless a warm start from a neighbouring duration is given.
    auto run_at = [&](double T, const DiscretePath* warm) {
        std::vector<std::pair<std::string, DiscretePath>> starts;
        if (!warm) {
            starts.emplace_back("linear", prepare(detail::linear_path(x_start, x_end, opt.n_points, T)));
            if (opt.via)
                if (auto p = detail::saddle_routed_path(sys, x_start, x_end, *opt.via, opt.n_points, T))
                    starts.emplace_back("saddle", prepare(*p));
        } else {
            DiscretePath w = *warm;
            w.duration = T;
            starts.emplace_back("warm", w);
        }
        detail::FixedTResult best;
        std::string best_name;
        bool have = false;
        for (auto& [name, p] : starts) {
            detail::require_constant_noise(sys, p, cs);
            if (!gradient_checked && name == "linear") {
                result.initial_gradient_check = gradient_check(p, sys);
                gradient_checked = true;
            }
            auto r = detail::minimize_fixed_T(sys, cs, p, opt);
            const bool better = !have || (r.infeasibility <= opt.feasibility_tolerance * 10 &&
                                          (best.infeasibility > opt.feasibility_tolerance * 10 || r.value < best.value));
            if (better) {
                best = std::move(r);
                best_name = name;
                have = true;
            }
        }
        if (best_name == "warm") best_name = "continued";
        return std::pair{best, best_name};
    };

    auto record = [&](double T, const detail::FixedTResult& r) {
        result.t_profile.push_back({T, r.value, r.converged});
    };
    detail::FixedTResult best;
    std::string best_name;
    double best_T = 0.0;
    auto consider = [&](double T, detail::FixedTResult r, const std::string& name) {
        record(T, r);
        if (best_name.empty() || r.value < best.value) {
            best = std::move(r);
            best_name = name;
            best_T = T;
        }
    };
    if (degenerate) {
        DiscretePath p = prepare(detail::linear_path(x_start, x_start, opt.n_points, opt.duration.value_or(opt.t_min)));
        for (int i = 0; i < n; ++i)
            if (end_free[i])
                for (int k = 0; k < opt.n_points; ++k) p.point(k)[i] = x_start[i];
        auto r = detail::minimize_fixed_T(sys, cs, p, opt);
        consider(p.duration, std::move(r), "linear");
    } else if (opt.duration) {
        auto [r, name] = run_at(*opt.duration, nullptr);
        consider(*opt.duration, std::move(r), name);
    } else {
        const int m = std::max(2, opt.t_grid_points);
        std::vector<double> grid_T, grid_v;
        for (int q = 0; q < m; ++q) {
            const double T = opt.t_min * std::pow(opt.t_max / opt.t_min, static_cast<double>(q) / (m - 1));
            auto [r, name] = run_at(T, nullptr);
            grid_T.push_back(T);
            grid_v.push_back(r.value);
            consider(T, std::move(r), name);
        }
        const int q_best = static_cast<int>(std::min_element(grid_v.begin(), grid_v.end()) - grid_v.begin());
        double lo = std::log(grid_T[std::max(0, q_best - 1)]), hi = std::log(grid_T[std::min(m - 1, q_best + 1)]);
        const double phi = 0.5 * (std::sqrt(5.0) - 1.0);
        auto eval = [&](double logT) {
            const double T = std::exp(logT);
            auto [r, name] = run_at(T, &best.path);
            const double v = r.value;
            consider(T, std::move(r), name);
            return v;
        };
        double x1 = hi - phi * (hi - lo), x2 = lo + phi * (hi - lo);
        double f1 = eval(x1), f2 = eval(x2);
        for (int it = 0; it < opt.golden_iterations; ++it) {
            if (f1 < f2) {
                hi = x2;
                x2 = x1;
                f2 = f1;
                x1 = hi - phi * (hi - lo);
                f1 = eval(x1);
            } else {
                lo = x1;
                x1 = x2;
                f1 = f2;
                x2 = lo + phi * (hi - lo);
                f2 = eval(x2);
            }
        }
    }
    std::sort(result.t_profile.begin(), result.t_profile.end(),
              [](const TProfileEntry& a, const TProfileEntry& b) { return a.duration < b.duration; });
    (void)best_T;
    result.value = best.value;
    result.path = best.path;
    result.converged = best.converged;
    result.gradient_norm = best.gradient_norm;
    result.infeasibility = best.infeasibility;
    result.iterations = best.iterations;
    result.initialization = best_name;
    return result;
}

/// Exponential-order log-rate -S / eps^2.
inline double rate_asymptotic(double min_action, double epsilon) {
    if (!(min_action >= 0.0)) throw ConfigError("action must be >= 0");
    if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
    return -min_action / (epsilon * epsilon);
}

}  // namespace capsize
