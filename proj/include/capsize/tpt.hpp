#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Sparse>
#include <Eigen/SparseLU>

#include "core_model.hpp"
#include "errors.hpp"
#include "grid.hpp"

namespace capsize {

/// Treatment of the theta-walls of the grid; v-walls are always no-flux.
enum class WallMode {
    /// Mass leaving through a theta-wall re-enters at the velocity-mirrored node.
    specular,
    /// Flux through the wall is dropped.
    no_flux,
};

struct TptOptions {
    WallMode theta_walls = WallMode::specular;
    /// Density below which the reversed drift is not corrected (node masked).
    double density_floor = 1e-12;
};

using SparseRM = Eigen::SparseMatrix<double, Eigen::RowMajor>;

namespace detail {

/// Bernoulli function x / (exp(x) - 1).
inline double bernoulli(double x) {
    if (std::abs(x) < 1e-10) return 1.0 - 0.5 * x;
    return x / std::expm1(x);
}

/// Jump rates (forward, backward) across a face of width h with drift b and diffusion D.
inline std::pair<double, double> face_rates(double b, double D, double h) {
    if (D > 0.0) {
        const double w = b * h / D;
        const double c = D / (h * h);
        return {c * bernoulli(-w), c * bernoulli(w)};
    }
    return {std::max(b, 0.0) / h, std::max(-b, 0.0) / h};
}

/// Diffusion coefficients a = eps^2 sigma sigma^T / 2 at a point.
inline std::pair<double, double> diag_diffusion(const SystemSpec& sys, double th, double v) {
    const double x[2] = {th, v};
    const Eigen::MatrixXd s = sys.noise_matrix(x);
    const Eigen::MatrixXd a = 0.5 * s * s.transpose();
    if (std::abs(a(0, 1)) > 1e-14 * std::max(1.0, a.cwiseAbs().maxCoeff()))
        throw ConfigError("grid solvers support diagonal diffusion only");
    return {a(0, 0), a(1, 1)};
}

inline void require_planar(const SystemSpec& sys) {
    sys.validate();
    if (sys.dim != 2) throw ConfigError("grid solvers require a planar system");
    if (!sys.autonomous) throw ConfigError("grid solvers require an autonomous system");
}

/// Face drifts: theta-face (i+1/2, j) for i in [-1, n_theta-1], v-face (i, j+1/2) for j in [0, n_v-2].
struct FaceDrift {
    std::function<double(int i, int j)> theta;
    std::function<double(int i, int j)> v;
};

inline FaceDrift system_face_drift(const SystemSpec& sys, const Grid2D& g) {
    FaceDrift f;
    f.theta = [&sys, g](int i, int j) {
        const double x[2] = {g.theta_lo + (i + 0.5) * g.h_theta(), g.v(j)};
        double out[2];
        sys.drift(x, 0.0, out);
        return out[0];
    };
    f.v = [&sys, g](int i, int j) {
        const double x[2] = {g.theta(i), g.v_lo + (j + 0.5) * g.h_v()};
        double out[2];
        sys.drift(x, 0.0, out);
        return out[1];
    };
    return f;
}

/// Generator of the grid Markov chain (row sums zero, off-diagonals >= 0).
inline SparseRM assemble_generator(const SystemSpec& sys, const Grid2D& g, const FaceDrift& drift,
                                   WallMode walls) {
    const double ht = g.h_theta(), hv = g.h_v();
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(g.size() * 5);
    std::vector<double> diag(g.size(), 0.0);
    auto add = [&](std::size_t from, std::size_t to, double rate) {
        if (rate <= 0.0 || from == to) return;
        trip.emplace_back(static_cast<int>(from), static_cast<int>(to), rate);
        diag[from] -= rate;
    };
    for (int i = -1; i < g.n_theta; ++i)
        for (int j = 0; j < g.n_v; ++j) {
            const double th_face = g.theta_lo + (i + 0.5) * ht;
            const auto [dth, dv] = diag_diffusion(sys, th_face, g.v(j));
            (void)dv;
            const auto [fwd, bwd] = face_rates(drift.theta(i, j), dth, ht);
            if (i >= 0 && i + 1 < g.n_theta) {
                add(g.index(i, j), g.index(i + 1, j), fwd);
                add(g.index(i + 1, j), g.index(i, j), bwd);
            } else if (walls == WallMode::specular) {
                const int jm = g.n_v - 1 - j;
                if (i < 0)
                    add(g.index(0, j), g.index(0, jm), bwd);
                else
                    add(g.index(g.n_theta - 1, j), g.index(g.n_theta - 1, jm), fwd);
            }
        }
    for (int i = 0; i < g.n_theta; ++i)
        for (int j = 0; j + 1 < g.n_v; ++j) {
            const auto [dth, dv] = diag_diffusion(sys, g.theta(i), g.v_lo + (j + 0.5) * hv);
            (void)dth;
            const auto [fwd, bwd] = face_rates(drift.v(i, j), dv, hv);
            add(g.index(i, j), g.index(i, j + 1), fwd);
            add(g.index(i, j + 1), g.index(i, j), bwd);
        }
    for (std::size_t k = 0; k < g.size(); ++k) trip.emplace_back(static_cast<int>(k), static_cast<int>(k), diag[k]);
    SparseRM Q(static_cast<int>(g.size()), static_cast<int>(g.size()));
    Q.setFromTriplets(trip.begin(), trip.end());
    return Q;
}

inline void check_symmetric_v_grid(const Grid2D& g, WallMode walls) {
    if (walls == WallMode::specular && std::abs(g.v_lo + g.v_hi) > 1e-12 * (g.v_hi - g.v_lo))
        throw ConfigError("specular theta-walls need a v-grid symmetric about 0");
}

/// Solves Q_FF q_F = -Q_FB 1 with q = 1 on `one`, 0 on `zero`.
inline ScalarField solve_committor(const SparseRM& Q, const Grid2D& g, const std::vector<NodeLabel>& lab,
                                   NodeLabel one, FieldKind kind) {
    const std::size_t N = g.size();
    std::vector<int> free_idx(N, -1);
    int nf = 0;
    for (std::size_t k = 0; k < N; ++k)
        if (lab[k] == NodeLabel::free) free_idx[k] = nf++;
    ScalarField out{g, std::vector<double>(N, 0.0), kind};
    for (std::size_t k = 0; k < N; ++k)
        if (lab[k] == one) out.values[k] = 1.0;
    if (nf == 0) return out;
    const NodeLabel other = one == NodeLabel::in_b ? NodeLabel::in_a : NodeLabel::in_b;
    std::vector<Eigen::Triplet<double>> trip;
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(nf), rhs_c = Eigen::VectorXd::Zero(nf);
    for (int r = 0; r < Q.outerSize(); ++r) {
        const int fr = free_idx[r];
        if (fr < 0) continue;
        for (SparseRM::InnerIterator it(Q, r); it; ++it) {
            const int c = static_cast<int>(it.col());
            if (free_idx[c] >= 0)
                trip.emplace_back(fr, free_idx[c], it.value());
            else if (lab[c] == one)
                rhs[fr] -= it.value();
            else if (lab[c] == other)
                rhs_c[fr] -= it.value();
        }
    }
    Eigen::SparseMatrix<double> M(nf, nf);
    M.setFromTriplets(trip.begin(), trip.end());
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(M);
    lu.factorize(M);
    if (lu.info() != Eigen::Success) throw NumericalError("committor system is singular: " + lu.lastErrorMessage());
    // The complementary committor shares the factorization; q / (q + (1 - q)) keeps roundoff inside [0,1].
    const Eigen::VectorXd q = lu.solve(rhs), qc = lu.solve(rhs_c);
    const double scale = std::max(1.0, M.coeffs().cwiseAbs().maxCoeff());
    const double res = std::max((M * q - rhs).cwiseAbs().maxCoeff(), (M * qc - rhs_c).cwiseAbs().maxCoeff()) / scale;
    out.diagnostics.residual = res;
    if (!q.allFinite() || !qc.allFinite() || res > 1e-10)
        throw NumericalError("committor solve residual too large: " + std::to_string(res));
    for (std::size_t k = 0; k < N; ++k) {
        if (free_idx[k] < 0) continue;
        const double a = q[free_idx[k]], b = qc[free_idx[k]];
        if (!(std::abs(a + b - 1.0) < 1e-8)) throw NumericalError("committor pair does not sum to one");
        const double v = a / (a + b);
        if (!(v >= 0.0 && v <= 1.0)) throw NumericalError("committor value outside [0,1]: " + std::to_string(v));
        out.values[k] = v;
    }
    return out;
}

}  // namespace detail

/// Generator of the grid chain for the system's own drift.
inline SparseRM markov_generator(const SystemSpec& sys, const Grid2D& g, TptOptions opt = {}) {
    detail::require_planar(sys);
    g.validate();
    detail::check_symmetric_v_grid(g, opt.theta_walls);
    return detail::assemble_generator(sys, g, detail::system_face_drift(sys, g), opt.theta_walls);
}

/// Stationary Fokker-Planck density: null vector of Q^T with unit mass (trapezoid).
inline ScalarField solve_stationary_density(const SystemSpec& sys, const Grid2D& g, TptOptions opt = {}) {
    if (!(sys.epsilon > 0.0)) throw ConfigError("stationary density needs eps > 0");
    const SparseRM Q = markov_generator(sys, g, opt);
    const int N = static_cast<int>(g.size());
    const int pin = static_cast<int>(g.index(g.n_theta / 2, g.n_v / 2));
    std::vector<Eigen::Triplet<double>> trip;
    trip.reserve(Q.nonZeros() + N);
    for (int r = 0; r < Q.outerSize(); ++r)
        for (SparseRM::InnerIterator it(Q, r); it; ++it)
            if (it.col() != pin) trip.emplace_back(static_cast<int>(it.col()), r, it.value());
    for (int k = 0; k < N; ++k) trip.emplace_back(pin, k, 1.0);
    Eigen::SparseMatrix<double> M(N, N);
    M.setFromTriplets(trip.begin(), trip.end());
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(N);
    rhs[pin] = 1.0;
    Eigen::SparseLU<Eigen::SparseMatrix<double>> lu;
    lu.analyzePattern(M);
    lu.factorize(M);
    if (lu.info() != Eigen::Success) throw NumericalError("density system is singular: " + lu.lastErrorMessage());
    Eigen::VectorXd pi = lu.solve(rhs);
    const Eigen::VectorXd r = SparseRM(Q.transpose()) * pi;
    const double res = r.cwiseAbs().maxCoeff() / (Q.coeffs().cwiseAbs().maxCoeff() * pi.cwiseAbs().maxCoeff());
    if (!pi.allFinite() || res > 1e-10)
        throw NumericalError("stationary density residual too large: " + std::to_string(res));
    const double scale = pi.cwiseAbs().maxCoeff();
    for (int k = 0; k < N; ++k) {
        if (pi[k] < -1e-12 * scale) throw NumericalError("stationary density has negative mass");
        pi[k] = std::max(pi[k], 0.0);
    }
    ScalarField rho{g, std::vector<double>(pi.data(), pi.data() + N), FieldKind::density, true};
    const double z = rho.integral();
    for (double& v : rho.values) v /= z;
    rho.diagnostics.residual = res;
    return rho;
}

/// P(hit B before A); q = 0 on A-nodes, 1 on B-nodes.
inline ScalarField solve_committor_forward(const SystemSpec& sys, const Grid2D& g, const RegionSpec& A,
                                           const RegionSpec& B, TptOptions opt = {}) {
    if (!(sys.epsilon > 0.0)) throw ConfigError("committor needs eps > 0");
    const auto lab = classify_nodes(g, A, B);
    const SparseRM Q = markov_generator(sys, g, opt);
    return detail::solve_committor(Q, g, lab, NodeLabel::in_b, FieldKind::committor_forward);
}

/// Reversed drift b~ = -b + (2 / rho) div(a rho) on the faces of the grid.
inline detail::FaceDrift reversed_face_drift(const SystemSpec& sys, const ScalarField& rho, double floor,
                                             std::vector<std::size_t>& masked) {
    const Grid2D g = rho.grid;
    std::vector<char> low(g.size(), 0);
    for (std::size_t k = 0; k < g.size(); ++k)
        if (!(rho.values[k] >= floor)) {
            low[k] = 1;
            masked.push_back(k);
        }
    const auto base = detail::system_face_drift(sys, g);
    detail::FaceDrift f;
    auto correction = [&sys, g, low, &rho](double th_a, double v_a, std::size_t ka, double th_b, double v_b,
                                           std::size_t kb, int axis, double h) {
        if (low[ka] || low[kb]) return 0.0;
        const auto [a0, a1] = detail::diag_diffusion(sys, th_a, v_a);
        const auto [b0, b1] = detail::diag_diffusion(sys, th_b, v_b);
        const double aa = axis == 0 ? a0 : a1, ab = axis == 0 ? b0 : b1;
        if (aa == 0.0 && ab == 0.0) return 0.0;
        const double face_a = 0.5 * (aa + ab);
        return 2.0 * (face_a * (std::log(rho.values[kb]) - std::log(rho.values[ka])) + (ab - aa)) / h;
    };
    f.theta = [base, g, correction](int i, int j) {
        double b = -base.theta(i, j);
        if (i >= 0 && i + 1 < g.n_theta)
            b += correction(g.theta(i), g.v(j), g.index(i, j), g.theta(i + 1), g.v(j), g.index(i + 1, j), 0,
                            g.h_theta());
        return b;
    };
    f.v = [base, g, correction](int i, int j) {
        return -base.v(i, j) +
               correction(g.theta(i), g.v(j), g.index(i, j), g.theta(i), g.v(j + 1), g.index(i, j + 1), 1, g.h_v());
    };
    return f;
}

/// P(last visited A rather than B), from the committor equation of the time-reversed process.
inline ScalarField solve_committor_backward(const SystemSpec& sys, const Grid2D& g, const RegionSpec& A,
                                            const RegionSpec& B, const ScalarField& rho, TptOptions opt = {}) {
    detail::require_planar(sys);
    if (!(sys.epsilon > 0.0)) throw ConfigError("committor needs eps > 0");
    if (!(rho.grid == g)) throw ConfigError("density grid does not match");
    detail::check_symmetric_v_grid(g, opt.theta_walls);
    const auto lab = classify_nodes(g, A, B);
    std::vector<std::size_t> masked;
    const auto drift = reversed_face_drift(sys, rho, opt.density_floor, masked);
    const SparseRM Q = detail::assemble_generator(sys, g, drift, opt.theta_walls);
    auto q = detail::solve_committor(Q, g, lab, NodeLabel::in_a, FieldKind::committor_backward);
    q.diagnostics.masked = std::move(masked);
    return q;
}

/// Pointwise q+ rho q-.
inline ScalarField reactive_density(const ScalarField& rho, const ScalarField& q_plus, const ScalarField& q_minus) {
    if (!(rho.grid == q_plus.grid) || !(rho.grid == q_minus.grid)) throw ConfigError("fields live on different grids");
    ScalarField out{rho.grid, std::vector<double>(rho.values.size()), FieldKind::reactive_density};
    for (std::size_t k = 0; k < out.values.size(); ++k)
        out.values[k] = q_plus.values[k] * rho.values[k] * q_minus.values[k];
    return out;
}

/// Field divided by its trapezoid integral.
inline ScalarField normalized(const ScalarField& f) {
    const double z = f.integral();
    if (!(z > 0.0)) throw NumericalError("cannot normalize a field with non-positive integral");
    ScalarField out = f;
    for (double& v : out.values) v /= z;
    out.normalized = true;
    return out;
}

struct TptRate {
    /// Transitions per unit time, nu / rho_A.
    double k_ab = 0.0;
    /// Flux integral of grad q+ . a grad q+ rho over free nodes.
    double nu = 0.0;
    /// Same quantity as the Dirichlet form of the grid chain.
    double nu_discrete = 0.0;
    double k_ab_discrete = 0.0;
    /// Probability of having last visited A, integral of rho q-; 1 when q- is not supplied.
    double rho_a = 1.0;
    /// j = rho a grad q+ componentwise.
    ScalarField flux_theta, flux_v;
};

/// Reaction rate from the committor; normalized by the integral of rho q- when q_minus is given.
inline TptRate transition_rate_tpt(const SystemSpec& sys, const Grid2D& g, const ScalarField& rho,
                                   const ScalarField& q_plus, const std::optional<ScalarField>& q_minus = std::nullopt,
                                   TptOptions opt = {}) {
    detail::require_planar(sys);
    if (!(rho.grid == g) || !(q_plus.grid == g)) throw ConfigError("fields live on different grids");
    if (q_minus && !(q_minus->grid == g)) throw ConfigError("fields live on different grids");
    TptRate out;
    out.flux_theta = ScalarField{g, std::vector<double>(g.size(), 0.0), FieldKind::density};
    out.flux_v = out.flux_theta;
    const double ht = g.h_theta(), hv = g.h_v();
    auto dq = [&](int i, int j, int axis) {
        if (axis == 0) {
            if (i == 0) return (q_plus.at(1, j) - q_plus.at(0, j)) / ht;
            if (i == g.n_theta - 1) return (q_plus.at(i, j) - q_plus.at(i - 1, j)) / ht;
            return (q_plus.at(i + 1, j) - q_plus.at(i - 1, j)) / (2 * ht);
        }
        if (j == 0) return (q_plus.at(i, 1) - q_plus.at(i, 0)) / hv;
        if (j == g.n_v - 1) return (q_plus.at(i, j) - q_plus.at(i, j - 1)) / hv;
        return (q_plus.at(i, j + 1) - q_plus.at(i, j - 1)) / (2 * hv);
    };
    for (int i = 0; i < g.n_theta; ++i)
        for (int j = 0; j < g.n_v; ++j) {
            const double q = q_plus.at(i, j);
            const auto [a0, a1] = detail::diag_diffusion(sys, g.theta(i), g.v(j));
            const double gt = dq(i, j, 0), gv = dq(i, j, 1);
            const double r = rho.at(i, j);
            out.flux_theta.values[g.index(i, j)] = r * a0 * gt;
            out.flux_v.values[g.index(i, j)] = r * a1 * gv;
            if (q > 0.0 && q < 1.0) out.nu += g.weight(i, j) * r * (a0 * gt * gt + a1 * gv * gv);
        }
    const SparseRM Q = markov_generator(sys, g, opt);
    double mass = 0.0;
    for (double r : rho.values) mass += r;
    for (int r = 0; r < Q.outerSize(); ++r)
        for (SparseRM::InnerIterator it(Q, r); it; ++it) {
            if (it.col() == r) continue;
            const double d = q_plus.values[it.col()] - q_plus.values[r];
            out.nu_discrete += 0.5 * rho.values[r] / mass * it.value() * d * d;
        }
    if (q_minus) {
        out.rho_a = 0.0;
        for (int i = 0; i < g.n_theta; ++i)
            for (int j = 0; j < g.n_v; ++j) out.rho_a += g.weight(i, j) * rho.at(i, j) * q_minus->at(i, j);
    }
    out.k_ab = out.nu / out.rho_a;
    out.k_ab_discrete = out.nu_discrete / out.rho_a;
    return out;
}

}  // namespace capsize
