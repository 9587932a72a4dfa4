#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>

#include "errors.hpp"

namespace capsize {

using DriftFn = std::function<void(std::span<const double> x, double t, std::span<double> out)>;
/// Unit-amplitude diffusion, written row-major as an n x m matrix.
using DiffusionFn = std::function<void(std::span<const double> x, std::span<double> out)>;

/// Stochastic system dx = b(x,t) dt + eps * sigma(x) dW.
struct SystemSpec {
    int dim = 0;
    int noise_channels = 0;
    DriftFn drift;
    DiffusionFn diffusion;
    double epsilon = 0.0;
    bool autonomous = true;
    /// Per-coordinate [lo, hi]; empty means unbounded.
    std::vector<std::pair<double, double>> domain;

    void validate() const {
        if (dim <= 0) throw ConfigError("system dim must be positive");
        if (noise_channels < 0 || noise_channels > dim)
            throw ConfigError("noise channel count must lie in [0, dim]");
        if (!drift) throw ConfigError("system drift is not set");
        if (noise_channels > 0 && !diffusion) throw ConfigError("system diffusion is not set");
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("noise amplitude must be finite and >= 0");
        if (!domain.empty() && static_cast<int>(domain.size()) != dim)
            throw ConfigError("domain box dimension does not match system dim");
        for (const auto& [lo, hi] : domain)
            if (!(lo < hi)) throw ConfigError("domain box has an empty interval");
    }

    std::vector<double> eval_drift(std::span<const double> x, double t = 0.0) const {
        std::vector<double> out(dim);
        drift(x, t, out);
        return out;
    }

    /// Unit-amplitude sigma(x) as an n x m matrix.
    Eigen::MatrixXd sigma(std::span<const double> x) const {
        Eigen::MatrixXd s = Eigen::MatrixXd::Zero(dim, noise_channels);
        if (noise_channels == 0) return s;
        std::vector<double> buf(static_cast<std::size_t>(dim) * noise_channels);
        diffusion(x, buf);
        for (int i = 0; i < dim; ++i)
            for (int j = 0; j < noise_channels; ++j) s(i, j) = buf[static_cast<std::size_t>(i) * noise_channels + j];
        return s;
    }

    /// Effective noise matrix eps * sigma(x).
    Eigen::MatrixXd noise_matrix(std::span<const double> x) const { return epsilon * sigma(x); }

    bool in_domain(std::span<const double> x) const {
        if (domain.empty()) return true;
        for (int i = 0; i < dim; ++i)
            if (x[i] < domain[i].first || x[i] > domain[i].second) return false;
        return true;
    }

    SystemSpec with_epsilon(double eps) const {
        SystemSpec s = *this;
        s.epsilon = eps;
        return s;
    }
};

/// Softening roll oscillator parameters.
struct RollModelParams {
    double omega0_sq = 1.0;
    double alpha = 1.0;
    double delta = 0.5;
    double epsilon = 0.0;

    void validate() const {
        if (!(omega0_sq > 0.0) || !std::isfinite(omega0_sq)) throw ConfigError("omega0_sq must be > 0");
        if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be > 0");
        if (!(delta >= 0.0) || !std::isfinite(delta)) throw ConfigError("delta must be >= 0");
        if (!(epsilon >= 0.0) || !std::isfinite(epsilon)) throw ConfigError("epsilon must be >= 0");
    }

    /// Capsize threshold angle omega0 / sqrt(alpha).
    double saddle_angle() const { return std::sqrt(omega0_sq / alpha); }
    double potential(double theta) const {
        return 0.5 * omega0_sq * theta * theta - 0.25 * alpha * theta * theta * theta * theta;
    }
    double energy(double theta, double v) const { return 0.5 * v * v + potential(theta); }
    double barrier() const { return potential(saddle_angle()); }
    bool operator==(const RollModelParams&) const = default;
};

/// theta' = v, v' = -delta v - omega0^2 theta + alpha theta^3 + eps xi.
inline SystemSpec toy_roll_system(const RollModelParams& p) {
    p.validate();
    SystemSpec s;
    s.dim = 2;
    s.noise_channels = 1;
    const double w2 = p.omega0_sq, a = p.alpha, d = p.delta;
    s.drift = [w2, a, d](std::span<const double> x, double, std::span<double> out) {
        const double th = x[0], v = x[1];
        out[0] = v;
        out[1] = -d * v - w2 * th + a * th * th * th;
    };
    s.diffusion = [](std::span<const double>, std::span<double> out) {
        out[0] = 0.0;
        out[1] = 1.0;
    };
    s.epsilon = p.epsilon;
    s.autonomous = true;
    const double th_max = 4.0 * p.saddle_angle();
    s.domain = {{-th_max, th_max}, {-10.0 * th_max, 10.0 * th_max}};
    return s;
}

using CouplingFn =
    std::function<void(std::span<const double> x, std::span<const double> z, double t, std::span<double> out)>;

/// Linear noise filter z' = A z + eps xi with <xi xi^T> = C delta.
struct FilterSpec {
    int k = 0;
    Eigen::MatrixXd A;
    Eigen::MatrixXd C;
    double epsilon = 0.0;
    /// Adds the forcing of z to the ship drift; `out` already holds the ship drift.
    CouplingFn coupling;
};

inline bool is_hurwitz(const Eigen::MatrixXd& A) {
    if (A.rows() == 0) return true;
    Eigen::EigenSolver<Eigen::MatrixXd> es(A, false);
    for (int i = 0; i < A.rows(); ++i)
        if (!(es.eigenvalues()[i].real() < 0.0)) return false;
    return true;
}

inline void validate_filter(const FilterSpec& f) {
    if (f.k <= 0) throw ConfigError("filter dimension k must be positive");
    if (f.A.rows() != f.k || f.A.cols() != f.k) throw ConfigError("filter A must be k x k");
    if (f.C.rows() != f.k || f.C.cols() != f.k) throw ConfigError("filter C must be k x k");
    if (!f.A.allFinite() || !f.C.allFinite()) throw ConfigError("filter matrices must be finite");
    if (!(f.epsilon >= 0.0)) throw ConfigError("filter epsilon must be >= 0");
    if (!is_hurwitz(f.A)) throw ConfigError("filter A is not asymptotically stable");
    const double scale = std::max(1.0, f.C.cwiseAbs().maxCoeff());
    if ((f.C - f.C.transpose()).cwiseAbs().maxCoeff() > 1e-12 * scale) throw ConfigError("filter C is not symmetric");
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(f.C);
    if (es.eigenvalues().minCoeff() < -1e-12 * scale) throw ConfigError("filter C is not positive semi-definite");
}

/// Symmetric principal square root of a symmetric PSD matrix.
inline Eigen::MatrixXd symmetric_sqrt(const Eigen::MatrixXd& C) {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(C);
    const Eigen::VectorXd ev = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * ev.asDiagonal() * es.eigenvectors().transpose();
}

/// Adds gain * z[0] to the drift component `channel` of the ship.
inline CouplingFn velocity_forcing(int channel, double gain = 1.0) {
    return [channel, gain](std::span<const double>, std::span<const double> z, double, std::span<double> out) {
        out[channel] += gain * z[0];
    };
}

/// Augmented system on (x, z); noise acts on the z block only.
inline SystemSpec couple_filter(const SystemSpec& ship, const FilterSpec& filter) {
    ship.validate();
    validate_filter(filter);
    const int n = ship.dim, k = filter.k;
    SystemSpec s;
    s.dim = n + k;
    s.noise_channels = k;
    s.epsilon = filter.epsilon;
    s.autonomous = ship.autonomous;
    const DriftFn ship_drift = ship.drift;
    const CouplingFn coupling = filter.coupling;
    const Eigen::MatrixXd A = filter.A;
    s.drift = [n, k, ship_drift, coupling, A](std::span<const double> xz, double t, std::span<double> out) {
        const auto x = xz.first(n);
        const auto z = xz.subspan(n, k);
        auto head = out.first(n);
        ship_drift(x, t, head);
        if (coupling) coupling(x, z, t, head);
        for (int i = 0; i < k; ++i) {
            double acc = 0.0;
            for (int j = 0; j < k; ++j) acc += A(i, j) * z[j];
            out[n + i] = acc;
        }
    };
    const Eigen::MatrixXd root = symmetric_sqrt(filter.C);
    s.diffusion = [n, k, root](std::span<const double>, std::span<double> out) {
        std::fill(out.begin(), out.end(), 0.0);
        for (int i = 0; i < k; ++i)
            for (int j = 0; j < k; ++j) out[static_cast<std::size_t>(n + i) * k + j] = root(i, j);
    };
    if (!ship.domain.empty()) {
        s.domain = ship.domain;
        const Eigen::MatrixXd cov = filter.epsilon * filter.epsilon * filter.C;
        for (int i = 0; i < k; ++i) {
            const double half = 50.0 * std::sqrt(std::max(cov(i, i), 1e-12)) + 10.0;
            s.domain.emplace_back(-half, half);
        }
    }
    return s;
}

/// Stationary covariance Sigma with A Sigma + Sigma A^T + eps^2 C = 0.
inline Eigen::MatrixXd ou_stationary_covariance(const FilterSpec& f) {
    validate_filter(f);
    const int k = f.k;
    const Eigen::MatrixXd I = Eigen::MatrixXd::Identity(k, k);
    Eigen::MatrixXd K = Eigen::MatrixXd::Zero(k * k, k * k);
    // vec(A S + S A^T) = (I (x) A + A (x) I) vec(S), column-major vec.
    for (int i = 0; i < k; ++i)
        for (int j = 0; j < k; ++j) {
            K.block(i * k, j * k, k, k) += I(i, j) * f.A;
            K.block(i * k, j * k, k, k) += f.A(i, j) * I;
        }
    const Eigen::MatrixXd rhs_m = -f.epsilon * f.epsilon * f.C;
    const Eigen::VectorXd rhs = Eigen::Map<const Eigen::VectorXd>(rhs_m.data(), k * k);
    const Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
    Eigen::MatrixXd S = Eigen::Map<const Eigen::MatrixXd>(sol.data(), k, k);
    S = 0.5 * (S + S.transpose()).eval();
    const Eigen::MatrixXd res = f.A * S + S * f.A.transpose() + f.epsilon * f.epsilon * f.C;
    const double scale = std::max(1.0, (f.epsilon * f.epsilon * f.C).cwiseAbs().maxCoeff());
    if (res.cwiseAbs().maxCoeff() > 1e-10 * scale)
        throw NumericalError("Lyapunov solve residual too large: " + std::to_string(res.cwiseAbs().maxCoeff()));
    return S;
}

/// Central finite-difference Jacobian of the drift, step 1e-6 (1 + |x_i|).
inline Eigen::MatrixXd drift_jacobian(const SystemSpec& sys, std::span<const double> x, double t = 0.0) {
    const int n = sys.dim;
    Eigen::MatrixXd J(n, n);
    std::vector<double> xp(x.begin(), x.end()), fp(n), fm(n);
    for (int j = 0; j < n; ++j) {
        const double h = 1e-6 * (1.0 + std::abs(x[j]));
        xp[j] = x[j] + h;
        sys.drift(xp, t, fp);
        xp[j] = x[j] - h;
        sys.drift(xp, t, fm);
        xp[j] = x[j];
        for (int i = 0; i < n; ++i) J(i, j) = (fp[i] - fm[i]) / (2.0 * h);
    }
    return J;
}

}  // namespace capsize
