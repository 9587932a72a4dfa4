#pragma once

#include <algorithm>
#include <cmath>
#include <complex>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "core_model.hpp"
#include "errors.hpp"
#include "integrate.hpp"
#include "parallel.hpp"
#include "rng.hpp"
#include "surface.hpp"

namespace capsize {

struct SaddleInfo {
    std::vector<double> point;
    std::vector<std::complex<double>> eigenvalues;
    std::vector<double> unstable_direction;
    /// Only filled for n = 2.
    std::vector<double> stable_direction;
    double unstable_eigenvalue = 0.0;
};

class SaddleSearchError : public NumericalError {
public:
    enum class Kind { not_converged, wrong_index };
    SaddleSearchError(Kind kind, std::vector<double> last, int n_unstable, const std::string& what)
        : NumericalError(what), kind_(kind), last_(std::move(last)), n_unstable_(n_unstable) {}
    Kind kind() const { return kind_; }
    const std::vector<double>& last_iterate() const { return last_; }
    int unstable_count() const { return n_unstable_; }

private:
    Kind kind_;
    std::vector<double> last_;
    int n_unstable_;
};

struct FindSaddleOptions {
    int max_iterations = 100;
    double tolerance = 1e-10;
};

namespace detail {

inline double norm(std::span<const double> v) {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

/// Unit vector with the first non-negligible component positive.
inline std::vector<double> canonical_sign(std::vector<double> v) {
    const double n = norm(v);
    for (double& x : v) x /= n;
    for (double x : v) {
        if (std::abs(x) > 1e-12) {
            if (x < 0)
                for (double& y : v) y = -y;
            break;
        }
    }
    return v;
}

}  // namespace detail

/// Damped Newton on the drift; the converged point must have exactly one unstable direction.
inline SaddleInfo find_saddle(const SystemSpec& sys, std::span<const double> guess, FindSaddleOptions opt = {}) {
    sys.validate();
    if (!sys.autonomous) throw ConfigError("find_saddle requires an autonomous system");
    if (static_cast<int>(guess.size()) != sys.dim) throw ConfigError("saddle guess dimension mismatch");
    if (!sys.in_domain(guess)) throw ConfigError("saddle guess lies outside the domain box");
    const int n = sys.dim;
    Eigen::VectorXd x = Eigen::Map<const Eigen::VectorXd>(guess.data(), n);
    auto residual = [&](const Eigen::VectorXd& y) {
        Eigen::VectorXd f(n);
        sys.drift({y.data(), static_cast<std::size_t>(n)}, 0.0, {f.data(), static_cast<std::size_t>(n)});
        return f;
    };
    Eigen::VectorXd f = residual(x);
    bool converged = f.norm() < opt.tolerance;
    for (int it = 0; it < opt.max_iterations && !converged; ++it) {
        const Eigen::MatrixXd J = drift_jacobian(sys, {x.data(), static_cast<std::size_t>(n)});
        const Eigen::VectorXd step = -J.colPivHouseholderQr().solve(f);
        if (!step.allFinite()) break;
        double lambda = 1.0;
        Eigen::VectorXd trial = x + step;
        Eigen::VectorXd ft = residual(trial);
        while (!(ft.norm() < (1.0 - 1e-4 * lambda) * f.norm()) && lambda > 1e-8) {
            lambda *= 0.5;
            trial = x + lambda * step;
            ft = residual(trial);
        }
        x = trial;
        f = ft;
        converged = f.norm() < opt.tolerance;
    }
    std::vector<double> last(x.data(), x.data() + n);
    if (!converged)
        throw SaddleSearchError(SaddleSearchError::Kind::not_converged, last, -1,
                                "saddle search did not converge; residual " + std::to_string(f.norm()));
    const Eigen::MatrixXd J = drift_jacobian(sys, last);
    Eigen::EigenSolver<Eigen::MatrixXd> es(J);
    SaddleInfo info;
    info.point = last;
    int n_unstable = 0, k_unstable = -1, k_stable = -1;
    for (int i = 0; i < n; ++i) {
        const auto lam = es.eigenvalues()[i];
        info.eigenvalues.push_back(lam);
        if (lam.real() > 0.0) {
            ++n_unstable;
            k_unstable = i;
        } else if (k_stable < 0 || lam.real() > es.eigenvalues()[k_stable].real()) {
            k_stable = i;
        }
    }
    if (n_unstable != 1)
        throw SaddleSearchError(SaddleSearchError::Kind::wrong_index, last, n_unstable,
                                "equilibrium has " + std::to_string(n_unstable) + " unstable directions, expected 1");
    info.unstable_eigenvalue = es.eigenvalues()[k_unstable].real();
    std::vector<double> u(n);
    for (int i = 0; i < n; ++i) u[i] = es.eigenvectors()(i, k_unstable).real();
    u = detail::canonical_sign(u);
    double outward = 0.0;
    for (int i = 0; i < n; ++i) outward += u[i] * last[i];
    if (outward < 0.0)
        for (double& c : u) c = -c;
    info.unstable_direction = u;
    if (n == 2 && es.eigenvalues()[k_stable].imag() == 0.0) {
        std::vector<double> s(n);
        for (int i = 0; i < n; ++i) s[i] = es.eigenvectors()(i, k_stable).real();
        info.stable_direction = detail::canonical_sign(s);
    }
    return info;
}

struct StableManifoldOptions {
    double max_segment = 1e-3;
    double max_time_step = 1e-2;
    std::size_t max_steps = 10'000'000;
};

/// W+ of a planar saddle; Path::times holds the signed arclength (0 at the saddle).
struct ManifoldCurve {
    Path curve;
    bool truncated_negative = false;
    bool truncated_positive = false;
};

/// Traces both branches of the stable manifold by backward RK4 from saddle +- h * stable_direction.
inline ManifoldCurve stable_manifold_2d(const SystemSpec& sys, const SaddleInfo& saddle, double arclength, double h,
                                        StableManifoldOptions opt = {}) {
    sys.validate();
    if (sys.dim != 2) throw ConfigError("stable_manifold_2d requires a planar system");
    if (!sys.autonomous) throw ConfigError("stable_manifold_2d requires an autonomous system");
    if (!(h > 0.0 && h <= 1e-2)) throw ConfigError("manifold seed offset h must lie in (0, 1e-2]");
    if (!(arclength >= 0.0)) throw ConfigError("arclength must be >= 0");
    if (saddle.stable_direction.size() != 2) throw ConfigError("saddle has no real stable direction");
    SystemSpec reversed = sys;
    const DriftFn fwd = sys.drift;
    reversed.drift = [fwd](std::span<const double> x, double t, std::span<double> out) {
        fwd(x, t, out);
        for (double& v : out) v = -v;
    };
    auto branch = [&](double sign, bool& truncated) {
        std::vector<std::array<double, 2>> pts;
        std::vector<double> arc;
        if (arclength == 0.0) return std::pair{pts, arc};
        std::vector<double> x = {saddle.point[0] + sign * h * saddle.stable_direction[0],
                                 saddle.point[1] + sign * h * saddle.stable_direction[1]};
        double s = h;
        if (s >= arclength) {
            const double f = arclength / h;
            pts.push_back({saddle.point[0] + sign * f * h * saddle.stable_direction[0],
                           saddle.point[1] + sign * f * h * saddle.stable_direction[1]});
            arc.push_back(arclength);
            return std::pair{pts, arc};
        }
        pts.push_back({x[0], x[1]});
        arc.push_back(s);
        detail::StepBuffers b(2);
        std::vector<double> next(2), vel(2);
        for (std::size_t k = 0; k < opt.max_steps; ++k) {
            reversed.drift(x, 0.0, vel);
            const double speed = detail::norm(vel);
            const double dt = speed > 0.0 ? std::min(opt.max_time_step, opt.max_segment / speed) : opt.max_time_step;
            detail::rk4_step(reversed, x, 0.0, dt, b, next);
            detail::check_finite(next, -dt * static_cast<double>(k + 1));
            const double ds = std::hypot(next[0] - x[0], next[1] - x[1]);
            if (!sys.in_domain(next)) {
                truncated = true;
                break;
            }
            if (s + ds >= arclength) {
                const double f = (arclength - s) / ds;
                pts.push_back({x[0] + f * (next[0] - x[0]), x[1] + f * (next[1] - x[1])});
                arc.push_back(arclength);
                break;
            }
            s += ds;
            x.swap(next);
            pts.push_back({x[0], x[1]});
            arc.push_back(s);
        }
        return std::pair{pts, arc};
    };
    ManifoldCurve out;
    auto [neg_pts, neg_arc] = branch(-1.0, out.truncated_negative);
    auto [pos_pts, pos_arc] = branch(+1.0, out.truncated_positive);
    Path& c = out.curve;
    c.dim = 2;
    for (std::size_t i = neg_pts.size(); i-- > 0;) c.push(-neg_arc[i], neg_pts[i]);
    c.push(0.0, saddle.point);
    for (std::size_t i = 0; i < pos_pts.size(); ++i) c.push(pos_arc[i], pos_pts[i]);
    return out;
}

/// Hyperplane through the saddle with normal along the outward unstable direction.
inline DividingSurface default_dividing_surface(const SaddleInfo& saddle) {
    return hyperplane_surface(saddle.unstable_direction, saddle.point);
}

/// Distribution over initial states.
struct PointMass {
    std::vector<double> x;
};
struct GaussianInit {
    std::vector<double> mean;
    Eigen::MatrixXd covariance;
};
struct UniformBox {
    std::vector<double> lo, hi;
};

class InitialSampler {
public:
    InitialSampler(PointMass p) : dist_(std::move(p)) {}
    InitialSampler(GaussianInit g) : dist_(std::move(g)) {
        const auto& gi = std::get<GaussianInit>(dist_);
        const int n = static_cast<int>(gi.mean.size());
        if (gi.covariance.rows() != n || gi.covariance.cols() != n)
            throw ConfigError("Gaussian covariance shape does not match mean");
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(gi.covariance);
        if ((gi.covariance - gi.covariance.transpose()).cwiseAbs().maxCoeff() > 1e-12 ||
            es.eigenvalues().minCoeff() < -1e-12)
            throw ConfigError("Gaussian covariance must be symmetric positive semi-definite");
        root_ = symmetric_sqrt(gi.covariance);
    }
    InitialSampler(UniformBox u) : dist_(std::move(u)) {
        const auto& b = std::get<UniformBox>(dist_);
        if (b.lo.size() != b.hi.size()) throw ConfigError("uniform box bounds differ in dimension");
        for (std::size_t i = 0; i < b.lo.size(); ++i)
            if (!(b.lo[i] <= b.hi[i])) throw ConfigError("uniform box has lo > hi");
    }

    std::size_t dim() const {
        return std::visit(
            [](const auto& d) -> std::size_t {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, PointMass>) return d.x.size();
                else if constexpr (std::is_same_v<T, GaussianInit>) return d.mean.size();
                else return d.lo.size();
            },
            dist_);
    }

    /// Draw keyed by a per-sample seed.
    std::vector<double> sample(std::uint64_t seed) const {
        NormalStream stream(seed, StreamTag::initial_state);
        return std::visit(
            [&](const auto& d) -> std::vector<double> {
                using T = std::decay_t<decltype(d)>;
                if constexpr (std::is_same_v<T, PointMass>) {
                    return d.x;
                } else if constexpr (std::is_same_v<T, GaussianInit>) {
                    const std::size_t n = d.mean.size();
                    Eigen::VectorXd eta(n);
                    for (std::size_t i = 0; i < n; ++i) eta[i] = stream.at(i);
                    const Eigen::VectorXd y = root_ * eta;
                    std::vector<double> x(n);
                    for (std::size_t i = 0; i < n; ++i) x[i] = d.mean[i] + y[i];
                    return x;
                } else {
                    std::vector<double> x(d.lo.size());
                    for (std::size_t i = 0; i < x.size(); ++i) x[i] = d.lo[i] + stream.uniform(i) * (d.hi[i] - d.lo[i]);
                    return x;
                }
            },
            dist_);
    }

private:
    std::variant<PointMass, GaussianInit, UniformBox> dist_;
    Eigen::MatrixXd root_;
};

/// Survivability, time-to-capsize histogram and capsize probability of an ensemble.
struct CapsizeStats {
    double horizon = 0.0;
    std::vector<double> s_times, s_values;
    std::vector<double> hist_edges;
    std::vector<std::size_t> hist_counts;
    double p_capsize = 0.0;
    double p_stderr = 0.0;
    /// -dS/dt on the midpoints of the S grid.
    std::vector<double> rate_times, rate_values;
    std::size_t n_samples = 0;
    std::size_t n_capsized = 0;
    std::size_t n_failed = 0;
    /// Per-member capsize time; INFINITY when none occurred, NaN when the member failed.
    std::vector<double> capsize_times;
};

struct StatsOptions {
    std::size_t n_survival_times = 200;
    std::size_t n_bins = 50;
};

/// Aggregates capsize times (INFINITY = none, NaN = failed member).
inline CapsizeStats aggregate_capsize_times(std::vector<double> times, double horizon, StatsOptions opt = {}) {
    if (opt.n_survival_times < 2 || opt.n_bins < 1) throw ConfigError("invalid survivability sampling");
    CapsizeStats st;
    st.horizon = horizon;
    std::vector<double> finite;
    for (double T : times) {
        if (std::isnan(T)) {
            ++st.n_failed;
            continue;
        }
        ++st.n_samples;
        if (std::isfinite(T)) finite.push_back(T);
    }
    std::sort(finite.begin(), finite.end());
    const double n = static_cast<double>(std::max<std::size_t>(st.n_samples, 1));
    const std::size_t m = opt.n_survival_times;
    for (std::size_t j = 0; j < m; ++j) {
        const double t = horizon * static_cast<double>(j) / static_cast<double>(m - 1);
        st.s_times.push_back(t);
        if (j == 0) {
            st.s_values.push_back(1.0);
            continue;
        }
        const auto alive = static_cast<double>(st.n_samples) -
                           static_cast<double>(std::upper_bound(finite.begin(), finite.end(), t) - finite.begin());
        st.s_values.push_back(st.n_samples ? alive / n : 1.0);
    }
    if (horizon == 0.0)
        std::fill(st.s_values.begin(), st.s_values.end(), 1.0);
    st.p_capsize = 1.0 - st.s_values.back();
    st.n_capsized = static_cast<std::size_t>(std::llround(st.p_capsize * n));
    st.p_stderr = st.n_samples ? std::sqrt(st.p_capsize * (1.0 - st.p_capsize) / n) : 0.0;
    for (std::size_t j = 0; j + 1 < m; ++j) {
        const double dt = st.s_times[j + 1] - st.s_times[j];
        st.rate_times.push_back(0.5 * (st.s_times[j] + st.s_times[j + 1]));
        st.rate_values.push_back(dt > 0.0 ? (st.s_values[j] - st.s_values[j + 1]) / dt : 0.0);
    }
    for (std::size_t b = 0; b <= opt.n_bins; ++b)
        st.hist_edges.push_back(horizon * static_cast<double>(b) / static_cast<double>(opt.n_bins));
    st.hist_counts.assign(opt.n_bins, 0);
    for (double T : finite) {
        std::size_t b = horizon > 0.0 ? static_cast<std::size_t>(T / horizon * static_cast<double>(opt.n_bins)) : 0;
        st.hist_counts[std::min(b, opt.n_bins - 1)]++;
    }
    st.capsize_times = std::move(times);
    return st;
}

struct EnsembleOptions {
    int workers = 1;
    StatsOptions stats;
};

/// Time to first surface crossing for n_samples members with seeds derived from (seed, index).
inline CapsizeStats capsize_time_ensemble(const SystemSpec& sys, const InitialSampler& sampler,
                                          const DividingSurface& surface, double horizon, double dt,
                                          std::size_t n_samples, std::uint64_t seed, EnsembleOptions opt = {}) {
    sys.validate();
    if (n_samples < 1) throw ConfigError("n_samples must be >= 1");
    if (static_cast<int>(sampler.dim()) != sys.dim) throw ConfigError("initial sampler dimension mismatch");
    std::vector<double> T(n_samples);
    const bool noisy = sys.epsilon > 0.0;
    parallel_for(n_samples, opt.workers, [&](std::size_t i) {
        const std::uint64_t s = derive_seed(seed, i);
        try {
            const auto x0 = sampler.sample(s);
            const auto r = first_crossing(sys, x0, surface, horizon, dt,
                                          noisy ? std::optional<std::uint64_t>(s) : std::nullopt);
            T[i] = r.time;
        } catch (const NumericalError&) {
            T[i] = NAN;
        }
    });
    return aggregate_capsize_times(std::move(T), horizon, opt.stats);
}

}  // namespace capsize
