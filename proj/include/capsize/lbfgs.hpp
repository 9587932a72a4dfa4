#pragma once

#include <cmath>
#include <deque>
#include <functional>

#include <Eigen/Dense>

namespace capsize {

struct LbfgsOptions {
    int memory = 12;
    int max_iterations = 10'000;
    /// Stop when the max-norm of the gradient falls below this.
    double gradient_tolerance = 1e-9;
    /// Stop when the objective improved by less than plateau_relative over plateau_window iterations.
    int plateau_window = 500;
    double plateau_relative = 1e-12;
    /// Rebuild the preconditioner and clear the memory every this many iterations (0 = never).
    int refresh_every = 200;
};

struct LbfgsResult {
    int iterations = 0;
    bool converged = false;
    bool plateau = false;
    bool line_search_failed = false;
    double value = 0.0;
    double gradient_norm = 0.0;
};

/// Objective: returns f(x) and writes the gradient.
using ObjectiveFn = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd& grad)>;
/// Initial inverse-Hessian action H0 * q at the current point; rebuilt on refresh.
using PreconditionerFactory =
    std::function<std::function<Eigen::VectorXd(const Eigen::VectorXd&)>(const Eigen::VectorXd& x)>;

/// Limited-memory BFGS with Armijo backtracking and an optional preconditioner as H0.
inline LbfgsResult lbfgs_minimize(const ObjectiveFn& fg, Eigen::VectorXd& x, const LbfgsOptions& opt,
                                  const PreconditionerFactory& make_precond = nullptr) {
    LbfgsResult res;
    Eigen::VectorXd g(x.size()), g_new(x.size()), x_new(x.size());
    double f = fg(x, g);
    std::deque<Eigen::VectorXd> S, Y;
    std::deque<double> rho;
    std::function<Eigen::VectorXd(const Eigen::VectorXd&)> H0;
    auto refresh = [&] {
        S.clear();
        Y.clear();
        rho.clear();
        H0 = make_precond ? make_precond(x) : nullptr;
    };
    refresh();
    double plateau_ref = f;
    int since_refresh = 0;
    res.gradient_norm = g.size() ? g.cwiseAbs().maxCoeff() : 0.0;
    for (int it = 0; it < opt.max_iterations; ++it) {
        if (res.gradient_norm <= opt.gradient_tolerance) {
            res.converged = true;
            break;
        }
        if (opt.refresh_every > 0 && since_refresh >= opt.refresh_every) {
            refresh();
            since_refresh = 0;
        }
        // Two-loop recursion.
        Eigen::VectorXd q = g;
        std::vector<double> alpha(S.size());
        for (int i = static_cast<int>(S.size()) - 1; i >= 0; --i) {
            alpha[i] = rho[i] * S[i].dot(q);
            q -= alpha[i] * Y[i];
        }
        Eigen::VectorXd r;
        if (H0) {
            r = H0(q);
        } else {
            const double gamma = S.empty() ? 1.0 / std::max(1.0, g.norm()) : S.back().dot(Y.back()) / Y.back().squaredNorm();
            r = gamma * q;
        }
        for (std::size_t i = 0; i < S.size(); ++i) {
            const double beta = rho[i] * Y[i].dot(r);
            r += (alpha[i] - beta) * S[i];
        }
        Eigen::VectorXd d = -r;
        double slope = g.dot(d);
        if (!(slope < 0.0) || !d.allFinite()) {
            refresh();
            d = H0 ? Eigen::VectorXd(-H0(g)) : Eigen::VectorXd(-g / std::max(1.0, g.norm()));
            slope = g.dot(d);
            if (!(slope < 0.0)) {
                d = -g;
                slope = -g.squaredNorm();
            }
        }
        double step = 1.0, f_new = 0.0;
        bool accepted = false;
        for (int ls = 0; ls < 60; ++ls) {
            x_new = x + step * d;
            f_new = fg(x_new, g_new);
            if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        ++res.iterations;
        ++since_refresh;
        if (!accepted) {
            if (S.empty()) {
                res.line_search_failed = true;
                break;
            }
            refresh();
            since_refresh = 0;
            continue;
        }
        Eigen::VectorXd s = x_new - x, y = g_new - g;
        const double sy = s.dot(y);
        if (sy > 1e-14 * s.norm() * y.norm()) {
            S.push_back(std::move(s));
            Y.push_back(std::move(y));
            rho.push_back(1.0 / sy);
            if (static_cast<int>(S.size()) > opt.memory) {
                S.pop_front();
                Y.pop_front();
                rho.pop_front();
            }
        }
        x.swap(x_new);
        g.swap(g_new);
        f = f_new;
        res.gradient_norm = g.cwiseAbs().maxCoeff();
        if (opt.plateau_window > 0 && res.iterations % opt.plateau_window == 0) {
            if (plateau_ref - f <= opt.plateau_relative * std::max(1.0, std::abs(f))) {
                res.plateau = true;
                break;
            }
            plateau_ref = f;
        }
    }
    if (res.gradient_norm <= opt.gradient_tolerance) res.converged = true;
    res.value = f;
    return res;
}

}  // namespace capsize
