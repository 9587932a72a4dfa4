#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <span>
#include <utility>
#include <vector>

namespace capsize {

/// Level set g(x, t) = 0; g > 0 is the capsized side.
struct DividingSurface {
    std::function<double(std::span<const double> x, double t)> g;
    /// Optional analytic gradient in x; central differences are used otherwise.
    std::function<void(std::span<const double> x, double t, std::span<double> out)> gradient;

    double operator()(std::span<const double> x, double t = 0.0) const { return g(x, t); }

    void grad(std::span<const double> x, double t, std::span<double> out) const {
        if (gradient) {
            gradient(x, t, out);
            return;
        }
        std::vector<double> xp(x.begin(), x.end());
        for (std::size_t j = 0; j < x.size(); ++j) {
            const double h = 1e-7 * (1.0 + std::abs(x[j]));
            xp[j] = x[j] + h;
            const double gp = g(xp, t);
            xp[j] = x[j] - h;
            const double gm = g(xp, t);
            xp[j] = x[j];
            out[j] = (gp - gm) / (2.0 * h);
        }
    }
};

/// Hyperplane g(x) = <normal, x - point>.
inline DividingSurface hyperplane_surface(std::vector<double> normal, std::vector<double> point) {
    DividingSurface s;
    s.g = [normal, point](std::span<const double> x, double) {
        double acc = 0.0;
        for (std::size_t i = 0; i < normal.size(); ++i) acc += normal[i] * (x[i] - point[i]);
        return acc;
    };
    s.gradient = [normal](std::span<const double>, double, std::span<double> out) {
        std::copy(normal.begin(), normal.end(), out.begin());
    };
    return s;
}

/// Capsized if any member surface says so: g = max_i g_i.
inline DividingSurface union_surface(std::vector<DividingSurface> parts) {
    DividingSurface s;
    s.g = [parts](std::span<const double> x, double t) {
        double best = -INFINITY;
        for (const auto& p : parts) best = std::max(best, p.g(x, t));
        return best;
    };
    s.gradient = [parts](std::span<const double> x, double t, std::span<double> out) {
        std::size_t arg = 0;
        double best = -INFINITY;
        for (std::size_t i = 0; i < parts.size(); ++i) {
            const double v = parts[i].g(x, t);
            if (v > best) {
                best = v;
                arg = i;
            }
        }
        parts[arg].grad(x, t, out);
    };
    return s;
}

}  // namespace capsize
