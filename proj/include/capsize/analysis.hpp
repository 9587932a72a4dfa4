#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "errors.hpp"
#include "grid.hpp"
#include "ldt.hpp"

namespace capsize {

/// Pearson correlation of two fields over the common grid nodes.
inline double normalized_correlation(const ScalarField& a, const ScalarField& b) {
    if (!(a.grid == b.grid)) throw ConfigError("fields live on different grids");
    const std::size_t n = a.values.size();
    double ma = 0.0, mb = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        ma += a.values[k];
        mb += b.values[k];
    }
    ma /= n;
    mb /= n;
    double sab = 0.0, saa = 0.0, sbb = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double da = a.values[k] - ma, db = b.values[k] - mb;
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    return sab / std::sqrt(saa * sbb);
}

/// Distance from a point to a polyline given as consecutive planar points.
inline double distance_to_polyline(double th, double v, const std::vector<std::array<double, 2>>& line) {
    double best = INFINITY;
    for (std::size_t k = 0; k + 1 < line.size(); ++k) {
        const double ax = line[k][0], ay = line[k][1];
        const double dx = line[k + 1][0] - ax, dy = line[k + 1][1] - ay;
        const double len2 = dx * dx + dy * dy;
        const double s = len2 > 0.0 ? std::clamp(((th - ax) * dx + (v - ay) * dy) / len2, 0.0, 1.0) : 0.0;
        best = std::min(best, std::hypot(th - ax - s * dx, v - ay - s * dy));
    }
    if (line.size() == 1) best = std::hypot(th - line[0][0], v - line[0][1]);
    return best;
}

inline std::vector<std::array<double, 2>> planar_polyline(const DiscretePath& p) {
    if (p.dim < 2) throw ConfigError("polyline needs planar paths");
    std::vector<std::array<double, 2>> out;
    for (int k = 0; k < p.n_points(); ++k) out.push_back({p.point(k)[0], p.point(k)[1]});
    return out;
}

/// Fraction of the mass of a density field within `radius` of any of the polylines.
inline double tube_mass_fraction(const ScalarField& density, const std::vector<std::vector<std::array<double, 2>>>& lines,
                                 double radius) {
    const Grid2D& g = density.grid;
    double inside = 0.0, total = 0.0;
    for (int i = 0; i < g.n_theta; ++i)
        for (int j = 0; j < g.n_v; ++j) {
            const double m = density.at(i, j) * g.weight(i, j);
            total += m;
            if (m == 0.0) continue;
            for (const auto& line : lines)
                if (distance_to_polyline(g.theta(i), g.v(j), line) <= radius) {
                    inside += m;
                    break;
                }
        }
    return total > 0.0 ? inside / total : 0.0;
}

struct LinearFit {
    double slope = 0.0, intercept = 0.0, slope_stderr = 0.0;
};

/// Weighted least squares y = a + b x (weights 1 / sigma^2; unit weights when sigma is empty).
inline LinearFit linear_fit(std::span<const double> x, std::span<const double> y, std::span<const double> sigma = {}) {
    if (x.size() != y.size() || x.size() < 2) throw ConfigError("linear fit needs matching samples (>= 2)");
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double w = sigma.empty() ? 1.0 : 1.0 / (sigma[k] * sigma[k]);
        sw += w;
        sx += w * x[k];
        sy += w * y[k];
        sxx += w * x[k] * x[k];
        sxy += w * x[k] * y[k];
    }
    const double det = sw * sxx - sx * sx;
    LinearFit f;
    f.slope = (sw * sxy - sx * sy) / det;
    f.intercept = (sxx * sy - sx * sxy) / det;
    f.slope_stderr = std::sqrt(sw / det);
    return f;
}

}  // namespace capsize
