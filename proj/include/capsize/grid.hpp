#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "errors.hpp"

namespace capsize {

/// Node-centred rectangular grid; node (i, j) has index i * n_v + j.
struct Grid2D {
    double theta_lo = -2.0, theta_hi = 2.0;
    double v_lo = -2.5, v_hi = 2.5;
    int n_theta = 200, n_v = 200;

    void validate() const {
        if (n_theta < 3 || n_v < 3) throw ConfigError("grid needs at least 3 nodes per axis");
        if (!(theta_lo < theta_hi) || !(v_lo < v_hi)) throw ConfigError("grid bounds must satisfy lo < hi");
        if (!std::isfinite(theta_lo) || !std::isfinite(theta_hi) || !std::isfinite(v_lo) || !std::isfinite(v_hi))
            throw ConfigError("grid bounds must be finite");
    }
    double h_theta() const { return (theta_hi - theta_lo) / (n_theta - 1); }
    double h_v() const { return (v_hi - v_lo) / (n_v - 1); }
    double theta(int i) const { return i == n_theta - 1 ? theta_hi : theta_lo + i * h_theta(); }
    double v(int j) const { return j == n_v - 1 ? v_hi : v_lo + j * h_v(); }
    std::size_t size() const { return static_cast<std::size_t>(n_theta) * n_v; }
    std::size_t index(int i, int j) const { return static_cast<std::size_t>(i) * n_v + j; }
    /// Trapezoid quadrature weight of a node.
    double weight(int i, int j) const {
        const double wi = (i == 0 || i == n_theta - 1) ? 0.5 : 1.0;
        const double wj = (j == 0 || j == n_v - 1) ? 0.5 : 1.0;
        return wi * wj * h_theta() * h_v();
    }
    bool operator==(const Grid2D&) const = default;
};

/// Ellipse ((x - c) / r)^2 summed <= 1.
struct Ellipse {
    std::array<double, 2> center{0.0, 0.0};
    std::array<double, 2> radii{1.0, 1.0};
    bool contains(double th, double v) const {
        const double a = (th - center[0]) / radii[0], b = (v - center[1]) / radii[1];
        return a * a + b * b <= 1.0;
    }
    bool operator==(const Ellipse&) const = default;
};

/// Half-plane <normal, x> >= offset.
struct HalfPlane {
    std::array<double, 2> normal{1.0, 0.0};
    double offset = 0.0;
    bool contains(double th, double v) const { return normal[0] * th + normal[1] * v >= offset; }
    bool operator==(const HalfPlane&) const = default;
};

using Shape = std::variant<Ellipse, HalfPlane>;

/// Union of shapes labelled A (upright) or B (unsafe).
struct RegionSpec {
    std::vector<Shape> shapes;
    char label = 'A';

    bool contains(double th, double v) const {
        for (const auto& s : shapes)
            if (std::visit([&](const auto& sh) { return sh.contains(th, v); }, s)) return true;
        return false;
    }
    bool contains(std::span<const double> x) const { return contains(x[0], x[1]); }
    void validate() const {
        if (label != 'A' && label != 'B') throw ConfigError("region label must be A or B");
        if (shapes.empty()) throw ConfigError("region has no shapes");
        for (const auto& s : shapes) {
            if (const auto* e = std::get_if<Ellipse>(&s)) {
                if (!(e->radii[0] > 0.0 && e->radii[1] > 0.0)) throw ConfigError("ellipse radii must be positive");
            } else {
                const auto& h = std::get<HalfPlane>(s);
                if (h.normal[0] == 0.0 && h.normal[1] == 0.0) throw ConfigError("half-plane normal must be nonzero");
            }
        }
    }
    bool operator==(const RegionSpec&) const = default;
};

inline RegionSpec disk_region(double th, double v, double radius, char label) {
    return RegionSpec{{Ellipse{{th, v}, {radius, radius}}}, label};
}

/// {|theta| >= threshold} as two half-planes.
inline RegionSpec capsize_region(double threshold, char label = 'B') {
    return RegionSpec{{HalfPlane{{1.0, 0.0}, threshold}, HalfPlane{{-1.0, 0.0}, threshold}}, label};
}

enum class NodeLabel : std::uint8_t { free = 0, in_a = 1, in_b = 2 };

/// Labels every node; rejects empty or overlapping regions.
inline std::vector<NodeLabel> classify_nodes(const Grid2D& g, const RegionSpec& A, const RegionSpec& B) {
    g.validate();
    A.validate();
    B.validate();
    std::vector<NodeLabel> lab(g.size(), NodeLabel::free);
    std::size_t na = 0, nb = 0;
    for (int i = 0; i < g.n_theta; ++i)
        for (int j = 0; j < g.n_v; ++j) {
            const bool a = A.contains(g.theta(i), g.v(j)), b = B.contains(g.theta(i), g.v(j));
            if (a && b) throw ConfigError("regions A and B overlap on the grid");
            if (a) {
                lab[g.index(i, j)] = NodeLabel::in_a;
                ++na;
            } else if (b) {
                lab[g.index(i, j)] = NodeLabel::in_b;
                ++nb;
            }
        }
    if (na == 0) throw ConfigError("region A contains no grid node");
    if (nb == 0) throw ConfigError("region B contains no grid node");
    return lab;
}

enum class FieldKind { density, committor_forward, committor_backward, reactive_density };

inline std::string to_string(FieldKind k) {
    switch (k) {
        case FieldKind::density: return "density";
        case FieldKind::committor_forward: return "committor_forward";
        case FieldKind::committor_backward: return "committor_backward";
        case FieldKind::reactive_density: return "reactive_density";
    }
    return "unknown";
}

struct FieldDiagnostics {
    /// Scaled residual of the linear solve that produced the field.
    double residual = 0.0;
    /// Nodes excluded from the equation (e.g. density underflow).
    std::vector<std::size_t> masked;
};

struct ScalarField {
    Grid2D grid;
    std::vector<double> values;
    FieldKind kind = FieldKind::density;
    bool normalized = false;
    FieldDiagnostics diagnostics;

    ScalarField() = default;
    ScalarField(Grid2D g, std::vector<double> v, FieldKind k = FieldKind::density, bool norm = false)
        : grid(std::move(g)), values(std::move(v)), kind(k), normalized(norm) {}

    double at(int i, int j) const { return values[grid.index(i, j)]; }

    double integral() const {
        double acc = 0.0;
        for (int i = 0; i < grid.n_theta; ++i)
            for (int j = 0; j < grid.n_v; ++j) acc += grid.weight(i, j) * at(i, j);
        return acc;
    }

    /// Bilinear interpolation; points outside the box are clamped to it.
    double interpolate(double th, double v) const {
        const double x = std::clamp((th - grid.theta_lo) / grid.h_theta(), 0.0, grid.n_theta - 1.0);
        const double y = std::clamp((v - grid.v_lo) / grid.h_v(), 0.0, grid.n_v - 1.0);
        const int i = std::min(static_cast<int>(x), grid.n_theta - 2);
        const int j = std::min(static_cast<int>(y), grid.n_v - 2);
        const double fx = x - i, fy = y - j;
        return (1 - fx) * (1 - fy) * at(i, j) + fx * (1 - fy) * at(i + 1, j) + (1 - fx) * fy * at(i, j + 1) +
               fx * fy * at(i + 1, j + 1);
    }
};

}  // namespace capsize
