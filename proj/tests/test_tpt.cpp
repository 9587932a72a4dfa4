#include <gtest/gtest.h>

#include <capsize/mc_rare.hpp>
#include <capsize/tpt.hpp>

#include "oracles.hpp"

using namespace capsize;
using namespace oracles;

namespace {

struct Fields {
    ScalarField rho, qp, qm;
};

const Fields& toy_fields() {
    static const Fields f = [] {
        const auto sys = toy(0.4);
        const Grid2D g;
        Fields r;
        r.rho = solve_stationary_density(sys, g);
        r.qp = solve_committor_forward(sys, g, region_a(), region_b());
        r.qm = solve_committor_backward(sys, g, region_a(), region_b(), r.rho);
        return r;
    }();
    return f;
}

double max_abs(const std::vector<double>& v) {
    double m = 0.0;
    for (double x : v) m = std::max(m, std::abs(x));
    return m;
}

// Node (i, j) mirrored through the origin; exact on the default symmetric grid.
std::size_t mirror(const Grid2D& g, int i, int j) { return g.index(g.n_theta - 1 - i, g.n_v - 1 - j); }

}  // namespace

TEST(Generator, RowsSumToZeroWithNonnegativeRates) {
    const Grid2D g{-2.0, 2.0, -2.5, 2.5, 40, 50};
    for (auto walls : {WallMode::specular, WallMode::no_flux}) {
        TptOptions o;
        o.theta_walls = walls;
        const auto Q = markov_generator(toy(0.4), g, o);
        for (int r = 0; r < Q.outerSize(); ++r) {
            double sum = 0.0;
            for (SparseRM::InnerIterator it(Q, r); it; ++it) {
                if (it.col() != r) {
                    EXPECT_GE(it.value(), 0.0);
                }
                sum += it.value();
            }
            EXPECT_NEAR(sum, 0.0, 1e-9);
        }
    }
}

TEST(StationaryDensity, UnitMass) {
    EXPECT_NEAR(toy_fields().rho.integral(), 1.0, 1e-8);
    EXPECT_TRUE(toy_fields().rho.normalized);
}

TEST(StationaryDensity, PointSymmetric) {
    const auto& rho = toy_fields().rho;
    const auto& g = rho.grid;
    const double scale = max_abs(rho.values);
    for (int i = 0; i < g.n_theta; ++i)
        for (int j = 0; j < g.n_v; ++j) EXPECT_NEAR(rho.at(i, j), rho.values[mirror(g, i, j)], 1e-6 * scale);
}

TEST(StationaryDensity, ReversibleCaseIsGibbs) {
    // Chang-Cooper fitting is exact for separable gradient drifts.
    const double eps = 0.5;
    const Grid2D g{-2.0, 2.0, -2.5, 2.5, 81, 101};
    TptOptions o;
    o.theta_walls = WallMode::no_flux;
    const auto rho = solve_stationary_density(double_well(eps), g, o);
    ScalarField ref{g, std::vector<double>(g.size()), FieldKind::density};
    for (int i = 0; i < g.n_theta; ++i)
        for (int j = 0; j < g.n_v; ++j) {
            const double th = g.theta(i), v = g.v(j);
            const double U = 0.25 * (th * th - 1.0) * (th * th - 1.0) + 0.5 * v * v;
            ref.values[g.index(i, j)] = std::exp(-2.0 * U / (eps * eps));
        }
    const double z = ref.integral();
    double worst = 0.0;
    for (std::size_t k = 0; k < g.size(); ++k)
        if (rho.values[k] > 1e-6) worst = std::max(worst, std::abs(rho.values[k] / (ref.values[k] / z) - 1.0));
    EXPECT_LT(worst, 0.02);
}

TEST(StationaryDensity, RejectsZeroNoise) {
    EXPECT_THROW(solve_stationary_density(toy(0.0), Grid2D{}), ConfigError);
}

TEST(CommittorForward, BoundaryValues) {
    const auto& q = toy_fields().qp;
    const auto lab = classify_nodes(q.grid, region_a(), region_b());
    for (std::size_t k = 0; k < lab.size(); ++k) {
        if (lab[k] == NodeLabel::in_a) {
            EXPECT_EQ(q.values[k], 0.0);
        }
        if (lab[k] == NodeLabel::in_b) {
            EXPECT_EQ(q.values[k], 1.0);
        }
        EXPECT_GE(q.values[k], 0.0);
        EXPECT_LE(q.values[k], 1.0);
    }
}

TEST(CommittorForward, SymmetricAlongTheta) {
    const auto& q = toy_fields().qp;
    const auto& g = q.grid;
    (void)g;
    // The default grid has no node on v = 0; compare bilinear values on the axis.
    for (double s : {0.3, 0.6, 0.9, 1.2}) EXPECT_NEAR(q.interpolate(s, 0.0), q.interpolate(-s, 0.0), 1e-4) << s;
}

TEST(CommittorForward, PointSymmetricEverywhere) {
    const auto& f = toy_fields();
    const auto& g = f.qp.grid;
    for (int i = 0; i < g.n_theta; ++i)
        for (int j = 0; j < g.n_v; ++j) {
            EXPECT_NEAR(f.qp.at(i, j), f.qp.values[mirror(g, i, j)], 1e-8);
            EXPECT_NEAR(f.qm.at(i, j), f.qm.values[mirror(g, i, j)], 1e-8);
        }
}

TEST(CommittorForward, OneSidedCapsizeMatchesFirstHitSampling) {
    const auto sys = toy(0.4);
    const Grid2D g;
    const RegionSpec B{{HalfPlane{{1.0, 0.0}, 1.5}}, 'B'};
    const auto q = solve_committor_forward(sys, g, region_a(), B);
    const double grid_value = q.values[node_at(g, 1.0, 0.0)];
    EXPECT_GE(grid_value, 0.35);
    EXPECT_LE(grid_value, 0.65);
    const auto mc = first_hit_probability(sys, {1.0, 0.0}, region_a(), B, 20000, 1e-3, 77);
    // Paths escaping over the port saddle never reach A or B and are left out of the estimate.
    EXPECT_LT(mc.undecided, 20000u / 5);
    EXPECT_NEAR(grid_value, mc.p, 0.03);
}

TEST(CommittorForward, GridRefinementConsistency) {
    const auto sys = toy(0.4);
    const auto& coarse = toy_fields().qp;
    const Grid2D fine{-2.0, 2.0, -2.5, 2.5, 399, 399};
    const auto q = solve_committor_forward(sys, fine, region_a(), region_b());
    for (auto [th, v] : {std::pair{1.0, 0.0}, {0.5, 0.5}, {-0.8, 0.3}, {1.2, -0.6}, {0.0, 1.0}})
        EXPECT_NEAR(coarse.interpolate(th, v), q.interpolate(th, v), 0.03) << th << "," << v;
}

TEST(CommittorForward, RejectsEmptyRegionOnGrid) {
    const RegionSpec far = disk_region(10.0, 0.0, 0.1, 'A');
    EXPECT_THROW(solve_committor_forward(toy(0.4), Grid2D{}, far, region_b()), ConfigError);
}

TEST(CommittorForward, RejectsOverlappingRegions) {
    const RegionSpec big = disk_region(1.5, 0.0, 0.5, 'A');
    EXPECT_THROW(solve_committor_forward(toy(0.4), Grid2D{}, big, region_b()), ConfigError);
}

TEST(CommittorBackward, BoundaryValues) {
    const auto& q = toy_fields().qm;
    const auto lab = classify_nodes(q.grid, region_a(), region_b());
    for (std::size_t k = 0; k < lab.size(); ++k) {
        if (lab[k] == NodeLabel::in_a) {
            EXPECT_EQ(q.values[k], 1.0);
        }
        if (lab[k] == NodeLabel::in_b) {
            EXPECT_EQ(q.values[k], 0.0);
        }
        EXPECT_GE(q.values[k], 0.0);
        EXPECT_LE(q.values[k], 1.0);
    }
}

TEST(CommittorBackward, ReversibleComplementIdentity) {
    const auto sys = double_well(0.5);
    const Grid2D g{-2.0, 2.0, -2.5, 2.5, 101, 101};
    TptOptions o;
    o.theta_walls = WallMode::no_flux;
    const auto rho = solve_stationary_density(sys, g, o);
    const auto qp = solve_committor_forward(sys, g, well_a(), well_b(), o);
    const auto qm = solve_committor_backward(sys, g, well_a(), well_b(), rho, o);
    const auto lab = classify_nodes(g, well_a(), well_b());
    for (std::size_t k = 0; k < g.size(); ++k)
        if (lab[k] == NodeLabel::free && rho.values[k] > 1e-6) {
            EXPECT_NEAR(qp.values[k] + qm.values[k], 1.0, 1e-8);
        }
}

TEST(CommittorBackward, MasksUnderflowedDensity) {
    const auto sys = toy(0.4);
    const Grid2D g{-2.0, 2.0, -2.5, 2.5, 60, 60};
    auto rho = solve_stationary_density(sys, g);
    rho.values[g.index(5, 5)] = 0.0;
    const auto q = solve_committor_backward(sys, g, region_a(), region_b(), rho);
    ASSERT_FALSE(q.diagnostics.masked.empty());
    EXPECT_EQ(q.diagnostics.masked.front(), g.index(5, 5));
}

TEST(ReactiveDensity, VanishesOnBothSets) {
    const auto& f = toy_fields();
    const auto r = reactive_density(f.rho, f.qp, f.qm);
    EXPECT_EQ(r.kind, FieldKind::reactive_density);
    EXPECT_FALSE(r.normalized);
    const auto lab = classify_nodes(r.grid, region_a(), region_b());
    for (std::size_t k = 0; k < lab.size(); ++k)
        if (lab[k] != NodeLabel::free) {
            EXPECT_EQ(r.values[k], 0.0);
        }
    const auto n = normalized(r);
    EXPECT_TRUE(n.normalized);
    EXPECT_NEAR(n.integral(), 1.0, 1e-12);
}

TEST(ReactiveDensity, RejectsGridMismatch) {
    const auto& f = toy_fields();
    ScalarField other = f.qm;
    other.grid.n_v = 10;
    EXPECT_THROW(reactive_density(f.rho, f.qp, other), ConfigError);
}

TEST(Rate, NonnegativeAndQuadraticInNoise) {
    const auto& f = toy_fields();
    const Grid2D g;
    const auto r = transition_rate_tpt(toy(0.4), g, f.rho, f.qp, f.qm);
    EXPECT_GT(r.k_ab, 0.0);
    EXPECT_GT(r.k_ab_discrete, 0.0);
    EXPECT_GT(r.rho_a, 0.0);
    EXPECT_LT(r.rho_a, 1.0);
    // Frozen fields: the rate carries the factor eps^2 through the diffusion tensor.
    const auto small = transition_rate_tpt(toy(0.04), g, f.rho, f.qp, f.qm);
    EXPECT_NEAR(small.k_ab / r.k_ab, 0.01, 1e-12);
}

TEST(Rate, ContinuumAndDiscreteFluxAgree) {
    const auto& f = toy_fields();
    const auto r = transition_rate_tpt(toy(0.4), Grid2D{}, f.rho, f.qp, f.qm);
    EXPECT_LT(std::abs(std::log(r.k_ab / r.k_ab_discrete)), std::log(1.5));
}

TEST(ReactiveDensity, PeakAgreesWithSampledHistogram) {
    const auto& f = toy_fields();
    const Grid2D g;
    const auto rr = normalized(reactive_density(f.rho, f.qp, f.qm));
    TransitionOptions o;
    o.store_segments = false;
    o.histogram_grid = g;
    const auto rec = sample_transitions(toy(0.4), region_a(), region_b(), 1e5, 1e-3, 5, o);
    const auto hist = mass_to_density(*rec.histogram_mass);
    auto argmax = [](const ScalarField& s) {
        return static_cast<std::size_t>(std::max_element(s.values.begin(), s.values.end()) - s.values.begin());
    };
    const std::size_t a = argmax(rr), b = argmax(hist);
    const double th_a = g.theta(static_cast<int>(a / g.n_v)), v_a = g.v(static_cast<int>(a % g.n_v));
    const double th_b = g.theta(static_cast<int>(b / g.n_v)), v_b = g.v(static_cast<int>(b % g.n_v));
    // rho_R is point symmetric, so its maximum is attained twice.
    const double d = std::min(std::hypot(th_a - th_b, v_a - v_b), std::hypot(th_a + th_b, v_a + v_b));
    EXPECT_LT(d, 0.3);
}
