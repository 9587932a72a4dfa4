#include <gtest/gtest.h>

#include <capsize/integrate.hpp>
#include <capsize/ldt.hpp>
#include <capsize/rng.hpp>
#include <capsize/saddle_flux.hpp>

#include "oracles.hpp"

using namespace capsize;
using namespace oracles;

namespace {

SystemSpec isotropic_ou() {
    SystemSpec s;
    s.dim = 2;
    s.noise_channels = 2;
    s.drift = [](std::span<const double> x, double, std::span<double> out) {
        out[0] = -x[0];
        out[1] = -x[1];
    };
    s.diffusion = [](std::span<const double>, std::span<double> out) {
        out[0] = 1.0;
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = 1.0;
    };
    return s;
}

DiscretePath random_path(int n_points, double T, std::uint64_t seed) {
    NormalStream rng(seed, StreamTag::initial_state);
    DiscretePath p;
    p.dim = 2;
    p.duration = T;
    p.states.resize(static_cast<std::size_t>(n_points) * 2);
    for (std::size_t i = 0; i < p.states.size(); ++i) p.states[i] = 0.5 * rng.at(i);
    return p;
}

MinimizeOptions toy_options(double T, int n_points = 200) {
    MinimizeOptions m;
    m.duration = T;
    m.n_points = n_points;
    m.end_free = {false, true};
    m.via = find_saddle(toy(0.4), std::vector<double>{1.0, 0.0});
    return m;
}

const ActionResult& toy_fixed_T() {
    static const ActionResult r =
        minimize_action(toy(0.4), std::vector<double>{0.0, 0.0}, std::vector<double>{1.5, 0.0}, toy_options(27.0));
    return r;
}

}  // namespace

TEST(Action, AnalyticGradientMatchesFiniteDifferences) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const auto p = random_path(60, 4.0, seed);
        EXPECT_LT(gradient_check(p, toy(0.4)), 1e-6) << seed;
        EXPECT_LT(gradient_check(p, isotropic_ou()), 1e-6) << seed;
    }
}

TEST(Action, DeterministicTrajectoryCostsNothing) {
    const auto sys = toy(0.0);
    const double x0[2] = {0.5, 0.3};
    const auto fine = integrate_ode(sys, x0, 0.0, 5.0, 1e-3);
    DiscretePath p;
    p.dim = 2;
    p.duration = 5.0;
    for (std::size_t k = 0; k < fine.size(); k += 25) p.states.insert(p.states.end(), fine.state(k).begin(), fine.state(k).end());
    ASSERT_EQ(p.n_points(), 201);
    const auto ev = action(p, sys);
    EXPECT_LT(ev.value, 1e-6);
    EXPECT_LT(ev.infeasibility, 1e-3);
}

TEST(Action, ScalesWithForcingSquared) {
    auto p = random_path(50, 2.0, 9);
    const double s1 = action(p, isotropic_ou()).value;
    for (double& x : p.states) x *= 2.0;
    EXPECT_NEAR(action(p, isotropic_ou()).value, 4.0 * s1, 1e-9 * s1);
}

TEST(Action, RejectsStateDependentNoise) {
    auto sys = isotropic_ou();
    sys.diffusion = [](std::span<const double> x, std::span<double> out) {
        out[0] = 1.0 + x[0] * x[0];
        out[1] = 0.0;
        out[2] = 0.0;
        out[3] = 1.0;
    };
    const auto p = random_path(50, 2.0, 3);
    EXPECT_THROW(action(p, sys), ConfigError);
}

TEST(Action, RejectsMalformedPaths) {
    DiscretePath p = random_path(1, 2.0, 3);
    EXPECT_THROW(action(p, toy(0.4)), ConfigError);
    p = random_path(10, 0.0, 3);
    EXPECT_THROW(action(p, toy(0.4)), ConfigError);
}

TEST(MinimizeAction, OrnsteinUhlenbeckFixedDuration) {
    MinimizeOptions m;
    m.duration = 3.0;
    const auto r = minimize_action(isotropic_ou(), std::vector<double>{0.0, 0.0}, std::vector<double>{1.0, 0.0}, m);
    EXPECT_TRUE(r.converged);
    EXPECT_NEAR(r.value, 1.0 / (1.0 - std::exp(-6.0)), 1e-3);
    EXPECT_LT(r.initial_gradient_check, 1e-6);
}

TEST(MinimizeAction, OrnsteinUhlenbeckQuasipotential) {
    MinimizeOptions m;
    m.t_min = 2.0;
    m.t_max = 20.0;
    const auto r = minimize_action(isotropic_ou(), std::vector<double>{0.0, 0.0}, std::vector<double>{0.6, -0.8}, m);
    EXPECT_NEAR(r.value, 1.0, 0.01);
}

TEST(MinimizeAction, DegenerateEndpointsGiveZero) {
    MinimizeOptions m;
    m.duration = 5.0;
    const auto r = minimize_action(toy(0.4), std::vector<double>{0.0, 0.0}, std::vector<double>{0.0, 0.0}, m);
    EXPECT_NEAR(r.value, 0.0, 1e-12);
}

TEST(MinimizeAction, BeatsFeasibleRamp) {
    // theta rises linearly with v equal to its constant slope, so the unforced equation holds exactly.
    DiscretePath ramp;
    ramp.dim = 2;
    ramp.duration = 27.0;
    const int n = 200;
    for (int k = 0; k < n; ++k) ramp.states.insert(ramp.states.end(), {1.5 * k / (n - 1.0), 1.5 / 27.0});
    const auto ev = action(ramp, toy(0.4));
    EXPECT_LT(ev.infeasibility, 1e-12);
    EXPECT_LT(toy_fixed_T().value, ev.value);
}

TEST(MinimizeAction, ToyEscapeNearBarrierValue) {
    const auto& r = toy_fixed_T();
    EXPECT_TRUE(r.converged);
    EXPECT_LT(r.infeasibility, 1e-6);
    EXPECT_NEAR(r.value, 0.25, 0.01);
    const auto first = r.path.point(0), last = r.path.point(r.path.n_points() - 1);
    EXPECT_EQ(first[0], 0.0);
    EXPECT_EQ(first[1], 0.0);
    EXPECT_EQ(last[0], 1.5);
}

TEST(MinimizeAction, DownhillPartIsFree) {
    const auto& r = toy_fixed_T();
    const auto& p = r.path;
    int k = 0;
    while (k < p.n_points() && p.point(k)[0] < 1.05) ++k;
    ASSERT_LT(k, p.n_points() - 1);
    EXPECT_LT(partial_action(p, toy(0.4), k, p.n_points() - 1), 1e-3);
}

TEST(MinimizeAction, MirrorTargetGivesSameAction) {
    MinimizeOptions m = toy_options(27.0);
    m.via = find_saddle(toy(0.4), std::vector<double>{-1.0, 0.0});
    const auto r = minimize_action(toy(0.4), std::vector<double>{0.0, 0.0}, std::vector<double>{-1.5, 0.0}, m);
    EXPECT_NEAR(r.value, toy_fixed_T().value, 1e-3 * toy_fixed_T().value);
}

TEST(MinimizeAction, RefinementChangesLittle) {
    const auto fine = minimize_action(toy(0.4), std::vector<double>{0.0, 0.0}, std::vector<double>{1.5, 0.0},
                                      toy_options(27.0, 400));
    EXPECT_NEAR(fine.value, toy_fixed_T().value, 0.005 * fine.value);
}

TEST(MinimizeAction, RejectsBadOptions) {
    MinimizeOptions m;
    m.n_points = 10;
    EXPECT_THROW(minimize_action(toy(0.4), std::vector<double>{0.0, 0.0}, std::vector<double>{1.5, 0.0}, m),
                 ConfigError);
    m = {};
    m.end_free = {true};
    EXPECT_THROW(minimize_action(toy(0.4), std::vector<double>{0.0, 0.0}, std::vector<double>{1.5, 0.0}, m),
                 ConfigError);
    m = {};
    m.t_min = 10.0;
    m.t_max = 5.0;
    EXPECT_THROW(minimize_action(toy(0.4), std::vector<double>{0.0, 0.0}, std::vector<double>{1.5, 0.0}, m),
                 ConfigError);
}

TEST(RateAsymptotic, Examples) {
    EXPECT_EQ(rate_asymptotic(0.0, 0.4), 0.0);
    EXPECT_DOUBLE_EQ(rate_asymptotic(0.25, 0.5), -1.0);
    EXPECT_THROW(rate_asymptotic(-1.0, 0.5), ConfigError);
    EXPECT_THROW(rate_asymptotic(0.25, 0.0), ConfigError);
}
