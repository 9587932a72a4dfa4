#include <gtest/gtest.h>

#include <capsize/config.hpp>

#include <filesystem>
#include <string>

using namespace capsize;
using nlohmann::json;

#ifndef CAPSIZE_CONFIG_DIR
#error "CAPSIZE_CONFIG_DIR must point at the sample configs"
#endif

namespace {

json base(const std::string& pipeline = "committor") {
    return json{{"pipeline", pipeline}, {"model", {{"omega0_sq", 1.0}, {"alpha", 1.0}, {"delta", 0.5}, {"epsilon", 0.4}}}};
}

std::string error_of(const json& j) {
    try {
        parse_config(j);
    } catch (const ConfigError& e) {
        return e.what();
    }
    return {};
}

}  // namespace

TEST(Config, DefaultsForCommittor) {
    const auto c = parse_config(base());
    EXPECT_EQ(c.pipeline, "committor");
    EXPECT_EQ(c.grid, Grid2D{});
    EXPECT_EQ(c.region_a, disk_region(0.0, 0.0, 0.2, 'A'));
    EXPECT_EQ(c.region_b, capsize_region(1.5, 'B'));
    EXPECT_EQ(c.theta_walls, WallMode::specular);
    EXPECT_FALSE(c.seed.has_value());
    EXPECT_FALSE(c.model.filter.has_value());
}

TEST(Config, SampleConfigsRoundTrip) {
    int count = 0;
    for (const auto& entry : std::filesystem::directory_iterator(CAPSIZE_CONFIG_DIR)) {
        if (entry.path().extension() != ".json") continue;
        ++count;
        const auto c = load_config(entry.path().string());
        EXPECT_EQ(parse_config(to_json(c)), c) << entry.path();
        EXPECT_EQ(to_json(parse_config(to_json(c))), to_json(c)) << entry.path();
    }
    EXPECT_GE(count, 6);
}

TEST(Config, EveryPipelineNameParses) {
    for (const auto& name : pipeline_names()) {
        json j = base(name);
        j["seed"] = 3;
        j["numerics"] = {{"dt", 0.01},       {"horizon", 1.0},  {"total_time", 10.0}, {"n_samples", 2},
                         {"n_points", 60},   {"x0", {0.0, 0.0}}, {"x_end", {1.5, 0.0}},
                         {"initial", {{"type", "point"}, {"mean", {0.0, 0.0}}}}};
        EXPECT_EQ(parse_config(j).pipeline, name);
    }
}

TEST(Config, UnknownKeysNamed) {
    json j = base();
    j["colour"] = 1;
    EXPECT_NE(error_of(j).find("colour"), std::string::npos);
    j = base();
    j["model"]["gamma"] = 0.1;
    EXPECT_NE(error_of(j).find("model.gamma"), std::string::npos);
    j = base();
    j["numerics"] = {{"timestep", 0.1}};
    EXPECT_NE(error_of(j).find("numerics.timestep"), std::string::npos);
}

TEST(Config, MissingRequiredKeysNamed) {
    json j = base();
    j.erase("pipeline");
    EXPECT_NE(error_of(j).find("pipeline"), std::string::npos);
    j = base();
    j["model"].erase("delta");
    EXPECT_NE(error_of(j).find("model.delta"), std::string::npos);
    j = base("simulate");
    j["seed"] = 1;
    j["numerics"] = {{"dt", 0.01}, {"x0", {0.0, 0.0}}};
    EXPECT_NE(error_of(j).find("numerics.horizon"), std::string::npos);
    j = base("mc-rate");
    j["numerics"] = {{"dt", 0.01}, {"total_time", 10.0}};
    EXPECT_NE(error_of(j).find("seed"), std::string::npos);
}

TEST(Config, UnknownPipelineRejected) {
    EXPECT_NE(error_of(base("sail")).find("pipeline"), std::string::npos);
}

TEST(Config, WrongTypesAndRangesNamed) {
    json j = base();
    j["model"]["alpha"] = "one";
    EXPECT_NE(error_of(j).find("model.alpha"), std::string::npos);
    j = base();
    j["model"]["omega0_sq"] = -1.0;
    EXPECT_NE(error_of(j).find("omega0_sq"), std::string::npos);
    j = base();
    j["grid"] = {{"n_theta", 2}};
    EXPECT_NE(error_of(j).find("grid"), std::string::npos);
    j = base();
    j["grid"] = {{"theta_walls", "sticky"}};
    EXPECT_NE(error_of(j).find("grid.theta_walls"), std::string::npos);
    j = base();
    j["numerics"] = {{"dt", 0.0}};
    EXPECT_NE(error_of(j).find("numerics.dt"), std::string::npos);
    j = base();
    j["numerics"] = {{"t_min", 10.0}, {"t_max", 5.0}};
    EXPECT_NE(error_of(j).find("t_min"), std::string::npos);
    j = base();
    j["seed"] = -4;
    EXPECT_NE(error_of(j).find("seed"), std::string::npos);
}

TEST(Config, RegionsParsed) {
    json j = base();
    j["regions"] = {{"A", {{{"type", "ellipse"}, {"center", {0.1, 0.0}}, {"radii", {0.3, 0.2}}}}},
                    {"B", {{{"type", "half_plane"}, {"normal", {1.0, 0.0}}, {"offset", 1.2}}}}};
    const auto c = parse_config(j);
    EXPECT_EQ(c.region_a, (RegionSpec{{Ellipse{{0.1, 0.0}, {0.3, 0.2}}}, 'A'}));
    EXPECT_EQ(c.region_b, (RegionSpec{{HalfPlane{{1.0, 0.0}, 1.2}}, 'B'}));
    j["regions"]["A"][0]["radii"] = {0.0, 0.2};
    EXPECT_NE(error_of(j).find("regions.A"), std::string::npos);
    j["regions"]["A"] = {{{"type", "star"}}};
    EXPECT_NE(error_of(j).find("regions.A[0].type"), std::string::npos);
}

TEST(Config, FilterParsed) {
    json j = base();
    j["model"]["filter"] = {{"A", {{-1.0}}}, {"C", {{1.0}}}, {"epsilon", 0.4}};
    const auto c = parse_config(j);
    ASSERT_TRUE(c.model.filter.has_value());
    EXPECT_EQ(c.model.filter->coupling_channel, 1);
    EXPECT_EQ(c.model.filter->A, (std::vector<std::vector<double>>{{-1.0}}));
    j["model"]["filter"]["C"] = {{1.0, 0.0}, {0.0, 1.0}};
    EXPECT_NE(error_of(j).find("model.filter"), std::string::npos);
    j["model"]["filter"]["A"] = {{-1.0, 0.0}};
    EXPECT_NE(error_of(j).find("model.filter.A"), std::string::npos);
}

TEST(Config, InitialDistributions) {
    json j = base();
    j["numerics"] = {{"initial", {{"type", "gaussian"}, {"mean", {0.0, 0.0}}, {"covariance", {{0.01, 0.0}, {0.0, 0.01}}}}}};
    EXPECT_EQ(parse_config(j).numerics.initial->type, "gaussian");
    j["numerics"]["initial"] = {{"type", "uniform"}, {"lo", {-0.1, -0.1}}, {"hi", {0.1, 0.1}}};
    EXPECT_EQ(parse_config(j).numerics.initial->hi, (std::vector<double>{0.1, 0.1}));
    j["numerics"]["initial"] = {{"type", "cauchy"}};
    EXPECT_NE(error_of(j).find("numerics.initial.type"), std::string::npos);
}

TEST(Config, MalformedTextAndMissingFile) {
    EXPECT_THROW(parse_config_text("{not json"), ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.json"), ConfigError);
}
