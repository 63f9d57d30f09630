#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "bilinear-sde/config.hpp"
#include "support.hpp"

using namespace bilinear;
using namespace bilinear::cli;

namespace {

int error_line(std::string_view text) {
    try {
        (void)parse_config(text);
    } catch (const ConfigError &e) {
        return e.line();
    }
    return -1;
}

ScheduleSpec random_spec(std::mt19937_64 &rng, Eigen::Index r, Eigen::Index c, bool grid) {
    ScheduleSpec s;
    const int count = grid ? 3 : 1;
    if (grid)
        s.knots = {0.0, 0.1 * std::uniform_real_distribution<double>(1, 2)(rng), 1.0 / 3.0};
    for (int k = 0; k < count; ++k)
        s.values.push_back(testing_support::random_matrix(rng, r, c));
    return s;
}

} // namespace

TEST(Config, MinimalInlineModel) {
    const auto cfg = parse_config(R"(
model:
  n: 2
  A: [[-1, 2], [0, -3]]
  B0: [0.1, 0.2]
grid: {dt: 0.01, steps: 10}
)");
    ASSERT_FALSE(cfg.is_rectifier());
    const auto sys = cfg.build_system();
    EXPECT_EQ(sys.n(), 2);
    EXPECT_EQ(sys.interpretation(), Interpretation::Stratonovich);
    const auto c = sys.at(0.0);
    EXPECT_EQ(c.drift_offset, Eigen::VectorXd(Eigen::Vector2d::Zero()));
    EXPECT_EQ(c.drift_matrix(0, 1), 2.0);
    EXPECT_EQ(c.noise_offset(1, 0), 0.2);
    EXPECT_EQ(c.noise_gain, Eigen::MatrixXd(Eigen::Matrix2d::Zero()));
    EXPECT_EQ(cfg.initial_mean, Eigen::VectorXd(Eigen::Vector2d::Zero()));
    EXPECT_EQ(cfg.grid.t0, 0.0);
    EXPECT_FALSE(cfg.ensemble);
}

TEST(Config, TimeGridCoefficientAndVectorNoise) {
    const auto cfg = parse_config(R"(
model:
  n: 2
  interpretation: ito
  noise: vector
  channels: 3
  A0: {times: [0, 2], values: [[0, 0], [2, 4]]}
  gains: [0.1, 0.2, 0.3]
grid: {dt: 0.5, steps: 4}
)");
    const auto sys = cfg.build_system();
    EXPECT_TRUE(sys.is_vector_input());
    EXPECT_EQ(sys.noise_channels(), 3);
    EXPECT_EQ(sys.interpretation(), Interpretation::Ito);
    EXPECT_EQ(sys.at(1.0).drift_offset, Eigen::VectorXd(Eigen::Vector2d(1, 2)));
    EXPECT_EQ(sys.at(0.0).noise_offset, Eigen::MatrixXd(Eigen::MatrixXd::Zero(2, 3)));
}

TEST(Config, RectifierPresetWithOverride) {
    const auto cfg = parse_config(R"(
rectifier:
  preset: paper-set-1
  params: {gamma: 0.002}
grid: {dt: 1e-5, steps: 100}
)");
    ASSERT_TRUE(cfg.is_rectifier());
    const auto &src = std::get<RectifierSource>(cfg.model);
    EXPECT_EQ(src.preset, "paper-set-1");
    EXPECT_EQ(src.params.gamma, 0.002);
    EXPECT_EQ(src.params.M, 0.8);
    EXPECT_EQ(cfg.dimension(), 3);
    EXPECT_EQ(cfg.initial_cov, Eigen::MatrixXd(Eigen::Matrix3d::Zero()));
}

TEST(Config, RectifierParamsWithoutPresetMustBeComplete) {
    const std::string full = R"(
rectifier:
  params: {R_i: 0.5, L_i: 0.001, C: 0.0022, R_L: 100, M: 0.8, omega: 314.159, gamma: 0.001, V_m: 100}
grid: {dt: 1e-5, steps: 10}
)";
    EXPECT_NO_THROW(parse_config(full));
    EXPECT_EQ(error_line(R"(
rectifier:
  params: {R_i: 0.5, L_i: 0.001}
grid: {dt: 1e-5, steps: 10}
)"),
              3);
}

TEST(Config, ErrorsCarryLineNumbers) {
    EXPECT_EQ(error_line("model:\n  n: 2\n  A: [[1, 2], [3]]\ngrid: {dt: 1, steps: 1}\n"), 3);
    EXPECT_EQ(error_line("model:\n  n: 1\n  Bogus: 1\ngrid: {dt: 1, steps: 1}\n"), 3);
    EXPECT_EQ(error_line("model:\n  n: 1\ngrid: {dt: 1, steps: 1}\nensemble:\n  scheme: milstein\n"), 5);
    EXPECT_EQ(error_line("rectifier:\n  preset: paper-set-9\ngrid: {dt: 1, steps: 1}\n"), 2);
    EXPECT_EQ(error_line("model:\n  n: 1\ngrid: {dt: -1, steps: 1}\n"), 3);
    EXPECT_EQ(error_line("model:\n  n: 1\ngrid: {dt: 0.1, steps: 1}\nccf_check: {s: [1, 2], times: [0]}\n"), 4);
    EXPECT_GT(error_line("model: [unclosed\n"), 0);
}

TEST(Config, StructuralErrors) {
    EXPECT_THROW(parse_config("grid: {dt: 1, steps: 1}\n"), ConfigError);
    EXPECT_THROW(parse_config("model: {n: 1}\n"), ConfigError);
    EXPECT_THROW(parse_config("model: {n: 1, noise: vector}\ngrid: {dt: 1, steps: 1}\n"), ConfigError);
    EXPECT_THROW(parse_config("model: {n: 1}\nrectifier: {preset: paper-set-1}\ngrid: {dt: 1, steps: 1}\n"),
                 ConfigError);
    EXPECT_THROW(parse_config("model:\n  n: 1\n  A: {times: [1, 0], values: [1, 2]}\ngrid: {dt: 1, steps: 1}\n"),
                 ConfigError);
    EXPECT_THROW(load_config("/nonexistent/config.yaml"), ConfigError);
}

TEST(Config, ShippedConfigsRoundTrip) {
    int seen = 0;
    for (const auto &entry : std::filesystem::directory_iterator(BILINEAR_CONFIG_DIR)) {
        if (entry.path().extension() != ".yaml")
            continue;
        ++seen;
        const auto cfg = load_config(entry.path());
        const auto text = to_yaml(cfg);
        const auto again = parse_config(text);
        EXPECT_TRUE(again == cfg) << entry.path();
        EXPECT_EQ(to_yaml(again), text) << entry.path();
        EXPECT_NO_THROW((void)again.build_system());
    }
    EXPECT_GE(seen, 5);
}

TEST(Config, RandomInlineModelsRoundTrip) {
    std::mt19937_64 rng(12);
    std::uniform_int_distribution<int> dim(1, 4);
    for (int trial = 0; trial < 40; ++trial) {
        ExperimentConfig cfg;
        InlineModel m;
        m.n = dim(rng);
        m.vector_input = trial % 2 == 1;
        m.interpretation = trial % 3 == 0 ? Interpretation::Ito : Interpretation::Stratonovich;
        const Eigen::Index ch = m.vector_input ? dim(rng) : 1;
        const bool grid = trial % 4 < 2;
        m.drift_offset = random_spec(rng, m.n, 1, grid);
        m.drift_matrix = random_spec(rng, m.n, m.n, !grid);
        m.noise_offset = random_spec(rng, m.n, ch, grid);
        m.noise_gain = m.vector_input ? random_spec(rng, ch, 1, false) : random_spec(rng, m.n, m.n, grid);
        cfg.model = m;
        cfg.initial_mean = testing_support::random_matrix(rng, m.n, 1);
        const Eigen::MatrixXd L = testing_support::random_matrix(rng, m.n, m.n);
        cfg.initial_cov = L * L.transpose();
        cfg.grid = {0.0, 1.0 / 300.0, 100};
        cfg.moment_step = 1.0 / 3000.0;
        EnsembleConfig e;
        e.paths = 1234;
        e.seed = (1ull << 63) + 5;
        e.scheme = Scheme::HeunStratonovich;
        e.retain_paths = true;
        cfg.ensemble = e;
        cfg.outputs.moments = "dir with space/m.csv";
        cfg.outputs.paths = "p";
        cfg.ccf = CcfConfig{testing_support::random_matrix(rng, m.n, 1), {0.1, 0.2}};
        cfg.checks.moment_agreement_sigma = 3.5;

        const auto again = parse_config(to_yaml(cfg));
        EXPECT_TRUE(again == cfg) << to_yaml(cfg);
    }
}

TEST(Config, ApplyPresetReplacesModel) {
    auto cfg = parse_config("model: {n: 1, A: -1}\ninitial: {mean: [2]}\ngrid: {dt: 0.1, steps: 1}\n");
    apply_preset(cfg, "paper-set-2");
    ASSERT_TRUE(cfg.is_rectifier());
    EXPECT_EQ(std::get<RectifierSource>(cfg.model).params.gamma, 0.005);
    EXPECT_EQ(cfg.initial_mean.size(), 3);
    EXPECT_THROW(apply_preset(cfg, "nope"), std::invalid_argument);
}
