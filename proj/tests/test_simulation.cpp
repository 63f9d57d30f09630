#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "bilinear/simulation.hpp"
#include "support.hpp"

using namespace bilinear;
using testing_support::random_system;
using testing_support::scalar_gbm;

namespace {

BilinearSDE deterministic(double a0, double a) {
    return BilinearSDE(CoefficientSchedule::constant(a0), CoefficientSchedule::constant(a),
                       ScalarInputNoise{CoefficientSchedule::constant(0.0),
                                        CoefficientSchedule::constant(0.0)},
                       Interpretation::Stratonovich);
}

Eigen::VectorXd scalar(double v) { return Eigen::VectorXd::Constant(1, v); }

} // namespace

TEST(TimeGrid, PointsAndLookup) {
    const TimeGrid g(0.5, 0.25, 4);
    EXPECT_EQ(g.points(), 5u);
    EXPECT_DOUBLE_EQ(g.end(), 1.5);
    EXPECT_EQ(g.index_of(1.0), 2u);
    EXPECT_FALSE(g.index_of(1.1));
    EXPECT_FALSE(g.index_of(2.0));
    EXPECT_THROW(TimeGrid(0, 0, 3), std::invalid_argument);
    EXPECT_THROW(TimeGrid(0, 0.1, 0), std::invalid_argument);
}

TEST(Schemes, Names) {
    EXPECT_EQ(parse_scheme("heun-stratonovich"), Scheme::HeunStratonovich);
    EXPECT_EQ(parse_scheme(to_string(Scheme::EulerMaruyamaOnIto)), Scheme::EulerMaruyamaOnIto);
    EXPECT_FALSE(parse_scheme("milstein"));
}

TEST(EulerMaruyamaStep, Examples) {
    const auto ito = to_ito(deterministic(0.0, -1.0));
    EXPECT_DOUBLE_EQ(euler_maruyama_step(ito, scalar(1.0), 0.0, 0.1, scalar(0.0))(0), 0.9);
    EXPECT_DOUBLE_EQ(euler_maruyama_step(ito, scalar(1.0), 0.0, 0.1, scalar(5.0))(0), 0.9);

    const auto gbm = to_ito(scalar_gbm(0.0, 1.0));
    const double dt = 0.01;
    EXPECT_DOUBLE_EQ(euler_maruyama_step(gbm, scalar(1.0), 0.0, dt, scalar(0.2))(0),
                     1.0 + 0.5 * dt + 0.2);
}

TEST(EulerMaruyamaStep, RequiresItoAndMatchingIncrement) {
    EXPECT_THROW(euler_maruyama_step(scalar_gbm(0, 1), scalar(1), 0, 0.1, scalar(0)),
                 InterpretationError);
    EXPECT_THROW(euler_maruyama_step(to_ito(scalar_gbm(0, 1)), scalar(1), 0, 0.1,
                                     Eigen::VectorXd::Zero(2)),
                 DimensionError);
}

TEST(HeunStep, Examples) {
    const double h = 0.3;
    EXPECT_DOUBLE_EQ(heun_stratonovich_step(scalar_gbm(0.0, 1.0), scalar(1.0), 0.0, 0.01, scalar(h))(0),
                     1.0 + h + 0.5 * h * h);
    const auto decay = deterministic(2.0, -1.0);
    EXPECT_DOUBLE_EQ(heun_stratonovich_step(decay, scalar(1.0), 0.0, 0.1, scalar(0.7))(0),
                     1.0 + 0.1 * (2.0 - 1.0));
    EXPECT_THROW(heun_stratonovich_step(to_ito(decay), scalar(1.0), 0.0, 0.1, scalar(0)),
                 InterpretationError);
}

TEST(SimulatePath, ZeroNoiseIsExplicitEuler) {
    const TimeGrid grid(0.0, 0.01, 100);
    for (auto scheme : {Scheme::EulerMaruyamaOnIto, Scheme::HeunStratonovich}) {
        const auto p = simulate_path(deterministic(1.0, -2.0), scalar(0.0), grid, 99, 3, scheme);
        double x = 0.0;
        for (std::size_t k = 1; k < grid.points(); ++k) {
            x += 0.01 * (1.0 - 2.0 * x);
            EXPECT_DOUBLE_EQ(p.states(Eigen::Index(k), 0), x);
        }
    }
}

TEST(SimulatePath, Deterministic) {
    std::mt19937_64 rng(3);
    const auto sys = random_system(rng, true);
    const TimeGrid grid(0.0, 1e-3, 500);
    const Eigen::VectorXd x0 = Eigen::VectorXd::Ones(sys.n());
    const auto a = simulate_path(sys, x0, grid, 17, 5, Scheme::HeunStratonovich);
    const auto b = simulate_path(sys, x0, grid, 17, 5, Scheme::HeunStratonovich);
    EXPECT_EQ(a.states, b.states);
    const auto c = simulate_path(sys, x0, grid, 17, 6, Scheme::HeunStratonovich);
    EXPECT_NE(a.states, c.states);
}

TEST(SimulatePath, GbmConvergesToExactSolutionFromSameIncrements) {
    // Exact Stratonovich solution x0 exp(a t + b W_t), W_t rebuilt from the
    // stream the simulator consumes.
    const double a = -1.0, b = 0.5;
    const auto sys = scalar_gbm(a, b);
    for (auto scheme : {Scheme::EulerMaruyamaOnIto, Scheme::HeunStratonovich}) {
        double prev_err = 0.0;
        for (std::size_t steps : {250u, 1000u, 4000u}) {
            const TimeGrid grid(0.0, 1.0 / double(steps), steps);
            double worst = 0.0;
            for (std::size_t path = 0; path < 20; ++path) {
                const auto p = simulate_path(sys, scalar(1.0), grid, 8, path, scheme);
                const BrownianStream stream(8, path);
                Eigen::VectorXd z(1);
                double W = 0.0;
                for (std::size_t k = 0; k < steps; ++k) {
                    stream.normals(std::uint32_t(k), z);
                    W += z(0) * std::sqrt(grid.dt());
                }
                const double exact = std::exp(a + b * W);
                worst = std::max(worst, std::abs(p.states(Eigen::Index(steps), 0) - exact));
            }
            EXPECT_LT(worst, 2.0 * std::sqrt(grid.dt())) << to_string(scheme) << " dt " << grid.dt();
            if (prev_err > 0.0)
                EXPECT_LT(worst, prev_err);
            prev_err = worst;
        }
    }
}

TEST(SimulatePath, DivergenceCarriesReproductionInfo) {
    const auto sys = deterministic(0.0, 1e200);
    try {
        (void)simulate_path(sys, scalar(1.0), TimeGrid(0.0, 1.0, 5), 21, 4);
        FAIL() << "expected PathDivergedError";
    } catch (const PathDivergedError &e) {
        EXPECT_EQ(e.base_seed(), 21u);
        EXPECT_EQ(e.path_index(), 4u);
        EXPECT_EQ(e.step(), 2u);
        EXPECT_DOUBLE_EQ(e.time(), 2.0);
    }
}

TEST(SimulatePath, GridBeyondScheduleRangeThrows) {
    const Eigen::MatrixXd z = Eigen::MatrixXd::Zero(1, 1);
    const auto sys = BilinearSDE(
        CoefficientSchedule::constant(0.0), CoefficientSchedule::grid({0.0, 1.0}, {z, z}),
        ScalarInputNoise{CoefficientSchedule::constant(0.0), CoefficientSchedule::constant(0.1)},
        Interpretation::Stratonovich);
    EXPECT_THROW(simulate_path(sys, scalar(1.0), TimeGrid(0.0, 0.1, 20), 1, 0), ScheduleRangeError);
}

TEST(Ensemble, ZeroNoiseHasZeroCovariance) {
    const auto ens = simulate_ensemble(deterministic(1.0, -1.0), scalar(0.0), TimeGrid(0, 0.1, 10), 2, 1);
    for (const auto &c : ens.cov)
        EXPECT_EQ(c(0, 0), 0.0);
}

TEST(Ensemble, GbmMeanMatchesClosedForm) {
    const auto ens = simulate_ensemble(scalar_gbm(-1.0, 0.5), scalar(1.0), TimeGrid(0, 2e-3, 500),
                                       10000, 2024);
    const double want = std::exp(-0.875);
    EXPECT_LE(std::abs(ens.mean.back()(0) - want), 3 * ens.mean_stderr.back()(0));
}

TEST(Ensemble, StatisticsMatchDirectComputation) {
    std::mt19937_64 rng(9);
    const auto sys = random_system(rng, false);
    const TimeGrid grid(0.0, 0.01, 20);
    const Eigen::VectorXd x0 = Eigen::VectorXd::Zero(sys.n());
    EnsembleOptions opt;
    opt.paths = 37;
    opt.base_seed = 4;
    opt.batches = 5;
    opt.retain_paths = true;
    opt.snapshot_times = {0.1};
    const auto ens = simulate_ensemble(sys, x0, grid, opt);
    ASSERT_EQ(ens.retained.size(), 37u);

    Eigen::MatrixXd X(37, sys.n());
    for (std::size_t p = 0; p < 37; ++p) {
        EXPECT_EQ(ens.retained[p].states, simulate_path(sys, x0, grid, 4, p).states);
        X.row(Eigen::Index(p)) = ens.retained[p].states.row(10);
    }
    EXPECT_EQ(ens.samples_at(0.1), X);
    const Eigen::RowVectorXd mean = X.colwise().mean();
    const Eigen::MatrixXd centered = X.rowwise() - mean;
    const Eigen::MatrixXd cov = centered.transpose() * centered / 36.0;
    EXPECT_LT((ens.mean[10] - mean.transpose()).cwiseAbs().maxCoeff(), 1e-12);
    EXPECT_LT((ens.cov[10] - cov).cwiseAbs().maxCoeff(), 1e-12 * std::max(1.0, cov.norm()));

    // Batch-spread standard error from the five contiguous groups.
    const std::size_t bounds[] = {0, 7, 14, 22, 29, 37};
    std::vector<Eigen::MatrixXd> covs;
    for (int b = 0; b < 5; ++b) {
        const Eigen::MatrixXd Xb = X.middleRows(Eigen::Index(bounds[b]), Eigen::Index(bounds[b + 1] - bounds[b]));
        const Eigen::MatrixXd cb = Xb.rowwise() - Xb.colwise().mean();
        covs.push_back(cb.transpose() * cb / double(Xb.rows() - 1));
    }
    Eigen::MatrixXd avg = Eigen::MatrixXd::Zero(sys.n(), sys.n());
    for (const auto &c : covs)
        avg += c / 5.0;
    Eigen::MatrixXd spread = Eigen::MatrixXd::Zero(sys.n(), sys.n());
    for (const auto &c : covs)
        spread += (c - avg).cwiseAbs2();
    const Eigen::MatrixXd se = (spread / 4.0 / 5.0).cwiseSqrt();
    EXPECT_LT((ens.cov_stderr[10] - se).cwiseAbs().maxCoeff(), 1e-10 * std::max(1.0, se.norm()));
}

TEST(Ensemble, ThreadCountDoesNotChangeResults) {
    std::mt19937_64 rng(10);
    const auto sys = random_system(rng, true);
    const TimeGrid grid(0.0, 0.005, 100);
    const Eigen::VectorXd x0 = Eigen::VectorXd::Ones(sys.n());
    EnsembleOptions opt;
    opt.paths = 400;
    opt.base_seed = 77;
    opt.threads = 1;
    const auto one = simulate_ensemble(sys, x0, grid, opt);
    opt.threads = 4;
    const auto four = simulate_ensemble(sys, x0, grid, opt);
    for (std::size_t k = 0; k < grid.points(); ++k) {
        EXPECT_EQ(one.mean[k], four.mean[k]);
        EXPECT_EQ(one.cov[k], four.cov[k]);
        EXPECT_EQ(one.cov_stderr[k], four.cov_stderr[k]);
    }
}

TEST(Ensemble, RejectsBadInputs) {
    const auto sys = scalar_gbm(-1.0, 0.5);
    const TimeGrid grid(0, 0.1, 10);
    EXPECT_THROW(simulate_ensemble(sys, scalar(1.0), grid, 1, 1), std::invalid_argument);
    EXPECT_THROW(simulate_ensemble(sys, Eigen::VectorXd::Ones(2), grid, 10, 1), DimensionError);
    EnsembleOptions opt;
    opt.paths = 10;
    opt.snapshot_times = {0.15};
    EXPECT_THROW(simulate_ensemble(sys, scalar(1.0), grid, opt), std::invalid_argument);
    const auto ens = simulate_ensemble(sys, scalar(1.0), grid, 10, 1);
    EXPECT_THROW(ens.samples_at(0.5), std::invalid_argument);
}

TEST(Ensemble, DivergingPathIsReported) {
    // Every path diverges; the lowest index is reported.
    const auto sys = deterministic(0.0, 1e200);
    EnsembleOptions opt;
    opt.paths = 8;
    opt.base_seed = 3;
    opt.threads = 2;
    try {
        (void)simulate_ensemble(sys, scalar(1.0), TimeGrid(0, 1.0, 5), opt);
        FAIL() << "expected PathDivergedError";
    } catch (const PathDivergedError &e) {
        EXPECT_EQ(e.path_index(), 0u);
        EXPECT_EQ(e.base_seed(), 3u);
    }
}

TEST(CcfResidual, ZeroFrequencyIsExactlyZero) {
    const TimeGrid grid(0, 0.01, 20);
    EnsembleOptions opt;
    opt.paths = 100;
    opt.snapshot_times = {0.1, 0.11};
    const auto sys = scalar_gbm(-1.0, 0.5);
    const auto ens = simulate_ensemble(sys, scalar(1.0), grid, opt);
    const auto r = ccf_residual(sys, ens, scalar(0.0), 0.1, 0.01);
    EXPECT_EQ(r.residual, 0.0);
    EXPECT_EQ(r.noise_floor, 0.0);
}

TEST(CcfResidual, DeterministicTransportVanishesWithDelta) {
    const auto sys = deterministic(0.0, -1.0);
    double prev = 1.0;
    for (std::size_t steps : {10u, 100u, 1000u}) {
        const double dt = 1.0 / double(steps);
        EnsembleOptions opt;
        opt.paths = 2;
        opt.snapshot_times = {0.5, 0.5 + dt};
        const auto ens = simulate_ensemble(sys, scalar(1.0), TimeGrid(0, dt, steps), opt);
        const double r = std::abs(ccf_residual(sys, ens, scalar(0.3), 0.5, dt).residual);
        EXPECT_LT(r, prev);
        prev = r;
    }
    EXPECT_LT(prev, 1e-3);
}

TEST(CcfResidual, GbmWithinNoiseFloorPlusBias) {
    const auto sys = scalar_gbm(-1.0, 0.5);
    const double dt = 1e-2;
    EnsembleOptions opt;
    opt.paths = 20000;
    opt.base_seed = 5;
    opt.snapshot_times = {0.5, 0.5 + dt};
    const auto ens = simulate_ensemble(sys, scalar(1.0), TimeGrid(0, dt, 51), opt);
    const auto r = ccf_residual(sys, ens, scalar(0.3), 0.5, dt);
    // Bias of the forward difference and of the scheme is O(dt) with an O(1)
    // constant for these parameters.
    EXPECT_LE(std::abs(r.residual), 3 * r.noise_floor + dt);
    EXPECT_GT(r.noise_floor, 0.0);
}
