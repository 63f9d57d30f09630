#include <gtest/gtest.h>

#include "bilinear/schedule.hpp"

using bilinear::CoefficientSchedule;
using bilinear::DimensionError;
using bilinear::ScheduleRangeError;

namespace {

CoefficientSchedule ramp() {
    // 2x1 values (0,1) at t=0 and (2,-1) at t=1.
    return CoefficientSchedule::grid(
        {0.0, 1.0}, {Eigen::Vector2d(0.0, 1.0), Eigen::Vector2d(2.0, -1.0)});
}

} // namespace

TEST(Schedule, ConstantEvaluatesEverywhere) {
    const auto s = CoefficientSchedule::constant(Eigen::Matrix2d::Identity());
    EXPECT_TRUE(s.is_constant());
    EXPECT_TRUE(s.covers(-1e300));
    EXPECT_EQ(s(123.0), Eigen::MatrixXd(Eigen::Matrix2d::Identity()));
}

TEST(Schedule, GridInterpolatesLinearly) {
    const auto s = ramp();
    EXPECT_EQ(s.kind(), CoefficientSchedule::Kind::Grid);
    EXPECT_DOUBLE_EQ(s(0.25)(0, 0), 0.5);
    EXPECT_DOUBLE_EQ(s(0.25)(1, 0), 0.5);
    EXPECT_DOUBLE_EQ(s(1.0)(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(s(0.0)(1, 0), 1.0);
}

TEST(Schedule, GridOutsideRangeThrowsWithTime) {
    const auto s = ramp();
    try {
        (void)s(1.5);
        FAIL() << "expected ScheduleRangeError";
    } catch (const ScheduleRangeError &e) {
        EXPECT_DOUBLE_EQ(e.time(), 1.5);
    }
    EXPECT_THROW((void)s(-0.1), ScheduleRangeError);
}

TEST(Schedule, GridRejectsBadKnots) {
    const Eigen::MatrixXd v = Eigen::MatrixXd::Zero(1, 1);
    EXPECT_THROW(CoefficientSchedule::grid({0.0, 0.0}, {v, v}), std::invalid_argument);
    EXPECT_THROW(CoefficientSchedule::grid({1.0, 0.0}, {v, v}), std::invalid_argument);
    EXPECT_THROW(CoefficientSchedule::grid({0.0}, {v, v}), DimensionError);
    EXPECT_THROW(CoefficientSchedule::grid({0.0, 1.0}, {v, Eigen::MatrixXd::Zero(2, 1)}),
                 DimensionError);
}

TEST(Schedule, ConstantAlgebraFolds) {
    const auto a = CoefficientSchedule::constant(Eigen::Matrix2d{{1, 2}, {3, 4}});
    const auto b = CoefficientSchedule::constant(Eigen::Matrix2d{{0, 1}, {1, 0}});
    const auto c = a * b + 0.5 * a - b.transpose();
    EXPECT_TRUE(c.is_constant());
    const Eigen::Matrix2d A{{1, 2}, {3, 4}}, B{{0, 1}, {1, 0}};
    EXPECT_EQ(c.constant_value(), Eigen::MatrixXd(A * B + 0.5 * A - B.transpose()));
}

TEST(Schedule, DerivedExpressionMatchesPointwiseAlgebra) {
    const auto g = ramp();
    const auto k = CoefficientSchedule::constant(Eigen::RowVector2d(3.0, -2.0));
    const auto expr = g * k + 2.0 * (g * g.transpose());
    EXPECT_EQ(expr.kind(), CoefficientSchedule::Kind::Derived);
    EXPECT_DOUBLE_EQ(expr.lower(), 0.0);
    EXPECT_DOUBLE_EQ(expr.upper(), 1.0);
    for (double t : {0.0, 0.3, 0.77, 1.0}) {
        const Eigen::MatrixXd G = g(t);
        const Eigen::MatrixXd want =
            G * Eigen::RowVector2d(3.0, -2.0) + 2.0 * (G * G.transpose());
        EXPECT_LT((expr(t) - want).cwiseAbs().maxCoeff(), 1e-15);
    }
}

TEST(Schedule, OneByOneActsAsScalar) {
    const auto g = ramp();
    const auto gain = CoefficientSchedule::grid(
        {0.0, 2.0}, {Eigen::MatrixXd::Constant(1, 1, 1.0), Eigen::MatrixXd::Constant(1, 1, 3.0)});
    const auto prod = g * gain;
    EXPECT_EQ(prod.rows(), 2);
    EXPECT_EQ(prod.cols(), 1);
    EXPECT_DOUBLE_EQ(prod(0.5)(0, 0), 1.0 * 1.5);
    // Range is the intersection [0, 1].
    EXPECT_FALSE(prod.covers(1.5));
}

TEST(Schedule, ShapeMismatchThrows) {
    const auto a = CoefficientSchedule::constant(Eigen::MatrixXd::Zero(2, 2));
    const auto b = CoefficientSchedule::constant(Eigen::MatrixXd::Zero(3, 3));
    EXPECT_THROW(a + b, DimensionError);
    EXPECT_THROW(a * b, DimensionError);
}

TEST(Schedule, DisjointRangesThrow) {
    const Eigen::MatrixXd v = Eigen::MatrixXd::Zero(1, 1);
    const auto early = CoefficientSchedule::grid({0.0, 1.0}, {v, v});
    const auto late = CoefficientSchedule::grid({2.0, 3.0}, {v, v});
    EXPECT_THROW(early + late, std::invalid_argument);
}
