#pragma once

#include <cmath>
#include <random>
#include <vector>

#include <Eigen/Dense>

#include "bilinear/model.hpp"

namespace testing_support {

using bilinear::BilinearSDE;
using bilinear::CoefficientSchedule;
using bilinear::Interpretation;

inline Eigen::MatrixXd random_matrix(std::mt19937_64 &rng, Eigen::Index r, Eigen::Index c,
                                     double scale = 1.0) {
    std::normal_distribution<double> N(0.0, scale);
    Eigen::MatrixXd m(r, c);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < c; ++j)
            m(i, j) = N(rng);
    return m;
}

/// Constant or 3-knot grid schedule on [0, 2].
inline CoefficientSchedule random_schedule(std::mt19937_64 &rng, Eigen::Index r,
                                           Eigen::Index c, bool time_varying,
                                           double scale = 1.0) {
    if (!time_varying)
        return CoefficientSchedule::constant(random_matrix(rng, r, c, scale));
    std::vector<Eigen::MatrixXd> values;
    for (int k = 0; k < 3; ++k)
        values.push_back(random_matrix(rng, r, c, scale));
    return CoefficientSchedule::grid({0.0, 0.7, 2.0}, values);
}

/// Random system of dimension 1..4 with 1..4 channels for vector input.
inline BilinearSDE random_system(std::mt19937_64 &rng, bool vector_input,
                                 Interpretation interp = Interpretation::Stratonovich) {
    std::uniform_int_distribution<int> dim(1, 4);
    std::bernoulli_distribution coin(0.5);
    const Eigen::Index n = dim(rng);
    const bool tv = coin(rng);
    auto a0 = random_schedule(rng, n, 1, tv);
    auto a = random_schedule(rng, n, n, tv);
    if (vector_input) {
        const Eigen::Index m = dim(rng);
        return BilinearSDE(a0, a,
                           bilinear::VectorInputNoise{random_schedule(rng, n, m, tv, 0.5),
                                                      random_schedule(rng, m, 1, tv, 0.5)},
                           interp);
    }
    return BilinearSDE(a0, a,
                       bilinear::ScalarInputNoise{random_schedule(rng, n, 1, tv, 0.5),
                                                  random_schedule(rng, n, n, tv, 0.5)},
                       interp);
}

inline BilinearSDE scalar_gbm(double a, double b,
                              Interpretation interp = Interpretation::Stratonovich) {
    return BilinearSDE(CoefficientSchedule::constant(0.0), CoefficientSchedule::constant(a),
                       bilinear::ScalarInputNoise{CoefficientSchedule::constant(0.0),
                                                  CoefficientSchedule::constant(b)},
                       interp);
}

inline double rel_err(const Eigen::MatrixXd &got, const Eigen::MatrixXd &want) {
    const double scale = std::max(1.0, want.cwiseAbs().maxCoeff());
    return (got - want).cwiseAbs().maxCoeff() / scale;
}

} // namespace testing_support
