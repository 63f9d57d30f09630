#pragma once

// Conditional mean / covariance evolution of bilinear Stratonovich systems.
//
// For a bilinear system the moment hierarchy closes at second order, so the
// mean and covariance ODEs below are exact; the only approximation made here
// is the fixed-step RK4 time discretization.

#include <cmath>
#include <cstddef>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "bilinear/errors.hpp"
#include "bilinear/model.hpp"

namespace bilinear {

struct MomentState {
    double t = 0.0;
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
};

struct MomentTrajectory {
    std::vector<MomentState> states;
    double step = 0.0;
    std::string integrator = "rk4";

    const MomentState &front() const { return states.front(); }
    const MomentState &back() const { return states.back(); }
    std::size_t size() const { return states.size(); }
};

namespace detail {

inline void check_moment_shapes(const Coefficients &c, const Eigen::VectorXd &mean,
                                const Eigen::MatrixXd &P) {
    check_state(c, mean);
    if (P.rows() != c.n() || P.cols() != c.n())
        throw DimensionError("covariance must be " + std::to_string(c.n()) +
                             "x" + std::to_string(c.n()));
}

inline void check_symmetric(const Eigen::MatrixXd &P) {
    const double scale = P.cwiseAbs().maxCoeff();
    const double asym = (P - P.transpose()).cwiseAbs().maxCoeff();
    if (asym > 1e-10 * scale)
        throw std::invalid_argument("covariance is not symmetric (max |P-P^T| = " +
                                    std::to_string(asym) + ")");
}

/// Smallest eigenvalue must stay above -1e-8 * trace.
inline bool numerically_psd(const Eigen::MatrixXd &P) {
    if (P.size() == 0 || P.isZero(0.0))
        return true;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(P, Eigen::EigenvaluesOnly);
    const double floor = -1e-8 * std::abs(P.trace());
    return eig.eigenvalues().minCoeff() >= floor;
}

} // namespace detail

/// d<x>/dt = A0 + A<x> + a'(<x>): drift plus Stratonovich correction at the mean.
inline Eigen::VectorXd mean_rhs(const Coefficients &c, const Eigen::VectorXd &mean) {
    return drift(c, mean) + correction(c, mean);
}

/// dP/dt. Scalar input:
///   dP_ij = sum_p P_ip At_jp + sum_p P_jp At_ip + (bb^T)_ij(<x>)
///           + sum_pq B_ip B_jq P_pq,   At_jp = A_jp + 1/2 sum_l B_lp B_jl.
/// Vector input uses the same split: linear part of the corrected drift,
/// diffusion at the mean, and 1/2 sum_pq d2(bb^T)_ij/dx_p dx_q P_pq.
inline Eigen::MatrixXd covariance_rhs(const Coefficients &c,
                                      const Eigen::VectorXd &mean,
                                      const Eigen::MatrixXd &P) {
    detail::check_moment_shapes(c, mean, P);
    const auto n = c.n();
    const Eigen::MatrixXd bbt = diffusion_matrix(c, mean);
    Eigen::MatrixXd out(n, n);

    if (!c.vector_input) {
        const auto &A = c.drift_matrix;
        const auto &B = c.noise_gain;
        Eigen::MatrixXd At(n, n);
        for (Eigen::Index j = 0; j < n; ++j)
            for (Eigen::Index p = 0; p < n; ++p) {
                double acc = 0.0;
                for (Eigen::Index l = 0; l < n; ++l)
                    acc += B(l, p) * B(j, l);
                At(j, p) = A(j, p) + 0.5 * acc;
            }
        for (Eigen::Index i = 0; i < n; ++i)
            for (Eigen::Index j = i; j < n; ++j) {
                double v = 0.0;
                for (Eigen::Index p = 0; p < n; ++p)
                    v += P(i, p) * At(j, p) + P(j, p) * At(i, p);
                v += bbt(i, j);
                for (Eigen::Index p = 0; p < n; ++p)
                    for (Eigen::Index q = 0; q < n; ++q)
                        v += B(i, p) * B(j, q) * P(p, q);
                out(i, j) = v;
                out(j, i) = v;
            }
        return out;
    }

    const double gain_sq = c.noise_gain.squaredNorm();
    const Eigen::MatrixXd At =
        c.drift_matrix + 0.5 * gain_sq * Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = i; j < n; ++j) {
            double v = 0.0;
            for (Eigen::Index p = 0; p < n; ++p)
                v += P(i, p) * At(j, p) + P(j, p) * At(i, p);
            v += bbt(i, j);
            v += 0.5 * diffusion_hessian(c, i, j).cwiseProduct(P).sum();
            out(i, j) = v;
            out(j, i) = v;
        }
    return out;
}

inline Eigen::VectorXd mean_rhs(const BilinearSDE &sys, const Eigen::VectorXd &mean,
                                double t) {
    detail::require(sys, Interpretation::Stratonovich, "mean_rhs");
    return mean_rhs(sys.at(t), mean);
}

inline Eigen::MatrixXd covariance_rhs(const BilinearSDE &sys,
                                      const Eigen::VectorXd &mean,
                                      const Eigen::MatrixXd &P, double t) {
    detail::require(sys, Interpretation::Stratonovich, "covariance_rhs");
    detail::check_symmetric(P);
    return covariance_rhs(sys.at(t), mean, P);
}

/// <x x^T> = <x><x>^T + P
inline Eigen::MatrixXd second_moment(const Eigen::VectorXd &mean,
                                     const Eigen::MatrixXd &P) {
    if (P.rows() != mean.size() || P.cols() != mean.size())
        throw DimensionError("second_moment: covariance shape does not match mean");
    return mean * mean.transpose() + P;
}

/// Integrates the joint (mean, P) system with classical RK4 on the uniform
/// grid init.t + k*step, k = 0..K, where K*step = t_end - init.t. P is
/// re-symmetrized after every step and checked for numerical PSD.
inline MomentTrajectory propagate_moments(const BilinearSDE &sys,
                                          const MomentState &init, double t_end,
                                          double step) {
    detail::require(sys, Interpretation::Stratonovich, "propagate_moments");
    if (!(step > 0.0) || !std::isfinite(step))
        throw std::invalid_argument("propagate_moments: step must be positive");
    if (!(t_end > init.t))
        throw std::invalid_argument("propagate_moments: t_end must exceed initial t");
    const double span = t_end - init.t;
    const auto steps = static_cast<std::size_t>(std::llround(span / step));
    if (steps == 0 || std::abs(double(steps) * step - span) > 1e-9 * span)
        throw std::invalid_argument(
            "propagate_moments: t_end - t0 must be a whole number of steps");
    for (double t : {init.t, t_end})
        if (!sys.covers(t))
            throw ScheduleRangeError("propagate_moments: horizon exceeds "
                                     "coefficient schedules",
                                     t);

    const auto n = sys.n();
    if (init.mean.size() != n || init.cov.rows() != n || init.cov.cols() != n)
        throw DimensionError("propagate_moments: initial state has wrong shape");
    detail::check_symmetric(init.cov);
    if (!detail::numerically_psd(init.cov))
        throw NumericalError("initial covariance is not PSD", init.t);

    MomentTrajectory traj;
    traj.step = step;
    traj.states.reserve(steps + 1);
    traj.states.push_back(init);

    Eigen::VectorXd m = init.mean;
    Eigen::MatrixXd P = init.cov;
    const double h = step;
    for (std::size_t k = 0; k < steps; ++k) {
        const double t = init.t + double(k) * h;
        const Coefficients c0 = sys.at(t);
        const Coefficients cm = sys.at(t + 0.5 * h);
        const Coefficients c1 = sys.at(t + h);

        const Eigen::VectorXd km1 = mean_rhs(c0, m);
        const Eigen::MatrixXd kP1 = covariance_rhs(c0, m, P);
        const Eigen::VectorXd m2 = m + 0.5 * h * km1;
        const Eigen::MatrixXd P2 = P + 0.5 * h * kP1;
        const Eigen::VectorXd km2 = mean_rhs(cm, m2);
        const Eigen::MatrixXd kP2 = covariance_rhs(cm, m2, P2);
        const Eigen::VectorXd m3 = m + 0.5 * h * km2;
        const Eigen::MatrixXd P3 = P + 0.5 * h * kP2;
        const Eigen::VectorXd km3 = mean_rhs(cm, m3);
        const Eigen::MatrixXd kP3 = covariance_rhs(cm, m3, P3);
        const Eigen::VectorXd m4 = m + h * km3;
        const Eigen::MatrixXd P4 = P + h * kP3;
        const Eigen::VectorXd km4 = mean_rhs(c1, m4);
        const Eigen::MatrixXd kP4 = covariance_rhs(c1, m4, P4);

        m += (h / 6.0) * (km1 + 2.0 * km2 + 2.0 * km3 + km4);
        P += (h / 6.0) * (kP1 + 2.0 * kP2 + 2.0 * kP3 + kP4);
        P = 0.5 * (P + P.transpose()).eval();

        const double t_next = init.t + double(k + 1) * h;
        if (!m.allFinite() || !P.allFinite()) {
            std::ostringstream os;
            os << "moment propagation produced non-finite values at t=" << t_next;
            throw NumericalError(os.str(), t_next);
        }
        if (!detail::numerically_psd(P)) {
            std::ostringstream os;
            os << "covariance lost positive semidefiniteness at t=" << t_next;
            throw NumericalError(os.str(), t_next);
        }
        traj.states.push_back({t_next, m, P});
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Characteristic-function generator
// ---------------------------------------------------------------------------

namespace detail {

/// Per-sample generator integrand
///   [sum_p (a_p + a'_p) s_p + 1/2 sum_pq (bb^T)_pq s_p s_q] exp(s^T x)
/// for samples stored one per row.
inline Eigen::VectorXd ccf_integrand(const Coefficients &c,
                                     const Eigen::MatrixXd &samples,
                                     const Eigen::VectorXd &s, double t) {
    if (samples.rows() == 0)
        throw std::invalid_argument("ccf: empty sample set");
    if (samples.cols() != c.n() || s.size() != c.n())
        throw DimensionError("ccf: samples and s must have the system dimension");
    Eigen::VectorXd out(samples.rows());
    for (Eigen::Index k = 0; k < samples.rows(); ++k) {
        const Eigen::VectorXd x = samples.row(k).transpose();
        const double exponent = s.dot(x);
        if (exponent > 700.0 || !std::isfinite(exponent)) {
            std::ostringstream os;
            os << "exp(s^T x) overflows (s^T x = " << exponent
               << "); choose a smaller |s|";
            throw NumericalError(os.str(), t);
        }
        const double first = (drift(c, x) + correction(c, x)).dot(s);
        const double second = 0.5 * s.dot(diffusion_matrix(c, x) * s);
        out(k) = (first + second) * std::exp(exponent);
    }
    return out;
}

} // namespace detail

/// Monte-Carlo estimate of d<exp(s^T x_t)>/dt from samples of x_t (one per
/// row). The right side is not closed in <exp(s^T x)>, so it is only ever
/// estimated, never integrated.
inline double ccf_generator_rhs(const BilinearSDE &sys, const Eigen::MatrixXd &samples,
                                const Eigen::VectorXd &s, double t) {
    detail::require(sys, Interpretation::Stratonovich, "ccf_generator_rhs");
    return detail::ccf_integrand(sys.at(t), samples, s, t).mean();
}

} // namespace bilinear
