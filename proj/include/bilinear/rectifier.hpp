#pragma once

// Averaged dq-frame model of a three-phase PWM boost rectifier whose
// modulation index carries white noise, M -> M (1 + gamma dW/dt).
//
// State: x1 = i_d, x2 = i_q (A), x3 = dc-bus voltage (V).

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

#include "bilinear/model.hpp"

namespace bilinear::rectifier {

struct RectifierParams {
    double R_i = 0.5;       // internal resistance [ohm]
    double L_i = 1e-3;      // line inductance [H]
    double C = 2200e-6;     // dc-bus capacitance [F]
    double R_L = 100.0;     // load [ohm]
    double M = 0.8;         // modulation index
    double omega = 100.0 * std::numbers::pi; // supply angular frequency [rad/s]
    double gamma = 0.001;   // noise intensity on M
    double V_m = 100.0;     // supply peak [V]
    double f_c = 3000.0;    // carrier [Hz]; the averaged model does not use it

    bool operator==(const RectifierParams &) const = default;

    void validate() const {
        auto positive = [](double v, const char *name) {
            if (!(v > 0.0) || !std::isfinite(v))
                throw std::invalid_argument(std::string("rectifier: ") + name +
                                            " must be positive");
        };
        positive(R_i, "R_i");
        positive(L_i, "L_i");
        positive(C, "C");
        positive(R_L, "R_L");
        positive(V_m, "V_m");
        // M = 0 is admitted: it is the decoupled limit of the model.
        if (!(M >= 0.0 && M <= 1.0))
            throw std::invalid_argument("rectifier: M must lie in [0, 1]");
        if (!(gamma >= 0.0) || !std::isfinite(gamma))
            throw std::invalid_argument("rectifier: gamma must be >= 0");
        if (!std::isfinite(omega) || !std::isfinite(f_c))
            throw std::invalid_argument("rectifier: omega and f_c must be finite");
    }
};

inline const double kSqrt2over3 = std::sqrt(2.0 / 3.0);
inline const double kSqrt3over2 = std::sqrt(3.0 / 2.0);

/// First parameter set (gamma = 0.001).
inline RectifierParams paper_set_1() { return RectifierParams{}; }

/// Second parameter set: same circuit, gamma = 0.005.
inline RectifierParams paper_set_2() {
    RectifierParams p;
    p.gamma = 0.005;
    return p;
}

inline std::vector<std::string_view> preset_names() {
    return {"paper-set-1", "paper-set-2"};
}

inline RectifierParams preset(std::string_view name) {
    if (name == "paper-set-1")
        return paper_set_1();
    if (name == "paper-set-2")
        return paper_set_2();
    throw std::invalid_argument("unknown rectifier preset '" + std::string(name) +
                                "' (known: paper-set-1, paper-set-2)");
}

/// Balanced supply in the dq frame: (e_d, e_q) = (0, sqrt(2/3) V_m).
inline Eigen::Vector2d dq_source(const RectifierParams &p) {
    return {0.0, kSqrt2over3 * p.V_m};
}

/// Averaged sinusoidal switching functions in the dq frame (zero phase):
/// (S_d, S_q) = sqrt(2/3) M (0, 1).
inline Eigen::Vector2d switch_vector_dq(const RectifierParams &p) {
    return {0.0, kSqrt2over3 * p.M};
}

namespace detail {

// Coupling of the dc bus into the current loops and back, per unit M:
// L di_dq/dt  = ... - S_dq v,   C dv/dt = ... + (3/2) S_dq . i_dq.
inline Eigen::Matrix3d switch_coupling(const RectifierParams &p, double scale) {
    const Eigen::Vector2d s = switch_vector_dq(p) * scale;
    Eigen::Matrix3d K = Eigen::Matrix3d::Zero();
    K(0, 2) = -s(0) / p.L_i;
    K(1, 2) = -s(1) / p.L_i;
    K(2, 0) = 1.5 * s(0) / p.C;
    K(2, 1) = 1.5 * s(1) / p.C;
    return K;
}

inline Eigen::Matrix3d drift_matrix(const RectifierParams &p) {
    Eigen::Matrix3d A = switch_coupling(p, 1.0);
    A(0, 0) = -p.R_i / p.L_i;
    A(0, 1) = p.omega;
    A(1, 0) = -p.omega;
    A(1, 1) = -p.R_i / p.L_i;
    A(2, 2) = -1.0 / (p.R_L * p.C);
    return A;
}

inline Eigen::Vector3d drift_offset(const RectifierParams &p) {
    const Eigen::Vector2d e = dq_source(p);
    return {e(0) / p.L_i, e(1) / p.L_i, 0.0};
}

} // namespace detail

/// Stratonovich scalar-input bilinear SDE with constant coefficients:
/// A0 = (e_d, e_q, 0)/L_i, B0 = 0, and B the switch coupling scaled by gamma
/// (B23 = -sqrt(2/3) M gamma / L_i, B32 = sqrt(3/2) M gamma / C).
inline BilinearSDE build_rectifier_sde(const RectifierParams &p) {
    p.validate();
    return BilinearSDE(
        CoefficientSchedule::constant(Eigen::MatrixXd(detail::drift_offset(p))),
        CoefficientSchedule::constant(Eigen::MatrixXd(detail::drift_matrix(p))),
        ScalarInputNoise{
            CoefficientSchedule::constant(Eigen::MatrixXd::Zero(3, 1)),
            CoefficientSchedule::constant(
                Eigen::MatrixXd(detail::switch_coupling(p, p.gamma)))},
        Interpretation::Stratonovich);
}

/// Deterministic averaged model (no noise, no correction).
inline Eigen::Vector3d unperturbed_rhs(const RectifierParams &p,
                                       const Eigen::Vector3d &x) {
    return detail::drift_offset(p) + detail::drift_matrix(p) * x;
}

/// RK4 solution of the unperturbed model at t0 + k*step, k = 0..steps.
inline std::vector<Eigen::Vector3d> unperturbed_trajectory(const RectifierParams &p,
                                                           const Eigen::Vector3d &x0,
                                                           double step,
                                                           std::size_t steps) {
    std::vector<Eigen::Vector3d> out;
    out.reserve(steps + 1);
    out.push_back(x0);
    Eigen::Vector3d x = x0;
    for (std::size_t k = 0; k < steps; ++k) {
        const Eigen::Vector3d k1 = unperturbed_rhs(p, x);
        const Eigen::Vector3d k2 = unperturbed_rhs(p, x + 0.5 * step * k1);
        const Eigen::Vector3d k3 = unperturbed_rhs(p, x + 0.5 * step * k2);
        const Eigen::Vector3d k4 = unperturbed_rhs(p, x + step * k3);
        x += step / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
        out.push_back(x);
    }
    return out;
}

/// Conditional-mean right side written out by hand for this circuit; kept
/// only as an independent check of the generic mean equation.
inline Eigen::Vector3d mean_rhs_handcoded(const RectifierParams &p,
                                          const Eigen::Vector3d &m) {
    const auto e = dq_source(p);
    const double corr = 0.5 * p.M * p.M * p.gamma * p.gamma / (p.L_i * p.C);
    Eigen::Vector3d out;
    out(0) = -p.R_i / p.L_i * m(0) + p.omega * m(1) + e(0) / p.L_i;
    out(1) = -p.omega * m(0) - (p.R_i / p.L_i + corr) * m(1) -
             kSqrt2over3 * p.M / p.L_i * m(2) + e(1) / p.L_i;
    out(2) = kSqrt3over2 * p.M / p.C * m(1) - (1.0 / (p.R_L * p.C) + corr) * m(2);
    return out;
}

} // namespace bilinear::rectifier
