#pragma once

// Vector time-varying bilinear SDEs
//
//   dx = (A0(t) + A(t) x) dt + (B0(t) + B(t) x) o dW          (scalar input)
//   dx_i = (A0_i + sum_a A_ia x_a) dt
//          + sum_phi (B0_{i,phi}(t) + x_i b_phi(t)) o dW_phi  (vector input)
//
// under either the Stratonovich ('o') or the Ito reading of the noise term.

#include <algorithm>
#include <limits>
#include <string>
#include <string_view>
#include <type_traits>
#include <utility>
#include <variant>

#include <Eigen/Dense>

#include "bilinear/errors.hpp"
#include "bilinear/schedule.hpp"

namespace bilinear {

enum class Interpretation { Stratonovich, Ito };

inline std::string_view to_string(Interpretation i) {
    return i == Interpretation::Stratonovich ? "stratonovich" : "ito";
}

/// One Brownian input: B0 is n x 1, B is n x n.
struct ScalarInputNoise {
    CoefficientSchedule offset;
    CoefficientSchedule gain;
};

/// m Brownian inputs: B0 is n x m, channel_gains (b_phi) is m x 1. Channel
/// phi drives every state as (B0_{i,phi} + x_i b_phi) dW_phi.
struct VectorInputNoise {
    CoefficientSchedule offset;
    CoefficientSchedule channel_gains;
};

using NoiseShape = std::variant<ScalarInputNoise, VectorInputNoise>;

/// All coefficients of a system evaluated at one time instant.
struct Coefficients {
    Eigen::VectorXd drift_offset; // A0
    Eigen::MatrixXd drift_matrix; // A
    Eigen::MatrixXd noise_offset; // B0, n x 1 or n x m
    Eigen::MatrixXd noise_gain;   // B (n x n) or b (m x 1)
    bool vector_input = false;

    Eigen::Index n() const { return drift_offset.size(); }
    Eigen::Index m() const { return noise_offset.cols(); }
};

class BilinearSDE {
  public:
    BilinearSDE(CoefficientSchedule drift_offset,
                CoefficientSchedule drift_matrix, NoiseShape noise,
                Interpretation interpretation)
        : a0_(std::move(drift_offset)), a_(std::move(drift_matrix)),
          noise_(std::move(noise)), interpretation_(interpretation) {
        validate();
    }

    Eigen::Index n() const { return a0_.rows(); }
    Eigen::Index noise_channels() const {
        return std::visit([](const auto &s) { return s.offset.cols(); },
                          noise_);
    }
    bool is_vector_input() const {
        return std::holds_alternative<VectorInputNoise>(noise_);
    }
    Interpretation interpretation() const { return interpretation_; }

    const CoefficientSchedule &drift_offset() const { return a0_; }
    const CoefficientSchedule &drift_matrix() const { return a_; }
    const NoiseShape &noise() const { return noise_; }

    /// Declared horizon: the intersection of every schedule's range.
    double lower() const { return lower_; }
    double upper() const { return upper_; }
    bool covers(double t) const {
        bool ok = a0_.covers(t) && a_.covers(t);
        std::visit(
            [&](const auto &s) {
                ok = ok && s.offset.covers(t) &&
                     noise_gain_schedule(s).covers(t);
            },
            noise_);
        return ok;
    }

    Coefficients at(double t) const {
        Coefficients c;
        c.drift_offset = a0_(t);
        c.drift_matrix = a_(t);
        c.vector_input = is_vector_input();
        std::visit(
            [&](const auto &s) {
                c.noise_offset = s.offset(t);
                c.noise_gain = noise_gain_schedule(s)(t);
            },
            noise_);
        return c;
    }

  private:
    static const CoefficientSchedule &
    noise_gain_schedule(const ScalarInputNoise &s) {
        return s.gain;
    }
    static const CoefficientSchedule &
    noise_gain_schedule(const VectorInputNoise &s) {
        return s.channel_gains;
    }

    void validate() {
        const auto n = a0_.rows();
        auto shape = [](const CoefficientSchedule &s) {
            return std::to_string(s.rows()) + "x" + std::to_string(s.cols());
        };
        if (n < 1 || a0_.cols() != 1)
            throw DimensionError("A0 must be an n-vector, got " + shape(a0_));
        if (a_.rows() != n || a_.cols() != n)
            throw DimensionError("A must be n x n (n=" + std::to_string(n) +
                                 "), got " + shape(a_));
        std::visit(
            [&](const auto &s) {
                using T = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<T, ScalarInputNoise>) {
                    if (s.offset.rows() != n || s.offset.cols() != 1)
                        throw DimensionError("B0 must be an n-vector, got " +
                                             shape(s.offset));
                    if (s.gain.rows() != n || s.gain.cols() != n)
                        throw DimensionError("B must be n x n, got " +
                                             shape(s.gain));
                } else {
                    const auto m = s.offset.cols();
                    if (s.offset.rows() != n || m < 1)
                        throw DimensionError("B0 must be n x m, got " +
                                             shape(s.offset));
                    if (s.channel_gains.rows() != m ||
                        s.channel_gains.cols() != 1)
                        throw DimensionError(
                            "channel gains must be an m-vector (m=" +
                            std::to_string(m) + "), got " +
                            shape(s.channel_gains));
                }
            },
            noise_);

        lower_ = std::max(a0_.lower(), a_.lower());
        upper_ = std::min(a0_.upper(), a_.upper());
        std::visit(
            [&](const auto &s) {
                lower_ = std::max({lower_, s.offset.lower(),
                                   noise_gain_schedule(s).lower()});
                upper_ = std::min({upper_, s.offset.upper(),
                                   noise_gain_schedule(s).upper()});
            },
            noise_);
        if (lower_ > upper_)
            throw std::invalid_argument(
                "coefficient schedules have no common time range");
    }

    CoefficientSchedule a0_;
    CoefficientSchedule a_;
    NoiseShape noise_;
    Interpretation interpretation_;
    double lower_ = -std::numeric_limits<double>::infinity();
    double upper_ = std::numeric_limits<double>::infinity();
};

namespace detail {

inline void check_state(const Coefficients &c, const Eigen::VectorXd &x) {
    if (x.size() != c.n())
        throw DimensionError("state has length " + std::to_string(x.size()) +
                             ", system dimension is " + std::to_string(c.n()));
}

inline void require(const BilinearSDE &sys, Interpretation expected,
                    std::string_view op) {
    if (sys.interpretation() != expected)
        throw InterpretationError(std::string(op) + " requires a " +
                                  std::string(to_string(expected)) +
                                  " system");
}

} // namespace detail

// ---------------------------------------------------------------------------
// Pointwise operations on evaluated coefficients
// ---------------------------------------------------------------------------

/// a(x,t) = A0 + A x
inline Eigen::VectorXd drift(const Coefficients &c, const Eigen::VectorXd &x) {
    detail::check_state(c, x);
    return c.drift_offset + c.drift_matrix * x;
}

/// Drift correction a'(x,t) turning the Stratonovich drift into the Ito one.
///   scalar input: a'_i = 1/2 sum_q (B0_q + sum_phi B_q,phi x_phi) B_iq
///   vector input: a'_i = 1/2 sum_phi (B0_{i,phi} b_phi + b_phi^2 x_i)
inline Eigen::VectorXd correction(const Coefficients &c,
                                  const Eigen::VectorXd &x) {
    detail::check_state(c, x);
    const auto n = c.n();
    Eigen::VectorXd out = Eigen::VectorXd::Zero(n);
    if (!c.vector_input) {
        const auto &b0 = c.noise_offset;
        const auto &b = c.noise_gain;
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = 0.0;
            for (Eigen::Index q = 0; q < n; ++q) {
                double coeff_q = b0(q, 0);
                for (Eigen::Index phi = 0; phi < n; ++phi)
                    coeff_q += b(q, phi) * x(phi);
                acc += coeff_q * b(i, q);
            }
            out(i) = 0.5 * acc;
        }
    } else {
        const auto &b0 = c.noise_offset;
        const auto &g = c.noise_gain;
        for (Eigen::Index i = 0; i < n; ++i) {
            double acc = 0.0;
            for (Eigen::Index phi = 0; phi < c.m(); ++phi)
                acc += b0(i, phi) * g(phi, 0) + g(phi, 0) * g(phi, 0) * x(i);
            out(i) = 0.5 * acc;
        }
    }
    return out;
}

/// n x m matrix b(x,t); column phi multiplies dW_phi.
inline Eigen::MatrixXd noise_coefficient(const Coefficients &c,
                                         const Eigen::VectorXd &x) {
    detail::check_state(c, x);
    if (!c.vector_input)
        return c.noise_offset + c.noise_gain * x;
    Eigen::MatrixXd out = c.noise_offset;
    for (Eigen::Index phi = 0; phi < c.m(); ++phi)
        out.col(phi) += c.noise_gain(phi, 0) * x;
    return out;
}

/// (b b^T)(x,t) from the closed-form expansion in the coefficients; the
/// upper triangle is mirrored so the result is exactly symmetric.
inline Eigen::MatrixXd diffusion_matrix(const Coefficients &c,
                                        const Eigen::VectorXd &x) {
    detail::check_state(c, x);
    const auto n = c.n();
    Eigen::MatrixXd out(n, n);
    if (!c.vector_input) {
        const auto &b0 = c.noise_offset;
        const auto &b = c.noise_gain;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i; j < n; ++j) {
                double v = b0(i, 0) * b0(j, 0);
                for (Eigen::Index g = 0; g < n; ++g)
                    v += b0(i, 0) * b(j, g) * x(g);
                for (Eigen::Index phi = 0; phi < n; ++phi)
                    v += b0(j, 0) * b(i, phi) * x(phi);
                for (Eigen::Index phi = 0; phi < n; ++phi)
                    for (Eigen::Index g = 0; g < n; ++g)
                        v += b(i, phi) * b(j, g) * x(phi) * x(g);
                out(i, j) = v;
                out(j, i) = v;
            }
        }
    } else {
        const auto &b0 = c.noise_offset;
        const auto &gain = c.noise_gain;
        const double gain_sq = gain.squaredNorm();
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = i; j < n; ++j) {
                double v = 0.0;
                for (Eigen::Index phi = 0; phi < c.m(); ++phi) {
                    v += b0(i, phi) * b0(j, phi);
                    v += x(i) * b0(j, phi) * gain(phi, 0);
                    v += b0(i, phi) * gain(phi, 0) * x(j);
                }
                out(i, j) = v + x(i) * x(j) * gain_sq;
                out(j, i) = out(i, j);
            }
        }
    }
    return out;
}

/// Second partials d^2 (b b^T)_ij / dx_p dx_q; constant in x.
inline Eigen::MatrixXd diffusion_hessian(const Coefficients &c,
                                         Eigen::Index i, Eigen::Index j) {
    const auto n = c.n();
    if (i < 0 || j < 0 || i >= n || j >= n)
        throw std::out_of_range("diffusion_hessian: index (" +
                                std::to_string(i) + "," + std::to_string(j) +
                                ") outside dimension " + std::to_string(n));
    Eigen::MatrixXd h = Eigen::MatrixXd::Zero(n, n);
    if (!c.vector_input) {
        const auto &b = c.noise_gain;
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = 0; q < n; ++q)
                h(p, q) = b(i, p) * b(j, q) + b(i, q) * b(j, p);
    } else {
        const double gain_sq = c.noise_gain.squaredNorm();
        for (Eigen::Index p = 0; p < n; ++p)
            for (Eigen::Index q = 0; q < n; ++q)
                h(p, q) = (double(j == q && i == p) + double(i == q && j == p)) *
                          gain_sq;
    }
    return h;
}

// ---------------------------------------------------------------------------
// System-level operations
// ---------------------------------------------------------------------------

inline Eigen::VectorXd drift_eval(const BilinearSDE &sys,
                                  const Eigen::VectorXd &x, double t) {
    return drift(sys.at(t), x);
}

inline Eigen::VectorXd stratonovich_correction(const BilinearSDE &sys,
                                               const Eigen::VectorXd &x,
                                               double t) {
    detail::require(sys, Interpretation::Stratonovich, "stratonovich_correction");
    return correction(sys.at(t), x);
}

inline Eigen::MatrixXd noise_coefficient(const BilinearSDE &sys,
                                         const Eigen::VectorXd &x, double t) {
    return noise_coefficient(sys.at(t), x);
}

inline Eigen::MatrixXd diffusion_matrix(const BilinearSDE &sys,
                                        const Eigen::VectorXd &x, double t) {
    return diffusion_matrix(sys.at(t), x);
}

inline Eigen::MatrixXd diffusion_hessian(const BilinearSDE &sys, double t,
                                         Eigen::Index i, Eigen::Index j) {
    return diffusion_hessian(sys.at(t), i, j);
}

namespace detail {

/// The correction is affine in x: a'(x) = offset + matrix * x. Returned as
/// schedules so conversions stay exact for time-varying coefficients.
inline std::pair<CoefficientSchedule, CoefficientSchedule>
correction_schedules(const BilinearSDE &sys) {
    const auto n = sys.n();
    return std::visit(
        [n](const auto &s) -> std::pair<CoefficientSchedule, CoefficientSchedule> {
            using T = std::decay_t<decltype(s)>;
            if constexpr (std::is_same_v<T, ScalarInputNoise>) {
                return {0.5 * (s.gain * s.offset), 0.5 * (s.gain * s.gain)};
            } else {
                const auto identity =
                    CoefficientSchedule::constant(Eigen::MatrixXd::Identity(n, n));
                const auto gain_sq = s.channel_gains.transpose() * s.channel_gains;
                return {0.5 * (s.offset * s.channel_gains),
                        0.5 * (identity * gain_sq)};
            }
        },
        sys.noise());
}

} // namespace detail

/// Ito-equivalent system: drift absorbs the Stratonovich correction, noise
/// coefficients are unchanged.
inline BilinearSDE to_ito(const BilinearSDE &sys) {
    detail::require(sys, Interpretation::Stratonovich, "to_ito");
    auto [offset, matrix] = detail::correction_schedules(sys);
    return BilinearSDE(sys.drift_offset() + offset, sys.drift_matrix() + matrix,
                       sys.noise(), Interpretation::Ito);
}

/// Inverse of to_ito.
inline BilinearSDE to_stratonovich(const BilinearSDE &sys) {
    detail::require(sys, Interpretation::Ito, "to_stratonovich");
    auto [offset, matrix] = detail::correction_schedules(sys);
    return BilinearSDE(sys.drift_offset() - offset, sys.drift_matrix() - matrix,
                       sys.noise(), Interpretation::Stratonovich);
}

} // namespace bilinear
