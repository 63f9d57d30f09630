#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>

namespace bilinear {

/// Operand shapes do not agree with the system dimension.
class DimensionError : public std::invalid_argument {
  public:
    using std::invalid_argument::invalid_argument;
};

/// A schedule was evaluated outside its knot range.
class ScheduleRangeError : public std::out_of_range {
  public:
    ScheduleRangeError(const std::string &what, double t)
        : std::out_of_range(what), t_(t) {}
    double time() const noexcept { return t_; }

  private:
    double t_;
};

/// An operation was applied to a system with the wrong interpretation
/// (e.g. converting an Ito system to Ito).
class InterpretationError : public std::logic_error {
  public:
    using std::logic_error::logic_error;
};

/// Non-finite state, exponent overflow or loss of covariance PSD.
class NumericalError : public std::runtime_error {
  public:
    explicit NumericalError(const std::string &what, double t = 0.0)
        : std::runtime_error(what), t_(t) {}
    double time() const noexcept { return t_; }

  private:
    double t_;
};

/// A sample path produced a non-finite state. Carries what is needed to
/// reproduce the path in isolation.
class PathDivergedError : public NumericalError {
  public:
    PathDivergedError(const std::string &what, double t, std::uint64_t seed,
                      std::size_t path_index, std::size_t step)
        : NumericalError(what, t), seed_(seed), path_index_(path_index),
          step_(step) {}
    std::uint64_t base_seed() const noexcept { return seed_; }
    std::size_t path_index() const noexcept { return path_index_; }
    std::size_t step() const noexcept { return step_; }

  private:
    std::uint64_t seed_;
    std::size_t path_index_;
    std::size_t step_;
};

} // namespace bilinear
