#pragma once

// Experiment configuration for the bilinear-sde tool.
//
// The file is YAML. Grammar (all sections optional unless stated):
//
//   model:                      # inline bilinear system (or `rectifier:`)
//     n: 2                      # required
//     interpretation: stratonovich | ito          (default stratonovich)
//     noise: scalar | vector                      (default scalar)
//     channels: 2               # vector noise only; default = B0 columns
//     A0: <coef>  A: <coef>  B0: <coef>  B: <coef>  gains: <coef>
//   rectifier:
//     preset: paper-set-1 | paper-set-2
//     params: {R_i, L_i, C, R_L, M, omega, gamma, V_m, f_c}
//   initial:   {mean: [..], cov: [[..], ..]}      (default zeros)
//   grid:      {t0: 0, dt: 1e-3, steps: 1000}     # required
//   moments:   {step: 1e-4}                       (default grid dt)
//   ensemble:  {paths, seed, scheme, batches, threads, retain_paths}
//   outputs:   {moments, ensemble, paths, report, ccf}   # file names
//   ccf_check: {s: [..], times: [..]}
//   checks:    {moment_agreement_sigma: 3}
//
// <coef> is a number, a flat list (column vector), a list of rows (matrix),
// or a time grid {times: [t0, t1, ..], values: [<literal>, <literal>, ..]}
// interpolated piecewise-linearly. Omitted coefficients are zero.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "bilinear/model.hpp"
#include "bilinear/rectifier.hpp"
#include "bilinear/simulation.hpp"

namespace bilinear::cli {

/// Parse or validation failure; line is 1-based, 0 when unknown.
class ConfigError : public std::runtime_error {
  public:
    ConfigError(const std::string &what, int line)
        : std::runtime_error(line > 0 ? "line " + std::to_string(line) + ": " + what
                                      : what),
          line_(line) {}
    int line() const noexcept { return line_; }

  private:
    int line_;
};

/// Constant (knots empty, one value) or piecewise-linear coefficient.
struct ScheduleSpec {
    std::vector<double> knots;
    std::vector<Eigen::MatrixXd> values;

    CoefficientSchedule build() const;
    bool operator==(const ScheduleSpec &other) const;
};

struct InlineModel {
    Eigen::Index n = 0;
    Interpretation interpretation = Interpretation::Stratonovich;
    bool vector_input = false;
    ScheduleSpec drift_offset;
    ScheduleSpec drift_matrix;
    ScheduleSpec noise_offset;
    ScheduleSpec noise_gain; // B (scalar) or channel gains (vector)

    BilinearSDE build() const;
    bool operator==(const InlineModel &) const = default;
};

struct RectifierSource {
    std::optional<std::string> preset;
    rectifier::RectifierParams params;

    bool operator==(const RectifierSource &) const = default;
};

using ModelSource = std::variant<InlineModel, RectifierSource>;

struct GridConfig {
    double t0 = 0.0;
    double dt = 1e-3;
    std::size_t steps = 1000;

    TimeGrid build() const { return TimeGrid(t0, dt, steps); }
    bool operator==(const GridConfig &) const = default;
};

struct EnsembleConfig {
    std::size_t paths = 1000;
    std::uint64_t seed = 1;
    Scheme scheme = Scheme::EulerMaruyamaOnIto;
    std::size_t batches = 20;
    unsigned threads = 0;
    bool retain_paths = false;

    bool operator==(const EnsembleConfig &) const = default;
};

struct OutputsConfig {
    std::optional<std::string> moments;
    std::optional<std::string> ensemble;
    std::optional<std::string> paths; // file prefix, "<prefix>_<index>.csv"
    std::optional<std::string> report;
    std::optional<std::string> ccf;

    bool operator==(const OutputsConfig &) const = default;
};

struct CcfConfig {
    Eigen::VectorXd s;
    std::vector<double> times;

    bool operator==(const CcfConfig &other) const;
};

struct ChecksConfig {
    std::optional<double> moment_agreement_sigma;

    bool operator==(const ChecksConfig &) const = default;
};

struct ExperimentConfig {
    ModelSource model;
    Eigen::VectorXd initial_mean;
    Eigen::MatrixXd initial_cov;
    GridConfig grid;
    std::optional<double> moment_step;
    std::optional<EnsembleConfig> ensemble;
    OutputsConfig outputs;
    std::optional<CcfConfig> ccf;
    ChecksConfig checks;

    Eigen::Index dimension() const;
    BilinearSDE build_system() const;
    bool is_rectifier() const { return std::holds_alternative<RectifierSource>(model); }

    bool operator==(const ExperimentConfig &other) const;
};

ExperimentConfig parse_config(std::string_view text);
ExperimentConfig load_config(const std::filesystem::path &path);
std::string to_yaml(const ExperimentConfig &config);

/// Replaces the model with a named rectifier preset; initial moments are
/// reset to zeros if their dimension no longer fits.
void apply_preset(ExperimentConfig &config, std::string_view preset);

} // namespace bilinear::cli
