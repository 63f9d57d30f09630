#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "bilinear-sde/config.hpp"

namespace bilinear::cli {

/// Command-line overrides applied on top of a loaded config.
struct RunOptions {
    std::filesystem::path out_dir = ".";
    std::optional<std::uint64_t> seed;
    std::optional<std::string> preset;
    std::optional<unsigned> threads;
};

/// Config with --preset, --seed and --threads applied.
ExperimentConfig apply_overrides(ExperimentConfig config, const RunOptions &options);

/// Output file for a configured name, relative names resolved under out_dir.
std::filesystem::path resolve_output(const RunOptions &options, const std::string &name);

// Each command returns 0 when every artifact was written and every
// configured check passed, 1 when a check failed. Errors are thrown.
int cmd_moments(const ExperimentConfig &config, const RunOptions &options,
                std::ostream &log);
int cmd_simulate(const ExperimentConfig &config, const RunOptions &options,
                 std::ostream &log);
int cmd_rectifier_report(const ExperimentConfig &config, const RunOptions &options,
                         std::ostream &log);
int cmd_ccf_check(const ExperimentConfig &config, const RunOptions &options,
                  std::ostream &log);

} // namespace bilinear::cli
