#include "bilinear-sde/commands.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

#include "bilinear/csv.hpp"
#include "bilinear/moments.hpp"
#include "bilinear/rectifier.hpp"
#include "bilinear/simulation.hpp"

namespace bilinear::cli {

namespace {

const std::string &require_output(const std::optional<std::string> &name,
                                  const char *key, const char *command) {
    if (!name || name->empty())
        throw ConfigError(std::string(command) + " needs outputs." + key, 0);
    return *name;
}

const EnsembleConfig &require_ensemble(const ExperimentConfig &cfg, const char *command) {
    if (!cfg.ensemble)
        throw ConfigError(std::string(command) + " needs an 'ensemble' section", 0);
    return *cfg.ensemble;
}

void write_file(const std::filesystem::path &path,
                const std::function<void(std::ostream &)> &body) {
    if (path.has_parent_path())
        std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw std::runtime_error("cannot open '" + path.string() + "' for writing");
    body(out);
    out.flush();
    if (!out)
        throw std::runtime_error("failed while writing '" + path.string() + "'");
}

BilinearSDE stratonovich_form(const BilinearSDE &sys) {
    return sys.interpretation() == Interpretation::Stratonovich ? sys
                                                                : to_stratonovich(sys);
}

MomentTrajectory run_moments(const ExperimentConfig &cfg, const BilinearSDE &sys) {
    const auto grid = cfg.grid.build();
    const double step = cfg.moment_step.value_or(grid.dt());
    return propagate_moments(stratonovich_form(sys),
                             {grid.t0(), cfg.initial_mean, cfg.initial_cov},
                             grid.end(), step);
}

/// Moment index matching grid point k; the moment step must divide dt.
std::size_t moment_stride(const TimeGrid &grid, const MomentTrajectory &traj) {
    const double ratio = grid.dt() / traj.step;
    const double r = std::round(ratio);
    if (r < 1.0 || std::abs(ratio - r) > 1e-9 * ratio)
        throw ConfigError("moments.step must divide grid.dt evenly", 0);
    return std::size_t(r);
}

EnsembleOptions ensemble_options(const EnsembleConfig &e) {
    EnsembleOptions opt;
    opt.paths = e.paths;
    opt.base_seed = e.seed;
    opt.scheme = e.scheme;
    opt.batches = e.batches;
    opt.threads = e.threads;
    opt.retain_paths = e.retain_paths;
    return opt;
}

std::string path_file(const std::string &prefix, std::size_t index) {
    return prefix + "_" + std::to_string(index) + ".csv";
}

} // namespace

ExperimentConfig apply_overrides(ExperimentConfig cfg, const RunOptions &options) {
    if (options.preset)
        apply_preset(cfg, *options.preset);
    if (options.seed) {
        if (!cfg.ensemble)
            cfg.ensemble = EnsembleConfig{};
        cfg.ensemble->seed = *options.seed;
    }
    if (options.threads && cfg.ensemble)
        cfg.ensemble->threads = *options.threads;
    return cfg;
}

std::filesystem::path resolve_output(const RunOptions &options, const std::string &name) {
    const std::filesystem::path p(name);
    return p.is_absolute() ? p : options.out_dir / p;
}

int cmd_moments(const ExperimentConfig &cfg, const RunOptions &options,
                std::ostream &log) {
    const auto &name = require_output(cfg.outputs.moments, "moments", "moments");
    const auto traj = run_moments(cfg, cfg.build_system());
    const auto file = resolve_output(options, name);
    write_file(file, [&](std::ostream &os) { csv::write_moments(os, traj); });

    const auto &last = traj.back();
    log << "moments: " << traj.size() << " points written to " << file.string() << "\n";
    log << "final t = " << csv::format_double(last.t) << "\n";
    log << "final mean =";
    for (Eigen::Index i = 0; i < last.mean.size(); ++i)
        log << ' ' << csv::format_double(last.mean(i));
    log << "\ntrace P = " << csv::format_double(last.cov.trace()) << "\n";
    return 0;
}

int cmd_simulate(const ExperimentConfig &cfg, const RunOptions &options,
                 std::ostream &log) {
    const auto &e = require_ensemble(cfg, "simulate");
    const auto sys = cfg.build_system();
    const auto grid = cfg.grid.build();

    if (e.paths == 1) {
        const auto &prefix = require_output(cfg.outputs.paths, "paths", "simulate");
        const auto path = simulate_path(sys, cfg.initial_mean, grid, e.seed, 0, e.scheme);
        const auto file = resolve_output(options, path_file(prefix, 0));
        write_file(file, [&](std::ostream &os) { csv::write_path(os, path); });
        log << "simulate: single path written to " << file.string() << "\n";
        return 0;
    }

    const auto &name = require_output(cfg.outputs.ensemble, "ensemble", "simulate");
    if (e.retain_paths)
        (void)require_output(cfg.outputs.paths, "paths", "simulate");
    const auto ens = simulate_ensemble(sys, cfg.initial_mean, grid, ensemble_options(e));
    const auto file = resolve_output(options, name);
    write_file(file, [&](std::ostream &os) { csv::write_ensemble(os, ens); });
    log << "simulate: " << ens.paths << " paths (" << to_string(ens.scheme)
        << ", seed " << ens.base_seed << ") summarized in " << file.string() << "\n";
    if (e.retain_paths) {
        for (const auto &p : ens.retained)
            write_file(resolve_output(options, path_file(*cfg.outputs.paths, p.path_index)),
                       [&](std::ostream &os) { csv::write_path(os, p); });
        log << "simulate: wrote " << ens.retained.size() << " path files\n";
    }

    if (!cfg.outputs.moments && !cfg.checks.moment_agreement_sigma)
        return 0;
    const auto traj = run_moments(cfg, sys);
    if (cfg.outputs.moments)
        write_file(resolve_output(options, *cfg.outputs.moments),
                   [&](std::ostream &os) { csv::write_moments(os, traj); });
    const auto stride = moment_stride(grid, traj);
    double worst = 0.0;
    double worst_t = grid.t0();
    std::size_t skipped = 0; // components with no spread across paths
    for (std::size_t k = 1; k < grid.points(); ++k) {
        const auto &m = traj.states[k * stride].mean;
        for (Eigen::Index i = 0; i < m.size(); ++i) {
            const double se = ens.mean_stderr[k](i);
            if (!(se > 0.0)) {
                ++skipped;
                continue;
            }
            const double z = std::abs(ens.mean[k](i) - m(i)) / se;
            if (z > worst) {
                worst = z;
                worst_t = grid.time(k);
            }
        }
    }
    log << "max |sample mean - moment mean| / stderr = " << csv::format_double(worst)
        << " (at t = " << csv::format_double(worst_t) << ")\n";
    if (skipped)
        log << skipped << " zero-spread components skipped\n";
    if (cfg.checks.moment_agreement_sigma && worst > *cfg.checks.moment_agreement_sigma) {
        log << "check failed: exceeds " << csv::format_double(*cfg.checks.moment_agreement_sigma)
            << " sigma\n";
        return 1;
    }
    return 0;
}

int cmd_rectifier_report(const ExperimentConfig &cfg, const RunOptions &options,
                         std::ostream &log) {
    if (!cfg.is_rectifier())
        throw ConfigError("rectifier-report needs a 'rectifier' model (or --preset)", 0);
    const auto &name = require_output(cfg.outputs.report, "report", "rectifier-report");
    const auto &params = std::get<RectifierSource>(cfg.model).params;
    const auto sys = cfg.build_system();
    const auto grid = cfg.grid.build();
    const EnsembleConfig e = cfg.ensemble.value_or(EnsembleConfig{});

    const auto traj = run_moments(cfg, sys);
    const auto stride = moment_stride(grid, traj);
    const auto actual = simulate_path(sys, cfg.initial_mean, grid, e.seed, 0, e.scheme);
    const auto unperturbed = rectifier::unperturbed_trajectory(
        params, Eigen::Vector3d(cfg.initial_mean), grid.dt(), grid.steps());

    Eigen::Vector3d sq_mean = Eigen::Vector3d::Zero();
    Eigen::Vector3d sq_unp = Eigen::Vector3d::Zero();
    double peak = 0.0;
    const auto file = resolve_output(options, name);
    write_file(file, [&](std::ostream &os) {
        std::vector<std::string> names{"t"};
        csv::append_vector_names(names, "unperturbed", 3);
        csv::append_vector_names(names, "actual", 3);
        csv::append_vector_names(names, "mean", 3);
        csv::write_header(os, names);
        std::vector<double> row;
        for (std::size_t k = 0; k < grid.points(); ++k) {
            const Eigen::Vector3d x = actual.states.row(Eigen::Index(k)).transpose();
            const Eigen::Vector3d &m = traj.states[k * stride].mean;
            row.clear();
            row.push_back(grid.time(k));
            csv::append(row, unperturbed[k]);
            csv::append(row, x);
            csv::append(row, m);
            csv::write_row(os, row);
            sq_mean += (x - m).cwiseAbs2();
            sq_unp += (x - unperturbed[k]).cwiseAbs2();
            peak = std::max(peak, m.cwiseAbs().maxCoeff());
        }
    });
    const double count = double(grid.points());
    const Eigen::Vector3d rms_mean = (sq_mean / count).cwiseSqrt();
    const Eigen::Vector3d rms_unp = (sq_unp / count).cwiseSqrt();
    log << "rectifier-report: " << grid.points() << " rows written to " << file.string()
        << "\n";
    log << "RMS(actual - mean) =";
    for (int i = 0; i < 3; ++i)
        log << ' ' << csv::format_double(rms_mean(i));
    log << "\nRMS(actual - unperturbed) =";
    for (int i = 0; i < 3; ++i)
        log << ' ' << csv::format_double(rms_unp(i));
    log << "\nmax |mean| = " << csv::format_double(peak) << "\n";
    return 0;
}

int cmd_ccf_check(const ExperimentConfig &cfg, const RunOptions &options,
                  std::ostream &log) {
    const auto &e = require_ensemble(cfg, "ccf-check");
    if (!cfg.ccf)
        throw ConfigError("ccf-check needs a 'ccf_check' section", 0);
    const auto sys = cfg.build_system();
    const auto grid = cfg.grid.build();
    const double delta = grid.dt();

    auto opt = ensemble_options(e);
    opt.retain_paths = false;
    for (double t : cfg.ccf->times) {
        if (!grid.index_of(t) || !grid.index_of(t + delta))
            throw ConfigError("ccf_check time " + csv::format_double(t) +
                                  " and the following grid point must lie on the grid",
                              0);
        opt.snapshot_times.push_back(t);
        opt.snapshot_times.push_back(t + delta);
    }
    const auto ens = simulate_ensemble(sys, cfg.initial_mean, grid, opt);

    struct Row {
        double t;
        CcfResidual r;
        bool pass;
    };
    std::vector<Row> rows;
    bool all_pass = true;
    for (double t : cfg.ccf->times) {
        const auto r = ccf_residual(sys, ens, cfg.ccf->s, t, delta);
        const bool pass = std::abs(r.residual) <= 3.0 * r.noise_floor;
        all_pass = all_pass && pass;
        rows.push_back({t, r, pass});
        log << "t = " << csv::format_double(t) << "  residual = "
            << csv::format_double(r.residual)
            << "  noise_floor = " << csv::format_double(r.noise_floor) << "  "
            << (pass ? "PASS" : "FAIL") << "\n";
    }
    if (cfg.outputs.ccf) {
        write_file(resolve_output(options, *cfg.outputs.ccf), [&](std::ostream &os) {
            csv::write_header(os, {"t", "residual", "noise_floor", "pass"});
            for (const auto &row : rows)
                csv::write_row(os, {row.t, row.r.residual, row.r.noise_floor,
                                    row.pass ? 1.0 : 0.0});
        });
    }
    return all_pass ? 0 : 1;
}

} // namespace bilinear::cli
