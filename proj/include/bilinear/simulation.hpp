#pragma once

// Sample paths and ensembles of bilinear SDEs.
//
// Brownian increments for path p at step k depend only on (base_seed, p, k),
// and ensemble statistics are reduced over fixed contiguous batches of path
// indices merged in index order. Results are therefore bit-identical for any
// number of worker threads.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <exception>
#include <limits>
#include <map>
#include <optional>
#include <sstream>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include <Eigen/Dense>

#include "bilinear/errors.hpp"
#include "bilinear/model.hpp"
#include "bilinear/moments.hpp"
#include "bilinear/philox.hpp"

namespace bilinear {

class TimeGrid {
  public:
    TimeGrid(double t0, double dt, std::size_t steps)
        : t0_(t0), dt_(dt), steps_(steps) {
        if (!std::isfinite(t0))
            throw std::invalid_argument("time grid: t0 must be finite");
        if (!(dt > 0.0) || !std::isfinite(dt))
            throw std::invalid_argument("time grid: dt must be positive");
        if (steps < 1)
            throw std::invalid_argument("time grid: steps must be >= 1");
        if (steps >= std::numeric_limits<std::uint32_t>::max())
            throw std::invalid_argument("time grid: too many steps");
    }

    double t0() const { return t0_; }
    double dt() const { return dt_; }
    std::size_t steps() const { return steps_; }
    std::size_t points() const { return steps_ + 1; }
    double time(std::size_t k) const { return t0_ + double(k) * dt_; }
    double end() const { return time(steps_); }

    /// Grid index of t, if t lies on the grid (to within 1e-9 dt).
    std::optional<std::size_t> index_of(double t) const {
        const double k = std::round((t - t0_) / dt_);
        if (k < 0.0 || k > double(steps_))
            return std::nullopt;
        if (std::abs(time(std::size_t(k)) - t) > 1e-9 * dt_)
            return std::nullopt;
        return std::size_t(k);
    }

    bool operator==(const TimeGrid &) const = default;

  private:
    double t0_;
    double dt_;
    std::size_t steps_;
};

enum class Scheme { EulerMaruyamaOnIto, HeunStratonovich };

inline std::string_view to_string(Scheme s) {
    return s == Scheme::EulerMaruyamaOnIto ? "euler-maruyama-ito"
                                           : "heun-stratonovich";
}

inline std::optional<Scheme> parse_scheme(std::string_view name) {
    if (name == "euler-maruyama-ito")
        return Scheme::EulerMaruyamaOnIto;
    if (name == "heun-stratonovich")
        return Scheme::HeunStratonovich;
    return std::nullopt;
}

struct Path {
    TimeGrid grid;
    Eigen::MatrixXd states; // (steps+1) x n, row k at grid.time(k)
    std::uint64_t base_seed = 0;
    std::size_t path_index = 0;
};

// ---------------------------------------------------------------------------
// Single steps
// ---------------------------------------------------------------------------

namespace detail {

inline void check_increment(const Coefficients &c, const Eigen::VectorXd &dW) {
    if (dW.size() != c.m())
        throw DimensionError("Brownian increment has length " +
                             std::to_string(dW.size()) + ", system has " +
                             std::to_string(c.m()) + " noise channels");
}

} // namespace detail

/// x + a(x,t) dt + b(x,t) dW, with coefficients of the Ito form.
inline Eigen::VectorXd euler_maruyama_step(const Coefficients &ito,
                                           const Eigen::VectorXd &x, double dt,
                                           const Eigen::VectorXd &dW) {
    detail::check_increment(ito, dW);
    return x + drift(ito, x) * dt + noise_coefficient(ito, x) * dW;
}

/// Predictor x~ = x + a dt + b(x) dW, corrector
/// x' = x + a dt + (b(x) + b(x~)) dW / 2. No drift correction: the averaged
/// noise term converges to the Stratonovich solution.
inline Eigen::VectorXd heun_stratonovich_step(const Coefficients &strat,
                                              const Eigen::VectorXd &x, double dt,
                                              const Eigen::VectorXd &dW) {
    detail::check_increment(strat, dW);
    const Eigen::VectorXd a = drift(strat, x);
    const Eigen::MatrixXd b = noise_coefficient(strat, x);
    const Eigen::VectorXd predictor = x + a * dt + b * dW;
    const Eigen::MatrixXd b_pred = noise_coefficient(strat, predictor);
    return x + a * dt + 0.5 * (b + b_pred) * dW;
}

inline Eigen::VectorXd euler_maruyama_step(const BilinearSDE &ito_sys,
                                           const Eigen::VectorXd &x, double t,
                                           double dt, const Eigen::VectorXd &dW) {
    detail::require(ito_sys, Interpretation::Ito, "euler_maruyama_step");
    return euler_maruyama_step(ito_sys.at(t), x, dt, dW);
}

inline Eigen::VectorXd heun_stratonovich_step(const BilinearSDE &strat_sys,
                                              const Eigen::VectorXd &x, double t,
                                              double dt, const Eigen::VectorXd &dW) {
    detail::require(strat_sys, Interpretation::Stratonovich,
                    "heun_stratonovich_step");
    return heun_stratonovich_step(strat_sys.at(t), x, dt, dW);
}

// ---------------------------------------------------------------------------
// Paths
// ---------------------------------------------------------------------------

namespace detail {

/// Coefficients of the system the scheme integrates, tabulated on the grid.
struct SteppingPlan {
    Scheme scheme;
    std::vector<Coefficients> table; // one per step start time
};

inline SteppingPlan make_plan(const BilinearSDE &sys, const TimeGrid &grid,
                              Scheme scheme) {
    for (double t : {grid.t0(), grid.end()})
        if (!sys.covers(t))
            throw ScheduleRangeError("simulation grid exceeds coefficient schedules", t);
    const BilinearSDE *target = &sys;
    std::optional<BilinearSDE> converted;
    if (scheme == Scheme::EulerMaruyamaOnIto &&
        sys.interpretation() == Interpretation::Stratonovich) {
        converted.emplace(to_ito(sys));
        target = &*converted;
    } else if (scheme == Scheme::HeunStratonovich &&
               sys.interpretation() == Interpretation::Ito) {
        converted.emplace(to_stratonovich(sys));
        target = &*converted;
    }
    SteppingPlan plan{scheme, {}};
    plan.table.reserve(grid.steps());
    for (std::size_t k = 0; k < grid.steps(); ++k)
        plan.table.push_back(target->at(grid.time(k)));
    return plan;
}

inline void run_path(const SteppingPlan &plan, const TimeGrid &grid,
                     const Eigen::VectorXd &x0, std::uint64_t base_seed,
                     std::size_t path_index, Eigen::MatrixXd &states) {
    const auto n = x0.size();
    const auto m = plan.table.front().m();
    if (n != plan.table.front().n())
        throw DimensionError("initial state has length " + std::to_string(n) +
                             ", system dimension is " +
                             std::to_string(plan.table.front().n()));
    states.resize(Eigen::Index(grid.points()), n);
    states.row(0) = x0.transpose();

    const BrownianStream stream(base_seed, path_index);
    const double sqrt_dt = std::sqrt(grid.dt());
    Eigen::VectorXd x = x0;
    Eigen::VectorXd dW(m);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        stream.normals(std::uint32_t(k), dW);
        dW *= sqrt_dt;
        const auto &c = plan.table[k];
        x = plan.scheme == Scheme::EulerMaruyamaOnIto
                ? euler_maruyama_step(c, x, grid.dt(), dW)
                : heun_stratonovich_step(c, x, grid.dt(), dW);
        if (!x.allFinite()) {
            std::ostringstream os;
            os << "path " << path_index << " (seed " << base_seed
               << ") became non-finite at step " << k + 1
               << ", t=" << grid.time(k + 1);
            throw PathDivergedError(os.str(), grid.time(k + 1), base_seed,
                                    path_index, k + 1);
        }
        states.row(Eigen::Index(k + 1)) = x.transpose();
    }
}

} // namespace detail

/// One realization. EulerMaruyamaOnIto converts a Stratonovich system with
/// to_ito once; HeunStratonovich converts an Ito system with to_stratonovich.
inline Path simulate_path(const BilinearSDE &sys, const Eigen::VectorXd &x0,
                          const TimeGrid &grid, std::uint64_t base_seed,
                          std::size_t path_index,
                          Scheme scheme = Scheme::EulerMaruyamaOnIto) {
    const auto plan = detail::make_plan(sys, grid, scheme);
    Path path{grid, {}, base_seed, path_index};
    detail::run_path(plan, grid, x0, base_seed, path_index, path.states);
    return path;
}

// ---------------------------------------------------------------------------
// Ensembles
// ---------------------------------------------------------------------------

struct EnsembleOptions {
    std::size_t paths = 1000;
    std::uint64_t base_seed = 1;
    Scheme scheme = Scheme::EulerMaruyamaOnIto;
    /// Contiguous path-index groups; used for covariance standard errors and
    /// as the unit of parallel work.
    std::size_t batches = 20;
    /// Worker threads; 0 picks std::thread::hardware_concurrency().
    unsigned threads = 0;
    /// Keep every full path (only sensible for small N).
    bool retain_paths = false;
    /// Grid times at which all N samples are kept (e.g. for ccf_residual).
    std::vector<double> snapshot_times;
};

struct Ensemble {
    TimeGrid grid{0.0, 1.0, 1};
    std::size_t paths = 0;
    std::uint64_t base_seed = 0;
    Scheme scheme = Scheme::EulerMaruyamaOnIto;
    std::size_t batches = 0;

    std::vector<Eigen::VectorXd> mean;        // per grid point
    std::vector<Eigen::MatrixXd> cov;         // unbiased sample covariance
    std::vector<Eigen::VectorXd> mean_stderr; // sqrt(diag(cov) / N)
    std::vector<Eigen::MatrixXd> cov_stderr;  // spread of batch covariances / sqrt(B)

    std::map<std::size_t, Eigen::MatrixXd> snapshots; // grid index -> N x n
    std::vector<Path> retained;

    /// All N samples at grid time t, one per row.
    const Eigen::MatrixXd &samples_at(double t) const {
        const auto k = grid.index_of(t);
        if (!k)
            throw std::invalid_argument("t=" + std::to_string(t) +
                                        " is not on the ensemble grid");
        const auto it = snapshots.find(*k);
        if (it == snapshots.end())
            throw std::invalid_argument("samples at t=" + std::to_string(t) +
                                        " were not retained");
        return it->second;
    }
};

namespace detail {

/// Per-grid-point running mean and scatter (Welford / Chan).
struct MomentAccumulator {
    std::size_t count = 0;
    Eigen::MatrixXd mean;    // n x points
    Eigen::MatrixXd scatter; // (n*n) x points, column-major n x n blocks

    MomentAccumulator(Eigen::Index n, std::size_t points)
        : mean(Eigen::MatrixXd::Zero(n, Eigen::Index(points))),
          scatter(Eigen::MatrixXd::Zero(n * n, Eigen::Index(points))) {}

    void add(const Eigen::MatrixXd &states) {
        ++count;
        const auto n = mean.rows();
        const double inv = 1.0 / double(count);
        for (Eigen::Index k = 0; k < mean.cols(); ++k) {
            const Eigen::VectorXd x = states.row(k).transpose();
            const Eigen::VectorXd delta = x - mean.col(k);
            mean.col(k) += delta * inv;
            const Eigen::VectorXd delta_after = x - mean.col(k);
            Eigen::Map<Eigen::MatrixXd> s(scatter.col(k).data(), n, n);
            s.noalias() += delta * delta_after.transpose();
        }
    }

    void merge(const MomentAccumulator &other) {
        if (other.count == 0)
            return;
        if (count == 0) {
            *this = other;
            return;
        }
        const auto n = mean.rows();
        const double na = double(count);
        const double nb = double(other.count);
        const double total = na + nb;
        for (Eigen::Index k = 0; k < mean.cols(); ++k) {
            const Eigen::VectorXd delta = other.mean.col(k) - mean.col(k);
            mean.col(k) += delta * (nb / total);
            Eigen::Map<Eigen::MatrixXd> s(scatter.col(k).data(), n, n);
            const Eigen::Map<const Eigen::MatrixXd> so(other.scatter.col(k).data(), n, n);
            s += so + delta * delta.transpose() * (na * nb / total);
        }
        count += other.count;
    }

    Eigen::MatrixXd covariance(Eigen::Index k) const {
        const auto n = mean.rows();
        const Eigen::Map<const Eigen::MatrixXd> s(scatter.col(k).data(), n, n);
        Eigen::MatrixXd c = s / double(count - 1);
        return 0.5 * (c + c.transpose());
    }
};

} // namespace detail

/// N independent paths with indices 0..N-1 and their per-grid-point
/// statistics.
inline Ensemble simulate_ensemble(const BilinearSDE &sys, const Eigen::VectorXd &x0,
                                  const TimeGrid &grid, const EnsembleOptions &opt) {
    if (opt.paths < 2)
        throw std::invalid_argument("simulate_ensemble: need at least 2 paths");
    if (x0.size() != sys.n())
        throw DimensionError("initial state has length " + std::to_string(x0.size()) +
                             ", system dimension is " + std::to_string(sys.n()));
    const auto plan = detail::make_plan(sys, grid, opt.scheme);
    const auto n = sys.n();
    const std::size_t N = opt.paths;
    const std::size_t B = std::clamp<std::size_t>(opt.batches, 1, N / 2);

    Ensemble ens;
    ens.grid = grid;
    ens.paths = N;
    ens.base_seed = opt.base_seed;
    ens.scheme = opt.scheme;
    ens.batches = B;

    for (double t : opt.snapshot_times) {
        const auto k = grid.index_of(t);
        if (!k)
            throw std::invalid_argument("snapshot time " + std::to_string(t) +
                                        " is not on the grid");
        ens.snapshots.emplace(*k, Eigen::MatrixXd(Eigen::Index(N), n));
    }
    if (opt.retain_paths)
        ens.retained.resize(N, Path{grid, {}, opt.base_seed, 0});

    std::vector<detail::MomentAccumulator> acc(
        B, detail::MomentAccumulator(n, grid.points()));
    std::vector<std::exception_ptr> failures(B);
    std::atomic<std::size_t> next_batch{0};
    std::atomic<bool> failed{false};

    auto worker = [&] {
        Eigen::MatrixXd states;
        for (;;) {
            const std::size_t b = next_batch.fetch_add(1);
            if (b >= B)
                return;
            const std::size_t first = b * N / B;
            const std::size_t last = (b + 1) * N / B;
            try {
                for (std::size_t p = first; p < last; ++p) {
                    if (failed.load(std::memory_order_relaxed))
                        break;
                    detail::run_path(plan, grid, x0, opt.base_seed, p, states);
                    acc[b].add(states);
                    for (auto &[k, samples] : ens.snapshots)
                        samples.row(Eigen::Index(p)) = states.row(Eigen::Index(k));
                    if (opt.retain_paths) {
                        ens.retained[p].states = states;
                        ens.retained[p].path_index = p;
                    }
                }
            } catch (...) {
                failures[b] = std::current_exception();
                failed = true;
            }
        }
    };

    unsigned threads = opt.threads ? opt.threads : std::thread::hardware_concurrency();
    threads = std::max(1u, std::min<unsigned>(threads, unsigned(B)));
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(threads);
        for (unsigned w = 0; w < threads; ++w)
            pool.emplace_back(worker);
    }
    // Lowest failing batch holds the lowest failing path index.
    for (const auto &f : failures)
        if (f)
            std::rethrow_exception(f);

    detail::MomentAccumulator total(n, grid.points());
    for (const auto &a : acc)
        total.merge(a);

    const auto points = grid.points();
    ens.mean.resize(points);
    ens.cov.resize(points);
    ens.mean_stderr.resize(points);
    ens.cov_stderr.resize(points);
    for (std::size_t k = 0; k < points; ++k) {
        const auto kk = Eigen::Index(k);
        ens.mean[k] = total.mean.col(kk);
        ens.cov[k] = total.covariance(kk);
        ens.mean_stderr[k] = (ens.cov[k].diagonal() / double(N)).cwiseSqrt();

        if (B < 2) {
            ens.cov_stderr[k] = Eigen::MatrixXd::Constant(
                n, n, std::numeric_limits<double>::quiet_NaN());
            continue;
        }
        Eigen::MatrixXd batch_mean = Eigen::MatrixXd::Zero(n, n);
        for (const auto &a : acc)
            batch_mean += a.covariance(kk);
        batch_mean /= double(B);
        Eigen::MatrixXd spread = Eigen::MatrixXd::Zero(n, n);
        for (const auto &a : acc) {
            const Eigen::MatrixXd d = a.covariance(kk) - batch_mean;
            spread += d.cwiseProduct(d);
        }
        ens.cov_stderr[k] = (spread / double(B - 1) / double(B)).cwiseSqrt();
    }
    return ens;
}

inline Ensemble simulate_ensemble(const BilinearSDE &sys, const Eigen::VectorXd &x0,
                                  const TimeGrid &grid, std::size_t paths,
                                  std::uint64_t base_seed,
                                  Scheme scheme = Scheme::EulerMaruyamaOnIto) {
    EnsembleOptions opt;
    opt.paths = paths;
    opt.base_seed = base_seed;
    opt.scheme = scheme;
    return simulate_ensemble(sys, x0, grid, opt);
}

// ---------------------------------------------------------------------------
// Characteristic-function residual
// ---------------------------------------------------------------------------

struct CcfResidual {
    double residual = 0.0;
    double noise_floor = 0.0;
};

/// Forward-difference check of the characteristic-function evolution:
///   residual = [<e^{s.x(t+delta)}> - <e^{s.x(t)}>] / delta - generator(t).
/// Both ensemble terms come from the same paths, so the noise floor is the
/// standard error of the per-path difference.
inline CcfResidual ccf_residual(const BilinearSDE &sys, const Ensemble &ens,
                                const Eigen::VectorXd &s, double t, double delta) {
    if (!(delta > 0.0))
        throw std::invalid_argument("ccf_residual: delta must be positive");
    const BilinearSDE strat = sys.interpretation() == Interpretation::Stratonovich
                                  ? sys
                                  : to_stratonovich(sys);
    const Eigen::MatrixXd &now = ens.samples_at(t);
    const Eigen::MatrixXd &later = ens.samples_at(t + delta);
    const Eigen::VectorXd generator = detail::ccf_integrand(strat.at(t), now, s, t);

    const Eigen::Index N = now.rows();
    Eigen::VectorXd per_path(N);
    for (Eigen::Index k = 0; k < N; ++k) {
        const double e_later = std::exp(later.row(k).dot(s));
        if (!std::isfinite(e_later))
            throw NumericalError("exp(s^T x) overflows at t+delta; choose a smaller |s|",
                                 t + delta);
        per_path(k) = (e_later - std::exp(now.row(k).dot(s))) / delta - generator(k);
    }
    CcfResidual out;
    out.residual = per_path.mean();
    const double var =
        (per_path.array() - out.residual).square().sum() / double(std::max<Eigen::Index>(N - 1, 1));
    out.noise_floor = std::sqrt(var / double(N));
    return out;
}

} // namespace bilinear
