#pragma once

// Analyses over the single-stage transfer: enhancement turning points, pump
// (kappa) fitting and optimisation, chain fitting, gamma1 x gamma2 sweeps and
// the reduced-loss projection.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <exception>
#include <string>
#include <thread>
#include <vector>

#include "cvenhance/detail/solvers.hpp"
#include "cvenhance/errors.hpp"
#include "cvenhance/nopa_transfer.hpp"
#include "cvenhance/quadrature_state.hpp"

namespace cvenhance {

inline constexpr double kSolverTolerance = 1e-9;
inline constexpr double kFitConvergedDb = 0.05;
inline constexpr double kOptimizerMargin = 1e-6;
inline constexpr std::size_t kKappaScanSamples = 512;

// ---------------------------------------------------------------- turning point

enum class FixedPointStatus {
    Converged,
    NoCrossing,  ///< output - input keeps one sign over the whole r bracket
    Degenerate,  ///< the stage is the identity map; every input is fixed
};

struct FixedPointResult {
    FixedPointStatus status = FixedPointStatus::NoCrossing;
    double v_star = 0.0;
    Decibels db_star{};
    double r_star = 0.0;
    int iterations = 0;
    double bracket = 0.0;

    bool converged() const noexcept { return status == FixedPointStatus::Converged; }
};

inline constexpr double kTurningPointRMax = 10.0;

/// Input correlation variance at which the stage output equals its input, with
/// the input family parameterised by r at fixed r'. Bisection on r in [0, 10].
inline FixedPointResult turning_point(const NopaParams& nopa, const MeasurementContext& ctx, double r_prime,
                                      ModelMode mode = ModelMode::Physical) {
    if (!(r_prime >= 0.0)) throw DomainError("turning_point: r_prime must be non-negative");
    auto v_in = [](double r) { return kQnl * std::exp(-2.0 * r); };
    auto gap = [&](double r) { return correlation_out({r, r_prime}, nopa, ctx, mode) - v_in(r); };

    bool identity = true;
    for (int i = 0; i <= 16 && identity; ++i) {
        const double r = kTurningPointRMax * i / 16.0;
        identity = std::abs(gap(r)) <= 1e-12 * v_in(r);
    }
    FixedPointResult res;
    if (identity) {
        res.status = FixedPointStatus::Degenerate;
        return res;
    }

    const auto root = detail::bisect(gap, 0.0, kTurningPointRMax, 1e-14);
    res.iterations = root.iterations;
    res.bracket = root.bracket;
    if (root.status != detail::RootStatus::Converged) {
        res.status = FixedPointStatus::NoCrossing;
        return res;
    }
    res.status = FixedPointStatus::Converged;
    res.r_star = root.x;
    res.v_star = v_in(root.x);
    res.db_star = variance_to_db(res.v_star);
    return res;
}

// ---------------------------------------------------------------- kappa fitting

struct FitResult {
    double kappa_fit = 0.0;
    double residual_db = 0.0;
    bool converged = false;
};

namespace detail {

inline double kappa_upper(const NopaParams& n) { return n.threshold() * (1.0 - 1e-12); }

inline NopaParams with_kappa(NopaParams n, double kappa) {
    n.kappa = kappa;
    return n;
}

}  // namespace detail

/// Finds kappa in [0, gamma1 + gamma2) such that the stage maps `input` to a
/// correlated variance of `target`. When several kappa reach the target, the
/// smallest (least pump) is returned. Not converged if the residual exceeds 0.05 dB.
inline FitResult fit_kappa(Decibels target, const EprState& input, const NopaParams& geometry,
                           const MeasurementContext& ctx, ModelMode mode = ModelMode::Physical) {
    geometry.validate();
    const SqueezingParams sq = squeezing_from_variances(input);
    auto err = [&](double k) {
        return variance_to_db(correlation_out(sq, detail::with_kappa(geometry, k), ctx, mode)).db - target.db;
    };
    auto abs_err = [&](double k) { return std::abs(err(k)); };

    const double hi = detail::kappa_upper(geometry);
    const auto s = detail::scan(err, 0.0, hi, kKappaScanSamples);

    double a = 0.0, b = 0.0;
    bool bracketed = false;
    for (std::size_t i = 0; i + 1 < s.x.size(); ++i) {
        if (s.fx[i] == 0.0 || (s.fx[i] < 0.0) != (s.fx[i + 1] < 0.0)) {
            a = s.x[i];
            b = s.x[i + 1];
            bracketed = true;
            break;
        }
    }
    if (!bracketed) {
        std::size_t best = 0;
        for (std::size_t i = 1; i < s.x.size(); ++i)
            if (std::abs(s.fx[i]) < std::abs(s.fx[best])) best = i;
        a = s.x[best == 0 ? 0 : best - 1];
        b = s.x[std::min(best + 1, s.x.size() - 1)];
    }

    const auto m = detail::golden_section(abs_err, a, b, kSolverTolerance);
    return {m.x, m.fx, m.fx <= kFitConvergedDb};
}

struct OptimalKappa {
    double kappa_opt = 0.0;
    double v_out_min = 0.0;
};

/// Pump coupling minimising the output correlated variance over [0, gamma1 + gamma2 - 1e-6].
inline OptimalKappa optimal_kappa(const EprState& input, const NopaParams& geometry, const MeasurementContext& ctx,
                                  ModelMode mode = ModelMode::Physical) {
    geometry.validate();
    const SqueezingParams sq = squeezing_from_variances(input);
    auto out = [&](double k) { return correlation_out(sq, detail::with_kappa(geometry, k), ctx, mode); };
    const double hi = geometry.threshold() - kOptimizerMargin;
    if (!(hi > 0.0)) return {0.0, out(0.0)};
    const auto m = detail::scan_minimize(out, 0.0, hi, kSolverTolerance, kKappaScanSamples);
    return {m.x, m.fx};
}

/// measured[0] is taken as the first stage's output. stages[i] maps
/// measured[i] to measured[i + 1], so stages.size() == measured.size() - 1.
inline std::vector<FitResult> fit_chain(const std::vector<EprState>& measured, const std::vector<Stage>& stages,
                                        ModelMode mode = ModelMode::Physical) {
    if (measured.size() < 2) throw DomainError("fit_chain: need at least two measured states");
    if (stages.size() + 1 != measured.size())
        throw DomainError("fit_chain: expected " + std::to_string(measured.size() - 1) + " stage geometries, got " +
                          std::to_string(stages.size()));
    std::vector<FitResult> fits;
    fits.reserve(stages.size());
    for (std::size_t i = 0; i < stages.size(); ++i) {
        try {
            fits.push_back(fit_kappa(variance_to_db(measured[i + 1].v_corr()), measured[i], stages[i].nopa,
                                     stages[i].ctx, mode));
        } catch (const std::exception& e) {
            throw StageError(i + 2, e.what());
        }
    }
    return fits;
}

// ---------------------------------------------------------------- sweeps

enum class KappaPolicy {
    Fixed,    ///< use the template's kappa in every cell
    Optimal,  ///< optimise kappa per cell
    ThresholdFraction,  ///< hold kappa / (gamma1 + gamma2) at the template's ratio
};

struct SweepCell {
    double kappa = 0.0;
    double v_corr = 0.0;
    Decibels db{};
};

struct SweepGrid {
    std::vector<double> gamma1_axis;
    std::vector<double> gamma2_axis;
    std::vector<SweepCell> cells;  ///< row-major, gamma1 outer

    // held parameters
    EprState input;
    NopaParams base;
    MeasurementContext ctx;
    KappaPolicy policy = KappaPolicy::Fixed;

    const SweepCell& at(std::size_t i1, std::size_t i2) const { return cells[i1 * gamma2_axis.size() + i2]; }
};

namespace detail {

inline void require_axis(const std::vector<double>& axis, const char* name) {
    if (axis.empty()) throw DomainError(std::string("sweep_gamma: ") + name + " axis is empty");
    for (std::size_t i = 1; i < axis.size(); ++i)
        if (!(axis[i] > axis[i - 1]))
            throw DomainError(std::string("sweep_gamma: ") + name + " axis is not strictly increasing");
}

}  // namespace detail

/// Output correlated variance over a gamma1 x gamma2 grid. Rows are computed
/// in parallel when `workers` != 1 (0 = hardware concurrency); the result is
/// independent of scheduling.
inline SweepGrid sweep_gamma(const EprState& input, const NopaParams& base, const MeasurementContext& ctx,
                             KappaPolicy policy, const std::vector<double>& g1_axis,
                             const std::vector<double>& g2_axis, ModelMode mode = ModelMode::Physical,
                             unsigned workers = 0) {
    detail::require_axis(g1_axis, "gamma1");
    detail::require_axis(g2_axis, "gamma2");
    const SqueezingParams sq = squeezing_from_variances(input);

    SweepGrid grid{g1_axis, g2_axis, std::vector<SweepCell>(g1_axis.size() * g2_axis.size()), input, base, ctx,
                   policy};
    std::vector<std::exception_ptr> row_error(g1_axis.size());

    auto run_row = [&](std::size_t i) {
        for (std::size_t j = 0; j < g2_axis.size(); ++j) {
            NopaParams n = base;
            n.gamma1 = g1_axis[i];
            n.gamma2 = g2_axis[j];
            try {
                n.validate();
                if (policy == KappaPolicy::Optimal) n.kappa = optimal_kappa(input, n, ctx, mode).kappa_opt;
                if (policy == KappaPolicy::ThresholdFraction) n.kappa = base.kappa / base.threshold() * n.threshold();
                const double v = correlation_out(sq, n, ctx, mode);
                if (!std::isfinite(v) || !(v > 0.0)) throw DomainError("non-finite or non-positive output variance");
                grid.cells[i * g2_axis.size() + j] = {n.kappa, v, variance_to_db(v)};
            } catch (const std::exception& e) {
                row_error[i] = std::make_exception_ptr(
                    DomainError("sweep_gamma: cell (" + std::to_string(i) + ", " + std::to_string(j) +
                                ") gamma1=" + std::to_string(n.gamma1) + " gamma2=" + std::to_string(n.gamma2) +
                                ": " + e.what()));
                return;
            }
        }
    };

    unsigned n_workers = workers == 0 ? std::max(1u, std::thread::hardware_concurrency()) : workers;
    n_workers = std::min<unsigned>(n_workers, static_cast<unsigned>(g1_axis.size()));
    if (n_workers <= 1) {
        for (std::size_t i = 0; i < g1_axis.size(); ++i) run_row(i);
    } else {
        std::vector<std::jthread> pool;
        pool.reserve(n_workers);
        for (unsigned w = 0; w < n_workers; ++w)
            pool.emplace_back([&, w] {
                for (std::size_t i = w; i < g1_axis.size(); i += n_workers) run_row(i);
            });
    }
    for (const auto& e : row_error)
        if (e) std::rethrow_exception(e);
    return grid;
}

/// Evenly spaced axis of `steps` points over [lo, hi] (a single point at lo when steps == 1).
inline std::vector<double> linear_axis(double lo, double hi, std::size_t steps) {
    if (steps == 0) throw DomainError("linear_axis: steps must be positive");
    std::vector<double> axis(steps);
    for (std::size_t i = 0; i < steps; ++i)
        axis[i] = steps == 1 ? lo : (i + 1 == steps ? hi : lo + (hi - lo) * static_cast<double>(i) / (steps - 1));
    return axis;
}

// ---------------------------------------------------------------- projection

enum class ProjectionPolicy {
    Reoptimize,  ///< choose the best kappa for the improved cavity
    HoldPump,    ///< keep the base kappa (same pump power and crystal)
};

/// Output of a stage whose intra-cavity loss is reduced to `improved_gamma2`.
inline Decibels projection_improved_loss(const EprState& input, const NopaParams& base, double improved_gamma2,
                                         const MeasurementContext& ctx, ModelMode mode = ModelMode::Physical,
                                         ProjectionPolicy policy = ProjectionPolicy::Reoptimize) {
    if (improved_gamma2 > base.gamma2)
        throw DomainError("projection_improved_loss: improved gamma2 " + std::to_string(improved_gamma2) +
                          " exceeds base gamma2 " + std::to_string(base.gamma2));
    NopaParams improved = base;
    improved.gamma2 = improved_gamma2;
    if (policy == ProjectionPolicy::Reoptimize) return variance_to_db(optimal_kappa(input, improved, ctx, mode).v_out_min);
    return variance_to_db(correlation_out(squeezing_from_variances(input), improved, ctx, mode));
}

}  // namespace cvenhance
