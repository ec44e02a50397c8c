#pragma once

// Single-stage NOPA quadrature-variance transfer and cascade composition.
//
// A stage is a doubly-resonant cavity with coupler transmissivity gamma1,
// intra-cavity loss gamma2 and parametric coupling kappa (all per round trip).
// De-amplification is assumed locked; theta is the residual pump/seed phase
// jitter, which mixes the anti-correlated output into the measured correlated
// combination.

#include <cmath>
#include <cstddef>
#include <numbers>
#include <string>
#include <vector>

#include "cvenhance/errors.hpp"
#include "cvenhance/quadrature_state.hpp"

namespace cvenhance {

struct NopaParams {
    double gamma1 = 0.0;  ///< coupler transmissivity
    double gamma2 = 0.0;  ///< intra-cavity loss
    double kappa = 0.0;   ///< nonlinear coupling efficiency
    double tau = 0.0;     ///< round-trip time [s]

    double threshold() const noexcept { return gamma1 + gamma2; }

    /// Checks everything except the oscillation threshold, which is mode dependent.
    void validate() const {
        if (!(gamma1 > 0.0 && gamma1 <= 1.0))
            throw DomainError("gamma1 must lie in (0, 1], got " + std::to_string(gamma1));
        if (!(gamma2 >= 0.0 && gamma2 < 1.0))
            throw DomainError("gamma2 must lie in [0, 1), got " + std::to_string(gamma2));
        if (!(tau > 0.0) || !std::isfinite(tau))
            throw DomainError("tau must be positive, got " + std::to_string(tau));
        if (!(kappa >= 0.0) || !std::isfinite(kappa))
            throw DomainError("kappa must be non-negative, got " + std::to_string(kappa));
    }

    void require_below_threshold() const {
        if (kappa >= threshold())
            throw AboveThresholdError("kappa = " + std::to_string(kappa) + " is at or above threshold gamma1 + gamma2 = " +
                                      std::to_string(threshold()));
    }

    friend bool operator==(const NopaParams&, const NopaParams&) = default;
};

struct MeasurementContext {
    double zeta = 1.0;            ///< detection efficiency
    double theta = 0.0;           ///< residual phase fluctuation [rad]
    double analysis_freq_hz = 0;  ///< noise analysis frequency Omega [Hz]

    double angular_frequency() const noexcept { return 2.0 * std::numbers::pi * analysis_freq_hz; }

    void validate() const {
        if (!(zeta >= 0.0 && zeta <= 1.0))
            throw DomainError("zeta must lie in [0, 1], got " + std::to_string(zeta));
        if (!(theta >= 0.0 && theta < std::numbers::pi / 2.0))
            throw DomainError("theta must lie in [0, pi/2), got " + std::to_string(theta));
        if (!(analysis_freq_hz >= 0.0) || !std::isfinite(analysis_freq_hz))
            throw DomainError("analysis frequency must be non-negative, got " + std::to_string(analysis_freq_hz));
    }

    friend bool operator==(const MeasurementContext&, const MeasurementContext&) = default;
};

struct PumpSpec {
    double p_pump = 0.0;       ///< [W]
    double p_threshold = 0.0;  ///< [W]
    double chi = 0.0;

    friend bool operator==(const PumpSpec&, const PumpSpec&) = default;
};

enum class ModelMode {
    StrictPaper,  ///< transfer expression exactly as originally printed
    Physical,     ///< vacuum-preserving form, validated against the Langevin oracle
};

/// kappa = beta * chi with beta = sqrt(P / P_th).
inline double kappa_from_pump(const PumpSpec& p) {
    if (!(p.p_threshold > 0.0))
        throw DomainError("kappa_from_pump: p_threshold must be positive, got " + std::to_string(p.p_threshold));
    if (!(p.p_pump >= 0.0))
        throw DomainError("kappa_from_pump: p_pump must be non-negative, got " + std::to_string(p.p_pump));
    if (!(p.chi > 0.0))
        throw DomainError("kappa_from_pump: chi must be positive, got " + std::to_string(p.chi));
    return std::sqrt(p.p_pump / p.p_threshold) * p.chi;
}

namespace detail {

// One quadrature-combination bracket of the transfer expression:
//   zeta * (2 * num / den * e + 2 * 4 g1 g2 / den) + vacuum
// where `e` is e^{-2r} or e^{2r+2r'}.
struct BranchTerms {
    double num;
    double den;
    double loss;
};

// gain > 0 de-amplifies (correlated branch), gain < 0 amplifies.
inline BranchTerms branch_terms(const NopaParams& n, double omega_tau, double gain, double omega_sign = 1.0) {
    const double s2 = omega_tau * omega_tau;
    const double den = (gain + n.gamma1 + n.gamma2) * (gain + n.gamma1 + n.gamma2) + s2;
    const double num = (-gain + n.gamma1 - n.gamma2) * (-gain + n.gamma1 - n.gamma2) + omega_sign * s2;
    const double loss = 4.0 * n.gamma1 * n.gamma2 / den;
    return {num, den, loss};
}

inline double bracket(const BranchTerms& t, double e, double zeta, double vacuum) {
    return zeta * (2.0 * t.num / t.den * e + 2.0 * t.loss) + vacuum;
}

inline void check_inputs(const NopaParams& nopa, const MeasurementContext& ctx) {
    nopa.validate();
    ctx.validate();
}

}  // namespace detail

/// Output correlated-combination variance <d^2(X1+X2)> = <d^2(Y1-Y2)>.
///
/// StrictPaper evaluates the printed expression verbatim: vacuum admixture
/// (1 - zeta) and a -(omega tau)^2 in the jitter term's numerator, both sharing
/// the de-amplified denominator.
///
/// Physical uses vacuum admixture 2(1 - zeta) and lets the cos^2(theta) and
/// sin^2(theta) terms see the de-amplified and amplified cavity transfers
/// respectively; it rejects kappa >= gamma1 + gamma2.
inline double correlation_out(const SqueezingParams& in, const NopaParams& nopa, const MeasurementContext& ctx,
                              ModelMode mode = ModelMode::Physical) {
    detail::check_inputs(nopa, ctx);
    const double wt = ctx.angular_frequency() * nopa.tau;
    const double e_corr = std::exp(-2.0 * in.r);
    const double e_anti = std::exp(2.0 * in.r + 2.0 * in.r_prime);
    const double c2 = std::cos(ctx.theta) * std::cos(ctx.theta);
    const double s2 = std::sin(ctx.theta) * std::sin(ctx.theta);

    if (mode == ModelMode::StrictPaper) {
        const auto first = detail::branch_terms(nopa, wt, nopa.kappa, +1.0);
        const auto second = detail::branch_terms(nopa, wt, nopa.kappa, -1.0);
        const double vac = 1.0 - ctx.zeta;
        return detail::bracket(first, e_corr, ctx.zeta, vac) * c2 + detail::bracket(second, e_anti, ctx.zeta, vac) * s2;
    }

    nopa.require_below_threshold();
    const auto deamp = detail::branch_terms(nopa, wt, nopa.kappa);
    const auto amp = detail::branch_terms(nopa, wt, -nopa.kappa);
    const double vac = 2.0 * (1.0 - ctx.zeta);
    return detail::bracket(deamp, e_corr, ctx.zeta, vac) * c2 + detail::bracket(amp, e_anti, ctx.zeta, vac) * s2;
}

/// Output anti-correlated variance <d^2(X1-X2)> = <d^2(Y1+Y2)>: the
/// kappa -> -kappa dual of correlation_out with the input exponents exchanged.
inline double anticorrelation_out(const SqueezingParams& in, const NopaParams& nopa, const MeasurementContext& ctx,
                                  ModelMode mode = ModelMode::Physical) {
    detail::check_inputs(nopa, ctx);
    nopa.require_below_threshold();
    const double wt = ctx.angular_frequency() * nopa.tau;
    const double e_corr = std::exp(-2.0 * in.r);
    const double e_anti = std::exp(2.0 * in.r + 2.0 * in.r_prime);
    const double c2 = std::cos(ctx.theta) * std::cos(ctx.theta);
    const double s2 = std::sin(ctx.theta) * std::sin(ctx.theta);

    if (mode == ModelMode::StrictPaper) {
        const auto first = detail::branch_terms(nopa, wt, -nopa.kappa, +1.0);
        const auto second = detail::branch_terms(nopa, wt, -nopa.kappa, -1.0);
        const double vac = 1.0 - ctx.zeta;
        return detail::bracket(first, e_anti, ctx.zeta, vac) * c2 + detail::bracket(second, e_corr, ctx.zeta, vac) * s2;
    }

    const auto amp = detail::branch_terms(nopa, wt, -nopa.kappa);
    const auto deamp = detail::branch_terms(nopa, wt, nopa.kappa);
    const double vac = 2.0 * (1.0 - ctx.zeta);
    return detail::bracket(amp, e_anti, ctx.zeta, vac) * c2 + detail::bracket(deamp, e_corr, ctx.zeta, vac) * s2;
}

inline EprState stage_map(const EprState& input, const NopaParams& nopa, const MeasurementContext& ctx,
                          ModelMode mode = ModelMode::Physical) {
    const SqueezingParams sq = squeezing_from_variances(input);
    return {correlation_out(sq, nopa, ctx, mode), anticorrelation_out(sq, nopa, ctx, mode)};
}

struct Stage {
    NopaParams nopa;
    MeasurementContext ctx;

    friend bool operator==(const Stage&, const Stage&) = default;
};

using CascadeConfig = std::vector<Stage>;

/// Element i is the state after stage i; the last element is the detected output.
/// Any failure is rethrown as StageError carrying the 1-based stage index.
inline std::vector<EprState> cascade(const EprState& input, const CascadeConfig& config,
                                     ModelMode mode = ModelMode::Physical) {
    if (config.empty()) throw DomainError("cascade: configuration has no stages");
    std::vector<EprState> out;
    out.reserve(config.size());
    EprState state = input;
    for (std::size_t i = 0; i < config.size(); ++i) {
        try {
            state = stage_map(state, config[i].nopa, config[i].ctx, mode);
        } catch (const StageError&) {
            throw;
        } catch (const std::exception& e) {
            throw StageError(i + 1, e.what());
        }
        out.push_back(state);
    }
    return out;
}

}  // namespace cvenhance
