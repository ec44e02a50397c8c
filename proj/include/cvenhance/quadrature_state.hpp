#pragma once

// Two-mode EPR states summarised by their quadrature-combination variances.
//
// Convention: each vacuum quadrature has variance 1, so the variance of a
// two-mode sum or difference of vacuum quadratures (the quantum noise limit,
// QNL) is 2. All variances in this library are expressed in these units.

#include <cmath>
#include <string>

#include "cvenhance/errors.hpp"

namespace cvenhance {

inline constexpr double kQnl = 2.0;

/// Signed decibels relative to the QNL (negative = below QNL).
struct Decibels {
    double db = 0.0;

    friend constexpr bool operator==(Decibels, Decibels) = default;
};

/// Squeezing parameter r and extra anti-correlation noise factor r'.
struct SqueezingParams {
    double r = 0.0;
    double r_prime = 0.0;

    friend constexpr bool operator==(const SqueezingParams&, const SqueezingParams&) = default;
};

/// Variances of the correlated combinations <d^2(X1+X2)> = <d^2(Y1-Y2)>
/// and the anti-correlated combinations <d^2(X1-X2)> = <d^2(Y1+Y2)>.
class EprState {
public:
    /// Throws DomainError for non-positive variances and UncertaintyViolation
    /// if v_corr * v_anti < 4 (beyond a relative slack of 1e-12 for rounding).
    EprState(double v_corr, double v_anti) : v_corr_(v_corr), v_anti_(v_anti) {
        if (!(v_corr > 0.0) || !(v_anti > 0.0) || !std::isfinite(v_corr) || !std::isfinite(v_anti))
            throw DomainError("EprState: variances must be positive and finite (v_corr=" +
                              std::to_string(v_corr) + ", v_anti=" + std::to_string(v_anti) + ")");
        if (v_corr * v_anti < 4.0 * (1.0 - 1e-12))
            throw UncertaintyViolation("EprState: v_corr * v_anti = " + std::to_string(v_corr * v_anti) +
                                       " < 4 (unphysical state)");
    }

    static EprState vacuum() { return {kQnl, kQnl}; }

    double v_corr() const noexcept { return v_corr_; }
    double v_anti() const noexcept { return v_anti_; }

    friend bool operator==(const EprState&, const EprState&) = default;

private:
    double v_corr_;
    double v_anti_;
};

inline Decibels variance_to_db(double v) {
    if (!(v > 0.0))
        throw DomainError("variance_to_db: variance must be positive, got " + std::to_string(v));
    return {10.0 * std::log10(v / kQnl)};
}

inline double db_to_variance(Decibels d) { return kQnl * std::pow(10.0, d.db / 10.0); }

/// v_corr = 2 e^{-2r}, v_anti = 2 e^{2r + 2r'}.
inline EprState variances_from_squeezing(SqueezingParams s) {
    return {kQnl * std::exp(-2.0 * s.r), kQnl * std::exp(2.0 * s.r + 2.0 * s.r_prime)};
}

inline SqueezingParams squeezing_from_variances(const EprState& s) {
    // EprState already rejects these; re-checked because the relative slack
    // above may admit a product a hair under 4.
    if (s.v_corr() * s.v_anti() < 4.0 * (1.0 - 1e-12))
        throw UncertaintyViolation("squeezing_from_variances: v_corr * v_anti < 4");
    const double r = -0.5 * std::log(s.v_corr() / kQnl);
    const double r_prime = 0.5 * std::log(s.v_anti() / kQnl) - r;
    return {r, r_prime};
}

struct DuanResult {
    double sum = 0.0;
    bool entangled = false;
};

/// Inseparability criterion: amplitude-sum plus phase-difference variance.
/// Both equal v_corr here. Entangled iff the sum is strictly below 4.
inline DuanResult duan_sum(const EprState& s) {
    const double sum = 2.0 * s.v_corr();
    return {sum, sum < 4.0};
}

}  // namespace cvenhance
