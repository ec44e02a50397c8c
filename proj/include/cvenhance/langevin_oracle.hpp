#pragma once

// Frequency-domain input-output solution of the linearised Langevin equations
// for a below-threshold NOPA, reduced to squared transfer magnitudes.
//
// For the quadrature combination that sees parametric gain g (g = +kappa for
// the de-amplified, correlated combination; g = -kappa for the amplified one):
//
//   out(w) = [(gamma1 - gamma2 - g) + i w tau] / [(gamma1 + gamma2 + g) - i w tau] * in(w)
//          + 2 sqrt(gamma1 gamma2) / [(gamma1 + gamma2 + g) - i w tau] * loss_vacuum(w)
//
// Only |.|^2 of each coefficient is needed, so everything stays real.
// This is an independent check on nopa_transfer.hpp and shares no code with it.

#include <string>

#include "cvenhance/errors.hpp"
#include "cvenhance/nopa_transfer.hpp"
#include "cvenhance/quadrature_state.hpp"

namespace cvenhance::oracle {

enum class Branch : int {
    DeAmplified = +1,  // correlated combinations
    Amplified = -1,    // anti-correlated combinations
};

struct TransferCoefficients {
    double refl_sq = 0.0;
    double loss_sq = 0.0;
    Branch sign = Branch::DeAmplified;
};

/// `omega` is the angular analysis frequency 2 pi Omega.
inline TransferCoefficients transfer(const NopaParams& nopa, double omega, Branch sign) {
    nopa.validate();
    if (nopa.kappa >= nopa.gamma1 + nopa.gamma2)
        throw AboveThresholdError("oracle::transfer: kappa at or above gamma1 + gamma2");

    const double g = static_cast<int>(sign) * nopa.kappa;
    const double x = omega * nopa.tau;
    const double decay = nopa.gamma1 + nopa.gamma2 + g;
    const double reflect = nopa.gamma1 - nopa.gamma2 - g;
    const double denom = decay * decay + x * x;

    TransferCoefficients t;
    t.refl_sq = (reflect * reflect + x * x) / denom;
    t.loss_sq = 4.0 * nopa.gamma1 * nopa.gamma2 / denom;
    t.sign = sign;
    return t;
}

/// Input combination attenuated or amplified through the coupler, plus the
/// vacuum (variance 2 per two-mode combination) entering via the loss port.
inline double output_variance(double v_in, const NopaParams& nopa, double omega, Branch sign) {
    if (!(v_in > 0.0)) throw DomainError("oracle::output_variance: v_in must be positive");
    const auto t = transfer(nopa, omega, sign);
    return t.refl_sq * v_in + t.loss_sq * kQnl;
}

}  // namespace cvenhance::oracle
