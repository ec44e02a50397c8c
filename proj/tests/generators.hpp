#pragma once

// Random valid parameter draws shared by the property tests.

#include <numbers>
#include <random>

#include "cvenhance/nopa_transfer.hpp"
#include "cvenhance/quadrature_state.hpp"

namespace cvenhance::testing {

class Draw {
public:
    explicit Draw(unsigned long long seed) : rng_(seed) {}

    double uniform(double lo, double hi) { return std::uniform_real_distribution<double>(lo, hi)(rng_); }

    NopaParams geometry() {
        NopaParams n;
        n.gamma1 = uniform(1e-3, 1.0);
        n.gamma2 = uniform(0.0, 0.2);
        n.tau = uniform(1e-10, 1e-8);
        n.kappa = 0.0;
        return n;
    }

    /// Geometry with kappa uniformly below threshold.
    NopaParams nopa(double max_fraction = 0.99) {
        NopaParams n = geometry();
        n.kappa = uniform(0.0, max_fraction) * n.threshold();
        return n;
    }

    MeasurementContext context(double theta_max = std::numbers::pi / 4) {
        return {uniform(0.0, 1.0), uniform(0.0, theta_max), uniform(0.0, 1e8)};
    }

    SqueezingParams squeezing(double r_max = 3.0, double rp_max = 1.0) { return {uniform(0.0, r_max), uniform(0.0, rp_max)}; }

    std::mt19937_64& engine() { return rng_; }

private:
    std::mt19937_64 rng_;
};

}  // namespace cvenhance::testing
