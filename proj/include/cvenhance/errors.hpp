#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace cvenhance {

/// Argument outside the domain of a model function (non-positive variance, bad threshold...).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Input variances violate v_corr * v_anti >= 4.
class UncertaintyViolation : public DomainError {
public:
    using DomainError::DomainError;
};

/// Parametric coupling at or above the oscillation threshold kappa = gamma1 + gamma2.
class AboveThresholdError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Failure inside one stage of a cascade. Stage indices are 1-based.
class StageError : public DomainError {
public:
    StageError(std::size_t stage, const std::string& what)
        : DomainError("stage " + std::to_string(stage) + ": " + what), stage_(stage) {}

    std::size_t stage() const noexcept { return stage_; }

private:
    std::size_t stage_;
};

}  // namespace cvenhance
