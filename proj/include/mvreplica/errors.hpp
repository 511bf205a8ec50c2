#pragma once

#include <array>
#include <stdexcept>
#include <string>
#include <utility>

namespace mvreplica {

/// Argument outside the mathematical domain of an operation.
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

/// Where a requested aspect ratio sits relative to a phase boundary.
enum class PhaseBoundary {
    Critical,  ///< exactly at the critical ratio
    Beyond,    ///< past it, no saddle point exists
};

/// The saddle point does not exist at the requested ratio.
class PhaseError : public std::runtime_error {
public:
    PhaseError(PhaseBoundary where, double r, double r_critical, const std::string& what)
        : std::runtime_error(what), where_(where), r_(r), r_critical_(r_critical) {}

    PhaseBoundary where() const noexcept { return where_; }
    double r() const noexcept { return r_; }
    double r_critical() const noexcept { return r_critical_; }

    /// Short machine-readable reason code.
    const char* reason_code() const noexcept {
        return where_ == PhaseBoundary::Critical ? "critical-boundary" : "beyond-critical";
    }

private:
    PhaseBoundary where_;
    double r_;
    double r_critical_;
};

/// Iterative solver ran out of budget; carries the final residuals.
class NoConvergence : public std::runtime_error {
public:
    NoConvergence(const std::string& what, std::array<double, 3> residuals)
        : std::runtime_error(what), residuals_(residuals) {}

    const std::array<double, 3>& residuals() const noexcept { return residuals_; }

private:
    std::array<double, 3> residuals_;
};

/// Input matrix violates symmetry or positive semidefiniteness.
class MatrixError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Quadratic-programming solver failure (e.g. active-set loop did not terminate).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mvreplica
