#pragma once

#include <stdexcept>
#include <string>

namespace cutin {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad input: out-of-range parameters, malformed files, unknown keys.
class ValidationError : public Error {
public:
    using Error::Error;
};

// Evaluation outside the domain of a function (e.g. W_k(0) for k != 0).
class DomainError : public Error {
public:
    using Error::Error;
};

class NumericalError : public Error {
public:
    NumericalError(const std::string& what, double residual)
        : Error(what), residual_(residual) {}
    double residual() const noexcept { return residual_; }

private:
    double residual_;
};

class DefectiveMatrixError : public NumericalError {
public:
    DefectiveMatrixError(const std::string& what, double condition)
        : NumericalError(what, condition), condition_(condition) {}
    double condition_estimate() const noexcept { return condition_; }

private:
    double condition_;
};

// Failure of one branch solve; keeps the branch index for scan reports.
class BranchSolveError : public NumericalError {
public:
    BranchSolveError(const std::string& what, int k, double residual)
        : NumericalError(what, residual), k_(k) {}
    int branch() const noexcept { return k_; }

private:
    int k_;
};

}  // namespace cutin
