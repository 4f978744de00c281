#pragma once

#include <stdexcept>
#include <string>
#include <utility>

#include <Eigen/Core>

namespace hctl {

/// Base class for every failure raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
    virtual const char* kind() const noexcept { return "error"; }
};

/// Grid extents or node counts that cannot describe a discretization.
class SizingError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "sizing"; }
};

/// A caller-supplied argument violates an operation precondition.
class PreconditionError : public Error {
public:
    using Error::Error;
    const char* kind() const noexcept override { return "precondition"; }
};

/// Scenario parsing or validation failure; `field` is the dotted key path.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& message)
        : Error(field.empty() ? message : field + ": " + message), field_(std::move(field)) {}
    const char* kind() const noexcept override { return "config"; }
    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

/// A linear solve inside a time step failed. `step` is the time-step index.
class SolverError : public Error {
public:
    SolverError(const std::string& message, int step) : Error(message), step_(step) {}
    const char* kind() const noexcept override { return "solver"; }
    int step() const noexcept { return step_; }

private:
    int step_;
};

/// An iterative method ran out of iterations. Carries the best iterate seen.
class ConvergenceError : public Error {
public:
    ConvergenceError(const std::string& message, Eigen::VectorXd best, double residual, int iterations)
        : Error(message), best_(std::move(best)), residual_(residual), iterations_(iterations) {}
    const char* kind() const noexcept override { return "convergence"; }
    const Eigen::VectorXd& best_iterate() const noexcept { return best_; }
    double residual() const noexcept { return residual_; }
    int iterations() const noexcept { return iterations_; }

private:
    Eigen::VectorXd best_;
    double residual_;
    int iterations_;
};

}  // namespace hctl
