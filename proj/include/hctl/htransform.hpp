#pragma once

#include <string>
#include <variant>

#include "hctl/coefficients.hpp"
#include "hctl/fields.hpp"
#include "hctl/parabolic.hpp"

namespace hctl {

/// h = 1: no model perturbation.
struct UnitH {};
/// h(t,x) = exp(c.x + kappa t) with kappa = -(1/2) c^T a c - mu.c, exact for
/// constant coefficients.
struct AnalyticH {
    Point c;
};
/// h solves dh/dt + L h = 0 backward from a strictly positive terminal datum.
struct NumericH {
    SpaceField terminal;
};
using HKind = std::variant<UnitH, AnalyticH, NumericH>;

std::string kind_name(const HKind& kind);

/// Strictly positive space-time harmonic function h and the drift
/// perturbation b_h = a grad log h it induces.
struct HModel {
    HKind kind;
    SpaceTimeField h;
    VectorField grad_log_h;
    VectorField b_h;
    double kappa = 0.0;  // Analytic only

    bool is_unit() const { return std::holds_alternative<UnitH>(kind); }
    bool has_closed_form() const { return !std::holds_alternative<NumericH>(kind); }
    /// Closed-form h(t,x) for Unit and Analytic kinds; throws for Numeric.
    double value(double t, const Point& x) const;
    /// Closed-form b_h(t,x) = a(t,x) c for Unit and Analytic kinds.
    Point drift(const CoefficientModel& coefficients, double t, const Point& x) const;
};

/// Numeric h is marched with implicit Euler on a zero-flux (Neumann) grid so
/// that every step matrix is an M-matrix; positivity is asserted per level.
/// grad log h uses central differences, one-sided next to the boundary.
HModel make_h(const HKind& kind, const Grids& grids, const CoefficientModel& coefficients);

/// Pointwise residuals of the kernel equation and of the log-h equation
///   d_t w + 1/2 tr(a D^2 w) + mu.grad w + 1/2 grad w^T a grad w = 0,  w = log h,
/// both with central differences in space and the trapezoidal rule in time,
/// at nodes whose stencil stays inside the grid and at every step midpoint.
struct HResiduals {
    SpaceTimeField kernel_over_h;  // (d_t h + L h) / h, level k holds step k (last level unused)
    SpaceTimeField log_equation;
    double kernel_max = 0.0;
    double log_max = 0.0;
    double gap_max = 0.0;  // max |log_equation - kernel_over_h|
};

HResiduals h_residuals(const HModel& hmodel, const Grids& grids, const CoefficientModel& coefficients);

/// Max-norm residual of the log-h equation.
double hjb_residual(const HModel& hmodel, const Grids& grids, const CoefficientModel& coefficients);

/// G + B(b_h). With Unit h the generator is returned unchanged.
DiscreteGenerator perturbed_generator(const HModel& hmodel, const DiscreteGenerator& generator);

const VectorField& drift_field(const HModel& hmodel);

/// Gradient by central differences; one-sided second-order stencils at the
/// first and last node of each axis.
VectorField gradient_one_sided(const SpaceGrid& grid, const SpaceTimeField& f);

}  // namespace hctl
