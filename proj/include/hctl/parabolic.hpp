#pragma once

#include <memory>
#include <vector>

#include <Eigen/SparseCore>
#include <Eigen/SparseLU>

#include "hctl/coefficients.hpp"
#include "hctl/fields.hpp"
#include "hctl/mesh.hpp"

namespace hctl {

using SparseMatrix = Eigen::SparseMatrix<double>;

/// First-derivative stencil. Central switches to upwind row by row where the
/// cell Peclet number |m| dx / (a_ii/2) exceeds 2, unless auto_upwind is off.
enum class Stencil { Central, Upwind };
enum class BoundaryKind { Dirichlet, Neumann };

struct GeneratorOptions {
    double theta = 0.5;
    Stencil stencil = Stencil::Central;
    bool auto_upwind = true;
    BoundaryKind boundary = BoundaryKind::Dirichlet;
};

/// What the assembler did with the first-derivative stencil.
struct StencilLog {
    long upwind_rows = 0;  // (step, node, axis) triples that were upwinded
    double max_peclet = 0.0;
};

/// Sparse N x N matrices G(t_k + theta dt), one per time step, approximating
/// 1/2 tr(a D^2) + (mu + b) . grad with the boundary eliminated.
class DiscreteGenerator {
public:
    DiscreteGenerator(Grids grids, GeneratorOptions options, std::shared_ptr<const CoefficientModel> coefficients,
                      std::vector<SparseMatrix> matrices, StencilLog log);

    const Grids& grids() const { return grids_; }
    const GeneratorOptions& options() const { return options_; }
    const std::shared_ptr<const CoefficientModel>& coefficients() const { return coefficients_; }
    bool time_invariant() const { return matrices_.size() == 1; }
    /// Matrix used for step k (from t_k to t_{k+1}).
    const SparseMatrix& step_matrix(int k) const { return matrices_[time_invariant() ? 0 : k]; }
    const std::vector<SparseMatrix>& matrices() const { return matrices_; }
    const StencilLog& stencil_log() const { return log_; }

private:
    Grids grids_;
    GeneratorOptions options_;
    std::shared_ptr<const CoefficientModel> coefficients_;
    std::vector<SparseMatrix> matrices_;
    StencilLog log_;
};

/// Assembles the generator. `extra_drift`, when given, is a drift
/// perturbation sampled at every time level (one component per axis); it is
/// interpolated to the step sample times and added to mu.
DiscreteGenerator assemble_generator(const Grids& grids, std::shared_ptr<const CoefficientModel> coefficients,
                                     const GeneratorOptions& options = {},
                                     const VectorField* extra_drift = nullptr);

/// Matrix of the generator at one time with a given per-node drift
/// perturbation (empty = none). Exposed for diagnostics and tests.
SparseMatrix assemble_generator_matrix(const SpaceGrid& grid, const CoefficientModel& coefficients, double t,
                                       const GeneratorOptions& options, const std::vector<Point>& extra_drift,
                                       StencilLog& log);

/// Theta-scheme time stepper with cached factorizations.
///
/// Forward step k:
///   (I - theta dt G_k) y_{k+1} = (I + (1-theta) dt G_k) y_k + dt (theta s_{k+1} + (1-theta) s_k).
///
/// The backward march uses the transposed step matrices in reverse order, so
/// with the node-level inner products
///   <y(T; s), v>_Omega + <y(s), r>_{(0,T)xOmega} = <s, p(r, v)>_{(0,T)xOmega}
/// holds to round-off for every source s, rhs r and terminal datum v. The
/// returned p carries the endpoint quadrature of the source: p_0 and p_M see
/// only their (1-theta) and theta share.
class ThetaScheme {
public:
    explicit ThetaScheme(DiscreteGenerator generator);

    const DiscreteGenerator& generator() const { return generator_; }
    const Grids& grids() const { return generator_.grids(); }
    double theta() const { return generator_.options().theta; }

    /// dy/dt = L y + source, y(0) = initial.
    SpaceTimeField solve_forward(const SpaceTimeField& source, const SpaceField& initial) const;
    /// -dp/dt = L^T p + rhs with terminal datum v: the exact discrete adjoint of solve_forward.
    SpaceTimeField solve_backward(const SpaceTimeField& rhs, const SpaceField& terminal) const;
    /// Kolmogorov backward equation dw/dt + L w = 0, w(T) = terminal,
    /// marched with the same theta scheme (non-transposed).
    SpaceTimeField solve_terminal_value(const SpaceField& terminal) const;

private:
    struct Step {
        Eigen::SparseLU<SparseMatrix> implicit;    // I - theta dt G
        Eigen::SparseLU<SparseMatrix> implicit_t;  // (I - theta dt G)^T
        SparseMatrix explicit_part;                // I + (1-theta) dt G
        SparseMatrix explicit_part_t;
    };
    const Step& step(int k) const { return *steps_[generator_.time_invariant() ? 0 : k]; }

    DiscreteGenerator generator_;
    std::vector<std::unique_ptr<Step>> steps_;
};

}  // namespace hctl
