#pragma once

#include <memory>
#include <vector>

#include "hctl/fields.hpp"
#include "hctl/mesh.hpp"
#include "hctl/parabolic.hpp"

namespace hctl {

struct CgOptions {
    double tol = 1e-10;
    int max_iters = 500;
};

/// The follower's tracking problem. The follower always works with the
/// nominal (unperturbed) model.
struct FollowerProblem {
    double beta = 1.0;
    SpaceTimeField y_rf;
    SubdomainMask u1_mask;
    SubdomainMask u2_mask;
    std::shared_ptr<const ThetaScheme> model;
    CgOptions cg;

    const Grids& grids() const { return model->grids(); }
};

/// Throws PreconditionError unless beta > 0, masks are disjoint and shapes agree.
void validate(const FollowerProblem& problem);

struct FollowerSolution {
    SpaceTimeField u2_star;
    SpaceTimeField y;
    SpaceTimeField p;
    double kkt_residual = 0.0;
    int cg_iterations = 0;
    double J2 = 0.0;
    /// J2 after every CG iterate.
    std::vector<double> j2_history;
};

/// y for the source u1 chi_U1 + u2 chi_U2, zero initial data.
SpaceTimeField solve_state(const FollowerProblem& problem, const SpaceTimeField& u1, const SpaceTimeField& u2);
/// p for the rhs y - y_rf, zero terminal data.
SpaceTimeField solve_adjoint(const FollowerProblem& problem, const SpaceTimeField& y);
/// Best response u2* = argmin J2(u1, .), computed by CG on the reduced
/// normal equations (beta + chi F* F chi) u2 = -chi F*(F chi_U1 u1 - y_rf).
/// Throws ConvergenceError carrying the best iterate if CG stalls.
FollowerSolution best_response(const FollowerProblem& problem, const SpaceTimeField& u1);
/// J2 = 1/2 ||y - y_rf||^2 + beta/2 ||u||^2_{U1 u U2}.
double cost_J2(const FollowerProblem& problem, const SpaceTimeField& u1, const SpaceTimeField& u2);

/// Solves (beta + chi F* F chi) w = chi g on the given mask, where F is the
/// source-to-trajectory map of `model`. Shared by the follower and by the
/// leader's coupled forward-backward systems.
struct MaskedSolve {
    SpaceTimeField w;
    int iterations = 0;
    double relative_residual = 0.0;
    std::vector<double> quadratic;
};
MaskedSolve solve_masked_normal_equation(const ThetaScheme& model, const SubdomainMask& mask, double beta,
                                         const SpaceTimeField& g, const CgOptions& options,
                                         bool kkt_stop = false);

}  // namespace hctl
