#include "hctl/follower.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hctl/errors.hpp"
#include "hctl/krylov.hpp"

namespace hctl {

void validate(const FollowerProblem& problem) {
    if (!problem.model) throw PreconditionError("follower problem has no model");
    if (!(problem.beta > 0.0) || !std::isfinite(problem.beta)) {
        throw PreconditionError("follower penalty beta must be > 0");
    }
    const auto& g = problem.grids();
    if (problem.y_rf.nodes() != g.space.size() || problem.y_rf.levels() != g.time.levels()) {
        throw PreconditionError("reference trajectory shape does not match the grids");
    }
    if (problem.u1_mask.indicator.size() != g.space.size() || problem.u2_mask.indicator.size() != g.space.size()) {
        throw PreconditionError("subdomain masks do not match the grid");
    }
    if (!disjoint(problem.u1_mask, problem.u2_mask)) {
        throw PreconditionError("leader and follower subdomains U1 and U2 overlap");
    }
}

MaskedSolve solve_masked_normal_equation(const ThetaScheme& model, const SubdomainMask& mask, double beta,
                                         const SpaceTimeField& g, const CgOptions& options, bool kkt_stop) {
    const auto& grids = model.grids();
    const SpaceField zero(grids.space.size());
    const double sqrt_w = std::sqrt(grids.spacetime_weight());

    SpaceTimeField scratch(grids);
    auto apply = [&](const Eigen::VectorXd& v, Eigen::VectorXd& out) {
        scratch.flat() = v;
        scratch = restrict_to(mask, std::move(scratch));
        const SpaceTimeField y = model.solve_forward(scratch, zero);
        SpaceTimeField p = restrict_to(mask, model.solve_backward(y, zero));
        out = beta * scratch.flat() + p.flat();
    };

    const Eigen::VectorXd b = restrict_to(mask, g).flat();
    const double b_norm = b.norm();
    auto stop = [&](double r_norm, const Eigen::VectorXd& x) {
        double limit = options.tol * b_norm;
        if (kkt_stop) limit = std::min(limit, options.tol * std::max(1.0 / sqrt_w, x.norm()));
        return r_norm <= limit;
    };

    Eigen::VectorXd x = Eigen::VectorXd::Zero(b.size());
    MaskedSolve out;
    int restarts = 0;
    while (true) {
        CgResult cg = conjugate_gradient(apply, b, x, options.max_iters - out.iterations, stop);
        out.iterations += cg.iterations;
        if (out.quadratic.empty()) {
            out.quadratic = std::move(cg.quadratic);
        } else {
            out.quadratic.insert(out.quadratic.end(), cg.quadratic.begin() + 1, cg.quadratic.end());
        }
        // The recursive residual drifts from the true one; confirm before returning.
        Eigen::VectorXd kx(b.size());
        apply(x, kx);
        const double true_residual = (b - kx).norm();
        out.relative_residual = b_norm > 0.0 ? true_residual / b_norm : true_residual;
        if (stop(true_residual, x)) break;
        if (out.iterations >= options.max_iters || restarts >= 3) {
            std::ostringstream msg;
            msg << "CG did not converge in " << out.iterations << " iterations (relative residual "
                << out.relative_residual << ")";
            throw ConvergenceError(msg.str(), x, out.relative_residual, out.iterations);
        }
        ++restarts;
    }
    out.w = SpaceTimeField(grids);
    out.w.flat() = x;
    return out;
}

SpaceTimeField solve_state(const FollowerProblem& problem, const SpaceTimeField& u1, const SpaceTimeField& u2) {
    const auto& g = problem.grids();
    SpaceTimeField source = restrict_to(problem.u1_mask, u1);
    source += restrict_to(problem.u2_mask, u2);
    return problem.model->solve_forward(source, SpaceField(g.space.size()));
}

SpaceTimeField solve_adjoint(const FollowerProblem& problem, const SpaceTimeField& y) {
    return problem.model->solve_backward(y - problem.y_rf, SpaceField(problem.grids().space.size()));
}

double cost_J2(const FollowerProblem& problem, const SpaceTimeField& u1, const SpaceTimeField& u2) {
    const auto& g = problem.grids();
    const SpaceTimeField y = solve_state(problem, u1, u2);
    const double tracking = 0.5 * std::pow(l2_norm(g, y - problem.y_rf), 2);
    const double control = 0.5 * problem.beta *
                           (inner_product(g, u1, u1, &problem.u1_mask) + inner_product(g, u2, u2, &problem.u2_mask));
    return tracking + control;
}

FollowerSolution best_response(const FollowerProblem& problem, const SpaceTimeField& u1) {
    validate(problem);
    const auto& g = problem.grids();
    const SpaceField zero(g.space.size());
    const double w = g.spacetime_weight();

    // Residual of the tracking term with u2 = 0 drives the right-hand side.
    const SpaceTimeField u1_masked = restrict_to(problem.u1_mask, u1);
    const SpaceTimeField e0 = problem.model->solve_forward(u1_masked, zero) - problem.y_rf;
    const SpaceTimeField rhs = -1.0 * problem.model->solve_backward(e0, zero);

    const MaskedSolve ms =
        solve_masked_normal_equation(*problem.model, problem.u2_mask, problem.beta, rhs, problem.cg, true);

    FollowerSolution sol;
    sol.u2_star = restrict_to(problem.u2_mask, ms.w);
    sol.cg_iterations = ms.iterations;
    sol.y = solve_state(problem, u1, sol.u2_star);
    sol.p = solve_adjoint(problem, sol.y);

    const SpaceTimeField kkt = problem.beta * sol.u2_star + restrict_to(problem.u2_mask, sol.p);
    sol.kkt_residual = l2_norm(g, kkt) / std::max(1.0, l2_norm(g, sol.u2_star));

    const double control_u1 = 0.5 * problem.beta * inner_product(g, u1, u1, &problem.u1_mask);
    const double j2_zero = 0.5 * std::pow(l2_norm(g, e0), 2) + control_u1;
    sol.j2_history.reserve(ms.quadratic.size());
    for (double q : ms.quadratic) sol.j2_history.push_back(j2_zero + w * q);
    sol.J2 = 0.5 * std::pow(l2_norm(g, sol.y - problem.y_rf), 2) + control_u1 +
             0.5 * problem.beta * inner_product(g, sol.u2_star, sol.u2_star);
    return sol;
}

}  // namespace hctl
