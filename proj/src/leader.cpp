#include "hctl/leader.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hctl/errors.hpp"
#include "hctl/parallel.hpp"

namespace hctl {

LeaderProblem make_leader_problem(double alpha, SpaceField y_tg, FollowerProblem follower,
                                  std::optional<HModel> hmodel, CgOptions inner) {
    validate(follower);
    LeaderProblem problem;
    problem.alpha = alpha;
    problem.y_tg = std::move(y_tg);
    problem.inner = inner;
    if (!hmodel) {
        problem.perturbed = follower.model;
    } else {
        problem.perturbed = std::make_shared<const ThetaScheme>(perturbed_generator(*hmodel, follower.model->generator()));
    }
    problem.follower = std::move(follower);
    problem.hmodel = std::move(hmodel);
    validate(problem);
    return problem;
}

void validate(const LeaderProblem& problem) {
    validate(problem.follower);
    if (!(problem.alpha > 0.0) || !std::isfinite(problem.alpha)) {
        throw PreconditionError("ball radius alpha must be > 0");
    }
    if (problem.y_tg.size() != problem.grids().space.size()) {
        throw PreconditionError("target y_tg does not match the grid");
    }
    if (!problem.perturbed) throw PreconditionError("leader problem has no perturbed model");
}

namespace {

/// Central differences with the homogeneous Dirichlet value outside the grid.
Point gradient_dirichlet(const SpaceGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& f, int node) {
    const auto idx = grid.multi_index(node);
    Point g(grid.dim());
    for (int axis = 0; axis < grid.dim(); ++axis) {
        const int di = axis == 0 ? 1 : 0;
        const int dj = axis == 1 ? 1 : 0;
        auto value = [&](int shift) {
            const int i = idx[0] + shift * di;
            const int j = idx[1] + shift * dj;
            const int n_axis = grid.n_interior(axis);
            const int along = axis == 0 ? i : j;
            if (along < 0 || along >= n_axis) return 0.0;
            return f[grid.index(i, j)];
        };
        g[axis] = (value(1) - value(-1)) / (2.0 * grid.dx(axis));
    }
    return g;
}

double drift_dot_gradient_max(const HModel& hmodel, const Grids& grids, const SpaceTimeField& f) {
    double worst = 0.0;
    const auto& space = grids.space;
    for (int k = 0; k < grids.time.levels(); ++k) {
        for (int node = 0; node < space.size(); ++node) {
            const Point g = gradient_dirichlet(space, f.level(k), node);
            double dot = 0.0;
            for (int axis = 0; axis < space.dim(); ++axis) dot += hmodel.b_h[axis](k, node) * g[axis];
            worst = std::max(worst, std::abs(dot));
        }
    }
    return worst;
}

}  // namespace

BasePair solve_base_pair(const LeaderProblem& problem) {
    validate(problem);
    const auto& g = problem.grids();
    const FollowerSolution sol = best_response(problem.follower, SpaceTimeField(g));
    BasePair base;
    base.y0 = sol.y;
    base.p0 = sol.p;
    base.kkt_residual = sol.kkt_residual;
    base.cg_iterations = sol.cg_iterations;
    if (problem.hmodel && !problem.hmodel->is_unit()) {
        base.orthogonality = {drift_dot_gradient_max(*problem.hmodel, g, base.y0),
                              drift_dot_gradient_max(*problem.hmodel, g, base.p0)};
    }
    return base;
}

HstarFields solve_Hstar_system(const LeaderProblem& problem, const SpaceField& xi) {
    const auto& g = problem.grids();
    const ThetaScheme& model = *problem.perturbed;
    const SpaceField zero(g.space.size());
    const SpaceTimeField zero_st(g);

    const SpaceTimeField phi0 = model.solve_backward(zero_st, xi);
    const MaskedSolve ms =
        solve_masked_normal_equation(model, problem.u2_mask(), problem.follower.beta, phi0, problem.inner);
    // At the solution w = (1/beta) phi chi_U2.
    HstarFields out;
    out.vartheta = -1.0 * model.solve_forward(restrict_to(problem.u2_mask(), ms.w), zero);
    out.phi = model.solve_backward(out.vartheta, xi);
    out.iterations = ms.iterations;
    return out;
}

HFields solve_H_system(const LeaderProblem& problem, const SpaceTimeField& u1) {
    const auto& g = problem.grids();
    const ThetaScheme& model = *problem.perturbed;
    const SpaceField zero(g.space.size());

    const SpaceTimeField source1 = restrict_to(problem.u1_mask(), u1);
    const SpaceTimeField rhs = -1.0 * model.solve_backward(model.solve_forward(source1, zero), zero);
    const MaskedSolve ms =
        solve_masked_normal_equation(model, problem.u2_mask(), problem.follower.beta, rhs, problem.inner);
    // At the solution w = -(1/beta) q chi_U2.
    HFields out;
    out.z = model.solve_forward(source1 + restrict_to(problem.u2_mask(), ms.w), zero);
    out.q = model.solve_backward(out.z, zero);
    out.iterations = ms.iterations;
    return out;
}

SpaceTimeField apply_Hstar(const LeaderProblem& problem, const SpaceField& xi) {
    return restrict_to(problem.u1_mask(), solve_Hstar_system(problem, xi).phi);
}

SpaceField apply_H(const LeaderProblem& problem, const SpaceTimeField& u1) {
    const HFields f = solve_H_system(problem, u1);
    return f.z.level_field(f.z.levels() - 1);
}

SpaceField prox_alpha_norm(const SpaceGrid& grid, const SpaceField& v, double threshold) {
    if (threshold < 0.0) throw PreconditionError("prox threshold must be >= 0");
    if (threshold == 0.0) return v;
    const double norm = l2_norm(grid, v);
    if (norm <= threshold) return SpaceField(v.size());
    return (1.0 - threshold / norm) * v;
}

double vi_residual(const SpaceGrid& grid, const SpaceField& xi, const SpaceField& gradient, double alpha) {
    const double xi_norm = l2_norm(grid, xi);
    if (xi_norm > 0.0) return l2_norm(grid, gradient + (alpha / xi_norm) * xi);
    return std::max(0.0, l2_norm(grid, gradient) - alpha);
}

DualEvaluation dual_value_grad(const LeaderProblem& problem, const BasePair& base, const SpaceField& xi) {
    const auto& g = problem.grids();
    const SpaceField gap = problem.y_tg - base.y0_terminal();
    const SpaceTimeField hs = apply_Hstar(problem, xi);
    DualEvaluation out;
    out.smooth = 0.5 * inner_product(g, hs, hs) - inner_product(g.space, xi, gap);
    out.value = out.smooth + problem.alpha * l2_norm(g.space, xi);
    out.gradient = apply_H(problem, hs) - gap;
    return out;
}

double estimate_hhstar_norm(const LeaderProblem& problem, int iterations) {
    const auto& space = problem.grids().space;
    SpaceField v(space.size());
    for (int i = 0; i < v.size(); ++i) v[i] = 1.0 + 0.5 * std::sin(1.7 * i + 0.3);
    v *= 1.0 / l2_norm(space, v);
    double estimate = 0.0;
    for (int it = 0; it < std::max(1, iterations); ++it) {
        SpaceField w = apply_H(problem, apply_Hstar(problem, v));
        const double norm = l2_norm(space, w);
        if (!(norm > 0.0)) return 0.0;
        estimate = norm;
        v = (1.0 / norm) * w;
    }
    return estimate;
}

namespace {

/// A dual point with the images needed to evaluate the smooth part.
struct DualPoint {
    SpaceField xi;
    SpaceTimeField hs;  // H* xi
    SpaceField hhs;     // H H* xi
    double smooth = 0.0;
};

DualPoint combine(const Grids& g, const SpaceField& gap, const DualPoint& a, const DualPoint& b, double ca,
                  double cb) {
    DualPoint out;
    out.xi = ca * a.xi + cb * b.xi;
    out.hs = ca * a.hs + cb * b.hs;
    out.hhs = ca * a.hhs + cb * b.hhs;
    out.smooth = 0.5 * inner_product(g, out.hs, out.hs) - inner_product(g.space, out.xi, gap);
    return out;
}

}  // namespace

DualState solve_dual(const LeaderProblem& problem, const BasePair& base, const DualConfig& config) {
    validate(problem);
    const auto& g = problem.grids();
    const auto& space = g.space;
    const double alpha = problem.alpha;
    const SpaceField gap = problem.y_tg - base.y0_terminal();
    const double tol = config.tol * alpha;

    DualState state;
    state.xi = SpaceField(space.size());
    state.objective_history.push_back(0.0);
    state.vi_residual = std::max(0.0, l2_norm(space, gap) - alpha);
    if (state.vi_residual <= tol) {
        // Target already inside the ball around y0(T): xi = 0 is a prox fixed point.
        state.converged = true;
        return state;
    }

    auto evaluate = [&](const SpaceField& xi) {
        DualPoint p;
        p.xi = xi;
        const HstarFields hsf = solve_Hstar_system(problem, xi);
        p.hs = restrict_to(problem.u1_mask(), hsf.phi);
        const HFields hf = solve_H_system(problem, p.hs);
        p.hhs = hf.z.level_field(hf.z.levels() - 1);
        p.smooth = 0.5 * inner_product(g, p.hs, p.hs) - inner_product(space, xi, gap);
        state.inner_iterations += hsf.iterations + hf.iterations;
        return p;
    };

    double lipschitz = 0.0;
    if (config.step_rule == StepRule::PowerIteration) {
        lipschitz = 1.01 * estimate_hhstar_norm(problem, config.power_iters);
    } else {
        lipschitz = estimate_hhstar_norm(problem, 1);
    }
    if (!(lipschitz > 0.0)) {
        // H vanishes (no leader nodes): the ball cannot be reached.
        state.converged = false;
        return state;
    }

    DualPoint x;
    x.xi = SpaceField(space.size());
    x.hs = SpaceTimeField(g);
    x.hhs = SpaceField(space.size());
    x.smooth = 0.0;
    DualPoint y = x;
    double value_x = 0.0;
    double t = 1.0;
    int consecutive_backtracks = 0;
    bool just_restarted = false;

    for (int it = 1; it <= config.max_iters; ++it) {
        state.iterations = it;
        const SpaceField grad_y = y.hhs - gap;
        DualPoint cand;
        while (true) {
            const double step = 1.0 / lipschitz;
            SpaceField trial = y.xi;
            trial -= step * grad_y;
            cand = evaluate(prox_alpha_norm(space, trial, step * alpha));
            const SpaceField d = cand.xi - y.xi;
            const double model_bound = y.smooth + inner_product(space, grad_y, d) +
                                       0.5 * lipschitz * inner_product(space, d, d);
            const double slack = 1e-12 * (std::abs(y.smooth) + std::abs(model_bound) + 1e-300);
            if (cand.smooth <= model_bound + slack) {
                consecutive_backtracks = 0;
                break;
            }
            lipschitz *= 2.0;
            ++state.backtracks;
            if (++consecutive_backtracks == 2 && config.step_rule == StepRule::PowerIteration) {
                lipschitz = std::max(lipschitz, 1.01 * estimate_hhstar_norm(problem, 2 * config.power_iters));
            }
        }

        const double value_c = cand.smooth + alpha * l2_norm(space, cand.xi);
        // Right after a restart y == x and cand is a plain proximal step, which
        // cannot increase the objective; a larger value there is round-off.
        if (value_c > value_x && !just_restarted) {
            // Function-value restart: drop momentum and step again from x.
            ++state.restarts;
            t = 1.0;
            y = x;
            just_restarted = true;
            continue;
        }
        just_restarted = false;
        const double t_next = 0.5 * (1.0 + std::sqrt(1.0 + 4.0 * t * t));
        const double momentum = (t - 1.0) / t_next;
        y = combine(g, gap, cand, x, 1.0 + momentum, -momentum);
        x = std::move(cand);
        t = t_next;
        value_x = value_c;
        state.objective_history.push_back(value_x);

        state.vi_residual = vi_residual(space, x.xi, x.hhs - gap, alpha);
        if (state.vi_residual <= tol) {
            state.converged = true;
            break;
        }
    }
    state.xi = x.xi;
    state.step_size = 1.0 / lipschitz;
    return state;
}

OptimalitySystemSolution recover_solution(const LeaderProblem& problem, const BasePair& base,
                                          const DualState& dual) {
    validate(problem);
    const auto& g = problem.grids();
    OptimalitySystemSolution sol;
    const HstarFields hs = solve_Hstar_system(problem, dual.xi);
    sol.phi = hs.phi;
    sol.theta = hs.vartheta;
    sol.u1_star = restrict_to(problem.u1_mask(), hs.phi);

    const HFields hf = solve_H_system(problem, sol.u1_star);
    sol.z = hf.z;
    sol.q = hf.q;
    sol.y0 = base.y0;
    sol.p0 = base.p0;
    sol.y = base.y0 + hf.z;
    sol.p = base.p0 + hf.q;

    const FollowerSolution follower = best_response(problem.follower, sol.u1_star);
    sol.u2_star = follower.u2_star;
    sol.J2 = follower.J2;
    sol.follower_kkt_residual = follower.kkt_residual;
    sol.J1 = 0.5 * inner_product(g, sol.u1_star, sol.u1_star, &problem.u1_mask());

    const int last = g.time.steps();
    sol.terminal_distance = l2_norm(g.space, sol.y.level_field(last) - problem.y_tg);
    sol.nominal_terminal_distance = l2_norm(g.space, follower.y.level_field(last) - problem.y_tg);
    sol.orthogonality_residuals = base.orthogonality;
    return sol;
}

SweepReport alpha_sweep(const LeaderProblem& problem, const BasePair& base, const std::vector<double>& alphas,
                        const DualConfig& config) {
    if (alphas.empty()) throw PreconditionError("alpha sweep needs at least one value");
    for (std::size_t i = 0; i < alphas.size(); ++i) {
        if (!(alphas[i] > 0.0)) throw PreconditionError("alpha values must be > 0");
        if (i > 0 && !(alphas[i] < alphas[i - 1])) {
            std::ostringstream msg;
            msg << "alpha values must be strictly decreasing (entry " << i << ": " << alphas[i]
                << " after " << alphas[i - 1] << ")";
            throw PreconditionError(msg.str());
        }
    }
    SweepReport report;
    report.rows.resize(alphas.size());
    parallel_for(static_cast<int>(alphas.size()), [&](int i) {
        SweepRow& row = report.rows[i];
        row.alpha = alphas[i];
        try {
            LeaderProblem local = problem;
            local.alpha = alphas[i];
            const DualState dual = solve_dual(local, base, config);
            const OptimalitySystemSolution sol = recover_solution(local, base, dual);
            row.terminal_distance = sol.terminal_distance;
            row.J1 = sol.J1;
            row.J2 = sol.J2;
            row.iterations = dual.iterations;
            row.converged = dual.converged;
        } catch (const std::exception& e) {
            row.error = e.what();
        }
    });

    report.all_within_ball = true;
    report.j1_monotone = true;
    for (std::size_t i = 0; i < report.rows.size(); ++i) {
        auto& row = report.rows[i];
        row.within_ball = row.error.empty() && row.converged &&
                          row.terminal_distance <= row.alpha * (1.0 + report.ball_tolerance);
        report.all_within_ball = report.all_within_ball && row.within_ball;
        if (i > 0) {
            const auto& prev = report.rows[i - 1];
            if (!row.error.empty() || !prev.error.empty() || row.J1 < prev.J1) report.j1_monotone = false;
        }
    }
    return report;
}

}  // namespace hctl
