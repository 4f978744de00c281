#include "hctl/validate.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <sstream>

#include "hctl/errors.hpp"

namespace hctl {

SpaceField random_space_field(const SpaceGrid& grid, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    SpaceField f(grid.size());
    for (int i = 0; i < f.size(); ++i) f[i] = normal(rng);
    return f;
}

SpaceTimeField random_spacetime_field(const Grids& grids, std::mt19937_64& rng) {
    std::normal_distribution<double> normal;
    SpaceTimeField f(grids);
    for (Eigen::Index i = 0; i < f.flat().size(); ++i) f.flat()[i] = normal(rng);
    return f;
}

double forward_backward_defect(const ThetaScheme& scheme, const SpaceTimeField& s, const SpaceTimeField& r,
                               const SpaceField& v) {
    const auto& g = scheme.grids();
    const SpaceTimeField y = scheme.solve_forward(s, SpaceField(g.space.size()));
    const SpaceTimeField p = scheme.solve_backward(r, v);
    const double lhs = inner_product(g.space, y.level_field(g.time.steps()), v) + inner_product(g, y, r);
    const double rhs = inner_product(g, s, p);
    const double scale = l2_norm(g.space, y.level_field(g.time.steps())) * l2_norm(g.space, v) +
                         l2_norm(g, y) * l2_norm(g, r) + l2_norm(g, s) * l2_norm(g, p);
    return std::abs(lhs - rhs) / std::max(scale, 1e-300);
}

double h_pairing_defect(const LeaderProblem& problem, const SpaceTimeField& u1, const SpaceField& xi) {
    const auto& g = problem.grids();
    const SpaceField hu = apply_H(problem, u1);
    const SpaceTimeField hs = apply_Hstar(problem, xi);
    const double lhs = inner_product(g.space, hu, xi);
    const double rhs = inner_product(g, u1, hs, &problem.u1_mask());
    const double scale = l2_norm(g.space, hu) * l2_norm(g.space, xi) + l2_norm(g, u1, &problem.u1_mask()) * l2_norm(g, hs);
    return std::abs(lhs - rhs) / std::max(scale, 1e-300);
}

namespace {

double relative_gap(double a, double b) {
    const double scale = std::max({std::abs(a), std::abs(b), 1e-300});
    return std::abs(a - b) / scale;
}

}  // namespace

double follower_gradient_error(const FollowerProblem& problem, const SpaceTimeField& u1, const SpaceTimeField& u2,
                               const SpaceTimeField& direction, double eps) {
    const auto& g = problem.grids();
    const SpaceTimeField d = restrict_to(problem.u2_mask, direction);
    const SpaceTimeField u = restrict_to(problem.u2_mask, u2);
    const SpaceTimeField y = solve_state(problem, u1, u);
    const SpaceTimeField p = solve_adjoint(problem, y);
    const double analytic = inner_product(g, problem.beta * u + p, d, &problem.u2_mask);
    const double step = eps * std::max(1.0, l2_norm(g, u)) / std::max(l2_norm(g, d), 1e-300);
    const double fd = (cost_J2(problem, u1, u + step * d) - cost_J2(problem, u1, u - step * d)) / (2.0 * step);
    return relative_gap(analytic, fd);
}

double dual_gradient_error(const LeaderProblem& problem, const BasePair& base, const SpaceField& xi,
                           const SpaceField& direction, double eps) {
    const auto& space = problem.grids().space;
    const DualEvaluation at = dual_value_grad(problem, base, xi);
    const double analytic = inner_product(space, at.gradient, direction);
    const double step = eps * std::max(1.0, l2_norm(space, xi)) / std::max(l2_norm(space, direction), 1e-300);
    const double plus = dual_value_grad(problem, base, xi + step * direction).smooth;
    const double minus = dual_value_grad(problem, base, xi - step * direction).smooth;
    return relative_gap(analytic, (plus - minus) / (2.0 * step));
}

std::vector<CheckResult> run_invariant_suite(const Scenario& s) {
    std::vector<CheckResult> out;
    auto add = [&](std::string name, double value, double tol, std::string detail = "") {
        out.push_back({std::move(name), value <= tol, value, tol, std::move(detail)});
    };
    std::mt19937_64 rng(s.sde.seed);
    const Pipeline pipe = build_pipeline(s);
    const Grids& g = s.grids;
    constexpr int probes = 5;

    // parabolic
    {
        double worst = 0.0;
        for (int i = 0; i < probes; ++i) {
            const auto src = random_spacetime_field(g, rng);
            const auto rhs = random_spacetime_field(g, rng);
            const auto v = random_space_field(g.space, rng);
            worst = std::max(worst, forward_backward_defect(*pipe.nominal, src, rhs, v));
        }
        add("forward_backward_pairing", worst, 1e-10, std::to_string(probes) + " probes");
        const SpaceTimeField zero = pipe.nominal->solve_forward(SpaceTimeField(g), SpaceField(g.space.size()));
        add("zero_data_zero_solution", max_abs(zero), 0.0);
    }

    // htransform
    LeaderProblem leader = build_leader(s, pipe);
    if (pipe.hmodel) {
        const HModel& h = *pipe.hmodel;
        add("h_strictly_positive", h.h.values().minCoeff() > 0.0 ? 0.0 : 1.0, 0.0,
            "min h = " + std::to_string(h.h.values().minCoeff()));
        if (!h.is_unit()) {
            const HResiduals res = h_residuals(h, g, *s.coefficients);
            double dx2 = 0.0;
            for (int axis = 0; axis < g.space.dim(); ++axis) dx2 = std::max(dx2, g.space.dx(axis) * g.space.dx(axis));
            // Both residuals are discretization errors of the same equation.
            const double scale = 1.0 + max_abs(h.grad_log_h[0]) * max_abs(h.grad_log_h[0]);
            add("hopf_cole_residual_gap", res.gap_max, 10.0 * scale * (dx2 + g.time.dt()),
                "kernel/h vs log-h equation");
        }
        const DiscreteGenerator unit = perturbed_generator(make_h(UnitH{}, g, *s.coefficients), pipe.nominal->generator());
        bool same = unit.matrices().size() == pipe.nominal->generator().matrices().size();
        for (std::size_t k = 0; same && k < unit.matrices().size(); ++k) {
            const SparseMatrix diff = unit.matrices()[k] - pipe.nominal->generator().matrices()[k];
            same = diff.norm() == 0.0;
        }
        add("unit_h_generator_identity", same ? 0.0 : 1.0, 0.0);
        double worst = 0.0;
        for (int i = 0; i < probes; ++i) {
            const auto src = random_spacetime_field(g, rng);
            const auto rhs = random_spacetime_field(g, rng);
            const auto v = random_space_field(g.space, rng);
            worst = std::max(worst, forward_backward_defect(*leader.perturbed, src, rhs, v));
        }
        add("perturbed_pairing", worst, 1e-10, std::to_string(probes) + " probes");
    }

    // follower
    const BasePair base = solve_base_pair(leader);
    add("follower_kkt_residual", base.kkt_residual, s.cg.tol, std::to_string(base.cg_iterations) + " CG iterations");
    {
        double worst = 0.0;
        for (int i = 0; i < probes; ++i) {
            const auto u1 = random_spacetime_field(g, rng);
            const auto u2 = random_spacetime_field(g, rng);
            const auto d = random_spacetime_field(g, rng);
            worst = std::max(worst, follower_gradient_error(pipe.follower, u1, u2, d));
        }
        add("follower_gradient_fd", worst, 1e-6, std::to_string(probes) + " points");
    }

    // leader
    leader.alpha = resolve_alpha(s, s.alpha, leader, base);
    {
        double worst = 0.0;
        for (int i = 0; i < probes; ++i) {
            const auto u1 = random_spacetime_field(g, rng);
            const auto xi = random_space_field(g.space, rng);
            worst = std::max(worst, h_pairing_defect(leader, u1, xi));
        }
        add("H_Hstar_pairing", worst, 1e-10, std::to_string(probes) + " probes");
    }
    {
        double worst = 0.0;
        for (int i = 0; i < probes; ++i) {
            const auto xi = random_space_field(g.space, rng);
            const auto d = random_space_field(g.space, rng);
            worst = std::max(worst, dual_gradient_error(leader, base, xi, d));
        }
        add("dual_gradient_fd", worst, 1e-6, std::to_string(probes) + " points");
    }
    {
        SpaceField v = random_space_field(g.space, rng);
        v *= 2.0 / l2_norm(g.space, v);
        const double e1 = l2_norm(g.space, prox_alpha_norm(g.space, v, 0.5) - 0.75 * v);
        const double e2 = l2_norm(g.space, prox_alpha_norm(g.space, v, 2.0));
        const double e3 = l2_norm(g.space, prox_alpha_norm(g.space, v, 0.0) - v);
        add("prox_cases", std::max({e1, e2, e3}), 1e-14, "shrink, tie at threshold, zero threshold");
    }
    {
        const DualState dual = solve_dual(leader, base, s.dual);
        add("dual_vi_residual", dual.vi_residual, s.dual.tol * leader.alpha,
            std::to_string(dual.iterations) + " iterations");
        const OptimalitySystemSolution sol = recover_solution(leader, base, dual);
        add("terminal_within_ball", sol.terminal_distance / leader.alpha - 1.0, 1e-3, "distance/alpha - 1");
        bool monotone = true;
        for (std::size_t i = 1; i < dual.objective_history.size(); ++i) {
            const double prev = dual.objective_history[i - 1];
            if (dual.objective_history[i] > prev + 1e-12 * std::max(1.0, std::abs(prev))) monotone = false;
        }
        add("dual_objective_monotone", monotone ? 0.0 : 1.0, 0.0);
    }

    // sde
    {
        const HModel closed = pipe.hmodel && pipe.hmodel->has_closed_form() ? *pipe.hmodel
                                                                           : make_h(UnitH{}, g, *s.coefficients);
        const StatReport mart =
            martingale_check(*s.coefficients, closed, s.sde.x0, g, s.sde.n_paths, s.sde.seed, s.sde.t_check, s.sde.C);
        out.push_back({"martingale_mean", mart.pass, std::abs(mart.estimate - 1.0),
                       3.0 * mart.standard_error + mart.bias_allowance,
                       "h kind " + kind_name(closed.kind) + ", mean " + std::to_string(mart.estimate)});

        SpaceField sine(g.space.size());
        for (int n = 0; n < g.space.size(); ++n) {
            double v = 1.0;
            for (int axis = 0; axis < g.space.dim(); ++axis) {
                const auto& iv = g.space.bounds(axis);
                v *= std::sin(std::numbers::pi * (g.space.coord(n, axis) - iv.lo) / (iv.hi - iv.lo));
            }
            sine[n] = v;
        }
        const StatReport fk = feynman_kac_check(s.coefficients, sine, g, s.sde.x0, s.sde.n_paths, s.sde.seed + 1,
                                                s.sde.C, s.sde.absorption, s.generator);
        out.push_back({"feynman_kac", fk.pass, std::abs(fk.estimate - fk.reference),
                       3.0 * fk.standard_error + fk.bias_allowance,
                       "MC " + std::to_string(fk.estimate) + " vs PDE " + std::to_string(fk.reference)});
    }
    return out;
}

}  // namespace hctl
