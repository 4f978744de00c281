#include <doctest.h>

#include <random>

#include "fixtures.hpp"
#include "hctl/errors.hpp"
#include "hctl/validate.hpp"
#include "oracles.hpp"

using namespace hctl;
using fixture::rel;

namespace {

struct Setup {
    LeaderProblem problem;
    BasePair base;
    double gap_norm = 0.0;
};

// alpha is given as a fraction of ||y_tg - y0(T)||
Setup setup(int n, int m, double alpha_fraction, std::optional<HModel> h = std::nullopt, double beta = 1.0,
            bool with_reference = true, double target_amplitude = 0.1) {
    FollowerProblem f = fixture::follower(n, m, beta, with_reference);
    f.cg = {1e-10, 500};
    const SpaceField y_tg = fixture::sine(f.grids().space, target_amplitude);
    Setup s{make_leader_problem(1.0, y_tg, f, std::move(h)), {}, 0.0};
    s.base = solve_base_pair(s.problem);
    s.gap_norm = l2_norm(s.problem.grids().space, y_tg - s.base.y0_terminal());
    s.problem.alpha = alpha_fraction * s.gap_norm;
    return s;
}

}  // namespace

TEST_CASE("H and H* vanish on zero input") {
    const Setup s = setup(15, 16, 0.5);
    const Grids& g = s.problem.grids();
    CHECK(max_abs(apply_Hstar(s.problem, SpaceField(g.space.size()))) == 0.0);
    CHECK(l2_norm(g.space, apply_H(s.problem, SpaceTimeField(g))) == 0.0);
}

TEST_CASE("H and H* match the dense coupled system") {
    for (double beta : {0.1, 1.0, 10.0}) {
        CAPTURE(beta);
        const Setup s = setup(7, 8, 0.5, std::nullopt, beta);
        const Grids& g = s.problem.grids();
        const Eigen::MatrixXd H = oracle::leader_H(s.problem);
        std::mt19937_64 rng(21);
        for (int probe = 0; probe < 3; ++probe) {
            const SpaceTimeField u1 = random_spacetime_field(g, rng);
            const SpaceField xi = random_space_field(g.space, rng);
            const SpaceField hu(Eigen::VectorXd(H * u1.flat()));
            CHECK(rel(apply_H(s.problem, u1), hu) <= 1e-8);
            SpaceTimeField hs(g);
            hs.flat() = H.transpose() * xi.values() / g.time.dt();
            CHECK(rel(apply_Hstar(s.problem, xi), hs) <= 1e-8);
        }
    }
}

TEST_CASE("H and H* are adjoint to round-off, with and without a perturbation") {
    const Grids g = build_grid({{0.0, 1.0}}, {63}, 1.0, 64);
    const FollowerProblem base_f = fixture::follower(63, 64);
    const CoefficientModel& c = *fixture::heat();
    for (const auto& h : {std::optional<HModel>{}, std::optional<HModel>{make_h(AnalyticH{Point::Constant(1, 1.0)}, g, c)}}) {
        const LeaderProblem p = make_leader_problem(0.1, fixture::sine(g.space, 0.1), base_f, h);
        std::mt19937_64 rng(22);
        for (int probe = 0; probe < 5; ++probe) {
            const SpaceTimeField u1 = random_spacetime_field(g, rng);
            const SpaceField xi = random_space_field(g.space, rng);
            CHECK(h_pairing_defect(p, u1, xi) <= 1e-10);
        }
    }
}

TEST_CASE("large beta decouples the follower") {
    const Setup s = setup(15, 16, 0.5, std::nullopt, 1e12);
    const Grids& g = s.problem.grids();
    std::mt19937_64 rng(23);
    const SpaceTimeField u1 = random_spacetime_field(g, rng);
    const SpaceTimeField plain = s.problem.perturbed->solve_forward(restrict_to(s.problem.u1_mask(), u1),
                                                                    SpaceField(g.space.size()));
    CHECK(rel(apply_H(s.problem, u1), plain.level_field(g.time.steps())) <= 1e-9);
}

TEST_CASE("dual gradient against central differences, and convexity") {
    const Setup s = setup(31, 32, 0.5);
    const auto& space = s.problem.grids().space;
    std::mt19937_64 rng(24);
    for (int point = 0; point < 5; ++point) {
        const SpaceField xi = random_space_field(space, rng);
        const SpaceField d = random_space_field(space, rng);
        CHECK(dual_gradient_error(s.problem, s.base, xi, d) <= 1e-6);

        const SpaceField other = random_space_field(space, rng);
        const double fa = dual_value_grad(s.problem, s.base, xi).value;
        const double fb = dual_value_grad(s.problem, s.base, other).value;
        const double fm = dual_value_grad(s.problem, s.base, 0.5 * (xi + other)).value;
        CHECK(fm <= 0.5 * (fa + fb) + 1e-12 * (std::abs(fa) + std::abs(fb)));
    }
}

TEST_CASE("prox of the alpha norm") {
    const Grids g = build_grid({{0.0, 1.0}}, {3}, 1.0, 1);
    SpaceField v(3);
    v.values() << 1.0, 2.0, 2.0;
    const double norm = l2_norm(g.space, v);  // 1.5
    CHECK(norm == doctest::Approx(1.5));
    CHECK(l2_norm(g.space, prox_alpha_norm(g.space, v, norm)) == 0.0);
    CHECK(l2_norm(g.space, prox_alpha_norm(g.space, v, 2.0)) == 0.0);
    const SpaceField shrunk = prox_alpha_norm(g.space, v, 0.5);
    CHECK(rel(shrunk, (2.0 / 3.0) * v) <= 1e-15);
    CHECK(rel(prox_alpha_norm(g.space, v, 0.0), v) == 0.0);
    CHECK_THROWS_AS(prox_alpha_norm(g.space, v, -1.0), PreconditionError);
}

TEST_CASE("dual solution matches the dense oracle on a tiny grid") {
    for (double fraction : {0.5, 0.1}) {
        CAPTURE(fraction);
        const Setup s = setup(7, 8, fraction);
        const SpaceField gap = s.problem.y_tg - s.base.y0_terminal();
        const DualState dual = solve_dual(s.problem, s.base, {StepRule::PowerIteration, 1e-10, 200000, 30});
        REQUIRE(dual.converged);
        const SpaceField expected = oracle::dual_solution(s.problem, gap);
        CHECK(rel(dual.xi, expected) <= 1e-6);
    }
}

TEST_CASE("desk problem: variational inequality and the ball boundary") {
    const Setup s = setup(63, 64, 0.5);
    for (StepRule rule : {StepRule::PowerIteration, StepRule::Backtracking}) {
        DualConfig cfg;
        cfg.step_rule = rule;
        cfg.tol = 1e-6;
        const DualState dual = solve_dual(s.problem, s.base, cfg);
        REQUIRE(dual.converged);
        CHECK(dual.vi_residual <= 1e-4 * s.problem.alpha);
        for (std::size_t i = 1; i < dual.objective_history.size(); ++i) {
            CHECK(dual.objective_history[i] <= dual.objective_history[i - 1]);
        }
        const OptimalitySystemSolution sol = recover_solution(s.problem, s.base, dual);
        CHECK(std::abs(sol.terminal_distance - s.problem.alpha) <= 1e-3 * s.problem.alpha);
        CHECK(sol.J1 == doctest::Approx(0.5 * std::pow(l2_norm(s.problem.grids(), sol.u1_star), 2)));
        CHECK(sol.J1 > 0.0);
        // y = y0 + z, p = p0 + q and u1* lives on U1
        CHECK(max_abs(sol.y - (sol.y0 + sol.z)) == 0.0);
        CHECK(max_abs(sol.p - (sol.p0 + sol.q)) == 0.0);
        CHECK(max_abs(sol.u1_star - restrict_to(s.problem.u1_mask(), sol.u1_star)) == 0.0);
        CHECK(std::abs(sol.nominal_terminal_distance - sol.terminal_distance) <= 1e-8 * s.problem.alpha);
        CHECK(sol.orthogonality_residuals.first == 0.0);
        CHECK(sol.orthogonality_residuals.second == 0.0);
    }
}

TEST_CASE("degenerate ball returns the zero control") {
    Setup s = setup(31, 32, 1.0);
    s.problem.alpha = s.gap_norm * 1.0000001;
    const DualState dual = solve_dual(s.problem, s.base);
    CHECK(dual.converged);
    CHECK(dual.iterations == 0);
    CHECK(l2_norm(s.problem.grids().space, dual.xi) == 0.0);
    const OptimalitySystemSolution sol = recover_solution(s.problem, s.base, dual);
    CHECK(max_abs(sol.u1_star) == 0.0);
    CHECK(sol.J1 == 0.0);
    CHECK(sol.terminal_distance <= s.problem.alpha);
}

TEST_CASE("alpha sweep") {
    const Setup s = setup(31, 32, 1.0);
    const double g = s.gap_norm;
    const SweepReport r = alpha_sweep(s.problem, s.base, {0.2 * g, 0.1 * g, 0.05 * g});
    REQUIRE(r.rows.size() == 3);
    CHECK(r.all_within_ball);
    CHECK(r.j1_monotone);
    for (const SweepRow& row : r.rows) {
        CHECK(row.error.empty());
        CHECK(row.terminal_distance <= row.alpha * (1.0 + 1e-3));
    }
    CHECK(r.rows[0].J1 < r.rows[1].J1);
    CHECK(r.rows[1].J1 < r.rows[2].J1);

    const SweepReport huge = alpha_sweep(s.problem, s.base, {2.0 * g});
    CHECK(huge.rows[0].J1 == 0.0);
    CHECK(huge.rows[0].within_ball);

    CHECK_THROWS_AS(alpha_sweep(s.problem, s.base, {0.2 * g, 0.2 * g}), PreconditionError);
    CHECK_THROWS_AS(alpha_sweep(s.problem, s.base, {0.1 * g, 0.2 * g}), PreconditionError);
    CHECK_THROWS_AS(alpha_sweep(s.problem, s.base, {0.1 * g, -0.2 * g}), PreconditionError);
    CHECK_THROWS_AS(alpha_sweep(s.problem, s.base, {}), PreconditionError);
}

TEST_CASE("unit h reproduces the nominal pipeline bit for bit") {
    const Setup nominal = setup(31, 32, 0.3);
    const Grids& g = nominal.problem.grids();
    const Setup unit = setup(31, 32, 0.3, make_h(UnitH{}, g, *fixture::heat()));
    const DualState dn = solve_dual(nominal.problem, nominal.base);
    const DualState du = solve_dual(unit.problem, unit.base);
    CHECK(dn.iterations == du.iterations);
    CHECK((dn.xi.values().array() == du.xi.values().array()).all());
    const OptimalitySystemSolution sn = recover_solution(nominal.problem, nominal.base, dn);
    const OptimalitySystemSolution su = recover_solution(unit.problem, unit.base, du);
    CHECK((sn.u1_star.values().array() == su.u1_star.values().array()).all());
    CHECK((sn.u2_star.values().array() == su.u2_star.values().array()).all());
    CHECK((sn.phi.values().array() == su.phi.values().array()).all());
    CHECK((sn.theta.values().array() == su.theta.values().array()).all());
    CHECK(sn.J1 == su.J1);
    CHECK(sn.terminal_distance == su.terminal_distance);
}

TEST_CASE("doubling target and radius doubles the controls") {
    const Setup a = setup(31, 32, 0.3, std::nullopt, 1.0, false, 0.1);
    Setup b = setup(31, 32, 0.3, std::nullopt, 1.0, false, 0.2);
    b.problem.alpha = 2.0 * a.problem.alpha;
    const DualConfig cfg;
    const DualState da = solve_dual(a.problem, a.base, cfg);
    const DualState db = solve_dual(b.problem, b.base, cfg);
    REQUIRE(da.converged);
    REQUIRE(db.converged);
    CHECK(rel(db.xi, 2.0 * da.xi) <= 1e-8);
    const OptimalitySystemSolution sa = recover_solution(a.problem, a.base, da);
    const OptimalitySystemSolution sb = recover_solution(b.problem, b.base, db);
    CHECK(rel(sb.u1_star, 2.0 * sa.u1_star) <= 1e-8);
    CHECK(rel(sb.u2_star, 2.0 * sa.u2_star) <= 1e-8);
}

TEST_CASE("base pair and the orthogonality diagnostics") {
    const Setup zero = setup(31, 32, 0.5, std::nullopt, 1.0, false);
    CHECK(max_abs(zero.base.y0) == 0.0);
    CHECK(max_abs(zero.base.p0) == 0.0);
    CHECK(zero.base.orthogonality.first == 0.0);

    const Grids g = build_grid({{0.0, 1.0}}, {31}, 1.0, 32);
    const Setup analytic = setup(31, 32, 0.5, make_h(AnalyticH{Point::Constant(1, 1.0)}, g, *fixture::heat()));
    CHECK(analytic.base.orthogonality.first > 0.0);
    CHECK(analytic.base.orthogonality.second > 0.0);
    const DualState dual = solve_dual(analytic.problem, analytic.base);
    CHECK(dual.converged);
    const OptimalitySystemSolution sol = recover_solution(analytic.problem, analytic.base, dual);
    CHECK(std::abs(sol.terminal_distance - analytic.problem.alpha) <= 1e-3 * analytic.problem.alpha);
}

TEST_CASE("leader preconditions") {
    Setup s = setup(15, 16, 0.5);
    s.problem.alpha = 0.0;
    CHECK_THROWS_AS(validate(s.problem), PreconditionError);
    s.problem.alpha = 0.1;
    s.problem.y_tg = SpaceField(4);
    CHECK_THROWS_AS(validate(s.problem), PreconditionError);
}
