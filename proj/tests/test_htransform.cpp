#include <doctest.h>

#include <cmath>
#include <numbers>

#include "hctl/errors.hpp"
#include "hctl/htransform.hpp"

using namespace hctl;
using std::numbers::pi;

namespace {

CoefficientModel constant_model(double a, double mu = 0.0) {
    return CoefficientModel::constant(Point::Constant(1, mu), SmallMatrix::Constant(1, 1, a), a);
}

SpaceField one_plus_half_sine(const SpaceGrid& grid) {
    SpaceField f(grid.size());
    for (int i = 0; i < grid.size(); ++i) f[i] = 1.0 + 0.5 * std::sin(pi * grid.coord(i, 0));
    return f;
}

double kernel_over_h_max(const HResiduals& r) {
    return r.kernel_over_h.values().cwiseAbs().maxCoeff();
}

}  // namespace

TEST_CASE("unit h") {
    const Grids g = build_grid({{0.0, 1.0}}, {15}, 1.0, 8);
    const auto c = constant_model(1.0);
    const HModel h = make_h(UnitH{}, g, c);
    CHECK(h.is_unit());
    CHECK(h.h.values().minCoeff() == 1.0);
    CHECK(h.h.values().maxCoeff() == 1.0);
    CHECK(max_abs(h.grad_log_h[0]) == 0.0);
    CHECK(max_abs(drift_field(h)[0]) == 0.0);
    CHECK(hjb_residual(h, g, c) == 0.0);
}

TEST_CASE("analytic h in closed form") {
    const Grids g = build_grid({{0.0, 1.0}}, {15}, 1.0, 8);
    const auto c = constant_model(1.0);
    const HModel h = make_h(AnalyticH{Point::Constant(1, 1.0)}, g, c);
    CHECK(h.kappa == -0.5);
    for (int k = 0; k < g.time.levels(); ++k) {
        for (int n = 0; n < g.space.size(); ++n) {
            const double expected = std::exp(g.space.coord(n, 0) - 0.5 * g.time.t(k));
            CHECK(std::abs(h.h(k, n) - expected) <= 1e-15 * expected);
            CHECK(h.grad_log_h[0](k, n) == 1.0);
            CHECK(h.b_h[0](k, n) == 1.0);
        }
    }
    // log h is affine in (t, x), so the discrete log equation holds to round-off
    CHECK(hjb_residual(h, g, c) <= 1e-12);
    // the kernel equation only up to the O(dx^2 + dt^2) central/trapezoid error
    const HResiduals r = h_residuals(h, g, c);
    const double dx = g.space.dx(0);
    const double dt = g.time.dt();
    CHECK(r.kernel_max <= 3.0 * (dx * dx + dt * dt));

    // refinement keeps the log residual at round-off and shrinks the kernel residual
    const Grids fine = build_grid({{0.0, 1.0}}, {31}, 1.0, 16);
    const HModel hf = make_h(AnalyticH{Point::Constant(1, 1.0)}, fine, c);
    CHECK(hjb_residual(hf, fine, c) <= 1e-12);
    CHECK(h_residuals(hf, fine, c).kernel_max < 0.3 * r.kernel_max);
}

TEST_CASE("analytic h drift: a c, linear in c") {
    const Grids g = build_grid({{0.0, 1.0}}, {7}, 1.0, 4);
    const auto c2 = constant_model(2.0);
    CHECK(max_abs(drift_field(make_h(AnalyticH{Point::Constant(1, 1.0)}, g, c2))[0] -
                  2.0 * [&] {
                      SpaceTimeField ones(g);
                      ones.values().setOnes();
                      return ones;
                  }()) == 0.0);

    const auto c = constant_model(1.3, 0.4);
    const HModel ha = make_h(AnalyticH{Point::Constant(1, 0.3)}, g, c);
    const HModel hb = make_h(AnalyticH{Point::Constant(1, -1.1)}, g, c);
    const HModel hs = make_h(AnalyticH{Point::Constant(1, 0.3 - 1.1)}, g, c);
    CHECK(max_abs(hs.b_h[0] - (ha.b_h[0] + hb.b_h[0])) <= 1e-14);

    // kappa accounts for the drift: h stays a kernel
    CHECK(hjb_residual(ha, g, c) <= 1e-12);
}

TEST_CASE("analytic h in 2D with a full diffusion matrix") {
    const Grids g = build_grid({{0.0, 1.0}, {0.0, 1.0}}, {9, 9}, 1.0, 8);
    SmallMatrix a(2, 2);
    a << 1.0, 0.3, 0.3, 0.5;
    Point mu(2);
    mu << 0.2, -0.1;
    const auto coeffs = CoefficientModel::constant(mu, a, 0.3);
    Point cvec(2);
    cvec << 1.0, -2.0;
    const HModel h = make_h(AnalyticH{cvec}, g, coeffs);
    const Point b = a * cvec;
    CHECK(h.b_h[0](3, 10) == doctest::Approx(b[0]));
    CHECK(h.b_h[1](3, 10) == doctest::Approx(b[1]));
    CHECK(hjb_residual(h, g, coeffs) <= 1e-11);
}

TEST_CASE("analytic h needs constant coefficients") {
    const Grids g = build_grid({{0.0, 1.0}}, {7}, 1.0, 4);
    const auto affine = CoefficientModel::affine(Point::Zero(1), {Point::Constant(1, 1.0)},
                                                 SmallMatrix::Constant(1, 1, 1.0), {SmallMatrix::Zero(1, 1)}, 1.0);
    CHECK_THROWS_AS(make_h(AnalyticH{Point::Constant(1, 1.0)}, g, affine), PreconditionError);
    CHECK_THROWS_AS(make_h(AnalyticH{Point::Constant(2, 1.0)}, g, constant_model(1.0)), PreconditionError);
}

TEST_CASE("numeric h stays positive and its kernel residual decays at first order in dt") {
    const auto c = constant_model(1.0);
    double residual[3];
    const int steps[3] = {1024, 2048, 4096};
    for (int i = 0; i < 3; ++i) {
        const Grids g = build_grid({{0.0, 1.0}}, {7}, 1.0, steps[i]);
        const HModel h = make_h(NumericH{one_plus_half_sine(g.space)}, g, c);
        CHECK(h.h.values().minCoeff() > 0.0);
        residual[i] = h_residuals(h, g, c).kernel_max;
    }
    for (int i = 0; i < 2; ++i) {
        const double order = std::log2(residual[i] / residual[i + 1]);
        INFO("dt order " << order);
        CHECK(order >= 0.9);
    }
}

TEST_CASE("numeric h: log-equation and kernel residuals agree to leading order") {
    const auto c = constant_model(1.0);
    const Grids g = build_grid({{0.0, 1.0}}, {15}, 1.0, 1024);
    const HModel h = make_h(NumericH{one_plus_half_sine(g.space)}, g, c);
    const HResiduals r = h_residuals(h, g, c);
    const double kh = kernel_over_h_max(r);
    CHECK(std::abs(r.log_max - kh) <= 0.05 * kh);
    CHECK(r.gap_max <= 0.05 * kh);
    CHECK(hjb_residual(h, g, c) == r.log_max);
}

TEST_CASE("numeric h: constants are exact kernels under zero-flux boundaries") {
    const auto c = constant_model(0.7, 0.5);
    const Grids g = build_grid({{0.0, 1.0}}, {15}, 1.0, 16);
    SpaceField three(15);
    three.values().setConstant(3.0);
    const HModel h = make_h(NumericH{three}, g, c);
    CHECK((h.h.values().array() - 3.0).abs().maxCoeff() <= 1e-12);
    CHECK(max_abs(h.b_h[0]) <= 1e-10);
}

TEST_CASE("numeric h drift is bounded by a max |grad log h|") {
    const auto c = constant_model(1.5);
    const Grids g = build_grid({{0.0, 1.0}}, {31}, 1.0, 32);
    const HModel h = make_h(NumericH{one_plus_half_sine(g.space)}, g, c);
    const double bound = 1.5 * max_abs(h.grad_log_h[0]);
    CHECK(std::isfinite(max_abs(h.b_h[0])));
    CHECK(max_abs(h.b_h[0]) <= bound * (1.0 + 1e-14));
    CHECK(max_abs(h.b_h[0]) > 0.0);
}

TEST_CASE("numeric h rejects nonpositive terminal data") {
    const Grids g = build_grid({{0.0, 1.0}}, {7}, 1.0, 4);
    SpaceField bad = one_plus_half_sine(g.space);
    bad[3] = 0.0;
    CHECK_THROWS_AS(make_h(NumericH{bad}, g, constant_model(1.0)), PreconditionError);
    CHECK_THROWS_AS(make_h(NumericH{SpaceField(5)}, g, constant_model(1.0)), PreconditionError);
}

TEST_CASE("one-sided gradient is exact on quadratics") {
    const Grids g = build_grid({{0.0, 1.0}}, {9}, 1.0, 1);
    SpaceTimeField f(g);
    for (int k = 0; k < 2; ++k) {
        for (int n = 0; n < 9; ++n) f(k, n) = std::pow(g.space.coord(n, 0), 2);
    }
    const VectorField grad = gradient_one_sided(g.space, f);
    for (int n = 0; n < 9; ++n) CHECK(grad[0](1, n) == doctest::Approx(2.0 * g.space.coord(n, 0)).epsilon(1e-12));
}

TEST_CASE("perturbed generator") {
    const Grids g = build_grid({{0.0, 1.0}}, {15}, 1.0, 4);
    auto coeffs = std::make_shared<CoefficientModel>(constant_model(1.0));
    const DiscreteGenerator nominal = assemble_generator(g, coeffs);

    SUBCASE("unit h returns the identical matrix") {
        const DiscreteGenerator same = perturbed_generator(make_h(UnitH{}, g, *coeffs), nominal);
        const SparseMatrix& a = same.step_matrix(0);
        const SparseMatrix& b = nominal.step_matrix(0);
        REQUIRE(a.nonZeros() == b.nonZeros());
        for (int i = 0; i < a.nonZeros(); ++i) {
            CHECK(a.valuePtr()[i] == b.valuePtr()[i]);
            CHECK(a.innerIndexPtr()[i] == b.innerIndexPtr()[i]);
        }
    }
    SUBCASE("analytic c = 1 adds the central first derivative") {
        const DiscreteGenerator pert = perturbed_generator(make_h(AnalyticH{Point::Constant(1, 1.0)}, g, *coeffs), nominal);
        const SparseMatrix B = pert.step_matrix(0) - nominal.step_matrix(0);
        Eigen::VectorXd x(15);
        for (int n = 0; n < 15; ++n) x[n] = g.space.coord(n, 0);
        const Eigen::VectorXd bx = B * x;
        for (int n = 1; n < 14; ++n) CHECK(bx[n] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(pert.stencil_log().upwind_rows == 0);
    }
    SUBCASE("large drift switches to upwind and logs it") {
        const DiscreteGenerator pert =
            perturbed_generator(make_h(AnalyticH{Point::Constant(1, 100.0)}, g, *coeffs), nominal);
        CHECK(pert.stencil_log().upwind_rows > 0);
        CHECK(pert.stencil_log().max_peclet > 2.0);
    }
}
