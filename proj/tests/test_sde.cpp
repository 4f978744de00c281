#include <doctest.h>

#include <cmath>
#include <numeric>

#include "fixtures.hpp"
#include "hctl/errors.hpp"
#include "hctl/sde.hpp"

using namespace hctl;

namespace {

struct Moments {
    double mean = 0.0, var = 0.0, n = 0.0;
    double se_mean() const { return std::sqrt(var / n); }
    // normal data: Var(s^2) ~ 2 sigma^4 / n
    double se_var() const { return var * std::sqrt(2.0 / n); }
};

Moments terminal_moments(const PathEnsemble& e) {
    Moments m;
    m.n = e.n_paths;
    double s = 0.0;
    for (int p = 0; p < e.n_paths; ++p) s += e.terminal(p)[0];
    m.mean = s / m.n;
    double q = 0.0;
    for (int p = 0; p < e.n_paths; ++p) q += std::pow(e.terminal(p)[0] - m.mean, 2);
    m.var = q / (m.n - 1.0);
    return m;
}

SimulationOptions terminal_only(const Grids& g, Absorption a = Absorption::None) {
    SimulationOptions o;
    o.absorption = a;
    o.record_levels = {0, g.time.steps()};
    return o;
}

Point at(double x) { return Point::Constant(1, x); }

}  // namespace

TEST_CASE("Brownian moments") {
    const Grids g = build_grid({{-5.0, 5.0}}, {99}, 1.0, 50);
    const PathEnsemble e = simulate_nominal(*fixture::heat(), at(0.0), g, 100000, 3, terminal_only(g));
    const Moments m = terminal_moments(e);
    CHECK(std::abs(m.mean) <= 3.0 * m.se_mean());
    CHECK(std::abs(m.var - 1.0) <= 3.0 * m.se_var());
    CHECK(e.alive() == e.n_paths);
}

TEST_CASE("drift-dominated motion") {
    const Grids g = build_grid({{-5.0, 5.0}}, {99}, 1.0, 50);
    const PathEnsemble e = simulate_nominal(*fixture::heat(1e-4, 1.0), at(0.2), g, 20000, 4, terminal_only(g));
    const Moments m = terminal_moments(e);
    CHECK(std::abs(m.mean - 1.2) <= 3.0 * m.se_mean());
    CHECK(m.var == doctest::Approx(1e-4).epsilon(0.05));
}

TEST_CASE("seed determinism, independent of threading") {
    const Grids g = build_grid({{0.0, 1.0}}, {15}, 1.0, 32);
    const auto c = fixture::heat();
    const PathEnsemble a = simulate_nominal(*c, at(0.5), g, 1, 77);
    const PathEnsemble b = simulate_nominal(*c, at(0.5), g, 1, 77);
    CHECK(a.states == b.states);

    SimulationOptions one;
    one.threads = 1;
    one.absorption = Absorption::Bridge;
    SimulationOptions many = one;
    many.threads = 4;
    const PathEnsemble s1 = simulate_nominal(*c, at(0.5), g, 2000, 78, one);
    const PathEnsemble s4 = simulate_nominal(*c, at(0.5), g, 2000, 78, many);
    CHECK(s1.states == s4.states);
    CHECK(s1.exited == s4.exited);
    CHECK(s1.exit_level == s4.exit_level);

    const PathEnsemble other = simulate_nominal(*c, at(0.5), g, 2000, 79, one);
    CHECK(other.states != s1.states);
}

TEST_CASE("absorbed paths stay inside before exit") {
    const Grids g = build_grid({{0.0, 1.0}}, {15}, 1.0, 64);
    for (Absorption mode : {Absorption::FirstCrossing, Absorption::Bridge}) {
        SimulationOptions o;
        o.absorption = mode;
        const PathEnsemble e = simulate_nominal(*fixture::heat(), at(0.5), g, 5000, 5, o);
        CHECK(e.alive() < e.n_paths);
        CHECK(e.alive() > 0);
        for (int p = 0; p < e.n_paths; ++p) {
            const int stop = e.exited[p] ? e.exit_level[p] : g.time.steps() + 1;
            if (e.exited[p]) CHECK(e.exit_level[p] >= 1);
            for (int k = 0; k < stop; ++k) {
                const double x = e.state(p, k, 0);
                if (!(x > 0.0 && x < 1.0)) FAIL("pre-exit state outside the domain at path " << p << " level " << k);
            }
        }
    }
    CHECK_THROWS_AS(simulate_nominal(*fixture::heat(), at(1.5), g, 10, 1, terminal_only(g, Absorption::Bridge)),
                    PreconditionError);
    CHECK_THROWS_AS(simulate_nominal(*fixture::heat(), at(0.5), g, 0, 1), PreconditionError);
}

TEST_CASE("bridge correction kills at least the first-crossing paths") {
    const Grids g = build_grid({{0.0, 1.0}}, {15}, 1.0, 16);
    const PathEnsemble fc = simulate_nominal(*fixture::heat(), at(0.3), g, 20000, 6, terminal_only(g, Absorption::FirstCrossing));
    const PathEnsemble br = simulate_nominal(*fixture::heat(), at(0.3), g, 20000, 6, terminal_only(g, Absorption::Bridge));
    CHECK(br.alive() < fc.alive());
}

TEST_CASE("unit h perturbation is the nominal diffusion in distribution") {
    const Grids g = build_grid({{-5.0, 5.0}}, {99}, 1.0, 50);
    const auto c = fixture::heat();
    const HModel unit = make_h(UnitH{}, g, *c);
    const PathEnsemble nominal = simulate_nominal(*c, at(0.3), g, 50000, 8, terminal_only(g));
    const PathEnsemble perturbed = simulate_perturbed(*c, unit, at(0.3), g, 50000, 8, terminal_only(g));
    // distinct streams for the same seed
    CHECK(nominal.states != perturbed.states);
    const Moments a = terminal_moments(nominal);
    const Moments b = terminal_moments(perturbed);
    CHECK(std::abs(a.mean - b.mean) <= 3.0 * std::hypot(a.se_mean(), b.se_mean()));
    CHECK(std::abs(b.mean - 0.3) <= 3.0 * b.se_mean());
    CHECK(std::abs(b.var - 1.0) <= 3.0 * b.se_var());
}

TEST_CASE("analytic h adds the constant drift a c") {
    const Grids g = build_grid({{-5.0, 5.0}}, {99}, 1.0, 50);
    const auto c = fixture::heat();
    const HModel h = make_h(AnalyticH{Point::Constant(1, 1.0)}, g, *c);
    const PathEnsemble e = simulate_perturbed(*c, h, at(0.1), g, 50000, 9, terminal_only(g));
    const Moments m = terminal_moments(e);
    CHECK(std::abs(m.mean - 1.1) <= 3.0 * m.se_mean());
    CHECK(std::abs(m.var - 1.0) <= 3.0 * m.se_var());
    CHECK(e.clamped == 0);
}

TEST_CASE("numeric h drift lookups outside the node hull are clamped and counted") {
    const Grids g = build_grid({{0.0, 1.0}}, {15}, 1.0, 64);
    const auto c = fixture::heat();
    SpaceField terminal(15);
    for (int n = 0; n < 15; ++n) terminal[n] = 1.0 + 0.5 * std::sin(3.14159 * g.space.coord(n, 0));
    const HModel h = make_h(NumericH{terminal}, g, *c);
    const PathEnsemble free = simulate_perturbed(*c, h, at(0.5), g, 2000, 10);
    CHECK(free.clamped > 0);
    const PathEnsemble again = simulate_perturbed(*c, h, at(0.5), g, 2000, 10);
    CHECK(again.clamped == free.clamped);
    CHECK(again.states == free.states);
}

TEST_CASE("martingale property of the h ratio") {
    const Grids g = build_grid({{0.0, 1.0}}, {31}, 1.0, 64);
    const auto c = fixture::heat();

    const StatReport unit = martingale_check(*c, make_h(UnitH{}, g, *c), at(0.5), g, 1000, 1, 1.0);
    CHECK(unit.estimate == 1.0);
    CHECK(unit.standard_error == 0.0);
    CHECK(unit.pass);

    const HModel h = make_h(AnalyticH{Point::Constant(1, 1.0)}, g, *c);
    const StatReport start = martingale_check(*c, h, at(0.5), g, 1000, 1, 0.0);
    CHECK(start.estimate == 1.0);
    CHECK(start.standard_error == 0.0);

    for (double cval : {1.0, -0.5, 2.0}) {
        CAPTURE(cval);
        const HModel hc = make_h(AnalyticH{Point::Constant(1, cval)}, g, *c);
        const StatReport r = martingale_check(*c, hc, at(0.5), g, 100000, 11, 1.0);
        INFO("estimate " << r.estimate << " se " << r.standard_error);
        CHECK(r.pass);
        CHECK(r.bias_allowance == doctest::Approx(g.time.dt()));
        CHECK(std::abs(r.estimate - 1.0) <= 3.0 * r.standard_error + r.bias_allowance);
    }

    CHECK_THROWS_AS(martingale_check(*c, h, at(0.5), g, 100, 1, 0.3), PreconditionError);
    SpaceField ones(31);
    ones.values().setOnes();
    CHECK_THROWS_AS(martingale_check(*c, make_h(NumericH{ones}, g, *c), at(0.5), g, 100, 1, 1.0),
                    PreconditionError);
}

TEST_CASE("Feynman-Kac agreement with the backward solver") {
    const Grids g = build_grid({{0.0, 1.0}}, {31}, 1.0, 64);
    const auto c = fixture::heat();
    const double dx = g.space.dx(0);

    const StatReport zero = feynman_kac_check(c, SpaceField(31), g, at(0.5), 1000, 1);
    CHECK(zero.estimate == 0.0);
    CHECK(zero.reference == 0.0);
    CHECK(zero.pass);

    const SpaceField sine = fixture::sine(g.space);
    const StatReport mid = feynman_kac_check(c, sine, g, at(0.5), 100000, 12);
    INFO("mc " << mid.estimate << " pde " << mid.reference << " se " << mid.standard_error);
    CHECK(mid.pass);
    CHECK(mid.bias_allowance == doctest::Approx(g.time.dt() + dx * dx));
    // closed form for the heat kernel with a = 1: e^{-pi^2 T / 2} sin(pi x0)
    CHECK(mid.reference == doctest::Approx(std::exp(-std::pow(std::numbers::pi, 2) / 2.0)).epsilon(0.02));

    const StatReport edge = feynman_kac_check(c, sine, g, at(dx), 100000, 13);
    CHECK(edge.pass);
    CHECK(edge.reference < 3.0 * edge.standard_error + edge.bias_allowance);
    CHECK(edge.estimate < 3.0 * edge.standard_error + edge.bias_allowance);

    CHECK_THROWS_AS(feynman_kac_check(c, sine, g, at(0.5), 100, 1, 1.0, Absorption::None), PreconditionError);
}

TEST_CASE("interpolation") {
    const Grids g = build_grid({{0.0, 1.0}}, {9}, 1.0, 1);
    Eigen::VectorXd lin(9);
    for (int n = 0; n < 9; ++n) lin[n] = 2.0 * g.space.coord(n, 0) + 1.0;
    bool clamped = true;
    CHECK(interpolate(g.space, lin, at(0.537), false, &clamped) == doctest::Approx(2.074));
    CHECK_FALSE(clamped);
    CHECK(interpolate(g.space, lin, at(0.01), false, &clamped) == doctest::Approx(lin[0]));
    CHECK(clamped);
    CHECK(interpolate(g.space, lin, at(0.05), true) == doctest::Approx(0.5 * lin[0]));
    CHECK(interpolate(g.space, lin, at(1.0), true) == doctest::Approx(0.0));
}

TEST_CASE("pairwise sum") {
    std::vector<double> v(1001);
    std::iota(v.begin(), v.end(), 1.0);
    CHECK(pairwise_sum(v.data(), v.size()) == 1001.0 * 1002.0 / 2.0);
    CHECK(pairwise_sum(v.data(), 0) == 0.0);
    std::vector<double> tiny(1 << 16, 0.1);
    CHECK(std::abs(pairwise_sum(tiny.data(), tiny.size()) - 0.1 * tiny.size()) <= 1e-9);
}
