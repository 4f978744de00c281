#include <doctest.h>

#include <random>

#include "hctl/errors.hpp"
#include "hctl/fields.hpp"
#include "hctl/mesh.hpp"
#include "hctl/validate.hpp"

using namespace hctl;

TEST_CASE("grid spacing and node coordinates") {
    const Grids g = build_grid({{0.0, 1.0}}, {3}, 1.0, 4);
    CHECK(g.space.dx(0) == 0.25);
    CHECK(g.space.size() == 3);
    CHECK(g.space.coord(0, 0) == 0.25);
    CHECK(g.space.coord(1, 0) == 0.5);
    CHECK(g.space.coord(2, 0) == 0.75);
    CHECK(g.time.dt() == 0.25);
    CHECK(g.time.levels() == 5);
    CHECK(g.time.t(4) == 1.0);

    const Grids single = build_grid({{0.0, 2.0}}, {1}, 1.0, 1);
    CHECK(single.space.size() == 1);
    CHECK(single.space.coord(0, 0) == 1.0);
    CHECK(single.space.dx(0) == 1.0);
}

TEST_CASE("sizing errors") {
    CHECK_THROWS_AS(build_grid({{0.0, 1.0}}, {0}, 1.0, 4), SizingError);
    CHECK_THROWS_AS(build_grid({{1.0, 1.0}}, {3}, 1.0, 4), SizingError);
    CHECK_THROWS_AS(build_grid({{0.0, 1.0}}, {3}, 0.0, 4), SizingError);
    CHECK_THROWS_AS(build_grid({{0.0, 1.0}}, {3}, 1.0, 0), SizingError);
    CHECK_THROWS_AS(build_grid({{0.0, 1.0}}, {3, 3}, 1.0, 2), SizingError);
}

TEST_CASE("2D node numbering is x-fastest") {
    const Grids g = build_grid({{0.0, 1.0}, {0.0, 2.0}}, {3, 1}, 1.0, 2);
    CHECK(g.space.size() == 3);
    CHECK(g.space.cell_volume() == doctest::Approx(0.25 * 1.0));
    CHECK(g.space.index(2, 0) == 2);
    CHECK(g.space.coord(2, 0) == 0.75);
    CHECK(g.space.coord(2, 1) == 1.0);
}

TEST_CASE("masks from boxes") {
    const Grids g = build_grid({{0.0, 1.0}}, {3}, 1.0, 4);
    const SubdomainMask a = mask_from_box(g.space, {{0.2, 0.4}}, SubdomainLabel::U1);
    CHECK(a.count() == 1);
    CHECK(a.contains(0));
    CHECK_FALSE(a.warning);

    const SubdomainMask b = mask_from_box(g.space, {{0.6, 0.8}}, SubdomainLabel::U2);
    CHECK(b.contains(2));
    CHECK(disjoint(a, b));

    const SubdomainMask out = mask_from_box(g.space, {{2.0, 3.0}}, SubdomainLabel::U1);
    CHECK(out.count() == 0);
    CHECK(out.warning);

    // node on the box edge is excluded
    const SubdomainMask edge = mask_from_box(g.space, {{0.25, 0.6}}, SubdomainLabel::U1);
    CHECK(edge.count() == 1);
    CHECK(edge.contains(1));

    const SubdomainMask both = mask_union(a, b, SubdomainLabel::U);
    CHECK(both.count() == 2);
    CHECK_FALSE(disjoint(both, a));
}

TEST_CASE("inner products") {
    const Grids g = build_grid({{0.0, 1.0}}, {3}, 1.0, 4);
    SpaceField ones(3);
    ones.values().setOnes();
    CHECK(inner_product(g.space, ones, ones) == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(inner_product(g.space, ones, SpaceField(3)) == 0.0);

    SpaceTimeField st(g);
    st.values().setOnes();
    CHECK(inner_product(g, st, st) == doctest::Approx(5 * 3 * 0.25 * 0.25).epsilon(1e-15));

    CHECK_THROWS_AS(inner_product(g.space, ones, SpaceField(4)), PreconditionError);
    CHECK_THROWS_AS(inner_product(g, st, SpaceTimeField(3, 4)), PreconditionError);
}

TEST_CASE("inner product symmetry, restriction and definiteness on seeded probes") {
    const Grids g = build_grid({{0.0, 1.0}}, {31}, 1.0, 16);
    const SubdomainMask mask = mask_from_box(g.space, {{0.2, 0.55}}, SubdomainLabel::U1);
    std::mt19937_64 rng(7);
    for (int probe = 0; probe < 10; ++probe) {
        const SpaceTimeField f = random_spacetime_field(g, rng);
        const SpaceTimeField h = random_spacetime_field(g, rng);
        const double fh = inner_product(g, f, h);
        CHECK(std::abs(fh - inner_product(g, h, f)) <= 1e-15 * std::abs(fh) + 1e-300);
        const double restricted = inner_product(g, f, h, &mask);
        CHECK(restricted == doctest::Approx(inner_product(g, restrict_to(mask, f), h)).epsilon(1e-13));
        CHECK(restricted == doctest::Approx(inner_product(g, f, restrict_to(mask, h))).epsilon(1e-13));
        CHECK(inner_product(g, f, f) > 0.0);
        const SpaceField a = random_space_field(g.space, rng);
        CHECK(l2_norm(g.space, a) > 0.0);
    }
}
