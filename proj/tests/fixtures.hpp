#pragma once

#include <cmath>
#include <memory>
#include <numbers>

#include "hctl/follower.hpp"
#include "hctl/leader.hpp"
#include "hctl/mesh.hpp"
#include "hctl/parabolic.hpp"

namespace fixture {

inline std::shared_ptr<const hctl::CoefficientModel> heat(double a = 1.0, double mu = 0.0) {
    return std::make_shared<hctl::CoefficientModel>(hctl::CoefficientModel::constant(
        hctl::Point::Constant(1, mu), hctl::SmallMatrix::Constant(1, 1, a), a));
}

inline hctl::SpaceField sine(const hctl::SpaceGrid& grid, double amplitude = 1.0) {
    hctl::SpaceField f(grid.size());
    for (int n = 0; n < grid.size(); ++n) f[n] = amplitude * std::sin(std::numbers::pi * grid.coord(n, 0));
    return f;
}

inline hctl::SpaceTimeField t_sine(const hctl::Grids& g, double amplitude = 1.0) {
    hctl::SpaceTimeField f(g);
    for (int k = 0; k < g.time.levels(); ++k) {
        for (int n = 0; n < g.space.size(); ++n) {
            f(k, n) = amplitude * g.time.t(k) * std::sin(std::numbers::pi * g.space.coord(n, 0));
        }
    }
    return f;
}

inline hctl::FollowerProblem follower(int n, int m, double beta = 1.0, bool with_reference = true,
                                      std::shared_ptr<const hctl::CoefficientModel> coeffs = heat()) {
    const hctl::Grids g = hctl::build_grid({{0.0, 1.0}}, {n}, 1.0, m);
    hctl::FollowerProblem p;
    p.beta = beta;
    p.model = std::make_shared<hctl::ThetaScheme>(hctl::assemble_generator(g, coeffs));
    p.y_rf = with_reference ? t_sine(g) : hctl::SpaceTimeField(g);
    p.u1_mask = hctl::mask_from_box(g.space, {{0.1, 0.4}}, hctl::SubdomainLabel::U1);
    p.u2_mask = hctl::mask_from_box(g.space, {{0.6, 0.9}}, hctl::SubdomainLabel::U2);
    p.cg = {1e-12, 500};
    return p;
}

inline double rel(const hctl::SpaceTimeField& a, const hctl::SpaceTimeField& b) {
    return (a.values() - b.values()).norm() / std::max(1e-300, b.values().norm());
}
inline double rel(const hctl::SpaceField& a, const hctl::SpaceField& b) {
    return (a.values() - b.values()).norm() / std::max(1e-300, b.values().norm());
}

}  // namespace fixture
