#pragma once

#include <cstdint>
#include <random>
#include <vector>

#include "hctl/report.hpp"
#include "hctl/scenario.hpp"

namespace hctl {

/// Seeded standard-normal fields for probes.
SpaceField random_space_field(const SpaceGrid& grid, std::mt19937_64& rng);
SpaceTimeField random_spacetime_field(const Grids& grids, std::mt19937_64& rng);

/// Relative defect of <y(T;s), v> + <y(s), r> = <s, p(r, v)> for one probe.
double forward_backward_defect(const ThetaScheme& scheme, const SpaceTimeField& s, const SpaceTimeField& r,
                               const SpaceField& v);
/// Relative defect of <H u1, xi>_Omega = <u1, H* xi>_{(0,T) x U1}.
double h_pairing_defect(const LeaderProblem& problem, const SpaceTimeField& u1, const SpaceField& xi);

/// Relative error between the adjoint-based J2 directional derivative in u2
/// and a central difference with step `eps` (scaled by the probe norms).
double follower_gradient_error(const FollowerProblem& problem, const SpaceTimeField& u1, const SpaceTimeField& u2,
                               const SpaceTimeField& direction, double eps = 1e-5);
/// Same for the smooth part of the leader dual objective.
double dual_gradient_error(const LeaderProblem& problem, const BasePair& base, const SpaceField& xi,
                           const SpaceField& direction, double eps = 1e-5);

/// Every module's invariants on the given scenario.
std::vector<CheckResult> run_invariant_suite(const Scenario& scenario);

}  // namespace hctl
