#pragma once

#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hctl/fields.hpp"
#include "hctl/follower.hpp"
#include "hctl/htransform.hpp"
#include "hctl/parabolic.hpp"

namespace hctl {

/// The leader's terminal-ball problem. `perturbed` is the scheme built from
/// the perturbed generator; without an h model it is the follower's own
/// nominal scheme.
struct LeaderProblem {
    double alpha = 1.0;
    SpaceField y_tg;
    FollowerProblem follower;
    std::optional<HModel> hmodel;
    std::shared_ptr<const ThetaScheme> perturbed;
    /// Tolerance for the coupled forward-backward solves inside H and H*.
    /// Kept far below the dual tolerance so that H* stays the transpose of H
    /// to round-off level.
    CgOptions inner{1e-13, 500};

    const Grids& grids() const { return follower.grids(); }
    const SubdomainMask& u1_mask() const { return follower.u1_mask; }
    const SubdomainMask& u2_mask() const { return follower.u2_mask; }
};

/// Builds the perturbed scheme from the follower's generator and `hmodel`.
/// Unit h reuses a bitwise copy of the nominal generator.
LeaderProblem make_leader_problem(double alpha, SpaceField y_tg, FollowerProblem follower,
                                  std::optional<HModel> hmodel, CgOptions inner = {1e-13, 500});

void validate(const LeaderProblem& problem);

/// Follower optimum with u1 = 0 under the nominal model, plus the
/// max-norm of b_h . grad y0 and b_h . grad p0 (reported, never enforced).
struct BasePair {
    SpaceTimeField y0;
    SpaceTimeField p0;
    std::pair<double, double> orthogonality{0.0, 0.0};
    double kkt_residual = 0.0;
    int cg_iterations = 0;

    SpaceField y0_terminal() const { return y0.level_field(y0.levels() - 1); }
};

BasePair solve_base_pair(const LeaderProblem& problem);

/// Fields of the coupled system behind H* xi:
///   -dphi/dt = L_h^T phi + vartheta,  phi(T) = xi
///    dvartheta/dt = L_h vartheta - (1/beta) phi chi_U2,  vartheta(0) = 0
struct HstarFields {
    SpaceTimeField phi;
    SpaceTimeField vartheta;
    int iterations = 0;
};
/// Fields of the coupled system behind H u1:
///    dz/dt = L_h z + u1 chi_U1 - (1/beta) q chi_U2,  z(0) = 0
///   -dq/dt = L_h^T q + z,  q(T) = 0
struct HFields {
    SpaceTimeField z;
    SpaceTimeField q;
    int iterations = 0;
};

HstarFields solve_Hstar_system(const LeaderProblem& problem, const SpaceField& xi);
HFields solve_H_system(const LeaderProblem& problem, const SpaceTimeField& u1);
/// phi chi_U1.
SpaceTimeField apply_Hstar(const LeaderProblem& problem, const SpaceField& xi);
/// z(T).
SpaceField apply_H(const LeaderProblem& problem, const SpaceTimeField& u1);

/// Dual objective 1/2 ||H* xi||^2 + alpha ||xi|| - (xi, y_tg - y0(T)) and
/// the gradient of its smooth part, H H* xi - (y_tg - y0(T)).
struct DualEvaluation {
    double value = 0.0;
    double smooth = 0.0;
    SpaceField gradient;
};
DualEvaluation dual_value_grad(const LeaderProblem& problem, const BasePair& base, const SpaceField& xi);

/// Block soft-thresholding in the L2(Omega) norm: (1 - threshold/||v||)_+ v.
/// Returns zero when ||v|| <= threshold.
SpaceField prox_alpha_norm(const SpaceGrid& grid, const SpaceField& v, double threshold);

/// Optimality measure of the dual problem at xi given the smooth gradient.
double vi_residual(const SpaceGrid& grid, const SpaceField& xi, const SpaceField& gradient, double alpha);

enum class StepRule { PowerIteration, Backtracking };

struct DualConfig {
    StepRule step_rule = StepRule::PowerIteration;
    /// Stop when vi_residual <= tol * alpha.
    double tol = 1e-6;
    int max_iters = 20000;
    int power_iters = 30;
};

struct DualState {
    SpaceField xi;
    std::vector<double> objective_history;
    double vi_residual = 0.0;
    double step_size = 0.0;
    int iterations = 0;
    int restarts = 0;
    int backtracks = 0;
    int inner_iterations = 0;
    bool converged = false;
};

/// Accelerated proximal gradient with function-value restart.
DualState solve_dual(const LeaderProblem& problem, const BasePair& base, const DualConfig& config = {});

/// Power-method estimate of ||H H*|| in L2(Omega).
double estimate_hhstar_norm(const LeaderProblem& problem, int iterations);

struct OptimalitySystemSolution {
    SpaceTimeField y, p, phi, theta, y0, p0, z, q;
    SpaceTimeField u1_star, u2_star;
    double J1 = 0.0;
    double J2 = 0.0;
    double terminal_distance = 0.0;
    /// ||y_nominal(T) - y_tg|| with y_nominal the follower's state for (u1*, u2*).
    double nominal_terminal_distance = 0.0;
    std::pair<double, double> orthogonality_residuals{0.0, 0.0};
    double follower_kkt_residual = 0.0;
};

OptimalitySystemSolution recover_solution(const LeaderProblem& problem, const BasePair& base,
                                          const DualState& dual);

struct SweepRow {
    double alpha = 0.0;
    double terminal_distance = 0.0;
    double J1 = 0.0;
    double J2 = 0.0;
    int iterations = 0;
    bool converged = false;
    bool within_ball = false;
    std::string error;  // empty unless this entry failed
};

struct SweepReport {
    std::vector<SweepRow> rows;
    bool all_within_ball = false;
    bool j1_monotone = false;
    double ball_tolerance = 1e-3;
};

/// Full pipeline per alpha; entries run concurrently. Alphas must be
/// strictly decreasing and positive.
SweepReport alpha_sweep(const LeaderProblem& problem, const BasePair& base, const std::vector<double>& alphas,
                        const DualConfig& config = {});

}  // namespace hctl
