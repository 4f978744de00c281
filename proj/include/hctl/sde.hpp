#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "hctl/coefficients.hpp"
#include "hctl/fields.hpp"
#include "hctl/htransform.hpp"
#include "hctl/mesh.hpp"
#include "hctl/parabolic.hpp"

namespace hctl {

/// How paths interact with the boundary of the domain box.
///   None: free motion.
///   FirstCrossing: killed when a step lands outside.
///   Bridge: additionally killed with the Brownian-bridge probability of an
///     unobserved excursion between two inside points.
enum class Absorption { None, FirstCrossing, Bridge };

/// Euler-Maruyama paths. States are stored path-major for the recorded
/// levels only: state(p, r, axis) is the position of path p at level
/// recorded_levels[r]. After exit a path is frozen at its last inside position.
struct PathEnsemble {
    int n_paths = 0;
    int dim = 0;
    TimeGrid times{1.0, 1};
    std::vector<int> recorded_levels;
    std::vector<double> states;
    std::vector<char> exited;
    std::vector<int> exit_level;  // -1 while alive
    std::uint64_t seed = 0;
    long clamped = 0;  // drift lookups outside the node hull (Numeric h)

    double state(int path, int r, int axis) const {
        return states[(static_cast<std::size_t>(path) * recorded_levels.size() + r) * dim + axis];
    }
    Point terminal(int path) const;
    int alive() const;
};

struct SimulationOptions {
    Absorption absorption = Absorption::None;
    /// Levels to keep; empty keeps every level.
    std::vector<int> record_levels;
    unsigned threads = 0;
};

PathEnsemble simulate_nominal(const CoefficientModel& coefficients, const Point& x0, const Grids& grids,
                              int n_paths, std::uint64_t seed, const SimulationOptions& options = {});

/// Drift mu + b_h. Uses a random stream independent of simulate_nominal for
/// the same seed.
PathEnsemble simulate_perturbed(const CoefficientModel& coefficients, const HModel& hmodel, const Point& x0,
                                const Grids& grids, int n_paths, std::uint64_t seed,
                                const SimulationOptions& options = {});

/// Multilinear interpolation of node values. Outside the node hull the
/// value either decays linearly to zero at the domain boundary
/// (`zero_boundary`) or is clamped to the nearest hull point; `clamped` is set
/// when clamping happened.
double interpolate(const SpaceGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& values, const Point& x,
                   bool zero_boundary, bool* clamped = nullptr);

/// Sample statistics against a reference value, with pass iff
/// |estimate - reference| <= 3 SE + bias_allowance.
struct StatReport {
    double estimate = 0.0;
    double reference = 0.0;
    double standard_error = 0.0;
    double bias_allowance = 0.0;
    double C = 1.0;
    long n_paths = 0;
    bool pass = false;
};

/// Mean of h(t_check, x_t)/h(0, x0) along unabsorbed nominal paths;
/// bias allowance C dt. Requires a closed-form h (Unit or Analytic) and
/// t_check on a time level.
StatReport martingale_check(const CoefficientModel& coefficients, const HModel& hmodel, const Point& x0,
                            const Grids& grids, int n_paths, std::uint64_t seed, double t_check, double C = 1.0);

/// Monte Carlo E[g(x_T) 1{no exit}] against w(0, x0) where dw/dt + L w = 0,
/// w(T) = g with Dirichlet absorption. Bias allowance C (dt + dx^2).
StatReport feynman_kac_check(std::shared_ptr<const CoefficientModel> coefficients, const SpaceField& terminal_g,
                             const Grids& grids, const Point& x0, int n_paths, std::uint64_t seed,
                             double C = 1.0, Absorption absorption = Absorption::Bridge,
                             const GeneratorOptions& generator_options = {});

/// Pairwise (cascade) sum; deterministic for a fixed input order.
double pairwise_sum(const double* data, std::size_t n);

}  // namespace hctl
