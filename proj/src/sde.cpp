#include "hctl/sde.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <random>
#include <sstream>

#include "hctl/errors.hpp"
#include "hctl/parallel.hpp"

namespace hctl {

namespace {

constexpr std::uint64_t kNominalStream = 0x6e6f6d696e616cULL;
constexpr std::uint64_t kPerturbedStream = 0x7065727475726bULL;

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

std::uint64_t path_seed(std::uint64_t seed, std::uint64_t stream, int path) {
    return splitmix64(splitmix64(seed ^ splitmix64(stream)) + static_cast<std::uint64_t>(path));
}

using DriftAt = std::function<Point(int level, double t, const Point& x, bool& clamped)>;

bool inside(const SpaceGrid& grid, const Point& x) {
    for (int axis = 0; axis < grid.dim(); ++axis) {
        if (!(x[axis] > grid.bounds(axis).lo && x[axis] < grid.bounds(axis).hi)) return false;
    }
    return true;
}

/// Probability that a bridge between two inside points touches the boundary.
double bridge_hit_probability(const SpaceGrid& grid, const Point& x0, const Point& x1, const SmallMatrix& a,
                              double dt) {
    double survive = 1.0;
    for (int axis = 0; axis < grid.dim(); ++axis) {
        const double var = a(axis, axis) * dt;
        const double lo0 = x0[axis] - grid.bounds(axis).lo;
        const double lo1 = x1[axis] - grid.bounds(axis).lo;
        const double hi0 = grid.bounds(axis).hi - x0[axis];
        const double hi1 = grid.bounds(axis).hi - x1[axis];
        survive *= 1.0 - std::exp(-2.0 * lo0 * lo1 / var);
        survive *= 1.0 - std::exp(-2.0 * hi0 * hi1 / var);
    }
    return 1.0 - survive;
}

PathEnsemble simulate(const CoefficientModel& coefficients, const DriftAt& extra_drift, const Point& x0,
                      const Grids& grids, int n_paths, std::uint64_t seed, std::uint64_t stream,
                      const SimulationOptions& options) {
    const auto& space = grids.space;
    const int d = space.dim();
    if (n_paths < 1) throw PreconditionError("n_paths must be >= 1");
    if (x0.size() != d) throw PreconditionError("start point dimension does not match the grid");
    if (options.absorption != Absorption::None && !inside(space, x0)) {
        throw PreconditionError("start point must lie inside the domain when absorption is on");
    }
    const int M = grids.time.steps();
    const double dt = grids.time.dt();
    const double sqrt_dt = std::sqrt(dt);

    PathEnsemble ens;
    ens.n_paths = n_paths;
    ens.dim = d;
    ens.times = grids.time;
    ens.seed = seed;
    ens.recorded_levels = options.record_levels;
    if (ens.recorded_levels.empty()) {
        for (int k = 0; k <= M; ++k) ens.recorded_levels.push_back(k);
    }
    for (int k : ens.recorded_levels) {
        if (k < 0 || k > M) throw PreconditionError("recorded level out of range");
    }
    std::vector<int> slot(M + 1, -1);
    for (std::size_t r = 0; r < ens.recorded_levels.size(); ++r) slot[ens.recorded_levels[r]] = static_cast<int>(r);

    const std::size_t stride = ens.recorded_levels.size() * d;
    ens.states.assign(stride * n_paths, 0.0);
    ens.exited.assign(n_paths, 0);
    ens.exit_level.assign(n_paths, -1);
    std::vector<long> clamps(n_paths, 0);

    parallel_for(
        n_paths,
        [&](int p) {
            std::mt19937_64 rng(path_seed(seed, stream, p));
            std::normal_distribution<double> normal(0.0, 1.0);
            std::uniform_real_distribution<double> uniform(0.0, 1.0);
            double* out = ens.states.data() + stride * p;
            Point x = x0;
            Point z(d);
            auto record = [&](int k) {
                if (slot[k] >= 0) {
                    for (int axis = 0; axis < d; ++axis) out[slot[k] * d + axis] = x[axis];
                }
            };
            record(0);
            bool alive = true;
            for (int k = 0; k < M; ++k) {
                if (alive) {
                    const double t = grids.time.t(k);
                    Point drift = coefficients.mu(t, x);
                    if (extra_drift) {
                        bool clamped = false;
                        drift += extra_drift(k, t, x, clamped);
                        if (clamped) ++clamps[p];
                    }
                    const SmallMatrix a = coefficients.a(t, x);
                    if (min_eigenvalue(a) <= 0.0) {
                        std::ostringstream msg;
                        msg << "diffusion not positive definite at t=" << t << ", x=" << x.transpose();
                        throw PreconditionError(msg.str());
                    }
                    const SmallMatrix sigma = coefficients.sigma(t, x);
                    for (int axis = 0; axis < d; ++axis) z[axis] = normal(rng);
                    Point next = x + drift * dt + sigma * z * sqrt_dt;
                    if (options.absorption != Absorption::None) {
                        bool killed = !inside(space, next);
                        if (!killed && options.absorption == Absorption::Bridge) {
                            killed = uniform(rng) < bridge_hit_probability(space, x, next, a, dt);
                        }
                        if (killed) {
                            alive = false;
                            ens.exited[p] = 1;
                            ens.exit_level[p] = k + 1;
                            next = x;
                        }
                    }
                    x = next;
                }
                record(k + 1);
            }
        },
        options.threads);

    for (long c : clamps) ens.clamped += c;
    return ens;
}

/// Index i and weight w so that the value is (1-w) v_i + w v_{i+1}, where
/// i = -1 and i = n-1 refer to the boundary (zero value) in zero_boundary mode.
void locate(const SpaceGrid& grid, int axis, double x, bool zero_boundary, int& i, double& w, bool& clamped) {
    const int n = grid.n_interior(axis);
    const double h = grid.dx(axis);
    double s = (x - grid.bounds(axis).lo) / h - 1.0;  // fractional node index
    if (zero_boundary) {
        s = std::clamp(s, -1.0, static_cast<double>(n));
        i = std::min(static_cast<int>(std::floor(s)), n - 1);
        w = s - i;
        return;
    }
    if (s < 0.0 || s > n - 1) clamped = true;
    s = std::clamp(s, 0.0, static_cast<double>(n - 1));
    i = std::min(static_cast<int>(std::floor(s)), std::max(n - 2, 0));
    w = n == 1 ? 0.0 : s - i;
}

}  // namespace

Point PathEnsemble::terminal(int path) const {
    Point x(dim);
    const int r = static_cast<int>(recorded_levels.size()) - 1;
    for (int axis = 0; axis < dim; ++axis) x[axis] = state(path, r, axis);
    return x;
}

int PathEnsemble::alive() const {
    return static_cast<int>(std::count(exited.begin(), exited.end(), 0));
}

double interpolate(const SpaceGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& values, const Point& x,
                   bool zero_boundary, bool* clamped) {
    const int d = grid.dim();
    int idx[2] = {0, 0};
    double w[2] = {0.0, 0.0};
    bool was_clamped = false;
    for (int axis = 0; axis < d; ++axis) locate(grid, axis, x[axis], zero_boundary, idx[axis], w[axis], was_clamped);
    if (clamped) *clamped = was_clamped;

    auto node_value = [&](int i, int j) {
        if (i < 0 || i >= grid.n_interior(0)) return 0.0;
        if (d == 2 && (j < 0 || j >= grid.n_interior(1))) return 0.0;
        return values[grid.index(i, j)];
    };
    double sum = 0.0;
    const int corners = d == 2 ? 4 : 2;
    for (int c = 0; c < corners; ++c) {
        const int si = c & 1;
        const int sj = (c >> 1) & 1;
        double weight = si ? w[0] : 1.0 - w[0];
        if (d == 2) weight *= sj ? w[1] : 1.0 - w[1];
        if (weight == 0.0) continue;
        sum += weight * node_value(idx[0] + si, d == 2 ? idx[1] + sj : 0);
    }
    return sum;
}

PathEnsemble simulate_nominal(const CoefficientModel& coefficients, const Point& x0, const Grids& grids,
                              int n_paths, std::uint64_t seed, const SimulationOptions& options) {
    return simulate(coefficients, nullptr, x0, grids, n_paths, seed, kNominalStream, options);
}

PathEnsemble simulate_perturbed(const CoefficientModel& coefficients, const HModel& hmodel, const Point& x0,
                                const Grids& grids, int n_paths, std::uint64_t seed,
                                const SimulationOptions& options) {
    DriftAt drift;
    if (hmodel.has_closed_form()) {
        drift = [&](int, double t, const Point& x, bool&) { return hmodel.drift(coefficients, t, x); };
    } else {
        const VectorField& b = drift_field(hmodel);
        if (b.empty() || b[0].nodes() != grids.space.size() || b[0].levels() != grids.time.levels()) {
            throw PreconditionError("h model drift does not match the grids");
        }
        drift = [&, b_ptr = &b](int level, double, const Point& x, bool& clamped) {
            Point out(grids.space.dim());
            for (int axis = 0; axis < grids.space.dim(); ++axis) {
                bool c = false;
                out[axis] = interpolate(grids.space, (*b_ptr)[axis].level(level), x, false, &c);
                clamped = clamped || c;
            }
            return out;
        };
    }
    return simulate(coefficients, drift, x0, grids, n_paths, seed, kPerturbedStream, options);
}

double pairwise_sum(const double* data, std::size_t n) {
    if (n <= 8) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += data[i];
        return s;
    }
    const std::size_t half = n / 2;
    return pairwise_sum(data, half) + pairwise_sum(data + half, n - half);
}

namespace {

StatReport summarize(const std::vector<double>& samples, double reference, double allowance, double C) {
    StatReport rep;
    const std::size_t n = samples.size();
    rep.n_paths = static_cast<long>(n);
    rep.reference = reference;
    rep.C = C;
    rep.bias_allowance = allowance;
    rep.estimate = pairwise_sum(samples.data(), n) / static_cast<double>(n);
    if (n > 1) {
        std::vector<double> sq(n);
        for (std::size_t i = 0; i < n; ++i) sq[i] = (samples[i] - rep.estimate) * (samples[i] - rep.estimate);
        const double var = pairwise_sum(sq.data(), n) / static_cast<double>(n - 1);
        rep.standard_error = std::sqrt(var / static_cast<double>(n));
    }
    rep.pass = std::abs(rep.estimate - reference) <= 3.0 * rep.standard_error + allowance;
    return rep;
}

}  // namespace

StatReport martingale_check(const CoefficientModel& coefficients, const HModel& hmodel, const Point& x0,
                            const Grids& grids, int n_paths, std::uint64_t seed, double t_check, double C) {
    if (!hmodel.has_closed_form()) {
        throw PreconditionError("martingale check needs a closed-form h (unit or analytic)");
    }
    const double dt = grids.time.dt();
    const int level = static_cast<int>(std::lround(t_check / dt));
    if (level < 0 || level > grids.time.steps() || std::abs(level * dt - t_check) > 1e-9 * std::max(1.0, t_check)) {
        throw PreconditionError("t_check must be a time level of the grid");
    }
    SimulationOptions opts;
    opts.absorption = Absorption::None;
    opts.record_levels = {level};
    const PathEnsemble ens = simulate_nominal(coefficients, x0, grids, n_paths, seed, opts);

    const double h0 = hmodel.value(0.0, x0);
    std::vector<double> ratio(n_paths);
    for (int p = 0; p < n_paths; ++p) ratio[p] = hmodel.value(grids.time.t(level), ens.terminal(p)) / h0;
    return summarize(ratio, 1.0, C * dt, C);
}

StatReport feynman_kac_check(std::shared_ptr<const CoefficientModel> coefficients, const SpaceField& terminal_g,
                             const Grids& grids, const Point& x0, int n_paths, std::uint64_t seed, double C,
                             Absorption absorption, const GeneratorOptions& generator_options) {
    if (terminal_g.size() != grids.space.size()) throw PreconditionError("terminal g does not match the grid");
    if (absorption == Absorption::None) throw PreconditionError("Feynman-Kac check needs an absorbed ensemble");
    GeneratorOptions gopts = generator_options;
    gopts.boundary = BoundaryKind::Dirichlet;
    const ThetaScheme scheme(assemble_generator(grids, coefficients, gopts));
    const SpaceTimeField w = scheme.solve_terminal_value(terminal_g);
    const double pde = interpolate(grids.space, w.level(0), x0, true);

    SimulationOptions opts;
    opts.absorption = absorption;
    opts.record_levels = {grids.time.steps()};
    const PathEnsemble ens = simulate_nominal(*coefficients, x0, grids, n_paths, seed, opts);
    std::vector<double> payoff(n_paths, 0.0);
    for (int p = 0; p < n_paths; ++p) {
        if (!ens.exited[p]) payoff[p] = interpolate(grids.space, terminal_g.values(), ens.terminal(p), true);
    }
    double dx2 = 0.0;
    for (int axis = 0; axis < grids.space.dim(); ++axis) dx2 = std::max(dx2, grids.space.dx(axis) * grids.space.dx(axis));
    return summarize(payoff, pde, C * (grids.time.dt() + dx2), C);
}

}  // namespace hctl
