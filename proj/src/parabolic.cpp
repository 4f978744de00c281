#include "hctl/parabolic.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "hctl/errors.hpp"

namespace hctl {

DiscreteGenerator::DiscreteGenerator(Grids grids, GeneratorOptions options,
                                     std::shared_ptr<const CoefficientModel> coefficients,
                                     std::vector<SparseMatrix> matrices, StencilLog log)
    : grids_(std::move(grids)),
      options_(options),
      coefficients_(std::move(coefficients)),
      matrices_(std::move(matrices)),
      log_(log) {
    const auto steps = static_cast<std::size_t>(grids_.time.steps());
    if (matrices_.size() != 1 && matrices_.size() != steps) {
        throw PreconditionError("generator needs one matrix or one per time step");
    }
}

namespace {

using Triplet = Eigen::Triplet<double>;

struct RowBuilder {
    const SpaceGrid& grid;
    BoundaryKind boundary;
    std::vector<Triplet>& triplets;

    void add(int row, int di, int dj, double value) const {
        const auto idx = grid.multi_index(row);
        int i = idx[0] + di;
        int j = idx[1] + dj;
        const int nx = grid.n_interior(0);
        const int ny = grid.dim() == 2 ? grid.n_interior(1) : 1;
        const bool inside = i >= 0 && i < nx && j >= 0 && j < ny;
        if (!inside) {
            if (boundary == BoundaryKind::Dirichlet) return;
            // Zero-flux ghost: the outside value mirrors the nearest interior node.
            i = std::clamp(i, 0, nx - 1);
            j = std::clamp(j, 0, ny - 1);
        }
        triplets.emplace_back(row, grid.index(i, j), value);
    }
};

bool columns_equal(const SpaceTimeField& f) {
    for (int k = 1; k < f.levels(); ++k) {
        if (f.level(k) != f.level(0)) return false;
    }
    return true;
}

}  // namespace

SparseMatrix assemble_generator_matrix(const SpaceGrid& grid, const CoefficientModel& coefficients, double t,
                                       const GeneratorOptions& options, const std::vector<Point>& extra_drift,
                                       StencilLog& log) {
    const int n = grid.size();
    const int dim = grid.dim();
    std::vector<Triplet> triplets;
    triplets.reserve(static_cast<std::size_t>(n) * (dim == 1 ? 3 : 9));
    RowBuilder rows{grid, options.boundary, triplets};

    for (int node = 0; node < n; ++node) {
        const Point x = grid.point(node);
        const SmallMatrix a = coefficients.a(t, x);
        Point drift = coefficients.mu(t, x);
        if (!extra_drift.empty()) drift += extra_drift[node];

        for (int axis = 0; axis < dim; ++axis) {
            const int di = axis == 0 ? 1 : 0;
            const int dj = axis == 1 ? 1 : 0;
            const double h = grid.dx(axis);
            const double diff = 0.5 * a(axis, axis);
            const double second = diff / (h * h);
            rows.add(node, -di, -dj, second);
            rows.add(node, 0, 0, -2.0 * second);
            rows.add(node, di, dj, second);

            const double m = drift[axis];
            if (m == 0.0) continue;
            const double peclet = std::abs(m) * h / diff;
            log.max_peclet = std::max(log.max_peclet, peclet);
            const bool upwind = options.stencil == Stencil::Upwind || (options.auto_upwind && peclet > 2.0);
            if (upwind) {
                ++log.upwind_rows;
                if (m > 0.0) {
                    rows.add(node, di, dj, m / h);
                    rows.add(node, 0, 0, -m / h);
                } else {
                    rows.add(node, 0, 0, m / h);
                    rows.add(node, -di, -dj, -m / h);
                }
            } else {
                rows.add(node, di, dj, m / (2.0 * h));
                rows.add(node, -di, -dj, -m / (2.0 * h));
            }
        }
        if (dim == 2 && a(0, 1) != 0.0) {
            // 1/2 * 2 a_12 d_xy with the four-point cross stencil.
            const double c = a(0, 1) / (4.0 * grid.dx(0) * grid.dx(1));
            rows.add(node, 1, 1, c);
            rows.add(node, -1, -1, c);
            rows.add(node, 1, -1, -c);
            rows.add(node, -1, 1, -c);
        }
    }
    SparseMatrix g(n, n);
    g.setFromTriplets(triplets.begin(), triplets.end());
    g.makeCompressed();
    return g;
}

DiscreteGenerator assemble_generator(const Grids& grids, std::shared_ptr<const CoefficientModel> coefficients,
                                     const GeneratorOptions& options, const VectorField* extra_drift) {
    if (!coefficients) throw PreconditionError("missing coefficient model");
    if (!(options.theta >= 0.5 && options.theta <= 1.0)) {
        throw PreconditionError("theta must lie in [1/2, 1]");
    }
    coefficients->check_ellipticity(grids, options.theta);
    const auto& space = grids.space;
    if (extra_drift) {
        if (static_cast<int>(extra_drift->size()) != space.dim()) {
            throw PreconditionError("drift perturbation needs one component per axis");
        }
        for (const auto& c : *extra_drift) {
            if (c.nodes() != space.size() || c.levels() != grids.time.levels()) {
                throw PreconditionError("drift perturbation shape does not match the grids");
            }
        }
    }
    bool invariant = coefficients->time_independent();
    if (invariant && extra_drift) {
        invariant = std::all_of(extra_drift->begin(), extra_drift->end(), columns_equal);
    }

    const double theta = options.theta;
    const double dt = grids.time.dt();
    auto drift_at_step = [&](int k) {
        std::vector<Point> drift;
        if (!extra_drift) return drift;
        drift.assign(space.size(), Point::Zero(space.dim()));
        for (int node = 0; node < space.size(); ++node) {
            for (int axis = 0; axis < space.dim(); ++axis) {
                const auto& c = (*extra_drift)[axis];
                drift[node][axis] = theta * c(k + 1, node) + (1.0 - theta) * c(k, node);
            }
        }
        return drift;
    };

    StencilLog log;
    std::vector<SparseMatrix> matrices;
    const int count = invariant ? 1 : grids.time.steps();
    matrices.reserve(count);
    for (int k = 0; k < count; ++k) {
        const double t = grids.time.t(k) + theta * dt;
        matrices.push_back(assemble_generator_matrix(space, *coefficients, t, options, drift_at_step(k), log));
    }
    return DiscreteGenerator(grids, options, std::move(coefficients), std::move(matrices), log);
}

// --- time stepping ----------------------------------------------------------

ThetaScheme::ThetaScheme(DiscreteGenerator generator) : generator_(std::move(generator)) {
    const int n = grids().space.size();
    const double dt = grids().time.dt();
    const double theta = this->theta();
    SparseMatrix identity(n, n);
    identity.setIdentity();
    const int count = static_cast<int>(generator_.matrices().size());
    steps_.reserve(count);
    for (int k = 0; k < count; ++k) {
        const SparseMatrix& g = generator_.matrices()[k];
        auto s = std::make_unique<Step>();
        SparseMatrix implicit = identity - (theta * dt) * g;
        SparseMatrix implicit_t = SparseMatrix(implicit.transpose());
        s->explicit_part = identity + ((1.0 - theta) * dt) * g;
        s->explicit_part_t = SparseMatrix(s->explicit_part.transpose());
        s->implicit.compute(implicit);
        s->implicit_t.compute(implicit_t);
        if (s->implicit.info() != Eigen::Success || s->implicit_t.info() != Eigen::Success) {
            std::ostringstream msg;
            msg << "singular step matrix at step " << k;
            throw SolverError(msg.str(), k);
        }
        steps_.push_back(std::move(s));
    }
}

namespace {

void require_shape(const SpaceTimeField& f, const Grids& grids, const char* what) {
    if (f.nodes() != grids.space.size() || f.levels() != grids.time.levels()) {
        std::ostringstream msg;
        msg << what << " has shape " << f.levels() << "x" << f.nodes() << ", expected " << grids.time.levels()
            << "x" << grids.space.size();
        throw PreconditionError(msg.str());
    }
}

void require_shape(const SpaceField& f, const Grids& grids, const char* what) {
    if (f.size() != grids.space.size()) {
        std::ostringstream msg;
        msg << what << " has " << f.size() << " nodes, expected " << grids.space.size();
        throw PreconditionError(msg.str());
    }
}

}  // namespace

SpaceTimeField ThetaScheme::solve_forward(const SpaceTimeField& source, const SpaceField& initial) const {
    const auto& g = grids();
    require_shape(source, g, "source");
    require_shape(initial, g, "initial data");
    const double dt = g.time.dt();
    const double theta = this->theta();
    SpaceTimeField y(g);
    y.level(0) = initial.values();
    Eigen::VectorXd rhs(g.space.size());
    for (int k = 0; k < g.time.steps(); ++k) {
        const Step& s = step(k);
        rhs.noalias() = s.explicit_part * y.level(k);
        rhs += dt * (theta * source.level(k + 1) + (1.0 - theta) * source.level(k));
        y.level(k + 1) = s.implicit.solve(rhs);
        if (s.implicit.info() != Eigen::Success) throw SolverError("forward solve failed", k);
    }
    return y;
}

SpaceTimeField ThetaScheme::solve_backward(const SpaceTimeField& rhs, const SpaceField& terminal) const {
    const auto& g = grids();
    require_shape(rhs, g, "rhs");
    require_shape(terminal, g, "terminal data");
    const int steps = g.time.steps();
    const double dt = g.time.dt();
    const double theta = this->theta();

    // lambda_j is the multiplier of forward step j-1; lambda_{M+1} = 0.
    Eigen::VectorXd lambda_next = Eigen::VectorXd::Zero(g.space.size());
    Eigen::VectorXd b(g.space.size());
    SpaceTimeField p(g);
    for (int j = steps; j >= 1; --j) {
        b = dt * rhs.level(j);
        if (j == steps) {
            b += terminal.values();
        } else {
            b.noalias() += step(j).explicit_part_t * lambda_next;
        }
        const Step& s = step(j - 1);
        Eigen::VectorXd lambda = s.implicit_t.solve(b);
        if (s.implicit_t.info() != Eigen::Success) throw SolverError("backward solve failed", j - 1);
        p.level(j) = theta * lambda + (1.0 - theta) * lambda_next;
        lambda_next = std::move(lambda);
    }
    p.level(0) = (1.0 - theta) * lambda_next;
    return p;
}

SpaceTimeField ThetaScheme::solve_terminal_value(const SpaceField& terminal) const {
    const auto& g = grids();
    require_shape(terminal, g, "terminal data");
    SpaceTimeField w(g);
    w.level(g.time.steps()) = terminal.values();
    Eigen::VectorXd rhs(g.space.size());
    for (int k = g.time.steps() - 1; k >= 0; --k) {
        const Step& s = step(k);
        rhs.noalias() = s.explicit_part * w.level(k + 1);
        w.level(k) = s.implicit.solve(rhs);
        if (s.implicit.info() != Eigen::Success) throw SolverError("terminal-value solve failed", k);
    }
    return w;
}

}  // namespace hctl
