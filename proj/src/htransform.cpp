#include "hctl/htransform.hpp"

#include <cmath>
#include <sstream>

#include "hctl/errors.hpp"

namespace hctl {

std::string kind_name(const HKind& kind) {
    struct Visitor {
        std::string operator()(const UnitH&) const { return "unit"; }
        std::string operator()(const AnalyticH&) const { return "analytic"; }
        std::string operator()(const NumericH&) const { return "numeric"; }
    };
    return std::visit(Visitor{}, kind);
}

double HModel::value(double t, const Point& x) const {
    if (is_unit()) return 1.0;
    if (const auto* an = std::get_if<AnalyticH>(&kind)) return std::exp(an->c.dot(x) + kappa * t);
    throw PreconditionError("numeric h has no closed form");
}

Point HModel::drift(const CoefficientModel& coefficients, double t, const Point& x) const {
    if (is_unit()) return Point::Zero(x.size());
    if (const auto* an = std::get_if<AnalyticH>(&kind)) return coefficients.a(t, x) * an->c;
    throw PreconditionError("numeric h has no closed-form drift");
}

VectorField gradient_one_sided(const SpaceGrid& grid, const SpaceTimeField& f) {
    VectorField grad(grid.dim(), SpaceTimeField(f.nodes(), f.levels()));
    for (int axis = 0; axis < grid.dim(); ++axis) {
        const int n = grid.n_interior(axis);
        const double h = grid.dx(axis);
        const int di = axis == 0 ? 1 : 0;
        const int dj = axis == 1 ? 1 : 0;
        for (int node = 0; node < grid.size(); ++node) {
            const auto idx = grid.multi_index(node);
            const int i = idx[axis];
            auto at = [&](int shift) { return grid.index(idx[0] + shift * di, idx[1] + shift * dj); };
            for (int k = 0; k < f.levels(); ++k) {
                double d = 0.0;
                if (n == 1) {
                    d = 0.0;
                } else if (n == 2) {
                    d = i == 0 ? (f(k, at(1)) - f(k, node)) / h : (f(k, node) - f(k, at(-1))) / h;
                } else if (i == 0) {
                    d = (-3.0 * f(k, node) + 4.0 * f(k, at(1)) - f(k, at(2))) / (2.0 * h);
                } else if (i == n - 1) {
                    d = (3.0 * f(k, node) - 4.0 * f(k, at(-1)) + f(k, at(-2))) / (2.0 * h);
                } else {
                    d = (f(k, at(1)) - f(k, at(-1))) / (2.0 * h);
                }
                grad[axis](k, node) = d;
            }
        }
    }
    return grad;
}

namespace {

VectorField zero_vector_field(const Grids& grids) {
    return VectorField(grids.space.dim(), SpaceTimeField(grids));
}

VectorField apply_diffusion(const Grids& grids, const CoefficientModel& coefficients, const VectorField& grad) {
    const auto& space = grids.space;
    VectorField out = zero_vector_field(grids);
    Point g(space.dim());
    for (int k = 0; k < grids.time.levels(); ++k) {
        const double t = grids.time.t(k);
        for (int node = 0; node < space.size(); ++node) {
            for (int axis = 0; axis < space.dim(); ++axis) g[axis] = grad[axis](k, node);
            const Point b = coefficients.a(t, space.point(node)) * g;
            for (int axis = 0; axis < space.dim(); ++axis) out[axis](k, node) = b[axis];
        }
    }
    return out;
}

void require_positive(const Eigen::Ref<const Eigen::VectorXd>& v, int level) {
    for (Eigen::Index i = 0; i < v.size(); ++i) {
        if (!(v[i] > 0.0) || !std::isfinite(v[i])) {
            std::ostringstream msg;
            msg << "h lost strict positivity at level " << level << ", node " << i << " (value " << v[i] << ")";
            throw SolverError(msg.str(), level);
        }
    }
}

HModel make_numeric(const NumericH& numeric, const Grids& grids, const CoefficientModel& coefficients) {
    const auto& space = grids.space;
    if (numeric.terminal.size() != space.size()) {
        throw PreconditionError("numeric h terminal data has the wrong number of nodes");
    }
    for (int i = 0; i < numeric.terminal.size(); ++i) {
        if (!(numeric.terminal[i] > 0.0)) {
            std::ostringstream msg;
            msg << "numeric h terminal data must be strictly positive (node " << i << " = " << numeric.terminal[i]
                << ")";
            throw PreconditionError(msg.str());
        }
    }
    coefficients.check_ellipticity(grids, 1.0);

    GeneratorOptions opts;
    opts.theta = 1.0;
    opts.boundary = BoundaryKind::Neumann;
    opts.auto_upwind = true;

    const int n = space.size();
    const double dt = grids.time.dt();
    SparseMatrix identity(n, n);
    identity.setIdentity();
    StencilLog log;
    Eigen::SparseLU<SparseMatrix> lu;
    bool factored = false;

    HModel model;
    model.kind = numeric;
    model.h = SpaceTimeField(grids);
    model.h.level(grids.time.steps()) = numeric.terminal.values();
    for (int k = grids.time.steps() - 1; k >= 0; --k) {
        if (!factored || !coefficients.time_independent()) {
            const SparseMatrix g = assemble_generator_matrix(space, coefficients, grids.time.t(k), opts, {}, log);
            lu.compute(SparseMatrix(identity - dt * g));
            if (lu.info() != Eigen::Success) throw SolverError("singular kernel step matrix", k);
            factored = true;
        }
        model.h.level(k) = lu.solve(Eigen::VectorXd(model.h.level(k + 1)));
        require_positive(model.h.level(k), k);
    }
    SpaceTimeField log_h = model.h;
    log_h.values() = model.h.values().array().log().matrix();
    model.grad_log_h = gradient_one_sided(space, log_h);
    model.b_h = apply_diffusion(grids, coefficients, model.grad_log_h);
    return model;
}

}  // namespace

HModel make_h(const HKind& kind, const Grids& grids, const CoefficientModel& coefficients) {
    const auto& space = grids.space;
    if (coefficients.dim() != space.dim()) throw PreconditionError("coefficient dimension does not match grid");

    if (const auto* numeric = std::get_if<NumericH>(&kind)) return make_numeric(*numeric, grids, coefficients);

    HModel model;
    model.kind = kind;
    model.h = SpaceTimeField(grids);
    model.grad_log_h = zero_vector_field(grids);
    model.b_h = zero_vector_field(grids);
    if (std::holds_alternative<UnitH>(kind)) {
        model.h.values().setOnes();
        return model;
    }

    const auto& c = std::get<AnalyticH>(kind).c;
    if (c.size() != space.dim()) throw PreconditionError("analytic h: c must have one entry per axis");
    if (!coefficients.is_constant()) {
        throw PreconditionError("analytic h requires constant drift and diffusion");
    }
    const Point origin = Point::Zero(space.dim());
    const SmallMatrix a = coefficients.a(0.0, origin);
    const Point mu = coefficients.mu(0.0, origin);
    model.kappa = -0.5 * c.dot(a * c) - mu.dot(c);
    const Point b = a * c;
    for (int k = 0; k < grids.time.levels(); ++k) {
        for (int node = 0; node < space.size(); ++node) {
            model.h(k, node) = std::exp(c.dot(space.point(node)) + model.kappa * grids.time.t(k));
            for (int axis = 0; axis < space.dim(); ++axis) {
                model.grad_log_h[axis](k, node) = c[axis];
                model.b_h[axis](k, node) = b[axis];
            }
        }
    }
    return model;
}

namespace {

/// Central-difference derivatives of one level at a node whose full stencil
/// is interior.
struct LocalDerivatives {
    Point grad;
    SmallMatrix hess;
};

bool full_stencil(const SpaceGrid& grid, int node) {
    const auto idx = grid.multi_index(node);
    for (int axis = 0; axis < grid.dim(); ++axis) {
        if (idx[axis] < 1 || idx[axis] > grid.n_interior(axis) - 2) return false;
    }
    return true;
}

LocalDerivatives derivatives(const SpaceGrid& grid, const Eigen::Ref<const Eigen::VectorXd>& f, int node) {
    const int d = grid.dim();
    const auto idx = grid.multi_index(node);
    auto at = [&](int di, int dj) { return f[grid.index(idx[0] + di, idx[1] + dj)]; };
    LocalDerivatives out{Point::Zero(d), SmallMatrix::Zero(d, d)};
    for (int axis = 0; axis < d; ++axis) {
        const int di = axis == 0 ? 1 : 0;
        const int dj = axis == 1 ? 1 : 0;
        const double h = grid.dx(axis);
        out.grad[axis] = (at(di, dj) - at(-di, -dj)) / (2.0 * h);
        out.hess(axis, axis) = (at(di, dj) - 2.0 * at(0, 0) + at(-di, -dj)) / (h * h);
    }
    if (d == 2) {
        const double cross = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * grid.dx(0) * grid.dx(1));
        out.hess(0, 1) = cross;
        out.hess(1, 0) = cross;
    }
    return out;
}

double generator_action(const LocalDerivatives& der, const SmallMatrix& a, const Point& mu) {
    return 0.5 * (a.cwiseProduct(der.hess)).sum() + mu.dot(der.grad);
}

}  // namespace

HResiduals h_residuals(const HModel& hmodel, const Grids& grids, const CoefficientModel& coefficients) {
    const auto& space = grids.space;
    const double dt = grids.time.dt();
    HResiduals r;
    r.kernel_over_h = SpaceTimeField(grids);
    r.log_equation = SpaceTimeField(grids);
    SpaceTimeField log_h = hmodel.h;
    log_h.values() = hmodel.h.values().array().log().matrix();

    for (int k = 0; k < grids.time.steps(); ++k) {
        const double tm = grids.time.t(k) + 0.5 * dt;
        for (int node = 0; node < space.size(); ++node) {
            if (!full_stencil(space, node)) continue;
            const Point x = space.point(node);
            const SmallMatrix a = coefficients.a(tm, x);
            const Point mu = coefficients.mu(tm, x);

            const auto dh0 = derivatives(space, hmodel.h.level(k), node);
            const auto dh1 = derivatives(space, hmodel.h.level(k + 1), node);
            const double h0 = hmodel.h(k, node);
            const double h1 = hmodel.h(k + 1, node);
            const double kernel =
                (h1 - h0) / dt + 0.5 * (generator_action(dh0, a, mu) + generator_action(dh1, a, mu));
            r.kernel_over_h(k, node) = kernel / (0.5 * (h0 + h1));

            const auto dw0 = derivatives(space, log_h.level(k), node);
            const auto dw1 = derivatives(space, log_h.level(k + 1), node);
            auto log_rhs = [&](const LocalDerivatives& der) {
                return generator_action(der, a, mu) + 0.5 * der.grad.dot(a * der.grad);
            };
            r.log_equation(k, node) =
                (log_h(k + 1, node) - log_h(k, node)) / dt + 0.5 * (log_rhs(dw0) + log_rhs(dw1));

            r.kernel_max = std::max(r.kernel_max, std::abs(kernel));
            r.log_max = std::max(r.log_max, std::abs(r.log_equation(k, node)));
            r.gap_max = std::max(r.gap_max, std::abs(r.log_equation(k, node) - r.kernel_over_h(k, node)));
        }
    }
    return r;
}

double hjb_residual(const HModel& hmodel, const Grids& grids, const CoefficientModel& coefficients) {
    if (hmodel.is_unit()) return 0.0;
    return h_residuals(hmodel, grids, coefficients).log_max;
}

DiscreteGenerator perturbed_generator(const HModel& hmodel, const DiscreteGenerator& generator) {
    if (hmodel.is_unit()) return generator;
    const auto& grids = generator.grids();
    if (hmodel.h.nodes() != grids.space.size() || hmodel.h.levels() != grids.time.levels()) {
        throw PreconditionError("h model and generator live on different grids");
    }
    return assemble_generator(grids, generator.coefficients(), generator.options(), &hmodel.b_h);
}

const VectorField& drift_field(const HModel& hmodel) { return hmodel.b_h; }

}  // namespace hctl
