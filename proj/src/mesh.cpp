#include "hctl/mesh.hpp"

#include <cmath>
#include <sstream>

#include "hctl/errors.hpp"
#include "hctl/fields.hpp"

namespace hctl {

SpaceGrid::SpaceGrid(std::vector<Interval> bounds, std::vector<int> n_interior)
    : bounds_(std::move(bounds)), n_(std::move(n_interior)) {
    if (bounds_.empty() || bounds_.size() > 2) {
        throw SizingError("grid dimension must be 1 or 2");
    }
    if (bounds_.size() != n_.size()) {
        throw SizingError("bounds and n_interior must have the same number of axes");
    }
    size_ = 1;
    cell_volume_ = 1.0;
    for (std::size_t axis = 0; axis < bounds_.size(); ++axis) {
        const auto& b = bounds_[axis];
        if (!(std::isfinite(b.lo) && std::isfinite(b.hi)) || !(b.hi > b.lo)) {
            std::ostringstream msg;
            msg << "axis " << axis << ": non-positive extent (" << b.lo << ", " << b.hi << ")";
            throw SizingError(msg.str());
        }
        if (n_[axis] < 1) {
            std::ostringstream msg;
            msg << "axis " << axis << ": n_interior must be >= 1, got " << n_[axis];
            throw SizingError(msg.str());
        }
        dx_.push_back((b.hi - b.lo) / (n_[axis] + 1));
        size_ *= n_[axis];
        cell_volume_ *= dx_.back();
    }
}

std::array<int, 2> SpaceGrid::multi_index(int node) const {
    if (dim() == 1) return {node, 0};
    return {node % n_[0], node / n_[0]};
}

double SpaceGrid::coord(int node, int axis) const {
    const auto idx = multi_index(node);
    return bounds_[axis].lo + (idx[axis] + 1) * dx_[axis];
}

Point SpaceGrid::point(int node) const {
    Point p(dim());
    for (int axis = 0; axis < dim(); ++axis) p[axis] = coord(node, axis);
    return p;
}

TimeGrid::TimeGrid(double horizon, int steps) : horizon_(horizon), steps_(steps), dt_(0.0) {
    if (!(horizon > 0.0) || !std::isfinite(horizon)) {
        throw SizingError("time horizon T must be > 0");
    }
    if (steps < 1) {
        throw SizingError("number of time steps M must be >= 1");
    }
    dt_ = horizon / steps;
}

Grids build_grid(const std::vector<Interval>& bounds, const std::vector<int>& n_interior, double horizon,
                 int steps) {
    return Grids{SpaceGrid(bounds, n_interior), TimeGrid(horizon, steps)};
}

std::string to_string(SubdomainLabel label) {
    switch (label) {
        case SubdomainLabel::U: return "U";
        case SubdomainLabel::U1: return "U1";
        case SubdomainLabel::U2: return "U2";
    }
    return "?";
}

int SubdomainMask::count() const {
    int n = 0;
    for (Eigen::Index i = 0; i < indicator.size(); ++i) n += indicator[i] != 0.0 ? 1 : 0;
    return n;
}

SubdomainMask mask_from_box(const SpaceGrid& grid, const std::vector<Interval>& box, SubdomainLabel label) {
    if (static_cast<int>(box.size()) != grid.dim()) {
        throw PreconditionError("subdomain box dimension does not match the grid");
    }
    SubdomainMask mask;
    mask.label = label;
    mask.indicator = Eigen::VectorXd::Zero(grid.size());
    bool inside_domain = true;
    for (int axis = 0; axis < grid.dim(); ++axis) {
        const auto& b = box[axis];
        const auto& d = grid.bounds(axis);
        if (!(b.hi > b.lo) || b.lo < d.lo || b.hi > d.hi) inside_domain = false;
    }
    for (int node = 0; node < grid.size(); ++node) {
        bool in = true;
        for (int axis = 0; axis < grid.dim(); ++axis) {
            const double x = grid.coord(node, axis);
            if (!(x > box[axis].lo && x < box[axis].hi)) in = false;
        }
        if (in) mask.indicator[node] = 1.0;
    }
    mask.warning = !inside_domain || mask.count() == 0;
    return mask;
}

bool disjoint(const SubdomainMask& a, const SubdomainMask& b) {
    if (a.indicator.size() != b.indicator.size()) {
        throw PreconditionError("masks live on different grids");
    }
    return a.indicator.cwiseProduct(b.indicator).sum() == 0.0;
}

SubdomainMask mask_union(const SubdomainMask& a, const SubdomainMask& b, SubdomainLabel label) {
    if (a.indicator.size() != b.indicator.size()) {
        throw PreconditionError("masks live on different grids");
    }
    SubdomainMask m;
    m.label = label;
    m.indicator = a.indicator.cwiseMax(b.indicator);
    m.warning = a.warning || b.warning;
    return m;
}

// --- fields ---------------------------------------------------------------

namespace {

void require_same_shape(const SpaceField& a, const SpaceField& b) {
    if (a.size() != b.size()) {
        std::ostringstream msg;
        msg << "shape mismatch: " << a.size() << " vs " << b.size() << " nodes";
        throw PreconditionError(msg.str());
    }
}

void require_same_shape(const SpaceTimeField& a, const SpaceTimeField& b) {
    if (a.nodes() != b.nodes() || a.levels() != b.levels()) {
        std::ostringstream msg;
        msg << "shape mismatch: " << a.levels() << "x" << a.nodes() << " vs " << b.levels() << "x" << b.nodes();
        throw PreconditionError(msg.str());
    }
}

}  // namespace

SpaceField& SpaceField::operator+=(const SpaceField& other) {
    require_same_shape(*this, other);
    values_ += other.values_;
    return *this;
}
SpaceField& SpaceField::operator-=(const SpaceField& other) {
    require_same_shape(*this, other);
    values_ -= other.values_;
    return *this;
}
SpaceField& SpaceField::operator*=(double s) {
    values_ *= s;
    return *this;
}

SpaceTimeField& SpaceTimeField::operator+=(const SpaceTimeField& other) {
    require_same_shape(*this, other);
    values_ += other.values_;
    return *this;
}
SpaceTimeField& SpaceTimeField::operator-=(const SpaceTimeField& other) {
    require_same_shape(*this, other);
    values_ -= other.values_;
    return *this;
}
SpaceTimeField& SpaceTimeField::operator*=(double s) {
    values_ *= s;
    return *this;
}

SpaceField operator+(SpaceField a, const SpaceField& b) { return a += b; }
SpaceField operator-(SpaceField a, const SpaceField& b) { return a -= b; }
SpaceField operator*(double s, SpaceField a) { return a *= s; }
SpaceTimeField operator+(SpaceTimeField a, const SpaceTimeField& b) { return a += b; }
SpaceTimeField operator-(SpaceTimeField a, const SpaceTimeField& b) { return a -= b; }
SpaceTimeField operator*(double s, SpaceTimeField a) { return a *= s; }

double inner_product(const SpaceField& a, const SpaceField& b, double weight, const SubdomainMask* mask) {
    require_same_shape(a, b);
    if (mask) {
        if (mask->indicator.size() != a.size()) throw PreconditionError("mask does not match field shape");
        return weight * a.values().cwiseProduct(mask->indicator).dot(b.values());
    }
    return weight * a.values().dot(b.values());
}

double inner_product(const SpaceTimeField& a, const SpaceTimeField& b, double weight,
                     const SubdomainMask* mask) {
    require_same_shape(a, b);
    if (mask) {
        if (mask->indicator.size() != a.nodes()) throw PreconditionError("mask does not match field shape");
        double sum = 0.0;
        for (int k = 0; k < a.levels(); ++k) {
            sum += a.level(k).cwiseProduct(mask->indicator).dot(b.level(k));
        }
        return weight * sum;
    }
    return weight * a.flat().dot(b.flat());
}

double inner_product(const SpaceGrid& grid, const SpaceField& a, const SpaceField& b) {
    return inner_product(a, b, grid.cell_volume());
}

double l2_norm(const SpaceGrid& grid, const SpaceField& a) {
    return std::sqrt(inner_product(grid, a, a));
}

double inner_product(const Grids& grids, const SpaceTimeField& a, const SpaceTimeField& b,
                     const SubdomainMask* mask) {
    return inner_product(a, b, grids.spacetime_weight(), mask);
}

double l2_norm(const Grids& grids, const SpaceTimeField& a, const SubdomainMask* mask) {
    return std::sqrt(inner_product(grids, a, a, mask));
}

SpaceTimeField restrict_to(const SubdomainMask& mask, SpaceTimeField f) {
    if (mask.indicator.size() != f.nodes()) throw PreconditionError("mask does not match field shape");
    f.values().array().colwise() *= mask.indicator.array();
    return f;
}

SpaceField restrict_to(const SubdomainMask& mask, SpaceField f) {
    if (mask.indicator.size() != f.size()) throw PreconditionError("mask does not match field shape");
    f.values().array() *= mask.indicator.array();
    return f;
}

double max_abs(const SpaceTimeField& f) {
    return f.values().size() == 0 ? 0.0 : f.values().cwiseAbs().maxCoeff();
}

}  // namespace hctl
