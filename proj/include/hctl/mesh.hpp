#pragma once

#include <array>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace hctl {

/// Spatial point or vector with at most two components.
using Point = Eigen::Matrix<double, Eigen::Dynamic, 1, 0, 2, 1>;
/// Small symmetric matrix (diffusion tensor) with at most 2x2 entries.
using SmallMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, 0, 2, 2>;

struct Interval {
    double lo = 0.0;
    double hi = 0.0;
};

/// Uniform grid of interior nodes on an axis-aligned box. Boundary nodes are
/// never stored, so homogeneous Dirichlet data is implicit.
class SpaceGrid {
public:
    SpaceGrid(std::vector<Interval> bounds, std::vector<int> n_interior);

    int dim() const { return static_cast<int>(bounds_.size()); }
    const Interval& bounds(int axis) const { return bounds_[axis]; }
    int n_interior(int axis) const { return n_[axis]; }
    double dx(int axis) const { return dx_[axis]; }
    /// Total number of interior nodes.
    int size() const { return size_; }
    /// Quadrature weight of one node: product of the spacings.
    double cell_volume() const { return cell_volume_; }

    /// Node numbering is x-fastest: node = i + n_x * j.
    int index(int i, int j = 0) const { return i + n_[0] * j; }
    std::array<int, 2> multi_index(int node) const;
    double coord(int node, int axis) const;
    Point point(int node) const;

private:
    std::vector<Interval> bounds_;
    std::vector<int> n_;
    std::vector<double> dx_;
    int size_ = 0;
    double cell_volume_ = 0.0;
};

/// Levels t_k = k * dt for k = 0..M.
class TimeGrid {
public:
    TimeGrid(double horizon, int steps);

    double horizon() const { return horizon_; }
    int steps() const { return steps_; }
    int levels() const { return steps_ + 1; }
    double dt() const { return dt_; }
    double t(int k) const { return k * dt_; }

private:
    double horizon_;
    int steps_;
    double dt_;
};

struct Grids {
    SpaceGrid space;
    TimeGrid time;

    /// Space-time quadrature weight per (level, node).
    double spacetime_weight() const { return space.cell_volume() * time.dt(); }
    double space_weight() const { return space.cell_volume(); }
};

/// Throws SizingError on non-positive extents, zero counts, T <= 0 or M < 1.
Grids build_grid(const std::vector<Interval>& bounds, const std::vector<int>& n_interior, double horizon,
                 int steps);

enum class SubdomainLabel { U, U1, U2 };

std::string to_string(SubdomainLabel label);

/// Characteristic function of a subdomain sampled on interior nodes.
struct SubdomainMask {
    SubdomainLabel label = SubdomainLabel::U;
    Eigen::VectorXd indicator;  // 0 or 1 per node
    bool warning = false;       // box not inside the domain, or no node captured

    int count() const;
    bool contains(int node) const { return indicator[node] != 0.0; }
};

/// Nodes strictly inside the open box are included.
SubdomainMask mask_from_box(const SpaceGrid& grid, const std::vector<Interval>& box, SubdomainLabel label);

bool disjoint(const SubdomainMask& a, const SubdomainMask& b);
SubdomainMask mask_union(const SubdomainMask& a, const SubdomainMask& b, SubdomainLabel label);

}  // namespace hctl
