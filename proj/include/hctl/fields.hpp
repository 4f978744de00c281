#pragma once

#include <vector>

#include <Eigen/Core>

#include "hctl/mesh.hpp"

namespace hctl {

/// Real values per interior node.
class SpaceField {
public:
    SpaceField() = default;
    explicit SpaceField(int nodes) : values_(Eigen::VectorXd::Zero(nodes)) {}
    explicit SpaceField(Eigen::VectorXd values) : values_(std::move(values)) {}

    int size() const { return static_cast<int>(values_.size()); }
    Eigen::VectorXd& values() { return values_; }
    const Eigen::VectorXd& values() const { return values_; }
    double& operator[](int node) { return values_[node]; }
    double operator[](int node) const { return values_[node]; }

    SpaceField& operator+=(const SpaceField& other);
    SpaceField& operator-=(const SpaceField& other);
    SpaceField& operator*=(double s);

private:
    Eigen::VectorXd values_;
};

/// Real values per (time level, interior node). Stored node-major per level:
/// column k holds level k, so a level is contiguous.
class SpaceTimeField {
public:
    SpaceTimeField() = default;
    SpaceTimeField(int nodes, int levels) : values_(Eigen::MatrixXd::Zero(nodes, levels)) {}
    explicit SpaceTimeField(const Grids& grids) : SpaceTimeField(grids.space.size(), grids.time.levels()) {}

    int nodes() const { return static_cast<int>(values_.rows()); }
    int levels() const { return static_cast<int>(values_.cols()); }

    auto level(int k) { return values_.col(k); }
    auto level(int k) const { return values_.col(k); }
    SpaceField level_field(int k) const { return SpaceField(Eigen::VectorXd(values_.col(k))); }
    double& operator()(int k, int node) { return values_(node, k); }
    double operator()(int k, int node) const { return values_(node, k); }

    Eigen::MatrixXd& values() { return values_; }
    const Eigen::MatrixXd& values() const { return values_; }
    /// All entries as one vector, level after level.
    Eigen::Map<Eigen::VectorXd> flat() { return {values_.data(), values_.size()}; }
    Eigen::Map<const Eigen::VectorXd> flat() const { return {values_.data(), values_.size()}; }

    SpaceTimeField& operator+=(const SpaceTimeField& other);
    SpaceTimeField& operator-=(const SpaceTimeField& other);
    SpaceTimeField& operator*=(double s);

private:
    Eigen::MatrixXd values_;
};

SpaceField operator+(SpaceField a, const SpaceField& b);
SpaceField operator-(SpaceField a, const SpaceField& b);
SpaceField operator*(double s, SpaceField a);
SpaceTimeField operator+(SpaceTimeField a, const SpaceTimeField& b);
SpaceTimeField operator-(SpaceTimeField a, const SpaceTimeField& b);
SpaceTimeField operator*(double s, SpaceTimeField a);

/// One SpaceTimeField per spatial component.
using VectorField = std::vector<SpaceTimeField>;

/// Weighted sums sum_i w a_i b_i, optionally restricted to a mask.
/// Throws PreconditionError on shape mismatch.
double inner_product(const SpaceField& a, const SpaceField& b, double weight,
                     const SubdomainMask* mask = nullptr);
double inner_product(const SpaceTimeField& a, const SpaceTimeField& b, double weight,
                     const SubdomainMask* mask = nullptr);

/// L2(Omega) pairing and norm with node weights.
double inner_product(const SpaceGrid& grid, const SpaceField& a, const SpaceField& b);
double l2_norm(const SpaceGrid& grid, const SpaceField& a);
/// L2((0,T) x Omega) pairing and norm with node-level weights dx*dt.
double inner_product(const Grids& grids, const SpaceTimeField& a, const SpaceTimeField& b,
                     const SubdomainMask* mask = nullptr);
double l2_norm(const Grids& grids, const SpaceTimeField& a, const SubdomainMask* mask = nullptr);

/// chi_A * f at every level.
SpaceTimeField restrict_to(const SubdomainMask& mask, SpaceTimeField f);
SpaceField restrict_to(const SubdomainMask& mask, SpaceField f);

double max_abs(const SpaceTimeField& f);

}  // namespace hctl
