#pragma once

#include <functional>
#include <vector>

#include "hctl/mesh.hpp"

namespace hctl {

/// Drift mu(t,x) and diffusion a(t,x) of the generator
///   L = 1/2 tr(a D^2) + mu . grad
/// together with the ellipticity constant lambda (a >= lambda I).
class CoefficientModel {
public:
    using DriftFn = std::function<Point(double, const Point&)>;
    using DiffusionFn = std::function<SmallMatrix(double, const Point&)>;

    struct Traits {
        bool constant = false;          // independent of t and x
        bool time_independent = false;  // independent of t
    };

    CoefficientModel(int dim, DriftFn mu, DiffusionFn a, double lambda_min, Traits traits);

    /// mu and a constant everywhere.
    static CoefficientModel constant(const Point& mu, const SmallMatrix& a, double lambda_min);
    /// mu(x) = mu0 + sum_i x_i mu_slope[i], a(x) = a0 + sum_i x_i a_slope[i].
    static CoefficientModel affine(const Point& mu0, std::vector<Point> mu_slope, const SmallMatrix& a0,
                                   std::vector<SmallMatrix> a_slope, double lambda_min);

    int dim() const { return dim_; }
    Point mu(double t, const Point& x) const { return mu_(t, x); }
    SmallMatrix a(double t, const Point& x) const { return a_(t, x); }
    /// Principal square root of a(t,x).
    SmallMatrix sigma(double t, const Point& x) const;
    double lambda_min() const { return lambda_; }
    bool is_constant() const { return traits_.constant; }
    bool time_independent() const { return traits_.time_independent || traits_.constant; }

    /// Checks a(t,x) >= lambda I and symmetry at every node and at the step
    /// sample times t_k + theta dt. Throws PreconditionError naming (t,x).
    void check_ellipticity(const Grids& grids, double theta) const;

private:
    int dim_;
    DriftFn mu_;
    DiffusionFn a_;
    double lambda_;
    Traits traits_;
};

/// Smallest eigenvalue of a symmetric 1x1 or 2x2 matrix.
double min_eigenvalue(const SmallMatrix& a);

}  // namespace hctl
