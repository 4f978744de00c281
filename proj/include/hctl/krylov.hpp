#pragma once

#include <cmath>
#include <vector>

#include <Eigen/Core>

namespace hctl {

struct CgResult {
    int iterations = 0;
    double residual_norm = 0.0;  // recursive residual at exit
    bool converged = false;
    /// q(x_k) = 1/2 x^T K x - b^T x after each iterate, from CG scalars.
    std::vector<double> quadratic;
};

/// Conjugate gradient for an SPD operator `apply(x, Kx)`. Starts from the
/// given x and stops when `stop(residual_norm, x)` is true.
template <class Apply, class Stop>
CgResult conjugate_gradient(Apply&& apply, const Eigen::VectorXd& b, Eigen::VectorXd& x, int max_iters,
                            Stop&& stop) {
    CgResult result;
    Eigen::VectorXd r(b.size());
    Eigen::VectorXd q(b.size());
    apply(x, q);
    r = b - q;
    auto quadratic = [&]() { return -0.5 * x.dot(b + r); };
    double rr = r.squaredNorm();
    result.residual_norm = std::sqrt(rr);
    result.quadratic.push_back(quadratic());
    if (stop(result.residual_norm, x)) {
        result.converged = true;
        return result;
    }
    Eigen::VectorXd p = r;
    while (result.iterations < max_iters) {
        apply(p, q);
        const double pq = p.dot(q);
        if (!(pq > 0.0)) break;  // breakdown: operator not SPD on this direction
        const double step = rr / pq;
        x.noalias() += step * p;
        r.noalias() -= step * q;
        ++result.iterations;
        const double rr_new = r.squaredNorm();
        result.residual_norm = std::sqrt(rr_new);
        result.quadratic.push_back(quadratic());
        if (stop(result.residual_norm, x)) {
            result.converged = true;
            break;
        }
        p = r + (rr_new / rr) * p;
        rr = rr_new;
    }
    return result;
}

}  // namespace hctl
