#include "hctl/coefficients.hpp"

#include <cmath>
#include <sstream>

#include <Eigen/Eigenvalues>

#include "hctl/errors.hpp"

namespace hctl {

CoefficientModel::CoefficientModel(int dim, DriftFn mu, DiffusionFn a, double lambda_min, Traits traits)
    : dim_(dim), mu_(std::move(mu)), a_(std::move(a)), lambda_(lambda_min), traits_(traits) {
    if (dim < 1 || dim > 2) throw PreconditionError("coefficient dimension must be 1 or 2");
    if (!(lambda_min > 0.0)) throw PreconditionError("ellipticity constant lambda must be > 0");
}

CoefficientModel CoefficientModel::constant(const Point& mu, const SmallMatrix& a, double lambda_min) {
    if (a.rows() != mu.size() || a.cols() != mu.size()) {
        throw PreconditionError("drift and diffusion dimensions disagree");
    }
    return CoefficientModel(
        static_cast<int>(mu.size()), [mu](double, const Point&) { return mu; },
        [a](double, const Point&) { return a; }, lambda_min, Traits{true, true});
}

CoefficientModel CoefficientModel::affine(const Point& mu0, std::vector<Point> mu_slope, const SmallMatrix& a0,
                                          std::vector<SmallMatrix> a_slope, double lambda_min) {
    const auto d = static_cast<std::size_t>(mu0.size());
    if (mu_slope.size() != d || a_slope.size() != d || a0.rows() != mu0.size()) {
        throw PreconditionError("affine coefficients need one slope per axis");
    }
    auto mu = [mu0, mu_slope](double, const Point& x) {
        Point m = mu0;
        for (std::size_t i = 0; i < mu_slope.size(); ++i) m += x[i] * mu_slope[i];
        return m;
    };
    auto a = [a0, a_slope](double, const Point& x) {
        SmallMatrix m = a0;
        for (std::size_t i = 0; i < a_slope.size(); ++i) m += x[i] * a_slope[i];
        return m;
    };
    return CoefficientModel(static_cast<int>(d), mu, a, lambda_min, Traits{false, true});
}

double min_eigenvalue(const SmallMatrix& a) {
    if (a.rows() == 1) return a(0, 0);
    const double tr = a(0, 0) + a(1, 1);
    const double det = a(0, 0) * a(1, 1) - a(0, 1) * a(1, 0);
    const double disc = std::sqrt(std::max(0.0, 0.25 * tr * tr - det));
    return 0.5 * tr - disc;
}

SmallMatrix CoefficientModel::sigma(double t, const Point& x) const {
    const SmallMatrix m = a(t, x);
    if (m.rows() == 1) {
        SmallMatrix s(1, 1);
        s(0, 0) = std::sqrt(m(0, 0));
        return s;
    }
    const Eigen::Matrix2d m2 = m;
    Eigen::SelfAdjointEigenSolver<Eigen::Matrix2d> eig(m2);
    const Eigen::Vector2d root = eig.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return eig.eigenvectors() * root.asDiagonal() * eig.eigenvectors().transpose();
}

void CoefficientModel::check_ellipticity(const Grids& grids, double theta) const {
    const auto& space = grids.space;
    if (space.dim() != dim_) throw PreconditionError("coefficient dimension does not match the grid");
    std::vector<double> times;
    if (time_independent()) {
        times.push_back(0.0);
    } else {
        for (int k = 0; k < grids.time.levels(); ++k) times.push_back(grids.time.t(k));
        for (int k = 0; k < grids.time.steps(); ++k) times.push_back(grids.time.t(k) + theta * grids.time.dt());
    }
    const int node_stride = is_constant() ? space.size() : 1;
    for (double t : times) {
        for (int node = 0; node < space.size(); node += node_stride) {
            const Point x = space.point(node);
            const SmallMatrix m = a(t, x);
            bool bad = m.rows() != dim_ || m.cols() != dim_ || !m.allFinite();
            if (!bad && dim_ == 2) bad = std::abs(m(0, 1) - m(1, 0)) > 1e-12 * m.cwiseAbs().maxCoeff();
            const double lmin = bad ? 0.0 : min_eigenvalue(m);
            if (bad || lmin < lambda_ * (1.0 - 1e-12)) {
                std::ostringstream msg;
                msg << "ellipticity violated at t=" << t << ", x=(";
                for (int i = 0; i < x.size(); ++i) msg << (i ? "," : "") << x[i];
                msg << "): least eigenvalue " << lmin << " < lambda=" << lambda_;
                throw PreconditionError(msg.str());
            }
        }
    }
}

}  // namespace hctl
