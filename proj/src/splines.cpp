#include "curvestream/splines.hpp"

#include "curvestream/errors.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace curvestream {

namespace {

constexpr int kDegree = 3;

std::vector<double> full_knot_vector(const VectorXd& interior, double a, double b)
{
    std::vector<double> t;
    t.reserve(interior.size() + 2 * (kDegree + 1));
    for (int k = 0; k <= kDegree; ++k) t.push_back(a);
    for (Eigen::Index k = 0; k < interior.size(); ++k) t.push_back(interior[k]);
    for (int k = 0; k <= kDegree; ++k) t.push_back(b);
    return t;
}

// Index s such that t[s] <= x < t[s+1], with x == b mapped to the last non-empty span.
int find_span(const std::vector<double>& t, double x)
{
    const int n_basis = static_cast<int>(t.size()) - kDegree - 1;
    if (x >= t[n_basis]) return n_basis - 1;
    const auto it = std::upper_bound(t.begin() + kDegree, t.begin() + n_basis + 1, x);
    return static_cast<int>(it - t.begin()) - 1;
}

// Values of all B-splines of degree `deg` on knot vector t at x (zero outside the support).
std::vector<double> basis_values(const std::vector<double>& t, int deg, double x)
{
    const int n0 = static_cast<int>(t.size()) - 1;  // number of degree-0 functions
    const int s = find_span(t, x);
    std::vector<double> N(n0, 0.0);
    N[s] = 1.0;
    for (int d = 1; d <= deg; ++d) {
        const int nd = static_cast<int>(t.size()) - d - 1;
        for (int k = 0; k < nd; ++k) {
            double v = 0.0;
            const double left = t[k + d] - t[k];
            const double right = t[k + d + 1] - t[k + 1];
            if (left > 0.0) v += (x - t[k]) / left * N[k];
            if (right > 0.0) v += (t[k + d + 1] - x) / right * N[k + 1];
            N[k] = v;
        }
        N.resize(nd);
    }
    return N;
}

// Derivative of order r of the degree-p B-splines at x.
std::vector<double> basis_derivative(const std::vector<double>& t, int p, int r, double x)
{
    if (r == 0) return basis_values(t, p, x);
    const std::vector<double> lower = basis_derivative(t, p - 1, r - 1, x);
    const int np = static_cast<int>(t.size()) - p - 1;
    std::vector<double> out(np, 0.0);
    for (int k = 0; k < np; ++k) {
        double v = 0.0;
        const double left = t[k + p] - t[k];
        const double right = t[k + p + 1] - t[k + 1];
        if (left > 0.0) v += p / left * lower[k];
        if (right > 0.0) v -= p / right * lower[k + 1];
        out[k] = v;
    }
    return out;
}

void check_knots(const VectorXd& interior, double a, double b)
{
    if (!(a < b)) throw DimensionMismatch("spline boundary must satisfy a < b");
    double prev = a;
    for (Eigen::Index k = 0; k < interior.size(); ++k) {
        if (!(interior[k] > prev)) throw DimensionMismatch("interior knots must be strictly increasing inside (a, b)");
        prev = interior[k];
    }
    if (interior.size() > 0 && !(prev < b)) throw DimensionMismatch("interior knots must lie strictly inside (a, b)");
}

} // namespace

VectorXd default_knots(const VectorXd& x, int num_interior)
{
    if (num_interior < 1) throw TooFewDistinctValues("need at least one interior knot");
    std::vector<double> u(x.data(), x.data() + x.size());
    std::sort(u.begin(), u.end());
    u.erase(std::unique(u.begin(), u.end()), u.end());
    if (static_cast<int>(u.size()) < num_interior + 2) {
        throw TooFewDistinctValues("need at least " + std::to_string(num_interior + 2) + " distinct x values, got " +
                                   std::to_string(u.size()));
    }
    VectorXd knots(num_interior);
    const double n1 = static_cast<double>(u.size() - 1);
    for (int k = 1; k <= num_interior; ++k) {
        const double h = n1 * static_cast<double>(k) / (num_interior + 1);
        const auto lo = static_cast<std::size_t>(std::floor(h));
        const std::size_t hi = std::min(lo + 1, u.size() - 1);
        knots[k - 1] = u[lo] + (h - static_cast<double>(lo)) * (u[hi] - u[lo]);
    }
    return knots;
}

std::pair<double, double> default_boundary(const VectorXd& x)
{
    if (x.size() == 0) throw TooFewDistinctValues("empty covariate vector");
    const double lo = x.minCoeff(), hi = x.maxCoeff();
    const double slack = kBoundarySlack * std::max(hi - lo, 1.0e-300);
    return {lo - slack, hi + slack};
}

MatrixXd bspline_design(const VectorXd& x, const VectorXd& interior_knots, double a, double b, int deriv)
{
    check_knots(interior_knots, a, b);
    const auto t = full_knot_vector(interior_knots, a, b);
    const auto nb = static_cast<Eigen::Index>(interior_knots.size() + kDegree + 1);
    MatrixXd B(x.size(), nb);
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (!(x[i] >= a && x[i] <= b)) {
            throw OutOfRange("x = " + std::to_string(x[i]) + " outside spline boundary [" + std::to_string(a) +
                             ", " + std::to_string(b) + "]");
        }
        const auto v = basis_derivative(t, kDegree, deriv, x[i]);
        for (Eigen::Index k = 0; k < nb; ++k) B(i, k) = v[k];
    }
    return B;
}

MatrixXd bspline_penalty(const VectorXd& interior_knots, double a, double b)
{
    check_knots(interior_knots, a, b);
    std::vector<double> breaks{a};
    for (Eigen::Index k = 0; k < interior_knots.size(); ++k) breaks.push_back(interior_knots[k]);
    breaks.push_back(b);

    const double node = std::sqrt(0.6);
    const double nodes[3] = {-node, 0.0, node};
    const double weights[3] = {5.0 / 9.0, 8.0 / 9.0, 5.0 / 9.0};

    VectorXd pts(3 * (breaks.size() - 1)), w(pts.size());
    for (std::size_t s = 0; s + 1 < breaks.size(); ++s) {
        const double half = 0.5 * (breaks[s + 1] - breaks[s]);
        const double mid = 0.5 * (breaks[s + 1] + breaks[s]);
        for (int k = 0; k < 3; ++k) {
            pts[3 * s + k] = mid + half * nodes[k];
            w[3 * s + k] = half * weights[k];
        }
    }
    const MatrixXd B2 = bspline_design(pts, interior_knots, a, b, 2);
    MatrixXd Omega = B2.transpose() * w.asDiagonal() * B2;
    symmetrize(Omega);
    return Omega;
}

SplineBasis make_spline_basis(const VectorXd& interior_knots, double a, double b)
{
    const MatrixXd Omega = bspline_penalty(interior_knots, a, b);
    Eigen::SelfAdjointEigenSolver<MatrixXd> eig(Omega);
    if (eig.info() != Eigen::Success) throw NumericalError("spline penalty eigendecomposition failed");
    // The null space of the second-derivative penalty is the two linear functions.
    const auto nb = Omega.rows();
    const auto K = nb - 2;
    const VectorXd d = eig.eigenvalues().tail(K);
    if (!(d.minCoeff() > 0.0)) throw NumericalError("spline penalty has unexpected null space");
    SplineBasis out;
    out.interior_knots = interior_knots;
    out.a = a;
    out.b = b;
    out.transform = eig.eigenvectors().rightCols(K) * d.cwiseSqrt().cwiseInverse().asDiagonal();
    return out;
}

SplineBasis make_spline_basis(const VectorXd& x, int num_interior)
{
    const auto [a, b] = default_boundary(x);
    return make_spline_basis(default_knots(x, num_interior), a, b);
}

MatrixXd osullivan_basis(const VectorXd& x, const SplineBasis& basis)
{
    return bspline_design(x, basis.interior_knots, basis.a, basis.b, 0) * basis.transform;
}

MatrixXd linear_design(const VectorXd& x)
{
    MatrixXd X(x.size(), 2);
    X.col(0).setOnes();
    X.col(1) = x;
    return X;
}

} // namespace curvestream
