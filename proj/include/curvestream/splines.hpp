#pragma once

#include "curvestream/linalg.hpp"

namespace curvestream {

// Canonical cubic O'Sullivan basis on [a, b] with the given interior knots.
// Columns: K = interior knots + 2.
struct SplineBasis {
    VectorXd interior_knots;
    double a = 0.0;
    double b = 1.0;
    MatrixXd transform;  // (K_interior + 4) x (K_interior + 2): B-spline coefficients of each column

    int K() const { return static_cast<int>(transform.cols()); }
    int num_interior() const { return static_cast<int>(interior_knots.size()); }
};

inline constexpr double kBoundarySlack = 1e-8;

// Quantiles (type 7) of the distinct values of x at probabilities k/(K+1), k = 1..K.
VectorXd default_knots(const VectorXd& x, int num_interior);

// Boundary [min x, max x] widened by kBoundarySlack of the range on each side.
std::pair<double, double> default_boundary(const VectorXd& x);

SplineBasis make_spline_basis(const VectorXd& interior_knots, double a, double b);
SplineBasis make_spline_basis(const VectorXd& x, int num_interior);

// Raw cubic B-spline design (n x (K_interior + 4)) or its derivative of order `deriv`.
MatrixXd bspline_design(const VectorXd& x, const VectorXd& interior_knots, double a, double b, int deriv = 0);

// Omega_kl = int_a^b B_k''(t) B_l''(t) dt, exact via 3-point Gauss-Legendre per knot interval.
MatrixXd bspline_penalty(const VectorXd& interior_knots, double a, double b);

// Z matrix (n x K).
MatrixXd osullivan_basis(const VectorXd& x, const SplineBasis& basis);

// [1, x] design (n x 2).
MatrixXd linear_design(const VectorXd& x);

} // namespace curvestream
