#pragma once

#include "curvestream/linalg.hpp"

namespace curvestream {

// x ~ Inverse-chi^2(xi, lambda): density proportional to x^{-xi/2-1} exp(-lambda/(2x)).
struct InverseChiSq {
    double xi = 1.0;
    double lambda = 1.0;
};

enum class Graph { Full, Diag };

// Density proportional to |X|^{-(xi+2)/2} exp(-tr(Lambda X^{-1})/2) on the graph's cone.
struct InverseGWishart {
    Graph graph = Graph::Full;
    double xi = 1.0;
    MatrixXd Lambda;
};

void validate(const InverseChiSq& d);
void validate(const InverseGWishart& d);

// E(1/x) = xi / lambda
double inv_chisq_reciprocal_moment(const InverseChiSq& d);

// E(X^{-1}): (xi - d + 1) Lambda^{-1} for the full graph, xi Lambda^{-1} (diagonal) for the diagonal graph.
MatrixXd igw_inverse_moment(const InverseGWishart& d);

// Upper-triangular S with S^T S = M.
MatrixXd matrix_sqrt(const MatrixXd& M);
// Upper-triangular S with S^T S = M^{-1}.
MatrixXd matrix_inv_sqrt(const MatrixXd& M);

} // namespace curvestream
