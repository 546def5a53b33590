#include "curvestream/distributions.hpp"

#include "curvestream/errors.hpp"

#include <cmath>
#include <string>

namespace curvestream {

void validate(const InverseChiSq& d)
{
    if (!std::isfinite(d.xi) || !std::isfinite(d.lambda)) {
        throw NonFiniteUpdate("Inverse-chi^2 parameter is not finite");
    }
    if (d.xi <= 0.0 || d.lambda <= 0.0) {
        throw NonPositiveDefinite("Inverse-chi^2 parameters must be positive (xi=" + std::to_string(d.xi) +
                                  ", lambda=" + std::to_string(d.lambda) + ")");
    }
}

void validate(const InverseGWishart& d)
{
    if (d.Lambda.rows() == 0 || d.Lambda.rows() != d.Lambda.cols()) {
        throw DimensionMismatch("Inverse G-Wishart scale must be a non-empty square matrix");
    }
    if (!d.Lambda.allFinite() || !std::isfinite(d.xi)) {
        throw NonFiniteUpdate("Inverse G-Wishart parameter is not finite");
    }
    if (d.graph == Graph::Full && d.xi - static_cast<double>(d.Lambda.rows()) + 1.0 <= 0.0) {
        throw NonPositiveDefinite("Inverse G-Wishart shape too small for its dimension");
    }
    if (d.graph == Graph::Diag && d.xi <= 0.0) {
        throw NonPositiveDefinite("Inverse G-Wishart shape must be positive");
    }
}

double inv_chisq_reciprocal_moment(const InverseChiSq& d)
{
    validate(d);
    return d.xi / d.lambda;
}

MatrixXd igw_inverse_moment(const InverseGWishart& d)
{
    validate(d);
    const auto dim = d.Lambda.rows();
    if (d.graph == Graph::Diag) {
        MatrixXd out = MatrixXd::Zero(dim, dim);
        for (Eigen::Index k = 0; k < dim; ++k) {
            if (!(d.Lambda(k, k) > 0.0)) throw NonPositiveDefinite("Inverse G-Wishart diagonal scale not positive");
            out(k, k) = d.xi / d.Lambda(k, k);
        }
        return out;
    }
    return (d.xi - static_cast<double>(dim) + 1.0) * spd_inverse(d.Lambda, "Inverse G-Wishart scale");
}

MatrixXd matrix_sqrt(const MatrixXd& M)
{
    Eigen::LLT<MatrixXd> llt(M);
    if (llt.info() != Eigen::Success || !M.allFinite()) throw NonPositiveDefinite("matrix square root: not SPD");
    return llt.matrixU();
}

MatrixXd matrix_inv_sqrt(const MatrixXd& M)
{
    return matrix_sqrt(spd_inverse(M, "matrix inverse square root"));
}

} // namespace curvestream
