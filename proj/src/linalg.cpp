#include "curvestream/linalg.hpp"

#include "curvestream/errors.hpp"

#include <cmath>

namespace curvestream {

void check_rank(const MatrixXd& R, const std::string& what)
{
    const double scale = R.cwiseAbs().maxCoeff();
    const double tol = kRankTolerance * scale;
    for (Eigen::Index k = 0; k < R.cols(); ++k) {
        if (!(std::abs(R(k, k)) > tol)) {
            throw RankDeficient(what + ": rank deficient at column " + std::to_string(k) +
                                " (|R_kk| = " + std::to_string(std::abs(R(k, k))) + ")");
        }
    }
}

HouseholderFactor::HouseholderFactor(const MatrixXd& M, const std::string& what) : qr_(M)
{
    if (M.rows() < M.cols()) {
        throw RankDeficient(what + ": fewer rows (" + std::to_string(M.rows()) + ") than columns (" +
                            std::to_string(M.cols()) + ")");
    }
    r_ = qr_.matrixQR().topRows(M.cols()).triangularView<Eigen::Upper>();
    check_rank(r_, what);
}

MatrixXd HouseholderFactor::apply_qt(const MatrixXd& X) const
{
    return qr_.householderQ().transpose() * X;
}

VectorXd HouseholderFactor::apply_qt(const VectorXd& x) const
{
    return qr_.householderQ().transpose() * x;
}

double HouseholderFactor::log_abs_det_r() const
{
    return r_.diagonal().cwiseAbs().array().log().sum();
}

QrFull qr_full(const MatrixXd& M)
{
    if (M.rows() < M.cols()) {
        throw DimensionMismatch("qr_full: need rows >= cols");
    }
    Eigen::HouseholderQR<MatrixXd> qr(M);
    QrFull out;
    out.Q = qr.householderQ();
    out.R = qr.matrixQR().topRows(M.cols()).triangularView<Eigen::Upper>();
    check_rank(out.R, "qr_full");
    return out;
}

MatrixXd inverse_from_r(const MatrixXd& R)
{
    const auto n = R.rows();
    MatrixXd Rinv_t = R.transpose().triangularView<Eigen::Lower>().solve(MatrixXd::Identity(n, n));
    MatrixXd out = R.triangularView<Eigen::Upper>().solve(Rinv_t);
    symmetrize(out);
    return out;
}

MatrixXd spd_inverse(const MatrixXd& M, const std::string& what)
{
    Eigen::LLT<MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) throw NonPositiveDefinite(what + ": not positive definite");
    MatrixXd out = llt.solve(MatrixXd::Identity(M.rows(), M.cols()));
    symmetrize(out);
    return out;
}

double spd_logdet(const MatrixXd& M, const std::string& what)
{
    Eigen::LLT<MatrixXd> llt(M);
    if (llt.info() != Eigen::Success) throw NonPositiveDefinite(what + ": not positive definite");
    return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

} // namespace curvestream
