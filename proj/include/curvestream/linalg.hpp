#pragma once

#include <Eigen/Dense>
#include <string>

namespace curvestream {

using Eigen::MatrixXd;
using Eigen::VectorXd;

inline constexpr double kRankTolerance = 1e-10;

// Explicit thin-to-full Householder QR: M = Q [R; 0], Q square orthonormal.
struct QrFull {
    MatrixXd Q;
    MatrixXd R;
};

QrFull qr_full(const MatrixXd& M);

// Householder factorization that keeps the reflectors so that Q^T can be
// applied to other blocks without ever forming Q.
class HouseholderFactor {
public:
    // `what` names the block in RankDeficient messages.
    HouseholderFactor(const MatrixXd& M, const std::string& what);

    // Upper-triangular c x c factor.
    const MatrixXd& R() const { return r_; }
    MatrixXd apply_qt(const MatrixXd& X) const;
    VectorXd apply_qt(const VectorXd& x) const;
    // sum_k log|R_kk|
    double log_abs_det_r() const;

private:
    Eigen::HouseholderQR<MatrixXd> qr_;
    MatrixXd r_;
};

// Throws RankDeficient if some |R_kk| <= kRankTolerance * max|R|.
void check_rank(const MatrixXd& R, const std::string& what);

inline void symmetrize(MatrixXd& A) { A = 0.5 * (A + A.transpose()).eval(); }

// R^{-1} R^{-T} for upper-triangular R via triangular solves.
MatrixXd inverse_from_r(const MatrixXd& R);

// Inverse of a symmetric positive definite matrix (throws NonPositiveDefinite).
MatrixXd spd_inverse(const MatrixXd& M, const std::string& what);
double spd_logdet(const MatrixXd& M, const std::string& what);

} // namespace curvestream
