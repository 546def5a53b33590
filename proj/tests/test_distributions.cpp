#include "curvestream/distributions.hpp"
#include "curvestream/errors.hpp"

#include <gtest/gtest.h>

#include <random>

using namespace curvestream;

TEST(InverseChiSq, ReciprocalMoment)
{
    EXPECT_DOUBLE_EQ(inv_chisq_reciprocal_moment({2.0, 4.0}), 0.5);
    EXPECT_DOUBLE_EQ(inv_chisq_reciprocal_moment({8.0, 8.0}), 1.0);
}

TEST(InverseChiSq, ShapeFromTwoGroups)
{
    // nu_eps = 1, n = (3, 4)
    const double xi = 1.0 + 3 + 4;
    const double lambda = 3.7;
    EXPECT_DOUBLE_EQ(inv_chisq_reciprocal_moment({xi, lambda}), 8.0 / lambda);
}

TEST(InverseChiSq, NonPositiveRejected)
{
    EXPECT_THROW(inv_chisq_reciprocal_moment({0.0, 1.0}), NonPositiveDefinite);
    EXPECT_THROW(inv_chisq_reciprocal_moment({1.0, -1.0}), NonPositiveDefinite);
    EXPECT_THROW(inv_chisq_reciprocal_moment({1.0, std::nan("")}), NonFiniteUpdate);
}

TEST(InverseGWishart, FullIdentity)
{
    const InverseGWishart d{Graph::Full, 3.0, MatrixXd::Identity(2, 2)};
    EXPECT_LT((igw_inverse_moment(d) - 2.0 * MatrixXd::Identity(2, 2)).norm(), 1e-15);
}

TEST(InverseGWishart, DiagInverse)
{
    const InverseGWishart d{Graph::Diag, 3.0, Eigen::Vector2d(2, 4).asDiagonal()};
    const MatrixXd M = igw_inverse_moment(d);
    EXPECT_DOUBLE_EQ(M(0, 0), 1.5);
    EXPECT_DOUBLE_EQ(M(1, 1), 0.75);
    EXPECT_EQ(M(0, 1), 0.0);
    EXPECT_EQ(M(1, 0), 0.0);
}

TEST(InverseGWishart, DiagResultExactlyDiagonal)
{
    MatrixXd L(3, 3);
    L << 2, 0.5, 0.1, 0.5, 3, 0.2, 0.1, 0.2, 1;
    const MatrixXd M = igw_inverse_moment({Graph::Diag, 4.0, L});
    for (int r = 0; r < 3; ++r)
        for (int c = 0; c < 3; ++c)
            if (r != c) EXPECT_EQ(M(r, c), 0.0);
}

TEST(InverseGWishart, ShapeFactorFromGroupCount)
{
    // nu_Sigma = 2, m = 10: xi = 14 and the factor is 13
    MatrixXd L(2, 2);
    L << 3, 1, 1, 2;
    const MatrixXd M = igw_inverse_moment({Graph::Full, 2.0 + 2 + 10, L});
    EXPECT_LT((M - 13.0 * L.inverse()).norm(), 1e-13);
}

TEST(InverseGWishart, GeneralDimensionFactor)
{
    const MatrixXd L = 2.0 * MatrixXd::Identity(4, 4);
    const MatrixXd M = igw_inverse_moment({Graph::Full, 10.0, L});
    EXPECT_LT((M - 3.5 * MatrixXd::Identity(4, 4)).norm(), 1e-14);
}

TEST(MatrixRoot, Identity)
{
    EXPECT_EQ(matrix_inv_sqrt(MatrixXd::Identity(2, 2)), MatrixXd::Identity(2, 2));
    EXPECT_EQ(matrix_sqrt(MatrixXd::Identity(2, 2)), MatrixXd::Identity(2, 2));
}

TEST(MatrixRoot, DiagonalInverseRoot)
{
    const MatrixXd S = matrix_inv_sqrt(Eigen::Vector2d(4, 9).asDiagonal());
    EXPECT_NEAR(S(0, 0), 0.5, 1e-15);
    EXPECT_NEAR(S(1, 1), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(S(1, 0), 0.0);
}

TEST(MatrixRoot, RandomSpdMultiplyBack)
{
    std::mt19937_64 rng(9);
    std::normal_distribution<double> n;
    for (int rep = 0; rep < 200; ++rep) {
        const int d = 1 + rep % 4;
        MatrixXd G(d, d);
        for (int k = 0; k < G.size(); ++k) G.data()[k] = n(rng);
        const MatrixXd M = G * G.transpose() + 0.1 * MatrixXd::Identity(d, d);
        const MatrixXd S = matrix_sqrt(M), T = matrix_inv_sqrt(M);
        EXPECT_LT((S.transpose() * S - M).norm() / M.norm(), 1e-12);
        const MatrixXd Mi = M.inverse();
        EXPECT_LT((T.transpose() * T - Mi).norm() / Mi.norm(), 1e-12);
        EXPECT_LT(S.triangularView<Eigen::StrictlyLower>().toDenseMatrix().norm(), 1e-300);
    }
}

TEST(MatrixRoot, IndefiniteRejected)
{
    MatrixXd M(2, 2);
    M << 1, 2, 2, 1;
    EXPECT_THROW(matrix_sqrt(M), NonPositiveDefinite);
    EXPECT_THROW(matrix_inv_sqrt(M), NonPositiveDefinite);
}
