#include <gtest/gtest.h>

#include "oracles.hpp"

using namespace mmtr;

TEST(Vec, ColumnStacking)
{
    Mat m(2, 2);
    m << 1, 3, 2, 4;
    const Vec v = vec(m);
    ASSERT_EQ(v.size(), 4);
    for (int k = 0; k < 4; ++k) EXPECT_EQ(v[k], k + 1);
}

TEST(Vec, RoundTripIsExact)
{
    std::mt19937_64 rng(3);
    const Mat m = oracle::random_mat(3, 4, rng);
    EXPECT_EQ(unvec(vec(m), 3, 4), m);
}

TEST(Vec, UnvecRejectsBadShape)
{
    EXPECT_THROW(unvec(Vec::Zero(5), 2, 3), DimensionMismatch);
}

TEST(Vec, TraceIdentity)
{
    std::mt19937_64 rng(4);
    const Mat x = oracle::random_mat(4, 3, rng), b = oracle::random_mat(4, 3, rng);
    double tr = 0.0;
    for (int i = 0; i < 4; ++i) for (int j = 0; j < 3; ++j) tr += x(i, j) * b(i, j);
    EXPECT_NEAR(vec(x).dot(vec(b)), tr, 1e-12);
}

TEST(Kron, IdentityAndScalar)
{
    EXPECT_EQ(kron(Mat::Identity(2, 2), Mat::Identity(3, 3)), Mat(Mat::Identity(6, 6)));
    std::mt19937_64 rng(5);
    const Mat b = oracle::random_mat(3, 2, rng);
    EXPECT_EQ(kron(Mat::Constant(1, 1, 2.0), b), Mat(2.0 * b));
}

TEST(Kron, VecOfProduct)
{
    std::mt19937_64 rng(6);
    const Mat l1 = oracle::random_mat(4, 2, rng), c = oracle::random_mat(2, 3, rng), l2 = oracle::random_mat(5, 3, rng);
    const Mat direct = l1 * c * l2.transpose();
    EXPECT_LT((vec(direct) - kron(l2, l1) * vec(c)).norm(), 1e-12 * (1.0 + direct.norm()));
}

TEST(Commutation, TransposesVec)
{
    std::mt19937_64 rng(7);
    const Mat m = oracle::random_mat(3, 5, rng);
    const Mat mt = m.transpose();
    EXPECT_EQ(Vec(commutation(3, 5) * vec(m)), vec(mt));
}

TEST(PsdSqrt, Identity)
{
    const auto s = psd_sqrt(Mat::Identity(3, 3));
    EXPECT_EQ(s.rank, 3);
    EXPECT_LT((s.factor * s.factor.transpose() - Mat::Identity(3, 3)).norm(), 1e-14);
}

TEST(PsdSqrt, LowRankOracle)
{
    std::mt19937_64 rng(8);
    const Mat l = oracle::random_mat(5, 2, rng);
    const Mat a = l * l.transpose();
    const auto s = psd_sqrt(a);
    Eigen::FullPivLU<Mat> lu(l);
    EXPECT_EQ(s.rank, lu.rank());
    EXPECT_LT((s.factor * s.factor.transpose() - a).norm(), s.tolerance_used * a.norm() + 1e-12);
}

TEST(PsdSqrt, DiagonalWithZero)
{
    Mat a = Mat::Zero(3, 3);
    a.diagonal() << 4, 0, 1;
    const auto s = psd_sqrt(a);
    EXPECT_EQ(s.rank, 2);
    EXPECT_LT((s.factor * s.factor.transpose() - a).norm(), 1e-12);
}

TEST(PsdSqrt, Errors)
{
    Mat ns(2, 2);
    ns << 1, 2, 0, 1;
    EXPECT_THROW(psd_sqrt(ns), NotSymmetric);
    Mat neg = Mat::Identity(2, 2);
    neg(1, 1) = -1;
    EXPECT_THROW(psd_sqrt(neg), NotPsd);
}

TEST(PinvFactor, IdentityAndProjection)
{
    const auto s = psd_sqrt(Mat::Identity(3, 3));
    EXPECT_LT((pinv_factor(s) * s.factor - Mat::Identity(3, 3)).norm(), 1e-14);

    std::mt19937_64 rng(9);
    const Mat l = oracle::random_mat(6, 3, rng);
    const auto r = psd_sqrt(l * l.transpose());
    const Mat g = pinv_factor(r);
    // Moore-Penrose conditions.
    EXPECT_LT((g * r.factor * g - g).norm(), 1e-10 * g.norm());
    EXPECT_LT((r.factor * g * r.factor - r.factor).norm(), 1e-10 * r.factor.norm());
    // factor * g projects onto col(A).
    const Vec v = l * oracle::random_vec(3, rng);
    EXPECT_LT((r.factor * (g * v) - v).norm(), 1e-10 * v.norm());
    const Mat proj = g * r.factor;
    EXPECT_LT((proj * proj - proj).norm(), 1e-12);
    EXPECT_LT((proj - proj.transpose()).norm(), 1e-12);
}

TEST(Householder, AlreadyUnitRow)
{
    std::mt19937_64 rng(10);
    Mat l = oracle::random_mat(4, 3, rng);
    l.row(1) << 1, 0, 0;
    const auto h = householder_normalize(l, 1);
    EXPECT_DOUBLE_EQ(h.scale, 1.0);
    EXPECT_EQ(Vec(h.l.row(1).transpose()), Vec(Vec::Unit(3, 0)));
    EXPECT_LT((h.l.cwiseAbs() - l.cwiseAbs()).norm(), 1e-14);
}

TEST(Householder, GramOracle)
{
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 50; ++trial) {
        const Mat l = oracle::random_mat(4, 2, rng);
        const auto h = householder_normalize(l, 2);
        Vec e1 = Vec::Zero(2);
        e1[0] = 1.0;
        EXPECT_EQ(Vec(h.l.row(2).transpose()), e1);
        const Mat expect = l * l.transpose() / l.row(2).squaredNorm();
        EXPECT_LT((h.l * h.l.transpose() - expect).norm(), 1e-12 * expect.norm());
    }
}

TEST(Householder, IdentifiesSigma1Block)
{
    // After normalizing L2 on row j, (Sigma2)_jj = 1 and block (j, j) of
    // Sigma2 (x) Sigma1 is Sigma1.
    std::mt19937_64 rng(12);
    const Mat l1 = oracle::random_mat(3, 2, rng), l2 = oracle::random_mat(4, 2, rng);
    const auto h = householder_normalize(l2, 3);
    const Mat s2 = h.l * h.l.transpose();
    EXPECT_NEAR(s2(3, 3), 1.0, 1e-14);
    const Mat s1 = l1 * l1.transpose();
    const Mat big = kron(s2, s1);
    EXPECT_LT((big.block(9, 9, 3, 3) - s1).norm(), 1e-12 * s1.norm());
}

TEST(Householder, ZeroRowThrows)
{
    Mat l = Mat::Ones(3, 2);
    l.row(0).setZero();
    EXPECT_THROW(householder_normalize(l, 0), ZeroRow);
}

TEST(NearestKron, ExactProductRecovered)
{
    std::mt19937_64 rng(13);
    const Mat a = oracle::random_mat(3, 3, rng), b = oracle::random_mat(2, 2, rng);
    const Mat s1 = a * a.transpose(), s2 = b * b.transpose();
    const auto k = nearest_kron(kron(s2, s1), 3, 2);
    EXPECT_LT((kron(k.sigma2, k.sigma1) - kron(s2, s1)).norm(), 1e-10 * kron(s2, s1).norm());
}

TEST(NearestKron, MatchesSvdOfRearrangement)
{
    std::mt19937_64 rng(14);
    for (int trial = 0; trial < 20; ++trial) {
        const Mat l = oracle::random_mat(6, 6, rng);
        const Mat sigma = l * l.transpose();
        const auto k = nearest_kron(sigma, 3, 2);
        // Independent oracle: leading singular triple of the rearrangement.
        Mat r(4, 9);
        for (int b = 0; b < 2; ++b)
            for (int a = 0; a < 2; ++a)
                for (int jj = 0; jj < 3; ++jj)
                    for (int ii = 0; ii < 3; ++ii) r(a + 2 * b, ii + 3 * jj) = sigma(a * 3 + ii, b * 3 + jj);
        Eigen::JacobiSVD<Mat> svd(r, Eigen::ComputeFullU | Eigen::ComputeFullV);
        const double s = svd.singularValues()[0];
        const Mat best = s * svd.matrixU().col(0) * svd.matrixV().col(0).transpose();
        EXPECT_NEAR(k.singular_value, s, 1e-9 * s);
        EXPECT_LT((vec(k.sigma2) * vec(k.sigma1).transpose() - best).norm(), 1e-8 * s);
        EXPECT_GT(k.sigma1.trace(), 0.0);
    }
}

TEST(PairwiseSum, OrderIndependentOfCaller)
{
    std::vector<double> v{1e16, 1.0, -1e16, 1.0, 3.0};
    const double s = pairwise_sum<double>(0, v.size(), [&](std::size_t i) { return v[i]; });
    const double again = pairwise_sum<double>(0, v.size(), [&](std::size_t i) { return v[i]; });
    EXPECT_EQ(s, again);
}
