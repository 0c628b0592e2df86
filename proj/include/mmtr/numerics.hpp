#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <utility>

#include <Eigen/Dense>

#include <mmtr/errors.hpp>

namespace mmtr {

using Mat = Eigen::MatrixXd;
using Vec = Eigen::VectorXd;

// Column-stacking vectorization. Storage is column-major so this is a copy of
// the underlying buffer.
inline Vec vec(const Mat& m)
{
    return Eigen::Map<const Vec>(m.data(), m.size());
}

inline Mat unvec(const Vec& v, Eigen::Index rows, Eigen::Index cols)
{
    if (rows < 0 || cols < 0 || v.size() != rows * cols) {
        throw DimensionMismatch("unvec: length " + std::to_string(v.size())
            + " does not match " + std::to_string(rows) + "x" + std::to_string(cols));
    }
    return Eigen::Map<const Mat>(v.data(), rows, cols);
}

inline Mat kron(const Mat& a, const Mat& b)
{
    Mat out(a.rows() * b.rows(), a.cols() * b.cols());
    for (Eigen::Index j = 0; j < a.cols(); ++j) {
        for (Eigen::Index i = 0; i < a.rows(); ++i) {
            out.block(i * b.rows(), j * b.cols(), b.rows(), b.cols()) = a(i, j) * b;
        }
    }
    return out;
}

// Permutation P with P * vec(M) == vec(M^T) for an r x c matrix M.
inline Eigen::PermutationMatrix<Eigen::Dynamic> commutation(Eigen::Index r, Eigen::Index c)
{
    Eigen::PermutationMatrix<Eigen::Dynamic> p(r * c);
    // vec(M)[i + r*j] = M(i,j) = M^T(j,i) = vec(M^T)[j + c*i]
    for (Eigen::Index j = 0; j < c; ++j) {
        for (Eigen::Index i = 0; i < r; ++i) {
            p.indices()[i + r * j] = static_cast<int>(j + c * i);
        }
    }
    return p;
}

/// Pairwise summation of term(0) + ... + term(n-1). The result depends only on
/// n and the terms, never on evaluation order elsewhere in the program.
template <class T, class F>
T pairwise_sum(std::size_t begin, std::size_t end, const F& term)
{
    const auto n = end - begin;
    if (n == 1) return T(term(begin));
    if (n == 2) return T(term(begin) + term(begin + 1));
    const auto mid = begin + n / 2;
    return T(pairwise_sum<T>(begin, mid, term) + pairwise_sum<T>(mid, end, term));
}

// Factor M with M M^T = A, built from the symmetric eigendecomposition. Only
// the retained spectral components are kept, so factor has `rank` columns and
// its columns are mutually orthogonal with squared norms `eigenvalues`.
struct PsdSqrt
{
    Mat factor;
    Vec eigenvalues;
    Eigen::Index rank = 0;
    double tolerance_used = 0.0;
};

inline constexpr double default_psd_tol = 1e-10;

inline PsdSqrt psd_sqrt(const Mat& a, double tol = default_psd_tol)
{
    if (a.rows() != a.cols()) {
        throw DimensionMismatch("psd_sqrt: matrix is not square");
    }
    const double scale = a.size() ? a.cwiseAbs().maxCoeff() : 0.0;
    if ((a - a.transpose()).cwiseAbs().maxCoeff() > tol * std::max(1.0, scale)) {
        throw NotSymmetric("psd_sqrt: matrix is not symmetric within tolerance");
    }
    PsdSqrt out;
    out.tolerance_used = tol;
    const auto n = a.rows();
    if (n == 0) {
        out.factor.resize(0, 0);
        return out;
    }
    Eigen::SelfAdjointEigenSolver<Mat> eig(0.5 * (a + a.transpose()));
    const Vec& lam = eig.eigenvalues();
    const double lmax = lam.maxCoeff();
    const double fro = a.norm();
    if (lam.minCoeff() < -tol * std::max(fro, std::numeric_limits<double>::min())) {
        throw NotPsd("psd_sqrt: eigenvalue " + std::to_string(lam.minCoeff()) + " below -tol*|A|");
    }
    const double cut = tol * std::max(lmax, 0.0);
    Eigen::Index r = 0;
    for (Eigen::Index k = 0; k < n; ++k) r += (lam[k] > cut && lam[k] > 0.0);
    out.rank = r;
    out.factor.resize(n, r);
    out.eigenvalues.resize(r);
    // Largest eigenvalues first.
    Eigen::Index c = 0;
    for (Eigen::Index k = n - 1; k >= 0; --k) {
        if (lam[k] > cut && lam[k] > 0.0) {
            out.eigenvalues[c] = lam[k];
            out.factor.col(c) = eig.eigenvectors().col(k) * std::sqrt(lam[k]);
            ++c;
        }
    }
    return out;
}

// Moore-Penrose inverse of the factor: D^{-1/2} V^T.
inline Mat pinv_factor(const PsdSqrt& s)
{
    Mat g = s.factor.transpose();
    for (Eigen::Index c = 0; c < s.rank; ++c) g.row(c) /= s.eigenvalues[c];
    return g;
}

struct Normalized
{
    Mat l;
    double scale = 1.0;
};

/// Rotates and scales `l` so that row `j` becomes the first standard basis
/// vector: returns (c L Q^T, c) with Q the Householder reflection taking
/// row j onto |row j| e1 and c = 1/|row j|.
inline Normalized householder_normalize(const Mat& l, Eigen::Index j)
{
    if (j < 0 || j >= l.rows()) throw DimensionMismatch("householder_normalize: row index out of range");
    if (l.cols() == 0) throw ZeroRow("householder_normalize: matrix has no columns");
    const Vec r = l.row(j).transpose();
    const double nr = r.norm();
    const double thresh = std::numeric_limits<double>::epsilon() * std::max(l.norm(), std::numeric_limits<double>::min());
    if (!(nr > thresh)) throw ZeroRow("householder_normalize: row " + std::to_string(j) + " is zero");

    // v = r - |r| e1, first entry computed without cancellation when r0 > 0.
    Vec v = r;
    const double tail = r.tail(r.size() - 1).squaredNorm();
    v[0] = (r[0] > 0.0) ? -tail / (r[0] + nr) : r[0] - nr;
    const double vv = v.squaredNorm();

    Normalized out;
    out.scale = 1.0 / nr;
    if (vv <= 1e-30 * nr * nr) {
        out.l = out.scale * l;
    } else {
        // L Q^T with Q = I - 2 v v^T / v^T v (symmetric).
        out.l = out.scale * (l - (2.0 / vv) * (l * v) * v.transpose());
    }
    out.l.row(j).setZero();
    out.l(j, 0) = 1.0;
    return out;
}

struct KronFactors
{
    Mat sigma1;   // q1 x q1
    Mat sigma2;   // q2 x q2
    double singular_value = 0.0;
    int iterations = 0;
};

// Rearranged matrix R with row (a,b) = vec(block_ab)^T; sigma2 (x) sigma1
// maps to vec(sigma2) vec(sigma1)^T.
inline Mat kron_rearrange(const Mat& sigma, Eigen::Index q1, Eigen::Index q2)
{
    Mat r(q2 * q2, q1 * q1);
    for (Eigen::Index b = 0; b < q2; ++b) {
        for (Eigen::Index a = 0; a < q2; ++a) {
            const Mat blk = sigma.block(a * q1, b * q1, q1, q1);
            r.row(a + q2 * b) = Eigen::Map<const Vec>(blk.data(), blk.size()).transpose();
        }
    }
    return r;
}

/// Nearest Kronecker product sigma ~ sigma2 (x) sigma1 in Frobenius norm via
/// the van Loan rearrangement and a power iteration for the leading
/// singular pair.
inline KronFactors nearest_kron(const Mat& sigma, Eigen::Index q1, Eigen::Index q2,
                                int max_iter = 5000, double tol = 1e-15)
{
    if (q1 <= 0 || q2 <= 0 || sigma.rows() != q1 * q2 || sigma.cols() != q1 * q2) {
        throw DimensionMismatch("nearest_kron: sigma must be (q1*q2) x (q1*q2)");
    }
    const Mat r = kron_rearrange(sigma, q1, q2);
    KronFactors out;
    Vec v = vec(Mat::Identity(q1, q1));
    // Fall back to a dense start if the identity is orthogonal to the row space.
    if ((r * v).norm() == 0.0) v = Vec::Constant(q1 * q1, 1.0);
    v.normalize();
    Vec u = r * v;
    double s = u.norm();
    for (int it = 0; it < max_iter && s > 0.0; ++it) {
        out.iterations = it + 1;
        u /= s;
        Vec vn = r.transpose() * u;
        const double sv = vn.norm();
        vn /= sv;
        const double change = (vn - v).norm();
        v = vn;
        u = r * v;
        s = u.norm();
        if (change < tol * 10) break;
    }
    if (s > 0.0) u /= s;
    out.singular_value = s;
    Mat s1 = unvec(std::sqrt(s) * v, q1, q1);
    Mat s2 = unvec(std::sqrt(s) * u, q2, q2);
    if (s1.trace() < 0.0) {
        s1 = -s1;
        s2 = -s2;
    }
    out.sigma1 = std::move(s1);
    out.sigma2 = std::move(s2);
    return out;
}

} // namespace mmtr
