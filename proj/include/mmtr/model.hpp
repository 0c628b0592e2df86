#pragma once

#include <cmath>
#include <numbers>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

#include <mmtr/numerics.hpp>

namespace mmtr {

struct Dims
{
    Eigen::Index p1 = 0, p2 = 0, q1 = 0, q2 = 0;

    Eigen::Index p() const { return p1 * p2; }
    Eigen::Index q() const { return q1 * q2; }
    friend bool operator==(const Dims&, const Dims&) = default;
};

// One cluster. Row j of x_rows is vec(X_ij)^T, row j of z_rows_1 is
// vec(Z_ij)^T and row j of z_rows_2 is vec(Z_ij^T)^T.
struct GroupData
{
    std::string id;
    Vec y;
    Mat x_rows;
    Mat z_rows_1;
    Mat z_rows_2;

    Eigen::Index size() const { return y.size(); }
};

struct TraceDataset
{
    Dims dims;
    std::vector<GroupData> groups;

    Eigen::Index n_obs() const
    {
        Eigen::Index n = 0;
        for (const auto& g : groups) n += g.size();
        return n;
    }
};

// Builds a group from row-vectorized covariates, deriving z_rows_2.
inline GroupData make_group(std::string id, Vec y, Mat x_rows, Mat z_rows_1, const Dims& dims)
{
    if (x_rows.rows() != y.size() || z_rows_1.rows() != y.size()) {
        throw DimensionMismatch("make_group: row counts disagree");
    }
    if (x_rows.cols() != dims.p() || z_rows_1.cols() != dims.q()) {
        throw DimensionMismatch("make_group: covariate widths do not match dims");
    }
    GroupData g;
    g.id = std::move(id);
    g.y = std::move(y);
    g.x_rows = std::move(x_rows);
    g.z_rows_2 = z_rows_1 * commutation(dims.q1, dims.q2).transpose();
    g.z_rows_1 = std::move(z_rows_1);
    return g;
}

inline void validate(const TraceDataset& d)
{
    if (d.groups.empty()) throw InvalidArgument("dataset has no groups");
    const auto& dm = d.dims;
    if (dm.p1 <= 0 || dm.p2 <= 0 || dm.q1 <= 0 || dm.q2 <= 0) throw InvalidArgument("dataset dims must be positive");
    const auto perm = commutation(dm.q1, dm.q2);
    for (const auto& g : d.groups) {
        if (g.size() == 0) throw InvalidArgument("group '" + g.id + "' is empty");
        if (g.x_rows.rows() != g.size() || g.z_rows_1.rows() != g.size() || g.z_rows_2.rows() != g.size()) {
            throw DimensionMismatch("group '" + g.id + "': row counts disagree");
        }
        if (g.x_rows.cols() != dm.p() || g.z_rows_1.cols() != dm.q() || g.z_rows_2.cols() != dm.q()) {
            throw DimensionMismatch("group '" + g.id + "': covariate widths do not match dims");
        }
        if (g.z_rows_2 != g.z_rows_1 * perm.transpose()) {
            throw InvalidArgument("group '" + g.id + "': z_rows_2 is not the transpose-vectorization of z_rows_1");
        }
        if (!g.y.allFinite() || !g.x_rows.allFinite() || !g.z_rows_1.allFinite()) {
            throw InvalidArgument("group '" + g.id + "': non-finite values");
        }
    }
}

struct ModelParams
{
    Mat b_mat;     // P1 x P2
    Mat l1;        // Q1 x S1
    Mat l2;        // Q2 x S2
    double tau2 = 1.0;

    Vec b_vec() const { return vec(b_mat); }
    Mat sigma1() const { return l1 * l1.transpose(); }
    Mat sigma2() const { return l2 * l2.transpose(); }
    Eigen::Index s1() const { return l1.cols(); }
    Eigen::Index s2() const { return l2.cols(); }
    bool has_random_effects() const { return l1.cols() > 0 && l2.cols() > 0; }
};

// Random-effects loadings of each observation: row j of the result is
// vec(L1^T Z_ij L2)^T for orientation 1 and vec(L2^T Z_ij^T L1)^T for
// orientation 2.
inline Mat loadings(const GroupData& g, const ModelParams& p, int orientation)
{
    if (orientation == 1) return g.z_rows_1 * kron(p.l2, p.l1);
    return g.z_rows_2 * kron(p.l1, p.l2);
}

/// Lambda_i = Z_i(1) (L2 (x) L1)(L2 (x) L1)^T Z_i(1)^T + I, the marginal
/// covariance of y_i divided by tau^2.
inline Mat marginal_cov(const GroupData& g, const ModelParams& p)
{
    const Mat w = loadings(g, p, 1);
    Mat lam = w * w.transpose();
    lam.diagonal().array() += 1.0;
    return lam;
}

struct Whitened
{
    Vec y;
    Mat x;
};

// Lambda^{-1/2} y and Lambda^{-1/2} X for the eigen square root of Lambda.
inline Whitened whiten(const GroupData& g, const ModelParams& p)
{
    const auto root = psd_sqrt(marginal_cov(g, p));
    const Mat inv = pinv_factor(root);
    return {inv * g.y, inv * g.x_rows};
}

namespace detail {

struct GroupLik
{
    double logdet = 0.0;   // log det Lambda_i
    double quad = 0.0;     // r^T Lambda_i^{-1} r
};

inline GroupLik group_lik(const GroupData& g, const Mat& kron1, const Vec& b)
{
    const Vec r = g.y - g.x_rows * b;
    GroupLik out;
    if (kron1.cols() == 0) {
        out.quad = r.squaredNorm();
        return out;
    }
    const Mat w = g.z_rows_1 * kron1;
    Mat k = w.transpose() * w;
    k.diagonal().array() += 1.0;
    Eigen::LLT<Mat> llt(k);
    const Vec wr = w.transpose() * r;
    out.logdet = 2.0 * llt.matrixL().toDenseMatrix().diagonal().array().log().sum();
    out.quad = r.squaredNorm() - wr.dot(llt.solve(wr));
    return out;
}

} // namespace detail

/// Negative log-likelihood of y under y_i ~ N(X_i b, tau^2 Lambda_i).
inline double neg_log_lik(const TraceDataset& d, const ModelParams& p)
{
    const Vec b = p.b_vec();
    const Mat k1 = p.has_random_effects() ? kron(p.l2, p.l1) : Mat(d.dims.q(), 0);
    const double n = static_cast<double>(d.n_obs());
    const auto parts = pairwise_sum<Eigen::Vector2d>(0, d.groups.size(), [&](std::size_t i) {
        const auto gl = detail::group_lik(d.groups[i], k1, b);
        return Eigen::Vector2d(gl.logdet, gl.quad);
    });
    return 0.5 * n * std::log(2.0 * std::numbers::pi) + 0.5 * n * std::log(p.tau2)
        + 0.5 * parts[0] + 0.5 * parts[1] / p.tau2;
}

inline double column_norm_sum(const Mat& l)
{
    double s = 0.0;
    for (Eigen::Index c = 0; c < l.cols(); ++c) s += l.col(c).norm();
    return s;
}

/// Penalized objective f = neg_log_lik + N lambda_b |b|_1
///                        + lambda_l (sum_c |L1_c| + sum_c |L2_c|).
/// The first cycle minimizes f exactly over (b, tau^2); the L cycles minimize
/// its EM majorizer (1/(2 tau^2))(l^T H l - 2 g^T l) + lambda_l sum_c |l_c|.
inline double penalty(const TraceDataset& d, const ModelParams& p, double lambda_b, double lambda_l)
{
    const double n = static_cast<double>(d.n_obs());
    return n * lambda_b * p.b_mat.cwiseAbs().sum() + lambda_l * (column_norm_sum(p.l1) + column_norm_sum(p.l2));
}

inline double objective(const TraceDataset& d, const ModelParams& p, double lambda_b, double lambda_l)
{
    return neg_log_lik(d, p) + penalty(d, p, lambda_b, lambda_l);
}

// Moments of c_i(k) given the residual: orientation 1 is vec(C_i), orientation
// 2 is vec(C_i^T).
struct PosteriorMoments
{
    Vec mu;
    Mat sigma;
    Mat gamma;
    int orientation = 1;
};

inline PosteriorMoments posterior_moments(const GroupData& g, const ModelParams& p, const Vec& b_vec, int orientation)
{
    if (orientation != 1 && orientation != 2) throw InvalidArgument("orientation must be 1 or 2");
    const Vec r = g.y - g.x_rows * b_vec;
    const Mat w = loadings(g, p, orientation);
    const auto s = w.cols();
    Mat k = w.transpose() * w;
    k.diagonal().array() += 1.0;
    Eigen::LLT<Mat> llt(k);
    const Mat kinv = llt.solve(Mat::Identity(s, s));
    PosteriorMoments m;
    m.orientation = orientation;
    m.mu = kinv * (w.transpose() * r);
    m.sigma = p.tau2 * 0.5 * (kinv + kinv.transpose());
    m.gamma = m.sigma + m.mu * m.mu.transpose();
    return m;
}

// Quadratic pair of the CM step for L_k: -Q_(k)(l) = l^T h l - 2 g^T l + const
// with l = vec(L_k). `orientation` is k.
struct CycleSystem
{
    Mat h;
    Vec g;
    int orientation = 1;
};

inline double cycle_quadratic(const CycleSystem& sys, const Vec& l)
{
    return l.dot(sys.h * l) - 2.0 * sys.g.dot(l);
}

/// Assembles H_(k), g_(k). For k = 1 the moments of vec(C_i^T) are used with
/// per-observation blocks I_{S1} (x) Z_ij L2; for k = 2 the indices swap.
inline CycleSystem build_cycle_system(const TraceDataset& d, const ModelParams& p, const Vec& b_vec, int orientation)
{
    if (orientation != 1 && orientation != 2) throw InvalidArgument("orientation must be 1 or 2");
    const bool first = orientation == 1;
    const Eigen::Index q = first ? d.dims.q1 : d.dims.q2;
    const Eigen::Index s = first ? p.s1() : p.s2();
    const Eigen::Index so = first ? p.s2() : p.s1();
    const Mat& other = first ? p.l2 : p.l1;
    const int moment_orientation = first ? 2 : 1;
    const Mat eye_s = Mat::Identity(s, s);

    CycleSystem sys;
    sys.orientation = orientation;
    if (s == 0 || so == 0) {
        sys.h = Mat::Zero(q * s, q * s);
        sys.g = Vec::Zero(q * s);
        return sys;
    }

    struct Part
    {
        Mat h;
        Vec g;
        Part operator+(const Part& o) const { return {h + o.h, g + o.g}; }
    };
    const Part total = pairwise_sum<Part>(0, d.groups.size(), [&](std::size_t i) {
        const auto& grp = d.groups[i];
        const auto mom = posterior_moments(grp, p, b_vec, moment_orientation);
        const Vec r = grp.y - grp.x_rows * b_vec;
        Part part{Mat::Zero(q * s, q * s), Vec::Zero(q * s)};
        Mat zsum = Mat::Zero(q, first ? d.dims.q2 : d.dims.q1);
        for (Eigen::Index j = 0; j < grp.size(); ++j) {
            const Mat zj = first ? unvec(grp.z_rows_1.row(j).transpose(), d.dims.q1, d.dims.q2)
                                 : unvec(grp.z_rows_2.row(j).transpose(), d.dims.q2, d.dims.q1);
            const Mat a = kron(eye_s, zj * other);
            part.h.noalias() += a * mom.gamma * a.transpose();
            zsum += r[j] * zj;
        }
        part.g = vec(zsum * other * unvec(mom.mu, so, s));
        return part;
    });
    sys.h = 0.5 * (total.h + total.h.transpose());
    sys.g = total.g;
    return sys;
}

enum class PredictMode { marginal, conditional };

/// Predictions for every group of `test`. Conditional predictions add the
/// posterior mean of the random effect estimated from the same group in
/// `train`.
inline std::vector<Vec> predict(const TraceDataset& train, const ModelParams& p, PredictMode mode,
                                const TraceDataset& test)
{
    const Vec b = p.b_vec();
    std::vector<Vec> out;
    out.reserve(test.groups.size());
    std::unordered_map<std::string, std::size_t> index;
    if (mode == PredictMode::conditional) {
        for (std::size_t i = 0; i < train.groups.size(); ++i) index.emplace(train.groups[i].id, i);
    }
    const Mat k1 = p.has_random_effects() ? kron(p.l2, p.l1) : Mat(test.dims.q(), 0);
    for (const auto& g : test.groups) {
        Vec yhat = g.x_rows * b;
        if (mode == PredictMode::conditional) {
            const auto it = index.find(g.id);
            if (it == index.end()) throw UnknownGroup(g.id);
            if (p.has_random_effects()) {
                const auto mom = posterior_moments(train.groups[it->second], p, b, 1);
                yhat += g.z_rows_1 * (k1 * mom.mu);
            }
        }
        out.push_back(std::move(yhat));
    }
    return out;
}

inline std::vector<Vec> predict(const TraceDataset& d, const ModelParams& p, PredictMode mode)
{
    return predict(d, p, mode, d);
}

} // namespace mmtr
