#pragma once

#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <mmtr/numerics.hpp>

namespace mmtr {

// min |y - X b|^2 / (2N) + penalty |b|_1
struct LassoProblem
{
    Mat design;
    Vec response;
    double penalty = 0.0;
};

// min |target - sqrt_factor^T l|^2 + penalty * sum_g |l_g|_2 over contiguous
// groups of size group_size.
struct GroupLassoProblem
{
    Mat sqrt_factor;
    Vec target;
    Eigen::Index group_size = 0;
    Eigen::Index n_groups = 0;
    double penalty = 0.0;
};

struct SolverOptions
{
    int max_iter = 10000;
    double tol = 1e-10;
    std::optional<std::uint64_t> seed;
};

struct LassoResult
{
    Vec coef;
    bool converged = false;
    int iterations = 0;
    double objective = 0.0;
    double kkt = 0.0;
    std::vector<double> objective_trace;
};

struct ScaledLassoResult
{
    Vec coef;
    double tau = 0.0;
    bool converged = false;
    int iterations = 0;
    double objective = 0.0;
    std::vector<double> objective_trace;
};

struct GroupLassoResult
{
    Vec coef;
    bool converged = false;
    int iterations = 0;
    double objective = 0.0;
    double kkt = 0.0;
    std::vector<double> objective_trace;
};

class DegenerateResidual : public Error
{
public:
    DegenerateResidual(Vec c, double t)
        : Error("scaled_lasso: residual collapsed (tau = " + std::to_string(t) + ")"),
          coef(std::move(c)), tau(t) {}
    Vec coef;
    double tau;
};

namespace detail {

inline double soft_threshold(double z, double t)
{
    if (z > t) return z - t;
    if (z < -t) return z + t;
    return 0.0;
}

inline void check(const LassoProblem& p)
{
    if (p.design.rows() != p.response.size()) {
        throw DimensionMismatch("lasso: design rows != response length");
    }
    if (p.design.rows() == 0) throw InvalidArgument("lasso: empty problem");
    if (!(p.penalty >= 0.0)) throw InvalidArgument("lasso: penalty must be >= 0");
}

// Sufficient statistics of a lasso problem: gram = X^T X / N, xty = X^T y / N,
// yty = y^T y / N.
struct LassoGram
{
    Mat gram;
    Vec xty;
    double yty = 0.0;
};

inline LassoGram lasso_gram(const Mat& x, const Vec& y)
{
    const double n = static_cast<double>(x.rows());
    LassoGram s;
    s.gram.noalias() = x.transpose() * x / n;
    s.xty.noalias() = x.transpose() * y / n;
    s.yty = y.squaredNorm() / n;
    return s;
}

inline double lasso_gram_objective(const LassoGram& s, const Vec& b, const Vec& gb, double lambda)
{
    return 0.5 * b.dot(gb) - s.xty.dot(b) + 0.5 * s.yty + lambda * b.lpNorm<1>();
}

/// Covariance-update coordinate descent on the sufficient statistics.
/// Coordinates with (numerically) zero column norm stay pinned at zero.
inline LassoResult lasso_cd_gram(const LassoGram& s, double lambda, Vec b,
                                 const SolverOptions& opts)
{
    const auto p = s.xty.size();
    if (b.size() != p) b = Vec::Zero(p);
    const double dmax = p ? s.gram.diagonal().maxCoeff() : 0.0;
    const double dead = 1e-14 * std::max(dmax, 1e-300);
    for (Eigen::Index j = 0; j < p; ++j) {
        if (s.gram(j, j) <= dead) b[j] = 0.0;
    }
    Vec gb = s.gram * b;

    LassoResult out;
    auto kkt = [&]() {
        double worst = 0.0;
        for (Eigen::Index j = 0; j < p; ++j) {
            if (s.gram(j, j) <= dead) continue;
            const double grad = gb[j] - s.xty[j];
            const double v = (b[j] != 0.0) ? std::abs(grad + lambda * (b[j] > 0 ? 1.0 : -1.0))
                                           : std::max(0.0, std::abs(grad) - lambda);
            worst = std::max(worst, v);
        }
        return worst;
    };

    out.objective_trace.push_back(lasso_gram_objective(s, b, gb, lambda));
    for (int it = 0; it < opts.max_iter; ++it) {
        for (Eigen::Index j = 0; j < p; ++j) {
            const double djj = s.gram(j, j);
            if (djj <= dead) continue;
            const double old = b[j];
            const double z = s.xty[j] - gb[j] + djj * old;
            const double nb = soft_threshold(z, lambda) / djj;
            if (nb != old) {
                gb.noalias() += (nb - old) * s.gram.col(j);
                b[j] = nb;
            }
        }
        out.iterations = it + 1;
        out.objective_trace.push_back(lasso_gram_objective(s, b, gb, lambda));
        out.kkt = kkt();
        if (out.kkt <= opts.tol) {
            out.converged = true;
            break;
        }
    }
    if (opts.max_iter <= 0) out.kkt = kkt();
    out.objective = out.objective_trace.back();
    out.coef = std::move(b);
    return out;
}

} // namespace detail

/// Coordinate descent for the lasso. Non-convergence is reported through the
/// `converged` flag with the last iterate.
inline LassoResult lasso_cd(const LassoProblem& p, const SolverOptions& opts = {},
                            const std::optional<Vec>& warm = std::nullopt)
{
    detail::check(p);
    const auto s = detail::lasso_gram(p.design, p.response);
    return detail::lasso_cd_gram(s, p.penalty, warm ? *warm : Vec::Zero(p.design.cols()), opts);
}

inline double scaled_lasso_objective(const LassoProblem& p, const Vec& b, double tau)
{
    const double n = static_cast<double>(p.design.rows());
    const double rss = (p.response - p.design * b).squaredNorm();
    return rss / (2.0 * n * tau) + 0.5 * tau + p.penalty * b.lpNorm<1>();
}

/// Joint minimization of |y - Xb|^2/(2N tau) + tau/2 + lambda |b|_1 by
/// alternating tau = |y - Xb|/sqrt(N) with a lasso solve at penalty lambda*tau.
/// The returned coefficients are the exact lasso solution at the returned tau.
inline ScaledLassoResult scaled_lasso(const LassoProblem& p, const SolverOptions& opts = {},
                                      const std::optional<Vec>& warm = std::nullopt,
                                      std::optional<double> tau0 = std::nullopt)
{
    detail::check(p);
    const double n = static_cast<double>(p.design.rows());
    const auto s = detail::lasso_gram(p.design, p.response);
    if (p.response.squaredNorm() == 0.0) {
        throw InvalidArgument("scaled_lasso: response is identically zero");
    }
    auto rss_of = [&](const Vec& b) {
        // n * (b^T G b - 2 b^T c + yty), clamped against round-off.
        const double v = n * (b.dot(s.gram * b) - 2.0 * b.dot(s.xty) + s.yty);
        return std::max(v, 0.0);
    };

    ScaledLassoResult out;
    Vec b = warm ? *warm : Vec::Zero(p.design.cols());
    double tau;
    if (tau0) {
        tau = *tau0;
    } else {
        const double mean = p.response.mean();
        const double denom = std::max(n - 1.0, 1.0);
        tau = std::sqrt((p.response.array() - mean).square().sum() / denom);
        if (!(tau > 0.0)) tau = std::sqrt(s.yty);
    }

    SolverOptions inner = opts;
    inner.tol = opts.tol * 1e-2;
    for (int it = 0; it < opts.max_iter; ++it) {
        b = detail::lasso_cd_gram(s, p.penalty * tau, std::move(b), inner).coef;
        out.objective_trace.push_back(scaled_lasso_objective(p, b, tau));
        const double tnew = std::sqrt(rss_of(b) / n);
        out.iterations = it + 1;
        if (tnew < 1e-12) throw DegenerateResidual(b, tnew);
        const bool done = std::abs(tnew - tau) <= opts.tol * tau;
        tau = tnew;
        out.objective_trace.push_back(scaled_lasso_objective(p, b, tau));
        if (done) {
            out.converged = true;
            break;
        }
    }
    // Coefficients consistent with the final tau.
    b = detail::lasso_cd_gram(s, p.penalty * tau, std::move(b), inner).coef;
    out.coef = std::move(b);
    out.tau = tau;
    out.objective = scaled_lasso_objective(p, out.coef, tau);
    out.objective_trace.push_back(out.objective);
    return out;
}

// log(tau) + |y - X b|^2 / (2 N tau^2) + penalty |b|_1: the Gaussian negative
// log-likelihood per observation (up to a constant) with an l1 penalty.
inline double ml_lasso_objective(const LassoProblem& p, const Vec& b, double tau)
{
    const double n = static_cast<double>(p.design.rows());
    return std::log(tau) + (p.response - p.design * b).squaredNorm() / (2.0 * n * tau * tau)
        + p.penalty * b.cwiseAbs().sum();
}

/// Joint (b, tau) minimizer of ml_lasso_objective by block coordinate descent:
/// b <- lasso at penalty * tau^2, then tau^2 <- |r|^2 / N. Every half-step is an
/// exact block minimization, so the objective never increases.
inline ScaledLassoResult ml_lasso(const LassoProblem& p, const SolverOptions& opts = {},
                                  const std::optional<Vec>& warm = std::nullopt,
                                  std::optional<double> tau0 = std::nullopt)
{
    detail::check(p);
    const double n = static_cast<double>(p.design.rows());
    const auto s = detail::lasso_gram(p.design, p.response);
    if (p.response.squaredNorm() == 0.0) {
        throw InvalidArgument("ml_lasso: response is identically zero");
    }
    auto rss_of = [&](const Vec& b) {
        const double v = n * (b.dot(s.gram * b) - 2.0 * b.dot(s.xty) + s.yty);
        return std::max(v, 0.0);
    };
    ScaledLassoResult out;
    Vec b = warm ? *warm : Vec::Zero(p.design.cols());
    double tau = tau0 ? *tau0 : std::sqrt(rss_of(b) / n);
    if (!(tau > 0.0)) tau = std::sqrt(s.yty);

    SolverOptions inner = opts;
    inner.tol = opts.tol * 1e-2;
    for (int it = 0; it < opts.max_iter; ++it) {
        b = detail::lasso_cd_gram(s, p.penalty * tau * tau, std::move(b), inner).coef;
        const double tnew = std::sqrt(rss_of(b) / n);
        out.iterations = it + 1;
        if (tnew < 1e-12) throw DegenerateResidual(b, tnew);
        const bool done = std::abs(tnew - tau) <= opts.tol * tau;
        tau = tnew;
        out.objective_trace.push_back(ml_lasso_objective(p, b, tau));
        if (done) {
            out.converged = true;
            break;
        }
    }
    out.coef = std::move(b);
    out.tau = tau;
    out.objective = ml_lasso_objective(p, out.coef, tau);
    return out;
}

namespace detail {

inline void check(const GroupLassoProblem& p)
{
    if (p.group_size <= 0 && p.n_groups > 0) throw InvalidArgument("group_lasso: group_size must be positive");
    if (p.sqrt_factor.rows() != p.group_size * p.n_groups) {
        throw DimensionMismatch("group_lasso: sqrt_factor rows != group_size * n_groups");
    }
    if (p.sqrt_factor.cols() != p.target.size()) {
        throw DimensionMismatch("group_lasso: sqrt_factor cols != target length");
    }
    if (!(p.penalty >= 0.0)) throw InvalidArgument("group_lasso: penalty must be >= 0");
}

// Exact minimizer of x^T H x - 2 c^T x + lambda |x| for H = V diag(h) V^T
// PSD and c in col(H) (components along null directions are ignored).
inline Vec group_block_min(const Mat& v, const Vec& h, const Vec& c, double lambda)
{
    const Vec d = v.transpose() * c;
    const double hmax = h.size() ? h.maxCoeff() : 0.0;
    const double hcut = 1e-12 * std::max(hmax, 1e-300);
    Vec dd = d;
    for (Eigen::Index i = 0; i < h.size(); ++i) if (h[i] <= hcut) dd[i] = 0.0;
    if (2.0 * dd.norm() <= lambda || dd.squaredNorm() == 0.0) return Vec::Zero(c.size());
    if (lambda == 0.0) {
        Vec x(h.size());
        for (Eigen::Index i = 0; i < h.size(); ++i) x[i] = (h[i] > hcut) ? dd[i] / h[i] : 0.0;
        return v * x;
    }
    // Find r = |x| with chi(r) = sum dd_i^2 / (h_i r + lambda/2)^2 = 1;
    // chi is convex and decreasing so Newton from r = 0 increases monotonically.
    const double half = 0.5 * lambda;
    double r = 0.0;
    for (int it = 0; it < 200; ++it) {
        double chi = 0.0, dchi = 0.0;
        for (Eigen::Index i = 0; i < h.size(); ++i) {
            if (dd[i] == 0.0) continue;
            const double den = h[i] * r + half;
            const double t = dd[i] * dd[i] / (den * den);
            chi += t;
            dchi += -2.0 * t * h[i] / den;
        }
        const double f = chi - 1.0;
        if (dchi >= 0.0) break;
        const double step = -f / dchi;
        r += step;
        if (std::abs(step) <= 1e-15 * std::max(r, 1e-300)) break;
    }
    Vec x(h.size());
    for (Eigen::Index i = 0; i < h.size(); ++i) x[i] = dd[i] * r / (h[i] * r + half);
    return v * x;
}

} // namespace detail

inline double group_lasso_objective(const GroupLassoProblem& p, const Vec& l)
{
    double pen = 0.0;
    for (Eigen::Index g = 0; g < p.n_groups; ++g) pen += l.segment(g * p.group_size, p.group_size).norm();
    return (p.target - p.sqrt_factor.transpose() * l).squaredNorm() + p.penalty * pen;
}

/// Block coordinate descent with exact block minimization. With zero penalty
/// the minimum-norm least-squares solution is returned directly.
inline GroupLassoResult group_lasso(const GroupLassoProblem& p, const SolverOptions& opts = {},
                                    const std::optional<Vec>& warm = std::nullopt)
{
    detail::check(p);
    const auto k = p.group_size;
    const auto dim = k * p.n_groups;
    GroupLassoResult out;
    if (dim == 0) {
        out.coef = Vec::Zero(0);
        out.converged = true;
        out.objective = p.target.squaredNorm();
        out.objective_trace.push_back(out.objective);
        return out;
    }
    if (p.penalty == 0.0) {
        const Mat design = p.sqrt_factor.transpose();
        out.coef = Eigen::CompleteOrthogonalDecomposition<Mat>(design).solve(p.target);
        out.converged = true;
        out.objective = group_lasso_objective(p, out.coef);
        out.objective_trace.push_back(out.objective);
        return out;
    }

    const Mat gram = p.sqrt_factor * p.sqrt_factor.transpose();
    const Vec lin = p.sqrt_factor * p.target;
    const double tt = p.target.squaredNorm();
    std::vector<Mat> vecs(p.n_groups);
    std::vector<Vec> vals(p.n_groups);
    for (Eigen::Index g = 0; g < p.n_groups; ++g) {
        Eigen::SelfAdjointEigenSolver<Mat> eig(gram.block(g * k, g * k, k, k));
        vecs[g] = eig.eigenvectors();
        vals[g] = eig.eigenvalues().cwiseMax(0.0);
    }

    Vec l = (warm && warm->size() == dim) ? *warm : Vec::Zero(dim);
    Vec gl = gram * l;
    auto objective = [&]() {
        double pen = 0.0;
        for (Eigen::Index g = 0; g < p.n_groups; ++g) pen += l.segment(g * k, k).norm();
        return std::max(l.dot(gl) - 2.0 * lin.dot(l) + tt, 0.0) + p.penalty * pen;
    };
    auto kkt = [&]() {
        double worst = 0.0;
        for (Eigen::Index g = 0; g < p.n_groups; ++g) {
            const Vec grad = 2.0 * (gl.segment(g * k, k) - lin.segment(g * k, k));
            const Vec lg = l.segment(g * k, k);
            const double nl = lg.norm();
            const double v = (nl > 0.0) ? (grad + p.penalty * lg / nl).norm()
                                        : std::max(0.0, grad.norm() - p.penalty);
            worst = std::max(worst, v);
        }
        return worst;
    };

    out.objective_trace.push_back(objective());
    const double scale = std::max(1.0, 2.0 * lin.cwiseAbs().maxCoeff());
    for (int it = 0; it < opts.max_iter; ++it) {
        for (Eigen::Index g = 0; g < p.n_groups; ++g) {
            const Vec old = l.segment(g * k, k);
            const Vec c = lin.segment(g * k, k) - gl.segment(g * k, k)
                + gram.block(g * k, g * k, k, k) * old;
            const Vec nw = detail::group_block_min(vecs[g], vals[g], c, p.penalty);
            const Vec delta = nw - old;
            if (delta.squaredNorm() > 0.0) {
                gl.noalias() += gram.middleCols(g * k, k) * delta;
                l.segment(g * k, k) = nw;
            }
        }
        out.iterations = it + 1;
        out.objective_trace.push_back(objective());
        out.kkt = kkt();
        if (out.kkt <= opts.tol * scale) {
            out.converged = true;
            break;
        }
    }
    out.objective = out.objective_trace.back();
    out.coef = std::move(l);
    return out;
}

} // namespace mmtr
