#pragma once

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <mmtr/aecm.hpp>
#include <mmtr/model.hpp>
#include <mmtr/parallel.hpp>

namespace mmtr {

struct MmtrScenario
{
    Eigen::Index p1 = 5, p2 = 5, q1 = 5, q2 = 5, s1 = 2, s2 = 2;
    Eigen::Index n = 81;
    Eigen::Index m = 6;
    double tau2 = 0.5;
    double sparsity_frac = 0.4;
    std::uint64_t seed = 1;
};

struct EquicorrScenario
{
    Eigen::Index p1 = 5, p2 = 5;
    Eigen::Index n = 54;
    Eigen::Index m = 6;
    double alpha_lo = 0.2, alpha_hi = 0.8;
    std::optional<double> alpha;     // forces a fixed correlation
    double sparsity_frac = 0.4;
    bool z_equals_x = true;          // otherwise Z entries are drawn independently
    Eigen::Index q1 = 0, q2 = 0;     // used when z_equals_x is false
    std::uint64_t seed = 1;
};

using Scenario = std::variant<MmtrScenario, EquicorrScenario>;

// Generating truth. For MMTR data `params` is the full parameter set; for
// equicorrelated data only params.b_mat is meaningful and alpha is set.
struct TruthBundle
{
    ModelParams params;
    std::optional<double> alpha;

    bool equicorr() const { return alpha.has_value(); }

    // Marginal covariance of y_i.
    Mat lambda_full(const GroupData& g) const
    {
        if (alpha) {
            const auto m = g.size();
            Mat lam = Mat::Constant(m, m, *alpha);
            lam.diagonal().setOnes();
            return lam;
        }
        return params.tau2 * marginal_cov(g, params);
    }
};

struct SimData
{
    TraceDataset data;
    TruthBundle truth;
};

namespace detail {

inline Mat sparse_grid_b(Eigen::Index p1, Eigen::Index p2, double frac, std::mt19937_64& rng)
{
    const Eigen::Index p = p1 * p2;
    const auto zeros = static_cast<Eigen::Index>(std::floor(frac * static_cast<double>(p) + 1e-9));
    std::vector<Eigen::Index> order(static_cast<std::size_t>(p));
    for (Eigen::Index i = 0; i < p; ++i) order[static_cast<std::size_t>(i)] = i;
    for (std::size_t i = order.size(); i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    // Grid -10, -9.5, ..., 10 without 0 so the zero count is exact.
    std::uniform_int_distribution<int> step(1, 40);
    std::bernoulli_distribution sign(0.5);
    Vec b = Vec::Zero(p);
    for (Eigen::Index k = zeros; k < p; ++k) {
        const double v = 0.5 * step(rng);
        b[order[static_cast<std::size_t>(k)]] = sign(rng) ? v : -v;
    }
    return unvec(b, p1, p2);
}

inline Mat uniform_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Mat out(r, c);
    for (Eigen::Index j = 0; j < c; ++j) for (Eigen::Index i = 0; i < r; ++i) out(i, j) = u(rng);
    return out;
}

inline Mat normal_mat(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng)
{
    std::normal_distribution<double> z(0.0, 1.0);
    Mat out(r, c);
    for (Eigen::Index j = 0; j < c; ++j) for (Eigen::Index i = 0; i < r; ++i) out(i, j) = z(rng);
    return out;
}

// Rescales l so the product of the nonzero singular values of l l^T is one.
inline Mat unit_pdet(const Mat& l)
{
    Eigen::JacobiSVD<Mat> svd(l);
    const Vec& sv = svd.singularValues();
    if (sv.size() == 0 || sv[0] == 0.0) return l;
    double logp = 0.0;
    Eigen::Index r = 0;
    for (Eigen::Index k = 0; k < sv.size(); ++k) {
        if (sv[k] > 1e-12 * sv[0]) {
            logp += 2.0 * std::log(sv[k]);
            ++r;
        }
    }
    return l * std::exp(-logp / (2.0 * static_cast<double>(r)));
}

inline std::string group_name(std::size_t i)
{
    return "g" + std::to_string(i + 1);
}

} // namespace detail

/// Draws n groups of m observations from the MMTR model with the given truth.
inline TraceDataset sample_mmtr(const TruthBundle& truth, const Dims& dims, Eigen::Index n, Eigen::Index m,
                                std::mt19937_64& rng)
{
    const auto& p = truth.params;
    const double tau = std::sqrt(p.tau2);
    const Vec b = p.b_vec();
    const Mat k1 = kron(p.l2, p.l1);
    std::normal_distribution<double> z(0.0, 1.0);
    TraceDataset d;
    d.dims = dims;
    for (Eigen::Index i = 0; i < n; ++i) {
        Mat x = detail::normal_mat(m, dims.p(), rng);
        Mat zr = detail::normal_mat(m, dims.q(), rng);
        Vec c(k1.cols());
        for (Eigen::Index k = 0; k < c.size(); ++k) c[k] = tau * z(rng);
        Vec y = x * b + zr * (k1 * c);
        for (Eigen::Index j = 0; j < m; ++j) y[j] += tau * z(rng);
        d.groups.push_back(make_group(detail::group_name(static_cast<std::size_t>(i)), std::move(y), std::move(x),
                                      std::move(zr), dims));
    }
    return d;
}

inline TruthBundle mmtr_truth(const MmtrScenario& s, std::mt19937_64& rng)
{
    TruthBundle t;
    t.params.b_mat = detail::sparse_grid_b(s.p1, s.p2, s.sparsity_frac, rng);
    t.params.l1 = detail::unit_pdet(detail::uniform_mat(s.q1, s.s1, rng));
    t.params.l2 = detail::unit_pdet(detail::uniform_mat(s.q2, s.s2, rng));
    t.params.tau2 = s.tau2;
    return t;
}

inline void check(const MmtrScenario& s)
{
    if (s.p1 < 1 || s.p2 < 1 || s.q1 < 1 || s.q2 < 1 || s.s1 < 1 || s.s2 < 1) {
        throw InvalidArgument("scenario dims must be >= 1");
    }
    if (s.s1 > s.q1 || s.s2 > s.q2) throw InvalidArgument("scenario ranks must not exceed Q");
    if (s.n < 1 || s.m < 1) throw InvalidArgument("scenario n and m must be >= 1");
    if (!(s.sparsity_frac >= 0.0 && s.sparsity_frac <= 1.0)) throw InvalidArgument("sparsity_frac must lie in [0, 1]");
    if (!(s.tau2 > 0.0)) throw InvalidArgument("tau2 must be > 0");
}

inline void check(const EquicorrScenario& s)
{
    if (s.p1 < 1 || s.p2 < 1) throw InvalidArgument("scenario dims must be >= 1");
    if (!s.z_equals_x && (s.q1 < 1 || s.q2 < 1)) throw InvalidArgument("scenario q1, q2 must be >= 1");
    if (s.n < 1 || s.m < 1) throw InvalidArgument("scenario n and m must be >= 1");
    if (!(s.alpha_lo >= 0.0 && s.alpha_lo <= s.alpha_hi && s.alpha_hi < 1.0)) {
        throw InvalidArgument("alpha range must lie in [0, 1)");
    }
    if (s.alpha && !(*s.alpha >= 0.0 && *s.alpha < 1.0)) throw InvalidArgument("alpha must lie in [0, 1)");
    if (!(s.sparsity_frac >= 0.0 && s.sparsity_frac <= 1.0)) throw InvalidArgument("sparsity_frac must lie in [0, 1]");
}

inline Dims dims_of(const MmtrScenario& s) { return {s.p1, s.p2, s.q1, s.q2}; }

inline Dims dims_of(const EquicorrScenario& s)
{
    return s.z_equals_x ? Dims{s.p1, s.p2, s.p1, s.p2} : Dims{s.p1, s.p2, s.q1, s.q2};
}

inline SimData gen_mmtr(const MmtrScenario& s)
{
    check(s);
    std::mt19937_64 rng(s.seed);
    SimData out;
    out.truth = mmtr_truth(s, rng);
    out.data = sample_mmtr(out.truth, dims_of(s), s.n, s.m, rng);
    return out;
}

inline TraceDataset sample_equicorr(const TruthBundle& truth, const EquicorrScenario& s, Eigen::Index n,
                                    std::mt19937_64& rng)
{
    const Dims dims = dims_of(s);
    const Vec b = truth.params.b_vec();
    const double a = *truth.alpha;
    const double shared = std::sqrt(a), own = std::sqrt(1.0 - a);
    std::normal_distribution<double> z(0.0, 1.0);
    TraceDataset d;
    d.dims = dims;
    for (Eigen::Index i = 0; i < n; ++i) {
        Mat x = detail::normal_mat(s.m, dims.p(), rng);
        Mat zr = s.z_equals_x ? x : detail::normal_mat(s.m, dims.q(), rng);
        const double u = z(rng);
        Vec y = x * b;
        for (Eigen::Index j = 0; j < s.m; ++j) y[j] += shared * u + own * z(rng);
        d.groups.push_back(make_group(detail::group_name(static_cast<std::size_t>(i)), std::move(y), std::move(x),
                                      std::move(zr), dims));
    }
    return d;
}

/// Equicorrelated Gaussian errors with unit variance; alpha ~ U(lo, hi)
/// unless forced.
inline SimData gen_equicorr(const EquicorrScenario& s)
{
    check(s);
    std::mt19937_64 rng(s.seed);
    SimData out;
    out.truth.params.b_mat = detail::sparse_grid_b(s.p1, s.p2, s.sparsity_frac, rng);
    const auto dims = dims_of(s);
    out.truth.params.l1.resize(dims.q1, 0);
    out.truth.params.l2.resize(dims.q2, 0);
    out.truth.params.tau2 = 1.0;
    std::uniform_real_distribution<double> ua(s.alpha_lo, s.alpha_hi);
    const double drawn = ua(rng);
    out.truth.alpha = s.alpha ? *s.alpha : drawn;
    out.data = sample_equicorr(out.truth, s, s.n, rng);
    return out;
}

inline double rel_err(const Mat& est, const Mat& truth)
{
    if (est.rows() != truth.rows() || est.cols() != truth.cols()) throw DimensionMismatch("rel_err: shapes differ");
    const double t = truth.norm();
    if (!(t > 0.0)) throw ZeroTruth("rel_err: truth has zero norm");
    return (est - truth).norm() / t;
}

namespace detail {

inline Mat unit_max_diag(const Mat& s)
{
    if (s.size() == 0) return s;
    const double d = s.diagonal().maxCoeff();
    return d > 0.0 ? Mat(s / d) : s;
}

} // namespace detail

struct CovErr
{
    double sigma1 = 0.0;
    double sigma2 = 0.0;
};

/// Relative errors of Sigma1 and Sigma2 after scaling all four Gram matrices
/// to unit maximum diagonal. A factor with no columns is the zero matrix.
inline CovErr cov_err(const ModelParams& fit, const ModelParams& truth)
{
    auto gram = [](const Mat& l, Eigen::Index q) { return l.cols() ? Mat(l * l.transpose()) : Mat(Mat::Zero(q, q)); };
    const auto q1 = truth.l1.rows(), q2 = truth.l2.rows();
    CovErr e;
    e.sigma1 = rel_err(detail::unit_max_diag(gram(fit.l1, q1)), detail::unit_max_diag(gram(truth.l1, q1)));
    e.sigma2 = rel_err(detail::unit_max_diag(gram(fit.l2, q2)), detail::unit_max_diag(gram(truth.l2, q2)));
    return e;
}

/// Mean over groups of the relative error of the marginal covariance of y_i.
inline double lambda_err(const TraceDataset& d, const ModelParams& est, const TruthBundle& truth)
{
    double s = 0.0;
    for (const auto& g : d.groups) {
        const Mat e = est.has_random_effects() ? Mat(est.tau2 * marginal_cov(g, est))
                                               : Mat(est.tau2 * Mat::Identity(g.size(), g.size()));
        s += rel_err(e, truth.lambda_full(g));
    }
    return s / static_cast<double>(d.groups.size());
}

inline double mspe(const std::vector<Vec>& y, const std::vector<Vec>& yhat)
{
    if (y.size() != yhat.size() || y.empty()) throw DimensionMismatch("mspe: group counts differ or are zero");
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i].size() != yhat[i].size()) throw DimensionMismatch("mspe: group sizes differ");
        s += (y[i] - yhat[i]).squaredNorm();
    }
    return s / static_cast<double>(y.size());
}

/// 1 - SSE/SST over the pooled observations.
inline double r2(const std::vector<Vec>& y, const std::vector<Vec>& yhat)
{
    if (y.size() != yhat.size() || y.empty()) throw DimensionMismatch("r2: group counts differ or are zero");
    double sum = 0.0, sse = 0.0;
    Eigen::Index n = 0;
    for (std::size_t i = 0; i < y.size(); ++i) {
        if (y[i].size() != yhat[i].size()) throw DimensionMismatch("r2: group sizes differ");
        sum += y[i].sum();
        sse += (y[i] - yhat[i]).squaredNorm();
        n += y[i].size();
    }
    const double mean = sum / static_cast<double>(n);
    double sst = 0.0;
    for (const auto& v : y) sst += (v.array() - mean).square().sum();
    return sst > 0.0 ? 1.0 - sse / sst : (sse == 0.0 ? 1.0 : -std::numeric_limits<double>::infinity());
}

inline std::vector<Vec> responses(const TraceDataset& d)
{
    std::vector<Vec> y;
    y.reserve(d.groups.size());
    for (const auto& g : d.groups) y.push_back(g.y);
    return y;
}

struct ReplicationRow
{
    int rep = 0;
    std::uint64_t seed = 0;
    std::string status = "failed";
    double err_b = std::numeric_limits<double>::quiet_NaN();
    double err_sigma1 = std::numeric_limits<double>::quiet_NaN();
    double err_sigma2 = std::numeric_limits<double>::quiet_NaN();
    double err_lambda = std::numeric_limits<double>::quiet_NaN();
    double mspe = std::numeric_limits<double>::quiet_NaN();
    double lambda_b = std::numeric_limits<double>::quiet_NaN();
    double lambda_l = std::numeric_limits<double>::quiet_NaN();
    double alpha = std::numeric_limits<double>::quiet_NaN();
    Eigen::Index rank1 = 0;
    Eigen::Index rank2 = 0;
    double runtime_ms = 0.0;
};

struct Summary
{
    double mean = std::numeric_limits<double>::quiet_NaN();
    double sd = std::numeric_limits<double>::quiet_NaN();   // undefined for fewer than two values
    int count = 0;
};

inline Summary summarize(const std::vector<double>& v)
{
    Summary s;
    double sum = 0.0;
    for (double x : v) if (std::isfinite(x)) { sum += x; ++s.count; }
    if (s.count == 0) return s;
    s.mean = sum / s.count;
    if (s.count > 1) {
        double ss = 0.0;
        for (double x : v) if (std::isfinite(x)) ss += (x - s.mean) * (x - s.mean);
        s.sd = std::sqrt(ss / (s.count - 1));
    }
    return s;
}

struct AlphaBin
{
    double lo = 0.0, hi = 0.0;
    Summary err_lambda;
    Summary err_b;
};

struct ReplicationTable
{
    std::vector<ReplicationRow> rows;
    Summary err_b, err_sigma1, err_sigma2, err_lambda, mspe;
    std::vector<AlphaBin> alpha_bins;   // equicorrelated scenarios only
};

struct ReplicationOptions
{
    int reps = 1;
    std::uint64_t seed = 1;   // replication r uses seed + r
    int jobs = 1;
    TuneGrid grid;
    FitConfig fit;
    Eigen::Index test_groups = 0;   // 0 means the training n
    std::vector<double> alpha_edges{0.2, 0.4, 0.6, 0.8};
};

/// One seeded replication: generate, tune, score against the truth, and
/// compute MSPE of marginal predictions on fresh groups from the same truth.
inline ReplicationRow run_one(const Scenario& scenario, const ReplicationOptions& o, int rep)
{
    ReplicationRow row;
    row.rep = rep;
    row.seed = o.seed + static_cast<std::uint64_t>(rep);
    const auto t0 = std::chrono::steady_clock::now();
    try {
        SimData sim;
        TraceDataset test;
        if (const auto* ms = std::get_if<MmtrScenario>(&scenario)) {
            MmtrScenario s = *ms;
            s.seed = row.seed;
            sim = gen_mmtr(s);
            std::mt19937_64 rng(row.seed ^ 0x9e3779b97f4a7c15ULL);
            test = sample_mmtr(sim.truth, dims_of(s), o.test_groups ? o.test_groups : s.n, s.m, rng);
        } else {
            EquicorrScenario s = std::get<EquicorrScenario>(scenario);
            s.seed = row.seed;
            sim = gen_equicorr(s);
            std::mt19937_64 rng(row.seed ^ 0x9e3779b97f4a7c15ULL);
            test = sample_equicorr(sim.truth, s, o.test_groups ? o.test_groups : s.n, rng);
            row.alpha = *sim.truth.alpha;
        }
        FitConfig cfg = o.fit;
        cfg.seed = row.seed;
        const auto tuned = tune(sim.data, o.grid, cfg, 1);
        const auto& est = tuned.best.params;
        row.lambda_b = tuned.best.lambda_b;
        row.lambda_l = tuned.best.lambda_l;
        row.rank1 = tuned.best.selected_ranks[0];
        row.rank2 = tuned.best.selected_ranks[1];
        row.err_b = rel_err(est.b_mat, sim.truth.params.b_mat);
        if (!sim.truth.equicorr()) {
            const auto ce = cov_err(est, sim.truth.params);
            row.err_sigma1 = ce.sigma1;
            row.err_sigma2 = ce.sigma2;
        }
        row.err_lambda = lambda_err(sim.data, est, sim.truth);
        row.mspe = mspe(responses(test), predict(sim.data, est, PredictMode::marginal, test));
        row.status = tuned.best.converged ? "ok" : "max_iter";
    } catch (const std::exception&) {
        row.status = "failed";
    }
    row.runtime_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
    return row;
}

inline ReplicationTable run_replications(const Scenario& scenario, const ReplicationOptions& o)
{
    if (o.reps < 1) throw InvalidArgument("reps must be >= 1");
    std::visit([](const auto& s) { check(s); }, scenario);
    ReplicationTable t;
    t.rows.resize(static_cast<std::size_t>(o.reps));
    parallel_for(t.rows.size(), o.jobs, [&](std::size_t r) { t.rows[r] = run_one(scenario, o, static_cast<int>(r)); });

    auto column = [&](double ReplicationRow::*f) {
        std::vector<double> v;
        for (const auto& r : t.rows) v.push_back(r.*f);
        return v;
    };
    t.err_b = summarize(column(&ReplicationRow::err_b));
    t.err_sigma1 = summarize(column(&ReplicationRow::err_sigma1));
    t.err_sigma2 = summarize(column(&ReplicationRow::err_sigma2));
    t.err_lambda = summarize(column(&ReplicationRow::err_lambda));
    t.mspe = summarize(column(&ReplicationRow::mspe));

    if (std::holds_alternative<EquicorrScenario>(scenario) && o.alpha_edges.size() >= 2) {
        for (std::size_t k = 0; k + 1 < o.alpha_edges.size(); ++k) {
            AlphaBin bin;
            bin.lo = o.alpha_edges[k];
            bin.hi = o.alpha_edges[k + 1];
            const bool last = k + 2 == o.alpha_edges.size();
            std::vector<double> el, eb;
            for (const auto& r : t.rows) {
                if (r.alpha >= bin.lo && (r.alpha < bin.hi || (last && r.alpha <= bin.hi))) {
                    el.push_back(r.err_lambda);
                    eb.push_back(r.err_b);
                }
            }
            bin.err_lambda = summarize(el);
            bin.err_b = summarize(eb);
            t.alpha_bins.push_back(bin);
        }
    }
    return t;
}

} // namespace mmtr
