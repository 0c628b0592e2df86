#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <random>
#include <string>
#include <vector>

#include <mmtr/model.hpp>
#include <mmtr/parallel.hpp>
#include <mmtr/solvers.hpp>

namespace mmtr {

// First-cycle solver. penalized_ml alternates a lasso at lambda_b tau^2 with
// tau^2 = RSS / N, the exact minimizer of the fit objective over (b, tau^2).
// scaled_lasso uses the lasso at lambda_b tau instead; it shares the tau
// update but is not a block minimizer of the objective, so the objective
// trace may rise between iterations.
enum class Cycle1Mode { penalized_ml, scaled_lasso };

struct FitConfig
{
    double lambda_b = 0.0;
    double lambda_l = 0.0;
    double init_rank_factor = 1.0;          // S_k = max(1, ceil(factor * log Q_k))
    std::optional<std::array<Eigen::Index, 2>> init_ranks;   // overrides the factor rule
    std::optional<ModelParams> init;        // start from these parameters instead
    int max_iter = 200;
    double tol = 1e-6;
    std::uint64_t seed = 1;
    bool rank_prune = true;
    bool normalize_each_iter = false;   // rescale/rotate every iteration, not only for the report
    double ebic_gamma = 0.5;
    Cycle1Mode cycle1 = Cycle1Mode::penalized_ml;
    SolverOptions lasso_opts{10000, 1e-11, std::nullopt};
    SolverOptions scaled_opts{500, 1e-10, std::nullopt};
    SolverOptions group_opts{20000, 1e-11, std::nullopt};
};

// Objective after cycle 1, 2 or 3 of an iteration. Cycle 4 is after rank
// pruning (and normalization when enabled); iteration 0 is the initial value.
struct TraceRecord
{
    int iteration = 0;
    int cycle = 0;
    double objective = 0.0;
    double loglik = 0.0;
    Eigen::Index rank1 = 0;
    Eigen::Index rank2 = 0;
};

struct FitReport
{
    ModelParams params;
    std::vector<TraceRecord> trace;
    std::vector<double> objective_trace;     // objective of every trace record
    std::vector<double> loglik_trace;        // log-likelihood at the end of each iteration
    std::array<Eigen::Index, 2> selected_ranks{0, 0};
    std::array<Eigen::Index, 2> initial_ranks{0, 0};
    double loglik = 0.0;
    double ebic = 0.0;
    Eigen::Index df = 0;
    int iterations = 0;
    bool converged = false;
    bool solver_converged = true;
    bool random_effects_pruned = false;
    std::array<std::chrono::nanoseconds, 3> per_cycle_timings{};
    double lambda_b = 0.0;
    double lambda_l = 0.0;
    std::uint64_t seed = 0;
};

inline Eigen::Index initial_rank(Eigen::Index q, double factor)
{
    const double s = std::ceil(factor * std::log(static_cast<double>(q)));
    return std::max<Eigen::Index>(1, std::min<Eigen::Index>(q, static_cast<Eigen::Index>(s)));
}

inline Mat drop_zero_columns(const Mat& l, double tol = 1e-10)
{
    std::vector<Eigen::Index> keep;
    for (Eigen::Index c = 0; c < l.cols(); ++c) if (l.col(c).norm() >= tol) keep.push_back(c);
    Mat out(l.rows(), static_cast<Eigen::Index>(keep.size()));
    for (std::size_t k = 0; k < keep.size(); ++k) out.col(static_cast<Eigen::Index>(k)) = l.col(keep[k]);
    return out;
}

struct PostprocessResult
{
    ModelParams params;
    bool all_pruned = false;
};

/// Drops (near-)zero columns, balances the largest diagonal entries of
/// Sigma1 and Sigma2 while keeping Sigma2 (x) Sigma1, then rotates L2 so its
/// row with the largest Sigma2 diagonal is a multiple of e1.
inline PostprocessResult postprocess(const ModelParams& in, bool prune = true)
{
    PostprocessResult out{in, false};
    auto& p = out.params;
    if (prune) {
        p.l1 = drop_zero_columns(p.l1);
        p.l2 = drop_zero_columns(p.l2);
        if (p.l1.cols() == 0 || p.l2.cols() == 0) {
            p.l1.resize(p.l1.rows(), 0);
            p.l2.resize(p.l2.rows(), 0);
            out.all_pruned = true;
            return out;
        }
    }
    if (!p.has_random_effects()) return out;
    const Vec diag1 = p.l1.rowwise().squaredNorm();
    const Vec diag2 = p.l2.rowwise().squaredNorm();
    const double d1 = diag1.maxCoeff();
    const double d2 = diag2.maxCoeff();
    if (!(d1 > 0.0) || !(d2 > 0.0)) return out;
    p.l1 *= std::pow(d2 / d1, 0.25);
    p.l2 *= std::pow(d1 / d2, 0.25);

    Eigen::Index j = 0;
    diag2.maxCoeff(&j);
    const double rownorm = p.l2.row(j).norm();
    auto rotated = householder_normalize(p.l2, j);
    p.l2 = rotated.l * rownorm;
    p.l2.row(j).setZero();
    p.l2(j, 0) = rownorm;
    return out;
}

inline ModelParams init_params(const TraceDataset& d, const FitConfig& cfg)
{
    if (cfg.init) return *cfg.init;
    const auto s1 = cfg.init_ranks ? (*cfg.init_ranks)[0] : initial_rank(d.dims.q1, cfg.init_rank_factor);
    const auto s2 = cfg.init_ranks ? (*cfg.init_ranks)[1] : initial_rank(d.dims.q2, cfg.init_rank_factor);
    std::mt19937_64 rng(cfg.seed);
    std::uniform_real_distribution<double> unif(-1.0, 1.0);
    ModelParams p;
    p.b_mat = Mat::Zero(d.dims.p1, d.dims.p2);
    p.l1.resize(d.dims.q1, s1);
    p.l2.resize(d.dims.q2, s2);
    for (Eigen::Index c = 0; c < s1; ++c) for (Eigen::Index r = 0; r < d.dims.q1; ++r) p.l1(r, c) = unif(rng);
    for (Eigen::Index c = 0; c < s2; ++c) for (Eigen::Index r = 0; r < d.dims.q2; ++r) p.l2(r, c) = unif(rng);

    double sum = 0.0, sq = 0.0;
    Eigen::Index n = 0;
    for (const auto& g : d.groups) {
        sum += g.y.sum();
        sq += g.y.squaredNorm();
        n += g.size();
    }
    const double mean = sum / static_cast<double>(n);
    const double var = n > 1 ? (sq - static_cast<double>(n) * mean * mean) / static_cast<double>(n - 1) : sq;
    p.tau2 = var > 0.0 ? var : 1.0;
    return postprocess(p, cfg.rank_prune).params;
}

struct Cycle1Result
{
    Vec b;
    double tau2 = 0.0;
    bool converged = true;
};

/// First cycle: whiten every group with the current Lambda_i and solve the
/// joint (b, tau) problem. With `explore`, the penalized_ml solve is also
/// started from the scaled-lasso solution and the better of the two kept; this
/// avoids the null-model basin when the starting tau is large.
inline Cycle1Result cycle1_update(const TraceDataset& d, const ModelParams& p, const FitConfig& cfg,
                                  bool explore = false)
{
    const auto n = d.n_obs();
    LassoProblem prob;
    prob.design.resize(n, d.dims.p());
    prob.response.resize(n);
    prob.penalty = cfg.lambda_b;
    Eigen::Index row = 0;
    for (const auto& g : d.groups) {
        if (p.has_random_effects()) {
            auto w = whiten(g, p);
            prob.design.middleRows(row, g.size()) = w.x;
            prob.response.segment(row, g.size()) = w.y;
        } else {
            prob.design.middleRows(row, g.size()) = g.x_rows;
            prob.response.segment(row, g.size()) = g.y;
        }
        row += g.size();
    }
    const Vec warm = p.b_vec();
    const double tau0 = std::sqrt(p.tau2);
    if (cfg.cycle1 == Cycle1Mode::scaled_lasso) {
        const auto res = scaled_lasso(prob, cfg.scaled_opts, warm, tau0);
        return {res.coef, res.tau * res.tau, res.converged};
    }
    auto res = ml_lasso(prob, cfg.scaled_opts, warm, tau0);
    if (explore) {
        try {
            const auto start = scaled_lasso(prob, cfg.scaled_opts);
            auto alt = ml_lasso(prob, cfg.scaled_opts, start.coef, start.tau);
            if (alt.objective < res.objective) res = std::move(alt);
        } catch (const DegenerateResidual&) {
        }
    }
    return {res.coef, res.tau * res.tau, res.converged};
}

struct CycleLResult
{
    Mat l;
    bool converged = true;
};

/// Second (k = 1) or third (k = 2) cycle: group-lasso CM step on the columns
/// of L_k using the whitened quadratic form of H_(k), g_(k). The majorizer is
/// (l^T H l - 2 g^T l) / (2 tau^2), hence the 2 tau^2 lambda_l penalty.
inline CycleLResult cycle_l_update(const TraceDataset& d, const ModelParams& p, const FitConfig& cfg, int k)
{
    const Mat& cur = k == 1 ? p.l1 : p.l2;
    const Eigen::Index q = cur.rows();
    const Eigen::Index s = cur.cols();
    if (!p.has_random_effects()) return {cur, true};
    const auto sys = build_cycle_system(d, p, p.b_vec(), k);
    const auto root = psd_sqrt(sys.h);
    GroupLassoProblem prob;
    prob.sqrt_factor = root.factor;
    prob.target = pinv_factor(root) * sys.g;
    prob.group_size = q;
    prob.n_groups = s;
    prob.penalty = 2.0 * p.tau2 * cfg.lambda_l;
    const auto res = group_lasso(prob, cfg.group_opts, vec(cur));
    return {unvec(res.coef, q, s), res.converged};
}

inline CycleLResult cycle2_update(const TraceDataset& d, const ModelParams& p, const FitConfig& cfg)
{
    return cycle_l_update(d, p, cfg, 1);
}

inline CycleLResult cycle3_update(const TraceDataset& d, const ModelParams& p, const FitConfig& cfg)
{
    return cycle_l_update(d, p, cfg, 2);
}

inline Eigen::Index nonzeros(const Mat& m)
{
    return static_cast<Eigen::Index>((m.array() != 0.0).count());
}

inline Eigen::Index degrees_of_freedom(const ModelParams& p)
{
    return nonzeros(p.b_mat) + nonzeros(p.l1) + nonzeros(p.l2) + 1;
}

/// -2 loglik + df log N + 2 gamma df log(P1 P2 + Q1 S1 + Q2 S2), with S_k the
/// initial (candidate) ranks.
inline double ebic(const TraceDataset& d, const FitReport& r, double gamma)
{
    const double n = static_cast<double>(d.n_obs());
    const double df = static_cast<double>(degrees_of_freedom(r.params));
    const double space = static_cast<double>(d.dims.p() + d.dims.q1 * r.initial_ranks[0] + d.dims.q2 * r.initial_ranks[1]);
    return -2.0 * r.loglik + df * std::log(n) + 2.0 * gamma * df * std::log(space);
}

inline FitReport fit(const TraceDataset& d, const FitConfig& cfg)
{
    validate(d);
    if (cfg.max_iter < 1) throw InvalidArgument("max_iter must be >= 1");
    if (!(cfg.tol > 0.0)) throw InvalidArgument("tol must be > 0");
    if (!(cfg.lambda_b >= 0.0) || !(cfg.lambda_l >= 0.0)) throw InvalidArgument("penalties must be >= 0");

    using clock = std::chrono::steady_clock;
    FitReport rep;
    rep.lambda_b = cfg.lambda_b;
    rep.lambda_l = cfg.lambda_l;
    rep.seed = cfg.seed;
    ModelParams p = init_params(d, cfg);
    rep.initial_ranks = {p.s1(), p.s2()};
    if (p.s1() == 0 || p.s2() == 0) rep.random_effects_pruned = true;

    auto record = [&](int it, int cycle, const ModelParams& q) {
        TraceRecord t;
        t.iteration = it;
        t.cycle = cycle;
        const double nll = neg_log_lik(d, q);
        t.loglik = -nll;
        t.objective = nll + penalty(d, q, cfg.lambda_b, cfg.lambda_l);
        t.rank1 = q.s1();
        t.rank2 = q.s2();
        rep.trace.push_back(t);
        rep.objective_trace.push_back(t.objective);
        return t.objective;
    };

    double last = record(0, 0, p);
    for (int it = 1; it <= cfg.max_iter; ++it) {
        auto t0 = clock::now();
        const auto c1 = cycle1_update(d, p, cfg, it == 1);
        rep.per_cycle_timings[0] += clock::now() - t0;
        rep.solver_converged = rep.solver_converged && c1.converged;
        p.b_mat = unvec(c1.b, d.dims.p1, d.dims.p2);
        p.tau2 = c1.tau2;
        record(it, 1, p);

        t0 = clock::now();
        const auto c2 = cycle2_update(d, p, cfg);
        rep.per_cycle_timings[1] += clock::now() - t0;
        p.l1 = c2.l;
        record(it, 2, p);

        t0 = clock::now();
        const auto c3 = cycle3_update(d, p, cfg);
        rep.per_cycle_timings[2] += clock::now() - t0;
        p.l2 = c3.l;
        const double f = record(it, 3, p);
        rep.solver_converged = rep.solver_converged && c2.converged && c3.converged;

        if (cfg.normalize_each_iter) {
            auto pp = postprocess(p, cfg.rank_prune);
            p = std::move(pp.params);
            rep.random_effects_pruned = rep.random_effects_pruned || pp.all_pruned;
        } else if (cfg.rank_prune) {
            // Pruning only; the reported parameters are normalized at the end.
            p.l1 = drop_zero_columns(p.l1);
            p.l2 = drop_zero_columns(p.l2);
            if (p.l1.cols() == 0 || p.l2.cols() == 0) {
                p.l1.resize(p.l1.rows(), 0);
                p.l2.resize(p.l2.rows(), 0);
                rep.random_effects_pruned = true;
            }
        }
        record(it, 4, p);
        rep.loglik_trace.push_back(rep.trace.back().loglik);
        rep.iterations = it;
        if (std::abs(last - f) <= cfg.tol * std::max(1.0, std::abs(f))) {
            rep.converged = true;
            break;
        }
        last = f;
    }

    auto fin = postprocess(p, cfg.rank_prune);
    rep.params = std::move(fin.params);
    rep.random_effects_pruned = rep.random_effects_pruned || fin.all_pruned;
    rep.selected_ranks = {rep.params.s1(), rep.params.s2()};
    rep.loglik = -neg_log_lik(d, rep.params);
    rep.df = degrees_of_freedom(rep.params);
    rep.ebic = ebic(d, rep, cfg.ebic_gamma);
    return rep;
}

enum class Selection { ebic, kfold_cv };

struct TuneGrid
{
    std::vector<double> lambda_b_grid;
    std::vector<double> lambda_l_grid;
    Selection selection = Selection::ebic;
    int folds = 10;
    std::uint64_t fold_seed = 1;
};

/// `count` points equally spaced in log scale from lo to hi inclusive.
inline std::vector<double> log_grid(double lo, double hi, int count)
{
    if (count < 1 || !(lo > 0.0) || !(hi >= lo)) throw InvalidArgument("log_grid: need 0 < lo <= hi and count >= 1");
    std::vector<double> g(static_cast<std::size_t>(count));
    if (count == 1) {
        g[0] = lo;
        return g;
    }
    const double a = std::log(lo), b = std::log(hi);
    for (int i = 0; i < count; ++i) g[static_cast<std::size_t>(i)] = std::exp(a + (b - a) * i / (count - 1));
    g.front() = lo;
    g.back() = hi;
    return g;
}

struct GridCell
{
    double lambda_b = 0.0;
    double lambda_l = 0.0;
    double score = std::numeric_limits<double>::infinity();
    double ebic = std::numeric_limits<double>::infinity();
    double loglik = -std::numeric_limits<double>::infinity();
    Eigen::Index df = 0;
    Eigen::Index rank1 = 0;
    Eigen::Index rank2 = 0;
    int iterations = 0;
    std::string status = "failed";
};

struct TuneResult
{
    FitReport best;
    std::size_t best_index = 0;
    std::vector<GridCell> table;
};

namespace detail {

inline TraceDataset subset(const TraceDataset& d, const std::vector<std::size_t>& idx)
{
    TraceDataset out;
    out.dims = d.dims;
    out.groups.reserve(idx.size());
    for (auto i : idx) out.groups.push_back(d.groups[i]);
    return out;
}

inline double mspe_of(const std::vector<Vec>& y, const std::vector<Vec>& yhat)
{
    double s = 0.0;
    for (std::size_t i = 0; i < y.size(); ++i) s += (y[i] - yhat[i]).squaredNorm();
    return s / static_cast<double>(y.size());
}

// Fold label of every group: a seeded shuffle dealt round-robin.
inline std::vector<int> fold_labels(std::size_t n_groups, int folds, std::uint64_t seed)
{
    std::vector<std::size_t> order(n_groups);
    for (std::size_t i = 0; i < n_groups; ++i) order[i] = i;
    std::mt19937_64 rng(seed);
    for (std::size_t i = n_groups; i > 1; --i) {
        std::uniform_int_distribution<std::size_t> pick(0, i - 1);
        std::swap(order[i - 1], order[pick(rng)]);
    }
    std::vector<int> label(n_groups);
    for (std::size_t k = 0; k < n_groups; ++k) label[order[k]] = static_cast<int>(k % static_cast<std::size_t>(folds));
    return label;
}

} // namespace detail

/// Fits every grid cell and selects the minimum EBIC (or k-fold CV MSPE on
/// held-out groups). Ties go to the larger lambda_b, then the larger lambda_l.
inline TuneResult tune(const TraceDataset& d, const TuneGrid& grid, const FitConfig& base, int jobs = 1)
{
    if (grid.lambda_b_grid.empty() || grid.lambda_l_grid.empty()) throw InvalidArgument("tune: empty grid");
    const auto nb = grid.lambda_b_grid.size();
    const auto nl = grid.lambda_l_grid.size();
    TuneResult out;
    out.table.resize(nb * nl);
    std::vector<std::optional<FitReport>> fits(nb * nl);

    std::vector<int> labels;
    if (grid.selection == Selection::kfold_cv) {
        if (grid.folds < 2 || static_cast<std::size_t>(grid.folds) > d.groups.size()) {
            throw InvalidArgument("tune: folds must be in [2, number of groups]");
        }
        labels = detail::fold_labels(d.groups.size(), grid.folds, grid.fold_seed);
    }

    parallel_for(nb * nl, jobs, [&](std::size_t cell) {
        auto& row = out.table[cell];
        FitConfig cfg = base;
        cfg.lambda_b = grid.lambda_b_grid[cell / nl];
        cfg.lambda_l = grid.lambda_l_grid[cell % nl];
        row.lambda_b = cfg.lambda_b;
        row.lambda_l = cfg.lambda_l;
        try {
            auto rep = fit(d, cfg);
            row.ebic = rep.ebic;
            row.loglik = rep.loglik;
            row.df = rep.df;
            row.rank1 = rep.selected_ranks[0];
            row.rank2 = rep.selected_ranks[1];
            row.iterations = rep.iterations;
            row.status = rep.converged ? "ok" : "max_iter";
            if (grid.selection == Selection::ebic) {
                row.score = rep.ebic;
            } else {
                double total = 0.0;
                for (int f = 0; f < grid.folds; ++f) {
                    std::vector<std::size_t> tr, te;
                    for (std::size_t i = 0; i < labels.size(); ++i) (labels[i] == f ? te : tr).push_back(i);
                    const auto train = detail::subset(d, tr);
                    const auto test = detail::subset(d, te);
                    const auto frep = fit(train, cfg);
                    const auto yhat = predict(train, frep.params, PredictMode::marginal, test);
                    std::vector<Vec> y;
                    for (const auto& g : test.groups) y.push_back(g.y);
                    total += detail::mspe_of(y, yhat);
                }
                row.score = total / grid.folds;
            }
            if (!std::isfinite(row.score)) {
                row.score = std::numeric_limits<double>::infinity();
                row.status = "failed";
            }
            fits[cell] = std::move(rep);
        } catch (const std::exception&) {
            row.score = std::numeric_limits<double>::infinity();
            row.status = "failed";
        }
    });

    std::optional<std::size_t> best;
    for (std::size_t c = 0; c < out.table.size(); ++c) {
        if (!fits[c]) continue;
        if (!best) {
            best = c;
            continue;
        }
        const auto& a = out.table[c];
        const auto& b = out.table[*best];
        const bool better = a.score < b.score
            || (a.score == b.score && (a.lambda_b > b.lambda_b
                || (a.lambda_b == b.lambda_b && a.lambda_l > b.lambda_l)));
        if (better) best = c;
    }
    if (!best) throw Error("tune: every grid cell failed");
    out.best_index = *best;
    out.best = std::move(*fits[*best]);
    return out;
}

} // namespace mmtr
