// Command-line driver: simulate, fit, tune, predict, eval, replicate.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include <mmtr/mmtr.hpp>

namespace fs = std::filesystem;
using namespace mmtr;

namespace {

enum Exit { ok = 0, failure = 1, bad_flags = 2, io_failure = 3, not_converged = 4, unknown_group = 5 };

enum class Level { error = 0, info = 1, debug = 2 };

Level log_level()
{
    const char* v = std::getenv("MMTR_LOG");
    if (!v) return Level::error;
    const std::string s(v);
    if (s == "debug") return Level::debug;
    if (s == "info") return Level::info;
    return Level::error;
}

void log(Level l, const std::string& msg)
{
    static const Level threshold = log_level();
    if (l > threshold) return;
    static const char* names[] = {"error", "info", "debug"};
    std::cerr << "[mmtr " << names[static_cast<int>(l)] << "] " << msg << '\n';
}

struct UsageError : Error
{
    using Error::Error;
};

struct NotConverged : Error
{
    using Error::Error;
};

std::vector<double> parse_grid(const std::string& text)
{
    const auto a = text.find(':');
    const auto b = a == std::string::npos ? a : text.find(':', a + 1);
    if (b == std::string::npos) throw UsageError("grid '" + text + "' is not lo:hi:k");
    try {
        const double lo = parse_double(text.substr(0, a));
        const double hi = parse_double(text.substr(a + 1, b - a - 1));
        const std::string ks = text.substr(b + 1);
        std::size_t used = 0;
        const int k = std::stoi(ks, &used);
        if (used != ks.size()) throw UsageError("grid count '" + ks + "' is not an integer");
        return log_grid(lo, hi, k);
    } catch (const UsageError&) {
        throw;
    } catch (const std::exception& e) {
        throw UsageError("grid '" + text + "': " + e.what());
    }
}

fs::path with_suffix(const fs::path& p, const std::string& suffix)
{
    auto out = p;
    out += suffix;
    return out;
}

// Options shared by fit, tune and replicate.
struct FitFlags
{
    int max_iter = 200;
    double tol = 1e-6;
    std::uint64_t seed = 1;
    double rank_factor = 1.0;
    bool normalize_each_iter = false;
    bool no_prune = false;
    double ebic_gamma = 0.5;
    std::string cycle1 = "ml";

    void add(CLI::App* app)
    {
        app->add_option("--max-iter", max_iter, "Maximum AECM iterations")->check(CLI::PositiveNumber);
        app->add_option("--tol", tol, "Relative objective change for convergence")->check(CLI::PositiveNumber);
        app->add_option("--seed", seed, "Seed for the random initialization");
        app->add_option("--rank-factor", rank_factor, "Initial rank S_k = max(1, ceil(factor log Q_k))")
            ->check(CLI::PositiveNumber);
        app->add_flag("--normalize-each-iter", normalize_each_iter, "Rescale and rotate L1, L2 after every iteration");
        app->add_flag("--no-prune", no_prune, "Keep zero columns of L1, L2");
        app->add_option("--ebic-gamma", ebic_gamma, "EBIC model-space weight")->check(CLI::NonNegativeNumber);
        app->add_option("--cycle1", cycle1, "First-cycle solver")->check(CLI::IsMember({"ml", "scaled"}));
    }

    FitConfig config() const
    {
        FitConfig c;
        c.max_iter = max_iter;
        c.tol = tol;
        c.seed = seed;
        c.init_rank_factor = rank_factor;
        c.normalize_each_iter = normalize_each_iter;
        c.rank_prune = !no_prune;
        c.ebic_gamma = ebic_gamma;
        c.cycle1 = cycle1 == "scaled" ? Cycle1Mode::scaled_lasso : Cycle1Mode::penalized_ml;
        return c;
    }
};

std::string fit_summary(const FitReport& r)
{
    return "iterations=" + std::to_string(r.iterations) + " converged=" + (r.converged ? "true" : "false")
        + " ranks=" + std::to_string(r.selected_ranks[0]) + "," + std::to_string(r.selected_ranks[1])
        + " loglik=" + fmt(r.loglik) + " ebic=" + fmt(r.ebic);
}

void check_strict(bool strict, const FitReport& r)
{
    if (strict && (!r.converged || !r.solver_converged)) {
        throw NotConverged("fit did not converge within " + std::to_string(r.iterations) + " iterations");
    }
}

// ---- simulate ------------------------------------------------------------

struct SimulateCmd
{
    std::string which = "mmtr";
    Eigen::Index p1 = 5, p2 = 5, q1 = 5, q2 = 5, s1 = 2, s2 = 2, n = 18, m = 2;
    double tau2 = 0.5;
    double sparsity = 0.4;
    std::optional<double> alpha;
    std::uint64_t seed = 1;
    std::string out, truth;

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("simulate", "Generate a seeded dataset and its truth model");
        c->add_option("--case", which, "Generating model")->check(CLI::IsMember({"mmtr", "equicorr"}));
        c->add_option("--p1", p1)->check(CLI::PositiveNumber);
        c->add_option("--p2", p2)->check(CLI::PositiveNumber);
        c->add_option("--q1", q1, "Ignored for equicorr (Z = X)")->check(CLI::PositiveNumber);
        c->add_option("--q2", q2, "Ignored for equicorr (Z = X)")->check(CLI::PositiveNumber);
        c->add_option("--s1", s1)->check(CLI::PositiveNumber);
        c->add_option("--s2", s2)->check(CLI::PositiveNumber);
        c->add_option("--n", n, "Number of groups")->check(CLI::PositiveNumber);
        c->add_option("--m", m, "Observations per group")->check(CLI::PositiveNumber);
        c->add_option("--tau2", tau2)->check(CLI::PositiveNumber);
        c->add_option("--sparsity", sparsity, "Fraction of zero entries in B")->check(CLI::Range(0.0, 1.0));
        c->add_option("--alpha", alpha, "Fixed equicorrelation (default: drawn from U(0.2, 0.8))")
            ->check(CLI::Range(0.0, 0.999999));
        c->add_option("--seed", seed);
        c->add_option("--out", out, "Dataset CSV path")->required();
        c->add_option("--truth", truth, "Truth model path (default <out>.truth.json)");
        c->callback([this] { run(); });
    }

    void run()
    {
        SimData sim;
        if (which == "mmtr") {
            MmtrScenario s{p1, p2, q1, q2, s1, s2, n, m, tau2, sparsity, seed};
            try {
                sim = gen_mmtr(s);
            } catch (const InvalidArgument& e) {
                throw UsageError(e.what());
            }
        } else {
            EquicorrScenario s;
            s.p1 = p1;
            s.p2 = p2;
            s.n = n;
            s.m = m;
            s.alpha = alpha;
            s.sparsity_frac = sparsity;
            s.seed = seed;
            try {
                sim = gen_equicorr(s);
            } catch (const InvalidArgument& e) {
                throw UsageError(e.what());
            }
        }
        const fs::path out_path(out);
        const fs::path truth_path = truth.empty() ? with_suffix(out_path, ".truth.json") : fs::path(truth);
        write_dataset(out_path, sim.data);
        ModelFile tf;
        tf.dims = sim.data.dims;
        tf.params = sim.truth.params;
        tf.selected_ranks = {sim.truth.params.s1(), sim.truth.params.s2()};
        tf.metadata["kind"] = "truth";
        tf.metadata["case"] = which;
        tf.metadata["seed"] = seed;
        tf.metadata["n"] = n;
        tf.metadata["m"] = m;
        if (sim.truth.alpha) tf.metadata["alpha"] = *sim.truth.alpha;
        write_model(truth_path, tf);
        const auto nz = (sim.truth.params.b_mat.array() == 0.0).count();
        std::cout << "N=" << sim.data.n_obs() << " groups=" << sim.data.groups.size() << " dims=" << sim.data.dims.p1
                  << "x" << sim.data.dims.p2 << "," << sim.data.dims.q1 << "x" << sim.data.dims.q2
                  << " zeros_in_B=" << nz << "/" << sim.data.dims.p() << '\n';
    }
};

// ---- fit -------------------------------------------------------------------

struct FitCmd
{
    std::string data, out, trace, init;
    double lambda_b = 0.0, lambda_l = 0.0;
    bool strict = false;
    FitFlags flags;

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("fit", "Fit MMTR at fixed penalties");
        c->add_option("--data", data, "Dataset CSV")->required();
        c->add_option("--lambda-b", lambda_b, "Lasso penalty on B")->required()->check(CLI::NonNegativeNumber);
        c->add_option("--lambda-l", lambda_l, "Group penalty on L1, L2 columns")->required()->check(CLI::NonNegativeNumber);
        c->add_option("--out", out, "Model JSON path")->required();
        c->add_option("--trace", trace, "Objective trace CSV (default <out>.trace.csv)");
        c->add_option("--init", init, "Start from this model file");
        c->add_flag("--strict", strict, "Exit 4 unless the fit converged");
        flags.add(c);
        c->callback([this] { run(); });
    }

    void run()
    {
        const auto d = read_dataset(data);
        FitConfig cfg = flags.config();
        cfg.lambda_b = lambda_b;
        cfg.lambda_l = lambda_l;
        if (!init.empty()) {
            auto mf = read_model(init);
            if (!(mf.dims == d.dims)) throw UsageError("--init model dims do not match the dataset");
            cfg.init = std::move(mf.params);
        }
        log(Level::info, "fitting " + std::to_string(d.n_obs()) + " observations in " + std::to_string(d.groups.size())
                             + " groups");
        const auto rep = fit(d, cfg);
        log(Level::debug, "cycle times (ms): " + std::to_string(rep.per_cycle_timings[0].count() / 1e6) + " "
                              + std::to_string(rep.per_cycle_timings[1].count() / 1e6) + " "
                              + std::to_string(rep.per_cycle_timings[2].count() / 1e6));
        const fs::path out_path(out);
        write_model(out_path, model_file(d.dims, rep));
        atomic_write(trace.empty() ? with_suffix(out_path, ".trace.csv") : fs::path(trace), trace_csv(rep));
        std::cout << fit_summary(rep) << '\n';
        check_strict(strict, rep);
    }
};

// ---- tune ------------------------------------------------------------------

struct TuneCmd
{
    std::string data, out, grid_out;
    std::string grid_b = "1e-4:0.04:10", grid_l = "1e-4:1:10";
    std::string select = "ebic";
    int folds = 10;
    std::uint64_t fold_seed = 1;
    int jobs = 1;
    bool strict = false;
    FitFlags flags;

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("tune", "Grid search over (lambda_b, lambda_l)");
        c->add_option("--data", data, "Dataset CSV")->required();
        c->add_option("--grid-b", grid_b, "lambda_b grid lo:hi:k, log-spaced");
        c->add_option("--grid-l", grid_l, "lambda_l grid lo:hi:k, log-spaced");
        c->add_option("--select", select, "Selection rule")->check(CLI::IsMember({"ebic", "cv"}));
        c->add_option("--folds", folds, "Folds over groups for cv")->check(CLI::Range(2, 1000000));
        c->add_option("--fold-seed", fold_seed);
        c->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
        c->add_option("--out", out, "Best model JSON path")->required();
        c->add_option("--grid-out", grid_out, "Grid CSV (default <out>.grid.csv)");
        c->add_flag("--strict", strict, "Exit 4 unless the selected fit converged");
        flags.add(c);
        c->callback([this] { run(); });
    }

    void run()
    {
        TuneGrid g;
        g.lambda_b_grid = parse_grid(grid_b);
        g.lambda_l_grid = parse_grid(grid_l);
        g.selection = select == "cv" ? Selection::kfold_cv : Selection::ebic;
        g.folds = folds;
        g.fold_seed = fold_seed;
        const auto d = read_dataset(data);
        if (g.selection == Selection::kfold_cv && static_cast<std::size_t>(folds) > d.groups.size()) {
            throw UsageError("--folds exceeds the number of groups");
        }
        log(Level::info, "tuning over " + std::to_string(g.lambda_b_grid.size() * g.lambda_l_grid.size()) + " cells");
        const auto res = tune(d, g, flags.config(), jobs);
        const fs::path out_path(out);
        write_model(out_path, model_file(d.dims, res.best));
        atomic_write(grid_out.empty() ? with_suffix(out_path, ".grid.csv") : fs::path(grid_out), grid_csv(res));
        std::cout << "lambda_b=" << fmt(res.best.lambda_b) << " lambda_l=" << fmt(res.best.lambda_l) << ' '
                  << fit_summary(res.best) << '\n';
        check_strict(strict, res.best);
    }
};

// ---- predict / eval --------------------------------------------------------

PredictMode parse_mode(const std::string& m)
{
    return m == "conditional" ? PredictMode::conditional : PredictMode::marginal;
}

ModelFile load_model_for(const std::string& path, const TraceDataset& d)
{
    auto mf = read_model(path);
    if (!(mf.dims == d.dims)) throw UsageError("model dims do not match the dataset");
    return mf;
}

struct PredictCmd
{
    std::string model, data, train, out, mode = "marginal";

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("predict", "Predict responses for a dataset");
        c->add_option("--model", model, "Model JSON")->required();
        c->add_option("--data", data, "Dataset CSV to predict")->required();
        c->add_option("--train", train, "Dataset whose groups supply random-effect predictions (default --data)");
        c->add_option("--mode", mode)->check(CLI::IsMember({"marginal", "conditional"}));
        c->add_option("--out", out, "Predictions CSV")->required();
        c->callback([this] { run(); });
    }

    void run()
    {
        const auto d = read_dataset(data);
        const auto mf = load_model_for(model, d);
        const auto tr = train.empty() ? d : read_dataset(train);
        const auto yhat = predict(tr, mf.params, parse_mode(mode), d);
        std::string s = "group_id,obs_index,y,y_hat\n";
        for (std::size_t i = 0; i < d.groups.size(); ++i) {
            const auto& g = d.groups[i];
            for (Eigen::Index j = 0; j < g.size(); ++j) {
                s += g.id + ',' + std::to_string(j) + ',' + fmt(g.y[j]) + ',' + fmt(yhat[i][j]) + '\n';
            }
        }
        atomic_write(out, s);
    }
};

struct EvalCmd
{
    std::string model, data, train, truth, out, mode = "marginal";

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("eval", "Prediction metrics and, with --truth, estimation errors");
        c->add_option("--model", model, "Model JSON")->required();
        c->add_option("--data", data, "Dataset CSV")->required();
        c->add_option("--train", train, "Dataset whose groups supply random-effect predictions (default --data)");
        c->add_option("--mode", mode)->check(CLI::IsMember({"marginal", "conditional"}));
        c->add_option("--truth", truth, "Truth model JSON");
        c->add_option("--out", out, "Metrics JSON (default stdout)");
        c->callback([this] { run(); });
    }

    void run()
    {
        const auto d = read_dataset(data);
        const auto mf = load_model_for(model, d);
        const auto tr = train.empty() ? d : read_dataset(train);
        const auto yhat = predict(tr, mf.params, parse_mode(mode), d);
        const auto y = responses(d);
        nlohmann::ordered_json j;
        j["mode"] = mode;
        j["n_groups"] = d.groups.size();
        j["mspe"] = mspe(y, yhat);
        j["r2"] = r2(y, yhat);
        if (!truth.empty()) {
            const auto tf = load_model_for(truth, d);
            TruthBundle tb;
            tb.params = tf.params;
            if (tf.metadata.contains("alpha")) tb.alpha = tf.metadata.at("alpha").get<double>();
            j["err_B"] = rel_err(mf.params.b_mat, tb.params.b_mat);
            if (tb.params.has_random_effects()) {
                const auto ce = cov_err(mf.params, tb.params);
                j["err_Sigma1"] = ce.sigma1;
                j["err_Sigma2"] = ce.sigma2;
            }
            j["err_Lambda"] = lambda_err(d, mf.params, tb);
        }
        const auto text = j.dump(2) + "\n";
        if (out.empty()) {
            std::cout << text;
        } else {
            atomic_write(out, text);
        }
    }
};

// ---- replicate -------------------------------------------------------------

Scenario scenario_from_json(const nlohmann::json& j)
{
    const auto which = j.value("case", std::string("mmtr"));
    if (which == "mmtr") {
        MmtrScenario s;
        s.p1 = j.value("p1", s.p1);
        s.p2 = j.value("p2", s.p2);
        s.q1 = j.value("q1", s.q1);
        s.q2 = j.value("q2", s.q2);
        s.s1 = j.value("s1", s.s1);
        s.s2 = j.value("s2", s.s2);
        s.n = j.value("n", s.n);
        s.m = j.value("m", s.m);
        s.tau2 = j.value("tau2", s.tau2);
        s.sparsity_frac = j.value("sparsity", s.sparsity_frac);
        check(s);
        return s;
    }
    if (which == "equicorr") {
        EquicorrScenario s;
        s.p1 = j.value("p1", s.p1);
        s.p2 = j.value("p2", s.p2);
        s.n = j.value("n", s.n);
        s.m = j.value("m", s.m);
        s.alpha_lo = j.value("alpha_lo", s.alpha_lo);
        s.alpha_hi = j.value("alpha_hi", s.alpha_hi);
        if (j.contains("alpha")) s.alpha = j.at("alpha").get<double>();
        s.sparsity_frac = j.value("sparsity", s.sparsity_frac);
        check(s);
        return s;
    }
    throw UsageError("scenario case must be mmtr or equicorr");
}

std::string cell(double v)
{
    return std::isfinite(v) ? fmt(v) : std::string("NA");
}

struct ReplicateCmd
{
    std::string scenario_file, out;
    int reps = 1;
    std::uint64_t seed = 1;
    int jobs = 1;
    bool timings = false;

    void add(CLI::App& app)
    {
        auto* c = app.add_subcommand("replicate", "Seeded simulation replications with tuning and scoring");
        c->add_option("--scenario-file", scenario_file, "Scenario JSON")->required();
        c->add_option("--reps", reps)->check(CLI::PositiveNumber);
        c->add_option("--seed", seed, "Replication r uses seed + r");
        c->add_option("--jobs", jobs, "Worker threads")->check(CLI::PositiveNumber);
        c->add_option("--out", out, "Replication table CSV")->required();
        c->add_flag("--timings", timings, "Record wall-clock runtime_ms (makes output run-dependent)");
        c->callback([this] { run(); });
    }

    void run()
    {
        nlohmann::json j;
        try {
            j = nlohmann::json::parse(read_file(scenario_file));
        } catch (const nlohmann::json::exception& e) {
            throw FormatError("scenario file: " + std::string(e.what()));
        }
        Scenario scenario;
        ReplicationOptions o;
        try {
            scenario = scenario_from_json(j);
            o.grid.lambda_b_grid = parse_grid(j.value("grid_b", std::string("1e-4:0.04:10")));
            o.grid.lambda_l_grid = parse_grid(j.value("grid_l", std::string("1e-4:1:10")));
            const auto sel = j.value("select", std::string("ebic"));
            if (sel != "ebic" && sel != "cv") throw UsageError("select must be ebic or cv");
            o.grid.selection = sel == "cv" ? Selection::kfold_cv : Selection::ebic;
            o.grid.folds = j.value("folds", 10);
            o.fit.max_iter = j.value("max_iter", o.fit.max_iter);
            o.fit.tol = j.value("tol", o.fit.tol);
            o.test_groups = j.value("test_groups", Eigen::Index{0});
        } catch (const InvalidArgument& e) {
            throw UsageError(e.what());
        } catch (const nlohmann::json::exception& e) {
            throw UsageError("scenario file: " + std::string(e.what()));
        }
        o.reps = reps;
        o.seed = seed;
        o.jobs = jobs;
        const auto t = run_replications(scenario, o);

        std::string head, fields;
        std::visit(
            [&](const auto& s) {
                using S = std::decay_t<decltype(s)>;
                if constexpr (std::is_same_v<S, MmtrScenario>) {
                    head = "case,p1,p2,q1,q2,s1,s2,n,m";
                    fields = "mmtr," + std::to_string(s.p1) + ',' + std::to_string(s.p2) + ',' + std::to_string(s.q1)
                        + ',' + std::to_string(s.q2) + ',' + std::to_string(s.s1) + ',' + std::to_string(s.s2) + ','
                        + std::to_string(s.n) + ',' + std::to_string(s.m);
                } else {
                    head = "case,p1,p2,q1,q2,s1,s2,n,m";
                    const auto dm = dims_of(s);
                    fields = "equicorr," + std::to_string(s.p1) + ',' + std::to_string(s.p2) + ','
                        + std::to_string(dm.q1) + ',' + std::to_string(dm.q2) + ",NA,NA," + std::to_string(s.n) + ','
                        + std::to_string(s.m);
                }
            },
            scenario);
        std::string csv = head
            + ",rep,seed,status,err_B,err_Sigma1,err_Sigma2,err_Lambda,mspe,rank1,rank2,lambda_b,lambda_l,alpha,runtime_ms\n";
        for (const auto& r : t.rows) {
            csv += fields + ',' + std::to_string(r.rep) + ',' + std::to_string(r.seed) + ',' + r.status + ','
                + cell(r.err_b) + ',' + cell(r.err_sigma1) + ',' + cell(r.err_sigma2) + ',' + cell(r.err_lambda) + ','
                + cell(r.mspe) + ',' + std::to_string(r.rank1) + ',' + std::to_string(r.rank2) + ','
                + cell(r.lambda_b) + ',' + cell(r.lambda_l) + ',' + cell(r.alpha) + ','
                + (timings ? fmt(r.runtime_ms) : std::string("0")) + '\n';
        }
        std::string summary = "metric,mean,sd,count\n";
        auto add = [&](const char* name, const Summary& s) {
            summary += std::string(name) + ',' + cell(s.mean) + ',' + cell(s.sd) + ',' + std::to_string(s.count) + '\n';
        };
        add("err_B", t.err_b);
        add("err_Sigma1", t.err_sigma1);
        add("err_Sigma2", t.err_sigma2);
        add("err_Lambda", t.err_lambda);
        add("mspe", t.mspe);
        const fs::path out_path(out);
        atomic_write(out_path, csv);
        atomic_write(with_suffix(out_path, ".summary.csv"), summary);
        if (!t.alpha_bins.empty()) {
            std::string bins = "alpha_lo,alpha_hi,count,err_Lambda_mean,err_Lambda_sd,err_B_mean,err_B_sd\n";
            for (const auto& b : t.alpha_bins) {
                bins += fmt(b.lo) + ',' + fmt(b.hi) + ',' + std::to_string(b.err_lambda.count) + ','
                    + cell(b.err_lambda.mean) + ',' + cell(b.err_lambda.sd) + ',' + cell(b.err_b.mean) + ','
                    + cell(b.err_b.sd) + '\n';
            }
            atomic_write(with_suffix(out_path, ".alpha_bins.csv"), bins);
        }
        std::cout << "reps=" << reps << " err_B=" << cell(t.err_b.mean) << " (" << cell(t.err_b.sd) << ")"
                  << " err_Sigma1=" << cell(t.err_sigma1.mean) << " err_Sigma2=" << cell(t.err_sigma2.mean)
                  << " err_Lambda=" << cell(t.err_lambda.mean) << '\n';
    }
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Mixed-effects trace regression: fitting, tuning and simulation"};
    app.require_subcommand(1);
    SimulateCmd simulate;
    FitCmd fit_cmd;
    TuneCmd tune_cmd;
    PredictCmd predict_cmd;
    EvalCmd eval_cmd;
    ReplicateCmd replicate;
    simulate.add(app);
    fit_cmd.add(app);
    tune_cmd.add(app);
    predict_cmd.add(app);
    eval_cmd.add(app);
    replicate.add(app);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : bad_flags;
    } catch (const UsageError& e) {
        log(Level::error, e.what());
        return bad_flags;
    } catch (const InvalidArgument& e) {
        log(Level::error, e.what());
        return bad_flags;
    } catch (const IoError& e) {
        log(Level::error, e.what());
        return io_failure;
    } catch (const FormatError& e) {
        log(Level::error, e.what());
        return io_failure;
    } catch (const NotConverged& e) {
        log(Level::error, e.what());
        return not_converged;
    } catch (const UnknownGroup& e) {
        log(Level::error, e.what());
        return unknown_group;
    } catch (const std::exception& e) {
        log(Level::error, e.what());
        return failure;
    }
    return ok;
}
