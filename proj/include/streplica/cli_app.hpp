#pragma once

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "streplica/analytic.hpp"
#include "streplica/compare.hpp"
#include "streplica/hyperopt.hpp"
#include "streplica/io.hpp"
#include "streplica/replica.hpp"
#include "streplica/simulator.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace streplica::cli {

using nlohmann::json;

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline void reject_unknown(const json& obj, const std::set<std::string>& allowed,
                           const std::string& path) {
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!allowed.count(it.key()))
            throw ConfigError("unknown field: " + path + it.key());
}

template <typename T>
T get_or(const json& obj, const std::string& key, T def) {
    if (!obj.contains(key)) return def;
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad type for field: " + key);
    }
}

template <typename T>
T get_required(const json& obj, const std::string& key, const std::string& path) {
    if (!obj.contains(key)) throw ConfigError("missing required field: " + path + key);
    try {
        return obj.at(key).get<T>();
    } catch (const json::exception&) {
        throw ConfigError("bad type for field: " + path + key);
    }
}

inline json parse_set_value(const std::string& raw) {
    try {
        return json::parse(raw);
    } catch (const json::exception&) {
        return json(raw); // plain string
    }
}

inline void apply_override(json& cfg, const std::string& dotted, const std::string& raw) {
    json* node = &cfg;
    std::size_t pos = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', pos);
        const std::string key = dotted.substr(pos, dot - pos);
        if (key.empty()) throw ConfigError("bad --set path: " + dotted);
        if (dot == std::string::npos) {
            (*node)[key] = parse_set_value(raw);
            return;
        }
        node = &(*node)[key];
        pos = dot + 1;
    }
}

} // namespace detail

struct ResolvedConfig {
    std::string mode;
    MixtureConfig mixture;
    LossSpec loss;
    double lambda_l = 0.0;
    double lambda_u = 0.0;
    bool bias_fixed = false;
    QuadratureSpec quad;
    FixedPointOptions fp;
    double newton_tol = 1e-10;
    int newton_max_iter = 200;
    std::uint64_t seed = 0;
    int replicates = 10;
    std::vector<int> n_list;
    int histogram_bins = 61;
    bool dump_datasets = false;
    // optimize mode
    std::vector<std::string> opt_params;
    int opt_max_eval = 300;
    double opt_tol = 1e-6;
    double lambda_min = 1e-5, lambda_max = 0.1, gamma_max = 3.0, a_max = 2.0;
    // analytic mode
    double analytic_horizon_tau = 5.0;
    int analytic_points = 101;
    std::vector<double> analytic_lambda_grid;

    json echo; // fully resolved config for the manifest
};

inline ResolvedConfig resolve_config(const json& cfg) {
    using namespace detail;
    reject_unknown(cfg, {"mode", "scenario", "quadrature", "fixed_point", "newton", "optimize",
                         "analytic", "seed", "replicates", "n_list", "histogram_bins",
                         "dump_datasets"},
                   "");
    ResolvedConfig r;
    r.mode = get_required<std::string>(cfg, "mode", "");
    const std::set<std::string> modes = {"solve", "simulate", "compare", "optimize", "analytic"};
    if (!modes.count(r.mode)) throw ConfigError("unknown mode: " + r.mode);

    if (!cfg.contains("scenario")) throw ConfigError("missing required field: scenario");
    const json& sc = cfg.at("scenario");
    reject_unknown(sc,
                   {"n_dim", "rho", "delta", "alpha_l", "alpha_u", "t_steps", "loss", "pl_loss",
                    "model_link", "pl_link", "lambda_l", "lambda_u", "gamma", "anneal_rate",
                    "pl_gamma", "bias_fixed"},
                   "scenario.");

    r.mixture.rho_l = r.mixture.rho_u = get_required<double>(sc, "rho", "scenario.");
    r.mixture.delta_l = r.mixture.delta_u = get_required<double>(sc, "delta", "scenario.");
    r.mixture.alpha_l = get_required<double>(sc, "alpha_l", "scenario.");
    r.mixture.alpha_u = get_required<double>(sc, "alpha_u", "scenario.");
    r.mixture.n_batches = get_required<int>(sc, "t_steps", "scenario.");
    r.mixture.n_dim = get_or<int>(sc, "n_dim", 1024);

    r.loss.loss = loss_from_string(get_required<std::string>(sc, "loss", "scenario."));
    r.loss.pl_loss = loss_from_string(get_required<std::string>(sc, "pl_loss", "scenario."));
    r.loss.model_link = link_from_string(get_required<std::string>(sc, "model_link", "scenario."));
    r.loss.pl_link = link_from_string(get_required<std::string>(sc, "pl_link", "scenario."));
    if (r.loss.pl_link == Link::hard)
        throw ConfigError("scenario.pl_link: hard labels are exposed through annealed_sigmoid");
    r.loss.pls_threshold = get_or<double>(sc, "gamma", 0.0);
    r.loss.anneal_rate = get_or<double>(sc, "anneal_rate", 0.0);
    r.loss.pl_gamma = get_or<double>(sc, "pl_gamma", 1.0);
    r.bias_fixed = get_or<bool>(sc, "bias_fixed", false);

    const json opt = cfg.contains("optimize") ? cfg.at("optimize") : json::object();
    std::set<std::string> optimized;
    if (r.mode == "optimize") {
        reject_unknown(opt, {"params", "max_eval", "tol", "lambda_min", "lambda_max", "gamma_max",
                             "a_max"},
                       "optimize.");
        r.opt_params = get_required<std::vector<std::string>>(opt, "params", "optimize.");
        if (r.opt_params.empty()) throw ConfigError("optimize.params must not be empty");
        for (const auto& p : r.opt_params) {
            if (p != "lambda_l" && p != "lambda_u" && p != "gamma" && p != "anneal_rate")
                throw ConfigError("optimize.params: unknown parameter " + p);
            optimized.insert(p);
        }
        r.opt_max_eval = get_or<int>(opt, "max_eval", 300);
        r.opt_tol = get_or<double>(opt, "tol", 1e-6);
        r.lambda_min = get_or<double>(opt, "lambda_min", 1e-5);
        r.lambda_max = get_or<double>(opt, "lambda_max", 0.1);
        r.gamma_max = get_or<double>(opt, "gamma_max", 3.0);
        r.a_max = get_or<double>(opt, "a_max", 2.0);
    } else if (cfg.contains("optimize")) {
        throw ConfigError("optimize block is only valid in optimize mode");
    }

    if (sc.contains("lambda_l") || !optimized.count("lambda_l"))
        r.lambda_l = get_required<double>(sc, "lambda_l", "scenario.");
    const bool need_lambda_u = r.mixture.n_batches >= 1 && !optimized.count("lambda_u") &&
                               r.mode != "analytic";
    if (sc.contains("lambda_u") || need_lambda_u)
        r.lambda_u = get_required<double>(sc, "lambda_u", "scenario.");

    const json q = cfg.contains("quadrature") ? cfg.at("quadrature") : json::object();
    reject_unknown(q, {"backend", "gh_nodes", "mc_samples"}, "quadrature.");
    const std::string default_backend =
        r.loss.pls_threshold > 0.0 ? "monte_carlo" : "gauss_hermite";
    r.quad.backend = quad_backend_from_string(get_or<std::string>(q, "backend", default_backend));
    r.quad.gh_nodes = get_or<int>(q, "gh_nodes", 80);
    r.quad.mc_samples = get_or<long>(q, "mc_samples", 200000);
    r.quad.seed = 0; // overwritten by the run seed below

    const json fp = cfg.contains("fixed_point") ? cfg.at("fixed_point") : json::object();
    reject_unknown(fp, {"eta_d", "eps_tol", "s_max"}, "fixed_point.");
    r.fp.eta_d = get_or<double>(fp, "eta_d", 0.5);
    r.fp.eps_tol = get_or<double>(fp, "eps_tol", 1e-8);
    r.fp.s_max = get_or<int>(fp, "s_max", 5000);

    const json nw = cfg.contains("newton") ? cfg.at("newton") : json::object();
    reject_unknown(nw, {"tol", "max_iter"}, "newton.");
    r.newton_tol = get_or<double>(nw, "tol", 1e-10);
    r.newton_max_iter = get_or<int>(nw, "max_iter", 200);

    r.seed = get_or<std::uint64_t>(cfg, "seed", 0);
    r.quad.seed = r.seed;
    r.replicates = get_or<int>(cfg, "replicates", 10);
    r.histogram_bins = get_or<int>(cfg, "histogram_bins", 61);
    r.dump_datasets = get_or<bool>(cfg, "dump_datasets", false);

    if (r.mode == "compare") {
        r.n_list = get_required<std::vector<int>>(cfg, "n_list", "");
        if (r.n_list.empty()) throw ConfigError("n_list must not be empty");
    } else if (cfg.contains("n_list")) {
        throw ConfigError("n_list is only valid in compare mode");
    }
    if (r.mode == "simulate" && !sc.contains("n_dim"))
        throw ConfigError("missing required field: scenario.n_dim");

    const json an = cfg.contains("analytic") ? cfg.at("analytic") : json::object();
    if (r.mode == "analytic") {
        reject_unknown(an, {"horizon_tau", "points", "lambda_grid"}, "analytic.");
        r.analytic_horizon_tau = get_or<double>(an, "horizon_tau", 5.0);
        r.analytic_points = get_or<int>(an, "points", 101);
        r.analytic_lambda_grid = get_or<std::vector<double>>(an, "lambda_grid", {});
    } else if (cfg.contains("analytic")) {
        throw ConfigError("analytic block is only valid in analytic mode");
    }

    // validate the numeric ranges early so bad configs exit with code 2
    try {
        r.loss.validate();
        if (r.mode != "analytic" || true) {
            MixtureConfig probe = r.mixture;
            if (probe.n_dim <= 0) probe.n_dim = 1024;
            probe.validate();
        }
        if (r.mode != "optimize") {
            require(r.lambda_l > 0.0, "scenario.lambda_l must be positive");
            if (r.mixture.n_batches >= 1 && r.mode != "analytic")
                require(r.lambda_u > 0.0, "scenario.lambda_u must be positive");
        }
        r.quad.validate();
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }

    // manifest echo with every default materialized
    r.echo["mode"] = r.mode;
    r.echo["scenario"] = {{"n_dim", r.mixture.n_dim},
                          {"rho", r.mixture.rho_u},
                          {"delta", r.mixture.delta_u},
                          {"alpha_l", r.mixture.alpha_l},
                          {"alpha_u", r.mixture.alpha_u},
                          {"t_steps", r.mixture.n_batches},
                          {"loss", to_string(r.loss.loss)},
                          {"pl_loss", to_string(r.loss.pl_loss)},
                          {"model_link", to_string(r.loss.model_link)},
                          {"pl_link", to_string(r.loss.pl_link)},
                          {"lambda_l", r.lambda_l},
                          {"lambda_u", r.lambda_u},
                          {"gamma", r.loss.pls_threshold},
                          {"anneal_rate", r.loss.anneal_rate},
                          {"pl_gamma", r.loss.pl_gamma},
                          {"bias_fixed", r.bias_fixed}};
    r.echo["quadrature"] = {{"backend", to_string(r.quad.backend)},
                            {"gh_nodes", r.quad.gh_nodes},
                            {"mc_samples", r.quad.mc_samples}};
    r.echo["fixed_point"] = {{"eta_d", r.fp.eta_d}, {"eps_tol", r.fp.eps_tol}, {"s_max", r.fp.s_max}};
    r.echo["newton"] = {{"tol", r.newton_tol}, {"max_iter", r.newton_max_iter}};
    r.echo["seed"] = r.seed;
    r.echo["replicates"] = r.replicates;
    r.echo["histogram_bins"] = r.histogram_bins;
    r.echo["dump_datasets"] = r.dump_datasets;
    if (r.mode == "compare") r.echo["n_list"] = r.n_list;
    if (r.mode == "optimize")
        r.echo["optimize"] = {{"params", r.opt_params},     {"max_eval", r.opt_max_eval},
                              {"tol", r.opt_tol},           {"lambda_min", r.lambda_min},
                              {"lambda_max", r.lambda_max}, {"gamma_max", r.gamma_max},
                              {"a_max", r.a_max}};
    if (r.mode == "analytic")
        r.echo["analytic"] = {{"horizon_tau", r.analytic_horizon_tau},
                              {"points", r.analytic_points},
                              {"lambda_grid", r.analytic_lambda_grid}};
    return r;
}

namespace detail {

inline json trajectory_json_summary(const SaddleTrajectory& traj) {
    json rows = json::array();
    for (std::size_t t = 0; t < traj.steps.size(); ++t) {
        const auto& s = traj.steps[t];
        rows.push_back({{"t", t},
                        {"q", s.theta.q},
                        {"m", s.theta.m},
                        {"B", s.theta.B},
                        {"eps_g", s.eps_g},
                        {"converged", s.converged}});
    }
    return rows;
}

inline int run_resolved(const ResolvedConfig& r, const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    const auto t_start = std::chrono::steady_clock::now();
    std::vector<std::string> artifacts;
    json extra;

    if (r.mode == "solve") {
        const SaddleTrajectory traj = solve_trajectory(r.mixture, r.loss, r.lambda_l, r.lambda_u,
                                                       r.quad, r.fp, r.bias_fixed);
        write_trajectory_csv(traj, out_dir + "/trajectory.csv");
        artifacts.push_back("trajectory.csv");
        if (!traj.all_converged) {
            std::cerr << "solve: trajectory flagged non-converged\n";
            return 3;
        }
    } else if (r.mode == "simulate") {
        StRunConfig rc;
        rc.mixture = r.mixture;
        rc.loss = r.loss;
        rc.lambda_l = r.lambda_l;
        rc.lambda_u = r.lambda_u;
        rc.bias_fixed = r.bias_fixed;
        rc.newton_tol = r.newton_tol;
        rc.newton_max_iter = r.newton_max_iter;
        for (int k = 0; k < r.replicates; ++k) {
            const std::uint64_t seed = r.seed + 1000003ULL * k;
            const StTrace trace = run_st(rc, seed);
            const std::string name = "trace_" + std::to_string(k) + ".csv";
            write_trace_csv(trace, out_dir + "/" + name);
            artifacts.push_back(name);
            if (k == 0) {
                const int T = r.mixture.n_batches;
                const Histogram wh = make_histogram(trace.steps[T].model.weights, r.histogram_bins);
                write_histogram_csv(wh, out_dir + "/weight_hist.csv");
                artifacts.push_back("weight_hist.csv");
                if (T >= 1 && !trace.steps[T].accepted_logits.empty()) {
                    const Histogram lh =
                        make_histogram(trace.steps[T].accepted_logits, r.histogram_bins);
                    write_histogram_csv(lh, out_dir + "/logit_hist.csv");
                    artifacts.push_back("logit_hist.csv");
                }
            }
        }
        if (r.dump_datasets) {
            write_dataset_csv(sample_labeled(r.mixture, r.seed), out_dir + "/labeled.csv");
            artifacts.push_back("labeled.csv");
            for (int t = 1; t <= r.mixture.n_batches; ++t) {
                const std::string name = "batch_" + std::to_string(t) + ".csv";
                write_dataset_csv(sample_unlabeled_batch(r.mixture, t, r.seed),
                                  out_dir + "/" + name);
                artifacts.push_back(name);
            }
        }
    } else if (r.mode == "compare") {
        CompareOptions co;
        co.n_seeds = r.replicates;
        co.master_seed = r.seed;
        co.newton_tol = r.newton_tol;
        co.newton_max_iter = r.newton_max_iter;
        const ComparisonReport rep = compare_theory_experiment(
            r.mixture, r.loss, r.lambda_l, r.lambda_u, r.bias_fixed, r.quad, r.fp, r.n_list, co);
        write_trajectory_csv(rep.theory_trajectory, out_dir + "/trajectory.csv");
        artifacts.push_back("trajectory.csv");
        json cells = json::array();
        for (const auto& c : rep.cells)
            cells.push_back({{"n_dim", c.n_dim},
                             {"t", c.t},
                             {"observable", c.observable},
                             {"theory", c.theory},
                             {"exp_mean", c.exp_mean},
                             {"exp_se", c.exp_se},
                             {"z", c.z}});
        json rj = {{"cells", cells},
                   {"ks_weights", rep.ks_weights},
                   {"ks_logits", rep.ks_logits},
                   {"z_limit", rep.z_limit},
                   {"ks_limit", rep.ks_limit},
                   {"pass", rep.pass}};
        std::ofstream(out_dir + "/report.json") << rj.dump(2) << '\n';
        artifacts.push_back("report.json");
        extra["pass"] = rep.pass;
    } else if (r.mode == "optimize") {
        HyperScenario sc;
        sc.mixture = r.mixture;
        sc.loss = r.loss;
        sc.quad = r.quad;
        sc.fp = r.fp;
        sc.bias_fixed = r.bias_fixed;
        sc.lambda_l = r.lambda_l;
        sc.lambda_u = r.lambda_u;
        sc.opt_lambda_l = sc.opt_lambda_u = sc.opt_gamma = sc.opt_anneal = false;
        for (const auto& p : r.opt_params) {
            if (p == "lambda_l") sc.opt_lambda_l = true;
            if (p == "lambda_u") sc.opt_lambda_u = true;
            if (p == "gamma") sc.opt_gamma = true;
            if (p == "anneal_rate") sc.opt_anneal = true;
        }
        sc.lambda_min = r.lambda_min;
        sc.lambda_max = r.lambda_max;
        sc.gamma_max = r.gamma_max;
        sc.a_max = r.a_max;
        const TunedResult res = tune_hyperparameters(sc, r.opt_tol, r.opt_max_eval);
        write_opt_trace_csv(res.opt, out_dir + "/opt_trace.csv");
        artifacts.push_back("opt_trace.csv");
        json rj = {{"lambda_l", res.point.lambda_l},
                   {"lambda_u", res.point.lambda_u},
                   {"gamma", res.point.gamma},
                   {"anneal_rate", res.point.anneal_a},
                   {"eps_g", res.eps_g},
                   {"evaluations", res.opt.evaluations},
                   {"converged", res.opt.converged}};
        std::ofstream(out_dir + "/result.json") << rj.dump(2) << '\n';
        artifacts.push_back("result.json");
    } else if (r.mode == "analytic") {
        require(r.loss.loss == Loss::squared && r.loss.pl_loss == Loss::squared,
                "analytic mode needs squared losses");
        const StepResult t0 = fixed_point_t0(r.mixture, r.loss, r.lambda_l, r.quad, r.fp);
        ContinuumState st;
        st.M0 = t0.theta.m * t0.theta.m / t0.theta.q;
        st.m0 = t0.theta.m;
        st.B0 = t0.theta.B;
        st.rho_u = r.mixture.rho_u;
        st.delta_u = r.mixture.delta_u;
        st.alpha_u = r.mixture.alpha_u;
        json curve = json::array();
        for (int i = 0; i < r.analytic_points; ++i) {
            const double tt = r.analytic_horizon_tau * st.tau_M() * i /
                              std::max(1, r.analytic_points - 1);
            const auto [m, B] = closed_form_m_B(st, tt);
            curve.push_back({{"t_tilde", tt}, {"M", closed_form_M(st, tt)}, {"m", m}, {"B", B}});
        }
        json rj = {{"tau_M", st.tau_M()}, {"tau_m", st.tau_m()}, {"V_U", st.v_u()},
                   {"M0", st.M0},         {"m0", st.m0},         {"B0", st.B0},
                   {"curve", curve}};
        if (!r.analytic_lambda_grid.empty()) {
            const PerturbativeReport rep = check_perturbative_claims(
                r.mixture, r.loss, r.lambda_l, r.analytic_lambda_grid, r.quad, r.fp);
            json checks = json::array();
            for (const auto& c : rep.checks)
                checks.push_back({{"claim", c.claim},
                                  {"measured", c.measured},
                                  {"expected", c.expected},
                                  {"tolerance", c.tolerance},
                                  {"pass", c.pass}});
            rj["checks"] = checks;
            rj["all_pass"] = rep.all_pass;
        }
        std::ofstream(out_dir + "/analytic.json") << rj.dump(2) << '\n';
        artifacts.push_back("analytic.json");
    }

    const double wall =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    json manifest = {{"config", r.echo},
                     {"version", "0.1.0"},
                     {"seed", r.seed},
                     {"wall_time_s", wall},
                     {"artifacts", artifacts}};
    for (auto& [k, v] : extra.items()) manifest[k] = v;
    std::ofstream(out_dir + "/manifest.json") << manifest.dump(2) << '\n';
    return 0;
}

} // namespace detail

// Entry point shared by the binary and the tests. args excludes argv[0].
inline int run(const std::vector<std::string>& args) {
    std::string config_path, out_dir = "out";
    std::vector<std::pair<std::string, std::string>> overrides;
    std::optional<std::uint64_t> seed_flag;
    std::string mode_arg;
    int threads = 0;

    std::size_t i = 0;
    if (i < args.size() && !args[i].starts_with("--")) mode_arg = args[i++];
    for (; i < args.size(); ++i) {
        const std::string& a = args[i];
        auto next = [&]() -> const std::string& {
            if (i + 1 >= args.size()) throw ConfigError("missing value after " + a);
            return args[++i];
        };
        if (a == "--config") config_path = next();
        else if (a == "--out") out_dir = next();
        else if (a == "--seed") seed_flag = std::stoull(next());
        else if (a == "--threads") threads = std::stoi(next());
        else if (a == "--set") {
            const std::string& kv = next();
            const std::size_t eq = kv.find('=');
            if (eq == std::string::npos) throw ConfigError("--set expects key=value");
            overrides.emplace_back(kv.substr(0, eq), kv.substr(eq + 1));
        } else {
            throw ConfigError("unknown flag: " + a);
        }
    }

#ifdef _OPENMP
    if (threads > 0) omp_set_num_threads(threads);
#else
    (void)threads;
#endif

    json cfg = json::object();
    if (!config_path.empty()) {
        std::ifstream f(config_path);
        if (!f) throw ConfigError("cannot open config: " + config_path);
        try {
            cfg = json::parse(f);
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config parse error: ") + e.what());
        }
    }
    if (!mode_arg.empty()) cfg["mode"] = mode_arg;
    for (const auto& [k, v] : overrides) detail::apply_override(cfg, k, v);
    if (seed_flag) cfg["seed"] = *seed_flag;

    const ResolvedConfig r = resolve_config(cfg);
    return detail::run_resolved(r, out_dir);
}

// Error-to-exit-code mapping (2 validation, 3 numerical failure).
inline int run_with_exit_codes(const std::vector<std::string>& args,
                               std::string* error_out = nullptr) {
    try {
        return run(args);
    } catch (const ConfigError& e) {
        if (error_out) *error_out = e.what();
        else std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::invalid_argument& e) {
        if (error_out) *error_out = e.what();
        else std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        if (error_out) *error_out = e.what();
        else std::cerr << "numerical failure: " << e.what() << '\n';
        return 3;
    }
}

} // namespace streplica::cli
