#pragma once

#include <map>
#include <string>
#include <vector>

#include "streplica/replica.hpp"
#include "streplica/simulator.hpp"
#include "streplica/stats.hpp"

namespace streplica {

struct ComparisonCell {
    int n_dim = 0;
    int t = 0;
    std::string observable; // q | m | B | eps_g
    double theory = 0.0;
    double exp_mean = 0.0;
    double exp_se = 0.0;
    double z = 0.0;
};

struct ComparisonReport {
    std::vector<ComparisonCell> cells;
    double ks_weights = 0.0; // final step, largest N, first seed vs GP samples
    double ks_logits = 0.0;  // accepted logits vs effective-logit samples
    double z_limit = 3.0;
    double ks_limit = 0.03;
    bool pass = false;
    SaddleTrajectory theory_trajectory;
};

struct CompareOptions {
    int n_seeds = 10;
    long gp_samples = 1000000;
    std::uint64_t master_seed = 0;
    double z_limit = 3.0;
    double ks_limit = 0.03;
    double newton_tol = 1e-10;
    int newton_max_iter = 200;
};

// Theory (one trajectory, N-free) against finite-size ST runs over a list of
// system sizes. z-scores use the across-seed standard error; distributional
// agreement is measured at the largest N by two-sample KS statistics against
// the effective single-body samples.
inline ComparisonReport compare_theory_experiment(const MixtureConfig& mixture,
                                                  const LossSpec& spec, double lambda_l,
                                                  double lambda_u, bool bias_fixed,
                                                  const QuadratureSpec& quad,
                                                  const FixedPointOptions& fp,
                                                  const std::vector<int>& n_list,
                                                  const CompareOptions& opts) {
    require(!n_list.empty(), "need at least one system size");
    ComparisonReport rep;
    rep.z_limit = opts.z_limit;
    rep.ks_limit = opts.ks_limit;
    rep.theory_trajectory =
        solve_trajectory(mixture, spec, lambda_l, lambda_u, quad, fp, bias_fixed);
    const auto& traj = rep.theory_trajectory;
    const int T = mixture.n_batches;

    bool all_ok = traj.all_converged;
    int n_max = 0;
    for (int n : n_list) n_max = std::max(n, n_max);

    for (int n : n_list) {
        StRunConfig rc;
        rc.mixture = mixture;
        rc.mixture.n_dim = n;
        rc.loss = spec;
        rc.lambda_l = lambda_l;
        rc.lambda_u = lambda_u;
        rc.bias_fixed = bias_fixed;
        rc.newton_tol = opts.newton_tol;
        rc.newton_max_iter = opts.newton_max_iter;

        std::vector<std::vector<double>> q(T + 1), m(T + 1), B(T + 1), eg(T + 1);
        for (int k = 0; k < opts.n_seeds; ++k) {
            const StTrace trace = run_st(rc, opts.master_seed + 1000003ULL * k);
            for (int t = 0; t <= T; ++t) {
                q[t].push_back(trace.steps[t].q_bar);
                m[t].push_back(trace.steps[t].m_bar);
                B[t].push_back(trace.steps[t].bias);
                eg[t].push_back(trace.steps[t].eps_g);
            }
            if (n == n_max && k == 0) {
                // single-shot distributional comparison at the final step
                const auto gp = sample_effective_weights(traj, lambda_l, lambda_u,
                                                         opts.gp_samples, opts.master_seed);
                rep.ks_weights = ks_statistic(trace.steps[T].model.weights, gp[T]);
                if (T >= 1) {
                    const auto eff = sample_effective_logits(traj, spec, mixture, opts.gp_samples,
                                                             opts.master_seed, T);
                    std::vector<double> eff_logits;
                    eff_logits.reserve(eff.size());
                    for (const auto& s : eff)
                        if (s.accepted) eff_logits.push_back(s.logit);
                    rep.ks_logits = ks_statistic(trace.steps[T].accepted_logits, eff_logits);
                }
            }
        }
        for (int t = 0; t <= T; ++t) {
            const StepResult& th = traj.steps[t];
            const std::pair<std::string, std::pair<double, const std::vector<double>*>> obs[4] = {
                {"q", {th.theta.q, &q[t]}},
                {"m", {th.theta.m, &m[t]}},
                {"B", {th.theta.B, &B[t]}},
                {"eps_g", {th.eps_g, &eg[t]}}};
            for (const auto& [name, pair] : obs) {
                ComparisonCell cell;
                cell.n_dim = n;
                cell.t = t;
                cell.observable = name;
                cell.theory = pair.first;
                const MeanSe ms = mean_se(*pair.second);
                cell.exp_mean = ms.mean;
                cell.exp_se = ms.se;
                cell.z = ms.se > 0.0 ? (ms.mean - cell.theory) / ms.se : 0.0;
                if (n == n_max && std::abs(cell.z) > opts.z_limit) all_ok = false;
                rep.cells.push_back(cell);
            }
        }
    }
    if (rep.ks_weights > opts.ks_limit) all_ok = false;
    if (T >= 1 && rep.ks_logits > opts.ks_limit) all_ok = false;
    rep.pass = all_ok;
    return rep;
}

} // namespace streplica
