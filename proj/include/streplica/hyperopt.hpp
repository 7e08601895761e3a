#pragma once

#include <array>
#include <cmath>
#include <vector>

#include "streplica/analytic.hpp"
#include "streplica/nelder_mead.hpp"
#include "streplica/replica.hpp"

namespace streplica {

// A tuning problem: which of (lambda_L, lambda_U, Gamma, a) are free, their
// bounds, and the scenario the RS generalization error is evaluated on.
struct HyperScenario {
    MixtureConfig mixture; // n_batches = T
    LossSpec loss;
    QuadratureSpec quad;
    FixedPointOptions fp;
    bool bias_fixed = false;

    bool opt_lambda_l = true;
    bool opt_lambda_u = true;
    bool opt_gamma = false;
    bool opt_anneal = false;

    // values used when the corresponding parameter is frozen
    double lambda_l = 0.05;
    double lambda_u = 0.05;

    double lambda_min = 1e-5;
    double lambda_max = 0.1; // regularization kept inside (0, 0.1]
    double gamma_max = 3.0;
    double a_max = 2.0;

    std::size_t dim() const {
        return static_cast<std::size_t>(opt_lambda_l) + opt_lambda_u + opt_gamma + opt_anneal;
    }
};

struct HyperPoint {
    double lambda_l = 0.0;
    double lambda_u = 0.0;
    double gamma = 0.0;
    double anneal_a = 0.0;
};

inline HyperPoint assemble_point(const HyperScenario& sc, const std::vector<double>& x) {
    HyperPoint p;
    std::size_t k = 0;
    p.lambda_l = sc.opt_lambda_l ? x[k++] : sc.lambda_l;
    p.lambda_u = sc.opt_lambda_u ? x[k++] : sc.lambda_u;
    p.gamma = sc.opt_gamma ? x[k++] : sc.loss.pls_threshold;
    p.anneal_a = sc.opt_anneal ? x[k++] : sc.loss.anneal_rate;
    return p;
}

// RS generalization error at the final step for one hyperparameter point.
// Failed or non-converged solves are penalized (1 + residual) instead of
// surfacing, so the simplex stays well-defined. Frozen quadrature seeds make
// repeated evaluations identical.
inline double objective_rs_generr(const HyperScenario& sc, const HyperPoint& p) {
    LossSpec spec = sc.loss;
    spec.pls_threshold = p.gamma;
    spec.anneal_rate = p.anneal_a;
    try {
        const SaddleTrajectory traj = solve_trajectory(sc.mixture, spec, p.lambda_l, p.lambda_u,
                                                       sc.quad, sc.fp, sc.bias_fixed);
        if (!traj.all_converged) return 1.0 + traj.steps.back().residual;
        return traj.steps.back().eps_g;
    } catch (const std::exception&) {
        return 2.0;
    }
}

struct TunedResult {
    HyperPoint point;
    double eps_g = 0.0;
    OptResult opt;
};

// Multi-start Nelder-Mead: the error surface carries wide plateaus (bias
// blow-up saturates at rho) and narrow basins (small annealing rates, strong
// selection), so a single midpoint start routinely stalls. Three starts --
// the geometric midpoint plus a near-lower and a near-upper point per
// dimension -- share the evaluation budget, best final point wins.
inline TunedResult tune_hyperparameters(const HyperScenario& sc, double tol = 1e-6,
                                        int max_eval = 300) {
    HyperBox box;
    std::vector<double> mid;
    if (sc.opt_lambda_l) {
        box.lower.push_back(sc.lambda_min);
        box.upper.push_back(sc.lambda_max);
        mid.push_back(std::sqrt(sc.lambda_min * sc.lambda_max));
    }
    if (sc.opt_lambda_u) {
        box.lower.push_back(sc.lambda_min);
        box.upper.push_back(sc.lambda_max);
        mid.push_back(std::sqrt(sc.lambda_min * sc.lambda_max));
    }
    if (sc.opt_gamma) {
        box.lower.push_back(0.0);
        box.upper.push_back(sc.gamma_max);
        mid.push_back(0.5 * sc.gamma_max);
    }
    if (sc.opt_anneal) {
        box.lower.push_back(0.0);
        box.upper.push_back(sc.a_max);
        mid.push_back(0.5 * sc.a_max);
    }
    const std::size_t d = box.dim();
    std::vector<std::vector<double>> starts = {mid};
    for (double f : {0.003, 0.9}) {
        std::vector<double> p(d);
        for (std::size_t i = 0; i < d; ++i) p[i] = box.lower[i] + f * (box.upper[i] - box.lower[i]);
        starts.push_back(std::move(p));
    }
    const int budgets[3] = {(4 * max_eval) / 10, (3 * max_eval) / 10, (3 * max_eval) / 10};

    auto objective = [&](const std::vector<double>& x) {
        return objective_rs_generr(sc, assemble_point(sc, x));
    };
    TunedResult out;
    bool first = true;
    for (std::size_t k = 0; k < starts.size(); ++k) {
        OptResult r = nelder_mead_minimize(objective, box, starts[k], tol, budgets[k]);
        if (first || r.best_value < out.opt.best_value) {
            out.opt = std::move(r);
            first = false;
        }
    }
    out.point = assemble_point(sc, out.opt.best_point);
    out.eps_g = out.opt.best_value;
    return out;
}

// Supervised-learning reference: the t = 0 equations at sample ratio
// alpha_L + T * alpha_U, with the labeled domain set to the unlabeled one's
// parameters and lambda tuned inside the same box.
inline TunedResult tune_supervised_baseline(const MixtureConfig& mixture, const LossSpec& loss,
                                            const QuadratureSpec& quad,
                                            const FixedPointOptions& fp = {},
                                            double lambda_min = 1e-5, double lambda_max = 0.1,
                                            double tol = 1e-6, int max_eval = 200) {
    MixtureConfig sl = mixture;
    sl.alpha_l = mixture.alpha_l + mixture.n_batches * mixture.alpha_u;
    sl.rho_l = mixture.rho_u;
    sl.delta_l = mixture.delta_u;
    sl.n_batches = 0;

    HyperBox box;
    box.lower = {lambda_min};
    box.upper = {lambda_max};
    TunedResult out;
    out.opt = nelder_mead_minimize(
        [&](const std::vector<double>& x) {
            try {
                const StepResult r = fixed_point_t0(sl, loss, x[0], quad, fp);
                if (!r.converged) return 1.0 + r.residual;
                return r.eps_g;
            } catch (const std::exception&) {
                return 2.0;
            }
        },
        box, {std::sqrt(lambda_min * lambda_max)}, tol, max_eval);
    out.point.lambda_l = out.opt.best_point[0];
    out.eps_g = out.opt.best_value;
    return out;
}

} // namespace streplica
