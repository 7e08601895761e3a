#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "streplica/common.hpp"
#include "streplica/replica.hpp"
#include "streplica/stats.hpp"

namespace streplica {

// Continuum-limit (lambda_U -> 0, t_tilde = lambda_U * t) state for the
// squared loss without PLS. Valid only in the underparametrized regime
// alpha_U > 1.
struct ContinuumState {
    double M0 = 0.0; // squared cosine similarity at t = 0
    double m0 = 0.0;
    double B0 = 0.0;
    double rho_u = 0.5;
    double delta_u = 1.0;
    double alpha_u = 2.0;

    double v_u() const { return 4.0 * rho_u * (1.0 - rho_u); }
    double tau_M() const { return 0.5 * (delta_u / v_u()) * (alpha_u - 1.0) * (delta_u + v_u()); }
    double tau_m() const { return (alpha_u - 1.0) * (delta_u + v_u()); }

    void validate() const {
        require(M0 > 0.0 && M0 <= 1.0, "M0 must lie in (0, 1]");
        require(alpha_u > 1.0, "continuum limit needs alpha_u > 1");
        require(delta_u > 0.0 && rho_u > 0.0 && rho_u <= 0.5, "bad mixture parameters");
    }
};

// Logistic evolution of the squared cosine similarity.
inline double closed_form_M(const ContinuumState& st, double t_cont) {
    st.validate();
    require(t_cont >= 0.0, "continuum time must be >= 0");
    return 1.0 / (1.0 + (1.0 / st.M0 - 1.0) * std::exp(-t_cont / st.tau_M()));
}

inline std::pair<double, double> closed_form_m_B(const ContinuumState& st, double t_cont) {
    st.validate();
    require(t_cont >= 0.0, "continuum time must be >= 0");
    const double decay = std::exp(-t_cont / st.tau_m());
    const double m = st.m0 * decay;
    const double B = st.B0 + (2.0 * st.rho_u - 1.0) * st.m0 * (1.0 - decay);
    return {m, B};
}

// Leading-order growth rate of M; the logistic ODE is dM/dt = M(1-M)/tau_M,
// so the rate equals 1/tau_M for the squared loss.
inline double continuum_rate_C(const ContinuumState& st) {
    return 1.0 / st.tau_M();
}

struct ClaimCheck {
    std::string claim;
    double measured = 0.0;
    double expected = 0.0;
    double tolerance = 0.0; // relative
    bool pass = false;
};

struct PerturbativeReport {
    std::vector<ClaimCheck> checks;
    bool all_pass = true;

    void add(const std::string& claim, double measured, double expected, double tol) {
        ClaimCheck c;
        c.claim = claim;
        c.measured = measured;
        c.expected = expected;
        c.tolerance = tol;
        c.pass = std::abs(measured - expected) <= tol * std::abs(expected);
        checks.push_back(c);
        all_pass = all_pass && c.pass;
    }
};

// Numerical verification of the weak-regularization invariants against the
// replica solver at t = 1:
//   - chihat and q - R^2/q_prev scale as lambda_U^2 (log-log slope 2);
//   - the per-step increment of M = m^2/q matches C M (1-M) lambda_U with
//     C = 2 mhat_1 / (Qhat_0 m_prev), mhat_1 estimated by finite differences;
//   - for the squared loss, C agrees with the closed-form logistic rate;
//   - the relative residual of the M update shrinks linearly in lambda_U
//     (Richardson check against the extrapolated slope).
inline PerturbativeReport check_perturbative_claims(const MixtureConfig& mixture,
                                                    const LossSpec& spec, double lambda_l,
                                                    std::vector<double> lambda_grid,
                                                    const QuadratureSpec& quad,
                                                    const FixedPointOptions& opts = {}) {
    require(lambda_grid.size() >= 2, "need at least two lambda_U values");
    require(spec.pls_threshold == 0.0, "perturbative checks assume Gamma = 0");
    require(mixture.alpha_u > 1.0, "perturbative checks assume alpha_u > 1");
    std::sort(lambda_grid.begin(), lambda_grid.end());
    PerturbativeReport rep;

    const StepResult t0 = fixed_point_t0(mixture, spec, lambda_l, quad, opts);
    if (!t0.converged) throw numerical_error("t=0 solve did not converge");
    const double M0 = t0.theta.m * t0.theta.m / t0.theta.q;

    const std::size_t n = lambda_grid.size();
    std::vector<double> log_lam(n), log_chihat(n), log_qvar(n), slope_M(n);
    std::vector<StepResult> t1(n);
    for (std::size_t i = 0; i < n; ++i) {
        t1[i] = fixed_point_t(t0, mixture, spec, lambda_grid[i], quad, 1, opts);
        if (!t1[i].converged) throw numerical_error("t=1 solve did not converge");
        log_lam[i] = std::log(lambda_grid[i]);
        log_chihat[i] = std::log(t1[i].hat.chihat);
        log_qvar[i] =
            std::log(std::abs(t1[i].theta.q - t1[i].theta.R * t1[i].theta.R / t0.theta.q));
        const double Mi = t1[i].theta.m * t1[i].theta.m / t1[i].theta.q;
        slope_M[i] = (Mi - M0) / lambda_grid[i];
    }
    rep.add("quadratic_noise.chihat_slope", fit_slope(log_lam, log_chihat), 2.0, 0.1);
    rep.add("quadratic_noise.qvar_slope", fit_slope(log_lam, log_qvar), 2.0, 0.1);

    // C from a two-point finite difference of mhat at the smallest lambdas
    const double la = lambda_grid[0], lb = lambda_grid[1];
    const double mhat1 = (t1[1].hat.mhat - t1[0].hat.mhat) / (lb - la);
    const double qhat0 = t1[0].hat.Qhat - la * (t1[1].hat.Qhat - t1[0].hat.Qhat) / (lb - la);
    const double C = 2.0 * mhat1 / (qhat0 * t0.theta.m);

    rep.add("logistic_rate.dM_match", slope_M[0] * la, C * M0 * (1.0 - M0) * la, 0.10);

    if (spec.pl_loss == Loss::squared) {
        ContinuumState st;
        st.M0 = M0;
        st.m0 = t0.theta.m;
        st.B0 = t0.theta.B;
        st.rho_u = mixture.rho_u;
        st.delta_u = mixture.delta_u;
        st.alpha_u = mixture.alpha_u;
        rep.add("logistic_rate.squared_closed_form", C, continuum_rate_C(st), 0.05);
    }

    // Richardson check: with the limiting slope extrapolated from the two
    // smallest lambdas, the relative residual at the larger ones is linear
    // in lambda.
    if (n >= 4) {
        const double s_star =
            slope_M[0] + (slope_M[0] - slope_M[1]) * la / (lb - la); // extrapolate to 0
        const double r_hi = slope_M[n - 1] / s_star - 1.0;
        const double r_lo = slope_M[n - 2] / s_star - 1.0;
        if (std::abs(r_lo) > 1e-10)
            rep.add("logistic_rate.residual_linear_shrink", r_hi / r_lo,
                    lambda_grid[n - 1] / lambda_grid[n - 2], 0.30);
    }
    return rep;
}

} // namespace streplica
