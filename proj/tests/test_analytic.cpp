#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "streplica/analytic.hpp"

using namespace streplica;

namespace {

ContinuumState make_state(double rho = 0.5, double delta = 0.5625, double alpha = 2.0) {
    ContinuumState st;
    st.M0 = 0.25;
    st.m0 = 0.5;
    st.B0 = 0.1;
    st.rho_u = rho;
    st.delta_u = delta;
    st.alpha_u = alpha;
    return st;
}

MixtureConfig mix(double rho, double delta, double alpha_u) {
    MixtureConfig c;
    c.n_dim = 1024;
    c.rho_l = c.rho_u = rho;
    c.delta_l = c.delta_u = delta;
    c.alpha_l = 0.5;
    c.alpha_u = alpha_u;
    c.n_batches = 1;
    return c;
}

LossSpec sq_spec() {
    LossSpec s;
    s.model_link = Link::identity;
    s.pl_link = Link::identity;
    s.loss = Loss::squared;
    s.pl_loss = Loss::squared;
    return s;
}

} // namespace

TEST_CASE("time constants") {
    const ContinuumState st = make_state(); // V_U = 1
    CHECK(st.v_u() == doctest::Approx(1.0));
    CHECK(st.tau_M() == doctest::Approx(0.439453125).epsilon(1e-15));
    CHECK(st.tau_m() == doctest::Approx((2.0 - 1.0) * (0.5625 + 1.0)).epsilon(1e-15));
}

TEST_CASE("closed-form M: endpoints and overparametrized rejection") {
    const ContinuumState st = make_state();
    CHECK(closed_form_M(st, 0.0) == doctest::Approx(st.M0));
    CHECK(closed_form_M(st, 1e6) == doctest::Approx(1.0));
    ContinuumState bad = st;
    bad.alpha_u = 0.9;
    CHECK_THROWS_AS(closed_form_M(bad, 1.0), std::invalid_argument);
}

TEST_CASE("closed-form m and B") {
    ContinuumState st = make_state(0.5);
    // balanced labels: B frozen
    for (double t : {0.0, 0.3, 2.0, 50.0})
        CHECK(closed_form_m_B(st, t).second == doctest::Approx(st.B0));
    // m decays with time constant tau_m
    CHECK(closed_form_m_B(st, st.tau_m()).first == doctest::Approx(st.m0 / std::exp(1.0)));

    ContinuumState biased = make_state(0.4);
    const auto [m_inf, B_inf] = closed_form_m_B(biased, 1e6);
    CHECK(m_inf == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(B_inf == doctest::Approx(biased.B0 + (2 * 0.4 - 1) * biased.m0).epsilon(1e-12));
    CHECK(B_inf != doctest::Approx(biased.B0));
}

TEST_CASE("logistic ODE identity by central differences") {
    const ContinuumState st = make_state(0.4, 0.8, 3.0);
    const double dt = 1e-5 * st.tau_M();
    for (int k = 1; k <= 100; ++k) {
        const double t = 0.05 * k * st.tau_M();
        const double fd = (closed_form_M(st, t + dt) - closed_form_M(st, t - dt)) / (2 * dt);
        const double M = closed_form_M(st, t);
        CHECK(std::abs(fd - M * (1.0 - M) / st.tau_M()) < 1e-8);
    }
}

TEST_CASE("perturbative report passes for the squared loss at unit variance") {
    const PerturbativeReport rep = check_perturbative_claims(
        mix(0.4, 1.0, 2.0), sq_spec(), 0.01, {1e-3, 2e-3, 5e-3, 1e-2}, QuadratureSpec{});
    for (const auto& c : rep.checks) {
        INFO(c.claim, " measured=", c.measured, " expected=", c.expected);
        CHECK(c.pass);
    }
    // at Delta = 1 the closed-form rate also matches 2 V_U / ((alpha-1)(Delta+V_U))
    ContinuumState st = make_state(0.4, 1.0, 2.0);
    const double vu = st.v_u();
    CHECK(continuum_rate_C(st) ==
          doctest::Approx(2.0 * vu / ((2.0 - 1.0) * (1.0 + vu))).epsilon(1e-12));
}

TEST_CASE("discrete trajectory approaches the continuum curve as lambda shrinks") {
    const MixtureConfig c = mix(0.5, 0.5625, 2.0);
    QuadratureSpec quad;
    quad.gh_nodes = 60;
    FixedPointOptions opts;
    opts.eps_tol = 1e-10;
    const StepResult t0 = fixed_point_t0(c, sq_spec(), 0.01, quad, opts);
    ContinuumState st;
    st.M0 = t0.theta.m * t0.theta.m / t0.theta.q;
    st.m0 = t0.theta.m;
    st.B0 = t0.theta.B;
    st.rho_u = c.rho_u;
    st.delta_u = c.delta_u;
    st.alpha_u = c.alpha_u;

    auto max_dev = [&](double lambda, double horizon_tau) {
        const int T = static_cast<int>(std::lround(horizon_tau * st.tau_M() / lambda));
        StepResult cur = t0;
        double dev = 0.0;
        for (int t = 1; t <= T; ++t) {
            cur = fixed_point_t(cur, c, sq_spec(), lambda, quad, t, opts);
            const double M = cur.theta.m * cur.theta.m / cur.theta.q;
            dev = std::max(dev, std::abs(M - closed_form_M(st, lambda * t)));
        }
        return dev;
    };
    const double d4 = max_dev(4e-3, 1.2);
    const double d2 = max_dev(2e-3, 1.2);
    CHECK(d4 < 0.02);
    CHECK(d2 < d4); // deviation shrinks with lambda
}
