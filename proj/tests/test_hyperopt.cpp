#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "streplica/hyperopt.hpp"

using namespace streplica;

namespace {

HyperScenario sq_scenario(double rho, int T, int gh_nodes = 40) {
    HyperScenario sc;
    sc.mixture.n_dim = 1024;
    sc.mixture.rho_l = sc.mixture.rho_u = rho;
    sc.mixture.delta_l = sc.mixture.delta_u = 0.5625;
    sc.mixture.alpha_l = 0.5;
    sc.mixture.alpha_u = 2.0;
    sc.mixture.n_batches = T;
    sc.loss.model_link = Link::identity;
    sc.loss.pl_link = Link::identity;
    sc.loss.loss = Loss::squared;
    sc.loss.pl_loss = Loss::squared;
    sc.quad.gh_nodes = gh_nodes;
    sc.fp.eps_tol = 1e-9;
    return sc;
}

} // namespace

TEST_CASE("objective is deterministic under frozen seeds") {
    HyperScenario sc = sq_scenario(0.4, 2);
    sc.loss.pls_threshold = 0.5;
    sc.quad.backend = QuadBackend::monte_carlo;
    sc.quad.mc_samples = 50000;
    sc.quad.seed = 9;
    HyperPoint p;
    p.lambda_l = 0.02;
    p.lambda_u = 0.03;
    p.gamma = 0.5;
    const double a = objective_rs_generr(sc, p);
    const double b = objective_rs_generr(sc, p);
    CHECK(a == b);
}

TEST_CASE("failures are penalized, not surfaced") {
    HyperScenario sc = sq_scenario(0.4, 1);
    sc.mixture.alpha_l = -1.0; // invalid scenario -> every solve throws
    HyperPoint p;
    p.lambda_l = 0.02;
    p.lambda_u = 0.03;
    CHECK(objective_rs_generr(sc, p) == 2.0);
}

TEST_CASE("tuning improves on the initial point and respects the audit") {
    HyperScenario sc = sq_scenario(0.4, 4);
    const TunedResult res = tune_hyperparameters(sc, 1e-5, 120);
    // audit: best value is no worse than the geometric-midpoint start
    HyperPoint init;
    init.lambda_l = std::sqrt(sc.lambda_min * sc.lambda_max);
    init.lambda_u = init.lambda_l;
    CHECK(res.eps_g <= objective_rs_generr(sc, init) + 1e-12);
    CHECK(res.point.lambda_l > 0.0);
    CHECK(res.point.lambda_l <= sc.lambda_max);
    CHECK(res.point.lambda_u <= sc.lambda_max);
}

TEST_CASE("optimal lambda_u shrinks as the iteration budget grows") {
    const TunedResult short_run = tune_hyperparameters(sq_scenario(0.4, 4), 1e-5, 150);
    const TunedResult long_run = tune_hyperparameters(sq_scenario(0.4, 32), 1e-5, 150);
    INFO("lambda_u*: T=4 -> ", short_run.point.lambda_u, ", T=32 -> ", long_run.point.lambda_u);
    CHECK(long_run.point.lambda_u < short_run.point.lambda_u);
    // the elapsed continuum time stays comparable while lambda shrinks
    CHECK(long_run.point.lambda_u * 32 > 0.2 * short_run.point.lambda_u * 4);
}

TEST_CASE("supervised baseline uses the enlarged sample ratio") {
    HyperScenario sc = sq_scenario(0.4, 8);
    const TunedResult sl = tune_supervised_baseline(sc.mixture, sc.loss, sc.quad, sc.fp);
    CHECK(sl.eps_g > 0.0);
    CHECK(sl.eps_g < 0.5);
    // more data than the t=0 fit alone: the baseline must be better than the
    // supervised step of the ST scenario at the same lambda
    const StepResult t0 = fixed_point_t0(sc.mixture, sc.loss, sl.point.lambda_l, sc.quad, sc.fp);
    CHECK(sl.eps_g < t0.eps_g);
}
