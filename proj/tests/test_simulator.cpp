#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "streplica/simulator.hpp"
#include "streplica/stats.hpp"

using namespace streplica;

namespace {

StRunConfig base_config(int n, int T, double rho = 0.4) {
    StRunConfig c;
    c.mixture.n_dim = n;
    c.mixture.rho_l = c.mixture.rho_u = rho;
    c.mixture.delta_l = c.mixture.delta_u = 0.5625;
    c.mixture.alpha_l = 0.5;
    c.mixture.alpha_u = 2.0;
    c.mixture.n_batches = T;
    c.lambda_l = 0.02;
    c.lambda_u = 0.05;
    return c;
}

} // namespace

TEST_CASE("pseudo-label assignment: thresholds and the noiseless fixture") {
    StRunConfig c = base_config(64, 1);
    const Dataset labeled = sample_labeled(c.mixture, 1);
    LossSpec spec = c.loss;
    const ModelParams m0 = fit_supervised(labeled, spec, c.lambda_l);
    const Dataset batch = sample_unlabeled_batch(c.mixture, 1, 1);

    spec.pls_threshold = 0.0;
    auto [pl0, mask0] = assign_pseudo_labels(m0, batch, spec, 1);
    long acc = 0;
    for (char x : mask0) acc += x;
    CHECK(acc == batch.rows()); // Gamma = 0 accepts everything

    spec.pls_threshold = 1e9;
    auto [pl1, mask1] = assign_pseudo_labels(m0, batch, spec, 1);
    acc = 0;
    for (char x : mask1) acc += x;
    CHECK(acc == 0);

    // identity pseudo-labeler, w = v, B = 0, noiseless x = v/sqrt(N) -> label 1
    LossSpec ident;
    ident.model_link = Link::identity;
    ident.pl_link = Link::identity;
    ident.loss = Loss::squared;
    ident.pl_loss = Loss::squared;
    ModelParams aligned;
    aligned.weights.assign(64, 1.0);
    aligned.bias = 0.0;
    Dataset noiseless(1, 64, DatasetDomain::unlabeled_batch, 1);
    for (int j = 0; j < 64; ++j) noiseless.mutable_row(0)[j] = 1.0 / 8.0; // v / sqrt(N)
    noiseless.mutable_labels()[0] = 1;
    auto [pl2, mask2] = assign_pseudo_labels(aligned, noiseless, ident, 1);
    CHECK(pl2[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("trace fields, determinism, and the degenerate T=0 run") {
    StRunConfig c = base_config(128, 2);
    const StTrace a = run_st(c, 42);
    const StTrace b = run_st(c, 42);
    REQUIRE(a.steps.size() == 3);
    for (std::size_t t = 0; t < a.steps.size(); ++t) {
        CHECK(a.steps[t].q_bar == b.steps[t].q_bar); // bit-identical
        CHECK(a.steps[t].model.weights == b.steps[t].model.weights);
        CHECK(a.steps[t].q_bar > 0.0);
        CHECK(std::abs(a.steps[t].cos_sim) <= 1.0);
        CHECK(a.steps[t].eps_g >= 0.0);
        CHECK(a.steps[t].eps_g <= 1.0);
        if (t >= 1) {
            CHECK(a.steps[t].accept_frac == 1.0);
            CHECK(a.steps[t].accepted_logits.size() ==
                  static_cast<std::size_t>(c.mixture.m_unlabeled()));
        }
    }
    StRunConfig c0 = base_config(128, 0);
    CHECK(run_st(c0, 1).steps.size() == 1);
}

TEST_CASE("balanced labels give a zero bias within noise") {
    const int K = 12;
    std::vector<double> biases(K);
    StRunConfig c = base_config(512, 0, 0.5);
    for (int k = 0; k < K; ++k) biases[k] = run_st(c, 100 + k).steps[0].bias;
    const MeanSe ms = mean_se(biases);
    CHECK(std::abs(ms.mean) <= 3.0 * ms.se);
}

TEST_CASE("soft labels without PLS shrink the weight norm") {
    StRunConfig c = base_config(768, 6);
    const StTrace tr = run_st(c, 7);
    for (std::size_t t = 1; t < tr.steps.size(); ++t)
        CHECK(tr.steps[t].q_bar < tr.steps[t - 1].q_bar * 1.02); // monotone up to MC noise
    CHECK(tr.steps[6].q_bar < tr.steps[0].q_bar);
}

TEST_CASE("empirical gen error formula endpoints") {
    MixtureConfig mc;
    mc.n_dim = 4;
    mc.rho_l = mc.rho_u = 0.5;
    mc.delta_l = mc.delta_u = 1.0;
    mc.alpha_l = mc.alpha_u = 1.0;
    ModelParams m;
    m.weights = {1.0, -1.0, 1.0, -1.0}; // m_bar = 0
    m.bias = 0.0;
    CHECK(empirical_gen_error(m, mc) == doctest::Approx(0.5));
    m.bias = 1e9; // one tail -> 0, other -> 1, weights rho / (1-rho)
    CHECK(empirical_gen_error(m, mc) == doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("concentration: dispersion of q_bar falls as N grows") {
    const int K = 8;
    std::vector<double> lo(K), hi(K);
    for (int k = 0; k < K; ++k) {
        lo[k] = run_st(base_config(128, 1), 500 + k).steps[1].q_bar;
        hi[k] = run_st(base_config(1024, 1), 500 + k).steps[1].q_bar;
    }
    auto sd = [](const std::vector<double>& v) {
        const MeanSe ms = mean_se(v);
        return ms.se * std::sqrt(static_cast<double>(v.size()));
    };
    CHECK(sd(hi) < sd(lo));
}

TEST_CASE("histograms from a trace") {
    StRunConfig c = base_config(512, 1);
    c.loss.pls_threshold = 0.5;
    const StTrace tr = run_st(c, 11);
    const auto [wh, lh] = empirical_histograms(tr, 1, 30);
    double mass = 0.0;
    for (double m : wh.mass) mass += m;
    CHECK(mass == doctest::Approx(1.0));
    CHECK(tr.steps[1].accept_frac > 0.0);
    CHECK(tr.steps[1].accept_frac < 1.0);
    CHECK(!lh.empty);
    CHECK_THROWS_AS(empirical_histograms(tr, 5, 30), std::invalid_argument);

    // all-rejected PLS: flagged empty logit histogram (bias kept fixed so the
    // degenerate refit stays well-posed)
    StRunConfig huge = base_config(128, 1);
    huge.loss.pls_threshold = 1e9;
    huge.bias_fixed = true;
    const StTrace tr2 = run_st(huge, 12);
    CHECK(tr2.steps[1].accept_frac == 0.0);
    const auto [wh2, lh2] = empirical_histograms(tr2, 1, 30);
    CHECK(lh2.empty);
    CHECK(!wh2.empty);
}
