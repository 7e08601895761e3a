#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>

#include "streplica/mixture.hpp"
#include "streplica/newton.hpp"
#include "streplica/simulator.hpp"

using namespace streplica;

namespace {

MixtureConfig small_config() {
    MixtureConfig c;
    c.n_dim = 96;
    c.rho_l = 0.4;
    c.rho_u = 0.4;
    c.delta_l = 0.5625;
    c.delta_u = 0.5625;
    c.alpha_l = 2.0;
    c.alpha_u = 2.0;
    c.n_batches = 1;
    return c;
}

// Ridge with unregularized bias through the (N+1)-dim normal equations.
ModelParams ridge_oracle(const Dataset& ds, const std::vector<double>& targets,
                         const std::vector<char>* mask, double lambda) {
    const int n = ds.cols();
    std::vector<int> rows;
    for (int i = 0; i < ds.rows(); ++i)
        if (!mask || (*mask)[i]) rows.push_back(i);
    const int m = static_cast<int>(rows.size());
    Eigen::MatrixXd A(m, n + 1);
    Eigen::VectorXd y(m);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    for (int k = 0; k < m; ++k) {
        for (int j = 0; j < n; ++j) A(k, j) = ds.row(rows[k])[j] * inv_sqrt_n;
        A(k, n) = 1.0;
        y(k) = targets[rows[k]];
    }
    Eigen::MatrixXd H = A.transpose() * A;
    for (int j = 0; j < n; ++j) H(j, j) += lambda;
    Eigen::VectorXd sol = H.ldlt().solve(A.transpose() * y);
    ModelParams out;
    out.weights.assign(n, 0.0);
    for (int j = 0; j < n; ++j) out.weights[j] = sol(j);
    out.bias = sol(n);
    return out;
}

} // namespace

TEST_CASE("squared-loss fit equals the normal-equations solution") {
    const MixtureConfig cfg = small_config();
    LossSpec spec;
    spec.model_link = Link::identity;
    spec.pl_link = Link::identity;
    spec.loss = Loss::squared;
    spec.pl_loss = Loss::squared;
    const Dataset ds = sample_labeled(cfg, 5);
    const ModelParams fit = fit_supervised(ds, spec, 0.05);
    std::vector<double> targets(ds.rows());
    for (int i = 0; i < ds.rows(); ++i) targets[i] = ds.labels()[i];
    const ModelParams oracle = ridge_oracle(ds, targets, nullptr, 0.05);
    CHECK(std::abs(fit.bias - oracle.bias) < 1e-8);
    for (int j = 0; j < cfg.n_dim; ++j)
        CHECK(std::abs(fit.weights[j] - oracle.weights[j]) < 1e-8);
}

TEST_CASE("masked squared-loss ST fit matches the oracle on the accepted subset") {
    const MixtureConfig cfg = small_config();
    LossSpec spec;
    spec.model_link = Link::identity;
    spec.pl_link = Link::identity;
    spec.loss = Loss::squared;
    spec.pl_loss = Loss::squared;
    spec.pls_threshold = 0.6;

    const Dataset labeled = sample_labeled(cfg, 6);
    const ModelParams m0 = fit_supervised(labeled, spec, 0.02);
    const Dataset batch = sample_unlabeled_batch(cfg, 1, 6);
    const auto [pl, mask] = assign_pseudo_labels(m0, batch, spec, 1);
    long n_acc = 0;
    for (char c : mask) n_acc += c;
    CHECK(n_acc > 0);
    CHECK(n_acc < batch.rows());

    const ModelParams fit = fit_st_step(batch, pl, mask, m0, spec, 0.03, false);
    const ModelParams oracle = ridge_oracle(batch, pl, &mask, 0.03);
    CHECK(std::abs(fit.bias - oracle.bias) < 1e-8);
    for (int j = 0; j < cfg.n_dim; ++j)
        CHECK(std::abs(fit.weights[j] - oracle.weights[j]) < 1e-8);
}

TEST_CASE("cross-entropy fit reaches the gradient tolerance and a local minimum") {
    const MixtureConfig cfg = small_config();
    LossSpec spec; // cross-entropy + sigmoid by default
    const Dataset ds = sample_labeled(cfg, 7);
    const ModelParams fit = fit_supervised(ds, spec, 0.01, 1e-10, 200);

    // optimality: perturbing coordinates must not decrease the objective
    std::vector<double> targets(ds.rows());
    for (int i = 0; i < ds.rows(); ++i) targets[i] = ds.labels()[i];
    auto objective = [&](const ModelParams& m) {
        const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(ds.cols()));
        double obj = 0.0;
        for (int i = 0; i < ds.rows(); ++i) {
            double z = 0.0;
            for (int j = 0; j < ds.cols(); ++j) z += ds.row(i)[j] * m.weights[j];
            obj += model_loss_value(spec.loss, targets[i], z * inv_sqrt_n + m.bias);
        }
        double w2 = 0.0;
        for (double w : m.weights) w2 += w * w;
        return obj + 0.5 * 0.01 * w2;
    };
    const double f0 = objective(fit);
    Rng rng(8, "coords");
    for (int k = 0; k < 50; ++k) {
        const int j = static_cast<int>(rng.next_double() * cfg.n_dim);
        for (double eps : {1e-4, -1e-4}) {
            ModelParams p = fit;
            p.weights[j] += eps;
            CHECK(objective(p) >= f0 - 1e-12);
        }
    }
}

TEST_CASE("bias-fixed fit keeps the bias and still converges") {
    const MixtureConfig cfg = small_config();
    LossSpec spec;
    const Dataset labeled = sample_labeled(cfg, 9);
    const ModelParams m0 = fit_supervised(labeled, spec, 0.02);
    const Dataset batch = sample_unlabeled_batch(cfg, 1, 9);
    const auto [pl, mask] = assign_pseudo_labels(m0, batch, spec, 1);
    const ModelParams fit = fit_st_step(batch, pl, mask, m0, spec, 0.05, true);
    CHECK(fit.bias == m0.bias);
}

TEST_CASE("all-rejected with free bias is a documented error") {
    const MixtureConfig cfg = small_config();
    LossSpec spec;
    spec.pls_threshold = 1e9;
    const Dataset labeled = sample_labeled(cfg, 10);
    const ModelParams m0 = fit_supervised(labeled, spec, 0.02);
    const Dataset batch = sample_unlabeled_batch(cfg, 1, 10);
    const auto [pl, mask] = assign_pseudo_labels(m0, batch, spec, 1);
    CHECK_THROWS_AS(fit_st_step(batch, pl, mask, m0, spec, 0.05, false), std::invalid_argument);
    CHECK_NOTHROW(fit_st_step(batch, pl, mask, m0, spec, 0.05, true)); // pure shrink, bias kept
}
