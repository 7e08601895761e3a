#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "streplica/common.hpp"
#include "streplica/losses.hpp"
#include "streplica/mixture.hpp"
#include "streplica/newton.hpp"
#include "streplica/stats.hpp"

namespace streplica {

struct StRunConfig {
    MixtureConfig mixture;
    LossSpec loss;
    double lambda_l = 0.01; // lambda^(0)
    double lambda_u = 0.01; // lambda^(t), t >= 1
    bool bias_fixed = false;
    double newton_tol = 1e-10;
    int newton_max_iter = 200;

    void validate() const {
        mixture.validate();
        loss.validate();
        require(lambda_l > 0.0 && lambda_u > 0.0, "lambda_l and lambda_u must be positive");
        require(newton_tol > 0.0 && newton_max_iter > 0, "bad newton options");
    }
};

struct StStepRecord {
    ModelParams model;
    double q_bar = 0.0;
    double m_bar = 0.0;
    double bias = 0.0;
    double cos_sim = 0.0;
    double eps_g = 0.0;
    double accept_frac = std::numeric_limits<double>::quiet_NaN(); // NaN at t = 0
    std::vector<double> accepted_logits; // model-t logits on batch t, PLS-accepted points
};

struct StTrace {
    std::vector<StStepRecord> steps; // index = t
};

inline double weight_sq_norm(const ModelParams& m) {
    double s = 0.0;
    for (double w : m.weights) s += w * w;
    return s;
}

// Macroscopic generalization error from (q_bar, m_bar, B); same H-formula as
// the RS expression.
inline double empirical_gen_error(const ModelParams& model, const MixtureConfig& mixture) {
    const int n = static_cast<int>(model.weights.size());
    const double q = weight_sq_norm(model) / n;
    require(q > 0.0, "weight norm must be positive");
    double m = 0.0;
    for (double w : model.weights) m += w;
    m /= n;
    const double denom = std::sqrt(mixture.delta_u * q);
    return mixture.rho_u * gauss_tail((m + model.bias) / denom) +
           (1.0 - mixture.rho_u) * gauss_tail((m - model.bias) / denom);
}

// Step 0: ridge-regularized supervised fit on the labeled set.
inline ModelParams fit_supervised(const Dataset& data, const LossSpec& spec, double lambda_l,
                                  double tol = 1e-10, int max_iter = 200) {
    require(data.domain() == DatasetDomain::labeled, "fit_supervised needs labeled data");
    require(lambda_l > 0.0, "lambda_l must be positive");
    require(all_finite(data.features()), "NaN in data");
    std::vector<double> targets(data.rows());
    for (int i = 0; i < data.rows(); ++i) targets[i] = data.labels()[i];
    ModelParams model;
    model.weights.assign(data.cols(), 0.0);
    FitOptions opts;
    opts.tol = tol;
    opts.max_iter = max_iter;
    const FitReport rep = fit_ridge_targets(data.features().data(), data.rows(), data.cols(),
                                            targets, nullptr, spec.loss, lambda_l, model, opts);
    if (!rep.converged)
        throw numerical_error("supervised fit: no convergence in " + std::to_string(max_iter) +
                              " iterations, grad norm " + std::to_string(rep.grad_norm));
    return model;
}

// Step 1: pseudo-labels sigma_pl(gamma^(t) * logit) and the PLS mask
// |logit| > Gamma sqrt(q_bar^(t-1)).
inline std::pair<std::vector<double>, std::vector<char>> assign_pseudo_labels(
    const ModelParams& model, const Dataset& batch, const LossSpec& spec, int t) {
    require(batch.domain() == DatasetDomain::unlabeled_batch, "batch must be unlabeled");
    const int n = batch.cols();
    const double q_bar = weight_sq_norm(model) / n;
    require(q_bar > 0.0, "previous-step weight norm is zero");
    const double gamma_t = spec.pl_scale(t);
    const double thr = spec.pls_threshold * std::sqrt(q_bar);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(n));
    std::vector<double> pl(batch.rows());
    std::vector<char> mask(batch.rows());
#pragma omp parallel for schedule(static)
    for (int i = 0; i < batch.rows(); ++i) {
        const double* row = batch.row(i);
        double acc = 0.0;
        for (int j = 0; j < n; ++j) acc += row[j] * model.weights[j];
        const double logit = acc * inv_sqrt_n + model.bias;
        pl[i] = pseudo_target(spec, logit, gamma_t);
        mask[i] = std::abs(logit) > thr ? 1 : 0;
    }
    return {std::move(pl), std::move(mask)};
}

// Step 2: refit on the accepted pseudo-labeled points, warm-started at the
// previous model; the bias is clamped under Heuristic 2.
inline ModelParams fit_st_step(const Dataset& batch, const std::vector<double>& pseudo_labels,
                               const std::vector<char>& accept_mask, const ModelParams& prev,
                               const LossSpec& spec, double lambda_u, bool bias_fixed,
                               double tol = 1e-10, int max_iter = 200) {
    require(lambda_u > 0.0, "lambda_u must be positive");
    bool any = false;
    for (char c : accept_mask)
        if (c) { any = true; break; }
    if (!any && !bias_fixed)
        throw std::invalid_argument("all points PLS-rejected with a free bias: degenerate fit");
    ModelParams model = prev;
    FitOptions opts;
    opts.tol = tol;
    opts.max_iter = max_iter;
    opts.bias_fixed = bias_fixed;
    const FitReport rep =
        fit_ridge_targets(batch.features().data(), batch.rows(), batch.cols(), pseudo_labels,
                          &accept_mask, spec.pl_loss, lambda_u, model, opts);
    if (!rep.converged)
        throw numerical_error("ST fit: no convergence, grad norm " + std::to_string(rep.grad_norm));
    return model;
}

namespace detail {

inline StStepRecord make_record(ModelParams&& model, const MixtureConfig& mixture) {
    StStepRecord rec;
    const int n = static_cast<int>(model.weights.size());
    rec.q_bar = weight_sq_norm(model) / n;
    double m = 0.0;
    for (double w : model.weights) m += w;
    rec.m_bar = m / n;
    rec.bias = model.bias;
    rec.cos_sim = rec.m_bar / std::sqrt(rec.q_bar);
    rec.eps_g = empirical_gen_error(model, mixture);
    rec.model = std::move(model);
    return rec;
}

} // namespace detail

// Per-step weight and accepted-logit histograms. PLS-rejected points carry
// no recorded logit, so an all-rejected step yields a flagged empty logit
// histogram.
inline std::pair<Histogram, Histogram> empirical_histograms(const StTrace& trace, int t,
                                                            int bins) {
    require(t >= 0 && t < static_cast<int>(trace.steps.size()), "step t not recorded");
    const StStepRecord& rec = trace.steps[t];
    Histogram wh = make_histogram(rec.model.weights, bins);
    Histogram lh = make_histogram(rec.accepted_logits, bins);
    return {std::move(wh), std::move(lh)};
}

// Full ST procedure: Step 0, then T rounds of Steps 1-2 on fresh batches.
inline StTrace run_st(const StRunConfig& config, std::uint64_t seed) {
    config.validate();
    StTrace trace;
    trace.steps.reserve(config.mixture.n_batches + 1);
    ModelParams model;
    {
        const Dataset labeled = sample_labeled(config.mixture, seed);
        model = fit_supervised(labeled, config.loss, config.lambda_l, config.newton_tol,
                               config.newton_max_iter);
    }
    trace.steps.push_back(detail::make_record(ModelParams(model), config.mixture));
    const double b0 = model.bias;

    for (int t = 1; t <= config.mixture.n_batches; ++t) {
        try {
            const Dataset batch = sample_unlabeled_batch(config.mixture, t, seed);
            auto [pl, mask] = assign_pseudo_labels(model, batch, config.loss, t);
            model = fit_st_step(batch, pl, mask, model, config.loss, config.lambda_u,
                                config.bias_fixed, config.newton_tol, config.newton_max_iter);
            if (config.bias_fixed) model.bias = b0;
            StStepRecord rec = detail::make_record(ModelParams(model), config.mixture);
            long n_acc = 0;
            const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(batch.cols()));
            rec.accepted_logits.reserve(batch.rows());
            for (int i = 0; i < batch.rows(); ++i) {
                if (!mask[i]) continue;
                ++n_acc;
                const double* row = batch.row(i);
                double acc = 0.0;
                for (int j = 0; j < batch.cols(); ++j) acc += row[j] * model.weights[j];
                rec.accepted_logits.push_back(acc * inv_sqrt_n + model.bias);
            }
            rec.accept_frac = static_cast<double>(n_acc) / batch.rows();
            trace.steps.push_back(std::move(rec));
        } catch (const std::exception& e) {
            throw numerical_error("ST step t=" + std::to_string(t) + ": " + e.what());
        }
    }
    return trace;
}

} // namespace streplica
