#pragma once

#include <cmath>
#include <string>

#include "streplica/common.hpp"

namespace streplica {

enum class Link { identity, sigmoid, annealed_sigmoid, hard };
enum class Loss { squared, cross_entropy };

inline std::string to_string(Link l) {
    switch (l) {
        case Link::identity: return "identity";
        case Link::sigmoid: return "sigmoid";
        case Link::annealed_sigmoid: return "annealed_sigmoid";
        case Link::hard: return "hard";
    }
    return "?";
}

inline std::string to_string(Loss l) {
    return l == Loss::squared ? "squared" : "cross_entropy";
}

inline Link link_from_string(const std::string& s) {
    if (s == "identity") return Link::identity;
    if (s == "sigmoid") return Link::sigmoid;
    if (s == "annealed_sigmoid") return Link::annealed_sigmoid;
    if (s == "hard") return Link::hard;
    throw std::invalid_argument("unknown link id: " + s);
}

inline Loss loss_from_string(const std::string& s) {
    if (s == "squared") return Loss::squared;
    if (s == "cross_entropy") return Loss::cross_entropy;
    throw std::invalid_argument("unknown loss id: " + s);
}

// The quadruple (sigma, sigma_pl, l, l_pl) plus the PLS threshold and the
// annealing schedule gamma^(t) = 1 + a*t. Only the convex pairings are
// allowed: squared loss with the identity link, cross-entropy with a
// sigmoid-family link.
struct LossSpec {
    Link model_link = Link::sigmoid;
    Link pl_link = Link::sigmoid;
    Loss loss = Loss::cross_entropy;
    Loss pl_loss = Loss::cross_entropy;
    double pls_threshold = 0.0; // Gamma >= 0
    double anneal_rate = 0.0;   // a >= 0, active for pl_link == annealed_sigmoid
    double pl_gamma = 1.0;      // fixed input gain of the plain sigmoid pseudo-labeler

    void validate() const {
        require(pls_threshold >= 0.0, "pls_threshold must be >= 0");
        require(anneal_rate >= 0.0, "anneal_rate must be >= 0");
        require(pl_gamma > 0.0, "pl_gamma must be > 0");
        require(model_link == Link::identity || model_link == Link::sigmoid,
                "model link must be identity or sigmoid");
        const bool model_ok = (loss == Loss::squared && model_link == Link::identity) ||
                              (loss == Loss::cross_entropy && model_link == Link::sigmoid);
        require(model_ok, "loss/model_link pairing not supported (squared<->identity, "
                          "cross_entropy<->sigmoid)");
        const bool pl_ok =
            (pl_loss == Loss::squared && pl_link == Link::identity) ||
            (pl_loss == Loss::cross_entropy &&
             (pl_link == Link::sigmoid || pl_link == Link::annealed_sigmoid || pl_link == Link::hard));
        require(pl_ok, "pl_loss/pl_link pairing not supported");
        if (pl_link == Link::annealed_sigmoid)
            require(anneal_rate >= 0.0, "annealed_sigmoid requires anneal_rate >= 0");
    }

    // Input gain of the pseudo-labeler at ST step t.
    double pl_scale(int t) const {
        if (pl_link == Link::annealed_sigmoid) return 1.0 + anneal_rate * t;
        if (pl_link == Link::sigmoid) return pl_gamma;
        return 1.0;
    }
};

// gamma^(t) = 1 + a*t (Heuristic-1 schedule); t >= 1.
inline double anneal_gamma(const LossSpec& spec, int t) {
    require(t >= 1, "annealing step index must be >= 1");
    return 1.0 + spec.anneal_rate * t;
}

// --- model-side loss in terms of (target p, raw logit x) --------------------
// Both supported families share d/dp d2 = -1, so the mixed derivative is
// -d(target)/d(y_logit) in every case.

inline double model_loss_value(Loss loss, double p, double x) {
    if (loss == Loss::squared) {
        const double d = p - x;
        return 0.5 * d * d;
    }
    return log1pexp(x) - p * x; // -p log s - (1-p) log(1-s), s = sigmoid(x)
}

inline double model_loss_d2(Loss loss, double p, double x) {
    if (loss == Loss::squared) return x - p;
    return sigmoid(x) - p;
}

inline double model_loss_d22(Loss loss, double x) {
    if (loss == Loss::squared) return 1.0;
    return sigmoid_deriv(x);
}

// --- pseudo-labeler ----------------------------------------------------------

inline double pseudo_target(const LossSpec& spec, double y_logit, double gamma_t) {
    switch (spec.pl_link) {
        case Link::identity: return gamma_t * y_logit;
        case Link::sigmoid: return sigmoid(spec.pl_gamma * gamma_t * y_logit);
        case Link::annealed_sigmoid: return sigmoid(gamma_t * y_logit);
        case Link::hard: return y_logit > 0.0 ? 1.0 : 0.0;
    }
    return 0.0;
}

// d(target)/d(y_logit)
inline double pseudo_target_slope(const LossSpec& spec, double y_logit, double gamma_t) {
    switch (spec.pl_link) {
        case Link::identity: return gamma_t;
        case Link::sigmoid: {
            const double g = spec.pl_gamma * gamma_t;
            return g * sigmoid_deriv(g * y_logit);
        }
        case Link::annealed_sigmoid: return gamma_t * sigmoid_deriv(gamma_t * y_logit);
        case Link::hard: return 0.0;
    }
    return 0.0;
}

// --- the combined losses l_L and l_U ----------------------------------------

// l_L(y, x) = l(y, sigma(x)) with true label y in {0, 1}.
inline double eval_lL(const LossSpec& spec, int y, double x) {
    require(y == 0 || y == 1, "label must be 0 or 1");
    require(std::isfinite(x), "logit must be finite");
    return model_loss_value(spec.loss, static_cast<double>(y), x);
}

inline bool pls_accepts(const LossSpec& spec, double y_logit, double q_prev) {
    return std::abs(y_logit) > spec.pls_threshold * std::sqrt(q_prev);
}

// l_U(y, x; Gamma sqrt(q_prev)) = 1(|y| > Gamma sqrt(q_prev)) l_pl(sigma_pl(gamma_t y), sigma(x)).
inline double eval_lU(const LossSpec& spec, double y_logit, double x, double gamma_t,
                      double q_prev) {
    require(q_prev > 0.0, "q_prev must be positive");
    require(std::isfinite(y_logit) && std::isfinite(x), "inputs must be finite");
    if (!pls_accepts(spec, y_logit, q_prev)) return 0.0;
    const double p = pseudo_target(spec, y_logit, gamma_t);
    return model_loss_value(spec.pl_loss, p, x);
}

// Partial derivatives of l_U in the smooth region. Exactly on the PLS
// boundary the accepted-side values are reported with at_boundary set; the
// delta-function contribution to Rhat lives in the replica module.
struct DerivBundle {
    double value = 0.0;
    double d2 = 0.0;   // d/dx
    double d22 = 0.0;  // d^2/dx^2
    double d12 = 0.0;  // d^2/(dy dx)
    bool accepted = false;
    bool at_boundary = false;
};

inline DerivBundle derivs_lU(const LossSpec& spec, double y_logit, double x, double gamma_t,
                             double q_prev) {
    require(q_prev > 0.0, "q_prev must be positive");
    DerivBundle b;
    const double thr = spec.pls_threshold * std::sqrt(q_prev);
    b.at_boundary = std::abs(y_logit) == thr && thr > 0.0;
    b.accepted = std::abs(y_logit) > thr;
    if (!b.accepted && !b.at_boundary) return b;
    const double p = pseudo_target(spec, y_logit, gamma_t);
    b.value = model_loss_value(spec.pl_loss, p, x);
    b.d2 = model_loss_d2(spec.pl_loss, p, x);
    b.d22 = model_loss_d22(spec.pl_loss, x);
    b.d12 = -pseudo_target_slope(spec, y_logit, gamma_t);
    return b;
}

} // namespace streplica
