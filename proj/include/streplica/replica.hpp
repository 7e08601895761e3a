#pragma once

#include <algorithm>
#include <cmath>
#include <optional>
#include <vector>

#include "streplica/common.hpp"
#include "streplica/losses.hpp"
#include "streplica/mixture.hpp"
#include "streplica/quadrature.hpp"
#include "streplica/rng.hpp"

namespace streplica {

// Saddle-point variables Theta^(t) = (q, chi, m, R, B); R is absent at t = 0.
struct OrderParams {
    double q = 0.0;
    double chi = 0.0;
    double m = 0.0;
    double R = 0.0;
    double B = 0.0;
    bool has_R = false;
};

// Conjugate variables Thetahat^(t) = (Qhat, chihat, mhat, Rhat); Rhat absent at t = 0.
struct ConjugateParams {
    double Qhat = 0.0;
    double chihat = 0.0;
    double mhat = 0.0;
    double Rhat = 0.0;
    bool has_R = false;
};

struct FixedPointOptions {
    double eta_d = 0.5;      // damping of the hatted update
    double eps_tol = 1e-8;   // max component change of Theta per sweep
    int s_max = 5000;
    double bias_tol = 1e-10; // |E[d2 l]| at the returned bias
    double bias_bracket = 50.0;
};

struct StepResult {
    OrderParams theta;
    ConjugateParams hat;
    double eps_g = 0.0;
    double cos_sim = 0.0; // m / sqrt(q)
    int iters = 0;
    double residual = 0.0;
    bool converged = false;
    int psd_clips = 0; // sweeps where q - R^2/q_prev < 0 had to be clipped
};

struct SaddleTrajectory {
    std::vector<StepResult> steps; // index = t
    bool all_converged = true;
    int total_psd_clips = 0;
};

// RS generalization error (shared formula with the finite-size estimate).
inline double rs_gen_error(double q, double m, double B, double rho_u, double delta_u) {
    require(q > 0.0, "q must be positive");
    const double denom = std::sqrt(delta_u * q);
    return rho_u * gauss_tail((m + B) / denom) + (1.0 - rho_u) * gauss_tail((m - B) / denom);
}

inline double rs_gen_error(const OrderParams& theta, const MixtureConfig& mixture) {
    return rs_gen_error(theta.q, theta.m, theta.B, mixture.rho_u, mixture.delta_u);
}

// ---------------------------------------------------------------------------
// 1D effective problem: min_u  u^2/(2 Delta chi) + l(target p, sigma(h + u)).
// Convex and smooth in u, so the stationarity condition
//   u/(chi Delta) + d2 l(p, h + u) = 0
// has a unique root. Newton from a linearized guess, with a monotone
// bisection safeguard.
// ---------------------------------------------------------------------------
inline double solve_scalar_u(Loss loss_family, double p, double h, double c) {
    if (loss_family == Loss::squared) return c * (p - h) / (1.0 + c);
    // cross-entropy: phi(u) = u/c + sigmoid(h+u) - p, increasing in u, with
    // the stationarity form u = c (p - sigmoid(h+u)) giving an exact bracket.
    double lo = c * (p - 1.0);
    double hi = c * p;
    double u = std::clamp(c * (p - sigmoid(h)) / (1.0 + c * sigmoid_deriv(h)), lo, hi);
    for (int it = 0; it < 200; ++it) {
        const double s = sigmoid(h + u);
        const double phi = u / c + s - p;
        if (std::abs(phi) < 1e-14) return u;
        if (phi > 0.0)
            hi = u;
        else
            lo = u;
        const double width = hi - lo;
        if (width <= 8.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(u)))
            return u;
        const double dphi = 1.0 / c + s * (1.0 - s);
        const double step = phi / dphi;
        double un = u - step;
        // take Newton only while it stays inside the bracket and contracts
        // faster than bisection would; otherwise bisect
        if (!(un > lo && un < hi) || std::abs(step) > 0.5 * width) un = 0.5 * (lo + hi);
        u = un;
    }
    throw numerical_error("scalar minimizer did not converge");
}

// Spec op for t >= 1: the target is the pseudo-label of the effective logit
// h_tilde; rejected points have the trivial minimizer u* = 0.
// Returns (u_star, d22 at the optimum).
inline std::pair<double, double> effective_logit_minimize(const LossSpec& spec, double chi,
                                                          double delta, double h_tilde, double h,
                                                          double q_prev, int t) {
    require(chi > 0.0 && delta > 0.0, "chi and delta must be positive");
    const double gamma_t = spec.pl_scale(t);
    if (!pls_accepts(spec, h_tilde, q_prev)) return {0.0, 0.0};
    const double p = pseudo_target(spec, h_tilde, gamma_t);
    const double u = solve_scalar_u(spec.pl_loss, p, h, chi * delta);
    return {u, model_loss_d22(spec.pl_loss, h + u)};
}

// t = 0 variant: target is the true label.
inline std::pair<double, double> effective_logit_minimize_t0(const LossSpec& spec, double chi,
                                                             double delta, int y, double h) {
    require(chi > 0.0 && delta > 0.0, "chi and delta must be positive");
    const double u = solve_scalar_u(spec.loss, static_cast<double>(y), h, chi * delta);
    return {u, model_loss_d22(spec.loss, h + u)};
}

namespace detail {

// One quadrature pass worth of accumulated expectations. grad / grad_h are
// E[d2 l] and E[d/dh d2 l]; the latter doubles as the Newton derivative of
// the bias equation.
struct HatSums {
    double qhat_kernel = 0.0;  // E[d22 / (1 + c d22)]
    double chihat_kernel = 0.0;// E[g^2]
    double mhat_kernel = 0.0;  // E[(2y-1) g]
    double rhat_kernel = 0.0;  // E[d12 / (1 + c d22)] (smooth part)
    double grad = 0.0;         // E[g]
};

// t = 0 pass over (y, xi) with xi ~ N(0, Delta_L).
inline HatSums pass_t0(const OrderParams& th, const LossSpec& spec, const MixtureConfig& mix,
                       const GaussHermite& gh) {
    HatSums s;
    const double c = th.chi * mix.delta_l;
    const double sq = std::sqrt(th.q);
    const double sdl = std::sqrt(mix.delta_l);
    for (int y = 0; y <= 1; ++y) {
        const double py = y == 1 ? mix.rho_l : 1.0 - mix.rho_l;
        const double mean = (2 * y - 1) * th.m + th.B;
        for (std::size_t k = 0; k < gh.node.size(); ++k) {
            const double h = mean + sq * sdl * gh.node[k];
            const double u = solve_scalar_u(spec.loss, static_cast<double>(y), h, c);
            const double x = h + u;
            const double g = model_loss_d2(spec.loss, static_cast<double>(y), x);
            const double d22 = model_loss_d22(spec.loss, x);
            const double w = py * gh.weight[k];
            s.qhat_kernel += w * d22 / (1.0 + c * d22);
            s.chihat_kernel += w * g * g;
            s.mhat_kernel += w * (2 * y - 1) * g;
            s.grad += w * g;
        }
    }
    return s;
}

struct SampleKernelOut {
    double g = 0.0, d22 = 0.0, d12 = 0.0;
    bool accepted = false;
};

inline SampleKernelOut kernel_t(const LossSpec& spec, double gamma_t, double thr, double c,
                                double h_tilde, double h) {
    SampleKernelOut o;
    if (std::abs(h_tilde) <= thr) return o;
    o.accepted = true;
    const double p = pseudo_target(spec, h_tilde, gamma_t);
    const double u = solve_scalar_u(spec.pl_loss, p, h, c);
    const double x = h + u;
    o.g = model_loss_d2(spec.pl_loss, p, x);
    o.d22 = model_loss_d22(spec.pl_loss, x);
    o.d12 = -pseudo_target_slope(spec, h_tilde, gamma_t);
    return o;
}

// Boundary contribution to E[d/dh_tilde d2 l_U]: the indicator jumps at
// h_tilde = +-Gamma sqrt(q_prev); the Gaussian density of h_tilde there times
// the accepted-side integrand, integrated over xi2 with a 1D rule.
inline double rhat_delta_correction(const OrderParams& prev, const OrderParams& th,
                                    const LossSpec& spec, double gamma_t, const MixtureConfig& mix,
                                    double sd2, const GaussHermite& gh1) {
    const double thr = spec.pls_threshold * std::sqrt(prev.q);
    if (thr <= 0.0) return 0.0;
    const double c = th.chi * mix.delta_u;
    const double sdu = std::sqrt(mix.delta_u);
    double total = 0.0;
    for (int y = 0; y <= 1; ++y) {
        const double py = y == 1 ? mix.rho_u : 1.0 - mix.rho_u;
        const double mu = (2 * y - 1) * prev.m + prev.B;
        for (int side = 0; side <= 1; ++side) {
            const double sign = side == 0 ? 1.0 : -1.0;
            const double cpt = sign * thr;
            const double dens = gauss_pdf(cpt, mu, prev.q * mix.delta_u);
            const double xi1 = (cpt - mu) / std::sqrt(prev.q); // pinned xi1 value
            const double p = pseudo_target(spec, cpt, gamma_t);
            double gbar = 0.0;
            for (std::size_t k = 0; k < gh1.node.size(); ++k) {
                const double h = (2 * y - 1) * th.m + th.B + (th.R / std::sqrt(prev.q)) * xi1 +
                                 sd2 * sdu * gh1.node[k];
                const double u = solve_scalar_u(spec.pl_loss, p, h, c);
                gbar += gh1.weight[k] * model_loss_d2(spec.pl_loss, p, h + u);
            }
            total += py * sign * dens * gbar;
        }
    }
    return total;
}

// t >= 1 pass over (y, xi1, xi2). Returns the accumulated kernels plus
// whether the xi2 variance needed clipping.
inline HatSums pass_t(const OrderParams& prev, const OrderParams& th, const LossSpec& spec,
                      double gamma_t, const MixtureConfig& mix, const QuadratureSpec& quad,
                      const GaussHermite& gh, const FrozenSamples* mc, bool* clipped) {
    HatSums s;
    const double c = th.chi * mix.delta_u;
    const double thr = spec.pls_threshold * std::sqrt(prev.q);
    double var2 = th.q - th.R * th.R / prev.q;
    if (clipped) *clipped = var2 < 0.0;
    var2 = std::max(var2, 0.0);
    const double sd2 = std::sqrt(var2);
    const double sdu = std::sqrt(mix.delta_u);
    const double r_over = th.R / std::sqrt(prev.q);
    if (quad.backend == QuadBackend::gauss_hermite) {
        for (int y = 0; y <= 1; ++y) {
            const double py = y == 1 ? mix.rho_u : 1.0 - mix.rho_u;
            const double mu_til = (2 * y - 1) * prev.m + prev.B;
            const double mu_cur = (2 * y - 1) * th.m + th.B;
            for (std::size_t a = 0; a < gh.node.size(); ++a) {
                const double xi1 = sdu * gh.node[a];
                const double h_tilde = mu_til + std::sqrt(prev.q) * xi1;
                if (std::abs(h_tilde) <= thr) continue;
                const double p = pseudo_target(spec, h_tilde, gamma_t);
                const double d12 = -pseudo_target_slope(spec, h_tilde, gamma_t);
                const double base = mu_cur + r_over * xi1;
                const double wa = py * gh.weight[a];
                for (std::size_t b = 0; b < gh.node.size(); ++b) {
                    const double h = base + sd2 * sdu * gh.node[b];
                    const double u = solve_scalar_u(spec.pl_loss, p, h, c);
                    const double x = h + u;
                    const double g = model_loss_d2(spec.pl_loss, p, x);
                    const double d22 = model_loss_d22(spec.pl_loss, x);
                    const double w = wa * gh.weight[b];
                    s.qhat_kernel += w * d22 / (1.0 + c * d22);
                    s.chihat_kernel += w * g * g;
                    s.mhat_kernel += w * (2 * y - 1) * g;
                    s.rhat_kernel += w * d12 / (1.0 + c * d22);
                    s.grad += w * g;
                }
            }
        }
    } else {
        const long n = static_cast<long>(mc->y.size());
        const double w = 1.0 / static_cast<double>(n);
        for (long i = 0; i < n; ++i) {
            const int y = mc->y[i];
            const double xi1 = sdu * mc->xi1[i];
            const double h_tilde = (2 * y - 1) * prev.m + prev.B + std::sqrt(prev.q) * xi1;
            const double h = (2 * y - 1) * th.m + th.B + r_over * xi1 + sd2 * sdu * mc->xi2[i];
            const auto o = kernel_t(spec, gamma_t, thr, c, h_tilde, h);
            if (!o.accepted) continue;
            s.qhat_kernel += w * o.d22 / (1.0 + c * o.d22);
            s.chihat_kernel += w * o.g * o.g;
            s.mhat_kernel += w * (2 * y - 1) * o.g;
            s.rhat_kernel += w * o.d12 / (1.0 + c * o.d22);
            s.grad += w * o.g;
        }
    }
    return s;
}

// Safeguarded Newton on the monotone scalar equation E[d2 l](B) = 0.
// `eval` must return (grad, dgrad_dB) at the candidate bias. Returns the
// bias; throws if no root lies inside [-bracket, bracket].
template <typename EvalFn>
double solve_bias_root(double B0, double bracket, double tol, EvalFn&& eval) {
    double lo = -bracket, hi = bracket;
    double B = std::clamp(B0, lo, hi);
    for (int it = 0; it < 200; ++it) {
        const auto [g, dg] = eval(B);
        if (std::abs(g) <= tol) return B;
        if (g > 0.0)
            hi = B;
        else
            lo = B;
        const double width = hi - lo;
        if (width < 4.0 * std::numeric_limits<double>::epsilon() * std::max(1.0, std::abs(B)))
            break;
        double Bn = dg > 0.0 ? B - g / dg : 0.5 * (lo + hi);
        if (!(Bn > lo && Bn < hi) || (dg > 0.0 && std::abs(g / dg) > 0.5 * width))
            Bn = 0.5 * (lo + hi);
        B = Bn;
    }
    throw numerical_error("bias root not bracketed in [-" + std::to_string(bracket) + ", " +
                          std::to_string(bracket) + "]");
}

} // namespace detail

// Spec op: conjugate expectations at t = 0 for a full OrderParams (B already
// solving the bias condition, or any candidate B).
inline ConjugateParams inner_expectations_t0(const OrderParams& theta, const LossSpec& spec,
                                             const MixtureConfig& mixture,
                                             const QuadratureSpec& quad) {
    quad.validate();
    GaussHermite gh(quad.gh_nodes);
    const auto s = detail::pass_t0(theta, spec, mixture, gh);
    ConjugateParams hat;
    hat.Qhat = mixture.alpha_l * mixture.delta_l * s.qhat_kernel;
    hat.chihat = mixture.alpha_l * mixture.delta_l * s.chihat_kernel;
    hat.mhat = -mixture.alpha_l * s.mhat_kernel;
    hat.has_R = false;
    if (!std::isfinite(hat.Qhat) || !std::isfinite(hat.chihat) || !std::isfinite(hat.mhat))
        throw numerical_error("non-finite integrand in t=0 expectations");
    return hat;
}

// Spec op: conjugate expectations at t >= 1, including the Rhat boundary
// correction. theta_prev must be the converged step-(t-1) parameters.
inline ConjugateParams inner_expectations_t(const OrderParams& theta_prev,
                                            const OrderParams& theta, const LossSpec& spec,
                                            const MixtureConfig& mixture,
                                            const QuadratureSpec& quad, int t) {
    quad.validate();
    require(t >= 1, "t must be >= 1");
    const double var2 = theta.q - theta.R * theta.R / theta_prev.q;
    if (var2 < -1e-10)
        throw numerical_error("q - R^2/q_prev negative beyond tolerance: fixed point inconsistent");
    GaussHermite gh(quad.gh_nodes);
    const double gamma_t = spec.pl_scale(t);
    std::optional<FrozenSamples> mc;
    if (quad.backend == QuadBackend::monte_carlo)
        mc.emplace(quad.mc_samples, mixture.rho_u, quad.seed, t);
    bool clipped = false;
    const auto s = detail::pass_t(theta_prev, theta, spec, gamma_t, mixture, quad, gh,
                                  mc ? &*mc : nullptr, &clipped);
    ConjugateParams hat;
    hat.Qhat = mixture.alpha_u * mixture.delta_u * s.qhat_kernel;
    hat.chihat = mixture.alpha_u * mixture.delta_u * s.chihat_kernel;
    hat.mhat = -mixture.alpha_u * s.mhat_kernel;
    const double sd2 = std::sqrt(std::max(var2, 0.0));
    const double delta = detail::rhat_delta_correction(theta_prev, theta, spec, gamma_t, mixture,
                                                       sd2, gh);
    hat.Rhat = -mixture.alpha_u * mixture.delta_u * (s.rhat_kernel + delta);
    hat.has_R = true;
    if (!std::isfinite(hat.Qhat) || !std::isfinite(hat.chihat) || !std::isfinite(hat.mhat) ||
        !std::isfinite(hat.Rhat))
        throw numerical_error("non-finite integrand in t expectations");
    return hat;
}

// Spec op: solve the scalar bias condition with the other order parameters
// held fixed. t = 0 uses the labeled-domain equation.
inline double solve_bias_t0(const OrderParams& theta, const LossSpec& spec,
                            const MixtureConfig& mixture, const QuadratureSpec& quad,
                            const FixedPointOptions& opts = {}) {
    GaussHermite gh(quad.gh_nodes);
    return detail::solve_bias_root(theta.B, opts.bias_bracket, opts.bias_tol, [&](double B) {
        OrderParams th = theta;
        th.B = B;
        const auto s = detail::pass_t0(th, spec, mixture, gh);
        return std::pair<double, double>(s.grad, s.qhat_kernel);
    });
}

inline double solve_bias_t(const OrderParams& theta_prev, const OrderParams& theta,
                           const LossSpec& spec, const MixtureConfig& mixture,
                           const QuadratureSpec& quad, int t,
                           const FixedPointOptions& opts = {}) {
    GaussHermite gh(quad.gh_nodes);
    const double gamma_t = spec.pl_scale(t);
    std::optional<FrozenSamples> mc;
    if (quad.backend == QuadBackend::monte_carlo)
        mc.emplace(quad.mc_samples, mixture.rho_u, quad.seed, t);
    return detail::solve_bias_root(theta.B, opts.bias_bracket, opts.bias_tol, [&](double B) {
        OrderParams th = theta;
        th.B = B;
        const auto s = detail::pass_t(theta_prev, th, spec, gamma_t, mixture, quad, gh,
                                      mc ? &*mc : nullptr, nullptr);
        return std::pair<double, double>(s.grad, s.qhat_kernel);
    });
}

// Spec op: damped fixed-point iteration at t = 0 (Algorithm-1 outer loop).
// The bias equation is re-solved every sweep; the pass that certifies the
// bias residual also supplies the hatted update.
inline StepResult fixed_point_t0(const MixtureConfig& mixture, const LossSpec& spec,
                                 double lambda_l, const QuadratureSpec& quad,
                                 const FixedPointOptions& opts = {}, bool bias_fixed_at = false,
                                 double fixed_bias = 0.0) {
    mixture.validate();
    spec.validate();
    quad.validate();
    require(lambda_l > 0.0, "lambda_l must be positive");
    GaussHermite gh(quad.gh_nodes);

    StepResult res;
    ConjugateParams hat;
    hat.Qhat = 1.0;
    hat.chihat = 0.1;
    hat.mhat = 0.1;
    OrderParams th;
    th.B = bias_fixed_at ? fixed_bias : 0.0;

    double prev_vec[4] = {0, 0, 0, 0};
    bool have_prev = false;
    for (int s = 1; s <= opts.s_max; ++s) {
        th.chi = 1.0 / (hat.Qhat + lambda_l);
        th.q = (hat.mhat * hat.mhat + hat.chihat) / ((hat.Qhat + lambda_l) * (hat.Qhat + lambda_l));
        th.m = hat.mhat / (hat.Qhat + lambda_l);

        detail::HatSums sums;
        if (bias_fixed_at) {
            sums = detail::pass_t0(th, spec, mixture, gh);
        } else {
            th.B = detail::solve_bias_root(th.B, opts.bias_bracket, opts.bias_tol, [&](double B) {
                OrderParams cand = th;
                cand.B = B;
                sums = detail::pass_t0(cand, spec, mixture, gh);
                return std::pair<double, double>(sums.grad, sums.qhat_kernel);
            });
        }
        hat.Qhat = (1 - opts.eta_d) * hat.Qhat + opts.eta_d * mixture.alpha_l * mixture.delta_l * sums.qhat_kernel;
        hat.chihat = (1 - opts.eta_d) * hat.chihat + opts.eta_d * mixture.alpha_l * mixture.delta_l * sums.chihat_kernel;
        hat.mhat = (1 - opts.eta_d) * hat.mhat + opts.eta_d * (-mixture.alpha_l * sums.mhat_kernel);

        const double cur[4] = {th.q, th.chi, th.m, th.B};
        if (have_prev) {
            double r = 0.0;
            for (int i = 0; i < 4; ++i) r = std::max(r, std::abs(cur[i] - prev_vec[i]));
            res.residual = r;
            if (r < opts.eps_tol) {
                res.converged = true;
                res.iters = s;
                break;
            }
        }
        std::copy(cur, cur + 4, prev_vec);
        have_prev = true;
        res.iters = s;
    }
    res.theta = th;
    res.hat = hat;
    res.cos_sim = th.m / std::sqrt(th.q);
    res.eps_g = rs_gen_error(th, mixture);
    return res;
}

// Spec op: damped fixed-point iteration for one ST step, warm-started at the
// previous step's solution.
inline StepResult fixed_point_t(const StepResult& prev, const MixtureConfig& mixture,
                                const LossSpec& spec, double lambda_u, const QuadratureSpec& quad,
                                int t, const FixedPointOptions& opts = {},
                                bool bias_fixed_at = false) {
    mixture.validate();
    spec.validate();
    quad.validate();
    require(lambda_u > 0.0, "lambda_u must be positive");
    require(t >= 1, "t must be >= 1");
    GaussHermite gh(quad.gh_nodes);
    const double gamma_t = spec.pl_scale(t);

    std::optional<FrozenSamples> mc;
    if (quad.backend == QuadBackend::monte_carlo)
        mc.emplace(quad.mc_samples, mixture.rho_u, quad.seed, t);
    const FrozenSamples* mcp = mc ? &*mc : nullptr;

    StepResult res;
    const OrderParams& pv = prev.theta;
    ConjugateParams hat = prev.hat;
    OrderParams th = pv;
    th.has_R = true;
    if (!hat.has_R) {
        // First ST step: the supervised-step hats live on a different sample
        // ratio and can be orders of magnitude off. Initialize instead from
        // the no-update point Theta = Theta_prev (the lambda_u -> 0 fixed
        // point), iterating the cheap (chi, Qhat) sub-system a few times.
        OrderParams th0 = pv;
        th0.has_R = true;
        th0.R = pv.q;
        th0.chi = pv.chi;
        detail::HatSums sums;
        bool clip = false;
        for (int k = 0; k < 6; ++k) {
            sums = detail::pass_t(pv, th0, spec, gamma_t, mixture, quad, gh, mcp, &clip);
            th0.chi = 1.0 / (mixture.alpha_u * mixture.delta_u * sums.qhat_kernel + lambda_u);
        }
        const double dc0 = detail::rhat_delta_correction(pv, th0, spec, gamma_t, mixture, 0.0, gh);
        hat.Qhat = mixture.alpha_u * mixture.delta_u * sums.qhat_kernel;
        hat.chihat = mixture.alpha_u * mixture.delta_u * sums.chihat_kernel;
        hat.mhat = -mixture.alpha_u * sums.mhat_kernel;
        hat.Rhat = -mixture.alpha_u * mixture.delta_u * (sums.rhat_kernel + dc0);
    }
    hat.has_R = true;

    double prev_vec[5] = {0, 0, 0, 0, 0};
    bool have_prev = false;
    double eta = opts.eta_d;
    double res_min = std::numeric_limits<double>::infinity();
    int stalled = 0;
    for (int s = 1; s <= opts.s_max; ++s) {
        const double denom = hat.Qhat + lambda_u;
        th.chi = 1.0 / denom;
        th.q = (hat.mhat * hat.mhat + hat.chihat + hat.Rhat * hat.Rhat * pv.q +
                2.0 * hat.mhat * hat.Rhat * pv.m) /
               (denom * denom);
        th.m = (hat.mhat + hat.Rhat * pv.m) / denom;
        th.R = (hat.mhat * pv.m + hat.Rhat * pv.q) / denom;
        if (th.q - th.R * th.R / pv.q < 0.0) ++res.psd_clips;

        bool clipped = false;
        detail::HatSums sums;
        if (bias_fixed_at) {
            sums = detail::pass_t(pv, th, spec, gamma_t, mixture, quad, gh, mcp, &clipped);
        } else {
            th.B = detail::solve_bias_root(th.B, opts.bias_bracket, opts.bias_tol, [&](double B) {
                OrderParams cand = th;
                cand.B = B;
                sums = detail::pass_t(pv, cand, spec, gamma_t, mixture, quad, gh, mcp, &clipped);
                return std::pair<double, double>(sums.grad, sums.qhat_kernel);
            });
        }
        const double sd2 = std::sqrt(std::max(th.q - th.R * th.R / pv.q, 0.0));
        const double dc = detail::rhat_delta_correction(pv, th, spec, gamma_t, mixture, sd2, gh);
        hat.Qhat = (1 - eta) * hat.Qhat + eta * mixture.alpha_u * mixture.delta_u * sums.qhat_kernel;
        hat.chihat = (1 - eta) * hat.chihat + eta * mixture.alpha_u * mixture.delta_u * sums.chihat_kernel;
        hat.mhat = (1 - eta) * hat.mhat + eta * (-mixture.alpha_u * sums.mhat_kernel);
        hat.Rhat = (1 - eta) * hat.Rhat +
                   eta * (-mixture.alpha_u * mixture.delta_u * (sums.rhat_kernel + dc));

        const double cur[5] = {th.q, th.chi, th.m, th.R, th.B};
        if (have_prev) {
            double r = 0.0;
            for (int i = 0; i < 5; ++i) r = std::max(r, std::abs(cur[i] - prev_vec[i]));
            res.residual = r;
            if (r < opts.eps_tol) {
                res.converged = true;
                res.iters = s;
                break;
            }
            // non-contractive regions (strong PLS, large alpha jumps) cycle
            // at full damping: decay eta on sustained residual blow-up, but
            // leave slow monotone convergence alone
            if (r < res_min) {
                res_min = r;
                stalled = 0;
            } else if (r > 2.0 * res_min && ++stalled >= 8) {
                eta = std::max(0.02, 0.5 * eta);
                res_min = r;
                stalled = 0;
            }
        }
        std::copy(cur, cur + 5, prev_vec);
        have_prev = true;
        res.iters = s;
    }
    if (th.q - th.R * th.R / pv.q < -1e-10)
        throw numerical_error("converged state violates q*q_prev >= R^2 beyond tolerance");
    res.theta = th;
    res.hat = hat;
    res.cos_sim = th.m / std::sqrt(th.q);
    res.eps_g = rs_gen_error(th, mixture);
    return res;
}

// Spec op: full saddle trajectory t = 0..T.
inline SaddleTrajectory solve_trajectory(const MixtureConfig& mixture, const LossSpec& spec,
                                         double lambda_l, double lambda_u,
                                         const QuadratureSpec& quad,
                                         const FixedPointOptions& opts = {},
                                         bool bias_fixed = false) {
    SaddleTrajectory traj;
    traj.steps.reserve(mixture.n_batches + 1);
    StepResult cur = fixed_point_t0(mixture, spec, lambda_l, quad, opts);
    traj.all_converged = cur.converged;
    traj.steps.push_back(cur);
    const double b0 = cur.theta.B;
    for (int t = 1; t <= mixture.n_batches; ++t) {
        if (bias_fixed) cur.theta.B = b0;
        cur = fixed_point_t(cur, mixture, spec, lambda_u, quad, t, opts, bias_fixed);
        traj.all_converged = traj.all_converged && cur.converged;
        traj.total_psd_clips += cur.psd_clips;
        traj.steps.push_back(cur);
    }
    return traj;
}

// ---------------------------------------------------------------------------
// Effective single-body samples
// ---------------------------------------------------------------------------

// Gaussian-process paths of the effective weight coordinate:
//   w*(0) = (mhat + sqrt(chihat) xi) / (Qhat + lambda_l)
//   w*(t) = (mhat + Rhat w*(t-1) + sqrt(chihat) xi) / (Qhat + lambda_u).
// Returned as per-t vectors of n_samples draws.
inline std::vector<std::vector<double>> sample_effective_weights(const SaddleTrajectory& traj,
                                                                 double lambda_l, double lambda_u,
                                                                 long n_samples,
                                                                 std::uint64_t seed) {
    require(!traj.steps.empty(), "empty trajectory");
    const int T = static_cast<int>(traj.steps.size()) - 1;
    for (const auto& st : traj.steps)
        if (st.hat.chihat < -1e-12) throw numerical_error("chihat negative beyond tolerance");
    std::vector<std::vector<double>> out(T + 1, std::vector<double>(n_samples));
    Rng rng(seed, "gp-weights");
    for (long i = 0; i < n_samples; ++i) {
        const auto& h0 = traj.steps[0].hat;
        double w = (h0.mhat + std::sqrt(std::max(h0.chihat, 0.0)) * rng.next_normal()) /
                   (h0.Qhat + lambda_l);
        out[0][i] = w;
        for (int t = 1; t <= T; ++t) {
            const auto& h = traj.steps[t].hat;
            w = (h.mhat + h.Rhat * w + std::sqrt(std::max(h.chihat, 0.0)) * rng.next_normal()) /
                (h.Qhat + lambda_u);
            out[t][i] = w;
        }
    }
    return out;
}

struct GpMoments {
    std::vector<double> mean;      // -> m^(t)
    std::vector<double> second;    // -> q^(t)
    std::vector<double> lag1;      // -> R^(t)
};

// Streaming moments of the same process (usable at n_samples where storing
// paths would be wasteful).
inline GpMoments gp_weight_moments(const SaddleTrajectory& traj, double lambda_l, double lambda_u,
                                   long n_samples, std::uint64_t seed) {
    const int T = static_cast<int>(traj.steps.size()) - 1;
    GpMoments mom;
    mom.mean.assign(T + 1, 0.0);
    mom.second.assign(T + 1, 0.0);
    mom.lag1.assign(T + 1, 0.0);
    Rng rng(seed, "gp-weights");
    for (long i = 0; i < n_samples; ++i) {
        const auto& h0 = traj.steps[0].hat;
        double w = (h0.mhat + std::sqrt(std::max(h0.chihat, 0.0)) * rng.next_normal()) /
                   (h0.Qhat + lambda_l);
        mom.mean[0] += w;
        mom.second[0] += w * w;
        for (int t = 1; t <= T; ++t) {
            const auto& h = traj.steps[t].hat;
            const double wp = w;
            w = (h.mhat + h.Rhat * w + std::sqrt(std::max(h.chihat, 0.0)) * rng.next_normal()) /
                (h.Qhat + lambda_u);
            mom.mean[t] += w;
            mom.second[t] += w * w;
            mom.lag1[t] += w * wp;
        }
    }
    for (int t = 0; t <= T; ++t) {
        mom.mean[t] /= n_samples;
        mom.second[t] /= n_samples;
        mom.lag1[t] /= n_samples;
    }
    return mom;
}

struct EffectiveLogitSample {
    int y = 0;
    double h_tilde = 0.0;
    double logit = 0.0; // u* + h
    bool accepted = false;
};

// Claim-5 sampler: effective (y, h_tilde, u*+h) triples at ST step t.
inline std::vector<EffectiveLogitSample> sample_effective_logits(const SaddleTrajectory& traj,
                                                                 const LossSpec& spec,
                                                                 const MixtureConfig& mixture,
                                                                 long n_samples,
                                                                 std::uint64_t seed, int t) {
    require(t >= 1 && t < static_cast<int>(traj.steps.size()), "t out of range");
    const OrderParams& pv = traj.steps[t - 1].theta;
    const OrderParams& th = traj.steps[t].theta;
    const double gamma_t = spec.pl_scale(t);
    const double thr = spec.pls_threshold * std::sqrt(pv.q);
    const double c = th.chi * mixture.delta_u;
    const double sdu = std::sqrt(mixture.delta_u);
    const double sd2 = std::sqrt(std::max(th.q - th.R * th.R / pv.q, 0.0));
    std::vector<EffectiveLogitSample> out(n_samples);
    Rng rng(seed, "gp-logits", static_cast<std::uint64_t>(t));
    for (long i = 0; i < n_samples; ++i) {
        const int y = rng.next_bernoulli(mixture.rho_u) ? 1 : 0;
        const double xi1 = sdu * rng.next_normal();
        const double xi2 = sdu * rng.next_normal();
        const double h_tilde = (2 * y - 1) * pv.m + pv.B + std::sqrt(pv.q) * xi1;
        const double h = (2 * y - 1) * th.m + th.B + (th.R / std::sqrt(pv.q)) * xi1 + sd2 * xi2;
        EffectiveLogitSample& smp = out[i];
        smp.y = y;
        smp.h_tilde = h_tilde;
        smp.accepted = std::abs(h_tilde) > thr;
        if (smp.accepted) {
            const double p = pseudo_target(spec, h_tilde, gamma_t);
            smp.logit = h + solve_scalar_u(spec.pl_loss, p, h, c);
        } else {
            smp.logit = h; // u* = 0 on rejected points
        }
    }
    return out;
}

} // namespace streplica
