#pragma once

#include <cmath>
#include <cstring>
#include <vector>

#include "streplica/common.hpp"
#include "streplica/losses.hpp"

namespace streplica {

struct ModelParams {
    std::vector<double> weights;
    double bias = 0.0;
};

struct FitOptions {
    double tol = 1e-10; // max-norm of the full gradient
    int max_iter = 200;
    bool bias_fixed = false;
};

struct FitReport {
    int newton_iters = 0;
    double grad_norm = 0.0;
    bool converged = false;
};

namespace detail {

constexpr int kRowBlock = 512;

// z = X w / sqrt(N) + B over unmasked rows (masked rows get z = 0, unused).
inline void logits(const double* X, int M, int N, const std::vector<char>* mask,
                   const std::vector<double>& w, double B, std::vector<double>& z) {
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(N));
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i) {
        if (mask && !(*mask)[i]) {
            z[i] = 0.0;
            continue;
        }
        const double* row = X + static_cast<std::size_t>(i) * N;
        double acc = 0.0;
        for (int j = 0; j < N; ++j) acc += row[j] * w[j];
        z[i] = acc * inv_sqrt_n + B;
    }
}

// out = X^T r / sqrt(N). Rows are processed in fixed blocks and the block
// partials are reduced in block order, so the result is bit-identical for
// any thread count.
inline void accum_xt(const double* X, int M, int N, const std::vector<char>* mask,
                     const std::vector<double>& r, std::vector<double>& out,
                     std::vector<double>& scratch) {
    const int nblocks = (M + kRowBlock - 1) / kRowBlock;
    scratch.assign(static_cast<std::size_t>(nblocks) * N, 0.0);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < nblocks; ++b) {
        double* part = scratch.data() + static_cast<std::size_t>(b) * N;
        const int i0 = b * kRowBlock;
        const int i1 = std::min(M, i0 + kRowBlock);
        for (int i = i0; i < i1; ++i) {
            if (mask && !(*mask)[i]) continue;
            const double ri = r[i];
            if (ri == 0.0) continue;
            const double* row = X + static_cast<std::size_t>(i) * N;
            for (int j = 0; j < N; ++j) part[j] += ri * row[j];
        }
    }
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(N));
    std::fill(out.begin(), out.end(), 0.0);
    for (int b = 0; b < nblocks; ++b) {
        const double* part = scratch.data() + static_cast<std::size_t>(b) * N;
        for (int j = 0; j < N; ++j) out[j] += part[j];
    }
    for (int j = 0; j < N; ++j) out[j] *= inv_sqrt_n;
}

// Fused Hessian-vector product: one pass over X computes
// t_i = d2_i (x_i^T v / sqrt(N) + vB) and accumulates X^T t / sqrt(N) and
// sum(t), using the same fixed-block deterministic reduction.
inline void hess_apply(const double* X, int M, int N, const std::vector<char>* mask,
                       const std::vector<double>& d2, const double* v, double vB,
                       std::vector<double>& out_w, double& out_B, std::vector<double>& scratch,
                       std::vector<double>& tsums) {
    const int nblocks = (M + kRowBlock - 1) / kRowBlock;
    scratch.assign(static_cast<std::size_t>(nblocks) * N, 0.0);
    tsums.assign(nblocks, 0.0);
    const double inv_sqrt_n = 1.0 / std::sqrt(static_cast<double>(N));
#pragma omp parallel for schedule(static)
    for (int b = 0; b < nblocks; ++b) {
        double* part = scratch.data() + static_cast<std::size_t>(b) * N;
        double tsum = 0.0;
        const int i0 = b * kRowBlock;
        const int i1 = std::min(M, i0 + kRowBlock);
        for (int i = i0; i < i1; ++i) {
            if ((mask && !(*mask)[i]) || d2[i] == 0.0) continue;
            const double* row = X + static_cast<std::size_t>(i) * N;
            double acc = 0.0;
            for (int j = 0; j < N; ++j) acc += row[j] * v[j];
            const double t = d2[i] * (acc * inv_sqrt_n + vB);
            tsum += t;
            for (int j = 0; j < N; ++j) part[j] += t * row[j];
        }
        tsums[b] = tsum;
    }
    std::fill(out_w.begin(), out_w.end(), 0.0);
    out_B = 0.0;
    for (int b = 0; b < nblocks; ++b) {
        const double* part = scratch.data() + static_cast<std::size_t>(b) * N;
        for (int j = 0; j < N; ++j) out_w[j] += part[j];
        out_B += tsums[b];
    }
    for (int j = 0; j < N; ++j) out_w[j] *= inv_sqrt_n;
}

// Blocked, order-fixed sum over rows.
inline double ordered_sum(const std::vector<double>& v, int M, const std::vector<char>* mask) {
    const int nblocks = (M + kRowBlock - 1) / kRowBlock;
    std::vector<double> part(nblocks, 0.0);
#pragma omp parallel for schedule(static)
    for (int b = 0; b < nblocks; ++b) {
        const int i0 = b * kRowBlock;
        const int i1 = std::min(M, i0 + kRowBlock);
        double acc = 0.0;
        for (int i = i0; i < i1; ++i)
            if (!mask || (*mask)[i]) acc += v[i];
        part[b] = acc;
    }
    double total = 0.0;
    for (double p : part) total += p;
    return total;
}

struct FitWork {
    std::vector<double> z, r, d2, hz, gw, dir_w, cg_r, cg_p, cg_ap, wtrial, scratch, rowtmp, tsums;
};

inline double fit_objective(const double* X, int M, int N, const std::vector<char>* mask,
                            const std::vector<double>& targets, Loss loss, double lambda,
                            const std::vector<double>& w, double B, FitWork& wk) {
    logits(X, M, N, mask, w, B, wk.z);
    wk.rowtmp.resize(M);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i)
        wk.rowtmp[i] = (!mask || (*mask)[i]) ? model_loss_value(loss, targets[i], wk.z[i]) : 0.0;
    double obj = ordered_sum(wk.rowtmp, M, nullptr);
    double wsq = 0.0;
    for (double x : w) wsq += x * x;
    return obj + 0.5 * lambda * wsq;
}

} // namespace detail

// Minimize sum_i 1(mask_i) l(target_i, sigma(x_i^T w/sqrt(N) + B)) + lambda/2 |w|^2
// over (w, B); the bias is unregularized and optionally pinned. Damped Newton
// with a matrix-free CG solve for the Newton direction; falls back to a
// gradient step when the CG direction is unusable.
inline FitReport fit_ridge_targets(const double* X, int M, int N,
                                   const std::vector<double>& targets,
                                   const std::vector<char>* mask, Loss loss, double lambda,
                                   ModelParams& model, const FitOptions& opts) {
    require(lambda > 0.0, "regularization must be positive");
    require(static_cast<int>(targets.size()) == M, "targets size mismatch");
    if (model.weights.empty()) model.weights.assign(N, 0.0);
    require(static_cast<int>(model.weights.size()) == N, "warm-start dimension mismatch");

    detail::FitWork wk;
    wk.z.resize(M);
    wk.r.resize(M);
    wk.d2.resize(M);
    wk.hz.resize(M);
    wk.gw.resize(N);
    wk.dir_w.resize(N);
    wk.cg_r.resize(N + 1);
    wk.cg_p.resize(N + 1);
    wk.cg_ap.resize(N + 1);

    std::vector<double>& w = model.weights;
    double& B = model.bias;
    const bool free_bias = !opts.bias_fixed;

    FitReport rep;
    for (int it = 0; it < opts.max_iter; ++it) {
        detail::logits(X, M, N, mask, w, B, wk.z);
#pragma omp parallel for schedule(static)
        for (int i = 0; i < M; ++i) {
            const bool on = !mask || (*mask)[i];
            wk.r[i] = on ? model_loss_d2(loss, targets[i], wk.z[i]) : 0.0;
            wk.d2[i] = on ? model_loss_d22(loss, wk.z[i]) : 0.0;
        }
        detail::accum_xt(X, M, N, mask, wk.r, wk.gw, wk.scratch);
        for (int j = 0; j < N; ++j) wk.gw[j] += lambda * w[j];
        const double gB = free_bias ? detail::ordered_sum(wk.r, M, nullptr) : 0.0;

        double gnorm = std::abs(gB);
        for (int j = 0; j < N; ++j) gnorm = std::max(gnorm, std::abs(wk.gw[j]));
        rep.grad_norm = gnorm;
        rep.newton_iters = it;
        if (gnorm <= opts.tol) {
            rep.converged = true;
            return rep;
        }

        // Newton direction by CG on H s = g; H v = X^T(d2 (Xv/sqrt(N) + vB))/sqrt(N) + lambda v
        auto hessmul = [&](const std::vector<double>& v, std::vector<double>& out) {
            double outB = 0.0;
            detail::hess_apply(X, M, N, mask, wk.d2, v.data(), free_bias ? v[N] : 0.0, wk.dir_w,
                               outB, wk.scratch, wk.tsums);
            for (int j = 0; j < N; ++j) out[j] = wk.dir_w[j] + lambda * v[j];
            out[N] = free_bias ? outB : 0.0;
        };

        std::vector<double> g(N + 1), s(N + 1, 0.0);
        std::copy(wk.gw.begin(), wk.gw.end(), g.begin());
        g[N] = gB;
        // inexact Newton forcing term
        double gg = 0.0;
        for (double x : g) gg += x * x;
        const double cg_tol2 = gg * std::min(0.01, gnorm) * std::min(0.01, gnorm);

        std::vector<double>& cr = wk.cg_r;
        std::vector<double>& cp = wk.cg_p;
        std::vector<double>& cap = wk.cg_ap;
        cr = g;
        cp = cr;
        double rs = gg;
        bool cg_ok = true;
        for (int k = 0; k < 2 * (N + 1) && rs > cg_tol2; ++k) {
            hessmul(cp, cap);
            double pap = 0.0;
            for (int j = 0; j <= N; ++j) pap += cp[j] * cap[j];
            if (!(pap > 0.0) || !std::isfinite(pap)) {
                cg_ok = k > 0; // keep partial solution if any progress was made
                break;
            }
            const double a = rs / pap;
            for (int j = 0; j <= N; ++j) {
                s[j] += a * cp[j];
                cr[j] -= a * cap[j];
            }
            double rs2 = 0.0;
            for (int j = 0; j <= N; ++j) rs2 += cr[j] * cr[j];
            const double beta = rs2 / rs;
            rs = rs2;
            for (int j = 0; j <= N; ++j) cp[j] = cr[j] + beta * cp[j];
            if (k == 2 * N + 1) cg_ok = true;
        }
        if (!cg_ok || !all_finite(s)) {
            s = g; // gradient fallback
            double gmax = 0.0;
            for (double x : s) gmax = std::max(gmax, std::abs(x));
            if (gmax > 1.0)
                for (double& x : s) x /= gmax;
        }

        // backtracking line search (Armijo); once the gradient is small the
        // objective decrease falls below double resolution, so the endgame
        // takes the full Newton step (quadratic contraction on a convex
        // problem)
        double gts = 0.0;
        for (int j = 0; j <= N; ++j) gts += g[j] * s[j];
        if (gts <= 0.0) {
            s = g;
            gts = gg;
        }
        wk.wtrial.resize(N);
        if (gnorm < 1e-6) {
            for (int j = 0; j < N; ++j) w[j] -= s[j];
            if (free_bias) B -= s[N];
            continue;
        }
        const double f0 = detail::fit_objective(X, M, N, mask, targets, loss, lambda, w, B, wk);
        double step = 1.0;
        for (int ls = 0; ls < 60; ++ls) {
            for (int j = 0; j < N; ++j) wk.wtrial[j] = w[j] - step * s[j];
            const double Bt = free_bias ? B - step * s[N] : B;
            const double ft =
                detail::fit_objective(X, M, N, mask, targets, loss, lambda, wk.wtrial, Bt, wk);
            if (ft <= f0 - 1e-4 * step * gts || step < 1e-12) {
                w.swap(wk.wtrial);
                if (free_bias) B = Bt;
                break;
            }
            step *= 0.5;
        }
    }
    // one final gradient evaluation for the report
    detail::logits(X, M, N, mask, w, B, wk.z);
#pragma omp parallel for schedule(static)
    for (int i = 0; i < M; ++i)
        wk.r[i] = (!mask || (*mask)[i]) ? model_loss_d2(loss, targets[i], wk.z[i]) : 0.0;
    detail::accum_xt(X, M, N, mask, wk.r, wk.gw, wk.scratch);
    for (int j = 0; j < N; ++j) wk.gw[j] += lambda * w[j];
    double gnorm = opts.bias_fixed ? 0.0 : std::abs(detail::ordered_sum(wk.r, M, nullptr));
    for (int j = 0; j < N; ++j) gnorm = std::max(gnorm, std::abs(wk.gw[j]));
    rep.grad_norm = gnorm;
    rep.converged = gnorm <= opts.tol;
    rep.newton_iters = opts.max_iter;
    return rep;
}

} // namespace streplica
