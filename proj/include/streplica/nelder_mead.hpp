#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

#include "streplica/common.hpp"

namespace streplica {

// Per-parameter box; optimization runs in unconstrained coordinates through
// a logit bijection of each active interval, so bounds are approached but
// never crossed.
struct HyperBox {
    std::vector<double> lower;
    std::vector<double> upper;

    void validate() const {
        require(!lower.empty() && lower.size() == upper.size(), "box dimension mismatch");
        for (std::size_t i = 0; i < lower.size(); ++i)
            require(lower[i] < upper[i], "box bounds must satisfy lower < upper");
    }

    std::size_t dim() const { return lower.size(); }

    double to_unconstrained(double x, std::size_t i) const {
        const double f = std::clamp((x - lower[i]) / (upper[i] - lower[i]), 1e-12, 1.0 - 1e-12);
        return std::log(f / (1.0 - f));
    }

    double to_box(double z, std::size_t i) const {
        return lower[i] + (upper[i] - lower[i]) * sigmoid(z);
    }

    std::vector<double> to_box(const std::vector<double>& z) const {
        std::vector<double> x(z.size());
        for (std::size_t i = 0; i < z.size(); ++i) x[i] = to_box(z[i], i);
        return x;
    }
};

struct OptResult {
    std::vector<double> best_point;
    double best_value = 0.0;
    int evaluations = 0;
    bool converged = false;
    // (evaluation count, best value, simplex diameter) snapshots per iteration
    std::vector<std::array<double, 3>> history;
};

// Standard Nelder-Mead (reflect 1, expand 2, contract 1/2, shrink 1/2) on the
// unconstrained image of the box. Stops when the simplex diameter and the
// objective spread both fall below tol, or max_eval is exhausted (flagged).
inline OptResult nelder_mead_minimize(const std::function<double(const std::vector<double>&)>& f,
                                      const HyperBox& box, const std::vector<double>& init,
                                      double tol = 1e-8, int max_eval = 500) {
    box.validate();
    const std::size_t d = box.dim();
    require(init.size() == d, "init dimension mismatch");
    require(d >= 1 && d <= 4, "supported dimensions: 1..4");

    OptResult res;
    auto eval = [&](const std::vector<double>& z) {
        ++res.evaluations;
        return f(box.to_box(z));
    };

    std::vector<std::vector<double>> pts(d + 1, std::vector<double>(d));
    std::vector<double> val(d + 1);
    for (std::size_t i = 0; i < d; ++i) pts[0][i] = box.to_unconstrained(init[i], i);
    for (std::size_t v = 1; v <= d; ++v) {
        pts[v] = pts[0];
        pts[v][v - 1] += 0.5; // spread in the transformed coordinates
    }
    for (std::size_t v = 0; v <= d; ++v) val[v] = eval(pts[v]);

    auto order = [&]() {
        std::vector<std::size_t> idx(d + 1);
        for (std::size_t i = 0; i <= d; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](std::size_t a, std::size_t b) { return val[a] < val[b]; });
        std::vector<std::vector<double>> p2(d + 1);
        std::vector<double> v2(d + 1);
        for (std::size_t i = 0; i <= d; ++i) {
            p2[i] = pts[idx[i]];
            v2[i] = val[idx[i]];
        }
        pts.swap(p2);
        val.swap(v2);
    };

    while (res.evaluations < max_eval) {
        order();
        double diam = 0.0;
        for (std::size_t v = 1; v <= d; ++v)
            for (std::size_t i = 0; i < d; ++i)
                diam = std::max(diam, std::abs(pts[v][i] - pts[0][i]));
        res.history.push_back({static_cast<double>(res.evaluations), val[0], diam});
        if (diam < tol || std::abs(val[d] - val[0]) < tol) {
            res.converged = true;
            break;
        }

        std::vector<double> centroid(d, 0.0);
        for (std::size_t v = 0; v < d; ++v)
            for (std::size_t i = 0; i < d; ++i) centroid[i] += pts[v][i] / d;

        auto affine = [&](double coef) {
            std::vector<double> p(d);
            for (std::size_t i = 0; i < d; ++i)
                p[i] = centroid[i] + coef * (pts[d][i] - centroid[i]);
            return p;
        };

        const auto refl = affine(-1.0);
        const double f_r = eval(refl);
        if (f_r < val[0]) {
            const auto expd = affine(-2.0);
            const double f_e = eval(expd);
            if (f_e < f_r) {
                pts[d] = expd;
                val[d] = f_e;
            } else {
                pts[d] = refl;
                val[d] = f_r;
            }
        } else if (f_r < val[d - 1]) {
            pts[d] = refl;
            val[d] = f_r;
        } else {
            const bool outside = f_r < val[d];
            const auto contr = affine(outside ? -0.5 : 0.5);
            const double f_c = eval(contr);
            if (f_c < std::min(f_r, val[d])) {
                pts[d] = contr;
                val[d] = f_c;
            } else {
                for (std::size_t v = 1; v <= d; ++v) { // shrink toward the best
                    for (std::size_t i = 0; i < d; ++i)
                        pts[v][i] = pts[0][i] + 0.5 * (pts[v][i] - pts[0][i]);
                    val[v] = eval(pts[v]);
                }
            }
        }
    }
    order();
    res.best_point = box.to_box(pts[0]);
    res.best_value = val[0];
    return res;
}

} // namespace streplica
