#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "streplica/common.hpp"
#include "streplica/rng.hpp"

namespace streplica {

enum class QuadBackend { gauss_hermite, monte_carlo };

inline std::string to_string(QuadBackend b) {
    return b == QuadBackend::gauss_hermite ? "gauss_hermite" : "monte_carlo";
}

inline QuadBackend quad_backend_from_string(const std::string& s) {
    if (s == "gauss_hermite") return QuadBackend::gauss_hermite;
    if (s == "monte_carlo") return QuadBackend::monte_carlo;
    throw std::invalid_argument("unknown quadrature backend: " + s);
}

// Gauss-Hermite is exact enough at Gamma = 0 where all integrands are smooth;
// the PLS indicator (Gamma > 0) needs Monte Carlo with frozen samples.
struct QuadratureSpec {
    QuadBackend backend = QuadBackend::gauss_hermite;
    int gh_nodes = 80;
    long mc_samples = 200000;
    std::uint64_t seed = 0;

    void validate() const {
        require(gh_nodes >= 20, "gh_nodes must be >= 20");
        require(mc_samples >= 1000, "mc_samples must be >= 1000");
    }
};

// Nodes/weights for E_{z ~ N(0,1)}[f(z)] ~= sum_i weight[i] * f(node[i]).
// Golub-Welsch on the probabilists' Hermite Jacobi matrix (diagonal zero,
// off-diagonal sqrt(k)); nodes are the eigenvalues and each weight is the
// squared first component of the corresponding eigenvector. Stable for any
// practical node count, unlike Newton iteration on the recurrence.
struct GaussHermite {
    std::vector<double> node;
    std::vector<double> weight;

    explicit GaussHermite(int n) {
        require(n >= 2, "need at least 2 Gauss-Hermite nodes");
        node.assign(n, 0.0);
        std::vector<double> e(n, 0.0); // subdiagonal, e[1..n-1]
        for (int k = 1; k < n; ++k) e[k] = std::sqrt(static_cast<double>(k));
        // first row of the eigenvector matrix, accumulated through the QL sweeps
        std::vector<double> first(n, 0.0);
        first[0] = 1.0;
        tql_first_row(node, e, first);
        // sort ascending, weights = squared first components
        std::vector<int> idx(n);
        for (int i = 0; i < n; ++i) idx[i] = i;
        std::sort(idx.begin(), idx.end(), [&](int a, int b) { return node[a] < node[b]; });
        std::vector<double> nd(n), wt(n);
        for (int i = 0; i < n; ++i) {
            nd[i] = node[idx[i]];
            wt[i] = first[idx[i]] * first[idx[i]];
        }
        node = std::move(nd);
        weight = std::move(wt);
    }

  private:
    // Symmetric tridiagonal QL with implicit shifts (classic tql2), tracking
    // only the first row of the eigenvector matrix.
    static void tql_first_row(std::vector<double>& d, std::vector<double>& e,
                              std::vector<double>& z) {
        const int n = static_cast<int>(d.size());
        for (int i = 1; i < n; ++i) e[i - 1] = e[i];
        e[n - 1] = 0.0;
        for (int l = 0; l < n; ++l) {
            int iter = 0;
            int m;
            do {
                for (m = l; m < n - 1; ++m) {
                    const double dd = std::abs(d[m]) + std::abs(d[m + 1]);
                    if (std::abs(e[m]) <= 1e-300 + 2.3e-16 * dd) break;
                }
                if (m != l) {
                    if (iter++ == 60) throw numerical_error("quadrature eigen solve stalled");
                    double g = (d[l + 1] - d[l]) / (2.0 * e[l]);
                    double r = std::hypot(g, 1.0);
                    g = d[m] - d[l] + e[l] / (g + (g >= 0 ? std::abs(r) : -std::abs(r)));
                    double s = 1.0, c = 1.0, p = 0.0;
                    for (int i = m - 1; i >= l; --i) {
                        double f = s * e[i];
                        const double b = c * e[i];
                        r = std::hypot(f, g);
                        e[i + 1] = r;
                        if (r == 0.0) {
                            d[i + 1] -= p;
                            e[m] = 0.0;
                            break;
                        }
                        s = f / r;
                        c = g / r;
                        g = d[i + 1] - p;
                        r = (d[i] - g) * s + 2.0 * c * b;
                        p = s * r;
                        d[i + 1] = g + p;
                        g = c * r - b;
                        f = z[i + 1];
                        z[i + 1] = s * z[i] + c * f;
                        z[i] = c * z[i] - s * f;
                    }
                    d[l] -= p;
                    e[l] = g;
                    e[m] = 0.0;
                }
            } while (m != l);
        }
    }
};

// One (y, xi1, xi2) sample set, drawn once per ST step and reused across all
// fixed-point sweeps at that step (common random numbers make the stochastic
// fixed point deterministic). xi are standard normals; the Delta scaling is
// applied at the point of use.
struct FrozenSamples {
    std::vector<int> y;
    std::vector<double> xi1;
    std::vector<double> xi2;

    FrozenSamples(long n, double rho, std::uint64_t seed, int t) {
        y.resize(n);
        xi1.resize(n);
        xi2.resize(n);
        Rng rng(seed, "mc-samples", static_cast<std::uint64_t>(t));
        for (long i = 0; i < n; ++i) {
            y[i] = rng.next_bernoulli(rho) ? 1 : 0;
            xi1[i] = rng.next_normal();
            xi2[i] = rng.next_normal();
        }
    }
};

} // namespace streplica
