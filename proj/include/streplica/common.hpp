#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <stdexcept>
#include <string>
#include <vector>

namespace streplica {

constexpr double kPi = 3.14159265358979323846;

// Gaussian upper-tail probability H(x) = \int_x^\infty d\xi e^{-\xi^2/2}/sqrt(2 pi).
inline double gauss_tail(double x) { return 0.5 * std::erfc(x / std::sqrt(2.0)); }

inline double gauss_pdf(double x, double mean, double var) {
    const double d = x - mean;
    return std::exp(-0.5 * d * d / var) / std::sqrt(2.0 * kPi * var);
}

// log(1 + e^x) without overflow; used by the cross-entropy evaluations.
inline double log1pexp(double x) {
    if (x > 36.0) return x + std::exp(-x);
    if (x < -36.0) return std::exp(x);
    return std::log1p(std::exp(x));
}

inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

// sigma(x) * (1 - sigma(x)), evaluated without cancellation for large |x|.
inline double sigmoid_deriv(double x) {
    const double s = sigmoid(-std::abs(x));
    return s * (1.0 - s);
}

inline bool all_finite(const std::vector<double>& v) {
    for (double x : v)
        if (!std::isfinite(x)) return false;
    return true;
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw std::invalid_argument(msg);
}

// Thrown when an iterative routine exhausts its budget in a context where no
// flagged partial result can be returned.
struct numerical_error : std::runtime_error {
    explicit numerical_error(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace streplica
