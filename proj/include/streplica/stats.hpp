#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "streplica/common.hpp"

namespace streplica {

struct Histogram {
    std::vector<double> bin_left;
    std::vector<double> bin_right;
    std::vector<double> mass; // sums to 1 unless empty
    bool empty = false;
};

inline Histogram make_histogram(const std::vector<double>& data, int bins) {
    require(bins >= 10, "need at least 10 bins");
    Histogram h;
    if (data.empty()) {
        h.empty = true;
        return h;
    }
    auto [mn_it, mx_it] = std::minmax_element(data.begin(), data.end());
    double lo = *mn_it, hi = *mx_it;
    if (hi <= lo) hi = lo + 1e-12;
    const double width = (hi - lo) / bins;
    h.bin_left.resize(bins);
    h.bin_right.resize(bins);
    h.mass.assign(bins, 0.0);
    for (int b = 0; b < bins; ++b) {
        h.bin_left[b] = lo + b * width;
        h.bin_right[b] = lo + (b + 1) * width;
    }
    const double w = 1.0 / data.size();
    for (double x : data) {
        int b = static_cast<int>((x - lo) / width);
        b = std::clamp(b, 0, bins - 1);
        h.mass[b] += w;
    }
    return h;
}

// Two-sample Kolmogorov-Smirnov statistic.
inline double ks_statistic(std::vector<double> a, std::vector<double> b) {
    require(!a.empty() && !b.empty(), "KS needs non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    std::size_t ia = 0, ib = 0;
    double d = 0.0;
    while (ia < a.size() && ib < b.size()) {
        const double x = std::min(a[ia], b[ib]);
        while (ia < a.size() && a[ia] <= x) ++ia;
        while (ib < b.size() && b[ib] <= x) ++ib;
        d = std::max(d, std::abs(ia / na - ib / nb));
    }
    return d;
}

struct MeanSe {
    double mean = 0.0;
    double se = 0.0;
    int n = 0;
};

inline MeanSe mean_se(const std::vector<double>& v) {
    MeanSe r;
    r.n = static_cast<int>(v.size());
    if (r.n == 0) return r;
    for (double x : v) r.mean += x;
    r.mean /= r.n;
    if (r.n < 2) return r;
    double s2 = 0.0;
    for (double x : v) s2 += (x - r.mean) * (x - r.mean);
    r.se = std::sqrt(s2 / (r.n - 1) / r.n);
    return r;
}

// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "need >= 2 points");
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= x.size();
    my /= y.size();
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        num += (x[i] - mx) * (y[i] - my);
        den += (x[i] - mx) * (x[i] - mx);
    }
    return num / den;
}

} // namespace streplica
