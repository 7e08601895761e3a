#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "streplica/rng.hpp"

using namespace streplica;

TEST_CASE("streams are deterministic and keyed") {
    Rng a(42, "x", 1), b(42, "x", 1), c(42, "x", 2), d(42, "y", 1), e(43, "x", 1);
    std::vector<std::uint64_t> va, vb;
    for (int i = 0; i < 64; ++i) {
        va.push_back(a.next_u64());
        vb.push_back(b.next_u64());
    }
    CHECK(va == vb);
    bool differs_c = false, differs_d = false, differs_e = false;
    for (int i = 0; i < 64; ++i) {
        differs_c |= c.next_u64() != va[i];
        differs_d |= d.next_u64() != va[i];
        differs_e |= e.next_u64() != va[i];
    }
    CHECK(differs_c);
    CHECK(differs_d);
    CHECK(differs_e);
}

TEST_CASE("uniform moments") {
    Rng r(1, "uniform");
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0;
    for (int i = 0; i < n; ++i) {
        const double u = r.next_double();
        CHECK(u >= 0.0);
        CHECK(u < 1.0);
        s1 += u;
        s2 += u * u;
    }
    CHECK(std::abs(s1 / n - 0.5) < 4.0 / std::sqrt(12.0 * n));
    CHECK(std::abs(s2 / n - 1.0 / 3.0) < 5e-3);
}

TEST_CASE("normal moments") {
    Rng r(2, "normal");
    const int n = 400000;
    double s1 = 0, s2 = 0, s4 = 0;
    for (int i = 0; i < n; ++i) {
        const double z = r.next_normal();
        s1 += z;
        s2 += z * z;
        s4 += z * z * z * z;
    }
    CHECK(std::abs(s1 / n) < 4.0 / std::sqrt(static_cast<double>(n)));
    CHECK(std::abs(s2 / n - 1.0) < 0.01);
    CHECK(std::abs(s4 / n - 3.0) < 0.08);
}
