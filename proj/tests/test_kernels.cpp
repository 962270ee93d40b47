#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>
#include <cstring>
#include <vector>

#include "vcmi/errors.hpp"
#include "vcmi/kernels.hpp"
#include "vcmi/rng.hpp"

using vcmi::Rng;
namespace K = vcmi::kernels;

namespace {

std::vector<double> random_vec(Rng& rng, int n, double scale = 1.0) {
    std::vector<double> v(n);
    for (auto& x : v) x = scale * rng.normal();
    return v;
}

bool have_avx2() { return K::cpu_supports_avx2(); }

// Max |a-b| over an array, as a multiple of the magnitude of the data.
double max_rel_diff(const std::vector<double>& a, const std::vector<double>& b) {
    REQUIRE(a.size() == b.size());
    double m = 0.0, scale = 1.0;
    for (size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a[i] - b[i]));
        scale = std::max(scale, std::fabs(b[i]));
    }
    return m / scale;
}

}  // namespace

TEST_CASE("dot: hand-computed anchor") {
    const double a[] = {1.0, 2.0, 3.0, 4.0, 5.0};
    const double b[] = {2.0, -1.0, 0.5, 0.0, 3.0};
    const double expect = 2.0 - 2.0 + 1.5 + 0.0 + 15.0;
    CHECK(K::table_for(K::Backend::scalar).dot(a, b, 5) == doctest::Approx(expect).epsilon(1e-15));
    if (have_avx2())
        CHECK(K::table_for(K::Backend::avx2).dot(a, b, 5) == doctest::Approx(expect).epsilon(1e-14));
}

TEST_CASE("gemm_nt: hand-computed anchor") {
    // A = [[1,2],[3,4],[5,6]] (3x2), B = [[1,1],[2,0]] (2x2), C = A*B^T (3x2)
    const double A[] = {1, 2, 3, 4, 5, 6};
    const double B[] = {1, 1, 2, 0};
    const double expect[] = {3, 2, 7, 6, 11, 10};
    double C[6];
    K::table_for(K::Backend::scalar).gemm_nt(3, 2, 2, A, B, C, false);
    for (int i = 0; i < 6; ++i) CHECK(C[i] == doctest::Approx(expect[i]).epsilon(1e-15));
    if (have_avx2()) {
        double C2[6];
        K::table_for(K::Backend::avx2).gemm_nt(3, 2, 2, A, B, C2, false);
        for (int i = 0; i < 6; ++i) CHECK(C2[i] == doctest::Approx(expect[i]).epsilon(1e-14));
    }
}

TEST_CASE("gemm variants: scalar vs avx2 across shapes incl. remainders") {
    if (!have_avx2()) return;
    Rng rng(42);
    const auto& sc = K::table_for(K::Backend::scalar);
    const auto& vx = K::table_for(K::Backend::avx2);
    const int shapes[][3] = {{1, 1, 1},   {2, 3, 5},    {4, 2, 4},   {5, 7, 9},
                             {8, 8, 8},   {16, 16, 16}, {17, 9, 33}, {33, 31, 17},
                             {64, 48, 80}, {3, 8, 1},   {128, 64, 96}};
    for (auto [m, n, k] : shapes) {
        CAPTURE(m);
        CAPTURE(n);
        CAPTURE(k);
        auto A = random_vec(rng, m * k);
        auto At = random_vec(rng, k * m);
        auto Bnt = random_vec(rng, n * k);
        auto Bnn = random_vec(rng, k * n);
        std::vector<double> C0(m * n), C1(m * n);

        sc.gemm_nt(m, n, k, A.data(), Bnt.data(), C0.data(), false);
        vx.gemm_nt(m, n, k, A.data(), Bnt.data(), C1.data(), false);
        CHECK(max_rel_diff(C1, C0) < 1e-12);

        sc.gemm_nn(m, n, k, A.data(), Bnn.data(), C0.data(), false);
        vx.gemm_nn(m, n, k, A.data(), Bnn.data(), C1.data(), false);
        CHECK(max_rel_diff(C1, C0) < 1e-12);

        sc.gemm_tn(m, n, k, At.data(), Bnn.data(), C0.data(), false);
        vx.gemm_tn(m, n, k, At.data(), Bnn.data(), C1.data(), false);
        CHECK(max_rel_diff(C1, C0) < 1e-12);

        // accumulate=true adds on top of existing contents
        auto base = random_vec(rng, m * n);
        C0 = base;
        C1 = base;
        sc.gemm_nt(m, n, k, A.data(), Bnt.data(), C0.data(), true);
        vx.gemm_nt(m, n, k, A.data(), Bnt.data(), C1.data(), true);
        CHECK(max_rel_diff(C1, C0) < 1e-12);
    }
}

TEST_CASE("gemm accumulate adds exactly one product term") {
    Rng rng(7);
    const auto& sc = K::table_for(K::Backend::scalar);
    int m = 5, n = 6, k = 7;
    auto A = random_vec(rng, m * k);
    auto B = random_vec(rng, n * k);
    std::vector<double> C(m * n, 0.0), D(m * n);
    sc.gemm_nt(m, n, k, A.data(), B.data(), C.data(), false);
    D = C;
    sc.gemm_nt(m, n, k, A.data(), B.data(), D.data(), true);
    for (int i = 0; i < m * n; ++i) CHECK(D[i] == doctest::Approx(2.0 * C[i]).epsilon(1e-13));
}

TEST_CASE("axpy and rowdot and reduce_sum: scalar vs avx2") {
    if (!have_avx2()) return;
    Rng rng(11);
    const auto& sc = K::table_for(K::Backend::scalar);
    const auto& vx = K::table_for(K::Backend::avx2);
    for (int n : {1, 3, 4, 5, 17, 256, 1003}) {
        auto x = random_vec(rng, n);
        auto y0 = random_vec(rng, n);
        auto y1 = y0;
        sc.axpy(n, 0.37, x.data(), y0.data());
        vx.axpy(n, 0.37, x.data(), y1.data());
        CHECK(max_rel_diff(y1, y0) < 1e-14);

        auto a = random_vec(rng, 8 * n);
        auto b = random_vec(rng, 8 * n);
        std::vector<double> r0(8), r1(8);
        sc.rowdot(8, n, a.data(), b.data(), r0.data());
        vx.rowdot(8, n, a.data(), b.data(), r1.data());
        CHECK(max_rel_diff(r1, r0) < 1e-12);

        double s0 = sc.reduce_sum(x.data(), n);
        double s1 = vx.reduce_sum(x.data(), n);
        CHECK(std::fabs(s1 - s0) < 1e-12 * (1.0 + std::fabs(s0)));
    }
}

TEST_CASE("adam_update: avx2 matches scalar bit-for-bit") {
    if (!have_avx2()) return;
    Rng rng(5);
    const auto& sc = K::table_for(K::Backend::scalar);
    const auto& vx = K::table_for(K::Backend::avx2);
    int n = 1037;  // forces a vector remainder
    auto p0 = random_vec(rng, n);
    auto m0 = std::vector<double>(n, 0.0), v0 = std::vector<double>(n, 0.0);
    auto p1 = p0, m1 = m0, v1 = v0;
    double b1 = 0.9, b2 = 0.999, lr = 5e-4, eps = 1e-8;
    double b1t = 1.0, b2t = 1.0;
    for (int step = 1; step <= 7; ++step) {
        b1t *= b1;
        b2t *= b2;
        auto g = random_vec(rng, n);
        sc.adam_update(n, p0.data(), g.data(), m0.data(), v0.data(), lr, b1, b2, eps, b1t, b2t);
        vx.adam_update(n, p1.data(), g.data(), m1.data(), v1.data(), lr, b1, b2, eps, b1t, b2t);
    }
    CHECK(std::memcmp(p0.data(), p1.data(), n * sizeof(double)) == 0);
    CHECK(std::memcmp(m0.data(), m1.data(), n * sizeof(double)) == 0);
    CHECK(std::memcmp(v0.data(), v1.data(), n * sizeof(double)) == 0);
}

TEST_CASE("adam_update: single-step hand value") {
    // One parameter at 0, gradient 1, fresh state, lr=0.1: the bias-corrected
    // moments are exactly g and g^2, so the step is -lr/(1+eps*...) ~ -0.1.
    const auto& sc = K::table_for(K::Backend::scalar);
    double p = 0.0, m = 0.0, v = 0.0, g = 1.0;
    double b1 = 0.9, b2 = 0.999, eps = 1e-8;
    sc.adam_update(1, &p, &g, &m, &v, 0.1, b1, b2, eps, b1, b2);
    CHECK(p == doctest::Approx(-0.1 / (1.0 + eps)).epsilon(1e-12));
}

TEST_CASE("backend dispatch and override") {
    K::Backend prev = K::active_backend();
    K::set_backend(K::Backend::scalar);
    CHECK(K::active_backend() == K::Backend::scalar);
    const double a[] = {1.0, 2.0};
    CHECK(K::active().dot(a, a, 2) == doctest::Approx(5.0));
    if (have_avx2()) {
        K::set_backend(K::Backend::avx2);
        CHECK(K::active_backend() == K::Backend::avx2);
        CHECK(K::active().dot(a, a, 2) == doctest::Approx(5.0));
    } else {
        CHECK_THROWS_AS(K::table_for(K::Backend::avx2), vcmi::ConfigError);
    }
    K::set_backend(prev);
    CHECK(K::backend_name(K::Backend::scalar) == "scalar");
    CHECK(K::backend_name(K::Backend::avx2) == "avx2");
}
