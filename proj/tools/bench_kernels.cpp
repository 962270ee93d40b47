// Microbenchmark for the kernel table: prints GFLOP/s per backend for the
// GEMM shapes the training and integration paths actually hit.

#include <chrono>
#include <cstdio>
#include <vector>

#include "vcmi/kernels.hpp"
#include "vcmi/rng.hpp"

using namespace vcmi;
namespace K = vcmi::kernels;

static double now_s() {
    using clock = std::chrono::steady_clock;
    return std::chrono::duration<double>(clock::now().time_since_epoch()).count();
}

static void bench_gemm(const char* label, K::Backend b, int m, int n, int k, int which) {
    Rng rng(1);
    std::vector<double> A(static_cast<size_t>(m) * k), B, C(static_cast<size_t>(m) * n);
    for (auto& x : A) x = rng.normal();
    B.resize(which == 0 ? static_cast<size_t>(n) * k : static_cast<size_t>(k) * n);
    for (auto& x : B) x = rng.normal();
    std::vector<double> At(static_cast<size_t>(k) * m);
    for (auto& x : At) x = rng.normal();

    const auto& t = K::table_for(b);
    double flops = 2.0 * m * n * k;
    int reps = static_cast<int>(2e9 / flops) + 1;
    double t0 = now_s();
    for (int r = 0; r < reps; ++r) {
        if (which == 0) t.gemm_nt(m, n, k, A.data(), B.data(), C.data(), false);
        if (which == 1) t.gemm_nn(m, n, k, A.data(), B.data(), C.data(), false);
        if (which == 2) t.gemm_tn(m, n, k, At.data(), B.data(), C.data(), false);
    }
    double dt = now_s() - t0;
    std::printf("%-8s %-7s m=%-5d n=%-4d k=%-4d  %7.2f GFLOP/s\n", label,
                K::backend_name(b).c_str(), m, n, k, flops * reps / dt / 1e9);
}

int main() {
    std::printf("cpu avx2+fma: %s\n", K::cpu_supports_avx2() ? "yes" : "no");
    for (K::Backend b : {K::Backend::scalar, K::Backend::avx2}) {
        if (b == K::Backend::avx2 && !K::cpu_supports_avx2()) break;
        // MLP forward on a training batch and on a full-dataset integration step
        bench_gemm("gemm_nt", b, 512, 256, 256, 0);
        bench_gemm("gemm_nt", b, 10000, 256, 256, 0);
        // backward data/weight passes
        bench_gemm("gemm_nn", b, 512, 256, 256, 1);
        bench_gemm("gemm_tn", b, 256, 256, 512, 2);
    }
    return 0;
}
