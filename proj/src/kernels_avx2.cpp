// AVX2+FMA kernel variants. This translation unit is the only one compiled
// with -mavx2 -mfma; everything else stays at the baseline ISA and reaches
// these through the dispatch table. adam_update deliberately avoids FMA so
// its per-element rounding matches the scalar reference exactly.

#include "vcmi/kernels.hpp"

#if defined(__AVX2__) && defined(__FMA__)

#include <immintrin.h>

namespace vcmi::kernels {
namespace {

inline double hsum(__m256d v) {
    __m128d lo = _mm256_castpd256_pd128(v);
    __m128d hi = _mm256_extractf128_pd(v, 1);
    lo = _mm_add_pd(lo, hi);
    __m128d sh = _mm_unpackhi_pd(lo, lo);
    lo = _mm_add_sd(lo, sh);
    return _mm_cvtsd_f64(lo);
}

double dot_avx2(const double* a, const double* b, int n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    __m256d acc2 = _mm256_setzero_pd();
    __m256d acc3 = _mm256_setzero_pd();
    int i = 0;
    for (; i + 16 <= n; i += 16) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
        acc1 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 4), _mm256_loadu_pd(b + i + 4), acc1);
        acc2 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 8), _mm256_loadu_pd(b + i + 8), acc2);
        acc3 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i + 12), _mm256_loadu_pd(b + i + 12), acc3);
    }
    for (; i + 4 <= n; i += 4) {
        acc0 = _mm256_fmadd_pd(_mm256_loadu_pd(a + i), _mm256_loadu_pd(b + i), acc0);
    }
    double s = hsum(_mm256_add_pd(_mm256_add_pd(acc0, acc1), _mm256_add_pd(acc2, acc3)));
    for (; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_avx2(int n, double alpha, const double* x, double* y) {
    __m256d va = _mm256_set1_pd(alpha);
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d vy = _mm256_loadu_pd(y + i);
        vy = _mm256_fmadd_pd(va, _mm256_loadu_pd(x + i), vy);
        _mm256_storeu_pd(y + i, vy);
    }
    for (; i < n; ++i) y[i] += alpha * x[i];
}

// C = A * B^T with a 4x2 register block over rows of A and rows of B.
void gemm_nt_avx2(int m, int n, int k, const double* A, const double* B,
                  double* C, bool accumulate) {
    int i = 0;
    for (; i + 4 <= m; i += 4) {
        const double* a0 = A + static_cast<size_t>(i) * k;
        const double* a1 = a0 + k;
        const double* a2 = a1 + k;
        const double* a3 = a2 + k;
        int j = 0;
        for (; j + 2 <= n; j += 2) {
            const double* b0 = B + static_cast<size_t>(j) * k;
            const double* b1 = b0 + k;
            __m256d c00 = _mm256_setzero_pd(), c01 = _mm256_setzero_pd();
            __m256d c10 = _mm256_setzero_pd(), c11 = _mm256_setzero_pd();
            __m256d c20 = _mm256_setzero_pd(), c21 = _mm256_setzero_pd();
            __m256d c30 = _mm256_setzero_pd(), c31 = _mm256_setzero_pd();
            int p = 0;
            for (; p + 4 <= k; p += 4) {
                __m256d vb0 = _mm256_loadu_pd(b0 + p);
                __m256d vb1 = _mm256_loadu_pd(b1 + p);
                __m256d va = _mm256_loadu_pd(a0 + p);
                c00 = _mm256_fmadd_pd(va, vb0, c00);
                c01 = _mm256_fmadd_pd(va, vb1, c01);
                va = _mm256_loadu_pd(a1 + p);
                c10 = _mm256_fmadd_pd(va, vb0, c10);
                c11 = _mm256_fmadd_pd(va, vb1, c11);
                va = _mm256_loadu_pd(a2 + p);
                c20 = _mm256_fmadd_pd(va, vb0, c20);
                c21 = _mm256_fmadd_pd(va, vb1, c21);
                va = _mm256_loadu_pd(a3 + p);
                c30 = _mm256_fmadd_pd(va, vb0, c30);
                c31 = _mm256_fmadd_pd(va, vb1, c31);
            }
            double s[8] = {hsum(c00), hsum(c01), hsum(c10), hsum(c11),
                           hsum(c20), hsum(c21), hsum(c30), hsum(c31)};
            for (; p < k; ++p) {
                s[0] += a0[p] * b0[p];
                s[1] += a0[p] * b1[p];
                s[2] += a1[p] * b0[p];
                s[3] += a1[p] * b1[p];
                s[4] += a2[p] * b0[p];
                s[5] += a2[p] * b1[p];
                s[6] += a3[p] * b0[p];
                s[7] += a3[p] * b1[p];
            }
            for (int r = 0; r < 4; ++r) {
                double* c = C + static_cast<size_t>(i + r) * n + j;
                if (accumulate) {
                    c[0] += s[2 * r];
                    c[1] += s[2 * r + 1];
                } else {
                    c[0] = s[2 * r];
                    c[1] = s[2 * r + 1];
                }
            }
        }
        for (; j < n; ++j) {
            const double* bj = B + static_cast<size_t>(j) * k;
            const double* ar[4] = {a0, a1, a2, a3};
            for (int r = 0; r < 4; ++r) {
                double s = dot_avx2(ar[r], bj, k);
                double* c = C + static_cast<size_t>(i + r) * n + j;
                *c = accumulate ? *c + s : s;
            }
        }
    }
    for (; i < m; ++i) {
        const double* ai = A + static_cast<size_t>(i) * k;
        for (int j = 0; j < n; ++j) {
            double s = dot_avx2(ai, B + static_cast<size_t>(j) * k, k);
            double* c = C + static_cast<size_t>(i) * n + j;
            *c = accumulate ? *c + s : s;
        }
    }
}

// Shared inner structure for C = A*B and C = A^T*B: loop over the reduction
// index p broadcasting entries of A, streaming rows of B, with a 2x8 block of
// C held in registers. a_stride selects between the two A layouts.
template <bool Transposed>
void gemm_saxpy_avx2(int m, int n, int k, const double* A, const double* B,
                     double* C, bool accumulate) {
    if (!accumulate) {
        for (size_t t = 0; t < static_cast<size_t>(m) * n; ++t) C[t] = 0.0;
    }
    auto a_at = [&](int p, int i) -> double {
        return Transposed ? A[static_cast<size_t>(p) * m + i]
                          : A[static_cast<size_t>(i) * k + p];
    };
    int i = 0;
    for (; i + 2 <= m; i += 2) {
        double* c0 = C + static_cast<size_t>(i) * n;
        double* c1 = c0 + n;
        int j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d acc00 = _mm256_loadu_pd(c0 + j);
            __m256d acc01 = _mm256_loadu_pd(c0 + j + 4);
            __m256d acc10 = _mm256_loadu_pd(c1 + j);
            __m256d acc11 = _mm256_loadu_pd(c1 + j + 4);
            for (int p = 0; p < k; ++p) {
                const double* bp = B + static_cast<size_t>(p) * n + j;
                __m256d vb0 = _mm256_loadu_pd(bp);
                __m256d vb1 = _mm256_loadu_pd(bp + 4);
                __m256d va0 = _mm256_set1_pd(a_at(p, i));
                __m256d va1 = _mm256_set1_pd(a_at(p, i + 1));
                acc00 = _mm256_fmadd_pd(va0, vb0, acc00);
                acc01 = _mm256_fmadd_pd(va0, vb1, acc01);
                acc10 = _mm256_fmadd_pd(va1, vb0, acc10);
                acc11 = _mm256_fmadd_pd(va1, vb1, acc11);
            }
            _mm256_storeu_pd(c0 + j, acc00);
            _mm256_storeu_pd(c0 + j + 4, acc01);
            _mm256_storeu_pd(c1 + j, acc10);
            _mm256_storeu_pd(c1 + j + 4, acc11);
        }
        for (; j < n; ++j) {
            double s0 = 0.0, s1 = 0.0;
            for (int p = 0; p < k; ++p) {
                double bpj = B[static_cast<size_t>(p) * n + j];
                s0 += a_at(p, i) * bpj;
                s1 += a_at(p, i + 1) * bpj;
            }
            c0[j] += s0;
            c1[j] += s1;
        }
    }
    if (i < m) {
        double* c0 = C + static_cast<size_t>(i) * n;
        int j = 0;
        for (; j + 8 <= n; j += 8) {
            __m256d acc0 = _mm256_loadu_pd(c0 + j);
            __m256d acc1 = _mm256_loadu_pd(c0 + j + 4);
            for (int p = 0; p < k; ++p) {
                const double* bp = B + static_cast<size_t>(p) * n + j;
                __m256d va = _mm256_set1_pd(a_at(p, i));
                acc0 = _mm256_fmadd_pd(va, _mm256_loadu_pd(bp), acc0);
                acc1 = _mm256_fmadd_pd(va, _mm256_loadu_pd(bp + 4), acc1);
            }
            _mm256_storeu_pd(c0 + j, acc0);
            _mm256_storeu_pd(c0 + j + 4, acc1);
        }
        for (; j < n; ++j) {
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += a_at(p, i) * B[static_cast<size_t>(p) * n + j];
            c0[j] += s;
        }
    }
}

void gemm_nn_avx2(int m, int n, int k, const double* A, const double* B,
                  double* C, bool accumulate) {
    gemm_saxpy_avx2<false>(m, n, k, A, B, C, accumulate);
}

void gemm_tn_avx2(int m, int n, int k, const double* A, const double* B,
                  double* C, bool accumulate) {
    gemm_saxpy_avx2<true>(m, n, k, A, B, C, accumulate);
}

void rowdot_avx2(int rows, int cols, const double* A, const double* B,
                 double* out) {
    for (int i = 0; i < rows; ++i) {
        out[i] = dot_avx2(A + static_cast<size_t>(i) * cols,
                          B + static_cast<size_t>(i) * cols, cols);
    }
}

void adam_update_avx2(int n, double* p, const double* g, double* m, double* v,
                      double lr, double b1, double b2, double eps, double b1t,
                      double b2t) {
    const __m256d vb1 = _mm256_set1_pd(b1);
    const __m256d vb2 = _mm256_set1_pd(b2);
    const __m256d vob1 = _mm256_set1_pd(1.0 - b1);
    const __m256d vob2 = _mm256_set1_pd(1.0 - b2);
    const __m256d vmc = _mm256_set1_pd(1.0 / (1.0 - b1t));
    const __m256d vvc = _mm256_set1_pd(1.0 / (1.0 - b2t));
    const __m256d vlr = _mm256_set1_pd(lr);
    const __m256d veps = _mm256_set1_pd(eps);
    int i = 0;
    for (; i + 4 <= n; i += 4) {
        __m256d gi = _mm256_loadu_pd(g + i);
        __m256d mi = _mm256_add_pd(_mm256_mul_pd(vb1, _mm256_loadu_pd(m + i)),
                                   _mm256_mul_pd(vob1, gi));
        __m256d vi = _mm256_add_pd(_mm256_mul_pd(vb2, _mm256_loadu_pd(v + i)),
                                   _mm256_mul_pd(vob2, _mm256_mul_pd(gi, gi)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        __m256d mhat = _mm256_mul_pd(mi, vmc);
        __m256d vhat = _mm256_mul_pd(vi, vvc);
        __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat),
                                     _mm256_add_pd(_mm256_sqrt_pd(vhat), veps));
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
    }
    if (i < n) {
        double mc = 1.0 / (1.0 - b1t);
        double vc = 1.0 / (1.0 - b2t);
        for (; i < n; ++i) {
            double gi = g[i];
            double mi = b1 * m[i] + (1.0 - b1) * gi;
            double vi = b2 * v[i] + (1.0 - b2) * (gi * gi);
            m[i] = mi;
            v[i] = vi;
            double num = lr * (mi * mc);
            double den = __builtin_sqrt(vi * vc) + eps;
            p[i] -= num / den;
        }
    }
}

double reduce_sum_avx2(const double* x, int n) {
    __m256d acc0 = _mm256_setzero_pd();
    __m256d acc1 = _mm256_setzero_pd();
    int i = 0;
    for (; i + 8 <= n; i += 8) {
        acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
        acc1 = _mm256_add_pd(acc1, _mm256_loadu_pd(x + i + 4));
    }
    for (; i + 4 <= n; i += 4) acc0 = _mm256_add_pd(acc0, _mm256_loadu_pd(x + i));
    double s = hsum(_mm256_add_pd(acc0, acc1));
    for (; i < n; ++i) s += x[i];
    return s;
}

}  // namespace

const Table& avx2_table() {
    static const Table t = {
        dot_avx2,       axpy_avx2,        gemm_nt_avx2,
        gemm_nn_avx2,   gemm_tn_avx2,     rowdot_avx2,
        adam_update_avx2, reduce_sum_avx2,
    };
    return t;
}

}  // namespace vcmi::kernels

#else  // not an AVX2+FMA build of this TU: alias the scalar table.

namespace vcmi::kernels {
const Table& scalar_table();
const Table& avx2_table() { return scalar_table(); }
}  // namespace vcmi::kernels

#endif
