#pragma once

#include <string>

namespace vcmi::kernels {

// Numeric inner loops used by the training and fitting paths. Every entry has
// a scalar reference implementation and an AVX2+FMA variant; the active table
// is chosen once at startup from CPU detection, overridable through the
// VCMI_KERNELS environment variable or set_backend(). All matrices are packed
// row-major with no leading-dimension padding.
struct Table {
    // sum_i a[i] * b[i]
    double (*dot)(const double* a, const double* b, int n);
    // y[i] += alpha * x[i]
    void (*axpy)(int n, double alpha, const double* x, double* y);
    // C[m x n] = A[m x k] * B[n x k]^T, optionally accumulating into C.
    void (*gemm_nt)(int m, int n, int k, const double* A, const double* B,
                    double* C, bool accumulate);
    // C[m x n] = A[m x k] * B[k x n], optionally accumulating into C.
    void (*gemm_nn)(int m, int n, int k, const double* A, const double* B,
                    double* C, bool accumulate);
    // C[m x n] = A[k x m]^T * B[k x n], optionally accumulating into C.
    void (*gemm_tn)(int m, int n, int k, const double* A, const double* B,
                    double* C, bool accumulate);
    // out[i] = dot(A row i, B row i)
    void (*rowdot)(int rows, int cols, const double* A, const double* B,
                   double* out);
    // Fused Adam update over n parameters. b1t, b2t are beta1^step, beta2^step.
    // Written without FMA contraction so scalar and SIMD agree bit-for-bit.
    void (*adam_update)(int n, double* p, const double* g, double* m, double* v,
                        double lr, double b1, double b2, double eps, double b1t,
                        double b2t);
    double (*reduce_sum)(const double* x, int n);
};

enum class Backend { scalar, avx2 };

// True when the CPU reports AVX2 and FMA.
bool cpu_supports_avx2();

// Table for an explicit backend (equivalence tests). Requesting avx2 on a
// CPU without it throws.
const Table& table_for(Backend b);

// Active table. First use resolves VCMI_KERNELS ("scalar" | "avx2"), falling
// back to CPU detection.
const Table& active();
Backend active_backend();
void set_backend(Backend b);
std::string backend_name(Backend b);

}  // namespace vcmi::kernels
