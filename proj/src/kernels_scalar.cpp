#include <cmath>

#include "vcmi/kernels.hpp"

namespace vcmi::kernels {
namespace {

double dot_scalar(const double* a, const double* b, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += a[i] * b[i];
    return s;
}

void axpy_scalar(int n, double alpha, const double* x, double* y) {
    for (int i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void gemm_nt_scalar(int m, int n, int k, const double* A, const double* B,
                    double* C, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        const double* ai = A + static_cast<size_t>(i) * k;
        double* ci = C + static_cast<size_t>(i) * n;
        for (int j = 0; j < n; ++j) {
            const double* bj = B + static_cast<size_t>(j) * k;
            double s = 0.0;
            for (int p = 0; p < k; ++p) s += ai[p] * bj[p];
            ci[j] = accumulate ? ci[j] + s : s;
        }
    }
}

void gemm_nn_scalar(int m, int n, int k, const double* A, const double* B,
                    double* C, bool accumulate) {
    for (int i = 0; i < m; ++i) {
        double* ci = C + static_cast<size_t>(i) * n;
        if (!accumulate) {
            for (int j = 0; j < n; ++j) ci[j] = 0.0;
        }
        const double* ai = A + static_cast<size_t>(i) * k;
        for (int p = 0; p < k; ++p) {
            double aip = ai[p];
            const double* bp = B + static_cast<size_t>(p) * n;
            for (int j = 0; j < n; ++j) ci[j] += aip * bp[j];
        }
    }
}

void gemm_tn_scalar(int m, int n, int k, const double* A, const double* B,
                    double* C, bool accumulate) {
    if (!accumulate) {
        for (size_t i = 0; i < static_cast<size_t>(m) * n; ++i) C[i] = 0.0;
    }
    for (int p = 0; p < k; ++p) {
        const double* ap = A + static_cast<size_t>(p) * m;
        const double* bp = B + static_cast<size_t>(p) * n;
        for (int i = 0; i < m; ++i) {
            double api = ap[i];
            double* ci = C + static_cast<size_t>(i) * n;
            for (int j = 0; j < n; ++j) ci[j] += api * bp[j];
        }
    }
}

void rowdot_scalar(int rows, int cols, const double* A, const double* B,
                   double* out) {
    for (int i = 0; i < rows; ++i) {
        out[i] = dot_scalar(A + static_cast<size_t>(i) * cols,
                            B + static_cast<size_t>(i) * cols, cols);
    }
}

void adam_update_scalar(int n, double* p, const double* g, double* m, double* v,
                        double lr, double b1, double b2, double eps, double b1t,
                        double b2t) {
    double mc = 1.0 / (1.0 - b1t);
    double vc = 1.0 / (1.0 - b2t);
    for (int i = 0; i < n; ++i) {
        double gi = g[i];
        double mi = b1 * m[i] + (1.0 - b1) * gi;
        double vi = b2 * v[i] + (1.0 - b2) * (gi * gi);
        m[i] = mi;
        v[i] = vi;
        double mhat = mi * mc;
        double vhat = vi * vc;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

double reduce_sum_scalar(const double* x, int n) {
    double s = 0.0;
    for (int i = 0; i < n; ++i) s += x[i];
    return s;
}

}  // namespace

const Table& scalar_table() {
    static const Table t = {
        dot_scalar,       axpy_scalar,        gemm_nt_scalar,
        gemm_nn_scalar,   gemm_tn_scalar,     rowdot_scalar,
        adam_update_scalar, reduce_sum_scalar,
    };
    return t;
}

}  // namespace vcmi::kernels
