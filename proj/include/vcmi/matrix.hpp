#pragma once

#include <cassert>
#include <cstddef>
#include <vector>

namespace vcmi {

// Dense row-major double matrix. Deliberately minimal: the numeric kernels
// operate on raw pointers, and everything above them passes these around.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c) : rows(r), cols(c), a(static_cast<size_t>(r) * c, 0.0) {}

    double* data() { return a.data(); }
    const double* data() const { return a.data(); }

    double* row(int i) { return a.data() + static_cast<size_t>(i) * cols; }
    const double* row(int i) const { return a.data() + static_cast<size_t>(i) * cols; }

    double& at(int i, int j) { return a[static_cast<size_t>(i) * cols + j]; }
    double at(int i, int j) const { return a[static_cast<size_t>(i) * cols + j]; }

    size_t size() const { return a.size(); }
    bool empty() const { return rows == 0 || cols == 0; }

    void set_zero() { std::fill(a.begin(), a.end(), 0.0); }

    // Rows i of the result are rows idx[i] of this matrix.
    Matrix gather_rows(const std::vector<int>& idx) const {
        Matrix out(static_cast<int>(idx.size()), cols);
        for (size_t i = 0; i < idx.size(); ++i) {
            const double* src = row(idx[i]);
            std::copy(src, src + cols, out.row(static_cast<int>(i)));
        }
        return out;
    }
};

// [A | B] column-wise concatenation; row counts must match.
Matrix hcat(const Matrix& a, const Matrix& b);

}  // namespace vcmi
