#include "vcmi/matrix.hpp"

#include "vcmi/errors.hpp"

namespace vcmi {

Matrix hcat(const Matrix& a, const Matrix& b) {
    if (a.rows != b.rows) throw ShapeError("hcat: row counts differ");
    Matrix out(a.rows, a.cols + b.cols);
    for (int i = 0; i < a.rows; ++i) {
        const double* ra = a.row(i);
        const double* rb = b.row(i);
        double* ro = out.row(i);
        std::copy(ra, ra + a.cols, ro);
        std::copy(rb, rb + b.cols, ro + a.cols);
    }
    return out;
}

}  // namespace vcmi
