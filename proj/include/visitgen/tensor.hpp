// Dense row-major double matrix. Deliberately minimal: the autograd tape owns
// all composite operations.
#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "visitgen/core.hpp"

namespace visitgen {

struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> a;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), a(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    double& operator()(int r, int c) { return a[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return a[static_cast<std::size_t>(r) * cols + c]; }

    double* row(int r) { return a.data() + static_cast<std::size_t>(r) * cols; }
    const double* row(int r) const { return a.data() + static_cast<std::size_t>(r) * cols; }

    std::size_t size() const { return a.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool all_finite() const {
        for (double v : a)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static Matrix from_rows(const std::vector<std::vector<double>>& rows_in) {
        if (rows_in.empty()) return Matrix();
        Matrix m(static_cast<int>(rows_in.size()), static_cast<int>(rows_in[0].size()));
        for (int r = 0; r < m.rows; ++r) {
            if (rows_in[static_cast<std::size_t>(r)].size() != static_cast<std::size_t>(m.cols))
                throw ArgumentError("Matrix::from_rows: ragged input");
            for (int c = 0; c < m.cols; ++c) m(r, c) = rows_in[static_cast<std::size_t>(r)][static_cast<std::size_t>(c)];
        }
        return m;
    }
};

// C += A * B
inline void matmul_acc(const Matrix& A, const Matrix& B, Matrix& C) {
    for (int i = 0; i < A.rows; ++i) {
        const double* ai = A.row(i);
        double* ci = C.row(i);
        for (int k = 0; k < A.cols; ++k) {
            const double aik = ai[k];
            if (aik == 0.0) continue;
            const double* bk = B.row(k);
            for (int j = 0; j < B.cols; ++j) ci[j] += aik * bk[j];
        }
    }
}

// C += A * B^T
inline void matmul_nt_acc(const Matrix& A, const Matrix& B, Matrix& C) {
    for (int i = 0; i < A.rows; ++i) {
        const double* ai = A.row(i);
        double* ci = C.row(i);
        for (int j = 0; j < B.rows; ++j) {
            const double* bj = B.row(j);
            double acc = 0.0;
            for (int k = 0; k < A.cols; ++k) acc += ai[k] * bj[k];
            ci[j] += acc;
        }
    }
}

// C += A^T * B
inline void matmul_tn_acc(const Matrix& A, const Matrix& B, Matrix& C) {
    for (int k = 0; k < A.rows; ++k) {
        const double* ak = A.row(k);
        const double* bk = B.row(k);
        for (int i = 0; i < A.cols; ++i) {
            const double aki = ak[i];
            if (aki == 0.0) continue;
            double* ci = C.row(i);
            for (int j = 0; j < B.cols; ++j) ci[j] += aki * bk[j];
        }
    }
}

}  // namespace visitgen
