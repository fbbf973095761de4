#pragma once

#include "bsf/errors.hpp"

#include <cstddef>
#include <initializer_list>
#include <random>
#include <vector>

namespace bsf {

// Row-major dense binary64 matrix. Value type; all arithmetic routes through
// the kernel dispatch table. Column vectors are (n x 1); batches put one
// sample per column.
class Matrix {
public:
    Matrix() = default;
    Matrix(std::size_t rows, std::size_t cols, double fill = 0.0)
        : rows_(rows), cols_(cols), data_(rows * cols, fill) {}

    static Matrix from(std::initializer_list<std::initializer_list<double>> rows);
    static Matrix column(std::initializer_list<double> values);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    double& operator()(std::size_t r, std::size_t c) { return data_[r * cols_ + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * cols_ + c]; }

    double* data() noexcept { return data_.data(); }
    const double* data() const noexcept { return data_.data(); }

    const std::vector<double>& values() const noexcept { return data_; }

    bool same_shape(const Matrix& o) const noexcept {
        return rows_ == o.rows_ && cols_ == o.cols_;
    }

    bool operator==(const Matrix& o) const noexcept {
        return rows_ == o.rows_ && cols_ == o.cols_ && data_ == o.data_;
    }

private:
    std::size_t rows_ = 0;
    std::size_t cols_ = 0;
    std::vector<double> data_;
};

// Throws ShapeError naming both shapes when the dimensions cannot compose.
void check_same_shape(const Matrix& a, const Matrix& b, const char* what);

Matrix matmul(const Matrix& a, const Matrix& b);         // a * b
Matrix matmul_tn(const Matrix& a, const Matrix& b);      // a^T * b
Matrix matmul_nt(const Matrix& a, const Matrix& b);      // a * b^T
void matmul_acc(Matrix& c, const Matrix& a, const Matrix& b);    // c += a * b
void matmul_nt_acc(Matrix& c, const Matrix& a, const Matrix& b); // c += a * b^T

Matrix operator+(const Matrix& a, const Matrix& b);
Matrix operator-(const Matrix& a, const Matrix& b);
Matrix hadamard(const Matrix& a, const Matrix& b);
Matrix scaled(const Matrix& a, double alpha);
void add_in_place(Matrix& a, const Matrix& b);
void axpy_in_place(Matrix& y, double alpha, const Matrix& x);
void scale_in_place(Matrix& a, double alpha);

Matrix transpose(const Matrix& a);

// out(r,c) = a(r,c) + bias(r,0): column-broadcast bias add.
Matrix add_col_broadcast(const Matrix& a, const Matrix& bias);
Matrix row_sum(const Matrix& a); // (rows x 1)

template <typename F>
Matrix map(const Matrix& a, F f) {
    Matrix out(a.rows(), a.cols());
    const double* src = a.data();
    double* dst = out.data();
    for (std::size_t i = 0; i < a.size(); ++i) dst[i] = f(src[i]);
    return out;
}

double dot(const Matrix& a, const Matrix& b);
double sum(const Matrix& a);
double sum_squares(const Matrix& a);
double squared_diff_sum(const Matrix& a, const Matrix& b);
double max_abs(const Matrix& a);
bool all_finite(const Matrix& a);

// Stacks a on top of b (column counts must match).
Matrix vstack(const Matrix& a, const Matrix& b);
// Rows [r0, r1) as a new matrix.
Matrix slice_rows(const Matrix& a, std::size_t r0, std::size_t r1);
// Column c as an (rows x 1) matrix.
Matrix column_of(const Matrix& a, std::size_t c);
// Columns `which` gathered into a new matrix, in the given order.
Matrix gather_columns(const Matrix& a, const std::vector<std::size_t>& which);

// Glorot-uniform init in +/- sqrt(6/(fan_in+fan_out)).
Matrix glorot_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng);

} // namespace bsf
