#include "bsf/matrix.hpp"

#include "bsf/kernels.hpp"

#include <cmath>
#include <string>

namespace bsf {

namespace {

std::string shape_str(const Matrix& m) {
    return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

[[noreturn]] void throw_shape(const char* what, const Matrix& a, const Matrix& b) {
    throw ShapeError(std::string(what) + ": incompatible shapes " + shape_str(a) +
                     " and " + shape_str(b));
}

} // namespace

Matrix Matrix::from(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    Matrix m(r, c);
    std::size_t i = 0;
    for (const auto& row : rows) {
        if (row.size() != c) throw ShapeError("Matrix::from: ragged initializer");
        std::size_t j = 0;
        for (double v : row) m(i, j++) = v;
        ++i;
    }
    return m;
}

Matrix Matrix::column(std::initializer_list<double> values) {
    Matrix m(values.size(), 1);
    std::size_t i = 0;
    for (double v : values) m(i++, 0) = v;
    return m;
}

void check_same_shape(const Matrix& a, const Matrix& b, const char* what) {
    if (!a.same_shape(b)) throw_shape(what, a, b);
}

Matrix matmul(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows()) throw_shape("matmul", a, b);
    Matrix c(a.rows(), b.cols());
    kernels::ops().gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), a.cols(),
                           b.data(), b.cols(), c.data(), c.cols(), false);
    return c;
}

Matrix matmul_tn(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw_shape("matmul_tn", a, b);
    Matrix c(a.cols(), b.cols());
    kernels::ops().gemm_tn(a.cols(), b.cols(), a.rows(), a.data(), a.cols(),
                           b.data(), b.cols(), c.data(), c.cols(), false);
    return c;
}

Matrix matmul_nt(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw_shape("matmul_nt", a, b);
    Matrix c(a.rows(), b.rows());
    kernels::ops().gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), a.cols(),
                           b.data(), b.cols(), c.data(), c.cols(), false);
    return c;
}

void matmul_acc(Matrix& c, const Matrix& a, const Matrix& b) {
    if (a.cols() != b.rows() || c.rows() != a.rows() || c.cols() != b.cols()) {
        throw_shape("matmul_acc", a, b);
    }
    kernels::ops().gemm_nn(a.rows(), b.cols(), a.cols(), a.data(), a.cols(),
                           b.data(), b.cols(), c.data(), c.cols(), true);
}

void matmul_nt_acc(Matrix& c, const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols() || c.rows() != a.rows() || c.cols() != b.rows()) {
        throw_shape("matmul_nt_acc", a, b);
    }
    kernels::ops().gemm_nt(a.rows(), b.rows(), a.cols(), a.data(), a.cols(),
                           b.data(), b.cols(), c.data(), c.cols(), true);
}

Matrix operator+(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add");
    Matrix out(a.rows(), a.cols());
    kernels::ops().add(a.size(), a.data(), b.data(), out.data());
    return out;
}

Matrix operator-(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "sub");
    Matrix out(a.rows(), a.cols());
    kernels::ops().sub(a.size(), a.data(), b.data(), out.data());
    return out;
}

Matrix hadamard(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "hadamard");
    Matrix out(a.rows(), a.cols());
    kernels::ops().mul(a.size(), a.data(), b.data(), out.data());
    return out;
}

Matrix scaled(const Matrix& a, double alpha) {
    Matrix out = a;
    kernels::ops().scale(out.size(), alpha, out.data());
    return out;
}

void add_in_place(Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "add_in_place");
    kernels::ops().add(a.size(), a.data(), b.data(), a.data());
}

void axpy_in_place(Matrix& y, double alpha, const Matrix& x) {
    check_same_shape(y, x, "axpy");
    kernels::ops().axpy(y.size(), alpha, x.data(), y.data());
}

void scale_in_place(Matrix& a, double alpha) {
    kernels::ops().scale(a.size(), alpha, a.data());
}

Matrix transpose(const Matrix& a) {
    Matrix out(a.cols(), a.rows());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        for (std::size_t c = 0; c < a.cols(); ++c) out(c, r) = a(r, c);
    }
    return out;
}

Matrix add_col_broadcast(const Matrix& a, const Matrix& bias) {
    if (bias.rows() != a.rows() || bias.cols() != 1) throw_shape("bias add", a, bias);
    Matrix out(a.rows(), a.cols());
    for (std::size_t r = 0; r < a.rows(); ++r) {
        const double bv = bias(r, 0);
        for (std::size_t c = 0; c < a.cols(); ++c) out(r, c) = a(r, c) + bv;
    }
    return out;
}

Matrix row_sum(const Matrix& a) {
    Matrix out(a.rows(), 1);
    for (std::size_t r = 0; r < a.rows(); ++r) {
        out(r, 0) = kernels::ops().sum(a.cols(), a.data() + r * a.cols());
    }
    return out;
}

double dot(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "dot");
    return kernels::ops().dot(a.size(), a.data(), b.data());
}

double sum(const Matrix& a) { return kernels::ops().sum(a.size(), a.data()); }

double sum_squares(const Matrix& a) {
    return kernels::ops().sumsq(a.size(), a.data());
}

double squared_diff_sum(const Matrix& a, const Matrix& b) {
    check_same_shape(a, b, "squared_diff_sum");
    return kernels::ops().sqdiff_sum(a.size(), a.data(), b.data());
}

double max_abs(const Matrix& a) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::fabs(a.data()[i]));
    }
    return m;
}

bool all_finite(const Matrix& a) {
    for (std::size_t i = 0; i < a.size(); ++i) {
        if (!std::isfinite(a.data()[i])) return false;
    }
    return true;
}

Matrix vstack(const Matrix& a, const Matrix& b) {
    if (a.cols() != b.cols()) throw_shape("vstack", a, b);
    Matrix out(a.rows() + b.rows(), a.cols());
    std::copy(a.data(), a.data() + a.size(), out.data());
    std::copy(b.data(), b.data() + b.size(), out.data() + a.size());
    return out;
}

Matrix slice_rows(const Matrix& a, std::size_t r0, std::size_t r1) {
    if (r0 > r1 || r1 > a.rows()) throw ShapeError("slice_rows: range out of bounds");
    Matrix out(r1 - r0, a.cols());
    std::copy(a.data() + r0 * a.cols(), a.data() + r1 * a.cols(), out.data());
    return out;
}

Matrix column_of(const Matrix& a, std::size_t c) {
    if (c >= a.cols()) throw ShapeError("column_of: column out of bounds");
    Matrix out(a.rows(), 1);
    for (std::size_t r = 0; r < a.rows(); ++r) out(r, 0) = a(r, c);
    return out;
}

Matrix gather_columns(const Matrix& a, const std::vector<std::size_t>& which) {
    Matrix out(a.rows(), which.size());
    for (std::size_t j = 0; j < which.size(); ++j) {
        if (which[j] >= a.cols()) throw ShapeError("gather_columns: column out of bounds");
        for (std::size_t r = 0; r < a.rows(); ++r) out(r, j) = a(r, which[j]);
    }
    return out;
}

Matrix glorot_uniform(std::size_t rows, std::size_t cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix out(rows, cols);
    for (std::size_t i = 0; i < out.size(); ++i) out.data()[i] = dist(rng);
    return out;
}

} // namespace bsf
