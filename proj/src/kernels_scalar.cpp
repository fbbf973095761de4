#include "kernels_impl.hpp"

#include <cmath>

// Reference backend. Reductions accumulate into four lanes (lane = k mod 4)
// and combine as ((l0+l2)+(l1+l3))+tail — the same order the AVX2 backend
// produces — so both backends agree bitwise. Built with -ffp-contract=off.

namespace bsf::kernels {

void gemm_nn_scalar(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc,
                    bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * lda;
        double* crow = c + i * ldc;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = arow[kk];
            const double* brow = b + kk * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

void gemm_tn_scalar(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc,
                    bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        for (std::size_t kk = 0; kk < k; ++kk) {
            const double av = a[kk * lda + i];
            const double* brow = b + kk * ldb;
            for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
        }
    }
}

namespace {

// Shared lane-blocked dot used by gemm_nt and the reductions.
inline double dot_blocked(std::size_t n, const double* a, const double* b) {
    double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        l0 += a[i] * b[i];
        l1 += a[i + 1] * b[i + 1];
        l2 += a[i + 2] * b[i + 2];
        l3 += a[i + 3] * b[i + 3];
    }
    double tail = 0.0;
    for (std::size_t i = n4; i < n; ++i) tail += a[i] * b[i];
    return ((l0 + l2) + (l1 + l3)) + tail;
}

} // namespace

void gemm_nt_scalar(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, std::size_t lda, const double* b,
                    std::size_t ldb, double* c, std::size_t ldc,
                    bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * lda;
        double* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = dot_blocked(k, arow, b + j * ldb);
            crow[j] = accumulate ? crow[j] + d : d;
        }
    }
}

void add_scalar(std::size_t n, const double* a, const double* b, double* o) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] + b[i];
}

void sub_scalar(std::size_t n, const double* a, const double* b, double* o) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] - b[i];
}

void mul_scalar(std::size_t n, const double* a, const double* b, double* o) {
    for (std::size_t i = 0; i < n; ++i) o[i] = a[i] * b[i];
}

void axpy_scalar(std::size_t n, double alpha, const double* x, double* y) {
    for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

void scale_scalar(std::size_t n, double alpha, double* x) {
    for (std::size_t i = 0; i < n; ++i) x[i] *= alpha;
}

double dot_scalar(std::size_t n, const double* a, const double* b) {
    return dot_blocked(n, a, b);
}

double sum_scalar(std::size_t n, const double* a) {
    double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        l0 += a[i];
        l1 += a[i + 1];
        l2 += a[i + 2];
        l3 += a[i + 3];
    }
    double tail = 0.0;
    for (std::size_t i = n4; i < n; ++i) tail += a[i];
    return ((l0 + l2) + (l1 + l3)) + tail;
}

double sumsq_scalar(std::size_t n, const double* a) {
    return dot_blocked(n, a, a);
}

double sqdiff_sum_scalar(std::size_t n, const double* a, const double* b) {
    double l0 = 0.0, l1 = 0.0, l2 = 0.0, l3 = 0.0;
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        const double d0 = a[i] - b[i];
        const double d1 = a[i + 1] - b[i + 1];
        const double d2 = a[i + 2] - b[i + 2];
        const double d3 = a[i + 3] - b[i + 3];
        l0 += d0 * d0;
        l1 += d1 * d1;
        l2 += d2 * d2;
        l3 += d3 * d3;
    }
    double tail = 0.0;
    for (std::size_t i = n4; i < n; ++i) {
        const double d = a[i] - b[i];
        tail += d * d;
    }
    return ((l0 + l2) + (l1 + l3)) + tail;
}

void adam_update_scalar(std::size_t n, double* p, const double* g, double* m,
                        double* v, double lr, double beta1, double beta2,
                        double eps, double bc1, double bc2) {
    const double om1 = 1.0 - beta1;
    const double om2 = 1.0 - beta2;
    for (std::size_t i = 0; i < n; ++i) {
        const double gi = g[i];
        const double mi = beta1 * m[i] + om1 * gi;
        const double vi = beta2 * v[i] + om2 * (gi * gi);
        m[i] = mi;
        v[i] = vi;
        const double mhat = mi / bc1;
        const double vhat = vi / bc2;
        p[i] -= lr * mhat / (std::sqrt(vhat) + eps);
    }
}

} // namespace bsf::kernels
