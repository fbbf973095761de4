#include "kernels_impl.hpp"

#include <cmath>

// AVX2 backend. GEMM vectorizes across output columns with mul+add (no FMA),
// keeping per-element accumulation order identical to the scalar reference.
// Reductions keep four k-striped lanes and combine ((l0+l2)+(l1+l3))+tail.

#if defined(__x86_64__) && defined(__AVX2__)

#include <immintrin.h>

namespace bsf::kernels {

namespace {

inline double hsum_lanes(__m256d acc) {
    const __m128d lo = _mm256_castpd256_pd128(acc);    // [l0, l1]
    const __m128d hi = _mm256_extractf128_pd(acc, 1);  // [l2, l3]
    const __m128d s = _mm_add_pd(lo, hi);              // [l0+l2, l1+l3]
    const __m128d sh = _mm_unpackhi_pd(s, s);
    return _mm_cvtsd_f64(_mm_add_sd(s, sh));
}

inline double dot_avx2_impl(std::size_t n, const double* a, const double* b) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                               _mm256_loadu_pd(b + i)));
    }
    double tail = 0.0;
    for (std::size_t i = n4; i < n; ++i) tail += a[i] * b[i];
    return hsum_lanes(acc) + tail;
}

// Inner update shared by gemm_nn and gemm_tn: crow += av * brow.
inline void row_axpy(std::size_t n, double av, const double* brow, double* crow) {
    const __m256d avv = _mm256_set1_pd(av);
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t j = 0; j < n4; j += 4) {
        const __m256d prod = _mm256_mul_pd(avv, _mm256_loadu_pd(brow + j));
        _mm256_storeu_pd(crow + j, _mm256_add_pd(_mm256_loadu_pd(crow + j), prod));
    }
    for (std::size_t j = n4; j < n; ++j) crow[j] += av * brow[j];
}

} // namespace

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k,
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
            row_axpy(n, arow[kk], b + kk * ldb, crow);
        }
    }
}

void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc,
                  bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        double* crow = c + i * ldc;
        if (!accumulate) {
            for (std::size_t j = 0; j < n; ++j) crow[j] = 0.0;
        }
        for (std::size_t kk = 0; kk < k; ++kk) {
            row_axpy(n, a[kk * lda + i], b + kk * ldb, crow);
        }
    }
}

void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k,
                  const double* a, std::size_t lda, const double* b,
                  std::size_t ldb, double* c, std::size_t ldc,
                  bool accumulate) {
    for (std::size_t i = 0; i < m; ++i) {
        const double* arow = a + i * lda;
        double* crow = c + i * ldc;
        for (std::size_t j = 0; j < n; ++j) {
            const double d = dot_avx2_impl(k, arow, b + j * ldb);
            crow[j] = accumulate ? crow[j] + d : d;
        }
    }
}

void add_avx2(std::size_t n, const double* a, const double* b, double* o) {
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        _mm256_storeu_pd(o + i, _mm256_add_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i)));
    }
    for (std::size_t i = n4; i < n; ++i) o[i] = a[i] + b[i];
}

void sub_avx2(std::size_t n, const double* a, const double* b, double* o) {
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        _mm256_storeu_pd(o + i, _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i)));
    }
    for (std::size_t i = n4; i < n; ++i) o[i] = a[i] - b[i];
}

void mul_avx2(std::size_t n, const double* a, const double* b, double* o) {
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        _mm256_storeu_pd(o + i, _mm256_mul_pd(_mm256_loadu_pd(a + i),
                                              _mm256_loadu_pd(b + i)));
    }
    for (std::size_t i = n4; i < n; ++i) o[i] = a[i] * b[i];
}

void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) {
    const __m256d av = _mm256_set1_pd(alpha);
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d prod = _mm256_mul_pd(av, _mm256_loadu_pd(x + i));
        _mm256_storeu_pd(y + i, _mm256_add_pd(_mm256_loadu_pd(y + i), prod));
    }
    for (std::size_t i = n4; i < n; ++i) y[i] += alpha * x[i];
}

void scale_avx2(std::size_t n, double alpha, double* x) {
    const __m256d av = _mm256_set1_pd(alpha);
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        _mm256_storeu_pd(x + i, _mm256_mul_pd(av, _mm256_loadu_pd(x + i)));
    }
    for (std::size_t i = n4; i < n; ++i) x[i] *= alpha;
}

double dot_avx2(std::size_t n, const double* a, const double* b) {
    return dot_avx2_impl(n, a, b);
}

double sum_avx2(std::size_t n, const double* a) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        acc = _mm256_add_pd(acc, _mm256_loadu_pd(a + i));
    }
    double tail = 0.0;
    for (std::size_t i = n4; i < n; ++i) tail += a[i];
    return hsum_lanes(acc) + tail;
}

double sumsq_avx2(std::size_t n, const double* a) {
    return dot_avx2_impl(n, a, a);
}

double sqdiff_sum_avx2(std::size_t n, const double* a, const double* b) {
    __m256d acc = _mm256_setzero_pd();
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d d = _mm256_sub_pd(_mm256_loadu_pd(a + i),
                                        _mm256_loadu_pd(b + i));
        acc = _mm256_add_pd(acc, _mm256_mul_pd(d, d));
    }
    double tail = 0.0;
    for (std::size_t i = n4; i < n; ++i) {
        const double d = a[i] - b[i];
        tail += d * d;
    }
    return hsum_lanes(acc) + tail;
}

void adam_update_avx2(std::size_t n, double* p, const double* g, double* m,
                      double* v, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2) {
    const __m256d b1 = _mm256_set1_pd(beta1);
    const __m256d b2 = _mm256_set1_pd(beta2);
    const __m256d om1 = _mm256_set1_pd(1.0 - beta1);
    const __m256d om2 = _mm256_set1_pd(1.0 - beta2);
    const __m256d vlr = _mm256_set1_pd(lr);
    const __m256d veps = _mm256_set1_pd(eps);
    const __m256d vbc1 = _mm256_set1_pd(bc1);
    const __m256d vbc2 = _mm256_set1_pd(bc2);
    const std::size_t n4 = n & ~static_cast<std::size_t>(3);
    for (std::size_t i = 0; i < n4; i += 4) {
        const __m256d gi = _mm256_loadu_pd(g + i);
        const __m256d mi = _mm256_add_pd(_mm256_mul_pd(b1, _mm256_loadu_pd(m + i)),
                                         _mm256_mul_pd(om1, gi));
        const __m256d vi = _mm256_add_pd(_mm256_mul_pd(b2, _mm256_loadu_pd(v + i)),
                                         _mm256_mul_pd(om2, _mm256_mul_pd(gi, gi)));
        _mm256_storeu_pd(m + i, mi);
        _mm256_storeu_pd(v + i, vi);
        const __m256d mhat = _mm256_div_pd(mi, vbc1);
        const __m256d vhat = _mm256_div_pd(vi, vbc2);
        const __m256d denom = _mm256_add_pd(_mm256_sqrt_pd(vhat), veps);
        const __m256d step = _mm256_div_pd(_mm256_mul_pd(vlr, mhat), denom);
        _mm256_storeu_pd(p + i, _mm256_sub_pd(_mm256_loadu_pd(p + i), step));
    }
    const double som1 = 1.0 - beta1;
    const double som2 = 1.0 - beta2;
    for (std::size_t i = n4; i < n; ++i) {
        const double gi = g[i];
        const double mi = beta1 * m[i] + som1 * gi;
        const double vi = beta2 * v[i] + som2 * (gi * gi);
        m[i] = mi;
        v[i] = vi;
        p[i] -= lr * (mi / bc1) / (std::sqrt(vi / bc2) + eps);
    }
}

} // namespace bsf::kernels

#else // non-x86 or AVX2 unavailable at compile time: keep the symbols, never selected

namespace bsf::kernels {

void gemm_nn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc, bool accumulate) {
    gemm_nn_scalar(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm_tn_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc, bool accumulate) {
    gemm_tn_scalar(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void gemm_nt_avx2(std::size_t m, std::size_t n, std::size_t k, const double* a,
                  std::size_t lda, const double* b, std::size_t ldb, double* c,
                  std::size_t ldc, bool accumulate) {
    gemm_nt_scalar(m, n, k, a, lda, b, ldb, c, ldc, accumulate);
}
void add_avx2(std::size_t n, const double* a, const double* b, double* o) { add_scalar(n, a, b, o); }
void sub_avx2(std::size_t n, const double* a, const double* b, double* o) { sub_scalar(n, a, b, o); }
void mul_avx2(std::size_t n, const double* a, const double* b, double* o) { mul_scalar(n, a, b, o); }
void axpy_avx2(std::size_t n, double alpha, const double* x, double* y) { axpy_scalar(n, alpha, x, y); }
void scale_avx2(std::size_t n, double alpha, double* x) { scale_scalar(n, alpha, x); }
double dot_avx2(std::size_t n, const double* a, const double* b) { return dot_scalar(n, a, b); }
double sum_avx2(std::size_t n, const double* a) { return sum_scalar(n, a); }
double sumsq_avx2(std::size_t n, const double* a) { return sumsq_scalar(n, a); }
double sqdiff_sum_avx2(std::size_t n, const double* a, const double* b) { return sqdiff_sum_scalar(n, a, b); }
void adam_update_avx2(std::size_t n, double* p, const double* g, double* m,
                      double* v, double lr, double beta1, double beta2,
                      double eps, double bc1, double bc2) {
    adam_update_scalar(n, p, g, m, v, lr, beta1, beta2, eps, bc1, bc2);
}

} // namespace bsf::kernels

#endif
