#pragma once

#include <cstddef>

// Internal: per-backend entry points wired into the dispatch table.

namespace bsf::kernels {

#define BSF_KERNEL_SET(suffix)                                                      \
    void gemm_nn_##suffix(std::size_t m, std::size_t n, std::size_t k,              \
                          const double* a, std::size_t lda, const double* b,        \
                          std::size_t ldb, double* c, std::size_t ldc,              \
                          bool accumulate);                                         \
    void gemm_tn_##suffix(std::size_t m, std::size_t n, std::size_t k,              \
                          const double* a, std::size_t lda, const double* b,        \
                          std::size_t ldb, double* c, std::size_t ldc,              \
                          bool accumulate);                                         \
    void gemm_nt_##suffix(std::size_t m, std::size_t n, std::size_t k,              \
                          const double* a, std::size_t lda, const double* b,        \
                          std::size_t ldb, double* c, std::size_t ldc,              \
                          bool accumulate);                                         \
    void add_##suffix(std::size_t n, const double* a, const double* b, double* o);  \
    void sub_##suffix(std::size_t n, const double* a, const double* b, double* o);  \
    void mul_##suffix(std::size_t n, const double* a, const double* b, double* o);  \
    void axpy_##suffix(std::size_t n, double alpha, const double* x, double* y);    \
    void scale_##suffix(std::size_t n, double alpha, double* x);                    \
    double dot_##suffix(std::size_t n, const double* a, const double* b);           \
    double sum_##suffix(std::size_t n, const double* a);                            \
    double sumsq_##suffix(std::size_t n, const double* a);                          \
    double sqdiff_sum_##suffix(std::size_t n, const double* a, const double* b);    \
    void adam_update_##suffix(std::size_t n, double* p, const double* g,            \
                              double* m, double* v, double lr, double beta1,        \
                              double beta2, double eps, double bc1, double bc2)

BSF_KERNEL_SET(scalar);
BSF_KERNEL_SET(avx2);

#undef BSF_KERNEL_SET

} // namespace bsf::kernels
