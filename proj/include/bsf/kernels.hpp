#pragma once

#include <cstddef>

// Data-parallel inner loops behind the Matrix layer. Two backends share one
// dispatch table: a scalar reference and an AVX2 variant, selected once at
// startup (overridable with BSF_SIMD=scalar|avx2 or kernels::select()).
//
// Backend contract: bitwise-identical results. Elementwise kernels are
// trivially exact; GEMM accumulates over k sequentially per output element in
// both backends (no FMA contraction); reductions use a fixed 4-lane-blocked
// accumulation order, combined as ((l0+l2)+(l1+l3))+tail, mirrored exactly by
// the scalar reference. The equivalence suite asserts exact equality.

namespace bsf::kernels {

enum class Backend { Scalar, Avx2 };

bool avx2_supported() noexcept;
Backend active() noexcept;
void select(Backend b); // throws InvalidArgument if the CPU lacks support
const char* backend_name(Backend b) noexcept;

struct Ops {
    // c(m x n) = a(m x k) * b(k x n)          [+c if accumulate]
    void (*gemm_nn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, std::size_t lda,
                    const double* b, std::size_t ldb,
                    double* c, std::size_t ldc, bool accumulate);
    // c(m x n) = a^T * b, a stored (k x m)    [+c if accumulate]
    void (*gemm_tn)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, std::size_t lda,
                    const double* b, std::size_t ldb,
                    double* c, std::size_t ldc, bool accumulate);
    // c(m x n) = a * b^T, b stored (n x k)    [+c if accumulate]
    void (*gemm_nt)(std::size_t m, std::size_t n, std::size_t k,
                    const double* a, std::size_t lda,
                    const double* b, std::size_t ldb,
                    double* c, std::size_t ldc, bool accumulate);

    void (*add)(std::size_t n, const double* a, const double* b, double* out);
    void (*sub)(std::size_t n, const double* a, const double* b, double* out);
    void (*mul)(std::size_t n, const double* a, const double* b, double* out);
    void (*axpy)(std::size_t n, double alpha, const double* x, double* y);
    void (*scale)(std::size_t n, double alpha, double* x);

    double (*dot)(std::size_t n, const double* a, const double* b);
    double (*sum)(std::size_t n, const double* a);
    double (*sumsq)(std::size_t n, const double* a);
    double (*sqdiff_sum)(std::size_t n, const double* a, const double* b);

    // Bias-corrected Adam, fused: updates p, m, v in place.
    // bc1 = 1 - beta1^t, bc2 = 1 - beta2^t precomputed by the caller.
    void (*adam_update)(std::size_t n, double* p, const double* g,
                        double* m, double* v, double lr, double beta1,
                        double beta2, double eps, double bc1, double bc2);
};

const Ops& ops() noexcept;
const Ops& ops_for(Backend b) noexcept; // direct access, used by the equivalence tests

} // namespace bsf::kernels
