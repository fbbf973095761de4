#include "bsf/kernels.hpp"

#include "bsf/errors.hpp"
#include "kernels_impl.hpp"

#include <cstdlib>
#include <string>

namespace bsf::kernels {

namespace {

constexpr Ops make_ops_scalar() {
    return Ops{gemm_nn_scalar, gemm_tn_scalar, gemm_nt_scalar,
               add_scalar,     sub_scalar,     mul_scalar,
               axpy_scalar,    scale_scalar,   dot_scalar,
               sum_scalar,     sumsq_scalar,   sqdiff_sum_scalar,
               adam_update_scalar};
}

constexpr Ops make_ops_avx2() {
    return Ops{gemm_nn_avx2, gemm_tn_avx2, gemm_nt_avx2,
               add_avx2,     sub_avx2,     mul_avx2,
               axpy_avx2,    scale_avx2,   dot_avx2,
               sum_avx2,     sumsq_avx2,   sqdiff_sum_avx2,
               adam_update_avx2};
}

const Ops g_scalar_ops = make_ops_scalar();
const Ops g_avx2_ops = make_ops_avx2();

Backend detect_backend() {
    if (const char* env = std::getenv("BSF_SIMD")) {
        const std::string want(env);
        if (want == "scalar") return Backend::Scalar;
        if (want == "avx2" && avx2_supported()) return Backend::Avx2;
        if (want != "avx2" && want != "auto") return Backend::Scalar;
    }
    return avx2_supported() ? Backend::Avx2 : Backend::Scalar;
}

Backend g_active = detect_backend();

} // namespace

bool avx2_supported() noexcept {
#if defined(__x86_64__)
    return __builtin_cpu_supports("avx2") != 0;
#else
    return false;
#endif
}

Backend active() noexcept { return g_active; }

void select(Backend b) {
    if (b == Backend::Avx2 && !avx2_supported()) {
        throw InvalidArgument("kernels: AVX2 backend not supported on this CPU");
    }
    g_active = b;
}

const char* backend_name(Backend b) noexcept {
    return b == Backend::Avx2 ? "avx2" : "scalar";
}

const Ops& ops() noexcept {
    return g_active == Backend::Avx2 ? g_avx2_ops : g_scalar_ops;
}

const Ops& ops_for(Backend b) noexcept {
    return b == Backend::Avx2 ? g_avx2_ops : g_scalar_ops;
}

} // namespace bsf::kernels
