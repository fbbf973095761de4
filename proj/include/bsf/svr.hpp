#pragma once

#include "bsf/matrix.hpp"

#include <vector>

namespace bsf::svr {

struct SvrHyperparams {
    double C = 10.0;
    double epsilon = 0.01;  // tube width
    double gamma = 0.0;     // 0 -> 1/features at train time
    double tolerance = 1e-3;
    std::size_t max_passes = 2000;
    double cache_mb = 64.0;

    void validate() const;
};

// K(x, y) = exp(-gamma |x - y|^2).
double rbf_kernel(const Matrix& x, const Matrix& y, double gamma);
double rbf_kernel(std::size_t dim, const double* x, const double* y, double gamma);

struct SvrModel {
    Matrix support_vectors;        // sv_count x features
    std::vector<double> dual_coef; // alpha_i - alpha_i*, |.| <= C
    double b = 0.0;
    SvrHyperparams hyper;

    std::size_t feature_dim() const noexcept { return support_vectors.cols(); }
};

// Epsilon-SVR dual via SMO with maximal-violating-pair selection. Training
// sets above 5000 samples are rejected (this baseline does not scale; the
// recurrent pipeline is the scalable path).
constexpr std::size_t kMaxTrainingSamples = 5000;

SvrModel svr_train(const Matrix& X /* samples x features */,
                   const std::vector<double>& y, const SvrHyperparams& hyper);

double svr_predict(const SvrModel& model, const Matrix& x /* 1 x features or column */);
std::vector<double> svr_predict_batch(const SvrModel& model, const Matrix& X);

} // namespace bsf::svr
