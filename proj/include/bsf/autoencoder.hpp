#pragma once

#include "bsf/nn.hpp"

#include <vector>

namespace bsf::autoencoder {

// Single-layer encoder/decoder pair: z = act(W_e x + b_e), xhat = act(W_d z + b_d).
struct AutoencoderParams {
    Matrix W_e; // latent x features
    Matrix b_e; // latent x 1
    Matrix W_d; // features x latent
    Matrix b_d; // features x 1
    nn::Activation activation = nn::Activation::Sigmoid;

    static AutoencoderParams init(std::size_t features, std::size_t latent,
                                  nn::Activation act, std::mt19937_64& rng);
    void validate() const; // enforces latent < features
    std::size_t features() const noexcept { return W_e.cols(); }
    std::size_t latent() const noexcept { return W_e.rows(); }
};

Matrix encode(const AutoencoderParams& params, const Matrix& x);
Matrix decode(const AutoencoderParams& params, const Matrix& z);

struct AutoencoderCache {
    Matrix input;
    Matrix z;
    Matrix xhat;
};

Matrix reconstruct(const AutoencoderParams& params, const Matrix& x, AutoencoderCache& cache);

// Mean squared reconstruction norm over the batch: (1/N) sum_i |x_i - xhat_i|^2.
// Equals mse_loss(xhat, x) * features.
double reconstruction_loss(const Matrix& x, const Matrix& xhat);

struct AutoencoderGradients {
    Matrix W_e, b_e, W_d, b_d;
};

AutoencoderGradients autoencoder_backward(const AutoencoderParams& params,
                                          const AutoencoderCache& cache);

struct AeTrainConfig {
    std::size_t latent = 8;
    nn::Activation activation = nn::Activation::Sigmoid;
    double lr = 0.001;
    std::size_t batch = 64;
    std::size_t epochs = 200;
    std::uint64_t seed = 0;
};

struct AeTrainResult {
    AutoencoderParams params;
    std::vector<double> loss_history; // per-epoch mean reconstruction loss
    double anomaly_threshold = 0.0;   // 99.5th percentile of training errors
};

// data: features x samples, min-max scaled to [0, 1].
AeTrainResult train_autoencoder(const Matrix& data, const AeTrainConfig& config);

// Per-sample reconstruction errors |x_i - xhat_i|^2 (anomaly scores).
std::vector<double> reconstruction_errors(const AutoencoderParams& params, const Matrix& data);

} // namespace bsf::autoencoder
