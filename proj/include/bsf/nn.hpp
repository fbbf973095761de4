#pragma once

#include "bsf/matrix.hpp"

#include <cstdint>
#include <functional>
#include <random>
#include <string>

namespace bsf::nn {

enum class Activation { ReLU, Sigmoid, Tanh, Linear };

const char* activation_name(Activation a) noexcept;
Activation activation_from_name(const std::string& s); // throws ParseError

double sigmoid(double x) noexcept;

Matrix apply_activation(Activation a, const Matrix& pre);
// Derivative written in terms of the activation OUTPUT (cheap for sigmoid/tanh).
Matrix activation_grad_from_output(Activation a, const Matrix& out);

// Fully-connected layer, samples as columns: out = act(W * x + b).
struct DenseParams {
    Matrix weights; // out x in
    Matrix bias;    // out x 1
    Activation activation = Activation::Linear;

    static DenseParams init(std::size_t out, std::size_t in, Activation act,
                            std::mt19937_64& rng);
};

struct DenseCache {
    Matrix input;  // in x batch
    Matrix output; // out x batch (post-activation)
};

Matrix dense_forward(const DenseParams& params, const Matrix& input);
Matrix dense_forward(const DenseParams& params, const Matrix& input, DenseCache& cache);

struct DenseGradients {
    Matrix d_weights;
    Matrix d_bias;
    Matrix d_input;
};

DenseGradients dense_backward(const DenseParams& params, const DenseCache& cache,
                              const Matrix& d_output);

// Batch normalization over features (rows); batch = columns.
struct BatchNormParams {
    Matrix gamma;        // features x 1
    Matrix beta;         // features x 1
    Matrix running_mean; // features x 1
    Matrix running_var;  // features x 1
    double momentum = 0.9;
    double epsilon = 1e-5;

    static BatchNormParams init(std::size_t features);
};

struct BatchNormCache {
    Matrix centered;  // x - mu
    Matrix inv_std;   // features x 1
    Matrix normalized;
};

// Training mode normalizes by batch statistics (batch >= 2) and updates the
// running stats in place; inference mode uses the running stats.
Matrix batchnorm_forward(BatchNormParams& params, const Matrix& input, bool training);
Matrix batchnorm_forward(BatchNormParams& params, const Matrix& input, bool training,
                         BatchNormCache& cache);
Matrix batchnorm_infer(const BatchNormParams& params, const Matrix& input);

struct BatchNormGradients {
    Matrix d_gamma;
    Matrix d_beta;
    Matrix d_input;
};

BatchNormGradients batchnorm_backward(const BatchNormParams& params,
                                      const BatchNormCache& cache,
                                      const Matrix& d_output);

// Inverted dropout: inference is the identity, training scales survivors by
// 1/(1-rate). Carries its own RNG stream so runs are reproducible per seed.
struct DropoutSpec {
    double rate = 0.0;
    std::uint64_t seed = 0;

    DropoutSpec() = default;
    DropoutSpec(double rate_, std::uint64_t seed_);

    Matrix forward(const Matrix& input, bool training);
    Matrix forward(const Matrix& input, bool training, Matrix& mask_out);

private:
    std::mt19937_64 rng_{0};
};

Matrix dropout_backward(const Matrix& mask, const Matrix& d_output);

struct MseResult {
    double loss = 0.0;
    Matrix gradient; // d loss / d pred
};

MseResult mse_loss(const Matrix& pred, const Matrix& target);

// Bias-corrected Adam for one parameter tensor.
struct AdamState {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    long step = 0;
    Matrix m;
    Matrix v;

    static AdamState init(const Matrix& param, double lr = 0.001);
};

void adam_step(AdamState& state, Matrix& param, const Matrix& grad);

// Central-difference gradient check. f() evaluates the scalar loss reading
// theta through the given reference; analytic is d f / d theta. Returns
// max |a - n| / max(1e-8, |a| + |n|).
double grad_check(const std::function<double()>& f, Matrix& theta,
                  const Matrix& analytic, double probe_eps);

} // namespace bsf::nn
