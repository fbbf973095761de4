#include "bsf/autoencoder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace bsf::autoencoder {

AutoencoderParams AutoencoderParams::init(std::size_t features, std::size_t latent,
                                          nn::Activation act, std::mt19937_64& rng) {
    AutoencoderParams p;
    p.W_e = glorot_uniform(latent, features, rng);
    p.b_e = Matrix(latent, 1);
    p.W_d = glorot_uniform(features, latent, rng);
    p.b_d = Matrix(features, 1);
    p.activation = act;
    p.validate();
    return p;
}

void AutoencoderParams::validate() const {
    if (W_e.rows() >= W_e.cols()) {
        throw InvalidArgument("autoencoder: latent must be smaller than features");
    }
    if (W_d.rows() != W_e.cols() || W_d.cols() != W_e.rows() ||
        b_e.rows() != W_e.rows() || b_d.rows() != W_d.rows()) {
        throw ShapeError("autoencoder: inconsistent parameter shapes");
    }
}

Matrix encode(const AutoencoderParams& params, const Matrix& x) {
    if (x.rows() != params.features()) {
        throw ShapeError("encode: input rows " + std::to_string(x.rows()) +
                         " do not match feature count " + std::to_string(params.features()));
    }
    return nn::apply_activation(params.activation,
                                add_col_broadcast(matmul(params.W_e, x), params.b_e));
}

Matrix decode(const AutoencoderParams& params, const Matrix& z) {
    if (z.rows() != params.latent()) {
        throw ShapeError("decode: input rows " + std::to_string(z.rows()) +
                         " do not match latent size " + std::to_string(params.latent()));
    }
    return nn::apply_activation(params.activation,
                                add_col_broadcast(matmul(params.W_d, z), params.b_d));
}

Matrix reconstruct(const AutoencoderParams& params, const Matrix& x, AutoencoderCache& cache) {
    cache.input = x;
    cache.z = encode(params, x);
    cache.xhat = decode(params, cache.z);
    return cache.xhat;
}

double reconstruction_loss(const Matrix& x, const Matrix& xhat) {
    check_same_shape(x, xhat, "reconstruction_loss");
    return squared_diff_sum(x, xhat) / static_cast<double>(x.cols());
}

AutoencoderGradients autoencoder_backward(const AutoencoderParams& params,
                                          const AutoencoderCache& cache) {
    const double n = static_cast<double>(cache.input.cols());
    // d loss / d xhat for loss = (1/N) sum_i |x_i - xhat_i|^2.
    const Matrix d_xhat = scaled(cache.xhat - cache.input, 2.0 / n);

    const Matrix d_pre_d =
        hadamard(d_xhat, nn::activation_grad_from_output(params.activation, cache.xhat));
    AutoencoderGradients g;
    g.W_d = matmul_nt(d_pre_d, cache.z);
    g.b_d = row_sum(d_pre_d);

    const Matrix d_z = matmul_tn(params.W_d, d_pre_d);
    const Matrix d_pre_e =
        hadamard(d_z, nn::activation_grad_from_output(params.activation, cache.z));
    g.W_e = matmul_nt(d_pre_e, cache.input);
    g.b_e = row_sum(d_pre_e);
    return g;
}

AeTrainResult train_autoencoder(const Matrix& data, const AeTrainConfig& config) {
    if (data.cols() == 0) throw InvalidArgument("train_autoencoder: no samples");
    for (std::size_t i = 0; i < data.size(); ++i) {
        const double v = data.data()[i];
        if (v < -0.001 || v > 1.001) {
            throw InvalidArgument("train_autoencoder: data must be min-max scaled to [0, 1]");
        }
    }

    std::mt19937_64 rng(config.seed);
    AeTrainResult result;
    result.params = AutoencoderParams::init(data.rows(), config.latent,
                                            config.activation, rng);

    nn::AdamState opt_we = nn::AdamState::init(result.params.W_e, config.lr);
    nn::AdamState opt_be = nn::AdamState::init(result.params.b_e, config.lr);
    nn::AdamState opt_wd = nn::AdamState::init(result.params.W_d, config.lr);
    nn::AdamState opt_bd = nn::AdamState::init(result.params.b_d, config.lr);

    const std::size_t n = data.cols();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), rng);
        double epoch_loss = 0.0;
        std::size_t seen = 0;
        for (std::size_t start = 0; start < n; start += config.batch) {
            const std::size_t stop = std::min(start + config.batch, n);
            const std::vector<std::size_t> idx(order.begin() + start, order.begin() + stop);
            const Matrix batch = gather_columns(data, idx);

            AutoencoderCache cache;
            reconstruct(result.params, batch, cache);
            epoch_loss += squared_diff_sum(batch, cache.xhat);
            seen += idx.size();

            const auto grads = autoencoder_backward(result.params, cache);
            nn::adam_step(opt_we, result.params.W_e, grads.W_e);
            nn::adam_step(opt_be, result.params.b_e, grads.b_e);
            nn::adam_step(opt_wd, result.params.W_d, grads.W_d);
            nn::adam_step(opt_bd, result.params.b_d, grads.b_d);
        }
        result.loss_history.push_back(epoch_loss / static_cast<double>(seen));
    }

    // Anomaly rule: flag samples above the 99.5th percentile of training error.
    auto errors = reconstruction_errors(result.params, data);
    std::sort(errors.begin(), errors.end());
    const std::size_t idx = static_cast<std::size_t>(
        std::min<double>(static_cast<double>(errors.size()) - 1.0,
                         std::ceil(0.995 * static_cast<double>(errors.size())) - 1.0));
    result.anomaly_threshold = errors[idx];
    return result;
}

std::vector<double> reconstruction_errors(const AutoencoderParams& params, const Matrix& data) {
    const Matrix xhat = decode(params, encode(params, data));
    std::vector<double> out(data.cols(), 0.0);
    for (std::size_t c = 0; c < data.cols(); ++c) {
        double acc = 0.0;
        for (std::size_t r = 0; r < data.rows(); ++r) {
            const double d = data(r, c) - xhat(r, c);
            acc += d * d;
        }
        out[c] = acc;
    }
    return out;
}

} // namespace bsf::autoencoder
