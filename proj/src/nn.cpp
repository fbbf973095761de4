#include "bsf/nn.hpp"

#include "bsf/kernels.hpp"

#include <cmath>

namespace bsf::nn {

const char* activation_name(Activation a) noexcept {
    switch (a) {
    case Activation::ReLU: return "relu";
    case Activation::Sigmoid: return "sigmoid";
    case Activation::Tanh: return "tanh";
    default: return "linear";
    }
}

Activation activation_from_name(const std::string& s) {
    if (s == "relu") return Activation::ReLU;
    if (s == "sigmoid") return Activation::Sigmoid;
    if (s == "tanh") return Activation::Tanh;
    if (s == "linear") return Activation::Linear;
    throw ParseError("unknown activation '" + s + "'");
}

double sigmoid(double x) noexcept { return 1.0 / (1.0 + std::exp(-x)); }

Matrix apply_activation(Activation a, const Matrix& pre) {
    switch (a) {
    case Activation::ReLU:
        return map(pre, [](double v) { return v > 0.0 ? v : 0.0; });
    case Activation::Sigmoid:
        return map(pre, [](double v) { return sigmoid(v); });
    case Activation::Tanh:
        return map(pre, [](double v) { return std::tanh(v); });
    default:
        return pre;
    }
}

Matrix activation_grad_from_output(Activation a, const Matrix& out) {
    switch (a) {
    case Activation::ReLU:
        return map(out, [](double v) { return v > 0.0 ? 1.0 : 0.0; });
    case Activation::Sigmoid:
        return map(out, [](double v) { return v * (1.0 - v); });
    case Activation::Tanh:
        return map(out, [](double v) { return 1.0 - v * v; });
    default:
        return Matrix(out.rows(), out.cols(), 1.0);
    }
}

DenseParams DenseParams::init(std::size_t out, std::size_t in, Activation act,
                              std::mt19937_64& rng) {
    DenseParams p;
    p.weights = glorot_uniform(out, in, rng);
    p.bias = Matrix(out, 1);
    p.activation = act;
    return p;
}

Matrix dense_forward(const DenseParams& params, const Matrix& input) {
    if (input.rows() != params.weights.cols()) {
        throw ShapeError("dense_forward: input rows " + std::to_string(input.rows()) +
                         " do not match weight cols " +
                         std::to_string(params.weights.cols()));
    }
    const Matrix pre = add_col_broadcast(matmul(params.weights, input), params.bias);
    return apply_activation(params.activation, pre);
}

Matrix dense_forward(const DenseParams& params, const Matrix& input, DenseCache& cache) {
    cache.input = input;
    cache.output = dense_forward(params, input);
    return cache.output;
}

DenseGradients dense_backward(const DenseParams& params, const DenseCache& cache,
                              const Matrix& d_output) {
    check_same_shape(d_output, cache.output, "dense_backward");
    const Matrix d_pre =
        hadamard(d_output, activation_grad_from_output(params.activation, cache.output));
    DenseGradients g;
    g.d_weights = matmul_nt(d_pre, cache.input);
    g.d_bias = row_sum(d_pre);
    g.d_input = matmul_tn(params.weights, d_pre);
    return g;
}

BatchNormParams BatchNormParams::init(std::size_t features) {
    BatchNormParams p;
    p.gamma = Matrix(features, 1, 1.0);
    p.beta = Matrix(features, 1, 0.0);
    p.running_mean = Matrix(features, 1, 0.0);
    p.running_var = Matrix(features, 1, 1.0);
    return p;
}

Matrix batchnorm_forward(BatchNormParams& params, const Matrix& input, bool training) {
    BatchNormCache cache;
    return batchnorm_forward(params, input, training, cache);
}

Matrix batchnorm_infer(const BatchNormParams& params, const Matrix& input) {
    BatchNormCache cache;
    // Inference never mutates the params.
    return batchnorm_forward(const_cast<BatchNormParams&>(params), input, false, cache);
}

Matrix batchnorm_forward(BatchNormParams& params, const Matrix& input, bool training,
                         BatchNormCache& cache) {
    const std::size_t f = params.gamma.rows();
    if (input.rows() != f) {
        throw ShapeError("batchnorm_forward: feature count " + std::to_string(input.rows()) +
                         " does not match params " + std::to_string(f));
    }
    const std::size_t n = input.cols();
    Matrix mean(f, 1);
    Matrix var(f, 1);
    if (training) {
        if (n < 2) {
            throw InvalidArgument("batchnorm_forward: training batches need >= 2 samples");
        }
        for (std::size_t r = 0; r < f; ++r) {
            const double mu = kernels::ops().sum(n, input.data() + r * n) / double(n);
            double acc = 0.0;
            for (std::size_t c = 0; c < n; ++c) {
                const double d = input(r, c) - mu;
                acc += d * d;
            }
            mean(r, 0) = mu;
            var(r, 0) = acc / double(n);
        }
        for (std::size_t r = 0; r < f; ++r) {
            params.running_mean(r, 0) = params.momentum * params.running_mean(r, 0) +
                                        (1.0 - params.momentum) * mean(r, 0);
            params.running_var(r, 0) = params.momentum * params.running_var(r, 0) +
                                       (1.0 - params.momentum) * var(r, 0);
        }
    } else {
        mean = params.running_mean;
        var = params.running_var;
    }

    cache.centered = Matrix(f, n);
    cache.inv_std = Matrix(f, 1);
    Matrix out(f, n);
    for (std::size_t r = 0; r < f; ++r) {
        const double inv = 1.0 / std::sqrt(var(r, 0) + params.epsilon);
        cache.inv_std(r, 0) = inv;
        const double g = params.gamma(r, 0);
        const double b = params.beta(r, 0);
        for (std::size_t c = 0; c < n; ++c) {
            const double cent = input(r, c) - mean(r, 0);
            cache.centered(r, c) = cent;
            out(r, c) = g * (cent * inv) + b;
        }
    }
    cache.normalized = Matrix(f, n);
    for (std::size_t r = 0; r < f; ++r) {
        for (std::size_t c = 0; c < n; ++c) {
            cache.normalized(r, c) = cache.centered(r, c) * cache.inv_std(r, 0);
        }
    }
    return out;
}

BatchNormGradients batchnorm_backward(const BatchNormParams& params,
                                      const BatchNormCache& cache,
                                      const Matrix& d_output) {
    const std::size_t f = params.gamma.rows();
    const std::size_t n = d_output.cols();
    check_same_shape(d_output, cache.normalized, "batchnorm_backward");

    BatchNormGradients g;
    g.d_gamma = Matrix(f, 1);
    g.d_beta = Matrix(f, 1);
    g.d_input = Matrix(f, n);

    for (std::size_t r = 0; r < f; ++r) {
        double dg = 0.0;
        double db = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            dg += d_output(r, c) * cache.normalized(r, c);
            db += d_output(r, c);
        }
        g.d_gamma(r, 0) = dg;
        g.d_beta(r, 0) = db;

        // Batch-statistics backward for one feature row.
        const double inv = cache.inv_std(r, 0);
        const double gamma = params.gamma(r, 0);
        double sum_dxhat = 0.0;
        double sum_dxhat_xhat = 0.0;
        for (std::size_t c = 0; c < n; ++c) {
            const double dxhat = d_output(r, c) * gamma;
            sum_dxhat += dxhat;
            sum_dxhat_xhat += dxhat * cache.normalized(r, c);
        }
        for (std::size_t c = 0; c < n; ++c) {
            const double dxhat = d_output(r, c) * gamma;
            g.d_input(r, c) =
                inv / double(n) *
                (double(n) * dxhat - sum_dxhat - cache.normalized(r, c) * sum_dxhat_xhat);
        }
    }
    return g;
}

DropoutSpec::DropoutSpec(double rate_, std::uint64_t seed_) : rate(rate_), seed(seed_), rng_(seed_) {
    if (!(rate >= 0.0 && rate < 1.0)) {
        throw InvalidArgument("dropout: rate must lie in [0, 1)");
    }
}

Matrix DropoutSpec::forward(const Matrix& input, bool training) {
    Matrix mask;
    return forward(input, training, mask);
}

Matrix DropoutSpec::forward(const Matrix& input, bool training, Matrix& mask_out) {
    if (!training || rate == 0.0) {
        mask_out = Matrix(input.rows(), input.cols(), 1.0);
        return input;
    }
    const double keep = 1.0 - rate;
    const double scale = 1.0 / keep;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    mask_out = Matrix(input.rows(), input.cols());
    Matrix out(input.rows(), input.cols());
    for (std::size_t i = 0; i < input.size(); ++i) {
        const double m = u(rng_) < keep ? scale : 0.0;
        mask_out.data()[i] = m;
        out.data()[i] = input.data()[i] * m;
    }
    return out;
}

Matrix dropout_backward(const Matrix& mask, const Matrix& d_output) {
    return hadamard(mask, d_output);
}

MseResult mse_loss(const Matrix& pred, const Matrix& target) {
    check_same_shape(pred, target, "mse_loss");
    if (pred.size() == 0) throw InvalidArgument("mse_loss: empty inputs");
    const double n = static_cast<double>(pred.size());
    MseResult r;
    r.loss = squared_diff_sum(pred, target) / n;
    r.gradient = scaled(pred - target, 2.0 / n);
    return r;
}

AdamState AdamState::init(const Matrix& param, double lr) {
    AdamState s;
    s.lr = lr;
    s.m = Matrix(param.rows(), param.cols());
    s.v = Matrix(param.rows(), param.cols());
    return s;
}

void adam_step(AdamState& state, Matrix& param, const Matrix& grad) {
    check_same_shape(param, grad, "adam_step");
    check_same_shape(param, state.m, "adam_step state");
    state.step += 1;
    const double bc1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.step));
    const double bc2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.step));
    kernels::ops().adam_update(param.size(), param.data(), grad.data(),
                               state.m.data(), state.v.data(), state.lr,
                               state.beta1, state.beta2, state.epsilon, bc1, bc2);
}

double grad_check(const std::function<double()>& f, Matrix& theta,
                  const Matrix& analytic, double probe_eps) {
    if (!(probe_eps > 0.0)) throw InvalidArgument("grad_check: probe_eps must be positive");
    check_same_shape(theta, analytic, "grad_check");
    double worst = 0.0;
    for (std::size_t i = 0; i < theta.size(); ++i) {
        const double saved = theta.data()[i];
        theta.data()[i] = saved + probe_eps;
        const double up = f();
        theta.data()[i] = saved - probe_eps;
        const double down = f();
        theta.data()[i] = saved;
        if (!std::isfinite(up) || !std::isfinite(down)) {
            throw NumericError("grad_check: non-finite loss during probing");
        }
        const double numeric = (up - down) / (2.0 * probe_eps);
        const double a = analytic.data()[i];
        if (!std::isfinite(a)) throw NumericError("grad_check: non-finite analytic gradient");
        const double denom = std::max(1e-8, std::fabs(a) + std::fabs(numeric));
        worst = std::max(worst, std::fabs(a - numeric) / denom);
    }
    return worst;
}

} // namespace bsf::nn
