#include "bsf/lstm.hpp"

#include <algorithm>
#include <cmath>

namespace bsf::recurrent {

LstmParams LstmParams::init(std::size_t hidden, std::size_t input, std::mt19937_64& rng) {
    LstmParams p;
    p.hidden_size = hidden;
    p.input_size = input;
    const std::size_t cols = hidden + input;
    p.W_f = glorot_uniform(hidden, cols, rng);
    p.W_i = glorot_uniform(hidden, cols, rng);
    p.W_C = glorot_uniform(hidden, cols, rng);
    p.W_o = glorot_uniform(hidden, cols, rng);
    p.b_f = Matrix(hidden, 1);
    p.b_i = Matrix(hidden, 1);
    p.b_C = Matrix(hidden, 1);
    p.b_o = Matrix(hidden, 1);
    return p;
}

void LstmParams::validate() const {
    const std::size_t cols = hidden_size + input_size;
    for (const Matrix* w : {&W_f, &W_i, &W_C, &W_o}) {
        if (w->rows() != hidden_size || w->cols() != cols) {
            throw ShapeError("LstmParams: weight shape mismatch");
        }
    }
    for (const Matrix* b : {&b_f, &b_i, &b_C, &b_o}) {
        if (b->rows() != hidden_size || b->cols() != 1) {
            throw ShapeError("LstmParams: bias shape mismatch");
        }
    }
}

LstmState LstmState::zero(std::size_t hidden, std::size_t batch) {
    return LstmState{Matrix(hidden, batch), Matrix(hidden, batch)};
}

LstmState lstm_cell_forward(const LstmParams& params, const Matrix& x_t,
                            const LstmState& prev, LstmStepCache& cache) {
    if (x_t.rows() != params.input_size) {
        throw ShapeError("lstm_cell_forward: input rows " + std::to_string(x_t.rows()) +
                         " do not match input_size " + std::to_string(params.input_size));
    }
    if (prev.h.rows() != params.hidden_size || prev.h.cols() != x_t.cols()) {
        throw ShapeError("lstm_cell_forward: state shape does not match input batch");
    }

    cache.concat = vstack(prev.h, x_t);
    cache.c_prev = prev.c;

    auto gate = [&](const Matrix& w, const Matrix& b, nn::Activation act) {
        return nn::apply_activation(act, add_col_broadcast(matmul(w, cache.concat), b));
    };
    cache.f = gate(params.W_f, params.b_f, nn::Activation::Sigmoid);
    cache.i = gate(params.W_i, params.b_i, nn::Activation::Sigmoid);
    cache.c_tilde = gate(params.W_C, params.b_C, nn::Activation::Tanh);
    cache.o = gate(params.W_o, params.b_o, nn::Activation::Sigmoid);

    cache.c = hadamard(cache.f, prev.c) + hadamard(cache.i, cache.c_tilde);
    cache.tanh_c = map(cache.c, [](double v) { return std::tanh(v); });
    cache.h = hadamard(cache.o, cache.tanh_c);

    return LstmState{cache.h, cache.c};
}

LstmState lstm_cell_forward(const LstmParams& params, const Matrix& x_t,
                            const LstmState& prev) {
    LstmStepCache cache;
    return lstm_cell_forward(params, x_t, prev, cache);
}

std::vector<LstmState> lstm_sequence_forward(const LstmParams& params,
                                             const std::vector<Matrix>& inputs,
                                             const LstmState& init,
                                             LstmSequenceCache& cache) {
    if (inputs.empty()) {
        throw InvalidArgument("lstm_sequence_forward: empty input sequence");
    }
    cache.steps.resize(inputs.size());
    std::vector<LstmState> states;
    states.reserve(inputs.size());
    LstmState state = init;
    for (std::size_t t = 0; t < inputs.size(); ++t) {
        state = lstm_cell_forward(params, inputs[t], state, cache.steps[t]);
        states.push_back(state);
    }
    return states;
}

std::vector<LstmState> lstm_sequence_forward(const LstmParams& params,
                                             const std::vector<Matrix>& inputs,
                                             const LstmState& init) {
    LstmSequenceCache cache;
    return lstm_sequence_forward(params, inputs, init, cache);
}

double LstmGradients::squared_norm() const {
    double acc = 0.0;
    for (const Matrix* g : {&W_f, &W_i, &W_C, &W_o, &b_f, &b_i, &b_C, &b_o}) {
        acc += sum_squares(*g);
    }
    return acc;
}

void LstmGradients::scale(double s) {
    for (Matrix* g : {&W_f, &W_i, &W_C, &W_o, &b_f, &b_i, &b_C, &b_o}) {
        scale_in_place(*g, s);
    }
}

LstmGradients lstm_bptt(const LstmParams& params, const LstmSequenceCache& cache,
                        const std::vector<Matrix>& d_h_per_step) {
    if (cache.steps.empty()) {
        throw StateError("lstm_bptt: forward cache is empty");
    }
    if (d_h_per_step.size() != cache.steps.size()) {
        throw ShapeError("lstm_bptt: upstream gradient count does not match sequence");
    }
    const std::size_t hidden = params.hidden_size;
    const std::size_t cols = hidden + params.input_size;
    const std::size_t batch = cache.steps.front().h.cols();

    LstmGradients g;
    g.W_f = Matrix(hidden, cols);
    g.W_i = Matrix(hidden, cols);
    g.W_C = Matrix(hidden, cols);
    g.W_o = Matrix(hidden, cols);
    g.b_f = Matrix(hidden, 1);
    g.b_i = Matrix(hidden, 1);
    g.b_C = Matrix(hidden, 1);
    g.b_o = Matrix(hidden, 1);
    g.d_inputs.assign(cache.steps.size(), Matrix());

    Matrix dh_next(hidden, batch);
    Matrix dc_next(hidden, batch);

    for (std::size_t t = cache.steps.size(); t-- > 0;) {
        const LstmStepCache& s = cache.steps[t];

        Matrix dh = dh_next;
        if (!d_h_per_step[t].empty()) {
            check_same_shape(d_h_per_step[t], s.h, "lstm_bptt upstream gradient");
            add_in_place(dh, d_h_per_step[t]);
        }

        // h = o . tanh(c)
        const Matrix d_o = hadamard(dh, s.tanh_c);
        Matrix dc = hadamard(dh, s.o);
        for (std::size_t idx = 0; idx < dc.size(); ++idx) {
            const double th = s.tanh_c.data()[idx];
            dc.data()[idx] *= 1.0 - th * th;
        }
        add_in_place(dc, dc_next);

        // c = f . c_prev + i . c_tilde
        const Matrix d_f = hadamard(dc, s.c_prev);
        const Matrix d_i = hadamard(dc, s.c_tilde);
        const Matrix d_ctilde = hadamard(dc, s.i);
        dc_next = hadamard(dc, s.f);

        const Matrix dpre_f =
            hadamard(d_f, nn::activation_grad_from_output(nn::Activation::Sigmoid, s.f));
        const Matrix dpre_i =
            hadamard(d_i, nn::activation_grad_from_output(nn::Activation::Sigmoid, s.i));
        const Matrix dpre_c = hadamard(
            d_ctilde, nn::activation_grad_from_output(nn::Activation::Tanh, s.c_tilde));
        const Matrix dpre_o =
            hadamard(d_o, nn::activation_grad_from_output(nn::Activation::Sigmoid, s.o));

        matmul_nt_acc(g.W_f, dpre_f, s.concat);
        matmul_nt_acc(g.W_i, dpre_i, s.concat);
        matmul_nt_acc(g.W_C, dpre_c, s.concat);
        matmul_nt_acc(g.W_o, dpre_o, s.concat);
        add_in_place(g.b_f, row_sum(dpre_f));
        add_in_place(g.b_i, row_sum(dpre_i));
        add_in_place(g.b_C, row_sum(dpre_c));
        add_in_place(g.b_o, row_sum(dpre_o));

        Matrix d_concat = matmul_tn(params.W_f, dpre_f);
        add_in_place(d_concat, matmul_tn(params.W_i, dpre_i));
        add_in_place(d_concat, matmul_tn(params.W_C, dpre_c));
        add_in_place(d_concat, matmul_tn(params.W_o, dpre_o));

        dh_next = slice_rows(d_concat, 0, hidden);
        g.d_inputs[t] = slice_rows(d_concat, hidden, cols);
    }
    return g;
}

LstmMseBpttResult lstm_bptt_mse(const LstmParams& params, const std::vector<Matrix>& inputs,
                                const Matrix& target_final_h) {
    LstmSequenceCache cache;
    const auto states =
        lstm_sequence_forward(params, inputs, LstmState::zero(params.hidden_size,
                                                              inputs.front().cols()),
                              cache);
    const auto mse = nn::mse_loss(states.back().h, target_final_h);
    std::vector<Matrix> d_h(inputs.size());
    d_h.back() = mse.gradient;
    LstmMseBpttResult r;
    r.loss = mse.loss;
    r.grads = lstm_bptt(params, cache, d_h);
    return r;
}

void BiLstmModel::validate() const {
    forward_params.validate();
    backward_params.validate();
    if (head.empty()) throw ShapeError("BiLstmModel: empty dense head");
    if (head.front().weights.cols() != 2 * forward_params.hidden_size) {
        throw ShapeError("BiLstmModel: head input width must be 2 * hidden_size");
    }
}

Matrix bilstm_concat_summary(const BiLstmModel& model, const std::vector<Matrix>& inputs) {
    if (inputs.empty()) throw InvalidArgument("bilstm: empty input sequence");
    const std::size_t batch = inputs.front().cols();
    const auto fwd = lstm_sequence_forward(
        model.forward_params, inputs,
        LstmState::zero(model.forward_params.hidden_size, batch));
    std::vector<Matrix> reversed(inputs.rbegin(), inputs.rend());
    const auto bwd = lstm_sequence_forward(
        model.backward_params, reversed,
        LstmState::zero(model.backward_params.hidden_size, batch));
    return vstack(fwd.back().h, bwd.back().h);
}

Matrix bilstm_forward(BiLstmModel& model, const std::vector<Matrix>& inputs, bool training,
                      BiLstmCache& cache) {
    if (inputs.empty()) throw InvalidArgument("bilstm_forward: empty input sequence");
    const std::size_t batch = inputs.front().cols();

    lstm_sequence_forward(model.forward_params, inputs,
                          LstmState::zero(model.forward_params.hidden_size, batch),
                          cache.fwd);
    std::vector<Matrix> reversed(inputs.rbegin(), inputs.rend());
    lstm_sequence_forward(model.backward_params, reversed,
                          LstmState::zero(model.backward_params.hidden_size, batch),
                          cache.bwd);

    cache.concat = vstack(cache.fwd.steps.back().h, cache.bwd.steps.back().h);
    cache.bn_out = nn::batchnorm_forward(model.batchnorm, cache.concat, training, cache.bn);
    cache.dropped = model.dropout.forward(cache.bn_out, training, cache.dropout_mask);

    cache.head.resize(model.head.size());
    Matrix x = cache.dropped;
    for (std::size_t l = 0; l < model.head.size(); ++l) {
        x = nn::dense_forward(model.head[l], x, cache.head[l]);
    }
    return x;
}

Matrix bilstm_forward(BiLstmModel& model, const std::vector<Matrix>& inputs, bool training) {
    BiLstmCache cache;
    return bilstm_forward(model, inputs, training, cache);
}

Matrix bilstm_infer(const BiLstmModel& model, const std::vector<Matrix>& inputs) {
    Matrix x = nn::batchnorm_infer(model.batchnorm, bilstm_concat_summary(model, inputs));
    for (const auto& layer : model.head) x = nn::dense_forward(layer, x);
    return x;
}

BiLstmGradients bilstm_backward(const BiLstmModel& model, const BiLstmCache& cache,
                                const Matrix& d_output) {
    BiLstmGradients g;
    g.head.resize(model.head.size());

    Matrix d = d_output;
    for (std::size_t l = model.head.size(); l-- > 0;) {
        g.head[l] = nn::dense_backward(model.head[l], cache.head[l], d);
        d = g.head[l].d_input;
    }
    d = nn::dropout_backward(cache.dropout_mask, d);
    g.bn = nn::batchnorm_backward(model.batchnorm, cache.bn, d);

    const std::size_t hidden = model.forward_params.hidden_size;
    const Matrix d_fwd_h = slice_rows(g.bn.d_input, 0, hidden);
    const Matrix d_bwd_h = slice_rows(g.bn.d_input, hidden, 2 * hidden);

    std::vector<Matrix> d_h_fwd(cache.fwd.steps.size());
    d_h_fwd.back() = d_fwd_h;
    g.fwd = lstm_bptt(model.forward_params, cache.fwd, d_h_fwd);

    std::vector<Matrix> d_h_bwd(cache.bwd.steps.size());
    d_h_bwd.back() = d_bwd_h;
    g.bwd = lstm_bptt(model.backward_params, cache.bwd, d_h_bwd);

    return g;
}

Matrix multi_output_forward(const MultiOutputHead& head, const Matrix& features) {
    return dense_forward(head.per_cell, features);
}

double aggregate_outputs(const Matrix& outputs) {
    double acc = 0.0;
    for (std::size_t r = 0; r < outputs.rows(); ++r) acc += outputs(r, 0);
    return acc;
}

} // namespace bsf::recurrent
