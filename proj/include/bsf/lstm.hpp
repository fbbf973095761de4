#pragma once

#include "bsf/nn.hpp"

#include <vector>

namespace bsf::recurrent {

// Gate weights operate on [h_{t-1}; x_t] (hidden rows first).
struct LstmParams {
    Matrix W_f, W_i, W_C, W_o; // hidden x (hidden + input)
    Matrix b_f, b_i, b_C, b_o; // hidden x 1
    std::size_t hidden_size = 0;
    std::size_t input_size = 0;

    static LstmParams init(std::size_t hidden, std::size_t input, std::mt19937_64& rng);
    void validate() const;
};

struct LstmState {
    Matrix h; // hidden x batch
    Matrix c; // hidden x batch

    static LstmState zero(std::size_t hidden, std::size_t batch);
};

// Per-step cache retained for BPTT.
struct LstmStepCache {
    Matrix concat; // (hidden + input) x batch
    Matrix c_prev;
    Matrix f, i, c_tilde, o;
    Matrix c;
    Matrix tanh_c;
    Matrix h;
};

LstmState lstm_cell_forward(const LstmParams& params, const Matrix& x_t,
                            const LstmState& prev, LstmStepCache& cache);
LstmState lstm_cell_forward(const LstmParams& params, const Matrix& x_t,
                            const LstmState& prev);

struct LstmSequenceCache {
    std::vector<LstmStepCache> steps;
};

// Chains the cell left to right from a zero (or given) initial state.
std::vector<LstmState> lstm_sequence_forward(const LstmParams& params,
                                             const std::vector<Matrix>& inputs,
                                             const LstmState& init);
std::vector<LstmState> lstm_sequence_forward(const LstmParams& params,
                                             const std::vector<Matrix>& inputs,
                                             const LstmState& init,
                                             LstmSequenceCache& cache);

struct LstmGradients {
    Matrix W_f, W_i, W_C, W_o;
    Matrix b_f, b_i, b_C, b_o;
    std::vector<Matrix> d_inputs; // d loss / d x_t per step

    double squared_norm() const;
    void scale(double s);
};

// Backpropagation through time. d_h_per_step holds the upstream gradient on
// each step's hidden output; pass empty matrices for untapped steps.
LstmGradients lstm_bptt(const LstmParams& params, const LstmSequenceCache& cache,
                        const std::vector<Matrix>& d_h_per_step);

// Convenience: MSE of the final hidden state against a target drives the BPTT.
struct LstmMseBpttResult {
    double loss = 0.0;
    LstmGradients grads;
};
LstmMseBpttResult lstm_bptt_mse(const LstmParams& params, const std::vector<Matrix>& inputs,
                                const Matrix& target_final_h);

// Bidirectional composition: forward pass over x_1..x_T, backward pass over
// x_T..x_1, summary = [fwd h_T ; bwd h_1] -> batchnorm -> dropout -> dense head.
struct BiLstmModel {
    LstmParams forward_params;
    LstmParams backward_params;
    std::vector<nn::DenseParams> head;
    nn::BatchNormParams batchnorm;
    nn::DropoutSpec dropout;

    void validate() const;
};

// Concatenated sequence summary (2*hidden x batch), before the head.
Matrix bilstm_concat_summary(const BiLstmModel& model, const std::vector<Matrix>& inputs);

struct BiLstmCache {
    LstmSequenceCache fwd;
    LstmSequenceCache bwd; // over the reversed sequence
    Matrix concat;
    nn::BatchNormCache bn;
    Matrix bn_out;
    Matrix dropout_mask;
    Matrix dropped;
    std::vector<nn::DenseCache> head;
};

Matrix bilstm_forward(BiLstmModel& model, const std::vector<Matrix>& inputs, bool training);
Matrix bilstm_forward(BiLstmModel& model, const std::vector<Matrix>& inputs, bool training,
                      BiLstmCache& cache);
// Inference path: running-stat batchnorm, no dropout, model untouched.
Matrix bilstm_infer(const BiLstmModel& model, const std::vector<Matrix>& inputs);

struct BiLstmGradients {
    LstmGradients fwd;
    LstmGradients bwd;
    std::vector<nn::DenseGradients> head;
    nn::BatchNormGradients bn;
};

BiLstmGradients bilstm_backward(const BiLstmModel& model, const BiLstmCache& cache,
                                const Matrix& d_output);

// One predicted voltage per series cell; pack aggregate = left-fold sum.
struct MultiOutputHead {
    nn::DenseParams per_cell; // cells x features, Linear
};

Matrix multi_output_forward(const MultiOutputHead& head, const Matrix& features);
double aggregate_outputs(const Matrix& outputs); // left-fold over rows of one column

} // namespace bsf::recurrent
