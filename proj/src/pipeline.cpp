#include "bsf/pipeline.hpp"

#include "ioutil.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <sstream>

namespace bsf::pipeline {

using telemetry::TelemetryRecord;

// ---------------------------------------------------------------------------
// Features

std::vector<std::string> default_features(int cells_series) {
    std::vector<std::string> f = {"soc", "pack_voltage", "current", "ah_charged",
                                  "ah_discharged"};
    for (const auto& c : cell_voltage_features(cells_series)) f.push_back(c);
    return f;
}

std::vector<std::string> cell_voltage_features(int cells_series) {
    std::vector<std::string> f;
    for (int i = 1; i <= cells_series; ++i) {
        char buf[16];
        std::snprintf(buf, sizeof(buf), "cell_v_%02d", i);
        f.emplace_back(buf);
    }
    return f;
}

namespace {

double extract_feature(const TelemetryRecord& r, const std::string& name) {
    if (name == "soc") return r.soc;
    if (name == "pack_voltage") return r.pack_voltage;
    if (name == "current") return r.current;
    if (name == "temperature") return r.temperature;
    if (name == "ah_charged") return r.ah_charged_cum;
    if (name == "ah_discharged") return r.ah_discharged_cum;
    if (name.rfind("cell_v_", 0) == 0) {
        const long idx = std::strtol(name.c_str() + 7, nullptr, 10);
        if (idx >= 1 && static_cast<std::size_t>(idx) <= r.cell_voltages.size()) {
            return r.cell_voltages[static_cast<std::size_t>(idx - 1)];
        }
    }
    throw InvalidArgument("unknown feature '" + name + "'");
}

std::size_t feature_index(const std::vector<std::string>& features, const char* name) {
    for (std::size_t i = 0; i < features.size(); ++i) {
        if (features[i] == name) return i;
    }
    return features.size();
}

} // namespace

Matrix feature_matrix(const TelemetrySeries& series, const std::vector<std::string>& features) {
    Matrix out(features.size(), series.size());
    for (std::size_t f = 0; f < features.size(); ++f) {
        for (std::size_t c = 0; c < series.size(); ++c) {
            out(f, c) = extract_feature(series.records[c], features[f]);
        }
    }
    return out;
}

double ScalerParams::transform_one(std::size_t f, double v) const {
    const double range = max[f] - min[f];
    if (range == 0.0) return 0.0;
    return (v - min[f]) / range;
}

Matrix ScalerParams::transform(const Matrix& raw) const {
    if (raw.rows() != features()) {
        throw ShapeError("scaler: feature count " + std::to_string(raw.rows()) +
                         " does not match fitted " + std::to_string(features()));
    }
    Matrix out(raw.rows(), raw.cols());
    for (std::size_t f = 0; f < raw.rows(); ++f) {
        for (std::size_t c = 0; c < raw.cols(); ++c) {
            out(f, c) = transform_one(f, raw(f, c));
        }
    }
    return out;
}

Matrix ScalerParams::inverse_transform(const Matrix& scaled) const {
    if (scaled.rows() != features()) {
        throw ShapeError("scaler: feature count mismatch in inverse_transform");
    }
    Matrix out(scaled.rows(), scaled.cols());
    for (std::size_t f = 0; f < scaled.rows(); ++f) {
        const double range = max[f] - min[f];
        for (std::size_t c = 0; c < scaled.cols(); ++c) {
            out(f, c) = min[f] + scaled(f, c) * range;
        }
    }
    return out;
}

ScalerParams fit_scaler(const TelemetrySeries& train, const std::vector<std::string>& features) {
    if (train.size() < 2) {
        throw InvalidArgument("fit_scaler: need at least 2 training records");
    }
    ScalerParams s;
    s.min.assign(features.size(), 0.0);
    s.max.assign(features.size(), 0.0);
    for (std::size_t f = 0; f < features.size(); ++f) {
        double lo = extract_feature(train.records[0], features[f]);
        double hi = lo;
        for (const auto& r : train.records) {
            const double v = extract_feature(r, features[f]);
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
        s.min[f] = lo;
        s.max[f] = hi;
    }
    return s;
}

// ---------------------------------------------------------------------------
// Windows

WindowSet build_windows(const TelemetrySeries& series, const ScalerParams& scaler,
                        const std::vector<std::string>& features, std::size_t window_len,
                        TargetKind kind) {
    if (window_len < 1) throw InvalidArgument("build_windows: window_len must be >= 1");
    if (series.size() <= window_len) {
        throw InvalidArgument("build_windows: series length " + std::to_string(series.size()) +
                              " must exceed window_len " + std::to_string(window_len));
    }
    WindowSet ws;
    ws.window_len = window_len;
    ws.kind = kind;
    ws.features = scaler.transform(feature_matrix(series, features));

    const std::size_t n_windows = series.size() - window_len;
    ws.starts.resize(n_windows);
    std::iota(ws.starts.begin(), ws.starts.end(), std::size_t{0});

    if (kind == TargetKind::AhDeltas) {
        ws.targets = Matrix(2, n_windows);
        for (std::size_t w = 0; w < n_windows; ++w) {
            const std::size_t t = w + window_len;
            ws.targets(0, w) = series.records[t].ah_charged_cum -
                               series.records[t - 1].ah_charged_cum;
            ws.targets(1, w) = series.records[t].ah_discharged_cum -
                               series.records[t - 1].ah_discharged_cum;
        }
    } else {
        const std::size_t cells = series.records.front().cell_voltages.size();
        ws.targets = Matrix(cells, n_windows);
        for (std::size_t w = 0; w < n_windows; ++w) {
            const std::size_t t = w + window_len;
            for (std::size_t c = 0; c < cells; ++c) {
                ws.targets(c, w) = series.records[t].cell_voltages[c];
            }
        }
    }
    return ws;
}

namespace {

std::vector<Matrix> gather_step_inputs(const Matrix& feats,
                                       const std::vector<std::size_t>& starts,
                                       const std::vector<std::size_t>& idx,
                                       std::size_t window_len) {
    const std::size_t f_dim = feats.rows();
    std::vector<Matrix> steps(window_len, Matrix(f_dim, idx.size()));
    for (std::size_t t = 0; t < window_len; ++t) {
        Matrix& step = steps[t];
        for (std::size_t j = 0; j < idx.size(); ++j) {
            const std::size_t col = starts[idx[j]] + t;
            for (std::size_t f = 0; f < f_dim; ++f) step(f, j) = feats(f, col);
        }
    }
    return steps;
}

// One row per window: steps concatenated in time order.
Matrix flatten_windows(const WindowSet& ws) {
    const std::size_t f_dim = ws.feature_dim();
    Matrix out(ws.count(), ws.window_len * f_dim);
    for (std::size_t w = 0; w < ws.count(); ++w) {
        for (std::size_t t = 0; t < ws.window_len; ++t) {
            for (std::size_t f = 0; f < f_dim; ++f) {
                out(w, t * f_dim + f) = ws.features(f, ws.starts[w] + t);
            }
        }
    }
    return out;
}

} // namespace

// ---------------------------------------------------------------------------
// Metrics

MetricsReport evaluate(const std::vector<double>& preds, const std::vector<double>& targets) {
    if (preds.size() != targets.size()) {
        throw ShapeError("evaluate: prediction and target lengths differ (" +
                         std::to_string(preds.size()) + " vs " +
                         std::to_string(targets.size()) + ")");
    }
    if (preds.empty()) throw InvalidArgument("evaluate: empty inputs");

    const double n = static_cast<double>(preds.size());
    double abs_sum = 0.0;
    double sq_sum = 0.0;
    double target_sum = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = targets[i] - preds[i];
        abs_sum += std::fabs(d);
        sq_sum += d * d;
        target_sum += targets[i];
    }
    MetricsReport r;
    r.mae = abs_sum / n;
    r.rmse = std::sqrt(sq_sum / n);

    const double mean = target_sum / n;
    double ss_tot = 0.0;
    for (double t : targets) ss_tot += (t - mean) * (t - mean);
    if (ss_tot > 0.0) r.r2 = 1.0 - sq_sum / ss_tot;

    if (r.rmse + 1e-12 < r.mae) {
        throw NumericError("evaluate: RMSE < MAE, non-finite inputs suspected");
    }
    return r;
}

TableMetrics table_metrics(const Matrix& preds, const Matrix& targets) {
    check_same_shape(preds, targets, "table_metrics");
    if (preds.rows() != 2) throw ShapeError("table_metrics: expects 2 target rows");
    const std::size_t n = preds.cols();
    std::vector<double> p0(n), t0(n), p1(n), t1(n);
    for (std::size_t c = 0; c < n; ++c) {
        p0[c] = preds(0, c);
        t0[c] = targets(0, c);
        p1[c] = preds(1, c);
        t1[c] = targets(1, c);
    }
    TableMetrics m;
    m.charged = evaluate(p0, t0);
    m.discharged = evaluate(p1, t1);
    m.rmse = std::sqrt(squared_diff_sum(preds, targets) / static_cast<double>(2 * n));
    return m;
}

namespace {

std::string r2_str(const std::optional<double>& r2) {
    return r2 ? fmt17(*r2) : std::string("undefined");
}

} // namespace

std::string table_metrics_doc(const TableMetrics& m) {
    std::ostringstream out;
    out << "rmse=" << fmt17(m.rmse) << '\n'
        << "mae_ah_charged=" << fmt17(m.charged.mae) << '\n'
        << "r2_ah_charged=" << r2_str(m.charged.r2) << '\n'
        << "mae_ah_discharged=" << fmt17(m.discharged.mae) << '\n'
        << "r2_ah_discharged=" << r2_str(m.discharged.r2) << '\n';
    return out.str();
}

Matrix mean_deviation_adjust(const Matrix& preds, const Matrix& residuals) {
    if (residuals.cols() == 0 || residuals.rows() != preds.rows()) {
        throw ShapeError("mean_deviation_adjust: residual reference shape mismatch");
    }
    Matrix out = preds;
    for (std::size_t r = 0; r < preds.rows(); ++r) {
        double mean = 0.0;
        for (std::size_t c = 0; c < residuals.cols(); ++c) mean += residuals(r, c);
        mean /= static_cast<double>(residuals.cols());
        for (std::size_t c = 0; c < preds.cols(); ++c) out(r, c) -= mean;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Coulomb counting

namespace {

double round_half_even(double x) {
    const double f = std::floor(x);
    const double frac = x - f;
    if (frac > 0.5) return f + 1.0;
    if (frac < 0.5) return f;
    return std::fmod(f, 2.0) == 0.0 ? f : f + 1.0;
}

int round_soc(double raw, Mode mode) {
    double v = 0.0;
    switch (mode) {
    case Mode::Charging: v = std::ceil(raw); break;
    case Mode::Discharging: v = std::floor(raw); break;
    default: v = round_half_even(raw); break;
    }
    return static_cast<int>(v);
}

} // namespace

SocTrace coulomb_soc(double initial_soc, const Matrix& pred_pairs, double capacity_ah,
                     const std::vector<Mode>& modes, double eta) {
    if (!(capacity_ah > 0.0)) throw InvalidArgument("coulomb_soc: capacity must be positive");
    if (!(initial_soc >= 0.0 && initial_soc <= 100.0)) {
        throw InvalidArgument("coulomb_soc: initial_soc outside [0, 100]");
    }
    if (pred_pairs.rows() != 2) throw ShapeError("coulomb_soc: expects 2 delta rows");
    if (modes.size() != pred_pairs.cols()) {
        throw ShapeError("coulomb_soc: mode count does not match prediction count");
    }

    SocTrace trace;
    trace.initial_soc = initial_soc;
    trace.capacity_ah = capacity_ah;
    trace.raw.reserve(modes.size());
    trace.reported.reserve(modes.size());
    trace.modes = modes;

    double soc = initial_soc;
    for (std::size_t t = 0; t < modes.size(); ++t) {
        double chg = pred_pairs(0, t);
        double dis = pred_pairs(1, t);
        if (chg < 0.0) {
            chg = 0.0;
            ++trace.negative_clamps;
        }
        if (dis < 0.0) {
            dis = 0.0;
            ++trace.negative_clamps;
        }
        soc = telemetry::soc_step(soc, chg, dis, eta, capacity_ah);
        trace.raw.push_back(soc);
        trace.reported.push_back(round_soc(soc, modes[t]));
    }
    return trace;
}

std::vector<Mode> modes_from_deltas(const Matrix& pred_pairs, double dt, double eta) {
    if (pred_pairs.rows() != 2) throw ShapeError("modes_from_deltas: expects 2 delta rows");
    if (!(dt > 0.0)) throw InvalidArgument("modes_from_deltas: dt must be positive");
    const double threshold_ah = telemetry::kIdleThresholdA * dt / 3600.0;
    std::vector<Mode> modes(pred_pairs.cols());
    for (std::size_t t = 0; t < pred_pairs.cols(); ++t) {
        const double net = eta * std::max(pred_pairs(0, t), 0.0) -
                           std::max(pred_pairs(1, t), 0.0);
        if (net > threshold_ah) modes[t] = Mode::Charging;
        else if (net < -threshold_ah) modes[t] = Mode::Discharging;
        else modes[t] = Mode::Idle;
    }
    return modes;
}

// ---------------------------------------------------------------------------
// Model plumbing

const char* model_kind_name(ModelKind k) noexcept {
    switch (k) {
    case ModelKind::PlainLstm: return "plain_lstm";
    case ModelKind::AeBilstm: return "ae_bilstm";
    case ModelKind::MultiOutput: return "multi_output";
    default: return "svr";
    }
}

ModelKind model_kind_from_name(const std::string& s) {
    if (s == "plain_lstm") return ModelKind::PlainLstm;
    if (s == "ae_bilstm") return ModelKind::AeBilstm;
    if (s == "multi_output") return ModelKind::MultiOutput;
    if (s == "svr") return ModelKind::Svr;
    throw ParseError("unknown model kind '" + s + "'");
}

std::size_t ForecastModel::target_dim() const noexcept {
    return kind == ModelKind::MultiOutput ? static_cast<std::size_t>(cells_series) : 2;
}

namespace {

// Inference over one batch of windows already materialized as step inputs.
Matrix infer_steps(const ForecastModel& model, const std::vector<Matrix>& steps) {
    switch (model.kind) {
    case ModelKind::AeBilstm:
        return recurrent::bilstm_infer(model.bilstm, steps);
    case ModelKind::PlainLstm:
    case ModelKind::MultiOutput: {
        const auto states = recurrent::lstm_sequence_forward(
            model.lstm, steps,
            recurrent::LstmState::zero(model.lstm.hidden_size, steps.front().cols()));
        Matrix x = states.back().h;
        for (const auto& layer : model.head) x = nn::dense_forward(layer, x);
        return x;
    }
    default:
        throw StateError("infer_steps: svr models do not run the recurrent path");
    }
}

Matrix svr_predict_pair(const ForecastModel& model, const Matrix& flat_rows) {
    const auto chg = svr::svr_predict_batch(model.svr_charged, flat_rows);
    const auto dis = svr::svr_predict_batch(model.svr_discharged, flat_rows);
    Matrix out(2, flat_rows.rows());
    for (std::size_t c = 0; c < chg.size(); ++c) {
        out(0, c) = chg[c];
        out(1, c) = dis[c];
    }
    return out;
}

constexpr std::size_t kPredictChunk = 256;

} // namespace

Matrix predict_batch(const ForecastModel& model, const WindowSet& windows) {
    if (windows.count() == 0) throw InvalidArgument("predict_batch: empty window set");
    if (windows.feature_dim() != model.features.size()) {
        throw ShapeError("predict_batch: window feature width " +
                         std::to_string(windows.feature_dim()) +
                         " does not match checkpoint " +
                         std::to_string(model.features.size()));
    }
    if (windows.window_len != model.window_len) {
        throw ShapeError("predict_batch: window length differs from checkpoint");
    }

    if (model.kind == ModelKind::Svr) {
        return svr_predict_pair(model, flatten_windows(windows));
    }

    const Matrix* feats = &windows.features;
    Matrix encoded;
    if (model.kind == ModelKind::AeBilstm) {
        encoded = autoencoder::encode(model.ae, windows.features);
        feats = &encoded;
    }

    Matrix out(model.target_dim(), windows.count());
    for (std::size_t begin = 0; begin < windows.count(); begin += kPredictChunk) {
        const std::size_t end = std::min(begin + kPredictChunk, windows.count());
        std::vector<std::size_t> idx(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const auto steps = gather_step_inputs(*feats, windows.starts, idx, windows.window_len);
        const Matrix block = infer_steps(model, steps);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            for (std::size_t r = 0; r < out.rows(); ++r) out(r, idx[j]) = block(r, j);
        }
    }
    return out;
}

WindowSet build_windows_for(const ForecastModel& model, const TelemetrySeries& series) {
    ScalerParams scaler = model.scaler;
    const TargetKind kind = model.kind == ModelKind::MultiOutput
                                ? TargetKind::CellVoltages
                                : TargetKind::AhDeltas;
    return build_windows(series, scaler, model.features, model.window_len, kind);
}

// ---------------------------------------------------------------------------
// Training

TableMetrics TrainingLog::table() const {
    if (per_target.size() != 2) {
        throw StateError("TrainingLog::table: not a dual-target model");
    }
    TableMetrics m;
    m.rmse = joint_rmse;
    m.charged = per_target[0];
    m.discharged = per_target[1];
    return m;
}

namespace {

std::vector<MetricsReport> per_target_metrics(const Matrix& preds, const Matrix& targets) {
    std::vector<MetricsReport> out;
    for (std::size_t r = 0; r < preds.rows(); ++r) {
        std::vector<double> p(preds.cols()), t(preds.cols());
        for (std::size_t c = 0; c < preds.cols(); ++c) {
            p[c] = preds(r, c);
            t[c] = targets(r, c);
        }
        out.push_back(evaluate(p, t));
    }
    return out;
}

void finalize_log(TrainingLog& log, const Matrix& preds, const Matrix& targets) {
    log.per_target = per_target_metrics(preds, targets);
    log.joint_rmse = std::sqrt(squared_diff_sum(preds, targets) /
                               static_cast<double>(preds.size()));
}

struct OptSlot {
    Matrix* param;
    const Matrix* grad = nullptr;
    nn::AdamState state;
};

void bind_lstm(std::vector<OptSlot>& slots, recurrent::LstmParams& p, double lr) {
    for (Matrix* t : {&p.W_f, &p.W_i, &p.W_C, &p.W_o, &p.b_f, &p.b_i, &p.b_C, &p.b_o}) {
        slots.push_back({t, nullptr, nn::AdamState::init(*t, lr)});
    }
}

void attach_lstm_grads(std::vector<OptSlot>& slots, std::size_t& cursor,
                       const recurrent::LstmGradients& g) {
    for (const Matrix* t : {&g.W_f, &g.W_i, &g.W_C, &g.W_o, &g.b_f, &g.b_i, &g.b_C, &g.b_o}) {
        slots[cursor++].grad = t;
    }
}

void apply_slots(std::vector<OptSlot>& slots) {
    for (auto& s : slots) {
        nn::adam_step(s.state, *s.param, *s.grad);
        s.grad = nullptr;
    }
}

constexpr double kClipNorm = 5.0;

void clip_lstm_grads(recurrent::LstmGradients& fwd, recurrent::LstmGradients* bwd) {
    double nrm2 = fwd.squared_norm();
    if (bwd) nrm2 += bwd->squared_norm();
    if (nrm2 > kClipNorm * kClipNorm) {
        const double s = kClipNorm / std::sqrt(nrm2);
        fwd.scale(s);
        if (bwd) bwd->scale(s);
    }
}

void check_windows_for_training(const WindowSet& train, const WindowSet& val,
                                TargetKind expected) {
    if (train.kind != expected || val.kind != expected) {
        throw InvalidArgument("training: window target kind does not match the model");
    }
    if (train.count() == 0 || val.count() == 0) {
        throw InvalidArgument("training: empty window set");
    }
    if (train.feature_dim() != val.feature_dim()) {
        throw ShapeError("training: train/validation feature widths differ");
    }
}

double validation_loss(const std::function<Matrix(const std::vector<std::size_t>&)>& infer,
                       const WindowSet& val) {
    double sse = 0.0;
    for (std::size_t begin = 0; begin < val.count(); begin += kPredictChunk) {
        const std::size_t end = std::min(begin + kPredictChunk, val.count());
        std::vector<std::size_t> idx(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const Matrix preds = infer(idx);
        const Matrix targets = gather_columns(val.targets, idx);
        sse += squared_diff_sum(preds, targets);
    }
    return sse / static_cast<double>(val.targets.size());
}

} // namespace

FinalModelResult train_final_model(const WindowSet& train, const WindowSet& val,
                                   const TrainConfig& cfg) {
    check_windows_for_training(train, val, TargetKind::AhDeltas);

    // Stage 1: pre-train the feature compressor on the training split, then
    // freeze it.
    autoencoder::AeTrainConfig ae_cfg;
    ae_cfg.latent = cfg.latent;
    ae_cfg.lr = cfg.ae_lr;
    ae_cfg.epochs = cfg.ae_epochs;
    ae_cfg.seed = cfg.seed + 1;
    auto ae = autoencoder::train_autoencoder(train.features, ae_cfg);

    const Matrix enc_train = autoencoder::encode(ae.params, train.features);
    const Matrix enc_val = autoencoder::encode(ae.params, val.features);

    // Stage 2: BiLSTM with batchnorm + dropout + dense head.
    std::mt19937_64 rng(cfg.seed + 2);
    recurrent::BiLstmModel net;
    net.forward_params = recurrent::LstmParams::init(cfg.hidden, cfg.latent, rng);
    net.backward_params = recurrent::LstmParams::init(cfg.hidden, cfg.latent, rng);
    net.head.push_back(nn::DenseParams::init(64, 2 * cfg.hidden, nn::Activation::ReLU, rng));
    net.head.push_back(nn::DenseParams::init(32, 64, nn::Activation::ReLU, rng));
    net.head.push_back(nn::DenseParams::init(2, 32, nn::Activation::Linear, rng));
    net.batchnorm = nn::BatchNormParams::init(2 * cfg.hidden);
    net.dropout = nn::DropoutSpec(cfg.dropout, cfg.seed + 3);

    std::vector<OptSlot> slots;
    bind_lstm(slots, net.forward_params, cfg.lr);
    bind_lstm(slots, net.backward_params, cfg.lr);
    slots.push_back({&net.batchnorm.gamma, nullptr, nn::AdamState::init(net.batchnorm.gamma, cfg.lr)});
    slots.push_back({&net.batchnorm.beta, nullptr, nn::AdamState::init(net.batchnorm.beta, cfg.lr)});
    for (auto& layer : net.head) {
        slots.push_back({&layer.weights, nullptr, nn::AdamState::init(layer.weights, cfg.lr)});
        slots.push_back({&layer.bias, nullptr, nn::AdamState::init(layer.bias, cfg.lr)});
    }

    std::mt19937_64 shuffle_rng(cfg.seed + 4);
    std::vector<std::size_t> order(train.count());
    std::iota(order.begin(), order.end(), std::size_t{0});

    TrainingLog log;
    recurrent::BiLstmModel best = net;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double sse = 0.0;
        std::size_t elems = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
            const std::size_t end = std::min(begin + cfg.batch, order.size());
            if (end - begin < 2) continue; // batchnorm needs >= 2 samples
            const std::vector<std::size_t> idx(order.begin() + begin, order.begin() + end);

            const auto steps = gather_step_inputs(enc_train, train.starts, idx, train.window_len);
            const Matrix targets = gather_columns(train.targets, idx);

            recurrent::BiLstmCache cache;
            const Matrix out = recurrent::bilstm_forward(net, steps, true, cache);
            const auto mse = nn::mse_loss(out, targets);
            sse += mse.loss * static_cast<double>(out.size());
            elems += out.size();

            auto grads = recurrent::bilstm_backward(net, cache, mse.gradient);
            clip_lstm_grads(grads.fwd, &grads.bwd);

            std::size_t cursor = 0;
            attach_lstm_grads(slots, cursor, grads.fwd);
            attach_lstm_grads(slots, cursor, grads.bwd);
            slots[cursor++].grad = &grads.bn.d_gamma;
            slots[cursor++].grad = &grads.bn.d_beta;
            for (const auto& h : grads.head) {
                slots[cursor++].grad = &h.d_weights;
                slots[cursor++].grad = &h.d_bias;
            }
            apply_slots(slots);
        }
        const double train_loss = sse / static_cast<double>(elems);

        const double val_loss = validation_loss(
            [&](const std::vector<std::size_t>& idx) {
                return recurrent::bilstm_infer(
                    net, gather_step_inputs(enc_val, val.starts, idx, val.window_len));
            },
            val);

        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            throw TrainingError("train_final_model: loss diverged at epoch " +
                                std::to_string(epoch));
        }
        log.epochs.push_back({epoch, train_loss, val_loss});
        if (val_loss < best_val) {
            best_val = val_loss;
            best = net;
            best_epoch = epoch;
        } else if (epoch - best_epoch >= cfg.patience) {
            break;
        }
    }

    FinalModelResult result;
    result.ae = ae.params;
    result.net = best;
    result.log = log;
    result.log.best_epoch = best_epoch;

    std::vector<std::size_t> all(val.count());
    std::iota(all.begin(), all.end(), std::size_t{0});
    Matrix preds(2, val.count());
    for (std::size_t begin = 0; begin < val.count(); begin += kPredictChunk) {
        const std::size_t end = std::min(begin + kPredictChunk, val.count());
        const std::vector<std::size_t> idx(all.begin() + begin, all.begin() + end);
        const Matrix block = recurrent::bilstm_infer(
            result.net, gather_step_inputs(enc_val, val.starts, idx, val.window_len));
        for (std::size_t j = 0; j < idx.size(); ++j) {
            preds(0, idx[j]) = block(0, j);
            preds(1, idx[j]) = block(1, j);
        }
    }
    finalize_log(result.log, preds, val.targets);
    return result;
}

namespace {

struct LstmRegressorResult {
    recurrent::LstmParams lstm;
    std::vector<nn::DenseParams> head;
    nn::DropoutSpec dropout;
    TrainingLog log;
};

struct HeadLayerSpec {
    std::size_t width;
    nn::Activation act;
};

// Shared trainer for the plain LSTM baseline and the multi-output per-cell
// model: LSTM trunk, optional dropout on the final hidden state, dense head.
LstmRegressorResult train_lstm_regressor(const WindowSet& train, const WindowSet& val,
                                         const TrainConfig& cfg,
                                         const std::vector<HeadLayerSpec>& head_spec,
                                         double dropout_rate) {
    if (train.count() == 0 || val.count() == 0) {
        throw InvalidArgument("training: empty window set");
    }

    std::mt19937_64 rng(cfg.seed + 2);
    LstmRegressorResult model;
    model.lstm = recurrent::LstmParams::init(cfg.hidden, train.feature_dim(), rng);
    std::size_t in_width = cfg.hidden;
    for (const auto& spec : head_spec) {
        model.head.push_back(nn::DenseParams::init(spec.width, in_width, spec.act, rng));
        in_width = spec.width;
    }
    model.dropout = nn::DropoutSpec(dropout_rate, cfg.seed + 3);

    std::vector<OptSlot> slots;
    bind_lstm(slots, model.lstm, cfg.lr);
    for (auto& layer : model.head) {
        slots.push_back({&layer.weights, nullptr, nn::AdamState::init(layer.weights, cfg.lr)});
        slots.push_back({&layer.bias, nullptr, nn::AdamState::init(layer.bias, cfg.lr)});
    }

    auto infer = [&](const std::vector<std::size_t>& idx) {
        const auto steps = gather_step_inputs(val.features, val.starts, idx, val.window_len);
        const auto states = recurrent::lstm_sequence_forward(
            model.lstm, steps, recurrent::LstmState::zero(cfg.hidden, idx.size()));
        Matrix x = states.back().h;
        for (const auto& layer : model.head) x = nn::dense_forward(layer, x);
        return x;
    };

    std::mt19937_64 shuffle_rng(cfg.seed + 4);
    std::vector<std::size_t> order(train.count());
    std::iota(order.begin(), order.end(), std::size_t{0});

    auto best = model;
    double best_val = std::numeric_limits<double>::infinity();
    std::size_t best_epoch = 0;

    for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
        std::shuffle(order.begin(), order.end(), shuffle_rng);
        double sse = 0.0;
        std::size_t elems = 0;
        for (std::size_t begin = 0; begin < order.size(); begin += cfg.batch) {
            const std::size_t end = std::min(begin + cfg.batch, order.size());
            const std::vector<std::size_t> idx(order.begin() + begin, order.begin() + end);

            const auto steps = gather_step_inputs(train.features, train.starts, idx,
                                                  train.window_len);
            const Matrix targets = gather_columns(train.targets, idx);

            recurrent::LstmSequenceCache seq_cache;
            const auto states = recurrent::lstm_sequence_forward(
                model.lstm, steps, recurrent::LstmState::zero(cfg.hidden, idx.size()),
                seq_cache);

            Matrix mask;
            Matrix x = model.dropout.forward(states.back().h, true, mask);
            std::vector<nn::DenseCache> head_caches(model.head.size());
            for (std::size_t l = 0; l < model.head.size(); ++l) {
                x = nn::dense_forward(model.head[l], x, head_caches[l]);
            }
            const auto mse = nn::mse_loss(x, targets);
            sse += mse.loss * static_cast<double>(x.size());
            elems += x.size();

            Matrix d = mse.gradient;
            std::vector<nn::DenseGradients> head_grads(model.head.size());
            for (std::size_t l = model.head.size(); l-- > 0;) {
                head_grads[l] = nn::dense_backward(model.head[l], head_caches[l], d);
                d = head_grads[l].d_input;
            }
            d = nn::dropout_backward(mask, d);

            std::vector<Matrix> d_h(steps.size());
            d_h.back() = d;
            auto lstm_grads = recurrent::lstm_bptt(model.lstm, seq_cache, d_h);
            clip_lstm_grads(lstm_grads, nullptr);

            std::size_t cursor = 0;
            attach_lstm_grads(slots, cursor, lstm_grads);
            for (const auto& h : head_grads) {
                slots[cursor++].grad = &h.d_weights;
                slots[cursor++].grad = &h.d_bias;
            }
            apply_slots(slots);
        }
        const double train_loss = sse / static_cast<double>(elems);
        const double val_loss = validation_loss(infer, val);
        if (!std::isfinite(train_loss) || !std::isfinite(val_loss)) {
            throw TrainingError("train_lstm_regressor: loss diverged at epoch " +
                                std::to_string(epoch));
        }
        model.log.epochs.push_back({epoch, train_loss, val_loss});
        if (val_loss < best_val) {
            best_val = val_loss;
            best_epoch = epoch;
            best.lstm = model.lstm;
            best.head = model.head;
        } else if (epoch - best_epoch >= cfg.patience) {
            break;
        }
    }

    best.log = model.log;
    best.log.best_epoch = best_epoch;
    best.dropout = model.dropout;
    model = best;

    Matrix preds(val.target_dim(), val.count());
    for (std::size_t begin = 0; begin < val.count(); begin += kPredictChunk) {
        const std::size_t end = std::min(begin + kPredictChunk, val.count());
        std::vector<std::size_t> idx(end - begin);
        std::iota(idx.begin(), idx.end(), begin);
        const Matrix block = infer(idx);
        for (std::size_t j = 0; j < idx.size(); ++j) {
            for (std::size_t r = 0; r < preds.rows(); ++r) preds(r, idx[j]) = block(r, j);
        }
    }
    finalize_log(model.log, preds, val.targets);
    return model;
}

std::map<std::string, double> hyper_map(const TrainConfig& cfg) {
    return {
        {"lr", cfg.lr},
        {"batch", static_cast<double>(cfg.batch)},
        {"epochs", static_cast<double>(cfg.epochs)},
        {"patience", static_cast<double>(cfg.patience)},
        {"window_len", static_cast<double>(cfg.window_len)},
        {"latent", static_cast<double>(cfg.latent)},
        {"hidden", static_cast<double>(cfg.hidden)},
        {"dropout", cfg.dropout},
        {"split_ratio", cfg.split_ratio},
        {"seed", static_cast<double>(cfg.seed)},
        {"ae_epochs", static_cast<double>(cfg.ae_epochs)},
        {"ae_lr", cfg.ae_lr},
        {"svr_c", cfg.svr.C},
        {"svr_epsilon", cfg.svr.epsilon},
        {"svr_gamma", cfg.svr.gamma},
        {"svr_tolerance", cfg.svr.tolerance},
        {"svr_max_passes", static_cast<double>(cfg.svr.max_passes)},
    };
}

} // namespace

TrainOutcome train_model(const TelemetrySeries& series, const TrainConfig& cfg) {
    const auto [train_series, val_series] = telemetry::chronological_split(series, cfg.split_ratio);

    const std::vector<std::string> features =
        cfg.kind == ModelKind::MultiOutput
            ? cell_voltage_features(series.spec.cells_series)
            : default_features(series.spec.cells_series);
    const ScalerParams scaler = fit_scaler(train_series, features);
    const TargetKind target_kind = cfg.kind == ModelKind::MultiOutput
                                       ? TargetKind::CellVoltages
                                       : TargetKind::AhDeltas;

    const WindowSet train_ws =
        build_windows(train_series, scaler, features, cfg.window_len, target_kind);
    const WindowSet val_ws =
        build_windows(val_series, scaler, features, cfg.window_len, target_kind);

    TrainOutcome outcome;
    ForecastModel& model = outcome.model;
    model.kind = cfg.kind;
    model.features = features;
    model.scaler = scaler;
    model.window_len = cfg.window_len;
    model.dt = series.dt;
    model.capacity_ah = series.spec.capacity_ah;
    model.eta = series.spec.coulombic_efficiency;
    model.cells_series = series.spec.cells_series;
    model.hyper = hyper_map(cfg);

    switch (cfg.kind) {
    case ModelKind::AeBilstm: {
        auto r = train_final_model(train_ws, val_ws, cfg);
        model.ae = r.ae;
        model.bilstm = r.net;
        outcome.log = r.log;
        break;
    }
    case ModelKind::PlainLstm: {
        auto r = train_lstm_regressor(train_ws, val_ws, cfg,
                                      {{32, nn::Activation::ReLU},
                                       {16, nn::Activation::ReLU},
                                       {2, nn::Activation::Linear}},
                                      cfg.dropout);
        model.lstm = r.lstm;
        model.head = r.head;
        model.dropout = r.dropout;
        outcome.log = r.log;
        break;
    }
    case ModelKind::MultiOutput: {
        auto r = train_lstm_regressor(
            train_ws, val_ws, cfg,
            {{static_cast<std::size_t>(series.spec.cells_series), nn::Activation::Linear}},
            0.0);
        model.lstm = r.lstm;
        model.head = r.head;
        model.dropout = r.dropout;
        outcome.log = r.log;
        break;
    }
    case ModelKind::Svr: {
        const Matrix flat = flatten_windows(train_ws);
        std::vector<double> y_chg(train_ws.count()), y_dis(train_ws.count());
        for (std::size_t w = 0; w < train_ws.count(); ++w) {
            y_chg[w] = train_ws.targets(0, w);
            y_dis[w] = train_ws.targets(1, w);
        }
        model.svr_charged = svr::svr_train(flat, y_chg, cfg.svr);
        model.svr_discharged = svr::svr_train(flat, y_dis, cfg.svr);
        const Matrix preds = predict_batch(model, val_ws);
        finalize_log(outcome.log, preds, val_ws.targets);
        break;
    }
    }
    return outcome;
}

// ---------------------------------------------------------------------------
// Autoregressive forecasting

ForecastResult forecast_autoregressive(const ForecastModel& model,
                                       const TelemetrySeries& seed_series,
                                       std::size_t start, std::size_t horizon) {
    if (horizon < 1) throw InvalidArgument("forecast: horizon must be >= 1");
    if (model.kind == ModelKind::MultiOutput) {
        throw InvalidArgument("forecast: requires a model with (dAh_chg, dAh_dis) targets");
    }
    const std::size_t window = model.window_len;
    if (start < window) {
        throw InvalidArgument("forecast: start must leave a full seed window");
    }
    if (start > seed_series.size()) {
        throw InvalidArgument("forecast: start lies beyond the seed series");
    }

    const std::size_t f_dim = model.features.size();
    const std::size_t soc_f = feature_index(model.features, "soc");
    const std::size_t chg_f = feature_index(model.features, "ah_charged");
    const std::size_t dis_f = feature_index(model.features, "ah_discharged");

    // Raw feature state: last observed values persist; SoC and counters evolve.
    std::vector<double> raw(f_dim);
    for (std::size_t f = 0; f < f_dim; ++f) {
        raw[f] = extract_feature(seed_series.records[start - 1], model.features[f]);
    }
    double soc = seed_series.records[start - 1].soc;
    double ah_chg = seed_series.records[start - 1].ah_charged_cum;
    double ah_dis = seed_series.records[start - 1].ah_discharged_cum;

    // Scaled sliding window (columns oldest..newest).
    Matrix win(f_dim, window);
    for (std::size_t t = 0; t < window; ++t) {
        const auto& rec = seed_series.records[start - window + t];
        for (std::size_t f = 0; f < f_dim; ++f) {
            win(f, t) = model.scaler.transform_one(f, extract_feature(rec, model.features[f]));
        }
    }

    const double threshold_ah = telemetry::kIdleThresholdA * model.dt / 3600.0;

    ForecastResult result;
    result.preds = Matrix(2, horizon);
    result.modes.reserve(horizon);

    for (std::size_t h = 0; h < horizon; ++h) {
        Matrix out;
        if (model.kind == ModelKind::Svr) {
            Matrix flat(1, window * f_dim);
            for (std::size_t t = 0; t < window; ++t) {
                for (std::size_t f = 0; f < f_dim; ++f) flat(0, t * f_dim + f) = win(f, t);
            }
            out = svr_predict_pair(model, flat);
        } else {
            std::vector<Matrix> steps(window, Matrix(f_dim, 1));
            for (std::size_t t = 0; t < window; ++t) {
                for (std::size_t f = 0; f < f_dim; ++f) steps[t](f, 0) = win(f, t);
            }
            if (model.kind == ModelKind::AeBilstm) {
                for (auto& s : steps) s = autoencoder::encode(model.ae, s);
            }
            out = infer_steps(model, steps);
        }
        const double pred_chg = out(0, 0);
        const double pred_dis = out(1, 0);
        result.preds(0, h) = pred_chg;
        result.preds(1, h) = pred_dis;

        const double chg = std::max(pred_chg, 0.0);
        const double dis = std::max(pred_dis, 0.0);
        soc = telemetry::soc_step(soc, chg, dis, model.eta, model.capacity_ah);
        ah_chg += chg;
        ah_dis += dis;

        const double net = model.eta * chg - dis;
        Mode mode = Mode::Idle;
        if (net > threshold_ah) mode = Mode::Charging;
        else if (net < -threshold_ah) mode = Mode::Discharging;
        result.modes.push_back(mode);

        if (soc_f < f_dim) raw[soc_f] = soc;
        if (chg_f < f_dim) raw[chg_f] = ah_chg;
        if (dis_f < f_dim) raw[dis_f] = ah_dis;

        // Slide the window and append the closed-loop feature column.
        for (std::size_t t = 0; t + 1 < window; ++t) {
            for (std::size_t f = 0; f < f_dim; ++f) win(f, t) = win(f, t + 1);
        }
        for (std::size_t f = 0; f < f_dim; ++f) {
            win(f, window - 1) = model.scaler.transform_one(f, raw[f]);
        }
    }

    result.soc = coulomb_soc(seed_series.records[start - 1].soc, result.preds,
                             model.capacity_ah, result.modes, model.eta);
    return result;
}

} // namespace bsf::pipeline
