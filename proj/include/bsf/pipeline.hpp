#pragma once

#include "bsf/autoencoder.hpp"
#include "bsf/lstm.hpp"
#include "bsf/svr.hpp"
#include "bsf/telemetry.hpp"

#include <map>
#include <optional>
#include <string>
#include <vector>

namespace bsf::pipeline {

using telemetry::Mode;
using telemetry::TelemetrySeries;

// ---------------------------------------------------------------------------
// Min-max scaling, fitted on the training split only. Constant features map
// to 0; validation data may land outside [0, 1], which is expected.
struct ScalerParams {
    std::vector<double> min;
    std::vector<double> max;

    std::size_t features() const noexcept { return min.size(); }
    double transform_one(std::size_t f, double v) const;
    Matrix transform(const Matrix& raw) const;            // features x n
    Matrix inverse_transform(const Matrix& scaled) const; // constant features stay at min
};

// soc, pack_voltage, current, ah_charged, ah_discharged, cell_v_01.. — the
// model inputs (temperature stays telemetry-only).
std::vector<std::string> default_features(int cells_series);
std::vector<std::string> cell_voltage_features(int cells_series);

Matrix feature_matrix(const TelemetrySeries& series, const std::vector<std::string>& features);
ScalerParams fit_scaler(const TelemetrySeries& train, const std::vector<std::string>& features);

// ---------------------------------------------------------------------------
enum class TargetKind { AhDeltas, CellVoltages };

// Sliding windows over one chronological split; window w reads feature
// columns [starts[w], starts[w]+window_len) and its target is the step
// immediately after. Targets stay in physical units.
struct WindowSet {
    std::size_t window_len = 0;
    Matrix features; // feature_dim x n, scaled
    std::vector<std::size_t> starts;
    Matrix targets; // target_dim x count
    TargetKind kind = TargetKind::AhDeltas;

    std::size_t count() const noexcept { return starts.size(); }
    std::size_t feature_dim() const noexcept { return features.rows(); }
    std::size_t target_dim() const noexcept { return targets.rows(); }
};

WindowSet build_windows(const TelemetrySeries& series, const ScalerParams& scaler,
                        const std::vector<std::string>& features, std::size_t window_len,
                        TargetKind kind = TargetKind::AhDeltas);

// ---------------------------------------------------------------------------
struct MetricsReport {
    double mae = 0.0;
    double rmse = 0.0;
    std::optional<double> r2; // absent when targets are all identical
};

MetricsReport evaluate(const std::vector<double>& preds, const std::vector<double>& targets);

// Table-shaped summary for the dual-target models: one joint RMSE plus
// MAE / R^2 per target.
struct TableMetrics {
    double rmse = 0.0;
    MetricsReport charged;
    MetricsReport discharged;
};

TableMetrics table_metrics(const Matrix& preds, const Matrix& targets); // both 2 x n
std::string table_metrics_doc(const TableMetrics& m);

// Subtracts the per-row mean of the reference residuals (pred - target) from
// every prediction.
Matrix mean_deviation_adjust(const Matrix& preds, const Matrix& residuals);

// ---------------------------------------------------------------------------
// Coulomb counting with BMS-style rounding: the raw trace keeps full
// precision; reported SoC is ceil while charging, floor while discharging,
// round-half-even at idle.
struct SocTrace {
    double initial_soc = 0.0;
    double capacity_ah = 0.0;
    std::vector<double> raw;
    std::vector<int> reported;
    std::vector<Mode> modes;
    std::size_t negative_clamps = 0;
};

SocTrace coulomb_soc(double initial_soc, const Matrix& pred_pairs /* 2 x n */,
                     double capacity_ah, const std::vector<Mode>& modes, double eta = 1.0);

// Mode labels implied by predicted deltas (net flow vs the idle band).
std::vector<Mode> modes_from_deltas(const Matrix& pred_pairs, double dt, double eta = 1.0);

// ---------------------------------------------------------------------------
enum class ModelKind { PlainLstm, AeBilstm, MultiOutput, Svr };

const char* model_kind_name(ModelKind k) noexcept;
ModelKind model_kind_from_name(const std::string& s); // throws ParseError

// Everything a checkpoint stores; unused sections stay empty per kind.
struct ForecastModel {
    ModelKind kind = ModelKind::AeBilstm;
    int format_version = 1;
    std::vector<std::string> features;
    ScalerParams scaler;
    std::size_t window_len = 32;
    double dt = 10.0;
    double capacity_ah = 360.0;
    double eta = 1.0;
    int cells_series = 16;
    std::map<std::string, double> hyper;

    autoencoder::AutoencoderParams ae; // ae_bilstm
    recurrent::BiLstmModel bilstm;     // ae_bilstm

    recurrent::LstmParams lstm;        // plain_lstm, multi_output
    std::vector<nn::DenseParams> head; // plain_lstm, multi_output
    nn::DropoutSpec dropout;           // plain_lstm

    svr::SvrModel svr_charged; // svr
    svr::SvrModel svr_discharged;

    std::size_t target_dim() const noexcept;
};

struct TrainConfig {
    ModelKind kind = ModelKind::AeBilstm;
    double lr = 0.001;
    std::size_t batch = 16;
    std::size_t epochs = 100;
    std::size_t patience = 10;
    std::size_t window_len = 32;
    std::size_t latent = 8;
    std::size_t hidden = 64;
    double dropout = 0.3;
    double split_ratio = 0.8;
    std::uint64_t seed = 42;
    std::size_t ae_epochs = 150;
    double ae_lr = 0.005;
    svr::SvrHyperparams svr;
};

struct EpochStats {
    std::size_t epoch = 0;
    double train_loss = 0.0;
    double val_loss = 0.0;
};

struct TrainingLog {
    std::vector<EpochStats> epochs;
    std::size_t best_epoch = 0;
    std::vector<MetricsReport> per_target; // validation, returned parameters
    double joint_rmse = 0.0;
    TableMetrics table() const; // valid for dual-target kinds
};

struct TrainOutcome {
    ForecastModel model;
    TrainingLog log;
};

// The final architecture: pre-trained (frozen) autoencoder feeding the
// BiLSTM; Adam + MSE with LSTM-gradient clipping; returns the parameters of
// the best validation epoch.
struct FinalModelResult {
    autoencoder::AutoencoderParams ae;
    recurrent::BiLstmModel net;
    TrainingLog log;
};
FinalModelResult train_final_model(const WindowSet& train, const WindowSet& val,
                                   const TrainConfig& cfg);

// Splits, scales, windows and trains one of the four model kinds end to end.
TrainOutcome train_model(const TelemetrySeries& series, const TrainConfig& cfg);

Matrix predict_batch(const ForecastModel& model, const WindowSet& windows);

// Scaled model inputs for one window batch (encoded for ae_bilstm).
WindowSet build_windows_for(const ForecastModel& model, const TelemetrySeries& series);

struct ForecastResult {
    Matrix preds; // 2 x horizon, raw model outputs
    SocTrace soc;
    std::vector<Mode> modes;
};

// Rolls the window forward on its own predictions: SoC and Ah counters follow
// the Coulomb update, every other feature persists at its last observed value.
ForecastResult forecast_autoregressive(const ForecastModel& model,
                                       const TelemetrySeries& seed_series,
                                       std::size_t start, std::size_t horizon);

} // namespace bsf::pipeline
