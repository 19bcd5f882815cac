#pragma once

#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "flowcast/common.hpp"

namespace flowcast::nn {

// ============================================================================
// Model description
// ============================================================================

enum class ModelKind {
    Seq2Seq,  // encoder stack -> autoregressive decoder stack -> dense head per step
    Direct,   // encoder stack -> dense head over the final hidden state (all steps at once)
};

struct ModelSpec {
    ModelKind kind = ModelKind::Seq2Seq;
    size_t input_dim = 0;
    std::vector<size_t> encoder_units;  // one entry per encoder LSTM layer
    std::vector<size_t> decoder_units;  // per decoder layer; empty for Direct
    std::vector<size_t> dense_units;    // hidden dense sizes before the output layer
    double dropout_rate = 0.0;
    size_t look_back = 0;
    size_t horizon = 0;
    size_t output_dim = 1;

    void validate() const;
    size_t encoder_layers() const { return encoder_units.size(); }
    size_t decoder_layers() const { return decoder_units.size(); }
};

// ============================================================================
// Parameters
// ============================================================================

// Gate blocks are laid out [i | f | g | o] along the 4U axis. Weights are
// stored input-major (in x 4U) so the forward input product is a plain
// row-streaming GEMM.
struct LstmLayer {
    Mat wx;  // (in x 4U)
    Mat wh;  // (U x 4U)
    Mat b;   // (1 x 4U)
    size_t units() const { return wh.rows; }
    size_t input() const { return wx.rows; }
};

struct DenseLayer {
    Mat w;  // (in x out)
    Mat b;  // (1 x out)
};

struct NetworkWeights {
    std::vector<LstmLayer> encoder;
    std::vector<LstmLayer> decoder;
    std::vector<DenseLayer> dense;  // hidden layers then the output layer

    static NetworkWeights init(const ModelSpec& spec, uint64_t seed);
    static NetworkWeights zeros(const ModelSpec& spec);

    // fixed block enumeration order shared by Adam state and the model file
    void visit(const std::function<void(const std::string&, Mat&)>& fn);
    void visit(const std::function<void(const std::string&, const Mat&)>& fn) const;
    bool all_finite() const;
    size_t parameter_count() const;
};

struct AdamState {
    double learning_rate = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    size_t t = 0;
    std::vector<Mat> m;  // aligned with NetworkWeights::visit order
    std::vector<Mat> v;

    static AdamState init(const NetworkWeights& w, double lr, double beta1 = 0.9,
                          double beta2 = 0.999, double epsilon = 1e-8);
};

// Applies one bias-corrected Adam update. Throws NonFiniteGradient (weights
// untouched) if any gradient entry is not finite.
void adam_step(NetworkWeights& w, const NetworkWeights& g, AdamState& s);

// ============================================================================
// Forward / backward
// ============================================================================

// Sequences are stored t-major: row (t * batch + b) of a (T*B x D) matrix
// holds sample b at step t.

struct LstmSeqCache {
    size_t batch = 0, steps = 0;
    Mat x;        // (T*B x in) layer input (after any dropout)
    Mat gates;    // (T*B x 4U) post-activation
    Mat c;        // (T*B x U)
    Mat tanh_c;   // (T*B x U)
    Mat h;        // (T*B x U)
    Mat h0, c0;   // (B x U) initial state
};

struct LstmGrads {
    Mat dwx, dwh, db;
};

// Runs a full LSTM layer over a t-major input block. h0/c0 may be empty
// (zero state).
void lstm_forward(const LstmLayer& layer, const Mat& x, size_t batch, size_t steps, const Mat* h0,
                  const Mat* c0, LstmSeqCache& cache);

// Whole-layer BPTT given per-step output grads plus final-state grads.
// Produces parameter grads, input grads and initial-state grads.
void lstm_backward(const LstmLayer& layer, const LstmSeqCache& cache, const Mat& dh_steps,
                   const Mat* dh_final, const Mat* dc_final, LstmGrads& grads, Mat& dx, Mat& dh0,
                   Mat& dc0);

struct ForwardCache;  // defined in neural.cpp

struct ForwardOptions {
    bool training = false;
    // Teacher inputs: (H*B x output_dim) t-major ground truth; required in
    // training when any teacher_mask entry is 1.
    const Mat* teacher = nullptr;
    // Per-step decision for decoder input at step k >= 1: 1 = ground truth
    // (teacher forcing), 0 = previous prediction. Entry 0 is ignored; the
    // first decoder input is always the last observed target value.
    std::vector<uint8_t> teacher_mask;
    Rng* dropout_rng = nullptr;  // required when training and dropout_rate > 0
};

class Seq2SeqModel {
public:
    Seq2SeqModel(const ModelSpec& spec, NetworkWeights weights);

    const ModelSpec& spec() const { return spec_; }
    const NetworkWeights& weights() const { return weights_; }
    NetworkWeights& mutable_weights() { return weights_; }

    // x: (look_back*B x input_dim) t-major; y_last: per-sample last observed
    // target value. Returns predictions (horizon*B x output_dim) t-major.
    Mat forward(const Mat& x, size_t batch, const std::vector<double>& y_last,
                const ForwardOptions& opts, ForwardCache* cache) const;

    // Gradients of the cached forward pass w.r.t. every parameter.
    NetworkWeights backward(const ForwardCache& cache, const Mat& dpred) const;

private:
    ModelSpec spec_;
    NetworkWeights weights_;
};

std::pair<double, Mat> mae_loss(const Mat& pred, const Mat& target);

ForwardCache* new_forward_cache();
void free_forward_cache(ForwardCache*);

// RAII holder so train loops can reuse one cache allocation
class CacheHolder {
public:
    CacheHolder() : cache_(new_forward_cache()) {}
    ~CacheHolder() { free_forward_cache(cache_); }
    CacheHolder(const CacheHolder&) = delete;
    CacheHolder& operator=(const CacheHolder&) = delete;
    ForwardCache* get() const { return cache_; }

private:
    ForwardCache* cache_;
};

// ============================================================================
// Supervised windows
// ============================================================================

struct WindowArray {
    size_t look_back = 0, horizon = 0, features = 0;
    Mat inputs;                  // N x (look_back * features), step-major rows
    Mat targets;                 // N x horizon
    std::vector<double> y_last;  // per window: target value at the last input step
    size_t count() const { return inputs.rows; }
};

// Assemble a t-major batch from selected windows.
void gather_batch(const WindowArray& w, const std::vector<uint32_t>& idx, Mat& x, Mat& y,
                  std::vector<double>& y_last);

// ============================================================================
// Training
// ============================================================================

struct TrainConfig {
    double learning_rate = 1e-3;
    size_t batch_size = 32;
    size_t max_epochs = 100;
    size_t patience = 10;
    double teacher_forcing = 1.0;
    size_t eval_batch = 256;
};

struct EpochStats {
    size_t epoch = 0;
    double train_mae = 0.0;
    double val_mae = 0.0;
};

struct TrainResult {
    NetworkWeights weights;
    std::vector<EpochStats> trace;
    size_t best_epoch = 0;     // 1-based; 0 when nothing was trained
    double best_val_mae = std::numeric_limits<double>::infinity();
};

TrainResult train(const ModelSpec& spec, const WindowArray& windows,
                  const std::vector<uint32_t>& train_idx, const std::vector<uint32_t>& val_idx,
                  const TrainConfig& cfg, uint64_t seed);

// Continue optimizing existing weights in place (drift adaptation). No early
// stopping, no validation; returns per-epoch training MAE.
std::vector<double> fine_tune(const ModelSpec& spec, NetworkWeights& weights,
                              const WindowArray& windows, const std::vector<uint32_t>& idx,
                              const TrainConfig& cfg, uint64_t seed);

// Dropout-free batched inference MAE over the given windows.
double evaluate_mae(const ModelSpec& spec, const NetworkWeights& weights, const WindowArray& windows,
                    const std::vector<uint32_t>& idx, size_t eval_batch = 256);

// Predictions for a set of windows, one row per window (horizon columns).
Mat predict_windows(const ModelSpec& spec, const NetworkWeights& weights, const WindowArray& windows,
                    const std::vector<uint32_t>& idx, size_t eval_batch = 256);

// ============================================================================
// Model file
// ============================================================================

struct ModelFile {
    ModelSpec spec;
    NetworkWeights weights;
    std::string preprocess_fingerprint;
    std::string config_hash;
    std::vector<std::string> feature_names;
    double validation_mae = std::numeric_limits<double>::quiet_NaN();
    double base_learning_rate = 1e-3;

    std::string to_json() const;
    static ModelFile from_json(const std::string& text);
    void save(const std::string& path) const;
    static ModelFile load(const std::string& path);
};

void write_trace_csv(const std::vector<EpochStats>& trace, const std::string& path);

}  // namespace flowcast::nn
