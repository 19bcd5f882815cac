#pragma once

#include <array>
#include <string>
#include <vector>

#include "flowcast/common.hpp"
#include "flowcast/neural.hpp"
#include "flowcast/preprocess.hpp"
#include "flowcast/search.hpp"

namespace flowcast::eval {

// ============================================================================
// Supervised windows with chronological splits
// ============================================================================

enum class Split { Train, Val, Test };

// Stride-1 sliding windows over a multivariate series. Windows never span a
// segment break, and split assignment is purged: a window belongs to a split
// only if its whole [start, start+L+H) extent lies inside that split's index
// range, so no training window overlaps validation or test time.
class WindowedSet {
public:
    nn::WindowArray windows;
    std::vector<uint32_t> train_idx, val_idx, test_idx;

    const std::vector<uint32_t>& split_indices(Split s) const {
        access_counts_[static_cast<size_t>(s)] += 1;
        return s == Split::Train ? train_idx : (s == Split::Val ? val_idx : test_idx);
    }
    size_t access_count(Split s) const { return access_counts_[static_cast<size_t>(s)]; }

private:
    mutable std::array<size_t, 3> access_counts_ = {0, 0, 0};
};

struct SplitFractions {
    double train = 0.7;
    double val = 0.15;
    double test = 0.15;
};

WindowedSet make_windows(const Mat& features, const std::vector<double>& target,
                         const std::vector<size_t>& segment_starts, size_t look_back,
                         size_t horizon, const SplitFractions& splits);

// ============================================================================
// Metrics
// ============================================================================

struct MapeResult {
    double percent = 0.0;
    size_t excluded = 0;  // |actual| < epsilon points left out
};

MapeResult mape(const std::vector<double>& pred, const std::vector<double>& actual, double epsilon);

double mae(const std::vector<double>& pred, const std::vector<double>& actual);

struct MetricsRow {
    std::string dataset;
    std::string model;
    size_t look_back = 0;
    size_t horizon = 0;
    double mae_norm = 0.0;
    double mae_kbps = 0.0;
    double mape_pct = 0.0;
    size_t excluded_zero_actuals = 0;
    std::string seed;  // numeric, or "mean"
};

struct MetricsReport {
    std::vector<MetricsRow> rows;

    void save_csv(const std::string& path) const;
    void save_json(const std::string& path) const;
    static MetricsReport load_csv(const std::string& path);
};

// Scores one trained model's test predictions on both scales.
MetricsRow score_model(const std::string& dataset_tag, const std::string& model_tag,
                       const nn::ModelSpec& spec, const nn::NetworkWeights& weights,
                       const WindowedSet& ws, const prep::Normalizer& target_scale,
                       double mape_epsilon_kbps, uint64_t seed);

// ============================================================================
// Three-model comparison and sweeps
// ============================================================================

struct CompareConfig {
    search::PipelineSearchConfig search;
    double baseline_learning_rate = 1e-3;  // library-default optimizer settings
    size_t baseline_units = 128;
    double mape_epsilon_kbps = 1.0;
    std::string dataset_tag = "dataset";
};

nn::ModelSpec baseline_lstm_spec(size_t input_dim, size_t look_back, size_t horizon,
                                 size_t units = 128);
nn::ModelSpec baseline_seq2seq_spec(size_t input_dim, size_t look_back, size_t horizon,
                                    size_t units = 128);

MetricsReport compare_models(const WindowedSet& ws, const prep::Normalizer& target_scale,
                             const CompareConfig& cfg, const std::vector<uint64_t>& seeds);

struct SweepConfig {
    nn::ModelSpec model_template;  // look_back/horizon/input_dim overwritten per cell
    double learning_rate = 3e-3;
    size_t max_epochs = 60;
    size_t patience = 8;
    size_t batch_size = 32;
    double teacher_forcing = 1.0;
    double mape_epsilon_kbps = 1.0;
    std::string dataset_tag = "dataset";
    SplitFractions splits;
};

struct SweepCellTiming {
    size_t look_back = 0;
    size_t horizon = 0;
    uint64_t seed = 0;
    double wall_s = 0.0;
};

struct SweepResult {
    MetricsReport report;
    std::vector<SweepCellTiming> timings;  // kept out of the metrics files
};

// One model trained per (look_back, seed) at fixed horizon; entries in
// look_backs/horizons are expressed in SAMPLES of the feature series.
SweepResult sweep_lookback(const Mat& features, const std::vector<double>& target,
                           const std::vector<size_t>& segment_starts,
                           const std::vector<size_t>& look_backs, size_t horizon,
                           const prep::Normalizer& target_scale, const SweepConfig& cfg,
                           const std::vector<uint64_t>& seeds);

SweepResult sweep_horizon(const Mat& features, const std::vector<double>& target,
                          const std::vector<size_t>& segment_starts, size_t look_back,
                          const std::vector<size_t>& horizons,
                          const prep::Normalizer& target_scale, const SweepConfig& cfg,
                          const std::vector<uint64_t>& seeds);

// gnuplot-compatible two-column data (x = swept value, y = seed-mean MAE)
void write_plot_data(const MetricsReport& report, bool sweep_lookback, const std::string& path);

}  // namespace flowcast::eval
