#pragma once

#include <optional>
#include <string>
#include <vector>

#include "flowcast/common.hpp"
#include "flowcast/neural.hpp"
#include "flowcast/preprocess.hpp"
#include "flowcast/telemetry.hpp"

namespace flowcast::drift {

// ============================================================================
// State
// ============================================================================

struct AdaptationConfig {
    size_t fine_tune_epochs = 5;
    double fine_tune_lr_scale = 0.1;
    size_t batch_size = 32;
};

struct CheckRecord {
    double time_s = 0.0;  // offset from stream start, multiple of check_period
    double windowed_mae = 0.0;
    double threshold = 0.0;
    bool drift = false;
    bool adapted = false;
};

struct DriftMonitorState {
    double baseline_mae = 0.0;
    double rel_margin = 0.2;
    double threshold = 0.0;  // always (1 + rel_margin) * baseline_mae
    double check_period_s = 600.0;
    double window_size_s = 600.0;
    AdaptationConfig adaptation;
    std::vector<CheckRecord> history;

    static DriftMonitorState init(double baseline_mae, double rel_margin = 0.2,
                                  double check_period_s = 600.0, double window_size_s = 600.0);
    void set_baseline(double new_baseline);
};

// ============================================================================
// Primitives
// ============================================================================

double windowed_mae(const std::vector<std::pair<double, double>>& pairs);  // (pred, actual)

// Appends a history record and reports whether drift was flagged.
bool check(DriftMonitorState& state, double time_s,
           const std::vector<std::pair<double, double>>& window_pairs);

double ks_statistic(const std::vector<double>& sample_a, const std::vector<double>& sample_b);

// ============================================================================
// Drift injection
// ============================================================================

struct DriftSegment {
    double start_s = 0.0;   // offset from the first record
    double length_s = 0.0;
};

struct DriftTransform {
    enum class Kind { Scale, Offset } kind = Kind::Scale;
    double value = 1.0;
};

struct InjectionManifest {
    DriftSegment segment;
    DriftTransform transform;
    size_t affected_rows = 0;

    std::string to_json() const;
    void save(const std::string& path) const;
};

ingest::SessionDataset inject_drift(const ingest::SessionDataset& ds, const DriftSegment& segment,
                                    const DriftTransform& transform,
                                    InjectionManifest* manifest = nullptr);

// ============================================================================
// Monitor run
// ============================================================================

struct MonitorConfig {
    double rel_margin = 0.2;
    double check_period_s = 600.0;
    double window_size_s = 600.0;
    AdaptationConfig adaptation;
    bool adapt_on_drift = true;
    // advisory distribution detector: target KS between the first window and
    // each check window, reported only
    bool report_ks = true;
    uint64_t seed = 17;
};

struct MonitorReport {
    std::vector<CheckRecord> checks;
    std::vector<double> ks_values;          // aligned with checks when enabled
    std::vector<double> detection_times;    // check times that flagged drift
    std::vector<double> baselines;          // baseline after each check
    double initial_baseline = 0.0;

    void save_csv(const std::string& path) const;
    void save_summary_json(const std::string& path) const;
};

// Replays a preprocessed stream: at every sample with a full look-back the
// model predicts its horizon with the weights current at that wall-clock
// time; each check scores the pairs whose target time falls in
// [t - window_size, t) and adapts on drift. Weights are updated in place.
MonitorReport run_monitor(const nn::ModelSpec& spec, nn::NetworkWeights& weights,
                          double base_learning_rate, const prep::FeatureMatrix& stream,
                          double sample_period_s, double baseline_mae, const MonitorConfig& cfg);

}  // namespace flowcast::drift
