#include "flowcast/drift.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace flowcast::drift {

using nlohmann::json;

// ============================================================================
// State
// ============================================================================

DriftMonitorState DriftMonitorState::init(double baseline_mae, double rel_margin,
                                          double check_period_s, double window_size_s) {
    if (baseline_mae < 0) throw Error("ConfigInvalid", "baseline MAE must be non-negative");
    if (rel_margin < 0) throw Error("ConfigInvalid", "rel_margin must be non-negative");
    if (check_period_s <= 0 || window_size_s <= 0)
        throw Error("ConfigInvalid", "check period and window size must be positive");
    DriftMonitorState s;
    s.rel_margin = rel_margin;
    s.check_period_s = check_period_s;
    s.window_size_s = window_size_s;
    s.set_baseline(baseline_mae);
    return s;
}

void DriftMonitorState::set_baseline(double new_baseline) {
    baseline_mae = new_baseline;
    threshold = (1.0 + rel_margin) * baseline_mae;
}

// ============================================================================
// Primitives
// ============================================================================

double windowed_mae(const std::vector<std::pair<double, double>>& pairs) {
    if (pairs.empty()) throw Error("EmptyWindow", "windowed MAE over an empty window");
    double s = 0;
    for (const auto& [pred, actual] : pairs) s += std::abs(pred - actual);
    return s / static_cast<double>(pairs.size());
}

bool check(DriftMonitorState& state, double time_s,
           const std::vector<std::pair<double, double>>& window_pairs) {
    const double mae = windowed_mae(window_pairs);
    const bool drift = mae > state.threshold;
    state.history.push_back({time_s, mae, state.threshold, drift, false});
    return drift;
}

double ks_statistic(const std::vector<double>& sample_a, const std::vector<double>& sample_b) {
    if (sample_a.empty() || sample_b.empty())
        throw Error("EmptySample", "KS statistic needs non-empty samples");
    std::vector<double> a(sample_a), b(sample_b);
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());

    const double na = static_cast<double>(a.size());
    const double nb = static_cast<double>(b.size());
    size_t i = 0, j = 0;
    double d = 0.0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] == x) ++i;
        while (j < b.size() && b[j] == x) ++j;
        d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
    }
    // once one sample is exhausted the sup difference can only shrink
    return d;
}

// ============================================================================
// Injection
// ============================================================================

std::string InjectionManifest::to_json() const {
    json j;
    j["start_s"] = segment.start_s;
    j["length_s"] = segment.length_s;
    j["kind"] = transform.kind == DriftTransform::Kind::Scale ? "scale" : "offset";
    j["value"] = transform.value;
    j["affected_rows"] = affected_rows;
    return j.dump(2);
}

void InjectionManifest::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << to_json() << "\n";
}

ingest::SessionDataset inject_drift(const ingest::SessionDataset& ds, const DriftSegment& segment,
                                    const DriftTransform& transform, InjectionManifest* manifest) {
    if (ds.records.empty()) throw Error("SegmentOutOfBounds", "cannot inject into an empty dataset");
    const double span = ds.time_span_seconds();
    if (segment.start_s < 0 || segment.length_s <= 0 || segment.start_s > span)
        throw Error("SegmentOutOfBounds",
                    "segment [" + format_double(segment.start_s) + ", +" +
                        format_double(segment.length_s) + ") outside stream span " +
                        format_double(span));

    const double t0 = ds.records.front().timestamp;
    const double lo = t0 + segment.start_s;
    const double hi = lo + segment.length_s;

    ingest::SessionDataset out = ds;
    size_t affected = 0;
    for (auto& r : out.records) {
        if (r.timestamp >= lo && r.timestamp < hi) {
            if (transform.kind == DriftTransform::Kind::Scale)
                r.dl_bitrate *= transform.value;
            else
                r.dl_bitrate = std::max(0.0, r.dl_bitrate + transform.value);
            ++affected;
        }
    }
    if (manifest != nullptr) {
        manifest->segment = segment;
        manifest->transform = transform;
        manifest->affected_rows = affected;
    }
    return out;
}

// ============================================================================
// Monitor
// ============================================================================

namespace {

// origin i = index of the last look-back sample; valid when the whole
// [i-L+1, i+H] extent stays inside one segment
std::vector<uint8_t> valid_origins(size_t n, const std::vector<size_t>& segment_starts,
                                   size_t look_back, size_t horizon) {
    std::vector<uint8_t> valid(n, 0);
    std::vector<size_t> starts = segment_starts.empty() ? std::vector<size_t>{0} : segment_starts;
    for (size_t si = 0; si < starts.size(); ++si) {
        const size_t begin = starts[si];
        const size_t end = (si + 1 < starts.size()) ? starts[si + 1] : n;
        if (end - begin < look_back + horizon) continue;
        for (size_t i = begin + look_back - 1; i + horizon < end; ++i) valid[i] = 1;
    }
    return valid;
}

}  // namespace

MonitorReport run_monitor(const nn::ModelSpec& spec, nn::NetworkWeights& weights,
                          double base_learning_rate, const prep::FeatureMatrix& stream,
                          double sample_period_s, double baseline_mae, const MonitorConfig& cfg) {
    const size_t n = stream.x.rows;
    const size_t L = spec.look_back;
    const size_t H = spec.horizon;
    if (stream.y.size() != n) throw Error("ShapeMismatch", "stream target length mismatch");
    if (stream.x.cols != spec.input_dim)
        throw Error("ShapeMismatch", "stream features do not match the model input_dim");
    if (sample_period_s <= 0) throw Error("ConfigInvalid", "sample period must be positive");

    DriftMonitorState state = DriftMonitorState::init(baseline_mae, cfg.rel_margin,
                                                      cfg.check_period_s, cfg.window_size_s);
    state.adaptation = cfg.adaptation;

    // one window per valid origin, indexed densely
    nn::WindowArray all;
    all.look_back = L;
    all.horizon = H;
    all.features = stream.x.cols;
    const std::vector<uint8_t> valid = valid_origins(n, stream.segment_starts, L, H);
    std::vector<uint32_t> origin_of_window;
    std::vector<int64_t> window_of_origin(n, -1);
    {
        size_t count = 0;
        for (size_t i = 0; i < n; ++i) count += valid[i];
        all.inputs = Mat(count, L * all.features);
        all.targets = Mat(count, H);
        all.y_last.resize(count);
        size_t w = 0;
        for (size_t i = 0; i < n; ++i) {
            if (!valid[i]) continue;
            const size_t s = i - (L - 1);
            std::memcpy(all.inputs.row(w), stream.x.row(s), L * all.features * sizeof(double));
            for (size_t k = 0; k < H; ++k) all.targets.at(w, k) = stream.y[s + L + k];
            all.y_last[w] = stream.y[i];
            window_of_origin[i] = static_cast<int64_t>(w);
            origin_of_window.push_back(static_cast<uint32_t>(i));
            ++w;
        }
    }

    MonitorReport report;
    report.initial_baseline = baseline_mae;

    // reference distribution for the advisory KS detector: targets of the
    // first whole window of the stream
    std::vector<double> ks_reference;
    {
        const size_t ref_count =
            std::min(n, static_cast<size_t>(std::llround(cfg.window_size_s / sample_period_s)));
        for (size_t i = 0; i < ref_count; ++i) ks_reference.push_back(stream.y[i]);
    }

    const double span_s = static_cast<double>(n - 1) * sample_period_s;
    size_t check_index = 0;
    for (double t = cfg.check_period_s; t <= span_s + 1e-9; t += cfg.check_period_s) {
        ++check_index;
        // target indices inside [t - window, t)
        const double lo_t = t - cfg.window_size_s;
        const auto j_lo = static_cast<int64_t>(std::ceil(lo_t / sample_period_s - 1e-9));
        const auto j_hi = static_cast<int64_t>(std::ceil(t / sample_period_s - 1e-9)) - 1;
        if (j_hi < 0) continue;

        // origins whose horizon reaches the window
        std::vector<uint32_t> contributing;
        const int64_t first_origin = std::max<int64_t>(0, j_lo - static_cast<int64_t>(H));
        for (int64_t i = first_origin; i <= j_hi - 1 && i < static_cast<int64_t>(n); ++i) {
            if (i >= 0 && valid[static_cast<size_t>(i)]) {
                const int64_t t_first = i + 1;
                const int64_t t_last = i + static_cast<int64_t>(H);
                if (t_last >= j_lo && t_first <= j_hi)
                    contributing.push_back(static_cast<uint32_t>(window_of_origin[i]));
            }
        }
        if (contributing.empty()) continue;

        auto collect_pairs = [&](const Mat& preds) {
            std::vector<std::pair<double, double>> pairs;
            for (size_t r = 0; r < contributing.size(); ++r) {
                const uint32_t w = contributing[r];
                const int64_t origin = origin_of_window[w];
                for (size_t k = 0; k < H; ++k) {
                    const int64_t j = origin + 1 + static_cast<int64_t>(k);
                    if (j < j_lo || j > j_hi) continue;
                    pairs.emplace_back(preds.at(r, k), all.targets.at(w, k));
                }
            }
            return pairs;
        };

        Mat preds = nn::predict_windows(spec, weights, all, contributing);
        const std::vector<std::pair<double, double>> pairs = collect_pairs(preds);
        const bool drift = check(state, t, pairs);

        if (cfg.report_ks) {
            std::vector<double> window_targets;
            for (int64_t j = std::max<int64_t>(0, j_lo); j <= j_hi && j < static_cast<int64_t>(n); ++j)
                window_targets.push_back(stream.y[static_cast<size_t>(j)]);
            report.ks_values.push_back(window_targets.empty()
                                           ? 0.0
                                           : ks_statistic(ks_reference, window_targets));
        }

        if (drift) {
            report.detection_times.push_back(t);
            if (cfg.adapt_on_drift) {
                // fine-tune on windows fully contained in the recent window
                std::vector<uint32_t> tune;
                for (uint32_t w : contributing) {
                    const int64_t origin = origin_of_window[w];
                    if (origin + 1 >= j_lo && origin + static_cast<int64_t>(H) <= j_hi)
                        tune.push_back(w);
                }
                if (tune.empty())
                    throw Error("InsufficientWindow",
                                "drift flagged but the window holds no full training window");

                nn::TrainConfig tc;
                tc.learning_rate = base_learning_rate * cfg.adaptation.fine_tune_lr_scale;
                tc.batch_size = cfg.adaptation.batch_size;
                tc.max_epochs = cfg.adaptation.fine_tune_epochs;
                tc.patience = cfg.adaptation.fine_tune_epochs + 1;
                nn::fine_tune(spec, weights, all, tune, tc, derive_seed(cfg.seed, check_index));

                // re-measure on the same window with the updated weights
                preds = nn::predict_windows(spec, weights, all, contributing);
                const double post_mae = windowed_mae(collect_pairs(preds));
                state.set_baseline(post_mae);
                state.history.back().adapted = true;
            }
        }
        report.baselines.push_back(state.baseline_mae);
    }

    report.checks = state.history;
    return report;
}

void MonitorReport::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << "check_time_s,windowed_mae,threshold,drift_flag,adapted\n";
    for (const auto& c : checks) {
        out << format_double(c.time_s) << "," << format_double(c.windowed_mae) << ","
            << format_double(c.threshold) << "," << (c.drift ? 1 : 0) << "," << (c.adapted ? 1 : 0)
            << "\n";
    }
}

void MonitorReport::save_summary_json(const std::string& path) const {
    json j;
    j["flags"] = detection_times.size();
    j["detection_times"] = detection_times;
    j["baselines"] = baselines;
    j["initial_baseline"] = initial_baseline;
    if (!ks_values.empty()) j["ks_advisory"] = ks_values;
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << j.dump(2) << "\n";
}

}  // namespace flowcast::drift
