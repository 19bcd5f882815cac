#include "flowcast/eval.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

namespace flowcast::eval {

using nlohmann::json;

// ============================================================================
// Windows
// ============================================================================

WindowedSet make_windows(const Mat& features, const std::vector<double>& target,
                         const std::vector<size_t>& segment_starts, size_t look_back,
                         size_t horizon, const SplitFractions& splits) {
    const size_t n = features.rows;
    if (target.size() != n) throw Error("ShapeMismatch", "feature rows and target length differ");
    if (look_back == 0 || horizon == 0) throw Error("ConfigInvalid", "look_back and horizon must be >= 1");
    const double frac_sum = splits.train + splits.val + splits.test;
    if (std::abs(frac_sum - 1.0) > 1e-9) throw Error("ConfigInvalid", "split fractions must sum to 1");

    const size_t span = look_back + horizon;
    if (n < span) throw Error("SeriesTooShort", "series length " + std::to_string(n) +
                                                    " < look_back + horizon = " + std::to_string(span));

    // window origins per segment
    std::vector<size_t> origins;
    std::vector<size_t> starts = segment_starts.empty() ? std::vector<size_t>{0} : segment_starts;
    for (size_t si = 0; si < starts.size(); ++si) {
        const size_t begin = starts[si];
        const size_t end = (si + 1 < starts.size()) ? starts[si + 1] : n;
        if (end - begin < span) continue;
        for (size_t s = begin; s + span <= end; ++s) origins.push_back(s);
    }
    if (origins.empty()) throw Error("SeriesTooShort", "no segment is long enough for a window");

    WindowedSet ws;
    nn::WindowArray& w = ws.windows;
    w.look_back = look_back;
    w.horizon = horizon;
    w.features = features.cols;
    w.inputs = Mat(origins.size(), look_back * features.cols);
    w.targets = Mat(origins.size(), horizon);
    w.y_last.resize(origins.size());

    for (size_t i = 0; i < origins.size(); ++i) {
        const size_t s = origins[i];
        std::memcpy(w.inputs.row(i), features.row(s), look_back * features.cols * sizeof(double));
        for (size_t k = 0; k < horizon; ++k) w.targets.at(i, k) = target[s + look_back + k];
        w.y_last[i] = target[s + look_back - 1];
    }

    // purged chronological split on the series index line
    const size_t b1 = static_cast<size_t>(std::floor(static_cast<double>(n) * splits.train));
    const size_t b2 =
        static_cast<size_t>(std::floor(static_cast<double>(n) * (splits.train + splits.val)));
    for (size_t i = 0; i < origins.size(); ++i) {
        const size_t s = origins[i];
        const size_t e = s + span;  // exclusive
        if (e <= b1)
            ws.train_idx.push_back(static_cast<uint32_t>(i));
        else if (s >= b1 && e <= b2)
            ws.val_idx.push_back(static_cast<uint32_t>(i));
        else if (s >= b2)
            ws.test_idx.push_back(static_cast<uint32_t>(i));
    }
    return ws;
}

// ============================================================================
// Metrics
// ============================================================================

double mae(const std::vector<double>& pred, const std::vector<double>& actual) {
    if (pred.size() != actual.size() || pred.empty())
        throw Error("ShapeMismatch", "mae inputs disagree");
    double s = 0;
    for (size_t i = 0; i < pred.size(); ++i) s += std::abs(pred[i] - actual[i]);
    return s / static_cast<double>(pred.size());
}

MapeResult mape(const std::vector<double>& pred, const std::vector<double>& actual, double epsilon) {
    if (pred.size() != actual.size() || pred.empty())
        throw Error("ShapeMismatch", "mape inputs disagree");
    MapeResult r;
    double s = 0;
    size_t n = 0;
    for (size_t i = 0; i < pred.size(); ++i) {
        if (std::abs(actual[i]) < epsilon) {
            ++r.excluded;
            continue;
        }
        s += std::abs(pred[i] - actual[i]) / std::abs(actual[i]);
        ++n;
    }
    if (n == 0) throw Error("AllExcluded", "every actual value lies below epsilon");
    r.percent = 100.0 * s / static_cast<double>(n);
    return r;
}

MetricsRow score_model(const std::string& dataset_tag, const std::string& model_tag,
                       const nn::ModelSpec& spec, const nn::NetworkWeights& weights,
                       const WindowedSet& ws, const prep::Normalizer& target_scale,
                       double mape_epsilon_kbps, uint64_t seed) {
    const std::vector<uint32_t>& idx = ws.split_indices(Split::Test);
    if (idx.empty()) throw Error("NoData", "no test windows to score");

    const Mat preds = nn::predict_windows(spec, weights, ws.windows, idx);
    std::vector<double> p, a, p_kbps, a_kbps;
    p.reserve(idx.size() * spec.horizon);
    for (size_t i = 0; i < idx.size(); ++i) {
        for (size_t k = 0; k < spec.horizon; ++k) {
            const double pn = preds.at(i, k);
            const double an = ws.windows.targets.at(idx[i], k);
            p.push_back(pn);
            a.push_back(an);
            p_kbps.push_back(target_scale.invert(pn));
            a_kbps.push_back(target_scale.invert(an));
        }
    }

    MetricsRow row;
    row.dataset = dataset_tag;
    row.model = model_tag;
    row.look_back = spec.look_back;
    row.horizon = spec.horizon;
    row.mae_norm = mae(p, a);
    row.mae_kbps = mae(p_kbps, a_kbps);
    const MapeResult mp = mape(p_kbps, a_kbps, mape_epsilon_kbps);
    row.mape_pct = mp.percent;
    row.excluded_zero_actuals = mp.excluded;
    row.seed = std::to_string(seed);
    return row;
}

// ============================================================================
// Report io
// ============================================================================

void MetricsReport::save_csv(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << "dataset,model,look_back,horizon,mae_norm,mae_kbps,mape_pct,excluded_zero_actuals,seed\n";
    for (const auto& r : rows) {
        out << r.dataset << "," << r.model << "," << r.look_back << "," << r.horizon << ","
            << format_double(r.mae_norm) << "," << format_double(r.mae_kbps) << ","
            << format_double(r.mape_pct) << "," << r.excluded_zero_actuals << "," << r.seed << "\n";
    }
}

void MetricsReport::save_json(const std::string& path) const {
    json j = json::array();
    for (const auto& r : rows) {
        j.push_back({{"dataset", r.dataset},
                     {"model", r.model},
                     {"look_back", r.look_back},
                     {"horizon", r.horizon},
                     {"mae_norm", r.mae_norm},
                     {"mae_kbps", r.mae_kbps},
                     {"mape_pct", r.mape_pct},
                     {"excluded_zero_actuals", r.excluded_zero_actuals},
                     {"seed", r.seed}});
    }
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << j.dump(2) << "\n";
}

MetricsReport MetricsReport::load_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("MissingArtifact", "metrics file not found: " + path);
    MetricsReport rep;
    std::string line;
    std::getline(in, line);  // header
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::stringstream ss(line);
        std::string cell;
        MetricsRow r;
        std::getline(ss, r.dataset, ',');
        std::getline(ss, r.model, ',');
        std::getline(ss, cell, ',');
        r.look_back = std::stoul(cell);
        std::getline(ss, cell, ',');
        r.horizon = std::stoul(cell);
        std::getline(ss, cell, ',');
        r.mae_norm = std::stod(cell);
        std::getline(ss, cell, ',');
        r.mae_kbps = std::stod(cell);
        std::getline(ss, cell, ',');
        r.mape_pct = std::stod(cell);
        std::getline(ss, cell, ',');
        r.excluded_zero_actuals = std::stoul(cell);
        std::getline(ss, r.seed, ',');
        rep.rows.push_back(std::move(r));
    }
    return rep;
}

namespace {

// appends one "mean" row per (dataset, model, look_back, horizon) group
void append_seed_means(MetricsReport& report) {
    struct Key {
        std::string dataset, model;
        size_t look_back, horizon;
        bool operator<(const Key& o) const {
            return std::tie(dataset, model, look_back, horizon) <
                   std::tie(o.dataset, o.model, o.look_back, o.horizon);
        }
    };
    std::map<Key, std::vector<const MetricsRow*>> groups;
    for (const auto& r : report.rows) {
        if (r.seed == "mean") continue;
        groups[{r.dataset, r.model, r.look_back, r.horizon}].push_back(&r);
    }
    for (const auto& [key, members] : groups) {
        MetricsRow m;
        m.dataset = key.dataset;
        m.model = key.model;
        m.look_back = key.look_back;
        m.horizon = key.horizon;
        m.seed = "mean";
        for (const MetricsRow* r : members) {
            m.mae_norm += r->mae_norm;
            m.mae_kbps += r->mae_kbps;
            m.mape_pct += r->mape_pct;
            m.excluded_zero_actuals += r->excluded_zero_actuals;
        }
        const double n = static_cast<double>(members.size());
        m.mae_norm /= n;
        m.mae_kbps /= n;
        m.mape_pct /= n;
        report.rows.push_back(std::move(m));
    }
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

// ============================================================================
// Baselines and comparison
// ============================================================================

nn::ModelSpec baseline_lstm_spec(size_t input_dim, size_t look_back, size_t horizon, size_t units) {
    nn::ModelSpec s;
    s.kind = nn::ModelKind::Direct;
    s.input_dim = input_dim;
    s.encoder_units = {units};
    s.dense_units = {};
    s.dropout_rate = 0.0;
    s.look_back = look_back;
    s.horizon = horizon;
    s.output_dim = 1;
    return s;
}

nn::ModelSpec baseline_seq2seq_spec(size_t input_dim, size_t look_back, size_t horizon,
                                    size_t units) {
    nn::ModelSpec s;
    s.kind = nn::ModelKind::Seq2Seq;
    s.input_dim = input_dim;
    s.encoder_units = {units};
    s.decoder_units = {units};
    s.dense_units = {};
    s.dropout_rate = 0.0;
    s.look_back = look_back;
    s.horizon = horizon;
    s.output_dim = 1;
    return s;
}

MetricsReport compare_models(const WindowedSet& ws, const prep::Normalizer& target_scale,
                             const CompareConfig& cfg, const std::vector<uint64_t>& seeds) {
    MetricsReport report;
    const size_t input_dim = ws.windows.features;
    const size_t look_back = ws.windows.look_back;
    const size_t horizon = ws.windows.horizon;

    for (uint64_t seed : seeds) {
        const std::vector<uint32_t>& train_idx = ws.split_indices(Split::Train);
        const std::vector<uint32_t>& val_idx = ws.split_indices(Split::Val);

        // baseline LSTM: one 128-cell layer, dense head over the final state
        {
            const nn::ModelSpec spec =
                baseline_lstm_spec(input_dim, look_back, horizon, cfg.baseline_units);
            const nn::TrainResult r = search::retrain_final(
                spec, cfg.baseline_learning_rate, ws.windows, train_idx, val_idx,
                cfg.search.retrain_epochs, cfg.search.retrain_patience, cfg.search.batch_size,
                cfg.search.teacher_forcing, derive_seed(seed, 1));
            report.rows.push_back(score_model(cfg.dataset_tag, "baseline_lstm", spec, r.weights, ws,
                                              target_scale, cfg.mape_epsilon_kbps, seed));
        }

        // baseline seq2seq: fixed 128-cell encoder/decoder, default hyperparameters
        {
            const nn::ModelSpec spec =
                baseline_seq2seq_spec(input_dim, look_back, horizon, cfg.baseline_units);
            const nn::TrainResult r = search::retrain_final(
                spec, cfg.baseline_learning_rate, ws.windows, train_idx, val_idx,
                cfg.search.retrain_epochs, cfg.search.retrain_patience, cfg.search.batch_size,
                cfg.search.teacher_forcing, derive_seed(seed, 2));
            report.rows.push_back(score_model(cfg.dataset_tag, "baseline_seq2seq", spec, r.weights,
                                              ws, target_scale, cfg.mape_epsilon_kbps, seed));
        }

        // searched model
        {
            const search::PipelineSearchResult r = search::run_pipeline_search(
                ws.windows, train_idx, val_idx, cfg.search, derive_seed(seed, 3));
            report.rows.push_back(score_model(cfg.dataset_tag, "automl", r.best.spec,
                                              r.trained.weights, ws, target_scale,
                                              cfg.mape_epsilon_kbps, seed));
        }
    }

    append_seed_means(report);
    return report;
}

// ============================================================================
// Sweeps
// ============================================================================

namespace {

SweepResult run_sweep(const Mat& features, const std::vector<double>& target,
                      const std::vector<size_t>& segment_starts,
                      const std::vector<std::pair<size_t, size_t>>& cells,
                      const prep::Normalizer& target_scale, const SweepConfig& cfg,
                      const std::vector<uint64_t>& seeds) {
    SweepResult out;
    for (const auto& [look_back, horizon] : cells) {
        const WindowedSet ws =
            make_windows(features, target, segment_starts, look_back, horizon, cfg.splits);
        for (uint64_t seed : seeds) {
            nn::ModelSpec spec = cfg.model_template;
            spec.input_dim = features.cols;
            spec.look_back = look_back;
            spec.horizon = horizon;
            spec.validate();

            nn::TrainConfig tc;
            tc.learning_rate = cfg.learning_rate;
            tc.batch_size = cfg.batch_size;
            tc.max_epochs = cfg.max_epochs;
            tc.patience = cfg.patience;
            tc.teacher_forcing = cfg.teacher_forcing;

            const double t0 = now_seconds();
            const nn::TrainResult r =
                nn::train(spec, ws.windows, ws.split_indices(Split::Train),
                          ws.split_indices(Split::Val), tc, derive_seed(seed, look_back * 131 + horizon));
            const double wall = now_seconds() - t0;

            out.report.rows.push_back(score_model(cfg.dataset_tag, "sweep_model", spec, r.weights,
                                                  ws, target_scale, cfg.mape_epsilon_kbps, seed));
            out.timings.push_back({look_back, horizon, seed, wall});
        }
    }
    append_seed_means(out.report);
    return out;
}

}  // namespace

SweepResult sweep_lookback(const Mat& features, const std::vector<double>& target,
                           const std::vector<size_t>& segment_starts,
                           const std::vector<size_t>& look_backs, size_t horizon,
                           const prep::Normalizer& target_scale, const SweepConfig& cfg,
                           const std::vector<uint64_t>& seeds) {
    std::vector<std::pair<size_t, size_t>> cells;
    for (size_t lb : look_backs) cells.emplace_back(lb, horizon);
    return run_sweep(features, target, segment_starts, cells, target_scale, cfg, seeds);
}

SweepResult sweep_horizon(const Mat& features, const std::vector<double>& target,
                          const std::vector<size_t>& segment_starts, size_t look_back,
                          const std::vector<size_t>& horizons,
                          const prep::Normalizer& target_scale, const SweepConfig& cfg,
                          const std::vector<uint64_t>& seeds) {
    std::vector<std::pair<size_t, size_t>> cells;
    for (size_t h : horizons) cells.emplace_back(look_back, h);
    return run_sweep(features, target, segment_starts, cells, target_scale, cfg, seeds);
}

void write_plot_data(const MetricsReport& report, bool sweep_lookback, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << "# " << (sweep_lookback ? "look_back" : "horizon") << " seed_mean_mae_norm\n";
    std::vector<std::pair<size_t, double>> points;
    for (const auto& r : report.rows) {
        if (r.seed != "mean") continue;
        points.emplace_back(sweep_lookback ? r.look_back : r.horizon, r.mae_norm);
    }
    std::sort(points.begin(), points.end());
    for (const auto& [x, y] : points) out << x << " " << format_double(y) << "\n";
}

}  // namespace flowcast::eval
