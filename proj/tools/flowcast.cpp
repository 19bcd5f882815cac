// flowcast command-line front end: one subcommand per pipeline stage.

#include <chrono>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "flowcast/config.hpp"
#include "flowcast/drift.hpp"
#include "flowcast/eval.hpp"
#include "flowcast/feature_select.hpp"
#include "flowcast/neural.hpp"
#include "flowcast/preprocess.hpp"
#include "flowcast/search.hpp"
#include "flowcast/synthetic.hpp"
#include "flowcast/telemetry.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace flowcast;

namespace {

// ----------------------------------------------------------------------------
// logging: line-delimited JSON events on stderr; data goes to files only
// ----------------------------------------------------------------------------

void log_event(const std::string& level, const std::string& event, const json& fields = {}) {
    json j;
    j["ts"] = std::chrono::duration<double>(
                  std::chrono::system_clock::now().time_since_epoch())
                  .count();
    j["level"] = level;
    j["event"] = event;
    for (auto& [k, v] : fields.items()) j[k] = v;
    std::cerr << j.dump() << "\n";
}

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

// "600", "600s", "14m", "1.5h" -> seconds
double parse_duration_s(const std::string& text) {
    if (text.empty()) throw Error("ConfigInvalid", "empty duration");
    double mult = 1.0;
    std::string num = text;
    switch (text.back()) {
        case 's': mult = 1.0; num.pop_back(); break;
        case 'm': mult = 60.0; num.pop_back(); break;
        case 'h': mult = 3600.0; num.pop_back(); break;
        default: break;
    }
    double v;
    if (!parse_double(num, v)) throw Error("ConfigInvalid", "bad duration '" + text + "'");
    return v * mult;
}

struct GlobalArgs {
    std::string config_path;
    std::string out_dir;
    uint64_t seed = 0;
    bool seed_set = false;
    bool force = false;
};

config::PipelineConfig load_config(const GlobalArgs& g) {
    config::PipelineConfig cfg =
        g.config_path.empty() ? config::PipelineConfig{} : config::PipelineConfig::load(g.config_path);
    if (g.seed_set) cfg.seed = g.seed;
    if (!g.out_dir.empty()) cfg.artifacts_dir = g.out_dir;
    cfg.validate();
    fs::create_directories(cfg.artifacts_dir);
    return cfg;
}

void write_manifest(const config::PipelineConfig& cfg, const std::string& command,
                    const std::string& artifact, double wall_s,
                    std::vector<std::pair<std::string, std::string>> inputs = {}) {
    config::RunManifest m;
    m.command = command;
    m.config_hash = cfg.config_hash();
    m.seed = cfg.seed;
    m.wall_time_s = wall_s;
    m.inputs = std::move(inputs);
    m.save(artifact);
}

ingest::Schema resolve_schema(const config::PipelineConfig& cfg) {
    if (cfg.ingest.schema == "canonical") return ingest::Schema::canonical();
    if (cfg.ingest.schema == "gnettrack") return ingest::Schema::gnettrack();
    return ingest::Schema::from_json_file(cfg.ingest.schema);
}

// ----------------------------------------------------------------------------
// feature matrix artifact: CSV matrix + JSON metadata sidecar
// ----------------------------------------------------------------------------

void save_features(const prep::FeatureMatrix& fm, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    for (size_t j = 0; j < fm.names.size(); ++j) out << fm.names[j] << ",";
    out << "__target__\n";
    for (size_t i = 0; i < fm.x.rows; ++i) {
        for (size_t j = 0; j < fm.x.cols; ++j) out << format_double(fm.x.at(i, j)) << ",";
        out << format_double(fm.y[i]) << "\n";
    }

    json meta;
    meta["segment_starts"] = fm.segment_starts;
    meta["rows"] = fm.x.rows;
    meta["names"] = fm.names;
    meta["target"] = {{"kind", prep::to_string(fm.target.kind)},
                      {"a", fm.target.a},
                      {"b", fm.target.b},
                      {"degenerate", fm.target.degenerate},
                      {"clip", fm.target.clip}};
    std::ofstream mo(path + ".meta.json");
    if (!mo) throw Error("IoError", "cannot write " + path + ".meta.json");
    mo << meta.dump(2) << "\n";
}

prep::FeatureMatrix load_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("MissingArtifact", "feature matrix not found: " + path);
    std::ifstream mi(path + ".meta.json");
    if (!mi) throw Error("MissingArtifact", "feature metadata not found: " + path + ".meta.json");
    json meta;
    mi >> meta;

    prep::FeatureMatrix fm;
    fm.segment_starts = meta.at("segment_starts").get<std::vector<size_t>>();
    fm.names = meta.at("names").get<std::vector<std::string>>();
    const json& t = meta.at("target");
    fm.target.kind = prep::normalization_from_string(t.at("kind").get<std::string>());
    fm.target.a = t.at("a").get<double>();
    fm.target.b = t.at("b").get<double>();
    fm.target.degenerate = t.at("degenerate").get<bool>();
    fm.target.clip = t.at("clip").get<bool>();

    const size_t rows = meta.at("rows").get<size_t>();
    fm.x = Mat(rows, fm.names.size());
    fm.y.resize(rows);

    std::string line;
    std::getline(in, line);  // header
    size_t i = 0;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        if (i >= rows) throw Error("MalformedRow", "more rows than metadata declares in " + path);
        std::stringstream ss(line);
        std::string cell;
        for (size_t j = 0; j < fm.names.size(); ++j) {
            std::getline(ss, cell, ',');
            if (!parse_double(cell, fm.x.at(i, j)))
                throw Error("MalformedRow", "non-numeric cell in " + path);
        }
        std::getline(ss, cell, ',');
        if (!parse_double(cell, fm.y[i])) throw Error("MalformedRow", "non-numeric target in " + path);
        ++i;
    }
    if (i != rows) throw Error("MalformedRow", "row count mismatch in " + path);
    return fm;
}

eval::WindowedSet build_windows(const prep::FeatureMatrix& fm, const config::PipelineConfig& cfg) {
    const size_t look_back =
        std::max<size_t>(1, static_cast<size_t>(std::llround(cfg.windows.look_back_s / cfg.ingest.period_s)));
    const size_t horizon =
        std::max<size_t>(1, static_cast<size_t>(std::llround(cfg.windows.horizon_s / cfg.ingest.period_s)));
    return eval::make_windows(fm.x, fm.y, fm.segment_starts, look_back, horizon, cfg.windows.splits);
}

// ----------------------------------------------------------------------------
// subcommand implementations
// ----------------------------------------------------------------------------

int cmd_synth(const config::PipelineConfig& cfg, const std::string& out_file, double seconds,
              uint64_t synth_seed) {
    const double t0 = now_s();
    synth::GeneratorConfig gc = cfg.synthetic;
    if (seconds > 0) gc.seconds = static_cast<size_t>(seconds);
    gc.seed = synth_seed != 0 ? synth_seed : derive_seed(cfg.seed, 0x517);
    const ingest::SessionDataset ds = synth::generate(gc);

    const std::string path =
        out_file.empty() ? cfg.artifacts_dir + "/raw_telemetry.csv" : out_file;
    ingest::write_canonical_csv(ds, path);
    ingest::write_sidecar_json(ds, path + ".sidecar.json");
    write_manifest(cfg, "synth", path, now_s() - t0);
    log_event("info", "synth_done",
              {{"path", path}, {"records", ds.records.size()}, {"seconds", gc.seconds}});
    return 0;
}

int cmd_ingest(const config::PipelineConfig& cfg, const std::vector<std::string>& inputs,
               bool force) {
    (void)force;
    const double t0 = now_s();
    const ingest::Schema schema = resolve_schema(cfg);
    ingest::ParseOptions opts;
    opts.application = ingest::parse_application(cfg.ingest.application);

    std::vector<ingest::SessionDataset> sessions;
    for (const auto& path : inputs) sessions.push_back(ingest::parse_csv(path, schema, opts));
    const auto merged = ingest::partition(sessions);

    for (const auto& [key, ds] : merged) {
        const ingest::SessionDataset uniform =
            ingest::resample_uniform(ds, cfg.ingest.period_s, cfg.ingest.max_gap_s);
        const std::string tag =
            ingest::to_string(key.mode) + "_" + ingest::to_string(key.application);
        const std::string path = cfg.artifacts_dir + "/ingested_" + tag + ".csv";
        ingest::write_canonical_csv(uniform, path);
        ingest::write_sidecar_json(uniform, path + ".sidecar.json");
        std::vector<std::pair<std::string, std::string>> man_inputs;
        for (const auto& f : uniform.source_files) man_inputs.emplace_back("raw", f);
        write_manifest(cfg, "ingest", path, now_s() - t0, man_inputs);
        log_event("info", "ingest_done",
                  {{"path", path},
                   {"records", uniform.records.size()},
                   {"segments", uniform.segment_starts.size()}});
    }
    return 0;
}

int cmd_preprocess(const config::PipelineConfig& cfg, const std::string& input, bool force) {
    const double t0 = now_s();
    config::check_upstream(input, cfg.config_hash(), force);
    const ingest::SessionDataset ds = ingest::parse_csv(input, ingest::Schema::canonical(), {});

    prep::PreprocessPolicy policy = prep::PreprocessPolicy::case_study_default();
    policy.train_fraction = cfg.preprocess_train_fraction;
    const prep::PreprocessPlan plan = prep::fit_plan(ds, policy);
    const prep::FeatureMatrix fm = prep::apply_plan(plan, ds);

    const std::string plan_path = cfg.artifacts_dir + "/plan.json";
    const std::string feat_path = cfg.artifacts_dir + "/features.csv";
    plan.save(plan_path);
    save_features(fm, feat_path);
    write_manifest(cfg, "preprocess", plan_path, now_s() - t0, {{"ingested", input}});
    write_manifest(cfg, "preprocess", feat_path, now_s() - t0, {{"ingested", input}});
    log_event("info", "preprocess_done",
              {{"plan", plan_path}, {"features", feat_path}, {"columns", fm.names.size()}});
    return 0;
}

int cmd_select_features(const config::PipelineConfig& cfg, const std::string& features_path,
                        bool force) {
    const double t0 = now_s();
    config::check_upstream(features_path, cfg.config_hash(), force);
    const prep::FeatureMatrix fm = load_features(features_path);

    // importance is fitted on the chronological training fraction only, with a
    // one-step-ahead target: features at t score by what they say about the
    // next sample's throughput, not about the current row's own value
    const size_t n_train = std::max<size_t>(
        3, static_cast<size_t>(std::floor(static_cast<double>(fm.x.rows) * cfg.windows.splits.train)));
    const size_t n_fit = n_train - 1;
    Mat x_train(n_fit, fm.x.cols);
    std::vector<double> y_train(fm.y.begin() + 1, fm.y.begin() + static_cast<long>(n_train));
    for (size_t i = 0; i < n_fit; ++i)
        std::copy(fm.x.row(i), fm.x.row(i) + fm.x.cols, x_train.row(i));

    const fsel::FeatureReport report = fsel::fit_report(x_train, y_train, fm.names, cfg.features);
    const std::string report_path = cfg.artifacts_dir + "/feature_report.json";
    report.save(report_path);
    write_manifest(cfg, "select-features", report_path, now_s() - t0, {{"features", features_path}});

    // reduced matrix for downstream stages
    prep::FeatureMatrix reduced;
    reduced.names = report.final_features;
    reduced.x = fsel::select_columns(fm.x, fm.names, report.final_features);
    reduced.y = fm.y;
    reduced.target = fm.target;
    reduced.segment_starts = fm.segment_starts;
    const std::string out_path = cfg.artifacts_dir + "/features_selected.csv";
    save_features(reduced, out_path);
    write_manifest(cfg, "select-features", out_path, now_s() - t0, {{"features", features_path}});

    std::cout << report.table();
    log_event("info", "select_features_done",
              {{"kept", report.final_features.size()}, {"of", fm.names.size()}});
    return 0;
}

int cmd_search(const config::PipelineConfig& cfg, const std::string& features_path, bool force) {
    const double t0 = now_s();
    config::check_upstream(features_path, cfg.config_hash(), force);
    const prep::FeatureMatrix fm = load_features(features_path);
    const eval::WindowedSet ws = build_windows(fm, cfg);

    const search::PipelineSearchResult result =
        search::run_pipeline_search(ws.windows, ws.split_indices(eval::Split::Train),
                                    ws.split_indices(eval::Split::Val), cfg.search, cfg.seed);

    nn::ModelFile mf;
    mf.spec = result.best.spec;
    mf.weights = result.trained.weights;
    mf.feature_names = fm.names;
    mf.validation_mae = result.validation_mae;
    mf.base_learning_rate = result.best.learning_rate;
    mf.config_hash = cfg.config_hash();
    mf.preprocess_fingerprint = "";
    if (fs::exists(cfg.artifacts_dir + "/plan.json")) {
        const prep::PreprocessPlan plan = prep::PreprocessPlan::load(cfg.artifacts_dir + "/plan.json");
        mf.preprocess_fingerprint = to_hex(plan.fitted_on);
    }
    const std::string model_path = cfg.artifacts_dir + "/model.json";
    mf.save(model_path);

    const std::string trace_path = cfg.artifacts_dir + "/search_trace.csv";
    result.trace.save_csv(search::model_search_space(), trace_path);
    write_manifest(cfg, "search", model_path, now_s() - t0, {{"features", features_path}});
    write_manifest(cfg, "search", trace_path, now_s() - t0, {{"features", features_path}});
    log_event("info", "search_done", {{"model", model_path},
                                      {"validation_mae", result.validation_mae},
                                      {"evaluations", result.trace.entries.size()}});
    return 0;
}

int cmd_train(const config::PipelineConfig& cfg, const std::string& features_path, bool force) {
    const double t0 = now_s();
    config::check_upstream(features_path, cfg.config_hash(), force);
    const prep::FeatureMatrix fm = load_features(features_path);
    const eval::WindowedSet ws = build_windows(fm, cfg);

    nn::ModelSpec spec;
    spec.kind = nn::ModelKind::Seq2Seq;
    spec.input_dim = fm.x.cols;
    spec.encoder_units = cfg.train.encoder_units;
    spec.decoder_units = cfg.train.decoder_units;
    spec.dense_units = cfg.train.dense_units;
    spec.dropout_rate = cfg.train.dropout;
    spec.look_back = ws.windows.look_back;
    spec.horizon = ws.windows.horizon;
    spec.validate();

    nn::TrainConfig tc;
    tc.learning_rate = cfg.train.learning_rate;
    tc.batch_size = cfg.train.batch_size;
    tc.max_epochs = cfg.train.max_epochs;
    tc.patience = cfg.train.patience;
    tc.teacher_forcing = cfg.train.teacher_forcing;

    const nn::TrainResult result = nn::train(spec, ws.windows, ws.split_indices(eval::Split::Train),
                                             ws.split_indices(eval::Split::Val), tc, cfg.seed);

    nn::ModelFile mf;
    mf.spec = spec;
    mf.weights = result.weights;
    mf.feature_names = fm.names;
    mf.validation_mae = result.best_val_mae;
    mf.base_learning_rate = cfg.train.learning_rate;
    mf.config_hash = cfg.config_hash();
    const std::string model_path = cfg.artifacts_dir + "/model.json";
    mf.save(model_path);
    nn::write_trace_csv(result.trace, cfg.artifacts_dir + "/training_trace.csv");
    write_manifest(cfg, "train", model_path, now_s() - t0, {{"features", features_path}});
    log_event("info", "train_done",
              {{"model", model_path}, {"best_epoch", result.best_epoch},
               {"val_mae", result.best_val_mae}});
    return 0;
}

int cmd_evaluate(const config::PipelineConfig& cfg, const std::string& features_path,
                 const std::string& model_path, bool compare, bool force) {
    const double t0 = now_s();
    config::check_upstream(features_path, cfg.config_hash(), force);
    const prep::FeatureMatrix fm = load_features(features_path);
    const eval::WindowedSet ws = build_windows(fm, cfg);

    eval::MetricsReport report;
    if (compare) {
        eval::CompareConfig cc;
        cc.search = cfg.search;
        cc.mape_epsilon_kbps = cfg.mape_epsilon_kbps;
        cc.dataset_tag = "pipeline";
        report = eval::compare_models(ws, fm.target, cc, cfg.compare_seeds);
    } else {
        if (!fs::exists(model_path))
            throw Error("MissingArtifact", "trained model artifact required: " + model_path);
        const nn::ModelFile mf = nn::ModelFile::load(model_path);
        if (mf.spec.look_back != ws.windows.look_back || mf.spec.horizon != ws.windows.horizon ||
            mf.spec.input_dim != ws.windows.features)
            throw Error("ConfigInvalid", "model window geometry does not match the feature matrix");
        report.rows.push_back(eval::score_model("pipeline", "model", mf.spec, mf.weights, ws,
                                                fm.target, cfg.mape_epsilon_kbps, cfg.seed));
    }

    const std::string csv_path = cfg.artifacts_dir + "/metrics.csv";
    report.save_csv(csv_path);
    report.save_json(cfg.artifacts_dir + "/metrics.json");
    write_manifest(cfg, "evaluate", csv_path, now_s() - t0,
                   {{"features", features_path}, {"model", compare ? "(trained in-run)" : model_path}});
    log_event("info", "evaluate_done", {{"metrics", csv_path}, {"rows", report.rows.size()}});
    return 0;
}

int cmd_sweep(const config::PipelineConfig& cfg, const std::string& features_path,
              const std::string& kind, bool force) {
    const double t0 = now_s();
    config::check_upstream(features_path, cfg.config_hash(), force);
    const prep::FeatureMatrix fm = load_features(features_path);

    eval::SweepConfig sc;
    sc.model_template.kind = nn::ModelKind::Seq2Seq;
    sc.model_template.encoder_units = cfg.sweeps.units;
    sc.model_template.decoder_units = cfg.sweeps.units;
    sc.model_template.dropout_rate = cfg.sweeps.dropout;
    sc.learning_rate = cfg.sweeps.learning_rate;
    sc.max_epochs = cfg.sweeps.max_epochs;
    sc.patience = cfg.sweeps.patience;
    sc.mape_epsilon_kbps = cfg.mape_epsilon_kbps;
    sc.dataset_tag = "sweep";
    sc.splits = cfg.windows.splits;

    auto to_samples = [&](double minutes) {
        return std::max<size_t>(
            1, static_cast<size_t>(std::llround(minutes * 60.0 / cfg.ingest.period_s)));
    };

    auto save = [&](const eval::SweepResult& res, const std::string& tag, bool is_lookback) {
        const std::string base = cfg.artifacts_dir + "/sweep_" + tag;
        res.report.save_csv(base + ".csv");
        res.report.save_json(base + ".json");
        eval::write_plot_data(res.report, is_lookback, base + ".dat");
        json t = json::array();
        for (const auto& c : res.timings)
            t.push_back({{"look_back", c.look_back},
                         {"horizon", c.horizon},
                         {"seed", c.seed},
                         {"wall_s", c.wall_s}});
        std::ofstream to(base + "_timings.json");
        to << t.dump(2) << "\n";
        write_manifest(cfg, "sweep", base + ".csv", now_s() - t0, {{"features", features_path}});
        log_event("info", "sweep_done", {{"report", base + ".csv"}});
    };

    if (kind == "lookback" || kind == "both") {
        std::vector<size_t> lbs;
        for (double m : cfg.sweeps.look_backs_min) lbs.push_back(to_samples(m));
        const eval::SweepResult res =
            eval::sweep_lookback(fm.x, fm.y, fm.segment_starts, lbs,
                                 to_samples(cfg.sweeps.fixed_horizon_min), fm.target, sc,
                                 cfg.sweeps.seeds);
        save(res, "lookback", true);
    }
    if (kind == "horizon" || kind == "both") {
        std::vector<size_t> hs;
        for (double m : cfg.sweeps.horizons_min) hs.push_back(to_samples(m));
        const eval::SweepResult res =
            eval::sweep_horizon(fm.x, fm.y, fm.segment_starts,
                                to_samples(cfg.sweeps.fixed_look_back_min), hs, fm.target, sc,
                                cfg.sweeps.seeds);
        save(res, "horizon", false);
    }
    return 0;
}

drift::DriftTransform parse_inject_transform(const std::string& text, drift::DriftSegment& seg) {
    // e.g. "scale=0.5,start=14m,len=10m" or "offset=-20000,start=840s,len=600s"
    drift::DriftTransform tr;
    bool have_kind = false, have_start = false, have_len = false;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        const auto eq = part.find('=');
        if (eq == std::string::npos) throw Error("ConfigInvalid", "bad --inject fragment '" + part + "'");
        const std::string key = part.substr(0, eq);
        const std::string val = part.substr(eq + 1);
        if (key == "scale") {
            tr.kind = drift::DriftTransform::Kind::Scale;
            if (!parse_double(val, tr.value)) throw Error("ConfigInvalid", "bad scale value");
            have_kind = true;
        } else if (key == "offset") {
            tr.kind = drift::DriftTransform::Kind::Offset;
            if (!parse_double(val, tr.value)) throw Error("ConfigInvalid", "bad offset value");
            have_kind = true;
        } else if (key == "start") {
            seg.start_s = parse_duration_s(val);
            have_start = true;
        } else if (key == "len") {
            seg.length_s = parse_duration_s(val);
            have_len = true;
        } else {
            throw Error("ConfigInvalid", "unknown --inject key '" + key + "'");
        }
    }
    if (!have_kind || !have_start || !have_len)
        throw Error("ConfigInvalid", "--inject needs scale|offset, start and len");
    return tr;
}

int cmd_inject_drift(const config::PipelineConfig& cfg, const std::string& input,
                     const std::string& inject_spec, const std::string& out_file, bool force) {
    const double t0 = now_s();
    config::check_upstream(input, cfg.config_hash(), force);
    drift::DriftSegment seg;
    const drift::DriftTransform tr = parse_inject_transform(inject_spec, seg);

    const ingest::SessionDataset ds = ingest::parse_csv(input, ingest::Schema::canonical(), {});
    drift::InjectionManifest man;
    const ingest::SessionDataset drifted = drift::inject_drift(ds, seg, tr, &man);

    const std::string path = out_file.empty() ? cfg.artifacts_dir + "/drifted.csv" : out_file;
    ingest::write_canonical_csv(drifted, path);
    man.save(path + ".injection.json");
    write_manifest(cfg, "inject-drift", path, now_s() - t0, {{"stream", input}});
    log_event("info", "inject_done", {{"path", path}, {"affected_rows", man.affected_rows}});
    return 0;
}

int cmd_monitor(const config::PipelineConfig& cfg, const std::string& stream_path,
                const std::string& model_path, const std::string& plan_path,
                const std::string& inject_spec, double baseline_override, double check_period_cli,
                bool force) {
    const double t0 = now_s();
    config::check_upstream(stream_path, cfg.config_hash(), force);
    if (!fs::exists(model_path))
        throw Error("MissingArtifact", "trained model artifact required: " + model_path);
    if (!fs::exists(plan_path))
        throw Error("MissingArtifact", "preprocess plan required: " + plan_path);

    const nn::ModelFile mf = nn::ModelFile::load(model_path);
    const prep::PreprocessPlan plan = prep::PreprocessPlan::load(plan_path);

    ingest::SessionDataset ds = ingest::parse_csv(stream_path, ingest::Schema::canonical(), {});
    if (!inject_spec.empty()) {
        drift::DriftSegment seg;
        const drift::DriftTransform tr = parse_inject_transform(inject_spec, seg);
        drift::InjectionManifest man;
        ds = drift::inject_drift(ds, seg, tr, &man);
        man.save(cfg.artifacts_dir + "/monitor_injection.json");
        log_event("info", "monitor_injected", {{"affected_rows", man.affected_rows}});
    }

    prep::FeatureMatrix fm = prep::apply_plan(plan, ds);
    // the model may have been fitted on a feature-selected subset
    if (mf.feature_names != fm.names) {
        fm.x = fsel::select_columns(fm.x, fm.names, mf.feature_names);
        fm.names = mf.feature_names;
    }

    double baseline = baseline_override;
    if (baseline <= 0) {
        if (!std::isfinite(mf.validation_mae))
            throw Error("ConfigInvalid", "model has no recorded validation MAE; pass --baseline");
        baseline = mf.validation_mae;
    }

    drift::MonitorConfig mc;
    mc.rel_margin = cfg.monitor.rel_margin;
    mc.check_period_s = check_period_cli > 0 ? check_period_cli : cfg.monitor.check_period_s;
    mc.window_size_s = cfg.monitor.window_size_s;
    mc.adaptation.fine_tune_epochs = cfg.monitor.fine_tune_epochs;
    mc.adaptation.fine_tune_lr_scale = cfg.monitor.fine_tune_lr_scale;
    mc.seed = cfg.seed;

    nn::NetworkWeights weights = mf.weights;
    const drift::MonitorReport report = drift::run_monitor(
        mf.spec, weights, mf.base_learning_rate, fm, cfg.ingest.period_s, baseline, mc);

    const std::string report_path = cfg.artifacts_dir + "/monitor_report.csv";
    report.save_csv(report_path);
    report.save_summary_json(cfg.artifacts_dir + "/monitor_summary.json");

    // adapted weights are part of the monitoring output
    nn::ModelFile updated = mf;
    updated.weights = weights;
    updated.save(cfg.artifacts_dir + "/model_adapted.json");

    write_manifest(cfg, "monitor", report_path, now_s() - t0,
                   {{"stream", stream_path}, {"model", model_path}, {"plan", plan_path}});
    log_event("info", "monitor_done",
              {{"report", report_path},
               {"checks", report.checks.size()},
               {"flags", report.detection_times.size()}});
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"flowcast: online AutoML pipeline for cellular application throughput forecasting"};
    app.set_version_flag("--version", std::string("flowcast ") + config::kToolVersion +
                                          " (config schema v" +
                                          std::to_string(config::kConfigSchemaVersion) + ")");

    GlobalArgs g;
    app.add_option("--config", g.config_path, "pipeline configuration JSON");
    app.add_option("--out", g.out_dir, "artifacts directory override");
    auto* seed_opt = app.add_option("--seed", g.seed, "seed override for all randomness");
    app.add_flag("--force", g.force, "skip upstream config-hash checks");
    app.fallthrough();  // global flags may follow the subcommand
    app.require_subcommand(1);

    // synth
    auto* synth_cmd = app.add_subcommand("synth", "generate synthetic telemetry CSV");
    std::string synth_out;
    double synth_seconds = 0;
    uint64_t synth_seed = 0;
    synth_cmd->add_option("--out-file", synth_out, "output CSV path");
    synth_cmd->add_option("--seconds", synth_seconds, "stream length in seconds");
    synth_cmd->add_option("--gen-seed", synth_seed, "generator seed");

    // ingest
    auto* ingest_cmd = app.add_subcommand("ingest", "parse, partition and resample telemetry CSVs");
    std::vector<std::string> ingest_inputs;
    ingest_cmd->add_option("--input", ingest_inputs, "raw telemetry CSV (repeatable)")->required();

    // preprocess
    auto* prep_cmd = app.add_subcommand("preprocess", "fit and apply the preprocessing plan");
    std::string prep_input;
    prep_cmd->add_option("--input", prep_input, "canonical telemetry CSV")->required();

    // select-features
    auto* fsel_cmd = app.add_subcommand("select-features", "importance + redundancy selection");
    std::string fsel_input;
    fsel_cmd->add_option("--features", fsel_input, "feature matrix CSV")->required();

    // search
    auto* search_cmd = app.add_subcommand("search", "architecture/hyperparameter search");
    std::string search_features;
    search_cmd->add_option("--features", search_features, "selected feature matrix CSV")->required();

    // train
    auto* train_cmd = app.add_subcommand("train", "train the fixed model from the config");
    std::string train_features;
    train_cmd->add_option("--features", train_features, "selected feature matrix CSV")->required();

    // evaluate
    auto* eval_cmd = app.add_subcommand("evaluate", "score a model, or run the 3-model comparison");
    std::string eval_features, eval_model;
    bool eval_compare = false;
    eval_cmd->add_option("--features", eval_features, "selected feature matrix CSV")->required();
    eval_cmd->add_option("--model", eval_model, "trained model artifact");
    eval_cmd->add_flag("--compare", eval_compare, "train + compare baselines and the searched model");

    // sweep
    auto* sweep_cmd = app.add_subcommand("sweep", "look-back / horizon trade-off sweeps");
    std::string sweep_features, sweep_kind = "both";
    sweep_cmd->add_option("--features", sweep_features, "selected feature matrix CSV")->required();
    sweep_cmd->add_option("--kind", sweep_kind, "lookback | horizon | both")
        ->check(CLI::IsMember({"lookback", "horizon", "both"}));

    // monitor
    auto* mon_cmd = app.add_subcommand("monitor", "replay a stream with drift detection/adaptation");
    std::string mon_stream, mon_model, mon_plan, mon_inject;
    double mon_baseline = 0, mon_check_period = 0;
    mon_cmd->add_option("--stream", mon_stream, "canonical telemetry CSV")->required();
    mon_cmd->add_option("--model", mon_model, "trained model artifact")->required();
    mon_cmd->add_option("--plan", mon_plan, "preprocess plan artifact")->required();
    mon_cmd->add_option("--inject", mon_inject, "scale=F|offset=F,start=D,len=D drift injection");
    mon_cmd->add_option("--baseline", mon_baseline, "baseline MAE override");
    mon_cmd->add_option("--check-period", mon_check_period, "check period override (seconds)");

    // inject-drift
    auto* inj_cmd = app.add_subcommand("inject-drift", "write a drift-injected copy of a stream");
    std::string inj_input, inj_spec, inj_out;
    inj_cmd->add_option("--input", inj_input, "canonical telemetry CSV")->required();
    inj_cmd->add_option("--inject", inj_spec, "scale=F|offset=F,start=D,len=D")->required();
    inj_cmd->add_option("--out-file", inj_out, "output CSV path");

    CLI11_PARSE(app, argc, argv);
    g.seed_set = seed_opt->count() > 0;

    try {
        const config::PipelineConfig cfg = load_config(g);
        if (synth_cmd->parsed()) return cmd_synth(cfg, synth_out, synth_seconds, synth_seed);
        if (ingest_cmd->parsed()) return cmd_ingest(cfg, ingest_inputs, g.force);
        if (prep_cmd->parsed()) return cmd_preprocess(cfg, prep_input, g.force);
        if (fsel_cmd->parsed()) return cmd_select_features(cfg, fsel_input, g.force);
        if (search_cmd->parsed()) return cmd_search(cfg, search_features, g.force);
        if (train_cmd->parsed()) return cmd_train(cfg, train_features, g.force);
        if (eval_cmd->parsed())
            return cmd_evaluate(cfg, eval_features, eval_model, eval_compare, g.force);
        if (sweep_cmd->parsed()) return cmd_sweep(cfg, sweep_features, sweep_kind, g.force);
        if (mon_cmd->parsed())
            return cmd_monitor(cfg, mon_stream, mon_model, mon_plan, mon_inject, mon_baseline,
                               mon_check_period, g.force);
        if (inj_cmd->parsed()) return cmd_inject_drift(cfg, inj_input, inj_spec, inj_out, g.force);
    } catch (const Error& e) {
        log_event("error", "command_failed", {{"kind", e.kind()}, {"message", e.what()}});
        if (e.kind() == "ConfigInvalid") return 2;
        if (e.kind() == "MissingArtifact") return 3;
        return 4;
    } catch (const std::exception& e) {
        log_event("error", "command_failed", {{"kind", "Unhandled"}, {"message", e.what()}});
        return 4;
    }
    return 0;
}
