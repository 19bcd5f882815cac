#include "flowcast/config.hpp"

#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

namespace flowcast::config {

using nlohmann::json;

namespace {

// Paths are serialized for documentation but excluded from the canonical
// hash: where artifacts live does not change what they contain.
json to_json(const PipelineConfig& c, bool for_hash) {
    json j;
    if (!for_hash) {
        j["data_dir"] = c.data_dir;
        j["artifacts_dir"] = c.artifacts_dir;
    }
    j["seed"] = c.seed;

    j["ingest"] = {{"schema", c.ingest.schema},
                   {"period_s", c.ingest.period_s},
                   {"max_gap_s", c.ingest.max_gap_s},
                   {"application", c.ingest.application}};

    j["preprocess"] = {{"train_fraction", c.preprocess_train_fraction}};

    j["features"] = {{"trees", c.features.gbt.trees},
                     {"max_depth", c.features.gbt.max_depth},
                     {"learning_rate", c.features.gbt.learning_rate},
                     {"min_samples_leaf", c.features.gbt.min_samples_leaf},
                     {"cumulative_threshold", c.features.cumulative_threshold},
                     {"corr_threshold", c.features.corr_threshold},
                     {"correlation", c.features.correlation == fsel::CorrelationKind::Pearson
                                         ? "pearson"
                                         : "spearman"}};

    j["windows"] = {{"look_back_s", c.windows.look_back_s},
                    {"horizon_s", c.windows.horizon_s},
                    {"splits", {c.windows.splits.train, c.windows.splits.val, c.windows.splits.test}}};

    j["train"] = {{"learning_rate", c.train.learning_rate},
                  {"dropout", c.train.dropout},
                  {"batch_size", c.train.batch_size},
                  {"max_epochs", c.train.max_epochs},
                  {"patience", c.train.patience},
                  {"teacher_forcing", c.train.teacher_forcing},
                  {"encoder_units", c.train.encoder_units},
                  {"decoder_units", c.train.decoder_units},
                  {"dense_units", c.train.dense_units}};

    j["search"] = {{"budget", c.search.budget},
                   {"init_points", c.search.init_points},
                   {"candidate_epoch_cap", c.search.candidate_epoch_cap},
                   {"candidate_patience", c.search.candidate_patience},
                   {"retrain_epochs", c.search.retrain_epochs},
                   {"retrain_patience", c.search.retrain_patience},
                   {"batch_size", c.search.batch_size},
                   {"teacher_forcing", c.search.teacher_forcing},
                   {"length_scale", c.search.bayes.length_scale},
                   {"noise_var", c.search.bayes.noise_var},
                   {"candidate_pool", c.search.bayes.candidate_pool}};

    j["sweeps"] = {{"look_backs_min", c.sweeps.look_backs_min},
                   {"horizons_min", c.sweeps.horizons_min},
                   {"fixed_horizon_min", c.sweeps.fixed_horizon_min},
                   {"fixed_look_back_min", c.sweeps.fixed_look_back_min},
                   {"seeds", c.sweeps.seeds},
                   {"max_epochs", c.sweeps.max_epochs},
                   {"patience", c.sweeps.patience},
                   {"learning_rate", c.sweeps.learning_rate},
                   {"units", c.sweeps.units},
                   {"dropout", c.sweeps.dropout}};

    j["monitor"] = {{"check_period_s", c.monitor.check_period_s},
                    {"window_size_s", c.monitor.window_size_s},
                    {"rel_margin", c.monitor.rel_margin},
                    {"fine_tune_epochs", c.monitor.fine_tune_epochs},
                    {"fine_tune_lr_scale", c.monitor.fine_tune_lr_scale}};

    j["synthetic"] = {{"seconds", c.synthetic.seconds},
                      {"seed", c.synthetic.seed},
                      {"base_kbps", c.synthetic.base_kbps},
                      {"idle_fraction", c.synthetic.idle_fraction},
                      {"driving", c.synthetic.driving},
                      {"mode", ingest::to_string(c.synthetic.mode)},
                      {"application", ingest::to_string(c.synthetic.application)},
                      {"slow_tau_s", c.synthetic.slow_tau_s},
                      {"slow_std", c.synthetic.slow_std},
                      {"fast_tau_s", c.synthetic.fast_tau_s},
                      {"fast_std", c.synthetic.fast_std},
                      {"season1_period_s", c.synthetic.season1_period_s},
                      {"season1_amp", c.synthetic.season1_amp},
                      {"season2_period_s", c.synthetic.season2_period_s},
                      {"season2_amp", c.synthetic.season2_amp},
                      {"diurnal_amp", c.synthetic.diurnal_amp},
                      {"noise_kbps", c.synthetic.noise_kbps}};

    j["compare_seeds"] = c.compare_seeds;
    j["mape_epsilon_kbps"] = c.mape_epsilon_kbps;
    return j;
}

template <typename T>
void read_if(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace

std::string PipelineConfig::canonical_json() const { return to_json(*this, true).dump(); }

std::string PipelineConfig::config_hash() const { return to_hex(fnv1a64(canonical_json())); }

PipelineConfig PipelineConfig::from_json(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw Error("ConfigInvalid", std::string("config is not valid JSON: ") + e.what());
    }

    PipelineConfig c;
    try {
        read_if(j, "data_dir", c.data_dir);
        read_if(j, "artifacts_dir", c.artifacts_dir);
        read_if(j, "seed", c.seed);

        if (j.contains("ingest")) {
            const json& s = j["ingest"];
            read_if(s, "schema", c.ingest.schema);
            read_if(s, "period_s", c.ingest.period_s);
            read_if(s, "max_gap_s", c.ingest.max_gap_s);
            read_if(s, "application", c.ingest.application);
        }
        if (j.contains("preprocess")) read_if(j["preprocess"], "train_fraction", c.preprocess_train_fraction);
        if (j.contains("features")) {
            const json& s = j["features"];
            read_if(s, "trees", c.features.gbt.trees);
            read_if(s, "max_depth", c.features.gbt.max_depth);
            read_if(s, "learning_rate", c.features.gbt.learning_rate);
            read_if(s, "min_samples_leaf", c.features.gbt.min_samples_leaf);
            read_if(s, "cumulative_threshold", c.features.cumulative_threshold);
            read_if(s, "corr_threshold", c.features.corr_threshold);
            if (s.contains("correlation"))
                c.features.correlation = s["correlation"].get<std::string>() == "spearman"
                                             ? fsel::CorrelationKind::Spearman
                                             : fsel::CorrelationKind::Pearson;
        }
        if (j.contains("windows")) {
            const json& s = j["windows"];
            read_if(s, "look_back_s", c.windows.look_back_s);
            read_if(s, "horizon_s", c.windows.horizon_s);
            if (s.contains("splits")) {
                const auto v = s["splits"].get<std::vector<double>>();
                if (v.size() != 3) throw Error("ConfigInvalid", "windows.splits needs 3 fractions");
                c.windows.splits = {v[0], v[1], v[2]};
            }
        }
        if (j.contains("train")) {
            const json& s = j["train"];
            read_if(s, "learning_rate", c.train.learning_rate);
            read_if(s, "dropout", c.train.dropout);
            read_if(s, "batch_size", c.train.batch_size);
            read_if(s, "max_epochs", c.train.max_epochs);
            read_if(s, "patience", c.train.patience);
            read_if(s, "teacher_forcing", c.train.teacher_forcing);
            read_if(s, "encoder_units", c.train.encoder_units);
            read_if(s, "decoder_units", c.train.decoder_units);
            read_if(s, "dense_units", c.train.dense_units);
        }
        if (j.contains("search")) {
            const json& s = j["search"];
            read_if(s, "budget", c.search.budget);
            read_if(s, "init_points", c.search.init_points);
            read_if(s, "candidate_epoch_cap", c.search.candidate_epoch_cap);
            read_if(s, "candidate_patience", c.search.candidate_patience);
            read_if(s, "retrain_epochs", c.search.retrain_epochs);
            read_if(s, "retrain_patience", c.search.retrain_patience);
            read_if(s, "batch_size", c.search.batch_size);
            read_if(s, "teacher_forcing", c.search.teacher_forcing);
            read_if(s, "length_scale", c.search.bayes.length_scale);
            read_if(s, "noise_var", c.search.bayes.noise_var);
            read_if(s, "candidate_pool", c.search.bayes.candidate_pool);
        }
        if (j.contains("sweeps")) {
            const json& s = j["sweeps"];
            read_if(s, "look_backs_min", c.sweeps.look_backs_min);
            read_if(s, "horizons_min", c.sweeps.horizons_min);
            read_if(s, "fixed_horizon_min", c.sweeps.fixed_horizon_min);
            read_if(s, "fixed_look_back_min", c.sweeps.fixed_look_back_min);
            read_if(s, "seeds", c.sweeps.seeds);
            read_if(s, "max_epochs", c.sweeps.max_epochs);
            read_if(s, "patience", c.sweeps.patience);
            read_if(s, "learning_rate", c.sweeps.learning_rate);
            read_if(s, "units", c.sweeps.units);
            read_if(s, "dropout", c.sweeps.dropout);
        }
        if (j.contains("monitor")) {
            const json& s = j["monitor"];
            read_if(s, "check_period_s", c.monitor.check_period_s);
            read_if(s, "window_size_s", c.monitor.window_size_s);
            read_if(s, "rel_margin", c.monitor.rel_margin);
            read_if(s, "fine_tune_epochs", c.monitor.fine_tune_epochs);
            read_if(s, "fine_tune_lr_scale", c.monitor.fine_tune_lr_scale);
        }
        if (j.contains("synthetic")) {
            const json& s = j["synthetic"];
            read_if(s, "seconds", c.synthetic.seconds);
            read_if(s, "seed", c.synthetic.seed);
            read_if(s, "base_kbps", c.synthetic.base_kbps);
            read_if(s, "idle_fraction", c.synthetic.idle_fraction);
            read_if(s, "driving", c.synthetic.driving);
            if (s.contains("mode")) c.synthetic.mode = ingest::parse_network_mode(s["mode"].get<std::string>());
            if (s.contains("application"))
                c.synthetic.application = ingest::parse_application(s["application"].get<std::string>());
            read_if(s, "slow_tau_s", c.synthetic.slow_tau_s);
            read_if(s, "slow_std", c.synthetic.slow_std);
            read_if(s, "fast_tau_s", c.synthetic.fast_tau_s);
            read_if(s, "fast_std", c.synthetic.fast_std);
            read_if(s, "season1_period_s", c.synthetic.season1_period_s);
            read_if(s, "season1_amp", c.synthetic.season1_amp);
            read_if(s, "season2_period_s", c.synthetic.season2_period_s);
            read_if(s, "season2_amp", c.synthetic.season2_amp);
            read_if(s, "diurnal_amp", c.synthetic.diurnal_amp);
            read_if(s, "noise_kbps", c.synthetic.noise_kbps);
        }
        read_if(j, "compare_seeds", c.compare_seeds);
        read_if(j, "mape_epsilon_kbps", c.mape_epsilon_kbps);
    } catch (const json::exception& e) {
        throw Error("ConfigInvalid", std::string("config field type error: ") + e.what());
    }
    return c;
}

void PipelineConfig::validate() const {
    auto in_unit = [](double v) { return v >= 0.0 && v <= 1.0; };
    if (!std::filesystem::exists(data_dir))
        throw Error("ConfigInvalid", "data_dir does not exist: " + data_dir);
    if (ingest.period_s <= 0) throw Error("ConfigInvalid", "ingest.period_s must be positive");
    if (ingest.max_gap_s <= 0) throw Error("ConfigInvalid", "ingest.max_gap_s must be positive");
    if (!in_unit(preprocess_train_fraction) || preprocess_train_fraction == 0.0)
        throw Error("ConfigInvalid", "preprocess.train_fraction must lie in (0, 1]");
    if (features.cumulative_threshold <= 0 || features.cumulative_threshold > 1)
        throw Error("ConfigInvalid", "features.cumulative_threshold must lie in (0, 1]");
    if (features.corr_threshold <= 0 || features.corr_threshold > 1)
        throw Error("ConfigInvalid", "features.corr_threshold must lie in (0, 1]");
    const double split_sum = windows.splits.train + windows.splits.val + windows.splits.test;
    if (std::abs(split_sum - 1.0) > 1e-9)
        throw Error("ConfigInvalid", "windows.splits must sum to 1");
    if (!in_unit(train.dropout) || train.dropout > 0.9)
        throw Error("ConfigInvalid", "train.dropout must lie in [0, 0.9]");
    if (!in_unit(train.teacher_forcing))
        throw Error("ConfigInvalid", "train.teacher_forcing must lie in [0, 1]");
    if (search.budget == 0) throw Error("ConfigInvalid", "search.budget must be >= 1");
    if (search.budget <= search.init_points)
        throw Error("ConfigInvalid", "search.budget must exceed search.init_points");
    if (monitor.rel_margin < 0) throw Error("ConfigInvalid", "monitor.rel_margin must be >= 0");
    if (monitor.check_period_s <= 0 || monitor.window_size_s <= 0)
        throw Error("ConfigInvalid", "monitor periods must be positive");
    if (windows.look_back_s < ingest.period_s || windows.horizon_s < ingest.period_s)
        throw Error("ConfigInvalid", "windows must cover at least one sample period");
}

PipelineConfig PipelineConfig::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("ConfigInvalid", "config file not found: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    PipelineConfig c = from_json(text);
    c.validate();
    return c;
}

// ============================================================================
// Manifests
// ============================================================================

void RunManifest::save(const std::string& artifact_path) const {
    json j;
    j["command"] = command;
    j["config_hash"] = config_hash;
    j["seed"] = seed;
    j["tool_version"] = tool_version;
    j["schema_version"] = schema_version;
    j["wall_time_s"] = wall_time_s;
    json in = json::object();
    for (const auto& [role, path] : inputs) in[role] = path;
    j["inputs"] = in;
    std::ofstream out(artifact_path + ".manifest.json");
    if (!out) throw Error("IoError", "cannot write manifest for " + artifact_path);
    out << j.dump(2) << "\n";
}

RunManifest RunManifest::load(const std::string& artifact_path) {
    std::ifstream in(artifact_path + ".manifest.json");
    if (!in) throw Error("MissingArtifact", "manifest missing for " + artifact_path);
    json j;
    in >> j;
    RunManifest m;
    m.command = j.at("command").get<std::string>();
    m.config_hash = j.at("config_hash").get<std::string>();
    m.seed = j.at("seed").get<uint64_t>();
    m.tool_version = j.at("tool_version").get<std::string>();
    m.schema_version = j.at("schema_version").get<int>();
    m.wall_time_s = j.at("wall_time_s").get<double>();
    for (auto& [role, path] : j.at("inputs").items()) m.inputs.emplace_back(role, path.get<std::string>());
    return m;
}

void check_upstream(const std::string& artifact_path, const std::string& expected_hash, bool force) {
    if (!std::filesystem::exists(artifact_path))
        throw Error("MissingArtifact", "required artifact missing: " + artifact_path);
    if (force) return;
    const RunManifest m = RunManifest::load(artifact_path);
    if (m.config_hash != expected_hash)
        throw Error("ConfigInvalid", "artifact " + artifact_path +
                                         " was produced with config hash " + m.config_hash +
                                         " but the current config hashes to " + expected_hash +
                                         " (use --force to override)");
}

}  // namespace flowcast::config
