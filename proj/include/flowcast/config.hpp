#pragma once

#include <string>
#include <vector>

#include "flowcast/common.hpp"
#include "flowcast/drift.hpp"
#include "flowcast/eval.hpp"
#include "flowcast/feature_select.hpp"
#include "flowcast/search.hpp"
#include "flowcast/synthetic.hpp"

namespace flowcast::config {

inline constexpr const char* kToolVersion = "1.0.0";
inline constexpr int kConfigSchemaVersion = 1;

struct IngestConfig {
    std::string schema = "canonical";  // canonical | gnettrack | path to a JSON map
    double period_s = 10.0;
    double max_gap_s = 30.0;
    std::string application = "downloading";
};

struct WindowConfig {
    double look_back_s = 300.0;
    double horizon_s = 60.0;
    eval::SplitFractions splits;
};

struct TrainSectionConfig {
    double learning_rate = 1e-3;
    double dropout = 0.1;
    size_t batch_size = 32;
    size_t max_epochs = 100;
    size_t patience = 10;
    double teacher_forcing = 1.0;
    std::vector<size_t> encoder_units = {64};
    std::vector<size_t> decoder_units = {64};
    std::vector<size_t> dense_units = {};
};

struct SweepSectionConfig {
    std::vector<double> look_backs_min = {2, 3, 4, 5};
    std::vector<double> horizons_min = {5, 7, 10, 15, 20};
    double fixed_horizon_min = 5;
    double fixed_look_back_min = 5;
    std::vector<uint64_t> seeds = {1, 2, 3};
    size_t max_epochs = 60;
    size_t patience = 8;
    double learning_rate = 3e-3;
    std::vector<size_t> units = {32};
    double dropout = 0.1;
};

struct MonitorSectionConfig {
    double check_period_s = 600.0;
    double window_size_s = 600.0;
    double rel_margin = 0.2;
    size_t fine_tune_epochs = 5;
    double fine_tune_lr_scale = 0.1;
};

struct PipelineConfig {
    std::string data_dir = ".";
    std::string artifacts_dir = "artifacts";
    uint64_t seed = 42;

    IngestConfig ingest;
    double preprocess_train_fraction = 0.7;
    fsel::SelectConfig features;
    WindowConfig windows;
    TrainSectionConfig train;
    search::PipelineSearchConfig search;
    SweepSectionConfig sweeps;
    MonitorSectionConfig monitor;
    synth::GeneratorConfig synthetic;
    std::vector<uint64_t> compare_seeds = {1, 2, 3};
    double mape_epsilon_kbps = 1.0;

    std::string canonical_json() const;   // sorted-key dump used for hashing
    std::string config_hash() const;      // hex fnv-1a of the canonical dump

    static PipelineConfig from_json(const std::string& text);
    static PipelineConfig load(const std::string& path);  // validates
    void validate() const;                                // throws ConfigInvalid
};

// ============================================================================
// Run manifests
// ============================================================================

// Every artifact gets a sibling <artifact>.manifest.json recording the config
// hash, seed and inputs that produced it; downstream stages refuse mismatched
// upstream artifacts unless forced.
struct RunManifest {
    std::string command;
    std::string config_hash;
    uint64_t seed = 0;
    std::string tool_version = kToolVersion;
    int schema_version = kConfigSchemaVersion;
    double wall_time_s = 0.0;
    std::vector<std::pair<std::string, std::string>> inputs;  // (role, path)

    void save(const std::string& artifact_path) const;
    static RunManifest load(const std::string& artifact_path);
};

// Throws MissingArtifact when absent; ConfigInvalid on hash mismatch unless
// force is set.
void check_upstream(const std::string& artifact_path, const std::string& expected_hash, bool force);

}  // namespace flowcast::config
