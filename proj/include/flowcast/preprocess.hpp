#pragma once

#include <array>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowcast/common.hpp"
#include "flowcast/telemetry.hpp"

namespace flowcast::prep {

enum class Encoding { None, Label, OneHot, Target };
enum class Imputation { Zero, Mean, Median, ForwardFill, BackwardFill };
enum class Normalization { None, ZScore, MinMax };

std::string to_string(Encoding e);
std::string to_string(Imputation i);
std::string to_string(Normalization n);
Encoding encoding_from_string(const std::string& s);
Imputation imputation_from_string(const std::string& s);
Normalization normalization_from_string(const std::string& s);

// ============================================================================
// Single-column primitives
// ============================================================================

// hour-of-day and day-of-week angles as (sin, cos) pairs, all in [-1, 1]
std::array<double, 4> encode_timestamp(double seconds_since_epoch);

// Fills every missing entry. Mean/median statistics may be supplied
// externally (fitted on the training split); when absent they are computed
// from the present values of the series itself.
std::vector<double> impute(const std::vector<std::optional<double>>& series, Imputation method,
                           std::optional<double> fitted_statistic = std::nullopt);

// Fitted, invertible scaling for one column.
struct Normalizer {
    Normalization kind = Normalization::None;
    double a = 0.0;  // zscore: mean,  minmax: min
    double b = 1.0;  // zscore: population std,  minmax: max
    bool degenerate = false;  // constant column; transform is the zero map
    bool clip = true;         // clip min-max outputs into [0, 1] at apply time

    double apply(double x) const;
    double invert(double y) const;
    double scale() const;  // multiplier linking normalized and raw error units
};

Normalizer fit_normalizer(const std::vector<double>& column, Normalization kind, bool clip = true);

// ============================================================================
// Plan
// ============================================================================

struct ColumnPolicy {
    Encoding encoding = Encoding::None;
    Imputation imputation = Imputation::Zero;
    Normalization normalization = Normalization::MinMax;
};

struct PreprocessPolicy {
    std::map<std::string, ColumnPolicy> columns;  // keyed by canonical column name
    double train_fraction = 0.7;                  // stats fitted on this leading fraction
    bool clip_minmax = true;
    std::string target_column = "dl_bitrate";

    // The case-study defaults: cyclical timestamps, label-encoded identifiers,
    // one-hot mode/state, forward-filled radio metrics, zero-filled bitrates,
    // min-max everywhere.
    static PreprocessPolicy case_study_default();
};

struct ColumnTransform {
    std::string column;
    Encoding encoding = Encoding::None;
    std::vector<std::string> categories;          // label order / one-hot columns
    std::map<std::string, double> target_means;   // target encoding table
    double target_global_mean = 0.0;
    Imputation imputation = Imputation::Zero;
    std::optional<double> impute_statistic;       // fitted mean or median
    Normalizer normalizer;                        // for the numeric result
    std::vector<Normalizer> onehot_normalizers;   // per indicator column
};

struct PreprocessPlan {
    int version = 1;
    uint64_t fitted_on = 0;  // ingest::fingerprint of the fitted dataset
    double train_fraction = 0.7;
    std::string target_column;
    std::vector<ColumnTransform> columns;  // feature construction order
    Normalizer target;                     // target scaling (shared with the feature copy)
    bool has_time_features = true;

    std::string to_json() const;
    static PreprocessPlan from_json(const std::string& text);
    void save(const std::string& path) const;
    static PreprocessPlan load(const std::string& path);
};

// Numeric design matrix produced by applying a plan.
struct FeatureMatrix {
    std::vector<std::string> names;
    Mat x;                  // N x F
    std::vector<double> y;  // normalized target, length N
    Normalizer target;      // for denormalizing errors
    std::vector<size_t> segment_starts;
};

// Encoder-only fit, exposed for tests and partial pipelines.
PreprocessPlan fit_encoders(const ingest::SessionDataset& ds, const PreprocessPolicy& policy);

// Full fit: encoders + imputation statistics + normalization, using only the
// leading train_fraction of rows for every fitted statistic.
PreprocessPlan fit_plan(const ingest::SessionDataset& ds, const PreprocessPolicy& policy);

FeatureMatrix apply_plan(const PreprocessPlan& plan, const ingest::SessionDataset& ds);

}  // namespace flowcast::prep
