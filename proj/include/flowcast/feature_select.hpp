#pragma once

#include <string>
#include <vector>

#include "flowcast/common.hpp"

namespace flowcast::fsel {

struct GbtConfig {
    size_t trees = 100;
    size_t max_depth = 4;
    double learning_rate = 0.1;
    size_t min_samples_leaf = 5;
    uint64_t seed = 0;  // interface stability; exact greedy fitting draws nothing
};

struct ImportanceResult {
    std::vector<double> importance;  // per feature, non-negative, sums to 1 unless constant target
    bool constant_target = false;
};

// Gain-based importance from squared-error residual boosting with exact
// greedy splits. Deterministic: ties break on (feature name, threshold).
ImportanceResult fit_gbt_importance(const Mat& x, const std::vector<double>& y,
                                    const std::vector<std::string>& names, const GbtConfig& cfg);

struct CumulativeSelection {
    std::vector<std::string> kept;  // importance-descending
    bool all_zero = false;
};

CumulativeSelection select_by_cumulative(const std::vector<std::string>& names,
                                         const std::vector<double>& importance,
                                         double cumulative_threshold);

double pearson_r(const std::vector<double>& x, const std::vector<double>& y);
double spearman_rho(const std::vector<double>& x, const std::vector<double>& y);

enum class CorrelationKind { Pearson, Spearman };

struct RedundantDrop {
    std::string dropped;
    std::string kept_partner;
    double r;
};

struct PruneResult {
    std::vector<std::string> final_features;
    std::vector<RedundantDrop> dropped;
};

PruneResult prune_redundant(const std::vector<std::string>& kept, const Mat& x,
                            const std::vector<std::string>& names, double corr_threshold,
                            CorrelationKind kind = CorrelationKind::Pearson);

struct FeatureReport {
    std::vector<std::string> feature_names;
    std::vector<double> importance;
    bool constant_target = false;
    double cumulative_threshold = 0.95;
    std::vector<std::string> kept_after_importance;
    double corr_threshold = 0.95;
    std::vector<RedundantDrop> dropped_redundant;
    std::vector<std::string> final_features;

    std::string to_json() const;
    static FeatureReport from_json(const std::string& text);
    void save(const std::string& path) const;
    static FeatureReport load(const std::string& path);
    std::string table() const;  // ranked importance table for the CLI
};

struct SelectConfig {
    GbtConfig gbt;
    double cumulative_threshold = 0.95;
    double corr_threshold = 0.95;
    CorrelationKind correlation = CorrelationKind::Pearson;
};

FeatureReport fit_report(const Mat& x, const std::vector<double>& y,
                         const std::vector<std::string>& names, const SelectConfig& cfg);

// Column-subset copy in report order.
Mat select_columns(const Mat& x, const std::vector<std::string>& names,
                   const std::vector<std::string>& chosen);

}  // namespace flowcast::fsel
