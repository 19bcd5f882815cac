#include "flowcast/feature_select.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

#include <nlohmann/json.hpp>

namespace flowcast::fsel {

using nlohmann::json;

// ============================================================================
// Boosted regression trees
// ============================================================================

namespace {

struct SplitChoice {
    bool found = false;
    size_t feature = 0;
    double threshold = 0.0;
    double gain = 0.0;
};

struct TreeNode {
    bool leaf = true;
    size_t feature = 0;
    double threshold = 0.0;
    double value = 0.0;  // mean residual at the leaf
    int left = -1, right = -1;
};

struct Tree {
    std::vector<TreeNode> nodes;

    double predict(const double* row) const {
        int idx = 0;
        while (!nodes[idx].leaf)
            idx = (row[nodes[idx].feature] <= nodes[idx].threshold) ? nodes[idx].left : nodes[idx].right;
        return nodes[idx].value;
    }
};

struct NodeStats {
    double sum = 0.0;
    double sum_sq = 0.0;
    size_t count = 0;

    void add(double v) {
        sum += v;
        sum_sq += v * v;
        ++count;
    }
    double sse() const {
        if (count == 0) return 0.0;
        return sum_sq - sum * sum / static_cast<double>(count);
    }
    double mean() const { return count == 0 ? 0.0 : sum / static_cast<double>(count); }
};

class TreeBuilder {
public:
    TreeBuilder(const Mat& x, const std::vector<std::string>& names, const GbtConfig& cfg)
        : x_(x), names_(names), cfg_(cfg) {
        // global presort per feature; node scans filter by membership
        order_.resize(x.cols);
        for (size_t f = 0; f < x.cols; ++f) {
            auto& ord = order_[f];
            ord.resize(x.rows);
            std::iota(ord.begin(), ord.end(), uint32_t{0});
            std::stable_sort(ord.begin(), ord.end(), [&](uint32_t a, uint32_t b) {
                return x.at(a, f) < x.at(b, f);
            });
        }
        // features examined in canonical name order so gain ties are stable
        feature_order_.resize(x.cols);
        std::iota(feature_order_.begin(), feature_order_.end(), size_t{0});
        std::sort(feature_order_.begin(), feature_order_.end(), [&](size_t a, size_t b) {
            return names_[a] < names_[b];
        });
    }

    Tree fit(const std::vector<double>& residuals, std::vector<double>& gain_accum) {
        residuals_ = &residuals;
        membership_.assign(x_.rows, 0);
        Tree tree;
        tree.nodes.emplace_back();
        NodeStats root;
        for (double r : residuals) root.add(r);
        grow(tree, 0, 0, root, 0, gain_accum);
        return tree;
    }

private:
    void grow(Tree& tree, int node_idx, uint32_t node_id, const NodeStats& stats, size_t depth,
              std::vector<double>& gain_accum) {
        tree.nodes[node_idx].value = stats.mean();
        if (depth >= cfg_.max_depth || stats.count < 2 * cfg_.min_samples_leaf) return;

        const SplitChoice split = best_split(node_id, stats);
        if (!split.found || split.gain <= 1e-12) return;

        gain_accum[split.feature] += split.gain;
        tree.nodes[node_idx].leaf = false;
        tree.nodes[node_idx].feature = split.feature;
        tree.nodes[node_idx].threshold = split.threshold;

        const uint32_t left_id = 2 * node_id + 1;
        const uint32_t right_id = 2 * node_id + 2;
        NodeStats left_stats, right_stats;
        for (size_t i = 0; i < x_.rows; ++i) {
            if (membership_[i] != node_id) continue;
            if (x_.at(i, split.feature) <= split.threshold) {
                membership_[i] = left_id;
                left_stats.add((*residuals_)[i]);
            } else {
                membership_[i] = right_id;
                right_stats.add((*residuals_)[i]);
            }
        }

        const int left_idx = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        const int right_idx = static_cast<int>(tree.nodes.size());
        tree.nodes.emplace_back();
        tree.nodes[node_idx].left = left_idx;
        tree.nodes[node_idx].right = right_idx;
        grow(tree, left_idx, left_id, left_stats, depth + 1, gain_accum);
        grow(tree, right_idx, right_id, right_stats, depth + 1, gain_accum);
    }

    SplitChoice best_split(uint32_t node_id, const NodeStats& total) {
        SplitChoice best;
        const double parent_sse = total.sse();
        for (size_t f : feature_order_) {
            NodeStats left;
            const auto& ord = order_[f];
            double prev_value = 0.0;
            bool have_prev = false;
            for (uint32_t idx : ord) {
                if (membership_[idx] != node_id) continue;
                const double value = x_.at(idx, f);
                if (have_prev && value > prev_value && left.count >= cfg_.min_samples_leaf &&
                    total.count - left.count >= cfg_.min_samples_leaf) {
                    NodeStats right;
                    right.sum = total.sum - left.sum;
                    right.sum_sq = total.sum_sq - left.sum_sq;
                    right.count = total.count - left.count;
                    const double gain = parent_sse - left.sse() - right.sse();
                    if (gain > best.gain + 1e-15) {
                        best.found = true;
                        best.feature = f;
                        best.threshold = 0.5 * (prev_value + value);
                        best.gain = gain;
                    }
                }
                left.add((*residuals_)[idx]);
                prev_value = value;
                have_prev = true;
            }
        }
        return best;
    }

    const Mat& x_;
    const std::vector<std::string>& names_;
    const GbtConfig& cfg_;
    std::vector<std::vector<uint32_t>> order_;
    std::vector<size_t> feature_order_;
    std::vector<uint32_t> membership_;
    const std::vector<double>* residuals_ = nullptr;
};

}  // namespace

ImportanceResult fit_gbt_importance(const Mat& x, const std::vector<double>& y,
                                    const std::vector<std::string>& names, const GbtConfig& cfg) {
    if (x.rows < 2) throw Error("TooFewRows", "need at least 2 rows to fit importance");
    if (x.rows != y.size() || x.cols != names.size())
        throw Error("ShapeMismatch", "feature matrix, target and names disagree");

    ImportanceResult result;
    result.importance.assign(x.cols, 0.0);

    const double y0 = y[0];
    if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y0; })) {
        result.constant_target = true;
        return result;
    }

    double base = 0;
    for (double v : y) base += v;
    base /= static_cast<double>(y.size());

    std::vector<double> prediction(y.size(), base);
    std::vector<double> residuals(y.size());
    std::vector<double> gains(x.cols, 0.0);

    TreeBuilder builder(x, names, cfg);
    for (size_t t = 0; t < cfg.trees; ++t) {
        for (size_t i = 0; i < y.size(); ++i) residuals[i] = y[i] - prediction[i];
        const Tree tree = builder.fit(residuals, gains);
        for (size_t i = 0; i < y.size(); ++i)
            prediction[i] += cfg.learning_rate * tree.predict(x.row(i));
    }

    double total = 0;
    for (double g : gains) total += g;
    if (total <= 0) {
        result.constant_target = true;  // nothing reducible: flag like a constant target
        return result;
    }
    for (size_t f = 0; f < x.cols; ++f) result.importance[f] = gains[f] / total;
    return result;
}

CumulativeSelection select_by_cumulative(const std::vector<std::string>& names,
                                         const std::vector<double>& importance,
                                         double cumulative_threshold) {
    if (cumulative_threshold <= 0.0 || cumulative_threshold > 1.0)
        throw Error("ConfigInvalid", "cumulative threshold must lie in (0, 1]");
    if (names.size() != importance.size())
        throw Error("ShapeMismatch", "names and importance lengths differ");

    std::vector<size_t> order(names.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (importance[a] != importance[b]) return importance[a] > importance[b];
        return names[a] < names[b];
    });

    CumulativeSelection sel;
    double cum = 0.0;
    for (size_t idx : order) {
        if (importance[idx] <= 0.0) break;
        if (cum >= cumulative_threshold - 1e-12) break;
        sel.kept.push_back(names[idx]);
        cum += importance[idx];
    }
    sel.all_zero = sel.kept.empty();
    return sel;
}

double pearson_r(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error("ShapeMismatch", "series lengths differ");
    if (x.size() < 2) throw Error("TooFewRows", "need at least 2 points for correlation");
    const double n = static_cast<double>(x.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < x.size(); ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0) throw Error("ConstantSeries", "correlation undefined for a constant series");
    return sxy / std::sqrt(sxx * syy);
}

namespace {

std::vector<double> fractional_ranks(const std::vector<double>& v) {
    std::vector<size_t> order(v.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
    std::vector<double> ranks(v.size());
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && v[order[j + 1]] == v[order[i]]) ++j;
        const double rank = 0.5 * static_cast<double>(i + j) + 1.0;  // ties share the mean rank
        for (size_t k = i; k <= j; ++k) ranks[order[k]] = rank;
        i = j + 1;
    }
    return ranks;
}

}  // namespace

double spearman_rho(const std::vector<double>& x, const std::vector<double>& y) {
    return pearson_r(fractional_ranks(x), fractional_ranks(y));
}

PruneResult prune_redundant(const std::vector<std::string>& kept, const Mat& x,
                            const std::vector<std::string>& names, double corr_threshold,
                            CorrelationKind kind) {
    if (corr_threshold <= 0.0 || corr_threshold > 1.0)
        throw Error("ConfigInvalid", "correlation threshold must lie in (0, 1]");

    auto column = [&](const std::string& name) {
        auto it = std::find(names.begin(), names.end(), name);
        if (it == names.end()) throw Error("UnknownColumn", "feature '" + name + "' not in matrix");
        const size_t j = static_cast<size_t>(it - names.begin());
        std::vector<double> col(x.rows);
        for (size_t i = 0; i < x.rows; ++i) col[i] = x.at(i, j);
        return col;
    };

    PruneResult out;
    std::vector<std::vector<double>> surviving_cols;
    for (const auto& candidate : kept) {
        const std::vector<double> col = column(candidate);
        bool redundant = false;
        for (size_t s = 0; s < out.final_features.size(); ++s) {
            double r;
            try {
                r = (kind == CorrelationKind::Pearson) ? pearson_r(surviving_cols[s], col)
                                                       : spearman_rho(surviving_cols[s], col);
            } catch (const Error& e) {
                if (e.kind() == "ConstantSeries") continue;
                throw;
            }
            if (std::abs(r) >= corr_threshold) {
                out.dropped.push_back({candidate, out.final_features[s], r});
                redundant = true;
                break;
            }
        }
        if (!redundant) {
            out.final_features.push_back(candidate);
            surviving_cols.push_back(col);
        }
    }
    return out;
}

FeatureReport fit_report(const Mat& x, const std::vector<double>& y,
                         const std::vector<std::string>& names, const SelectConfig& cfg) {
    FeatureReport report;
    report.feature_names = names;
    report.cumulative_threshold = cfg.cumulative_threshold;
    report.corr_threshold = cfg.corr_threshold;

    const ImportanceResult imp = fit_gbt_importance(x, y, names, cfg.gbt);
    report.importance = imp.importance;
    report.constant_target = imp.constant_target;

    const CumulativeSelection sel = select_by_cumulative(names, imp.importance, cfg.cumulative_threshold);
    report.kept_after_importance = sel.kept;

    const PruneResult pruned = prune_redundant(sel.kept, x, names, cfg.corr_threshold, cfg.correlation);
    report.dropped_redundant = pruned.dropped;
    report.final_features = pruned.final_features;
    return report;
}

Mat select_columns(const Mat& x, const std::vector<std::string>& names,
                   const std::vector<std::string>& chosen) {
    Mat out(x.rows, chosen.size());
    for (size_t k = 0; k < chosen.size(); ++k) {
        auto it = std::find(names.begin(), names.end(), chosen[k]);
        if (it == names.end()) throw Error("UnknownColumn", "feature '" + chosen[k] + "' not in matrix");
        const size_t j = static_cast<size_t>(it - names.begin());
        for (size_t i = 0; i < x.rows; ++i) out.at(i, k) = x.at(i, j);
    }
    return out;
}

// ============================================================================
// Report serialization
// ============================================================================

std::string FeatureReport::to_json() const {
    json j;
    j["feature_names"] = feature_names;
    j["importance"] = importance;
    j["constant_target"] = constant_target;
    j["cumulative_threshold"] = cumulative_threshold;
    j["kept_after_importance"] = kept_after_importance;
    j["corr_threshold"] = corr_threshold;
    j["dropped_redundant"] = json::array();
    for (const auto& d : dropped_redundant)
        j["dropped_redundant"].push_back({{"dropped", d.dropped}, {"kept_partner", d.kept_partner}, {"r", d.r}});
    j["final_features"] = final_features;
    return j.dump(2);
}

FeatureReport FeatureReport::from_json(const std::string& text) {
    json j = json::parse(text);
    FeatureReport r;
    r.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    r.importance = j.at("importance").get<std::vector<double>>();
    r.constant_target = j.at("constant_target").get<bool>();
    r.cumulative_threshold = j.at("cumulative_threshold").get<double>();
    r.kept_after_importance = j.at("kept_after_importance").get<std::vector<std::string>>();
    r.corr_threshold = j.at("corr_threshold").get<double>();
    for (const auto& d : j.at("dropped_redundant"))
        r.dropped_redundant.push_back({d.at("dropped").get<std::string>(),
                                       d.at("kept_partner").get<std::string>(), d.at("r").get<double>()});
    r.final_features = j.at("final_features").get<std::vector<std::string>>();
    return r;
}

void FeatureReport::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << to_json() << "\n";
}

FeatureReport FeatureReport::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("MissingArtifact", "feature report not found: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

std::string FeatureReport::table() const {
    std::vector<size_t> order(feature_names.size());
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        if (importance[a] != importance[b]) return importance[a] > importance[b];
        return feature_names[a] < feature_names[b];
    });

    std::ostringstream os;
    os << "rank  importance  cumulative  feature\n";
    double cum = 0;
    for (size_t i = 0; i < order.size(); ++i) {
        cum += importance[order[i]];
        char line[160];
        const bool kept = std::find(final_features.begin(), final_features.end(),
                                    feature_names[order[i]]) != final_features.end();
        std::snprintf(line, sizeof(line), "%4zu  %10.6f  %10.6f  %s%s\n", i + 1, importance[order[i]],
                      cum, feature_names[order[i]].c_str(), kept ? "" : "  (dropped)");
        os << line;
    }
    return os.str();
}

}  // namespace flowcast::fsel
