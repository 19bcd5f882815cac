#include "flowcast/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

namespace flowcast::prep {

using ingest::SessionDataset;
using ingest::TelemetryRecord;
using nlohmann::json;

std::string to_string(Encoding e) {
    switch (e) {
        case Encoding::None: return "none";
        case Encoding::Label: return "label";
        case Encoding::OneHot: return "one_hot";
        case Encoding::Target: return "target";
    }
    return "none";
}

std::string to_string(Imputation i) {
    switch (i) {
        case Imputation::Zero: return "zero";
        case Imputation::Mean: return "mean";
        case Imputation::Median: return "median";
        case Imputation::ForwardFill: return "forward_fill";
        case Imputation::BackwardFill: return "backward_fill";
    }
    return "zero";
}

std::string to_string(Normalization n) {
    switch (n) {
        case Normalization::None: return "none";
        case Normalization::ZScore: return "zscore";
        case Normalization::MinMax: return "minmax";
    }
    return "none";
}

Encoding encoding_from_string(const std::string& s) {
    if (s == "none") return Encoding::None;
    if (s == "label") return Encoding::Label;
    if (s == "one_hot") return Encoding::OneHot;
    if (s == "target") return Encoding::Target;
    throw Error("ConfigInvalid", "unknown encoding '" + s + "'");
}

Imputation imputation_from_string(const std::string& s) {
    if (s == "zero") return Imputation::Zero;
    if (s == "mean") return Imputation::Mean;
    if (s == "median") return Imputation::Median;
    if (s == "forward_fill") return Imputation::ForwardFill;
    if (s == "backward_fill") return Imputation::BackwardFill;
    throw Error("ConfigInvalid", "unknown imputation '" + s + "'");
}

Normalization normalization_from_string(const std::string& s) {
    if (s == "none") return Normalization::None;
    if (s == "zscore") return Normalization::ZScore;
    if (s == "minmax") return Normalization::MinMax;
    throw Error("ConfigInvalid", "unknown normalization '" + s + "'");
}

// ============================================================================
// Primitives
// ============================================================================

std::array<double, 4> encode_timestamp(double seconds_since_epoch) {
    const double day = 86400.0;
    double sod = std::fmod(seconds_since_epoch, day);
    if (sod < 0) sod += day;
    const double hour_angle = 2.0 * M_PI * sod / day;

    // epoch day 0 was a Thursday; the fractional part keeps the feature
    // continuous across midnight
    const double days = std::floor(seconds_since_epoch / day);
    double dow = std::fmod(days + 4.0, 7.0);
    if (dow < 0) dow += 7.0;
    const double week_angle = 2.0 * M_PI * (dow + sod / day) / 7.0;

    return {std::sin(hour_angle), std::cos(hour_angle), std::sin(week_angle), std::cos(week_angle)};
}

namespace {

double median_of(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const size_t n = v.size();
    return (n % 2 == 1) ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> present_values(const std::vector<std::optional<double>>& series, size_t limit) {
    std::vector<double> out;
    const size_t n = std::min(limit, series.size());
    for (size_t i = 0; i < n; ++i)
        if (series[i]) out.push_back(*series[i]);
    return out;
}

}  // namespace

std::vector<double> impute(const std::vector<std::optional<double>>& series, Imputation method,
                           std::optional<double> fitted_statistic) {
    std::vector<double> out(series.size(), 0.0);
    switch (method) {
        case Imputation::Zero:
            for (size_t i = 0; i < series.size(); ++i) out[i] = series[i].value_or(0.0);
            return out;
        case Imputation::Mean:
        case Imputation::Median: {
            double fill;
            if (fitted_statistic) {
                fill = *fitted_statistic;
            } else {
                const std::vector<double> present = present_values(series, series.size());
                if (present.empty())
                    throw Error("AllMissing", "mean/median imputation on a fully missing column");
                if (method == Imputation::Mean) {
                    double s = 0;
                    for (double v : present) s += v;
                    fill = s / static_cast<double>(present.size());
                } else {
                    fill = median_of(present);
                }
            }
            for (size_t i = 0; i < series.size(); ++i) out[i] = series[i].value_or(fill);
            return out;
        }
        case Imputation::ForwardFill: {
            // leading missing run falls back to zero
            double last = 0.0;
            for (size_t i = 0; i < series.size(); ++i) {
                if (series[i]) last = *series[i];
                out[i] = last;
            }
            return out;
        }
        case Imputation::BackwardFill: {
            double next = 0.0;  // trailing missing run mirrors the zero fallback
            for (size_t i = series.size(); i-- > 0;) {
                if (series[i]) next = *series[i];
                out[i] = next;
            }
            return out;
        }
    }
    return out;
}

double Normalizer::apply(double x) const {
    switch (kind) {
        case Normalization::None: return x;
        case Normalization::ZScore: return degenerate ? 0.0 : (x - a) / b;
        case Normalization::MinMax: {
            if (degenerate) return 0.0;
            double y = (x - a) / (b - a);
            if (clip) y = std::clamp(y, 0.0, 1.0);
            return y;
        }
    }
    return x;
}

double Normalizer::invert(double y) const {
    switch (kind) {
        case Normalization::None: return y;
        case Normalization::ZScore: return degenerate ? a : a + b * y;
        case Normalization::MinMax: return degenerate ? a : a + (b - a) * y;
    }
    return y;
}

double Normalizer::scale() const {
    switch (kind) {
        case Normalization::None: return 1.0;
        case Normalization::ZScore: return degenerate ? 0.0 : b;
        case Normalization::MinMax: return degenerate ? 0.0 : b - a;
    }
    return 1.0;
}

Normalizer fit_normalizer(const std::vector<double>& column, Normalization kind, bool clip) {
    if (column.empty()) throw Error("AllMissing", "cannot fit a normalizer on an empty column");
    Normalizer n;
    n.kind = kind;
    n.clip = clip;
    if (kind == Normalization::None) return n;

    const auto [lo_it, hi_it] = std::minmax_element(column.begin(), column.end());
    if (*lo_it == *hi_it) {
        // DegenerateColumn: constant input maps to zero, flagged rather than silent
        n.degenerate = true;
        n.a = *lo_it;
        n.b = *hi_it;
        return n;
    }

    if (kind == Normalization::MinMax) {
        n.a = *lo_it;
        n.b = *hi_it;
        return n;
    }

    double mean = 0;
    for (double v : column) mean += v;
    mean /= static_cast<double>(column.size());
    double var = 0;
    for (double v : column) var += (v - mean) * (v - mean);
    var /= static_cast<double>(column.size());  // population variance
    n.a = mean;
    n.b = std::sqrt(var);
    return n;
}

// ============================================================================
// Column access
// ============================================================================

namespace {

using OptGetter = std::optional<double> (*)(const TelemetryRecord&);
using CatGetter = const std::string& (*)(const TelemetryRecord&);

struct NumericColumn {
    const char* name;
    OptGetter get;
};

const std::vector<NumericColumn>& numeric_columns() {
    static const std::vector<NumericColumn> cols = {
        {"longitude", [](const TelemetryRecord& r) { return r.longitude; }},
        {"latitude", [](const TelemetryRecord& r) { return r.latitude; }},
        {"speed", [](const TelemetryRecord& r) { return r.speed; }},
        {"dl_bitrate", [](const TelemetryRecord& r) { return std::optional<double>(r.dl_bitrate); }},
        {"ul_bitrate", [](const TelemetryRecord& r) { return r.ul_bitrate; }},
        {"ping_avg", [](const TelemetryRecord& r) { return r.ping_avg; }},
        {"ping_min", [](const TelemetryRecord& r) { return r.ping_min; }},
        {"ping_max", [](const TelemetryRecord& r) { return r.ping_max; }},
        {"ping_std", [](const TelemetryRecord& r) { return r.ping_std; }},
        {"ping_loss", [](const TelemetryRecord& r) { return r.ping_loss; }},
        {"cqi", [](const TelemetryRecord& r) { return r.cqi; }},
        {"snr", [](const TelemetryRecord& r) { return r.snr; }},
        {"rssi", [](const TelemetryRecord& r) { return r.rssi; }},
        {"rsrp", [](const TelemetryRecord& r) { return r.rsrp; }},
        {"rsrq", [](const TelemetryRecord& r) { return r.rsrq; }},
        {"nrx_rsrp", [](const TelemetryRecord& r) { return r.nrx_rsrp; }},
        {"nrx_rsrq", [](const TelemetryRecord& r) { return r.nrx_rsrq; }},
    };
    return cols;
}

struct CategoricalColumn {
    const char* name;
    std::string (*get)(const TelemetryRecord&);
};

const std::vector<CategoricalColumn>& categorical_columns() {
    static const std::vector<CategoricalColumn> cols = {
        {"operator_name", [](const TelemetryRecord& r) { return r.operator_name; }},
        {"network_mode", [](const TelemetryRecord& r) { return ingest::to_string(r.network_mode); }},
        {"node_hex", [](const TelemetryRecord& r) { return r.node_hex; }},
        {"lac_hex", [](const TelemetryRecord& r) { return r.lac_hex; }},
        {"cell_id", [](const TelemetryRecord& r) { return r.cell_id; }},
        {"cell_hex", [](const TelemetryRecord& r) { return r.cell_hex; }},
        {"cell_raw", [](const TelemetryRecord& r) { return r.cell_raw; }},
        {"state", [](const TelemetryRecord& r) { return ingest::to_string(r.state); }},
    };
    return cols;
}

const NumericColumn* find_numeric(const std::string& name) {
    for (const auto& c : numeric_columns())
        if (name == c.name) return &c;
    return nullptr;
}

const CategoricalColumn* find_categorical(const std::string& name) {
    for (const auto& c : categorical_columns())
        if (name == c.name) return &c;
    return nullptr;
}

std::vector<std::optional<double>> numeric_series(const SessionDataset& ds, const NumericColumn& col) {
    std::vector<std::optional<double>> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records) out.push_back(col.get(r));
    return out;
}

std::vector<std::string> categorical_series(const SessionDataset& ds, const CategoricalColumn& col) {
    std::vector<std::string> out;
    out.reserve(ds.records.size());
    for (const auto& r : ds.records) out.push_back(col.get(r));
    return out;
}

size_t train_row_count(const SessionDataset& ds, double fraction) {
    const size_t n = ds.records.size();
    return std::max<size_t>(1, static_cast<size_t>(std::floor(static_cast<double>(n) * fraction)));
}

}  // namespace

PreprocessPolicy PreprocessPolicy::case_study_default() {
    PreprocessPolicy p;
    auto numeric = [&](const char* name, Imputation imp) {
        p.columns[name] = {Encoding::None, imp, Normalization::MinMax};
    };
    numeric("longitude", Imputation::ForwardFill);
    numeric("latitude", Imputation::ForwardFill);
    numeric("speed", Imputation::ForwardFill);
    numeric("dl_bitrate", Imputation::Zero);
    numeric("ul_bitrate", Imputation::Zero);
    numeric("ping_avg", Imputation::ForwardFill);
    numeric("ping_min", Imputation::ForwardFill);
    numeric("ping_max", Imputation::ForwardFill);
    numeric("ping_std", Imputation::ForwardFill);
    numeric("ping_loss", Imputation::ForwardFill);
    numeric("cqi", Imputation::ForwardFill);
    numeric("snr", Imputation::ForwardFill);
    numeric("rssi", Imputation::ForwardFill);
    numeric("rsrp", Imputation::ForwardFill);
    numeric("rsrq", Imputation::ForwardFill);
    numeric("nrx_rsrp", Imputation::ForwardFill);
    numeric("nrx_rsrq", Imputation::ForwardFill);

    auto label = [&](const char* name) {
        p.columns[name] = {Encoding::Label, Imputation::Zero, Normalization::MinMax};
    };
    label("operator_name");
    label("node_hex");
    label("lac_hex");
    label("cell_id");
    label("cell_hex");
    label("cell_raw");

    p.columns["network_mode"] = {Encoding::OneHot, Imputation::Zero, Normalization::None};
    p.columns["state"] = {Encoding::OneHot, Imputation::Zero, Normalization::None};
    return p;
}

// ============================================================================
// Fitting
// ============================================================================

namespace {

std::vector<std::string> first_appearance_categories(const std::vector<std::string>& values, size_t limit) {
    std::vector<std::string> cats;
    const size_t n = std::min(limit, values.size());
    for (size_t i = 0; i < n; ++i) {
        if (std::find(cats.begin(), cats.end(), values[i]) == cats.end()) cats.push_back(values[i]);
    }
    return cats;
}

// plan columns are ordered canonically so reruns serialize identically
std::vector<std::string> ordered_policy_columns(const PreprocessPolicy& policy) {
    std::vector<std::string> names;
    for (const auto& c : ingest::canonical_columns()) {
        if (c == "timestamp") continue;
        if (policy.columns.count(c)) names.push_back(c);
    }
    for (const auto& [name, _] : policy.columns) {
        if (std::find(names.begin(), names.end(), name) == names.end())
            throw Error("UnknownColumn", "policy references unknown column '" + name + "'");
    }
    return names;
}

}  // namespace

PreprocessPlan fit_encoders(const ingest::SessionDataset& ds, const PreprocessPolicy& policy) {
    if (ds.records.empty()) throw Error("EmptyFile", "cannot fit preprocessing on an empty dataset");

    PreprocessPlan plan;
    plan.fitted_on = ingest::fingerprint(ds);
    plan.train_fraction = policy.train_fraction;
    plan.target_column = policy.target_column;

    const size_t n_train = train_row_count(ds, policy.train_fraction);

    std::vector<double> target_raw;
    {
        const NumericColumn* tcol = find_numeric(policy.target_column);
        if (tcol == nullptr)
            throw Error("UnknownColumn", "target column '" + policy.target_column + "' unknown");
        for (size_t i = 0; i < n_train; ++i)
            target_raw.push_back(tcol->get(ds.records[i]).value_or(0.0));
    }

    for (const auto& name : ordered_policy_columns(policy)) {
        const ColumnPolicy& cp = policy.columns.at(name);
        ColumnTransform tr;
        tr.column = name;
        tr.encoding = cp.encoding;
        tr.imputation = cp.imputation;

        if (const CategoricalColumn* cat = find_categorical(name)) {
            const std::vector<std::string> values = categorical_series(ds, *cat);
            tr.categories = first_appearance_categories(values, n_train);
            if (cp.encoding == Encoding::Target) {
                if (policy.target_column.empty())
                    throw Error("TargetEncodingWithoutTarget",
                                "column '" + name + "' requests target encoding");
                std::map<std::string, std::pair<double, size_t>> acc;
                for (size_t i = 0; i < n_train; ++i) {
                    auto& slot = acc[values[i]];
                    slot.first += target_raw[i];
                    slot.second += 1;
                }
                double total = 0;
                for (double v : target_raw) total += v;
                tr.target_global_mean = target_raw.empty() ? 0.0 : total / target_raw.size();
                for (const auto& [key, sum_count] : acc)
                    tr.target_means[key] = sum_count.first / static_cast<double>(sum_count.second);
            } else if (cp.encoding != Encoding::Label && cp.encoding != Encoding::OneHot) {
                throw Error("ConfigInvalid", "categorical column '" + name + "' needs an encoding");
            }
        } else if (find_numeric(name) != nullptr) {
            if (cp.encoding != Encoding::None)
                throw Error("ConfigInvalid", "numeric column '" + name + "' cannot be encoded");
        } else {
            throw Error("UnknownColumn", "no such telemetry column '" + name + "'");
        }
        plan.columns.push_back(std::move(tr));
    }
    return plan;
}

namespace {

// encoded-but-unnormalized values for one transform over the whole dataset
std::vector<std::vector<double>> encoded_columns(const ColumnTransform& tr, const SessionDataset& ds) {
    if (const CategoricalColumn* cat = find_categorical(tr.column)) {
        const std::vector<std::string> values = categorical_series(ds, *cat);
        switch (tr.encoding) {
            case Encoding::Label: {
                std::vector<double> codes(values.size());
                for (size_t i = 0; i < values.size(); ++i) {
                    auto it = std::find(tr.categories.begin(), tr.categories.end(), values[i]);
                    codes[i] = (it == tr.categories.end())
                                   ? static_cast<double>(tr.categories.size())  // unseen bucket
                                   : static_cast<double>(it - tr.categories.begin());
                }
                return {codes};
            }
            case Encoding::OneHot: {
                std::vector<std::vector<double>> cols(tr.categories.size(),
                                                      std::vector<double>(values.size(), 0.0));
                for (size_t i = 0; i < values.size(); ++i) {
                    auto it = std::find(tr.categories.begin(), tr.categories.end(), values[i]);
                    if (it != tr.categories.end()) cols[it - tr.categories.begin()][i] = 1.0;
                }
                return cols;
            }
            case Encoding::Target: {
                std::vector<double> out(values.size());
                for (size_t i = 0; i < values.size(); ++i) {
                    auto it = tr.target_means.find(values[i]);
                    out[i] = (it == tr.target_means.end()) ? tr.target_global_mean : it->second;
                }
                return {out};
            }
            default:
                throw Error("ConfigInvalid", "categorical column without encoding: " + tr.column);
        }
    }
    const NumericColumn* num = find_numeric(tr.column);
    if (num == nullptr) throw Error("UnknownColumn", tr.column);
    return {impute(numeric_series(ds, *num), tr.imputation, tr.impute_statistic)};
}

}  // namespace

PreprocessPlan fit_plan(const ingest::SessionDataset& ds, const PreprocessPolicy& policy) {
    PreprocessPlan plan = fit_encoders(ds, policy);
    const size_t n_train = train_row_count(ds, policy.train_fraction);

    // dataset restricted to training rows: all statistics come from here
    SessionDataset head = ds;
    head.records.assign(ds.records.begin(), ds.records.begin() + static_cast<long>(n_train));
    head.segment_starts.clear();
    for (size_t s : ds.segment_starts)
        if (s < n_train) head.segment_starts.push_back(s);
    if (head.segment_starts.empty()) head.segment_starts = {0};

    for (auto& tr : plan.columns) {
        if (find_numeric(tr.column) != nullptr &&
            (tr.imputation == Imputation::Mean || tr.imputation == Imputation::Median)) {
            const NumericColumn* num = find_numeric(tr.column);
            const auto series = numeric_series(head, *num);
            const std::vector<double> present = present_values(series, series.size());
            if (present.empty())
                throw Error("AllMissing", "column '" + tr.column + "' has no values to fit " +
                                              to_string(tr.imputation));
            if (tr.imputation == Imputation::Mean) {
                double s = 0;
                for (double v : present) s += v;
                tr.impute_statistic = s / static_cast<double>(present.size());
            } else {
                tr.impute_statistic = median_of(present);
            }
        }

        const Normalization kind = policy.columns.at(tr.column).normalization;
        const auto cols = encoded_columns(tr, head);
        if (tr.encoding == Encoding::OneHot) {
            for (const auto& col : cols)
                tr.onehot_normalizers.push_back(fit_normalizer(col, kind, policy.clip_minmax));
        } else {
            tr.normalizer = fit_normalizer(cols[0], kind, policy.clip_minmax);
        }

        if (tr.column == plan.target_column) plan.target = tr.normalizer;
    }

    const bool target_is_feature =
        std::any_of(plan.columns.begin(), plan.columns.end(),
                    [&](const ColumnTransform& tr) { return tr.column == plan.target_column; });
    if (!target_is_feature && !plan.target_column.empty()) {
        // target not among the feature columns: fit its scaling directly
        const NumericColumn* tcol = find_numeric(plan.target_column);
        std::vector<double> raw;
        for (const auto& r : head.records) raw.push_back(tcol->get(r).value_or(0.0));
        plan.target = fit_normalizer(raw, Normalization::MinMax, policy.clip_minmax);
    }

    // time features are normalized like every other model input
    if (plan.has_time_features) {
        std::vector<std::vector<double>> tcols(4, std::vector<double>(head.records.size()));
        for (size_t i = 0; i < head.records.size(); ++i) {
            const auto f = encode_timestamp(head.records[i].timestamp);
            for (size_t k = 0; k < 4; ++k) tcols[k][i] = f[k];
        }
        ColumnTransform time_tr;
        time_tr.column = "timestamp";
        time_tr.encoding = Encoding::None;
        for (size_t k = 0; k < 4; ++k)
            time_tr.onehot_normalizers.push_back(
                fit_normalizer(tcols[k], Normalization::MinMax, policy.clip_minmax));
        plan.columns.insert(plan.columns.begin(), std::move(time_tr));
    }
    return plan;
}

FeatureMatrix apply_plan(const PreprocessPlan& plan, const ingest::SessionDataset& ds) {
    const size_t n = ds.records.size();
    std::vector<std::vector<double>> cols;
    std::vector<std::string> names;

    for (const auto& tr : plan.columns) {
        if (tr.column == "timestamp") {
            static const char* suffix[4] = {"hour_sin", "hour_cos", "dow_sin", "dow_cos"};
            for (size_t k = 0; k < 4; ++k) {
                std::vector<double> col(n);
                for (size_t i = 0; i < n; ++i) col[i] = encode_timestamp(ds.records[i].timestamp)[k];
                for (double& v : col) v = tr.onehot_normalizers[k].apply(v);
                cols.push_back(std::move(col));
                names.push_back(std::string("time_") + suffix[k]);
            }
            continue;
        }
        auto encoded = encoded_columns(tr, ds);
        if (tr.encoding == Encoding::OneHot) {
            for (size_t k = 0; k < encoded.size(); ++k) {
                for (double& v : encoded[k]) v = tr.onehot_normalizers[k].apply(v);
                cols.push_back(std::move(encoded[k]));
                names.push_back(tr.column + "=" + tr.categories[k]);
            }
        } else {
            for (double& v : encoded[0]) v = tr.normalizer.apply(v);
            cols.push_back(std::move(encoded[0]));
            names.push_back(tr.column);
        }
    }

    FeatureMatrix fm;
    fm.names = names;
    fm.x = Mat(n, cols.size());
    for (size_t j = 0; j < cols.size(); ++j)
        for (size_t i = 0; i < n; ++i) fm.x.at(i, j) = cols[j][i];

    fm.target = plan.target;
    fm.y.resize(n);
    const NumericColumn* tcol = find_numeric(plan.target_column);
    if (tcol == nullptr) throw Error("UnknownColumn", plan.target_column);
    for (size_t i = 0; i < n; ++i)
        fm.y[i] = plan.target.apply(tcol->get(ds.records[i]).value_or(0.0));
    fm.segment_starts = ds.segment_starts;
    return fm;
}

// ============================================================================
// Serialization
// ============================================================================

namespace {

json normalizer_to_json(const Normalizer& n) {
    return json{{"kind", to_string(n.kind)},
                {"a", n.a},
                {"b", n.b},
                {"degenerate", n.degenerate},
                {"clip", n.clip}};
}

Normalizer normalizer_from_json(const json& j) {
    Normalizer n;
    n.kind = normalization_from_string(j.at("kind").get<std::string>());
    n.a = j.at("a").get<double>();
    n.b = j.at("b").get<double>();
    n.degenerate = j.at("degenerate").get<bool>();
    n.clip = j.at("clip").get<bool>();
    return n;
}

}  // namespace

std::string PreprocessPlan::to_json() const {
    json j;
    j["version"] = version;
    j["fitted_on"] = to_hex(fitted_on);
    j["train_fraction"] = train_fraction;
    j["target_column"] = target_column;
    j["target"] = normalizer_to_json(target);
    j["has_time_features"] = has_time_features;
    j["columns"] = json::array();
    for (const auto& tr : columns) {
        json c;
        c["column"] = tr.column;
        c["encoding"] = to_string(tr.encoding);
        c["categories"] = tr.categories;
        c["target_means"] = tr.target_means;
        c["target_global_mean"] = tr.target_global_mean;
        c["imputation"] = to_string(tr.imputation);
        if (tr.impute_statistic) c["impute_statistic"] = *tr.impute_statistic;
        c["normalizer"] = normalizer_to_json(tr.normalizer);
        c["onehot_normalizers"] = json::array();
        for (const auto& n : tr.onehot_normalizers) c["onehot_normalizers"].push_back(normalizer_to_json(n));
        j["columns"].push_back(std::move(c));
    }
    return j.dump(2);
}

PreprocessPlan PreprocessPlan::from_json(const std::string& text) {
    json j = json::parse(text);
    PreprocessPlan plan;
    plan.version = j.at("version").get<int>();
    plan.fitted_on = std::stoull(j.at("fitted_on").get<std::string>(), nullptr, 16);
    plan.train_fraction = j.at("train_fraction").get<double>();
    plan.target_column = j.at("target_column").get<std::string>();
    plan.target = normalizer_from_json(j.at("target"));
    plan.has_time_features = j.at("has_time_features").get<bool>();
    for (const auto& c : j.at("columns")) {
        ColumnTransform tr;
        tr.column = c.at("column").get<std::string>();
        tr.encoding = encoding_from_string(c.at("encoding").get<std::string>());
        tr.categories = c.at("categories").get<std::vector<std::string>>();
        tr.target_means = c.at("target_means").get<std::map<std::string, double>>();
        tr.target_global_mean = c.at("target_global_mean").get<double>();
        tr.imputation = imputation_from_string(c.at("imputation").get<std::string>());
        if (c.contains("impute_statistic")) tr.impute_statistic = c.at("impute_statistic").get<double>();
        tr.normalizer = normalizer_from_json(c.at("normalizer"));
        for (const auto& n : c.at("onehot_normalizers")) tr.onehot_normalizers.push_back(normalizer_from_json(n));
        plan.columns.push_back(std::move(tr));
    }
    return plan;
}

void PreprocessPlan::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << to_json() << "\n";
}

PreprocessPlan PreprocessPlan::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("MissingArtifact", "preprocess plan not found: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

}  // namespace flowcast::prep
