#include <doctest.h>

#include <cmath>

#include "flowcast/preprocess.hpp"
#include "flowcast/synthetic.hpp"

using namespace flowcast;
using namespace flowcast::prep;

TEST_CASE("encode_timestamp hour angle anchors") {
    // 1970-01-01 00:00 UTC: hour angle 0
    auto mid = encode_timestamp(0.0);
    CHECK(mid[0] == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(mid[1] == doctest::Approx(1.0).epsilon(1e-12));

    // 06:00: quarter cycle
    auto six = encode_timestamp(6 * 3600.0);
    CHECK(six[0] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(six[1] == doctest::Approx(0.0).epsilon(1e-12));

    // sin^2 + cos^2 == 1 for arbitrary times
    Rng rng(2);
    for (int i = 0; i < 100; ++i) {
        const auto f = encode_timestamp(rng.uniform(0, 4e9));
        CHECK(f[0] * f[0] + f[1] * f[1] == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(f[2] * f[2] + f[3] * f[3] == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("impute methods") {
    using OV = std::vector<std::optional<double>>;
    const auto none = std::nullopt;

    SUBCASE("forward fill carries the last value") {
        CHECK(impute(OV{1.0, none, 3.0}, Imputation::ForwardFill) ==
              std::vector<double>{1.0, 1.0, 3.0});
    }
    SUBCASE("leading gap under forward fill falls back to zero") {
        CHECK(impute(OV{none, 2.0, none}, Imputation::ForwardFill) ==
              std::vector<double>{0.0, 2.0, 2.0});
    }
    SUBCASE("median of {1,3} is 2") {
        CHECK(impute(OV{1.0, none, 3.0}, Imputation::Median) == std::vector<double>{1.0, 2.0, 3.0});
    }
    SUBCASE("mean imputation") {
        CHECK(impute(OV{2.0, none, 4.0}, Imputation::Mean) == std::vector<double>{2.0, 3.0, 4.0});
    }
    SUBCASE("backward fill mirrors forward fill") {
        CHECK(impute(OV{none, 2.0, none}, Imputation::BackwardFill) ==
              std::vector<double>{2.0, 2.0, 0.0});
    }
    SUBCASE("zero fill") {
        CHECK(impute(OV{none, 5.0}, Imputation::Zero) == std::vector<double>{0.0, 5.0});
    }
    SUBCASE("all-missing mean raises AllMissing") {
        try {
            impute(OV{none, none}, Imputation::Mean);
            FAIL("expected AllMissing");
        } catch (const Error& e) {
            CHECK(e.kind() == "AllMissing");
        }
    }
    SUBCASE("no missing values survive any method") {
        Rng rng(3);
        for (auto method : {Imputation::Zero, Imputation::Mean, Imputation::Median,
                            Imputation::ForwardFill, Imputation::BackwardFill}) {
            OV series;
            for (int i = 0; i < 50; ++i)
                series.push_back(rng.uniform() < 0.4 ? none
                                                     : std::optional<double>(rng.uniform(-5, 5)));
            series[7] = 1.0;  // at least one present value
            const auto out = impute(series, method);
            CHECK(out.size() == series.size());
            for (size_t i = 0; i < out.size(); ++i) {
                CHECK(std::isfinite(out[i]));
                if (series[i]) CHECK(out[i] == *series[i]);  // present values unchanged
            }
        }
    }
}

TEST_CASE("normalizers") {
    SUBCASE("min-max of [0,5,10] maps to [0,0.5,1]") {
        const Normalizer n = fit_normalizer({0, 5, 10}, Normalization::MinMax);
        CHECK(n.apply(0) == doctest::Approx(0.0).epsilon(1e-12));
        CHECK(n.apply(5) == doctest::Approx(0.5).epsilon(1e-12));
        CHECK(n.apply(10) == doctest::Approx(1.0).epsilon(1e-12));
    }
    SUBCASE("z-score of [1,2,3] with population sigma") {
        const Normalizer n = fit_normalizer({1, 2, 3}, Normalization::ZScore);
        const double sigma = std::sqrt(2.0 / 3.0);
        CHECK(n.apply(1) == doctest::Approx(-1.0 / sigma).epsilon(1e-9));
        CHECK(n.apply(2) == doctest::Approx(0.0).epsilon(1e-9));
        CHECK(n.apply(3) == doctest::Approx(1.0 / sigma).epsilon(1e-9));
        CHECK(n.apply(1) == doctest::Approx(-1.224744871391589).epsilon(1e-9));
    }
    SUBCASE("z-score output has mean 0 and population std 1 on fitted data") {
        Rng rng(4);
        std::vector<double> col;
        for (int i = 0; i < 400; ++i) col.push_back(rng.uniform(-3, 9));
        const Normalizer n = fit_normalizer(col, Normalization::ZScore);
        double mean = 0, var = 0;
        for (double v : col) mean += n.apply(v);
        mean /= col.size();
        for (double v : col) var += (n.apply(v) - mean) * (n.apply(v) - mean);
        var /= col.size();
        CHECK(std::abs(mean) < 1e-9);
        CHECK(std::abs(var - 1.0) < 1e-9);
    }
    SUBCASE("constant column becomes a flagged zero map") {
        const Normalizer n = fit_normalizer({7, 7, 7}, Normalization::MinMax);
        CHECK(n.degenerate);
        CHECK(n.apply(7) == 0.0);
        CHECK(n.invert(0.0) == 7.0);
    }
    SUBCASE("invert(apply(x)) == x within 1e-9 on fitted data") {
        Rng rng(5);
        std::vector<double> col;
        for (int i = 0; i < 100; ++i) col.push_back(rng.uniform(-20, 55));
        for (auto kind : {Normalization::MinMax, Normalization::ZScore}) {
            const Normalizer n = fit_normalizer(col, kind);
            for (double v : col) CHECK(n.invert(n.apply(v)) == doctest::Approx(v).epsilon(1e-9));
        }
    }
    SUBCASE("min-max clips out-of-range inference values by default") {
        const Normalizer n = fit_normalizer({0, 10}, Normalization::MinMax);
        CHECK(n.apply(-5) == 0.0);
        CHECK(n.apply(15) == 1.0);
    }
}

namespace {

ingest::SessionDataset test_dataset(size_t seconds = 600, uint64_t seed = 21) {
    synth::GeneratorConfig gc;
    gc.seconds = seconds;
    gc.seed = seed;
    gc.idle_fraction = 0.05;
    return synth::generate(gc);
}

}  // namespace

TEST_CASE("fit_encoders label and one-hot semantics") {
    const auto ds = test_dataset();
    PreprocessPolicy policy = PreprocessPolicy::case_study_default();
    const PreprocessPlan plan = fit_encoders(ds, policy);

    const ColumnTransform* state_tr = nullptr;
    const ColumnTransform* cell_tr = nullptr;
    for (const auto& tr : plan.columns) {
        if (tr.column == "state") state_tr = &tr;
        if (tr.column == "cell_id") cell_tr = &tr;
    }
    REQUIRE(state_tr != nullptr);
    REQUIRE(cell_tr != nullptr);
    CHECK(state_tr->encoding == Encoding::OneHot);
    CHECK(cell_tr->encoding == Encoding::Label);
    CHECK(!cell_tr->categories.empty());

    // label codes follow first appearance in the fit range
    std::string first_cell = ds.records.front().cell_id;
    CHECK(cell_tr->categories.front() == first_cell);
}

TEST_CASE("one-hot rows sum to 1 on fitted data") {
    const auto ds = test_dataset(400, 3);
    PreprocessPolicy policy = PreprocessPolicy::case_study_default();
    policy.train_fraction = 1.0;
    const PreprocessPlan plan = fit_plan(ds, policy);
    const FeatureMatrix fm = apply_plan(plan, ds);

    std::vector<size_t> state_cols;
    for (size_t j = 0; j < fm.names.size(); ++j)
        if (fm.names[j].rfind("state=", 0) == 0) state_cols.push_back(j);
    REQUIRE(!state_cols.empty());
    for (size_t i = 0; i < fm.x.rows; ++i) {
        double s = 0;
        for (size_t j : state_cols) s += fm.x.at(i, j);
        CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("target encoding stores per-category means") {
    // categories A -> targets {2,4}, B -> {6}: means {A:3, B:6}
    ingest::SessionDataset ds;
    auto add = [&](double t, const std::string& op, double dl) {
        ingest::TelemetryRecord r;
        r.timestamp = t;
        r.operator_name = op;
        r.network_mode = ingest::NetworkMode::FiveG;
        r.state = ingest::DownloadState::Downloading;
        r.dl_bitrate = dl;
        ds.records.push_back(r);
    };
    add(0, "A", 2);
    add(1, "A", 4);
    add(2, "B", 6);
    ds.network_mode = ingest::NetworkMode::FiveG;

    PreprocessPolicy policy;
    policy.columns["operator_name"] = {Encoding::Target, Imputation::Zero, Normalization::None};
    policy.columns["dl_bitrate"] = {Encoding::None, Imputation::Zero, Normalization::None};
    policy.train_fraction = 1.0;
    const PreprocessPlan plan = fit_plan(ds, policy);

    const ColumnTransform* tr = nullptr;
    for (const auto& c : plan.columns)
        if (c.column == "operator_name") tr = &c;
    REQUIRE(tr != nullptr);
    CHECK(tr->target_means.at("A") == doctest::Approx(3.0));
    CHECK(tr->target_means.at("B") == doctest::Approx(6.0));
}

TEST_CASE("plan application is pure and serialization round trips") {
    const auto ds = test_dataset(500, 8);
    PreprocessPolicy policy = PreprocessPolicy::case_study_default();
    const PreprocessPlan plan = fit_plan(ds, policy);

    const FeatureMatrix a = apply_plan(plan, ds);
    const FeatureMatrix b = apply_plan(plan, ds);
    CHECK(a.x.v == b.x.v);  // applying twice = applying once; no refit happens
    CHECK(a.y == b.y);

    const PreprocessPlan back = PreprocessPlan::from_json(plan.to_json());
    CHECK(back.to_json() == plan.to_json());
    const FeatureMatrix c = apply_plan(back, ds);
    CHECK(c.x.v == a.x.v);
}

TEST_CASE("no test leakage: statistics come from the training fraction only") {
    auto ds = test_dataset(600, 12);
    PreprocessPolicy policy = PreprocessPolicy::case_study_default();
    policy.train_fraction = 0.7;
    const PreprocessPlan before = fit_plan(ds, policy);

    // perturb rows strictly after the training fraction
    const size_t cut = static_cast<size_t>(std::floor(ds.records.size() * 0.7));
    for (size_t i = cut; i < ds.records.size(); ++i) {
        ds.records[i].dl_bitrate *= 10.0;
        ds.records[i].snr = 99.0;
    }
    const PreprocessPlan after = fit_plan(ds, policy);

    // fingerprints differ (different data) but every fitted parameter matches
    auto strip_fingerprint = [](std::string j) {
        const auto pos = j.find("fitted_on");
        j.erase(pos, 40);
        return j;
    };
    CHECK(strip_fingerprint(before.to_json()) == strip_fingerprint(after.to_json()));
}
