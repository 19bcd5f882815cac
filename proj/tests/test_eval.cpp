#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>

#include "flowcast/eval.hpp"

using namespace flowcast;
using namespace flowcast::eval;

namespace {

Mat column_matrix(const std::vector<double>& series) {
    Mat m(series.size(), 1);
    for (size_t i = 0; i < series.size(); ++i) m.at(i, 0) = series[i];
    return m;
}

std::vector<double> ramp(size_t n) {
    std::vector<double> v(n);
    for (size_t i = 0; i < n; ++i) v[i] = static_cast<double>(i);
    return v;
}

}  // namespace

TEST_CASE("make_windows") {
    SUBCASE("N=10, L=3, H=2 gives 6 windows with the documented first window") {
        const auto series = ramp(10);
        const WindowedSet ws = make_windows(column_matrix(series), series, {0}, 3, 2, {0.7, 0.15, 0.15});
        CHECK(ws.windows.count() == 6);  // N - L - H + 1
        // first window x = values[0..3), y = values[3..5)
        CHECK(ws.windows.inputs.at(0, 0) == 0.0);
        CHECK(ws.windows.inputs.at(0, 2) == 2.0);
        CHECK(ws.windows.targets.at(0, 0) == 3.0);
        CHECK(ws.windows.targets.at(0, 1) == 4.0);
        CHECK(ws.windows.y_last[0] == 2.0);
    }
    SUBCASE("N = L + H gives exactly one window") {
        const auto series = ramp(5);
        const WindowedSet ws = make_windows(column_matrix(series), series, {0}, 3, 2, {1.0, 0.0, 0.0});
        CHECK(ws.windows.count() == 1);
    }
    SUBCASE("N < L + H raises SeriesTooShort") {
        const auto series = ramp(4);
        try {
            make_windows(column_matrix(series), series, {0}, 3, 2, {0.7, 0.15, 0.15});
            FAIL("expected SeriesTooShort");
        } catch (const Error& e) {
            CHECK(e.kind() == "SeriesTooShort");
        }
    }
    SUBCASE("window-count formula across a property sweep") {
        Rng rng(3);
        for (int trial = 0; trial < 40; ++trial) {
            const size_t L = 1 + rng.uniform_index(6);
            const size_t H = 1 + rng.uniform_index(4);
            const size_t n = L + H + rng.uniform_index(40);
            const auto series = ramp(n);
            const WindowedSet ws =
                make_windows(column_matrix(series), series, {0}, L, H, {0.7, 0.15, 0.15});
            CHECK(ws.windows.count() == n - L - H + 1);
        }
    }
    SUBCASE("windows never cross a segment boundary") {
        const auto series = ramp(20);
        const WindowedSet ws =
            make_windows(column_matrix(series), series, {0, 10}, 3, 2, {1.0, 0.0, 0.0});
        CHECK(ws.windows.count() == 2 * (10 - 3 - 2 + 1));
        for (size_t i = 0; i < ws.windows.count(); ++i) {
            const double first = ws.windows.inputs.at(i, 0);
            const double last_target = ws.windows.targets.at(i, 1);
            // a window starting before index 10 must end before index 10
            if (first < 10) CHECK(last_target < 10);
        }
    }
    SUBCASE("chronological purged split: train windows end before later splits start") {
        const auto series = ramp(200);
        const WindowedSet ws = make_windows(column_matrix(series), series, {0}, 5, 3, {0.7, 0.15, 0.15});
        REQUIRE(!ws.train_idx.empty());
        REQUIRE(!ws.val_idx.empty());
        REQUIRE(!ws.test_idx.empty());

        auto window_start = [&](uint32_t w) { return ws.windows.inputs.at(w, 0); };
        auto window_end = [&](uint32_t w) { return ws.windows.targets.at(w, 2); };
        double max_train_end = -1, min_val_start = 1e18, max_val_end = -1, min_test_start = 1e18;
        for (uint32_t w : ws.train_idx) max_train_end = std::max(max_train_end, window_end(w));
        for (uint32_t w : ws.val_idx) {
            min_val_start = std::min(min_val_start, window_start(w));
            max_val_end = std::max(max_val_end, window_end(w));
        }
        for (uint32_t w : ws.test_idx) min_test_start = std::min(min_test_start, window_start(w));
        CHECK(max_train_end < min_val_start);
        CHECK(max_val_end < min_test_start);
    }
}

TEST_CASE("mape") {
    SUBCASE("pred == actual gives 0%") {
        const MapeResult r = mape({100, 200}, {100, 200}, 1.0);
        CHECK(r.percent == 0.0);
        CHECK(r.excluded == 0);
    }
    SUBCASE("hand arithmetic: mean of per-point relative errors") {
        // (|110-100|/100 + |180-200|/200) / 2 * 100 = 10%
        const MapeResult r = mape({110, 180}, {100, 200}, 1.0);
        CHECK(r.percent == doctest::Approx(10.0).epsilon(1e-12));
        // (|110-100|/100 + |190-200|/200) / 2 * 100 = 7.5%
        const MapeResult r2 = mape({110, 190}, {100, 200}, 1.0);
        CHECK(r2.percent == doctest::Approx(7.5).epsilon(1e-12));
    }
    SUBCASE("zero actual excluded and reported") {
        const MapeResult r = mape({5, 100}, {0, 100}, 1.0);
        CHECK(r.percent == 0.0);
        CHECK(r.excluded == 1);
    }
    SUBCASE("all excluded raises") {
        try {
            mape({5, 6}, {0.0, 0.5}, 1.0);
            FAIL("expected AllExcluded");
        } catch (const Error& e) {
            CHECK(e.kind() == "AllExcluded");
        }
    }
}

TEST_CASE("normalized and denormalized MAE are linked by the min-max span") {
    prep::Normalizer scale;
    scale.kind = prep::Normalization::MinMax;
    scale.a = 1000.0;
    scale.b = 51000.0;  // span 50000

    Rng rng(6);
    std::vector<double> pn, an, pk, ak;
    for (int i = 0; i < 300; ++i) {
        const double p = rng.uniform(0, 1);
        const double a = rng.uniform(0, 1);
        pn.push_back(p);
        an.push_back(a);
        pk.push_back(scale.invert(p));
        ak.push_back(scale.invert(a));
    }
    CHECK(mae(pk, ak) == doctest::Approx(mae(pn, an) * scale.scale()).epsilon(1e-9));
}

TEST_CASE("metrics report io round trip and seed means") {
    MetricsReport rep;
    for (uint64_t s : {1, 2, 3}) {
        MetricsRow r;
        r.dataset = "d";
        r.model = "m";
        r.look_back = 12;
        r.horizon = 6;
        r.mae_norm = 0.1 * static_cast<double>(s);
        r.mae_kbps = 100.0 * static_cast<double>(s);
        r.mape_pct = static_cast<double>(s);
        r.seed = std::to_string(s);
        rep.rows.push_back(r);
    }
    rep.save_csv("/tmp/flowcast_test_metrics.csv");
    const MetricsReport back = MetricsReport::load_csv("/tmp/flowcast_test_metrics.csv");
    REQUIRE(back.rows.size() == rep.rows.size());
    CHECK(back.rows[1].mae_norm == rep.rows[1].mae_norm);
    CHECK(back.rows[2].seed == "3");
}

TEST_CASE("compare on a tiny task: baselines train and rank sanely") {
    // deliberately small so the unit suite stays fast; the full-ordering
    // check with the searched model lives in the acceptance suite
    Rng rng(20);
    const size_t n = 220;
    Mat features(n, 2);
    std::vector<double> target(n);
    double level = 0.5;
    for (size_t t = 0; t < n; ++t) {
        level = 0.97 * level + 0.015 * rng.normal();
        target[t] = std::clamp(0.5 + level + 0.12 * std::sin(0.3 * static_cast<double>(t)), 0.0, 1.0);
        features.at(t, 0) = target[t];
        features.at(t, 1) = std::clamp(level + 0.05 * rng.normal(), -1.0, 1.0);
    }
    const WindowedSet ws = make_windows(features, target, {0}, 8, 4, {0.7, 0.15, 0.15});

    prep::Normalizer scale;
    scale.kind = prep::Normalization::MinMax;
    scale.a = 0.0;
    scale.b = 100000.0;

    const nn::ModelSpec lstm = baseline_lstm_spec(2, 8, 4, 16);
    const nn::ModelSpec s2s = baseline_seq2seq_spec(2, 8, 4, 16);
    CHECK(lstm.kind == nn::ModelKind::Direct);
    CHECK(s2s.kind == nn::ModelKind::Seq2Seq);

    const auto train_and_score = [&](const nn::ModelSpec& spec, const char* tag) {
        const nn::TrainResult r =
            search::retrain_final(spec, 3e-3, ws.windows, ws.split_indices(Split::Train),
                                  ws.split_indices(Split::Val), 10, 4, 32, 1.0, 7);
        return score_model("tiny", tag, spec, r.weights, ws, scale, 1.0, 7);
    };
    const MetricsRow a = train_and_score(lstm, "baseline_lstm");
    const MetricsRow b = train_and_score(s2s, "baseline_seq2seq");
    CHECK(a.mae_norm > 0.0);
    CHECK(b.mae_norm > 0.0);
    CHECK(std::isfinite(a.mape_pct));
    CHECK(std::isfinite(b.mape_pct));
}

TEST_CASE("plot data emission orders by swept value") {
    MetricsReport rep;
    for (size_t lb : {30, 12, 18}) {
        MetricsRow r;
        r.dataset = "d";
        r.model = "m";
        r.look_back = lb;
        r.horizon = 30;
        r.mae_norm = 1.0 / static_cast<double>(lb);
        r.seed = "mean";
        rep.rows.push_back(r);
    }
    write_plot_data(rep, true, "/tmp/flowcast_test_plot.dat");
    std::ifstream in("/tmp/flowcast_test_plot.dat");
    std::string line;
    std::getline(in, line);  // comment
    std::vector<double> xs;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        xs.push_back(std::stod(line.substr(0, line.find(' '))));
    }
    CHECK(xs == std::vector<double>({12, 18, 30}));
}
