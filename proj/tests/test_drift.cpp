#include <doctest.h>

#include <cmath>

#include "flowcast/drift.hpp"
#include "flowcast/synthetic.hpp"

using namespace flowcast;
using namespace flowcast::drift;

TEST_CASE("threshold identity holds after every transition") {
    DriftMonitorState s = DriftMonitorState::init(0.0213);
    CHECK(std::abs(s.threshold - 0.02556) < 1e-12);  // paper's first pair
    s.set_baseline(0.0236);
    CHECK(std::abs(s.threshold - 0.02832) < 1e-12);  // updated pair
    s.set_baseline(0.5);
    CHECK(std::abs(s.threshold - (1.0 + s.rel_margin) * 0.5) < 1e-12);

    DriftMonitorState flat = DriftMonitorState::init(0.4, 0.0);
    CHECK(flat.threshold == 0.4);  // zero margin degenerates to the baseline
}

TEST_CASE("windowed_mae") {
    SUBCASE("perfect window gives 0") {
        CHECK(windowed_mae({{0.5, 0.5}, {0.2, 0.2}}) == 0.0);
    }
    SUBCASE("hand value 0.1") {
        CHECK(windowed_mae({{0.5, 0.4}, {0.2, 0.3}}) == doctest::Approx(0.1).epsilon(1e-12));
    }
    SUBCASE("single pair is plain absolute error") {
        CHECK(windowed_mae({{0.9, 0.5}}) == doctest::Approx(0.4).epsilon(1e-12));
    }
    SUBCASE("empty window raises") {
        try {
            windowed_mae({});
            FAIL("expected EmptyWindow");
        } catch (const Error& e) {
            CHECK(e.kind() == "EmptyWindow");
        }
    }
}

TEST_CASE("check compares against the threshold and appends history") {
    DriftMonitorState s = DriftMonitorState::init(0.0213);
    // windowed MAE 0.0240 < threshold 0.02556: no drift
    CHECK(!check(s, 600.0, {{0.024, 0.0}, {0.024, 0.0}}));
    CHECK(check(s, 1200.0, {{0.030, 0.0}}));
    REQUIRE(s.history.size() == 2);
    CHECK(s.history[0].time_s == 600.0);
    CHECK(!s.history[0].drift);
    CHECK(s.history[1].drift);
}

TEST_CASE("ks_statistic") {
    SUBCASE("identical samples give 0") {
        CHECK(ks_statistic({1, 2, 3, 4}, {1, 2, 3, 4}) == 0.0);
    }
    SUBCASE("disjoint supports give 1") {
        CHECK(ks_statistic({1, 2, 3}, {10, 11}) == 1.0);
    }
    SUBCASE("{1,2,3} vs {1,2,4} gives 1/3") {
        CHECK(ks_statistic({1, 2, 3}, {1, 2, 4}) == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    SUBCASE("symmetry") {
        Rng rng(3);
        std::vector<double> a, b;
        for (int i = 0; i < 40; ++i) a.push_back(rng.normal());
        for (int i = 0; i < 25; ++i) b.push_back(rng.normal() + 0.5);
        CHECK(ks_statistic(a, b) == doctest::Approx(ks_statistic(b, a)).epsilon(1e-15));
    }
    SUBCASE("invariance under a strictly monotone transform of both samples") {
        Rng rng(4);
        std::vector<double> a, b, ta, tb;
        for (int i = 0; i < 30; ++i) a.push_back(rng.uniform(0.1, 3.0));
        for (int i = 0; i < 50; ++i) b.push_back(rng.uniform(0.5, 4.0));
        auto mono = [](double x) { return std::exp(2.0 * x) + x; };
        for (double v : a) ta.push_back(mono(v));
        for (double v : b) tb.push_back(mono(v));
        CHECK(ks_statistic(a, b) == doctest::Approx(ks_statistic(ta, tb)).epsilon(1e-12));
    }
    SUBCASE("empty sample raises") {
        try {
            ks_statistic({}, {1.0});
            FAIL("expected EmptySample");
        } catch (const Error& e) {
            CHECK(e.kind() == "EmptySample");
        }
    }
}

TEST_CASE("inject_drift") {
    synth::GeneratorConfig gc;
    gc.seconds = 1800;
    gc.seed = 6;
    const ingest::SessionDataset ds = synth::generate(gc);

    SUBCASE("scale 1.0 is the identity") {
        const auto out = inject_drift(ds, {100, 600}, {DriftTransform::Kind::Scale, 1.0});
        CHECK(out.records == ds.records);
    }
    SUBCASE("scale 0.5 halves the segment mean and leaves the complement untouched") {
        InjectionManifest man;
        const auto out = inject_drift(ds, {600, 600}, {DriftTransform::Kind::Scale, 0.5}, &man);
        REQUIRE(out.records.size() == ds.records.size());

        double seg_before = 0, seg_after = 0;
        size_t seg_n = 0;
        const double t0 = ds.records.front().timestamp;
        for (size_t i = 0; i < ds.records.size(); ++i) {
            const double off = ds.records[i].timestamp - t0;
            if (off >= 600 && off < 1200) {
                seg_before += ds.records[i].dl_bitrate;
                seg_after += out.records[i].dl_bitrate;
                ++seg_n;
            } else {
                // byte-identical outside the segment
                CHECK(out.records[i] == ds.records[i]);
            }
        }
        CHECK(seg_n == man.affected_rows);
        CHECK(seg_after == doctest::Approx(0.5 * seg_before).epsilon(1e-12));
    }
    SUBCASE("only the target column changes inside the segment") {
        const auto out = inject_drift(ds, {0, 300}, {DriftTransform::Kind::Scale, 0.25});
        for (size_t i = 0; i < 300; ++i) {
            ingest::TelemetryRecord masked = out.records[i];
            masked.dl_bitrate = ds.records[i].dl_bitrate;
            CHECK(masked == ds.records[i]);
        }
    }
    SUBCASE("KS statistic between pre/post segment targets rises for scale != 1") {
        const auto out = inject_drift(ds, {600, 600}, {DriftTransform::Kind::Scale, 0.5});
        std::vector<double> before, after;
        const double t0 = ds.records.front().timestamp;
        for (size_t i = 0; i < ds.records.size(); ++i) {
            const double off = ds.records[i].timestamp - t0;
            if (off >= 600 && off < 1200) {
                before.push_back(ds.records[i].dl_bitrate);
                after.push_back(out.records[i].dl_bitrate);
            }
        }
        const double d_same = ks_statistic(before, before);
        const double d_shift = ks_statistic(before, after);
        CHECK(d_same == 0.0);
        CHECK(d_shift > 0.0);
    }
    SUBCASE("segment outside the stream raises") {
        try {
            inject_drift(ds, {1e9, 10}, {DriftTransform::Kind::Scale, 0.5});
            FAIL("expected SegmentOutOfBounds");
        } catch (const Error& e) {
            CHECK(e.kind() == "SegmentOutOfBounds");
        }
    }
}

namespace {

// A model trained on the first ~75 minutes of a synthetic trace; monitor tests
// replay the held-out 41-minute continuation so checks land at 600..2400 s.
// The baseline is the model's measured error on that clean continuation,
// mirroring how a deployed monitor is calibrated before going live. Look-back
// and horizon are both 5 minutes, the drift-monitoring geometry of the case
// study.
struct MonitorFixture {
    nn::ModelSpec spec;
    nn::NetworkWeights weights;
    prep::PreprocessPlan plan;
    double baseline = 0.0;
    double base_lr = 3e-3;
    ingest::SessionDataset holdout_raw;  // last 2460 s, 1 Hz

    static const MonitorFixture& instance() {
        static MonitorFixture fx;
        return fx;
    }

    MonitorFixture() {
        synth::GeneratorConfig gen;
        gen.seconds = 7000;
        gen.seed = 31;
        gen.slow_std = 0.12;  // keep the level regime stationary across the replay
        gen.fast_std = 0.08;  // calmer stream so the clean error band is tight
        gen.noise_kbps = 1000.0;
        gen.season1_amp = 0.35;
        const ingest::SessionDataset full = synth::generate(gen);

        ingest::SessionDataset train_raw = full;
        train_raw.records.assign(full.records.begin(), full.records.begin() + 4540);
        holdout_raw = full;
        holdout_raw.records.assign(full.records.begin() + 4540, full.records.end());
        holdout_raw.segment_starts = {0};

        const ingest::SessionDataset train_ds = ingest::resample_uniform(train_raw, 10.0, 30.0);
        prep::PreprocessPolicy policy = prep::PreprocessPolicy::case_study_default();
        policy.train_fraction = 1.0;
        plan = prep::fit_plan(train_ds, policy);
        const prep::FeatureMatrix fm = prep::apply_plan(plan, train_ds);

        spec.kind = nn::ModelKind::Seq2Seq;
        spec.input_dim = fm.x.cols;
        spec.encoder_units = {16};
        spec.decoder_units = {16};
        spec.look_back = 30;  // 5 min at the 10 s period
        spec.horizon = 30;

        nn::WindowArray w;
        w.look_back = spec.look_back;
        w.horizon = spec.horizon;
        w.features = fm.x.cols;
        const size_t count = fm.x.rows - spec.look_back - spec.horizon + 1;
        w.inputs = Mat(count, spec.look_back * fm.x.cols);
        w.targets = Mat(count, spec.horizon);
        w.y_last.resize(count);
        for (size_t s = 0; s < count; ++s) {
            std::memcpy(w.inputs.row(s), fm.x.row(s), spec.look_back * fm.x.cols * sizeof(double));
            for (size_t k = 0; k < spec.horizon; ++k)
                w.targets.at(s, k) = fm.y[s + spec.look_back + k];
            w.y_last[s] = fm.y[s + spec.look_back - 1];
        }
        std::vector<uint32_t> train_idx, val_idx;
        for (uint32_t i = 0; i < count; ++i) (i < count * 4 / 5 ? train_idx : val_idx).push_back(i);

        nn::TrainConfig tc;
        tc.learning_rate = base_lr;
        tc.max_epochs = 25;
        tc.patience = 6;
        const nn::TrainResult r = nn::train(spec, w, train_idx, val_idx, tc, 17);
        weights = r.weights;

        // calibrate: mean windowed MAE over a clean replay of the continuation
        MonitorConfig calib;
        calib.adapt_on_drift = false;
        calib.report_ks = false;
        nn::NetworkWeights frozen = weights;
        const MonitorReport rep =
            drift::run_monitor(spec, frozen, base_lr, stream(false, 1.0, 0, 0), 10.0, 1e9, calib);
        double sum = 0;
        for (const auto& c : rep.checks) sum += c.windowed_mae;
        baseline = sum / static_cast<double>(rep.checks.size());
    }

    prep::FeatureMatrix stream(bool inject, double scale, double start_s, double len_s) const {
        ingest::SessionDataset raw = holdout_raw;
        if (inject) raw = inject_drift(raw, {start_s, len_s}, {DriftTransform::Kind::Scale, scale});
        const ingest::SessionDataset ds = ingest::resample_uniform(raw, 10.0, 30.0);
        return prep::apply_plan(plan, ds);
    }
};

}  // namespace

TEST_CASE("run_monitor clean replay raises no flags") {
    const MonitorFixture& fx = MonitorFixture::instance();
    MonitorConfig mc;
    mc.check_period_s = 600;
    mc.window_size_s = 600;

    nn::NetworkWeights w = fx.weights;
    const prep::FeatureMatrix stream = fx.stream(false, 1.0, 0, 0);
    const MonitorReport rep = drift::run_monitor(fx.spec, w, fx.base_lr, stream, 10.0,
                                                 fx.baseline, mc);
    CHECK(rep.checks.size() == 4);  // 2450 s span: checks at 600..2400
    CHECK(rep.detection_times.empty());
    for (const auto& c : rep.checks) {
        CHECK(!c.drift);
        CHECK(std::abs(c.threshold - 1.2 * fx.baseline) < 1e-12);
    }
}

TEST_CASE("run_monitor detects injected drift at the first boundary after onset") {
    const MonitorFixture& fx = MonitorFixture::instance();
    MonitorConfig mc;
    mc.check_period_s = 600;
    mc.window_size_s = 600;
    mc.seed = 5;

    // persistent drift from t = 840 s (inside the second window)
    nn::NetworkWeights w = fx.weights;
    const prep::FeatureMatrix stream = fx.stream(true, 0.3, 840, 2460 - 840);
    const MonitorReport rep = drift::run_monitor(fx.spec, w, fx.base_lr, stream, 10.0,
                                                 fx.baseline, mc);

    REQUIRE(rep.checks.size() == 4);
    CHECK(!rep.checks[0].drift);  // check at 600 s precedes the onset
    CHECK(rep.checks[1].drift);   // first boundary after onset: 1200 s
    CHECK(rep.checks[1].adapted);
    REQUIRE(!rep.detection_times.empty());
    CHECK(rep.detection_times.front() == 1200.0);
    // detection latency bound: ceil(onset / period) * period
    CHECK(rep.detection_times.front() == std::ceil(840.0 / 600.0) * 600.0);

    // adaptation re-based the threshold, and the adapted model stays clean
    CHECK(rep.baselines.back() != doctest::Approx(fx.baseline));
    CHECK(std::abs(rep.checks.back().threshold - 1.2 * rep.baselines[1]) < 1e-12);
    CHECK(!rep.checks[2].drift);
    CHECK(!rep.checks[3].drift);
}

TEST_CASE("adaptation lowers the windowed error on the drifted stream") {
    const MonitorFixture& fx = MonitorFixture::instance();
    MonitorConfig with_adapt, without_adapt;
    with_adapt.seed = without_adapt.seed = 9;
    without_adapt.adapt_on_drift = false;

    const prep::FeatureMatrix stream = fx.stream(true, 0.3, 840, 2460 - 840);

    nn::NetworkWeights w1 = fx.weights;
    const MonitorReport adapted = drift::run_monitor(fx.spec, w1, fx.base_lr, stream, 10.0,
                                                     fx.baseline, with_adapt);
    nn::NetworkWeights w2 = fx.weights;
    const MonitorReport frozen = drift::run_monitor(fx.spec, w2, fx.base_lr, stream, 10.0,
                                                    fx.baseline, without_adapt);

    REQUIRE(adapted.checks.size() == frozen.checks.size());
    // after the adaptation at 1200 s the adapted model's windowed MAE drops
    CHECK(adapted.checks[2].windowed_mae < frozen.checks[2].windowed_mae);
}
