#include <doctest.h>

#include <cmath>

#include "flowcast/neural.hpp"

using namespace flowcast;
using namespace flowcast::nn;

namespace {

ModelSpec tiny_seq2seq(size_t features = 2, size_t look_back = 4, size_t horizon = 3,
                       size_t units = 5) {
    ModelSpec s;
    s.kind = ModelKind::Seq2Seq;
    s.input_dim = features;
    s.encoder_units = {units};
    s.decoder_units = {units};
    s.look_back = look_back;
    s.horizon = horizon;
    return s;
}

// synthetic supervised windows over a smooth series
WindowArray linear_windows(size_t n, size_t look_back, size_t horizon, uint64_t seed) {
    Rng rng(seed);
    std::vector<double> series(n);
    for (size_t t = 0; t < n; ++t)
        series[t] = static_cast<double>(t) / static_cast<double>(n) +
                    0.02 * std::sin(0.3 * static_cast<double>(t)) + 0.005 * rng.normal();

    WindowArray w;
    w.look_back = look_back;
    w.horizon = horizon;
    w.features = 1;
    const size_t count = n - look_back - horizon + 1;
    w.inputs = Mat(count, look_back);
    w.targets = Mat(count, horizon);
    w.y_last.resize(count);
    for (size_t s = 0; s < count; ++s) {
        for (size_t t = 0; t < look_back; ++t) w.inputs.at(s, t) = series[s + t];
        for (size_t k = 0; k < horizon; ++k) w.targets.at(s, k) = series[s + look_back + k];
        w.y_last[s] = series[s + look_back - 1];
    }
    return w;
}

}  // namespace

TEST_CASE("spec validation") {
    ModelSpec s = tiny_seq2seq();
    CHECK_NOTHROW(s.validate());

    SUBCASE("zero horizon raises HorizonZero") {
        s.horizon = 0;
        try {
            s.validate();
            FAIL("expected HorizonZero");
        } catch (const Error& e) {
            CHECK(e.kind() == "HorizonZero");
        }
    }
    SUBCASE("decoder state width must match the encoder layer feeding it") {
        s.decoder_units = {7};
        CHECK_THROWS_AS(s.validate(), Error);
    }
    SUBCASE("dropout bounds") {
        s.dropout_rate = 0.95;
        CHECK_THROWS_AS(s.validate(), Error);
    }
}

TEST_CASE("all-zero weights and inputs give all-zero LSTM states") {
    // f=i=o=sigmoid(0)=0.5, g=tanh(0)=0 means c=0 and h=0 at every step
    LstmLayer layer;
    layer.wx = Mat(3, 4 * 4);
    layer.wh = Mat(4, 4 * 4);
    layer.b = Mat(1, 4 * 4);
    Mat x(6 * 2, 3);  // T=6, B=2
    LstmSeqCache cache;
    lstm_forward(layer, x, 2, 6, nullptr, nullptr, cache);
    for (double v : cache.h.v) CHECK(v == 0.0);
    for (double v : cache.c.v) CHECK(v == 0.0);
}

TEST_CASE("single-unit single-step LSTM matches hand arithmetic") {
    // hand-set scalar weights; one input, one unit, one step
    LstmLayer layer;
    layer.wx = Mat(1, 4);
    layer.wh = Mat(1, 4);
    layer.b = Mat(1, 4);
    const double wx_i = 0.3, wx_f = -0.2, wx_g = 0.5, wx_o = 0.7;
    const double b_i = 0.1, b_f = 0.2, b_g = -0.1, b_o = 0.05;
    layer.wx.v = {wx_i, wx_f, wx_g, wx_o};
    layer.b.v = {b_i, b_f, b_g, b_o};

    const double x = 0.8;
    Mat input(1, 1);
    input.at(0, 0) = x;
    LstmSeqCache cache;
    lstm_forward(layer, input, 1, 1, nullptr, nullptr, cache);

    auto sigmoid = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
    const double gi = sigmoid(wx_i * x + b_i);
    const double gf = sigmoid(wx_f * x + b_f);
    const double gg = std::tanh(wx_g * x + b_g);
    const double go = sigmoid(wx_o * x + b_o);
    const double c1 = gi * gg;  // c0 = 0
    const double h1 = go * std::tanh(c1);

    CHECK(cache.c.at(0, 0) == doctest::Approx(c1).epsilon(1e-15));
    CHECK(cache.h.at(0, 0) == doctest::Approx(h1).epsilon(1e-15));
}

TEST_CASE("hidden tensor shape contract (B, T, U)") {
    LstmLayer layer;
    const size_t B = 3, T = 7, U = 6, F = 2;
    layer.wx = Mat(F, 4 * U);
    layer.wh = Mat(U, 4 * U);
    layer.b = Mat(1, 4 * U);
    Rng rng(3);
    for (auto& v : layer.wx.v) v = rng.uniform(-0.5, 0.5);
    for (auto& v : layer.wh.v) v = rng.uniform(-0.5, 0.5);
    Mat x(T * B, F);
    for (auto& v : x.v) v = rng.uniform(-1, 1);
    LstmSeqCache cache;
    lstm_forward(layer, x, B, T, nullptr, nullptr, cache);
    CHECK(cache.h.rows == T * B);
    CHECK(cache.h.cols == U);
}

TEST_CASE("seq2seq output length equals the horizon") {
    for (size_t horizon : {1, 2, 5}) {
        ModelSpec spec = tiny_seq2seq(2, 3, horizon, 4);
        NetworkWeights w = NetworkWeights::init(spec, 1);
        Seq2SeqModel model(spec, w);
        Mat x(spec.look_back * 2, spec.input_dim);
        const Mat pred = model.forward(x, 2, {0.0, 0.0}, {}, nullptr);
        CHECK(pred.rows == horizon * 2);
        CHECK(pred.cols == 1);
    }
}

TEST_CASE("zero-weight net predicts the dense bias everywhere") {
    ModelSpec spec = tiny_seq2seq(2, 3, 4, 5);
    NetworkWeights w = NetworkWeights::zeros(spec);
    w.dense.back().b.at(0, 0) = 0.37;
    Seq2SeqModel model(spec, w);
    Mat x(spec.look_back * 2, spec.input_dim);
    Rng rng(5);
    for (auto& v : x.v) v = rng.uniform(-1, 1);
    const Mat pred = model.forward(x, 2, {0.4, -0.2}, {}, nullptr);
    for (double v : pred.v) CHECK(v == doctest::Approx(0.37).epsilon(1e-15));
}

TEST_CASE("teacher forcing ratio 1 feeds shifted targets to the decoder") {
    ModelSpec spec = tiny_seq2seq(1, 3, 4, 4);
    NetworkWeights w = NetworkWeights::init(spec, 3);
    Seq2SeqModel model(spec, w);

    const size_t B = 2;
    Mat x(spec.look_back * B, 1);
    Mat teacher(spec.horizon * B, 1);
    Rng rng(7);
    for (auto& v : x.v) v = rng.uniform(-1, 1);
    for (auto& v : teacher.v) v = rng.uniform(-1, 1);
    const std::vector<double> y_last = {0.11, -0.42};

    ForwardOptions opts;
    opts.training = true;
    opts.teacher = &teacher;
    opts.teacher_mask.assign(spec.horizon, 1);

    CacheHolder cache;
    model.forward(x, B, y_last, opts, cache.get());

    // instrumentation: the cached decoder layer-0 inputs must be exactly
    // [y_last, teacher[0..H-1)]
    const ForwardCache* fc = cache.get();
    (void)fc;
    // decoder input cache is private to the forward pass; verify through the
    // public contract instead: with mask=1 predictions differ from mask=0
    ForwardOptions infer;
    const Mat p_infer = model.forward(x, B, y_last, infer, nullptr);
    ForwardOptions tf = opts;
    const Mat p_tf = model.forward(x, B, y_last, tf, nullptr);
    bool any_diff = false;
    for (size_t i = 0; i < p_infer.size(); ++i)
        if (p_infer.v[i] != p_tf.v[i]) any_diff = true;
    CHECK(any_diff);

    // and step 0 must agree (same first decoder input either way)
    for (size_t b = 0; b < B; ++b)
        CHECK(p_infer.at(b, 0) == doctest::Approx(p_tf.at(b, 0)).epsilon(1e-15));
}

TEST_CASE("mae loss examples") {
    SUBCASE("pred == target gives zero loss and zero gradient") {
        Mat p(2, 1), t(2, 1);
        p.v = {1.5, -2.0};
        t.v = {1.5, -2.0};
        const auto [loss, grad] = mae_loss(p, t);
        CHECK(loss == 0.0);
        for (double g : grad.v) CHECK(g == 0.0);
    }
    SUBCASE("hand value 15") {
        Mat p(2, 1), t(2, 1);
        p.v = {110, 180};
        t.v = {100, 200};
        const auto [loss, grad] = mae_loss(p, t);
        CHECK(loss == doctest::Approx(15.0).epsilon(1e-12));
    }
    SUBCASE("gradient entries live in {-1/N, 0, +1/N}") {
        Mat p(4, 1), t(4, 1);
        p.v = {1, 2, 3, 4};
        t.v = {2, 2, 2, 2};
        const auto [loss, grad] = mae_loss(p, t);
        for (double g : grad.v)
            CHECK((g == doctest::Approx(0.25) || g == doctest::Approx(-0.25) || g == 0.0));
        CHECK(grad.v[0] == doctest::Approx(-0.25));
        CHECK(grad.v[1] == 0.0);
        CHECK(grad.v[2] == doctest::Approx(0.25));
    }
    SUBCASE("shape mismatch raises") {
        Mat p(2, 1), t(3, 1);
        CHECK_THROWS_AS(mae_loss(p, t), Error);
    }
}

TEST_CASE("adam") {
    // one-parameter model: a single 1x1 block via a trivial spec is overkill,
    // drive adam_step directly through a NetworkWeights with one dense block
    ModelSpec spec;
    spec.kind = ModelKind::Direct;
    spec.input_dim = 1;
    spec.encoder_units = {1};
    spec.look_back = 1;
    spec.horizon = 1;

    SUBCASE("zero gradient leaves weights unchanged") {
        NetworkWeights w = NetworkWeights::init(spec, 2);
        NetworkWeights before = w;
        NetworkWeights g = NetworkWeights::zeros(spec);
        AdamState s = AdamState::init(w, 0.1);
        adam_step(w, g, s);
        bool same = true;
        std::vector<const Mat*> wb, bb;
        w.visit([&](const std::string&, const Mat& m) { wb.push_back(&m); });
        before.visit([&](const std::string&, const Mat& m) { bb.push_back(&m); });
        for (size_t i = 0; i < wb.size(); ++i) same = same && (wb[i]->v == bb[i]->v);
        CHECK(same);
        CHECK(s.t == 1);
    }

    SUBCASE("two steps on f(x)=x^2 from x=1 with lr=0.1 match hand arithmetic") {
        // independent scalar Adam recurrence computed in the test
        const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
        double x = 1.0, m = 0, v = 0;
        std::vector<double> expected;
        for (int t = 1; t <= 2; ++t) {
            const double g = 2.0 * x;
            m = b1 * m + (1 - b1) * g;
            v = b2 * v + (1 - b2) * g * g;
            const double mhat = m / (1 - std::pow(b1, t));
            const double vhat = v / (1 - std::pow(b2, t));
            x -= lr * mhat / (std::sqrt(vhat) + eps);
            expected.push_back(x);
        }
        CHECK(expected[0] == doctest::Approx(0.9).epsilon(1e-9));

        // exercise the real implementation on a struct holding one scalar
        NetworkWeights w = NetworkWeights::zeros(spec);
        w.encoder[0].wx.at(0, 0) = 1.0;  // the "x" parameter
        AdamState s = AdamState::init(w, lr);
        for (int t = 1; t <= 2; ++t) {
            NetworkWeights g = NetworkWeights::zeros(spec);
            g.encoder[0].wx.at(0, 0) = 2.0 * w.encoder[0].wx.at(0, 0);
            adam_step(w, g, s);
            CHECK(w.encoder[0].wx.at(0, 0) == doctest::Approx(expected[t - 1]).epsilon(1e-12));
        }
    }

    SUBCASE("non-finite gradient refuses the update") {
        NetworkWeights w = NetworkWeights::init(spec, 2);
        const NetworkWeights before = w;
        NetworkWeights g = NetworkWeights::zeros(spec);
        g.encoder[0].wx.at(0, 0) = std::numeric_limits<double>::quiet_NaN();
        AdamState s = AdamState::init(w, 0.1);
        try {
            adam_step(w, g, s);
            FAIL("expected NonFiniteGradient");
        } catch (const Error& e) {
            CHECK(e.kind() == "NonFiniteGradient");
        }
        CHECK(w.encoder[0].wx.v == before.encoder[0].wx.v);
        CHECK(s.t == 0);
    }
}

TEST_CASE("gradient check against central finite differences") {
    // noise floor in the denominator: absolute disagreement at the finite
    // difference round-off scale counts as agreement
    auto rel_err = [](double fd, double bp) {
        return std::abs(fd - bp) / std::max({1e-6, std::abs(fd), std::abs(bp)});
    };

    auto run = [&](uint64_t seed, ModelKind kind, double tf_ratio, bool dense_hidden) {
        Rng cfg(seed);
        ModelSpec spec;
        spec.kind = kind;
        spec.input_dim = 1 + cfg.uniform_index(3);
        const size_t units = 2 + cfg.uniform_index(7);
        spec.encoder_units.assign(1 + cfg.uniform_index(2), units);
        if (kind == ModelKind::Seq2Seq) spec.decoder_units.assign(1 + cfg.uniform_index(2), units);
        if (dense_hidden) spec.dense_units = {3};
        spec.look_back = 1 + cfg.uniform_index(5);
        spec.horizon = 1 + cfg.uniform_index(3);

        const size_t B = 1 + cfg.uniform_index(3);
        Mat x(spec.look_back * B, spec.input_dim);
        for (auto& v : x.v) v = cfg.uniform(-1, 1);
        std::vector<double> y_last(B);
        for (auto& v : y_last) v = cfg.uniform(-1, 1);

        ForwardOptions opts;
        opts.training = true;
        opts.teacher_mask.assign(spec.horizon, 0);
        for (size_t k = 1; k < spec.horizon; ++k)
            opts.teacher_mask[k] = cfg.uniform() < tf_ratio ? 1 : 0;

        NetworkWeights w = NetworkWeights::init(spec, derive_seed(seed, 99));
        Seq2SeqModel model(spec, w);

        // targets a safe margin from the initial predictions so the finite
        // difference probe never crosses an |pred - target| kink
        Mat y(spec.horizon * B, 1);
        {
            ForwardOptions probe = opts;
            probe.teacher_mask.assign(spec.horizon, 0);
            const Mat p0 = model.forward(x, B, y_last, probe, nullptr);
            for (size_t i = 0; i < y.size(); ++i)
                y.v[i] = p0.v[i] + (cfg.uniform() < 0.5 ? -1.0 : 1.0) * cfg.uniform(0.4, 1.0);
        }
        opts.teacher = &y;

        CacheHolder cache;
        const Mat pred = model.forward(x, B, y_last, opts, cache.get());
        const auto [loss0, dpred] = mae_loss(pred, y);
        NetworkWeights grads = model.backward(*cache.get(), dpred);

        std::vector<Mat*> wb, gb;
        NetworkWeights wc = model.weights();
        wc.visit([&](const std::string&, Mat& m) { wb.push_back(&m); });
        grads.visit([&](const std::string&, Mat& m) { gb.push_back(&m); });

        const double h = 1e-5;
        double worst = 0;
        for (size_t k = 0; k < wb.size(); ++k) {
            for (size_t i = 0; i < wb[k]->size(); ++i) {
                const double orig = wb[k]->v[i];
                wb[k]->v[i] = orig + h;
                const double lp =
                    mae_loss(Seq2SeqModel(spec, wc).forward(x, B, y_last, opts, nullptr), y).first;
                wb[k]->v[i] = orig - h;
                const double lm =
                    mae_loss(Seq2SeqModel(spec, wc).forward(x, B, y_last, opts, nullptr), y).first;
                wb[k]->v[i] = orig;
                worst = std::max(worst, rel_err((lp - lm) / (2 * h), gb[k]->v[i]));
            }
        }
        return worst;
    };

    SUBCASE("teacher-forced seq2seq") {
        for (uint64_t s = 1; s <= 4; ++s) CHECK(run(s, ModelKind::Seq2Seq, 1.0, false) < 1e-4);
    }
    SUBCASE("autoregressive feedback path (teacher forcing < 1)") {
        for (uint64_t s = 11; s <= 14; ++s) CHECK(run(s, ModelKind::Seq2Seq, 0.3, false) < 1e-4);
    }
    SUBCASE("direct forecaster") {
        for (uint64_t s = 21; s <= 24; ++s) CHECK(run(s, ModelKind::Direct, 0.0, false) < 1e-4);
    }
    SUBCASE("zero loss gradient means zero weight gradients") {
        ModelSpec spec = tiny_seq2seq();
        NetworkWeights w = NetworkWeights::init(spec, 5);
        Seq2SeqModel model(spec, w);
        Mat x(spec.look_back * 2, spec.input_dim);
        Rng rng(6);
        for (auto& v : x.v) v = rng.uniform(-1, 1);
        CacheHolder cache;
        const Mat pred = model.forward(x, 2, {0.1, 0.2}, {}, cache.get());
        Mat dzero(pred.rows, pred.cols);
        const NetworkWeights g = model.backward(*cache.get(), dzero);
        g.visit([&](const std::string&, const Mat& m) {
            for (double v : m.v) CHECK(v == 0.0);
        });
    }
    SUBCASE("doubling the loss gradient doubles every weight gradient") {
        ModelSpec spec = tiny_seq2seq();
        NetworkWeights w = NetworkWeights::init(spec, 8);
        Seq2SeqModel model(spec, w);
        Mat x(spec.look_back * 2, spec.input_dim);
        Rng rng(9);
        for (auto& v : x.v) v = rng.uniform(-1, 1);
        CacheHolder cache;
        const Mat pred = model.forward(x, 2, {0.1, 0.2}, {}, cache.get());
        Mat d1(pred.rows, pred.cols), d2(pred.rows, pred.cols);
        for (size_t i = 0; i < d1.size(); ++i) {
            d1.v[i] = rng.uniform(-1, 1);
            d2.v[i] = 2.0 * d1.v[i];
        }
        const NetworkWeights g1 = model.backward(*cache.get(), d1);
        const NetworkWeights g2 = model.backward(*cache.get(), d2);
        std::vector<const Mat*> b1, b2;
        g1.visit([&](const std::string&, const Mat& m) { b1.push_back(&m); });
        g2.visit([&](const std::string&, const Mat& m) { b2.push_back(&m); });
        for (size_t k = 0; k < b1.size(); ++k)
            for (size_t i = 0; i < b1[k]->size(); ++i)
                CHECK(b2[k]->v[i] == doctest::Approx(2.0 * b1[k]->v[i]).epsilon(1e-12));
    }
}

TEST_CASE("training loop") {
    const WindowArray w = linear_windows(260, 6, 2, 4);
    std::vector<uint32_t> train_idx, val_idx;
    for (uint32_t i = 0; i < w.count(); ++i)
        (i < w.count() * 8 / 10 ? train_idx : val_idx).push_back(i);

    ModelSpec spec = tiny_seq2seq(1, 6, 2, 8);

    SUBCASE("max_epochs 0 returns initialized weights and an empty trace") {
        TrainConfig cfg;
        cfg.max_epochs = 0;
        const TrainResult r = train(spec, w, train_idx, val_idx, cfg, 3);
        CHECK(r.trace.empty());
        const NetworkWeights fresh = NetworkWeights::init(spec, derive_seed(3, 0));
        CHECK(r.weights.encoder[0].wx.v == fresh.encoder[0].wx.v);
    }

    SUBCASE("same seed twice gives bit-identical weights") {
        TrainConfig cfg;
        cfg.max_epochs = 4;
        cfg.batch_size = 16;
        const TrainResult a = train(spec, w, train_idx, val_idx, cfg, 5);
        const TrainResult b = train(spec, w, train_idx, val_idx, cfg, 5);
        std::vector<const Mat*> ba, bb;
        a.weights.visit([&](const std::string&, const Mat& m) { ba.push_back(&m); });
        b.weights.visit([&](const std::string&, const Mat& m) { bb.push_back(&m); });
        for (size_t k = 0; k < ba.size(); ++k) CHECK(ba[k]->v == bb[k]->v);
        REQUIRE(a.trace.size() == b.trace.size());
        for (size_t e = 0; e < a.trace.size(); ++e) {
            CHECK(a.trace[e].train_mae == b.trace[e].train_mae);
            CHECK(a.trace[e].val_mae == b.trace[e].val_mae);
        }
    }

    SUBCASE("training improves validation MAE over the initial weights") {
        TrainConfig cfg;
        cfg.max_epochs = 15;
        cfg.patience = 15;
        cfg.learning_rate = 5e-3;
        const NetworkWeights init = NetworkWeights::init(spec, derive_seed(7, 0));
        const double before = evaluate_mae(spec, init, w, val_idx);
        const TrainResult r = train(spec, w, train_idx, val_idx, cfg, 7);
        CHECK(r.best_val_mae < before);
    }

    SUBCASE("no data raises NoData") {
        TrainConfig cfg;
        CHECK_THROWS_AS(train(spec, w, {}, val_idx, cfg, 1), Error);
    }

    SUBCASE("repeated inference is bit-identical (dropout-free)") {
        ModelSpec sd = spec;
        sd.dropout_rate = 0.4;
        TrainConfig cfg;
        cfg.max_epochs = 2;
        const TrainResult r = train(sd, w, train_idx, val_idx, cfg, 9);
        const Mat p1 = predict_windows(sd, r.weights, w, val_idx);
        const Mat p2 = predict_windows(sd, r.weights, w, val_idx);
        CHECK(p1.v == p2.v);
    }

    SUBCASE("weights stay finite through training") {
        TrainConfig cfg;
        cfg.max_epochs = 6;
        cfg.learning_rate = 1e-2;
        const TrainResult r = train(spec, w, train_idx, val_idx, cfg, 11);
        CHECK(r.weights.all_finite());
    }
}

TEST_CASE("fine_tune with zero epochs is a no-op") {
    const WindowArray w = linear_windows(120, 5, 2, 8);
    std::vector<uint32_t> idx;
    for (uint32_t i = 0; i < w.count(); ++i) idx.push_back(i);
    ModelSpec spec = tiny_seq2seq(1, 5, 2, 4);
    NetworkWeights weights = NetworkWeights::init(spec, 13);
    const NetworkWeights before = weights;
    TrainConfig cfg;
    cfg.max_epochs = 0;
    const auto trace = fine_tune(spec, weights, w, idx, cfg, 1);
    CHECK(trace.empty());
    CHECK(weights.encoder[0].wx.v == before.encoder[0].wx.v);
}

TEST_CASE("model file round trip preserves weights bit-exactly") {
    ModelSpec spec = tiny_seq2seq(3, 4, 2, 6);
    spec.dense_units = {5};
    ModelFile f;
    f.spec = spec;
    f.weights = NetworkWeights::init(spec, 21);
    f.preprocess_fingerprint = "00ff00ff00ff00ff";
    f.feature_names = {"a", "b", "c"};
    f.validation_mae = 0.123;
    f.base_learning_rate = 3e-3;

    const ModelFile back = ModelFile::from_json(f.to_json());
    CHECK(back.spec.encoder_units == spec.encoder_units);
    CHECK(back.feature_names == f.feature_names);
    CHECK(back.validation_mae == f.validation_mae);
    std::vector<const Mat*> ba, bb;
    f.weights.visit([&](const std::string&, const Mat& m) { ba.push_back(&m); });
    back.weights.visit([&](const std::string&, const Mat& m) { bb.push_back(&m); });
    for (size_t k = 0; k < ba.size(); ++k) CHECK(ba[k]->v == bb[k]->v);
}
