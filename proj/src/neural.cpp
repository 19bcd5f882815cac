#include "flowcast/neural.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include <nlohmann/json.hpp>

namespace flowcast::nn {

using nlohmann::json;

// ============================================================================
// Spec validation
// ============================================================================

void ModelSpec::validate() const {
    if (input_dim == 0) throw Error("InvalidSpec", "input_dim must be positive");
    if (look_back == 0) throw Error("InvalidSpec", "look_back must be >= 1");
    if (horizon == 0) throw Error("HorizonZero", "horizon must be >= 1");
    if (output_dim == 0) throw Error("InvalidSpec", "output_dim must be positive");
    if (dropout_rate < 0.0 || dropout_rate > 0.9)
        throw Error("InvalidSpec", "dropout_rate must lie in [0, 0.9]");
    if (encoder_units.empty()) throw Error("InvalidSpec", "need at least one encoder layer");
    for (size_t u : encoder_units)
        if (u == 0) throw Error("InvalidSpec", "encoder layer with zero units");
    for (size_t u : dense_units)
        if (u == 0) throw Error("InvalidSpec", "dense layer with zero units");

    if (kind == ModelKind::Seq2Seq) {
        if (decoder_units.empty()) throw Error("InvalidSpec", "seq2seq needs at least one decoder layer");
        const size_t shared = std::min(encoder_units.size(), decoder_units.size());
        for (size_t i = 0; i < shared; ++i) {
            if (decoder_units[i] != encoder_units[i])
                throw Error("InvalidSpec",
                            "decoder layer " + std::to_string(i) +
                                " units must match the encoder layer that hands it its state");
        }
        for (size_t u : decoder_units)
            if (u == 0) throw Error("InvalidSpec", "decoder layer with zero units");
    } else {
        if (!decoder_units.empty()) throw Error("InvalidSpec", "direct forecaster has no decoder");
    }
}

// ============================================================================
// Weights
// ============================================================================

namespace {

void init_uniform(Mat& m, double bound, Rng& rng) {
    for (double& v : m.v) v = rng.uniform(-bound, bound);
}

LstmLayer make_lstm_layer(size_t input, size_t units) {
    LstmLayer l;
    l.wx = Mat(input, 4 * units);
    l.wh = Mat(units, 4 * units);
    l.b = Mat(1, 4 * units);
    return l;
}

std::vector<size_t> dense_input_chain(const ModelSpec& spec) {
    std::vector<size_t> dims;
    const size_t top = (spec.kind == ModelKind::Seq2Seq) ? spec.decoder_units.back()
                                                         : spec.encoder_units.back();
    dims.push_back(top);
    for (size_t u : spec.dense_units) dims.push_back(u);
    return dims;
}

size_t dense_output_dim(const ModelSpec& spec) {
    return (spec.kind == ModelKind::Seq2Seq) ? spec.output_dim : spec.horizon * spec.output_dim;
}

}  // namespace

NetworkWeights NetworkWeights::zeros(const ModelSpec& spec) {
    spec.validate();
    NetworkWeights w;
    size_t in = spec.input_dim;
    for (size_t u : spec.encoder_units) {
        w.encoder.push_back(make_lstm_layer(in, u));
        in = u;
    }
    if (spec.kind == ModelKind::Seq2Seq) {
        in = spec.output_dim;  // decoder consumes the previous target value
        for (size_t u : spec.decoder_units) {
            w.decoder.push_back(make_lstm_layer(in, u));
            in = u;
        }
    }
    const std::vector<size_t> chain = dense_input_chain(spec);
    for (size_t i = 0; i + 1 < chain.size(); ++i) {
        DenseLayer d;
        d.w = Mat(chain[i], chain[i + 1]);
        d.b = Mat(1, chain[i + 1]);
        w.dense.push_back(std::move(d));
    }
    DenseLayer out;
    out.w = Mat(chain.back(), dense_output_dim(spec));
    out.b = Mat(1, dense_output_dim(spec));
    w.dense.push_back(std::move(out));
    return w;
}

NetworkWeights NetworkWeights::init(const ModelSpec& spec, uint64_t seed) {
    NetworkWeights w = zeros(spec);
    Rng rng(seed);
    auto init_lstm = [&](LstmLayer& l) {
        init_uniform(l.wx, 1.0 / std::sqrt(static_cast<double>(l.wx.rows)), rng);
        init_uniform(l.wh, 1.0 / std::sqrt(static_cast<double>(l.wh.rows)), rng);
        // standard unit forget-gate bias; the rest start at zero
        const size_t u = l.units();
        for (size_t j = u; j < 2 * u; ++j) l.b.at(0, j) = 1.0;
    };
    for (auto& l : w.encoder) init_lstm(l);
    for (auto& l : w.decoder) init_lstm(l);
    for (auto& d : w.dense)
        init_uniform(d.w, 1.0 / std::sqrt(static_cast<double>(d.w.rows)), rng);
    return w;
}

void NetworkWeights::visit(const std::function<void(const std::string&, Mat&)>& fn) {
    for (size_t i = 0; i < encoder.size(); ++i) {
        const std::string p = "encoder." + std::to_string(i) + ".";
        fn(p + "wx", encoder[i].wx);
        fn(p + "wh", encoder[i].wh);
        fn(p + "b", encoder[i].b);
    }
    for (size_t i = 0; i < decoder.size(); ++i) {
        const std::string p = "decoder." + std::to_string(i) + ".";
        fn(p + "wx", decoder[i].wx);
        fn(p + "wh", decoder[i].wh);
        fn(p + "b", decoder[i].b);
    }
    for (size_t i = 0; i < dense.size(); ++i) {
        const std::string p = "dense." + std::to_string(i) + ".";
        fn(p + "w", dense[i].w);
        fn(p + "b", dense[i].b);
    }
}

void NetworkWeights::visit(const std::function<void(const std::string&, const Mat&)>& fn) const {
    const_cast<NetworkWeights*>(this)->visit(
        [&](const std::string& name, Mat& m) { fn(name, static_cast<const Mat&>(m)); });
}

bool NetworkWeights::all_finite() const {
    bool ok = true;
    visit([&](const std::string&, const Mat& m) { ok = ok && m.all_finite(); });
    return ok;
}

size_t NetworkWeights::parameter_count() const {
    size_t n = 0;
    visit([&](const std::string&, const Mat& m) { n += m.size(); });
    return n;
}

AdamState AdamState::init(const NetworkWeights& w, double lr, double beta1, double beta2,
                          double epsilon) {
    AdamState s;
    s.learning_rate = lr;
    s.beta1 = beta1;
    s.beta2 = beta2;
    s.epsilon = epsilon;
    w.visit([&](const std::string&, const Mat& m) {
        s.m.emplace_back(m.rows, m.cols);
        s.v.emplace_back(m.rows, m.cols);
    });
    return s;
}

void adam_step(NetworkWeights& w, const NetworkWeights& g, AdamState& s) {
    if (!g.all_finite()) throw Error("NonFiniteGradient", "update refused: gradient not finite");

    std::vector<Mat*> wm, gm;
    w.visit([&](const std::string&, Mat& m) { wm.push_back(&m); });
    const_cast<NetworkWeights&>(g).visit([&](const std::string&, Mat& m) { gm.push_back(&m); });
    if (wm.size() != gm.size() || wm.size() != s.m.size())
        throw Error("ShapeMismatch", "weights, gradients and optimizer state disagree");

    s.t += 1;
    const double bc1 = 1.0 - std::pow(s.beta1, static_cast<double>(s.t));
    const double bc2 = 1.0 - std::pow(s.beta2, static_cast<double>(s.t));
    for (size_t k = 0; k < wm.size(); ++k) {
        Mat& weight = *wm[k];
        const Mat& grad = *gm[k];
        Mat& m1 = s.m[k];
        Mat& m2 = s.v[k];
        if (weight.size() != grad.size())
            throw Error("ShapeMismatch", "gradient block size mismatch");
        for (size_t i = 0; i < weight.size(); ++i) {
            const double gv = grad.v[i];
            m1.v[i] = s.beta1 * m1.v[i] + (1.0 - s.beta1) * gv;
            m2.v[i] = s.beta2 * m2.v[i] + (1.0 - s.beta2) * gv * gv;
            const double mhat = m1.v[i] / bc1;
            const double vhat = m2.v[i] / bc2;
            weight.v[i] -= s.learning_rate * mhat / (std::sqrt(vhat) + s.epsilon);
        }
    }
}

// ============================================================================
// LSTM primitives
// ============================================================================

namespace {

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

void add_bias_rows(MatRef z, const Mat& b) {
    for (size_t r = 0; r < z.rows; ++r) {
        double* row = z.row(r);
        for (size_t j = 0; j < z.cols; ++j) row[j] += b.v[j];
    }
}

// z already holds x_t*wx; adds the recurrent term and bias, activates gates
// in place and fills the new cell/hidden state.
void lstm_cell(const LstmLayer& layer, MatRef z, CMatRef h_prev, CMatRef c_prev, MatRef c_out,
               MatRef tanh_c_out, MatRef h_out) {
    gemm_nn(h_prev, layer.wh, z, true);
    add_bias_rows(z, layer.b);
    const size_t u = layer.units();
    for (size_t r = 0; r < z.rows; ++r) {
        double* g = z.row(r);
        const double* cp = c_prev.row(r);
        double* c = c_out.row(r);
        double* tc = tanh_c_out.row(r);
        double* h = h_out.row(r);
        for (size_t j = 0; j < u; ++j) {
            const double gi = sigmoid(g[j]);
            const double gf = sigmoid(g[u + j]);
            const double gg = std::tanh(g[2 * u + j]);
            const double go = sigmoid(g[3 * u + j]);
            g[j] = gi;
            g[u + j] = gf;
            g[2 * u + j] = gg;
            g[3 * u + j] = go;
            c[j] = gf * cp[j] + gi * gg;
            tc[j] = std::tanh(c[j]);
            h[j] = go * tc[j];
        }
    }
}

// Single-step gate backward. dh: total gradient on h_t; dc_in: recurrent cell
// gradient arriving from step t+1. Produces dZ (pre-activation grads) and the
// recurrent gradients for step t-1.
void lstm_cell_backward(size_t units, CMatRef gates, CMatRef c_prev, CMatRef tanh_c, CMatRef dh,
                        CMatRef dc_in, MatRef dz, MatRef dc_prev_out) {
    for (size_t r = 0; r < dh.rows; ++r) {
        const double* g = gates.row(r);
        const double* cp = c_prev.row(r);
        const double* tc = tanh_c.row(r);
        const double* dhr = dh.row(r);
        const double* dcr = dc_in.row(r);
        double* dzr = dz.row(r);
        double* dcp = dc_prev_out.row(r);
        for (size_t j = 0; j < units; ++j) {
            const double gi = g[j];
            const double gf = g[units + j];
            const double gg = g[2 * units + j];
            const double go = g[3 * units + j];
            const double dct = dcr[j] + dhr[j] * go * (1.0 - tc[j] * tc[j]);
            dzr[j] = dct * gg * gi * (1.0 - gi);
            dzr[units + j] = dct * cp[j] * gf * (1.0 - gf);
            dzr[2 * units + j] = dct * gi * (1.0 - gg * gg);
            dzr[3 * units + j] = dhr[j] * tc[j] * go * (1.0 - go);
            dcp[j] = dct * gf;
        }
    }
}

void colsum_into(const Mat& src, Mat& dst) {
    for (size_t j = 0; j < src.cols; ++j) dst.v[j] = 0.0;
    for (size_t r = 0; r < src.rows; ++r) {
        const double* row = src.row(r);
        for (size_t j = 0; j < src.cols; ++j) dst.v[j] += row[j];
    }
}

}  // namespace

void lstm_forward(const LstmLayer& layer, const Mat& x, size_t batch, size_t steps, const Mat* h0,
                  const Mat* c0, LstmSeqCache& cache) {
    const size_t u = layer.units();
    if (x.rows != batch * steps || x.cols != layer.input())
        throw Error("ShapeMismatch", "lstm_forward input shape");

    cache.batch = batch;
    cache.steps = steps;
    cache.x = x;
    cache.gates.resize(batch * steps, 4 * u);
    cache.c.resize(batch * steps, u);
    cache.tanh_c.resize(batch * steps, u);
    cache.h.resize(batch * steps, u);
    cache.h0.resize(batch, u);
    cache.c0.resize(batch, u);
    if (h0 != nullptr) cache.h0 = *h0;
    if (c0 != nullptr) cache.c0 = *c0;

    gemm_nn(cache.x, layer.wx, cache.gates, false);
    for (size_t t = 0; t < steps; ++t) {
        CMatRef h_prev = (t == 0) ? CMatRef(cache.h0) : slice_rows(std::as_const(cache.h), (t - 1) * batch, batch);
        CMatRef c_prev = (t == 0) ? CMatRef(cache.c0) : slice_rows(std::as_const(cache.c), (t - 1) * batch, batch);
        lstm_cell(layer, slice_rows(cache.gates, t * batch, batch), h_prev, c_prev,
                  slice_rows(cache.c, t * batch, batch), slice_rows(cache.tanh_c, t * batch, batch),
                  slice_rows(cache.h, t * batch, batch));
    }
}

void lstm_backward(const LstmLayer& layer, const LstmSeqCache& cache, const Mat& dh_steps,
                   const Mat* dh_final, const Mat* dc_final, LstmGrads& grads, Mat& dx, Mat& dh0,
                   Mat& dc0) {
    const size_t u = layer.units();
    const size_t batch = cache.batch;
    const size_t steps = cache.steps;
    if (dh_steps.rows != batch * steps || dh_steps.cols != u)
        throw Error("ShapeMismatch", "lstm_backward dh shape");

    const Mat whT = transpose(layer.wh);
    const Mat wxT = transpose(layer.wx);

    Mat dz_all(batch * steps, 4 * u);
    Mat dh_rec(batch, u);
    Mat dc_rec(batch, u);
    if (dh_final != nullptr) dh_rec = *dh_final;
    if (dc_final != nullptr) dc_rec = *dc_final;

    Mat dh_total(batch, u);
    for (size_t ti = steps; ti-- > 0;) {
        for (size_t r = 0; r < batch; ++r) {
            const double* ext = dh_steps.row(ti * batch + r);
            const double* rec = dh_rec.row(r);
            double* dst = dh_total.row(r);
            for (size_t j = 0; j < u; ++j) dst[j] = ext[j] + rec[j];
        }
        CMatRef c_prev = (ti == 0) ? CMatRef(cache.c0) : slice_rows(cache.c, (ti - 1) * batch, batch);
        lstm_cell_backward(u, slice_rows(cache.gates, ti * batch, batch), c_prev,
                           slice_rows(cache.tanh_c, ti * batch, batch), dh_total, dc_rec,
                           slice_rows(dz_all, ti * batch, batch), dc_rec);
        gemm_nn(slice_rows(std::as_const(dz_all), ti * batch, batch), whT, dh_rec, false);
    }

    grads.dwx.resize(layer.wx.rows, layer.wx.cols);
    grads.dwh.resize(layer.wh.rows, layer.wh.cols);
    grads.db.resize(1, 4 * u);
    gemm_tn(cache.x, dz_all, grads.dwx, false);

    Mat h_shift(batch * steps, u);
    std::memcpy(h_shift.row(0), cache.h0.row(0), batch * u * sizeof(double));
    if (steps > 1)
        std::memcpy(h_shift.row(batch), cache.h.row(0), (steps - 1) * batch * u * sizeof(double));
    gemm_tn(h_shift, dz_all, grads.dwh, false);
    colsum_into(dz_all, grads.db);

    dx.resize(batch * steps, layer.input());
    gemm_nn(dz_all, wxT, dx, false);
    dh0 = dh_rec;
    dc0 = dc_rec;
}

// ============================================================================
// Forward cache
// ============================================================================

struct ForwardCache {
    bool valid = false;
    bool training = false;
    size_t batch = 0;
    std::vector<uint8_t> teacher_mask;

    std::vector<LstmSeqCache> enc;
    std::vector<Mat> enc_dropped;    // dropped copy of layer output feeding the next layer
    std::vector<Mat> enc_drop_mask;  // scaled inverted-dropout masks, one per boundary

    std::vector<LstmSeqCache> dec;
    std::vector<Mat> dec_drop_mask;  // per decoder boundary, (H*B x U)
    Mat top_drop_mask;               // before the dense head

    std::vector<Mat> dense_in;   // per dense layer: input activations
    std::vector<Mat> dense_pre;  // per hidden layer: pre-activations (for relu')
    Mat dense_top_in;            // head input after dropout
    Mat preds;                   // (H*B x O) for seq2seq, (B x H*O) raw for direct
};

ForwardCache* new_forward_cache() { return new ForwardCache(); }
void free_forward_cache(ForwardCache* c) { delete c; }

namespace {

void fill_dropout_mask(Mat& mask, double rate, Rng& rng) {
    const double scale = 1.0 / (1.0 - rate);
    for (double& v : mask.v) v = (rng.uniform() < rate) ? 0.0 : scale;
}

void apply_mask(const Mat& mask, const Mat& src, Mat& dst) {
    dst.resize(src.rows, src.cols);
    for (size_t i = 0; i < src.size(); ++i) dst.v[i] = src.v[i] * mask.v[i];
}

// y = relu(x) in place over a row block
void relu_rows(MatRef m) {
    for (size_t i = 0; i < m.rows * m.cols; ++i)
        if (m.p[i] < 0.0) m.p[i] = 0.0;
}

}  // namespace

// ============================================================================
// Seq2SeqModel
// ============================================================================

Seq2SeqModel::Seq2SeqModel(const ModelSpec& spec, NetworkWeights weights)
    : spec_(spec), weights_(std::move(weights)) {
    spec_.validate();
}

Mat Seq2SeqModel::forward(const Mat& x, size_t batch, const std::vector<double>& y_last,
                          const ForwardOptions& opts, ForwardCache* cache) const {
    const size_t T = spec_.look_back;
    const size_t H = spec_.horizon;
    const size_t O = spec_.output_dim;
    if (x.rows != T * batch || x.cols != spec_.input_dim)
        throw Error("ShapeMismatch", "forward input must be (look_back*batch x input_dim)");
    if (spec_.kind == ModelKind::Seq2Seq && y_last.size() != batch)
        throw Error("ShapeMismatch", "y_last must have one entry per sample");
    const bool dropout_on = opts.training && spec_.dropout_rate > 0.0;
    if (dropout_on && opts.dropout_rng == nullptr)
        throw Error("MissingCache", "training with dropout requires an RNG");

    CacheHolder local;
    ForwardCache& fc = (cache != nullptr) ? *cache : *local.get();
    fc.valid = true;
    fc.training = opts.training;
    fc.batch = batch;
    fc.teacher_mask = opts.teacher_mask;

    // ---- encoder ----
    const size_t enc_layers = weights_.encoder.size();
    fc.enc.resize(enc_layers);
    fc.enc_dropped.resize(enc_layers > 0 ? enc_layers - 1 : 0);
    fc.enc_drop_mask.resize(enc_layers > 0 ? enc_layers - 1 : 0);

    const Mat* layer_in = &x;
    for (size_t l = 0; l < enc_layers; ++l) {
        lstm_forward(weights_.encoder[l], *layer_in, batch, T, nullptr, nullptr, fc.enc[l]);
        if (l + 1 < enc_layers) {
            if (dropout_on) {
                fc.enc_drop_mask[l].resize(fc.enc[l].h.rows, fc.enc[l].h.cols);
                fill_dropout_mask(fc.enc_drop_mask[l], spec_.dropout_rate, *opts.dropout_rng);
                apply_mask(fc.enc_drop_mask[l], fc.enc[l].h, fc.enc_dropped[l]);
            } else {
                fc.enc_dropped[l] = fc.enc[l].h;
            }
            layer_in = &fc.enc_dropped[l];
        }
    }

    const size_t dense_rows = (spec_.kind == ModelKind::Seq2Seq) ? H * batch : batch;
    fc.dense_in.resize(weights_.dense.size());
    fc.dense_pre.assign(weights_.dense.size() > 0 ? weights_.dense.size() - 1 : 0, Mat());

    if (spec_.kind == ModelKind::Direct) {
        // head reads the final hidden state of the top encoder layer
        const LstmSeqCache& top = fc.enc.back();
        Mat final_h(batch, top.h.cols);
        std::memcpy(final_h.row(0), top.h.row((T - 1) * batch), batch * top.h.cols * sizeof(double));

        if (dropout_on) {
            fc.top_drop_mask.resize(batch, final_h.cols);
            fill_dropout_mask(fc.top_drop_mask, spec_.dropout_rate, *opts.dropout_rng);
            apply_mask(fc.top_drop_mask, final_h, fc.dense_top_in);
        } else {
            fc.dense_top_in = final_h;
        }

        Mat act = fc.dense_top_in;
        for (size_t d = 0; d < weights_.dense.size(); ++d) {
            fc.dense_in[d] = act;
            Mat next(dense_rows, weights_.dense[d].w.cols);
            gemm_nn(act, weights_.dense[d].w, next, false);
            add_bias_rows(next, weights_.dense[d].b);
            if (d + 1 < weights_.dense.size()) {
                fc.dense_pre[d] = next;
                relu_rows(next);
            }
            act = std::move(next);
        }
        fc.preds = act;  // (B x H*O)

        // expose the unified t-major layout
        Mat out(H * batch, O);
        for (size_t b = 0; b < batch; ++b)
            for (size_t k = 0; k < H; ++k)
                for (size_t o = 0; o < O; ++o) out.at(k * batch + b, o) = act.at(b, k * O + o);
        return out;
    }

    // ---- decoder (autoregressive) ----
    if (opts.training) {
        bool needs_teacher = false;
        for (size_t k = 1; k < opts.teacher_mask.size(); ++k) needs_teacher |= opts.teacher_mask[k] != 0;
        if (needs_teacher && opts.teacher == nullptr)
            throw Error("MissingCache", "teacher forcing requested without teacher targets");
        if (opts.teacher != nullptr &&
            (opts.teacher->rows != H * batch || opts.teacher->cols != O))
            throw Error("ShapeMismatch", "teacher targets must be (horizon*batch x output_dim)");
    }

    const size_t dec_layers = weights_.decoder.size();
    fc.dec.resize(dec_layers);
    fc.dec_drop_mask.resize(dec_layers > 0 ? dec_layers - 1 : 0);
    for (size_t l = 0; l < dec_layers; ++l) {
        LstmSeqCache& dc = fc.dec[l];
        const size_t u = weights_.decoder[l].units();
        dc.batch = batch;
        dc.steps = H;
        dc.x.resize(H * batch, weights_.decoder[l].input());
        dc.gates.resize(H * batch, 4 * u);
        dc.c.resize(H * batch, u);
        dc.tanh_c.resize(H * batch, u);
        dc.h.resize(H * batch, u);
        // initial state: matching encoder layer's final state, zero beyond
        dc.h0.resize(batch, u);
        dc.c0.resize(batch, u);
        if (l < enc_layers) {
            const LstmSeqCache& ec = fc.enc[l];
            std::memcpy(dc.h0.row(0), ec.h.row((T - 1) * batch), batch * u * sizeof(double));
            std::memcpy(dc.c0.row(0), ec.c.row((T - 1) * batch), batch * u * sizeof(double));
        }
        if (dropout_on && l + 1 < dec_layers) fc.dec_drop_mask[l].resize(H * batch, u);
        if (dropout_on && l + 1 == dec_layers) fc.top_drop_mask.resize(H * batch, u);
    }

    for (size_t d = 0; d < weights_.dense.size(); ++d) {
        fc.dense_in[d].resize(dense_rows, weights_.dense[d].w.rows);
        if (d + 1 < weights_.dense.size()) fc.dense_pre[d].resize(dense_rows, weights_.dense[d].w.cols);
    }
    fc.preds.resize(H * batch, O);
    fc.dense_top_in.resize(H * batch, weights_.decoder.back().units());

    std::vector<Mat> h_cur(dec_layers), c_cur(dec_layers);
    for (size_t l = 0; l < dec_layers; ++l) {
        h_cur[l] = fc.dec[l].h0;
        c_cur[l] = fc.dec[l].c0;
    }

    Mat step_in(batch, O);
    Mat dropped(batch, 0);
    for (size_t k = 0; k < H; ++k) {
        // decoder input: last observed value, teacher value, or own prediction
        if (k == 0) {
            for (size_t b = 0; b < batch; ++b)
                for (size_t o = 0; o < O; ++o) step_in.at(b, o) = y_last[b];
        } else {
            const bool use_teacher =
                k < opts.teacher_mask.size() && opts.teacher_mask[k] != 0 && opts.teacher != nullptr;
            const Mat& src = use_teacher ? *opts.teacher : fc.preds;
            for (size_t b = 0; b < batch; ++b)
                for (size_t o = 0; o < O; ++o) step_in.at(b, o) = src.at((k - 1) * batch + b, o);
        }

        const Mat* in = &step_in;
        for (size_t l = 0; l < dec_layers; ++l) {
            LstmSeqCache& dc = fc.dec[l];
            const size_t u = weights_.decoder[l].units();
            std::memcpy(dc.x.row(k * batch), in->row(0), batch * in->cols * sizeof(double));

            MatRef z = slice_rows(dc.gates, k * batch, batch);
            gemm_nn(slice_rows(std::as_const(dc.x), k * batch, batch), weights_.decoder[l].wx, z, false);
            lstm_cell(weights_.decoder[l], z, h_cur[l], c_cur[l], slice_rows(dc.c, k * batch, batch),
                      slice_rows(dc.tanh_c, k * batch, batch), slice_rows(dc.h, k * batch, batch));
            std::memcpy(h_cur[l].row(0), dc.h.row(k * batch), batch * u * sizeof(double));
            std::memcpy(c_cur[l].row(0), dc.c.row(k * batch), batch * u * sizeof(double));

            if (l + 1 < dec_layers) {
                dropped.resize(batch, u);
                if (dropout_on) {
                    MatRef mask_slice = slice_rows(fc.dec_drop_mask[l], k * batch, batch);
                    const double scale = 1.0 / (1.0 - spec_.dropout_rate);
                    for (size_t i = 0; i < batch * u; ++i)
                        mask_slice.p[i] = (opts.dropout_rng->uniform() < spec_.dropout_rate) ? 0.0 : scale;
                    for (size_t i = 0; i < batch * u; ++i)
                        dropped.v[i] = h_cur[l].v[i] * mask_slice.p[i];
                } else {
                    dropped = h_cur[l];
                }
                in = &dropped;
            }
        }

        // dense head on the top hidden state for this step
        const size_t u_top = weights_.decoder.back().units();
        MatRef top_in_slice = slice_rows(fc.dense_top_in, k * batch, batch);
        if (dropout_on) {
            MatRef mask_slice = slice_rows(fc.top_drop_mask, k * batch, batch);
            const double scale = 1.0 / (1.0 - spec_.dropout_rate);
            for (size_t i = 0; i < batch * u_top; ++i)
                mask_slice.p[i] = (opts.dropout_rng->uniform() < spec_.dropout_rate) ? 0.0 : scale;
            for (size_t i = 0; i < batch * u_top; ++i)
                top_in_slice.p[i] = h_cur.back().v[i] * mask_slice.p[i];
        } else {
            std::memcpy(top_in_slice.p, h_cur.back().row(0), batch * u_top * sizeof(double));
        }

        CMatRef act(batch, u_top, top_in_slice.p);
        Mat buf_a, buf_b;
        for (size_t d = 0; d < weights_.dense.size(); ++d) {
            MatRef in_slice = slice_rows(fc.dense_in[d], k * batch, batch);
            for (size_t i = 0; i < act.rows * act.cols; ++i) in_slice.p[i] = act.p[i];

            const bool last = (d + 1 == weights_.dense.size());
            Mat& out_buf = (d % 2 == 0) ? buf_a : buf_b;
            out_buf.resize(batch, weights_.dense[d].w.cols);
            gemm_nn(act, weights_.dense[d].w, out_buf, false);
            add_bias_rows(out_buf, weights_.dense[d].b);
            if (!last) {
                MatRef pre_slice = slice_rows(fc.dense_pre[d], k * batch, batch);
                std::memcpy(pre_slice.p, out_buf.v.data(), batch * out_buf.cols * sizeof(double));
                relu_rows(out_buf);
            }
            act = CMatRef(out_buf);
        }
        std::memcpy(fc.preds.row(k * batch), act.p, batch * O * sizeof(double));
    }
    return fc.preds;
}

NetworkWeights Seq2SeqModel::backward(const ForwardCache& fc, const Mat& dpred) const {
    if (!fc.valid) throw Error("MissingCache", "backward requires a cached forward pass");
    const size_t T = spec_.look_back;
    const size_t H = spec_.horizon;
    const size_t O = spec_.output_dim;
    const size_t batch = fc.batch;
    const bool dropout_on = fc.training && spec_.dropout_rate > 0.0;

    NetworkWeights grads = NetworkWeights::zeros(spec_);

    // encoder final-state gradients fed back from the decoder (or direct head)
    const size_t enc_layers = weights_.encoder.size();
    std::vector<Mat> denc_hfin(enc_layers), denc_cfin(enc_layers);
    for (size_t l = 0; l < enc_layers; ++l) {
        denc_hfin[l].resize(batch, weights_.encoder[l].units());
        denc_cfin[l].resize(batch, weights_.encoder[l].units());
    }

    if (spec_.kind == ModelKind::Direct) {
        if (dpred.rows != H * batch || dpred.cols != O)
            throw Error("ShapeMismatch", "dpred must be (horizon*batch x output_dim)");
        // back to the (B x H*O) raw head layout
        Mat dout(batch, H * O);
        for (size_t b = 0; b < batch; ++b)
            for (size_t k = 0; k < H; ++k)
                for (size_t o = 0; o < O; ++o) dout.at(b, k * O + o) = dpred.at(k * batch + b, o);

        Mat da;
        for (size_t d = weights_.dense.size(); d-- > 0;) {
            gemm_tn(fc.dense_in[d], dout, grads.dense[d].w, false);
            colsum_into(dout, grads.dense[d].b);
            da.resize(batch, weights_.dense[d].w.rows);
            gemm_nt(dout, weights_.dense[d].w, da, false);
            if (d > 0) {
                for (size_t i = 0; i < da.size(); ++i)
                    if (fc.dense_pre[d - 1].v[i] <= 0.0) da.v[i] = 0.0;
            }
            dout = da;
        }
        if (dropout_on)
            for (size_t i = 0; i < dout.size(); ++i) dout.v[i] *= fc.top_drop_mask.v[i];

        // gradient lands on the final step of the top encoder layer
        Mat dh_steps(T * batch, weights_.encoder.back().units());
        std::memcpy(dh_steps.row((T - 1) * batch), dout.row(0), dout.size() * sizeof(double));

        Mat dx, dh0, dc0;
        for (size_t l = enc_layers; l-- > 0;) {
            LstmGrads lg;
            lstm_backward(weights_.encoder[l], fc.enc[l], dh_steps, nullptr, nullptr, lg, dx, dh0, dc0);
            grads.encoder[l].wx = std::move(lg.dwx);
            grads.encoder[l].wh = std::move(lg.dwh);
            grads.encoder[l].b = std::move(lg.db);
            if (l > 0) {
                if (dropout_on)
                    for (size_t i = 0; i < dx.size(); ++i) dx.v[i] *= fc.enc_drop_mask[l - 1].v[i];
                dh_steps = std::move(dx);
            }
        }
        return grads;
    }

    // ---- seq2seq decoder backward, step-major because of the feedback path ----
    if (dpred.rows != H * batch || dpred.cols != O)
        throw Error("ShapeMismatch", "dpred must be (horizon*batch x output_dim)");

    const size_t dec_layers = weights_.decoder.size();
    std::vector<Mat> whT(dec_layers), wxT(dec_layers);
    for (size_t l = 0; l < dec_layers; ++l) {
        whT[l] = transpose(weights_.decoder[l].wh);
        wxT[l] = transpose(weights_.decoder[l].wx);
    }

    std::vector<Mat> dz_all(dec_layers);
    std::vector<Mat> dh_rec(dec_layers), dc_rec(dec_layers), dc_tmp(dec_layers);
    for (size_t l = 0; l < dec_layers; ++l) {
        const size_t u = weights_.decoder[l].units();
        dz_all[l].resize(H * batch, 4 * u);
        dh_rec[l].resize(batch, u);
        dc_rec[l].resize(batch, u);
        dc_tmp[l].resize(batch, u);
    }

    Mat dfeedback(batch, O);
    bool feedback_pending = false;
    Mat dy(batch, O), dh_total, dxl, dstep;

    for (size_t k = H; k-- > 0;) {
        for (size_t b = 0; b < batch; ++b)
            for (size_t o = 0; o < O; ++o) {
                dy.at(b, o) = dpred.at(k * batch + b, o) +
                              (feedback_pending ? dfeedback.at(b, o) : 0.0);
            }
        feedback_pending = false;

        // dense head backward for this step
        Mat dout = dy;
        for (size_t d = weights_.dense.size(); d-- > 0;) {
            gemm_tn(slice_rows(fc.dense_in[d], k * batch, batch), dout,
                    MatRef(grads.dense[d].w), true);
            for (size_t r = 0; r < batch; ++r) {
                const double* row = dout.row(r);
                for (size_t j = 0; j < dout.cols; ++j) grads.dense[d].b.v[j] += row[j];
            }
            Mat da(batch, weights_.dense[d].w.rows);
            gemm_nt(dout, weights_.dense[d].w, da, false);
            if (d > 0) {
                CMatRef pre = slice_rows(fc.dense_pre[d - 1], k * batch, batch);
                for (size_t i = 0; i < da.size(); ++i)
                    if (pre.p[i] <= 0.0) da.v[i] = 0.0;
            }
            dout = std::move(da);
        }
        if (dropout_on) {
            CMatRef mask = slice_rows(fc.top_drop_mask, k * batch, batch);
            for (size_t i = 0; i < dout.size(); ++i) dout.v[i] *= mask.p[i];
        }

        // LSTM stack backward, top to bottom
        for (size_t l = dec_layers; l-- > 0;) {
            const size_t u = weights_.decoder[l].units();
            dh_total.resize(batch, u);
            for (size_t i = 0; i < batch * u; ++i) dh_total.v[i] = dout.v[i] + dh_rec[l].v[i];

            const LstmSeqCache& dc = fc.dec[l];
            CMatRef c_prev = (k == 0) ? CMatRef(dc.c0) : slice_rows(dc.c, (k - 1) * batch, batch);
            lstm_cell_backward(u, slice_rows(dc.gates, k * batch, batch), c_prev,
                               slice_rows(dc.tanh_c, k * batch, batch), dh_total, dc_rec[l],
                               slice_rows(dz_all[l], k * batch, batch), dc_tmp[l]);
            std::swap(dc_rec[l], dc_tmp[l]);
            gemm_nn(slice_rows(std::as_const(dz_all[l]), k * batch, batch), whT[l], dh_rec[l], false);

            dxl.resize(batch, weights_.decoder[l].input());
            gemm_nn(slice_rows(std::as_const(dz_all[l]), k * batch, batch), wxT[l], dxl, false);
            if (l > 0) {
                if (dropout_on) {
                    CMatRef mask = slice_rows(fc.dec_drop_mask[l - 1], k * batch, batch);
                    for (size_t i = 0; i < dxl.size(); ++i) dxl.v[i] *= mask.p[i];
                }
                dout = dxl;
            } else if (k > 0) {
                const bool used_teacher = k < fc.teacher_mask.size() && fc.teacher_mask[k] != 0;
                if (!used_teacher) {
                    dfeedback = dxl;  // input was the model's own previous prediction
                    feedback_pending = true;
                }
            }
        }
    }

    // batched parameter gradients for each decoder layer
    for (size_t l = 0; l < dec_layers; ++l) {
        const LstmSeqCache& dc = fc.dec[l];
        const size_t u = weights_.decoder[l].units();
        gemm_tn(dc.x, dz_all[l], grads.decoder[l].wx, false);
        Mat h_shift(H * batch, u);
        std::memcpy(h_shift.row(0), dc.h0.row(0), batch * u * sizeof(double));
        if (H > 1) std::memcpy(h_shift.row(batch), dc.h.row(0), (H - 1) * batch * u * sizeof(double));
        gemm_tn(h_shift, dz_all[l], grads.decoder[l].wh, false);
        colsum_into(dz_all[l], grads.decoder[l].b);

        if (l < enc_layers) {
            denc_hfin[l] = dh_rec[l];
            denc_cfin[l] = dc_rec[l];
        }
    }

    // ---- encoder backward ----
    Mat dh_steps(T * batch, weights_.encoder.back().units());
    Mat dx, dh0, dc0;
    for (size_t l = enc_layers; l-- > 0;) {
        LstmGrads lg;
        lstm_backward(weights_.encoder[l], fc.enc[l], dh_steps, &denc_hfin[l], &denc_cfin[l], lg, dx,
                      dh0, dc0);
        grads.encoder[l].wx = std::move(lg.dwx);
        grads.encoder[l].wh = std::move(lg.dwh);
        grads.encoder[l].b = std::move(lg.db);
        if (l > 0) {
            if (dropout_on)
                for (size_t i = 0; i < dx.size(); ++i) dx.v[i] *= fc.enc_drop_mask[l - 1].v[i];
            dh_steps = std::move(dx);
        }
    }
    return grads;
}

std::pair<double, Mat> mae_loss(const Mat& pred, const Mat& target) {
    if (pred.rows != target.rows || pred.cols != target.cols)
        throw Error("ShapeMismatch", "mae_loss shapes disagree");
    const double n = static_cast<double>(pred.size());
    Mat grad(pred.rows, pred.cols);
    double loss = 0.0;
    for (size_t i = 0; i < pred.size(); ++i) {
        const double d = pred.v[i] - target.v[i];
        loss += std::abs(d);
        grad.v[i] = (d > 0.0) ? 1.0 / n : (d < 0.0 ? -1.0 / n : 0.0);
    }
    return {loss / n, std::move(grad)};
}

// ============================================================================
// Windows and batches
// ============================================================================

void gather_batch(const WindowArray& w, const std::vector<uint32_t>& idx, Mat& x, Mat& y,
                  std::vector<double>& y_last) {
    const size_t B = idx.size();
    const size_t T = w.look_back;
    const size_t H = w.horizon;
    const size_t F = w.features;
    x.resize(T * B, F);
    y.resize(H * B, 1);
    y_last.resize(B);
    for (size_t b = 0; b < B; ++b) {
        const double* in_row = w.inputs.row(idx[b]);
        for (size_t t = 0; t < T; ++t)
            std::memcpy(x.row(t * B + b), in_row + t * F, F * sizeof(double));
        const double* tg_row = w.targets.row(idx[b]);
        for (size_t k = 0; k < H; ++k) y.at(k * B + b, 0) = tg_row[k];
        y_last[b] = w.y_last[idx[b]];
    }
}

// ============================================================================
// Training
// ============================================================================

namespace {

double eval_pass(const Seq2SeqModel& model, const WindowArray& windows,
                 const std::vector<uint32_t>& idx, size_t eval_batch, Mat* out_preds) {
    if (idx.empty()) return std::numeric_limits<double>::quiet_NaN();
    Mat x, y;
    std::vector<double> y_last;
    double abs_sum = 0.0;
    size_t n = 0;
    size_t row = 0;
    for (size_t pos = 0; pos < idx.size(); pos += eval_batch) {
        const size_t take = std::min(eval_batch, idx.size() - pos);
        std::vector<uint32_t> chunk(idx.begin() + pos, idx.begin() + pos + take);
        gather_batch(windows, chunk, x, y, y_last);
        ForwardOptions opts;  // inference: no dropout, autoregressive
        const Mat pred = model.forward(x, take, y_last, opts, nullptr);
        for (size_t i = 0; i < pred.size(); ++i) abs_sum += std::abs(pred.v[i] - y.v[i]);
        n += pred.size();
        if (out_preds != nullptr) {
            for (size_t b = 0; b < take; ++b)
                for (size_t k = 0; k < windows.horizon; ++k)
                    out_preds->at(row + b, k) = pred.at(k * take + b, 0);
            row += take;
        }
    }
    return abs_sum / static_cast<double>(n);
}

}  // namespace

double evaluate_mae(const ModelSpec& spec, const NetworkWeights& weights, const WindowArray& windows,
                    const std::vector<uint32_t>& idx, size_t eval_batch) {
    Seq2SeqModel model(spec, weights);
    return eval_pass(model, windows, idx, eval_batch, nullptr);
}

Mat predict_windows(const ModelSpec& spec, const NetworkWeights& weights, const WindowArray& windows,
                    const std::vector<uint32_t>& idx, size_t eval_batch) {
    Seq2SeqModel model(spec, weights);
    Mat preds(idx.size(), windows.horizon);
    eval_pass(model, windows, idx, eval_batch, &preds);
    return preds;
}

TrainResult train(const ModelSpec& spec, const WindowArray& windows,
                  const std::vector<uint32_t>& train_idx, const std::vector<uint32_t>& val_idx,
                  const TrainConfig& cfg, uint64_t seed) {
    spec.validate();
    if (train_idx.empty()) throw Error("NoData", "no training windows");

    TrainResult result;
    result.weights = NetworkWeights::init(spec, derive_seed(seed, 0));
    if (cfg.max_epochs == 0) return result;

    Rng rng_shuffle(derive_seed(seed, 1));
    Rng rng_dropout(derive_seed(seed, 2));
    Rng rng_teacher(derive_seed(seed, 3));

    Seq2SeqModel model(spec, std::move(result.weights));
    AdamState adam = AdamState::init(model.weights(), cfg.learning_rate);
    CacheHolder cache;

    NetworkWeights best = model.weights();
    double best_val = std::numeric_limits<double>::infinity();
    size_t best_epoch = 0;
    size_t stale = 0;

    std::vector<uint32_t> order(train_idx);
    Mat x, y;
    std::vector<double> y_last;

    for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng_shuffle.shuffle(order);
        double abs_sum = 0.0;
        size_t n_elems = 0;

        for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            const size_t take = std::min(cfg.batch_size, order.size() - pos);
            std::vector<uint32_t> chunk(order.begin() + pos, order.begin() + pos + take);
            gather_batch(windows, chunk, x, y, y_last);

            ForwardOptions opts;
            opts.training = true;
            opts.teacher = &y;
            opts.teacher_mask.assign(spec.horizon, 0);
            if (spec.kind == ModelKind::Seq2Seq) {
                for (size_t k = 1; k < spec.horizon; ++k)
                    opts.teacher_mask[k] = (rng_teacher.uniform() < cfg.teacher_forcing) ? 1 : 0;
            }
            opts.dropout_rng = &rng_dropout;

            const Mat pred = model.forward(x, take, y_last, opts, cache.get());
            auto [loss, dpred] = mae_loss(pred, y);
            if (!std::isfinite(loss))
                throw Error("DivergedLoss", "training loss is not finite at epoch " +
                                                std::to_string(epoch));
            abs_sum += loss * static_cast<double>(pred.size());
            n_elems += pred.size();

            const NetworkWeights grads = model.backward(*cache.get(), dpred);
            adam_step(model.mutable_weights(), grads, adam);
        }

        const double train_mae = abs_sum / static_cast<double>(n_elems);
        const double val_mae = eval_pass(model, windows, val_idx, cfg.eval_batch, nullptr);
        result.trace.push_back({epoch, train_mae, val_mae});

        if (!val_idx.empty()) {
            if (val_mae < best_val) {
                best_val = val_mae;
                best = model.weights();
                best_epoch = epoch;
                stale = 0;
            } else {
                ++stale;
                if (stale >= cfg.patience) break;
            }
        }
    }

    if (!val_idx.empty() && best_epoch > 0) {
        result.weights = std::move(best);
        result.best_epoch = best_epoch;
        result.best_val_mae = best_val;
    } else {
        result.weights = model.weights();
        result.best_epoch = result.trace.size();
        result.best_val_mae = result.trace.empty() ? std::numeric_limits<double>::infinity()
                                                   : result.trace.back().val_mae;
    }
    return result;
}

std::vector<double> fine_tune(const ModelSpec& spec, NetworkWeights& weights,
                              const WindowArray& windows, const std::vector<uint32_t>& idx,
                              const TrainConfig& cfg, uint64_t seed) {
    spec.validate();
    if (idx.empty()) throw Error("NoData", "no fine-tune windows");
    std::vector<double> epoch_mae;
    if (cfg.max_epochs == 0) return epoch_mae;

    Rng rng_shuffle(derive_seed(seed, 1));
    Rng rng_dropout(derive_seed(seed, 2));
    Rng rng_teacher(derive_seed(seed, 3));

    Seq2SeqModel model(spec, std::move(weights));
    AdamState adam = AdamState::init(model.weights(), cfg.learning_rate);
    CacheHolder cache;

    std::vector<uint32_t> order(idx);
    Mat x, y;
    std::vector<double> y_last;
    for (size_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        rng_shuffle.shuffle(order);
        double abs_sum = 0.0;
        size_t n_elems = 0;
        for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            const size_t take = std::min(cfg.batch_size, order.size() - pos);
            std::vector<uint32_t> chunk(order.begin() + pos, order.begin() + pos + take);
            gather_batch(windows, chunk, x, y, y_last);

            ForwardOptions opts;
            opts.training = true;
            opts.teacher = &y;
            opts.teacher_mask.assign(spec.horizon, 0);
            if (spec.kind == ModelKind::Seq2Seq) {
                for (size_t k = 1; k < spec.horizon; ++k)
                    opts.teacher_mask[k] = (rng_teacher.uniform() < cfg.teacher_forcing) ? 1 : 0;
            }
            opts.dropout_rng = &rng_dropout;

            const Mat pred = model.forward(x, take, y_last, opts, cache.get());
            auto [loss, dpred] = mae_loss(pred, y);
            if (!std::isfinite(loss)) throw Error("DivergedLoss", "fine-tune loss is not finite");
            abs_sum += loss * static_cast<double>(pred.size());
            n_elems += pred.size();

            const NetworkWeights grads = model.backward(*cache.get(), dpred);
            adam_step(model.mutable_weights(), grads, adam);
        }
        epoch_mae.push_back(abs_sum / static_cast<double>(n_elems));
    }
    weights = std::move(model.mutable_weights());
    return epoch_mae;
}

// ============================================================================
// Model file
// ============================================================================

namespace {

json spec_to_json(const ModelSpec& spec) {
    json j;
    j["kind"] = (spec.kind == ModelKind::Seq2Seq) ? "seq2seq" : "direct";
    j["input_dim"] = spec.input_dim;
    j["encoder_units"] = spec.encoder_units;
    j["decoder_units"] = spec.decoder_units;
    j["dense_units"] = spec.dense_units;
    j["dropout_rate"] = spec.dropout_rate;
    j["look_back"] = spec.look_back;
    j["horizon"] = spec.horizon;
    j["output_dim"] = spec.output_dim;
    return j;
}

ModelSpec spec_from_json(const json& j) {
    ModelSpec s;
    s.kind = (j.at("kind").get<std::string>() == "direct") ? ModelKind::Direct : ModelKind::Seq2Seq;
    s.input_dim = j.at("input_dim").get<size_t>();
    s.encoder_units = j.at("encoder_units").get<std::vector<size_t>>();
    s.decoder_units = j.at("decoder_units").get<std::vector<size_t>>();
    s.dense_units = j.at("dense_units").get<std::vector<size_t>>();
    s.dropout_rate = j.at("dropout_rate").get<double>();
    s.look_back = j.at("look_back").get<size_t>();
    s.horizon = j.at("horizon").get<size_t>();
    s.output_dim = j.at("output_dim").get<size_t>();
    return s;
}

}  // namespace

std::string ModelFile::to_json() const {
    json j;
    j["format_version"] = 1;
    j["spec"] = spec_to_json(spec);
    j["preprocess_fingerprint"] = preprocess_fingerprint;
    j["config_hash"] = config_hash;
    j["feature_names"] = feature_names;
    j["validation_mae"] = validation_mae;
    j["base_learning_rate"] = base_learning_rate;
    j["blocks"] = json::array();
    weights.visit([&](const std::string& name, const Mat& m) {
        json blk;
        blk["name"] = name;
        blk["rows"] = m.rows;
        blk["cols"] = m.cols;
        // little-endian f64 payload
        blk["f64_le_b64"] = base64_encode(m.v.data(), m.v.size() * sizeof(double));
        j["blocks"].push_back(std::move(blk));
    });
    return j.dump(2);
}

ModelFile ModelFile::from_json(const std::string& text) {
    json j = json::parse(text);
    ModelFile f;
    f.spec = spec_from_json(j.at("spec"));
    f.preprocess_fingerprint = j.at("preprocess_fingerprint").get<std::string>();
    f.config_hash = j.value("config_hash", "");
    f.feature_names = j.at("feature_names").get<std::vector<std::string>>();
    f.validation_mae = j.at("validation_mae").is_null()
                           ? std::numeric_limits<double>::quiet_NaN()
                           : j.at("validation_mae").get<double>();
    f.base_learning_rate = j.at("base_learning_rate").get<double>();
    f.weights = NetworkWeights::zeros(f.spec);

    std::map<std::string, const json*> by_name;
    for (const auto& blk : j.at("blocks")) by_name[blk.at("name").get<std::string>()] = &blk;
    f.weights.visit([&](const std::string& name, Mat& m) {
        auto it = by_name.find(name);
        if (it == by_name.end()) throw Error("MalformedModel", "missing weight block " + name);
        const json& blk = *it->second;
        if (blk.at("rows").get<size_t>() != m.rows || blk.at("cols").get<size_t>() != m.cols)
            throw Error("MalformedModel", "block shape mismatch for " + name);
        const auto bytes = base64_decode(blk.at("f64_le_b64").get<std::string>());
        if (bytes.size() != m.v.size() * sizeof(double))
            throw Error("MalformedModel", "block payload size mismatch for " + name);
        std::memcpy(m.v.data(), bytes.data(), bytes.size());
    });
    return f;
}

void ModelFile::save(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << to_json() << "\n";
}

ModelFile ModelFile::load(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("MissingArtifact", "model file not found: " + path);
    std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return from_json(text);
}

void write_trace_csv(const std::vector<EpochStats>& trace, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << "epoch,train_mae,val_mae\n";
    for (const auto& e : trace)
        out << e.epoch << "," << format_double(e.train_mae) << "," << format_double(e.val_mae)
            << "\n";
}

}  // namespace flowcast::nn
