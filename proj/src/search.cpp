#include "flowcast/search.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>

namespace flowcast::search {

// ============================================================================
// Space
// ============================================================================

Dim Dim::continuous(std::string name, double lo, double hi) {
    Dim d;
    d.name = std::move(name);
    d.kind = Kind::Continuous;
    d.lo = lo;
    d.hi = hi;
    return d;
}

Dim Dim::log_continuous(std::string name, double lo, double hi) {
    if (lo <= 0 || hi <= lo) throw Error("ConfigInvalid", "log dimension needs 0 < lo < hi");
    Dim d;
    d.name = std::move(name);
    d.kind = Kind::LogContinuous;
    d.lo = lo;
    d.hi = hi;
    return d;
}

Dim Dim::discrete(std::string name, std::vector<double> choices) {
    if (choices.empty()) throw Error("ConfigInvalid", "discrete dimension needs choices");
    Dim d;
    d.name = std::move(name);
    d.kind = Kind::Discrete;
    d.choices = std::move(choices);
    return d;
}

std::vector<double> round_unit(const Space& space, const std::vector<double>& u) {
    if (u.size() != space.size()) throw Error("ShapeMismatch", "point dimension mismatch");
    std::vector<double> out(u);
    for (size_t i = 0; i < space.dims.size(); ++i) {
        const Dim& d = space.dims[i];
        if (d.kind == Dim::Kind::Discrete) {
            const size_t n = d.choices.size();
            if (n == 1) {
                out[i] = 0.0;
                continue;
            }
            // scaled-integer encoding: grid points at k/(n-1)
            double idx = std::round(std::clamp(u[i], 0.0, 1.0) * static_cast<double>(n - 1));
            out[i] = idx / static_cast<double>(n - 1);
        } else {
            out[i] = std::clamp(u[i], 0.0, 1.0);
        }
    }
    return out;
}

std::vector<double> decode(const Space& space, const std::vector<double>& u) {
    if (u.size() != space.size()) throw Error("ShapeMismatch", "point dimension mismatch");
    std::vector<double> out(u.size());
    for (size_t i = 0; i < space.dims.size(); ++i) {
        const Dim& d = space.dims[i];
        switch (d.kind) {
            case Dim::Kind::Continuous:
                out[i] = d.lo + (d.hi - d.lo) * std::clamp(u[i], 0.0, 1.0);
                break;
            case Dim::Kind::LogContinuous:
                out[i] = std::exp(std::log(d.lo) +
                                  (std::log(d.hi) - std::log(d.lo)) * std::clamp(u[i], 0.0, 1.0));
                break;
            case Dim::Kind::Discrete: {
                const size_t n = d.choices.size();
                const size_t idx = (n == 1)
                                       ? 0
                                       : static_cast<size_t>(std::llround(
                                             std::clamp(u[i], 0.0, 1.0) * static_cast<double>(n - 1)));
                out[i] = d.choices[std::min(idx, n - 1)];
                break;
            }
        }
    }
    return out;
}

void SearchTrace::append(TraceEntry e) {
    entries.push_back(std::move(e));
    if (entries.size() == 1 || entries.back().objective < entries[incumbent_index].objective)
        incumbent_index = entries.size() - 1;
}

void SearchTrace::save_csv(const Space& space, const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << "index";
    for (const auto& d : space.dims) out << "," << d.name;
    out << ",objective,wall_s,seed,is_incumbent\n";
    for (size_t i = 0; i < entries.size(); ++i) {
        out << i;
        for (double p : entries[i].params) out << "," << format_double(p);
        out << "," << format_double(entries[i].objective) << "," << format_double(entries[i].wall_s)
            << "," << entries[i].seed << "," << (i == incumbent_index ? 1 : 0) << "\n";
    }
}

// ============================================================================
// Random search
// ============================================================================

namespace {

std::vector<double> sample_unit(const Space& space, Rng& rng) {
    std::vector<double> u(space.size());
    for (double& v : u) v = rng.uniform();
    return round_unit(space, u);
}

double now_seconds() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch())
        .count();
}

}  // namespace

SearchTrace random_search(const Space& space, size_t budget, const Objective& objective,
                          uint64_t seed) {
    if (budget == 0) throw Error("ZeroBudget", "random search needs budget >= 1");
    Rng rng(derive_seed(seed, 0xA11CE));
    SearchTrace trace;
    for (size_t i = 0; i < budget; ++i) {
        TraceEntry e;
        e.unit = sample_unit(space, rng);
        e.params = decode(space, e.unit);
        e.seed = derive_seed(seed, i);
        const double t0 = now_seconds();
        e.objective = objective(e.params, e.seed);
        e.wall_s = now_seconds() - t0;
        trace.append(std::move(e));
    }
    return trace;
}

// ============================================================================
// Gaussian process
// ============================================================================

Gp::Gp(double length_scale, double signal_var, double noise_var)
    : length_scale_(length_scale), signal_var_(signal_var), noise_var_(noise_var) {}

double Gp::kernel(const std::vector<double>& a, const std::vector<double>& b) const {
    double d2 = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        d2 += d * d;
    }
    return signal_var_ * std::exp(-0.5 * d2 / (length_scale_ * length_scale_));
}

void Gp::fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.empty()) throw Error("ShapeMismatch", "GP fit inputs disagree");
    x_ = x;
    const size_t n = x.size();

    // standardized targets keep the fixed kernel scale reasonable
    y_mean_ = 0;
    for (double v : y) y_mean_ += v;
    y_mean_ /= static_cast<double>(n);
    double var = 0;
    for (double v : y) var += (v - y_mean_) * (v - y_mean_);
    var /= static_cast<double>(n);
    y_scale_ = (var > 0) ? std::sqrt(var) : 1.0;

    std::vector<double> yt(n);
    for (size_t i = 0; i < n; ++i) yt[i] = (y[i] - y_mean_) / y_scale_;

    std::vector<std::vector<double>> k(n, std::vector<double>(n));
    for (size_t i = 0; i < n; ++i)
        for (size_t j = 0; j <= i; ++j) k[i][j] = k[j][i] = kernel(x[i], x[j]);

    // Cholesky with jitter escalation
    const double jitters[] = {0.0, 1e-10, 1e-8, 1e-6, 1e-4};
    bool ok = false;
    for (double jitter : jitters) {
        chol_.assign(n, std::vector<double>(n, 0.0));
        ok = true;
        for (size_t i = 0; i < n && ok; ++i) {
            for (size_t j = 0; j <= i; ++j) {
                double sum = k[i][j];
                if (i == j) sum += noise_var_ + jitter;
                for (size_t p = 0; p < j; ++p) sum -= chol_[i][p] * chol_[j][p];
                if (i == j) {
                    if (sum <= 0) {
                        ok = false;
                        break;
                    }
                    chol_[i][i] = std::sqrt(sum);
                } else {
                    chol_[i][j] = sum / chol_[j][j];
                }
            }
        }
        if (ok) break;
    }
    if (!ok) throw Error("SingularKernel", "GP kernel matrix is not positive definite");

    // alpha = K^{-1} y via two triangular solves
    std::vector<double> z(n);
    for (size_t i = 0; i < n; ++i) {
        double sum = yt[i];
        for (size_t p = 0; p < i; ++p) sum -= chol_[i][p] * z[p];
        z[i] = sum / chol_[i][i];
    }
    alpha_.assign(n, 0.0);
    for (size_t i = n; i-- > 0;) {
        double sum = z[i];
        for (size_t p = i + 1; p < n; ++p) sum -= chol_[p][i] * alpha_[p];
        alpha_[i] = sum / chol_[i][i];
    }
}

std::pair<double, double> Gp::predict(const std::vector<double>& x) const {
    const size_t n = x_.size();
    std::vector<double> ks(n);
    for (size_t i = 0; i < n; ++i) ks[i] = kernel(x, x_[i]);

    double mu = 0;
    for (size_t i = 0; i < n; ++i) mu += ks[i] * alpha_[i];

    // v = L^{-1} k*; var = k** - v'v
    std::vector<double> v(n);
    for (size_t i = 0; i < n; ++i) {
        double sum = ks[i];
        for (size_t p = 0; p < i; ++p) sum -= chol_[i][p] * v[p];
        v[i] = sum / chol_[i][i];
    }
    double var = kernel(x, x);
    for (size_t i = 0; i < n; ++i) var -= v[i] * v[i];
    var = std::max(0.0, var);

    return {mu * y_scale_ + y_mean_, var * y_scale_ * y_scale_};
}

double expected_improvement(double mu, double var, double best, double xi) {
    const double sigma = std::sqrt(std::max(0.0, var));
    const double imp = best - mu - xi;
    if (sigma < 1e-15) return std::max(imp, 0.0) > 0 ? imp : 0.0;
    const double z = imp / sigma;
    const double cdf = 0.5 * std::erfc(-z / std::sqrt(2.0));
    const double pdf = std::exp(-0.5 * z * z) / std::sqrt(2.0 * M_PI);
    const double ei = imp * cdf + sigma * pdf;
    return std::max(0.0, ei);
}

// ============================================================================
// Bayesian search
// ============================================================================

SearchTrace bayesian_search(const Space& space, size_t budget, const Objective& objective,
                            uint64_t seed, const BayesConfig& cfg) {
    if (budget == 0) throw Error("ZeroBudget", "bayesian search needs budget >= 1");
    if (cfg.init_points < 2) throw Error("ConfigInvalid", "need init_points >= 2");
    if (budget <= cfg.init_points)
        throw Error("ConfigInvalid", "budget must exceed init_points");

    Rng rng(derive_seed(seed, 0xBA7E5));
    SearchTrace trace;

    auto already_evaluated = [&](const std::vector<double>& unit) {
        for (const auto& e : trace.entries) {
            double d2 = 0;
            for (size_t i = 0; i < unit.size(); ++i) {
                const double d = e.unit[i] - unit[i];
                d2 += d * d;
            }
            if (d2 < 1e-18) return true;
        }
        return false;
    };

    auto evaluate = [&](std::vector<double> unit) {
        TraceEntry e;
        e.unit = std::move(unit);
        e.params = decode(space, e.unit);
        e.seed = derive_seed(seed, trace.entries.size());
        const double t0 = now_seconds();
        e.objective = objective(e.params, e.seed);
        e.wall_s = now_seconds() - t0;
        trace.append(std::move(e));
    };

    // seed evaluations: duplicate rounded candidates are re-sampled
    for (size_t i = 0; i < cfg.init_points && trace.entries.size() < budget; ++i) {
        std::vector<double> u = sample_unit(space, rng);
        for (int tries = 0; tries < 256 && already_evaluated(u); ++tries) u = sample_unit(space, rng);
        evaluate(std::move(u));
    }

    while (trace.entries.size() < budget) {
        std::vector<std::vector<double>> xs;
        std::vector<double> ys;
        for (const auto& e : trace.entries) {
            xs.push_back(e.unit);
            ys.push_back(e.objective);
        }
        Gp gp(cfg.length_scale, cfg.signal_var, cfg.noise_var);
        gp.fit(xs, ys);
        const double best = trace.incumbent_objective();

        std::vector<double> chosen;
        double best_ei = -1.0;
        for (size_t c = 0; c < cfg.candidate_pool; ++c) {
            std::vector<double> u = sample_unit(space, rng);
            for (int tries = 0; tries < 16 && already_evaluated(u); ++tries) u = sample_unit(space, rng);
            if (already_evaluated(u)) continue;
            const auto [mu, var] = gp.predict(u);
            const double ei = expected_improvement(mu, var, best, cfg.ei_xi);
            if (ei > best_ei) {
                best_ei = ei;
                chosen = std::move(u);
            }
        }
        if (chosen.empty()) chosen = sample_unit(space, rng);  // pool exhausted by duplicates
        evaluate(std::move(chosen));
    }
    return trace;
}

// ============================================================================
// Model search
// ============================================================================

Space model_search_space() {
    Space s;
    s.dims.push_back(Dim::discrete("encoder_layers", {1, 2, 3}));
    s.dims.push_back(Dim::discrete("decoder_layers", {1, 2, 3}));
    s.dims.push_back(Dim::discrete("lstm_units", {32, 64, 128, 256}));
    s.dims.push_back(Dim::discrete("dense_layers", {0, 1, 2}));
    s.dims.push_back(Dim::discrete("dense_units", {16, 32, 64}));
    s.dims.push_back(Dim::log_continuous("learning_rate", 1e-4, 1e-2));
    s.dims.push_back(Dim::continuous("dropout", 0.0, 0.5));
    return s;
}

Candidate candidate_from_params(const std::vector<double>& params, size_t input_dim,
                                size_t look_back, size_t horizon) {
    if (params.size() != 7) throw Error("ShapeMismatch", "model candidate needs 7 parameters");
    Candidate c;
    const size_t enc_layers = static_cast<size_t>(params[0]);
    const size_t dec_layers = static_cast<size_t>(params[1]);
    const size_t units = static_cast<size_t>(params[2]);
    const size_t dense_layers = static_cast<size_t>(params[3]);
    const size_t dense_units = static_cast<size_t>(params[4]);

    c.spec.kind = nn::ModelKind::Seq2Seq;
    c.spec.input_dim = input_dim;
    c.spec.encoder_units.assign(enc_layers, units);
    c.spec.decoder_units.assign(dec_layers, units);
    c.spec.dense_units.assign(dense_layers, dense_units);
    c.spec.dropout_rate = params[6];
    c.spec.look_back = look_back;
    c.spec.horizon = horizon;
    c.spec.output_dim = 1;
    c.learning_rate = params[5];
    c.spec.validate();
    return c;
}

nn::TrainResult retrain_final(const nn::ModelSpec& spec, double learning_rate,
                              const nn::WindowArray& windows,
                              const std::vector<uint32_t>& train_idx,
                              const std::vector<uint32_t>& val_idx, size_t max_epochs,
                              size_t patience, size_t batch_size, double teacher_forcing,
                              uint64_t seed) {
    nn::TrainConfig cfg;
    cfg.learning_rate = learning_rate;
    cfg.batch_size = batch_size;
    cfg.max_epochs = max_epochs;
    cfg.patience = patience;
    cfg.teacher_forcing = teacher_forcing;

    // stage A: early-stopped fit on train picks the epoch budget
    nn::TrainResult probe = nn::train(spec, windows, train_idx, val_idx, cfg, seed);
    const size_t budgeted = std::max<size_t>(1, probe.best_epoch);

    // stage B: fresh fit on train+val for exactly that many epochs
    std::vector<uint32_t> merged(train_idx);
    merged.insert(merged.end(), val_idx.begin(), val_idx.end());
    std::sort(merged.begin(), merged.end());
    nn::TrainConfig final_cfg = cfg;
    final_cfg.max_epochs = budgeted;
    final_cfg.patience = budgeted + 1;  // no early stop
    nn::TrainResult fit = nn::train(spec, windows, merged, {}, final_cfg, derive_seed(seed, 7));
    fit.best_val_mae = nn::evaluate_mae(spec, fit.weights, windows, val_idx);
    fit.best_epoch = budgeted;
    return fit;
}

PipelineSearchResult run_pipeline_search(const nn::WindowArray& windows,
                                         const std::vector<uint32_t>& train_idx,
                                         const std::vector<uint32_t>& val_idx,
                                         const PipelineSearchConfig& cfg, uint64_t seed) {
    if (train_idx.empty() || val_idx.empty())
        throw Error("NoData", "pipeline search needs train and validation windows");

    const Space space = model_search_space();

    Objective objective = [&](const std::vector<double>& params, uint64_t cand_seed) -> double {
        const Candidate cand =
            candidate_from_params(params, windows.features, windows.look_back, windows.horizon);
        nn::TrainConfig tc;
        tc.learning_rate = cand.learning_rate;
        tc.batch_size = cfg.batch_size;
        tc.max_epochs = cfg.candidate_epoch_cap;
        tc.patience = cfg.candidate_patience;
        tc.teacher_forcing = cfg.teacher_forcing;
        try {
            const nn::TrainResult r = nn::train(cand.spec, windows, train_idx, val_idx, tc, cand_seed);
            return r.best_val_mae;
        } catch (const Error& e) {
            if (e.kind() == "DivergedLoss") return std::numeric_limits<double>::infinity();
            throw;
        }
    };

    BayesConfig bc = cfg.bayes;
    bc.init_points = cfg.init_points;
    SearchTrace trace = bayesian_search(space, cfg.budget, objective, seed, bc);

    PipelineSearchResult result;
    result.best = candidate_from_params(trace.incumbent().params, windows.features,
                                        windows.look_back, windows.horizon);
    result.trace = std::move(trace);
    result.trained = retrain_final(result.best.spec, result.best.learning_rate, windows, train_idx,
                                   val_idx, cfg.retrain_epochs, cfg.retrain_patience, cfg.batch_size,
                                   cfg.teacher_forcing, derive_seed(seed, 0xF17AA));
    result.validation_mae = result.trained.best_val_mae;
    return result;
}

}  // namespace flowcast::search
