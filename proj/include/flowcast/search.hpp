#pragma once

#include <functional>
#include <string>
#include <vector>

#include "flowcast/common.hpp"
#include "flowcast/neural.hpp"

namespace flowcast::search {

// ============================================================================
// Search space
// ============================================================================

struct Dim {
    enum class Kind { Continuous, LogContinuous, Discrete };
    std::string name;
    Kind kind = Kind::Continuous;
    double lo = 0.0, hi = 1.0;     // continuous bounds (lo > 0 for log scale)
    std::vector<double> choices;   // discrete values

    static Dim continuous(std::string name, double lo, double hi);
    static Dim log_continuous(std::string name, double lo, double hi);
    static Dim discrete(std::string name, std::vector<double> choices);
};

struct Space {
    std::vector<Dim> dims;
    size_t size() const { return dims.size(); }
};

// Snap discrete coordinates of a unit-cube point to their grid (used both for
// duplicate detection and as the surrogate input encoding).
std::vector<double> round_unit(const Space& space, const std::vector<double>& u);
// Map a (rounded) unit point to actual parameter values.
std::vector<double> decode(const Space& space, const std::vector<double>& u);

// ============================================================================
// Traces
// ============================================================================

struct TraceEntry {
    std::vector<double> unit;    // rounded unit-cube coordinates
    std::vector<double> params;  // decoded values
    double objective = 0.0;
    double wall_s = 0.0;
    uint64_t seed = 0;
};

struct SearchTrace {
    std::vector<TraceEntry> entries;
    size_t incumbent_index = 0;

    double incumbent_objective() const {
        return entries.empty() ? std::numeric_limits<double>::infinity()
                               : entries[incumbent_index].objective;
    }
    const TraceEntry& incumbent() const { return entries[incumbent_index]; }
    void append(TraceEntry e);
    void save_csv(const Space& space, const std::string& path) const;
};

// objective(decoded values, per-candidate seed) -> value to MINIMIZE
using Objective = std::function<double(const std::vector<double>&, uint64_t)>;

// ============================================================================
// Optimizers
// ============================================================================

SearchTrace random_search(const Space& space, size_t budget, const Objective& objective,
                          uint64_t seed);

struct BayesConfig {
    size_t init_points = 8;
    double length_scale = 0.25;  // in unit-cube coordinates
    double signal_var = 1.0;
    double noise_var = 1e-6;
    size_t candidate_pool = 2048;
    double ei_xi = 0.0;
};

SearchTrace bayesian_search(const Space& space, size_t budget, const Objective& objective,
                            uint64_t seed, const BayesConfig& cfg = {});

// ============================================================================
// Gaussian process surrogate (exposed for property tests)
// ============================================================================

class Gp {
public:
    Gp(double length_scale, double signal_var, double noise_var);

    void fit(const std::vector<std::vector<double>>& x, const std::vector<double>& y);
    // posterior mean and variance at a point
    std::pair<double, double> predict(const std::vector<double>& x) const;

private:
    double kernel(const std::vector<double>& a, const std::vector<double>& b) const;
    double length_scale_, signal_var_, noise_var_;
    std::vector<std::vector<double>> x_;
    std::vector<double> alpha_;
    std::vector<std::vector<double>> chol_;  // lower triangular
    double y_mean_ = 0.0, y_scale_ = 1.0;
};

// EI for minimization given posterior (mu, var) and incumbent best.
double expected_improvement(double mu, double var, double best, double xi = 0.0);

// ============================================================================
// Model/hyperparameter search over the forecaster
// ============================================================================

// Dimensions: encoder layers 1..3, decoder layers 1..3, lstm units
// {32,64,128,256}, dense layers 0..2, dense units {16,32,64}, learning rate
// log [1e-4,1e-2], dropout [0,0.5].
Space model_search_space();

struct Candidate {
    nn::ModelSpec spec;
    double learning_rate = 1e-3;
};

Candidate candidate_from_params(const std::vector<double>& params, size_t input_dim,
                                size_t look_back, size_t horizon);

struct PipelineSearchConfig {
    size_t budget = 30;
    size_t init_points = 8;
    size_t candidate_epoch_cap = 15;
    size_t candidate_patience = 5;
    size_t retrain_epochs = 100;
    size_t retrain_patience = 10;
    size_t batch_size = 32;
    double teacher_forcing = 1.0;
    BayesConfig bayes;
};

struct PipelineSearchResult {
    Candidate best;
    nn::TrainResult trained;  // retrained incumbent
    SearchTrace trace;
    double validation_mae = 0.0;
};

// Searches spec+hyperparameters by candidate validation MAE, then retrains
// the incumbent: a validation-early-stopped fit picks the epoch budget, and a
// fresh fit on train+val runs for exactly that many epochs. Test windows are
// never touched.
PipelineSearchResult run_pipeline_search(const nn::WindowArray& windows,
                                         const std::vector<uint32_t>& train_idx,
                                         const std::vector<uint32_t>& val_idx,
                                         const PipelineSearchConfig& cfg, uint64_t seed);

// The same two-stage retrain protocol used for baselines so comparisons are
// training-budget fair.
nn::TrainResult retrain_final(const nn::ModelSpec& spec, double learning_rate,
                              const nn::WindowArray& windows,
                              const std::vector<uint32_t>& train_idx,
                              const std::vector<uint32_t>& val_idx, size_t max_epochs,
                              size_t patience, size_t batch_size, double teacher_forcing,
                              uint64_t seed);

}  // namespace flowcast::search
