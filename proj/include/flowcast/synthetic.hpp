#pragma once

#include "flowcast/telemetry.hpp"

namespace flowcast::synth {

// Synthetic 1 Hz telemetry resembling the production traces: multiplicative
// log-level with slow and fast autoregressive components, a phase-drifting
// short-period seasonal plus a long-period seasonal, a diurnal multiplier,
// radio metrics correlated with the level, and sensor-dropout gaps.
struct GeneratorConfig {
    size_t seconds = 7200;
    uint64_t seed = 1;
    double start_epoch = 1576483200.0;  // 2019-12-16 08:00:00 UTC
    double base_kbps = 80000.0;

    double slow_tau_s = 600.0;   // slow AR component time constant
    double slow_std = 0.35;
    double fast_tau_s = 45.0;
    double fast_std = 0.15;
    double season1_period_s = 360.0;
    double season1_amp = 0.5;
    double season1_phase_walk = 0.004;  // radians per step
    double season2_period_s = 900.0;
    double season2_amp = 0.25;
    double diurnal_amp = 0.25;
    double noise_kbps = 2000.0;

    double idle_fraction = 0.0;  // expected share of idle time
    bool driving = false;

    double ping_missing = 0.10;
    double nrx_missing = 0.20;
    double snr_missing = 0.02;

    ingest::NetworkMode mode = ingest::NetworkMode::FiveG;
    ingest::Application application = ingest::Application::Downloading;
};

ingest::SessionDataset generate(const GeneratorConfig& cfg);

}  // namespace flowcast::synth
