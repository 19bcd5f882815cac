#include "flowcast/synthetic.hpp"

#include <algorithm>
#include <cmath>

namespace flowcast::synth {

using ingest::DownloadState;
using ingest::SessionDataset;
using ingest::TelemetryRecord;

SessionDataset generate(const GeneratorConfig& cfg) {
    if (cfg.seconds == 0) throw Error("ConfigInvalid", "generator needs seconds >= 1");
    Rng rng(derive_seed(cfg.seed, 0x5EED));

    SessionDataset ds;
    ds.network_mode = cfg.mode;
    ds.application = cfg.application;
    ds.mobility = cfg.driving ? ingest::Mobility::Driving : ingest::Mobility::Static;
    ds.source_files = {"synthetic"};
    ds.records.reserve(cfg.seconds);

    // stationary AR(1) coefficients
    const double rho_slow = std::exp(-1.0 / cfg.slow_tau_s);
    const double sig_slow = cfg.slow_std * std::sqrt(1.0 - rho_slow * rho_slow);
    const double rho_fast = std::exp(-1.0 / cfg.fast_tau_s);
    const double sig_fast = cfg.fast_std * std::sqrt(1.0 - rho_fast * rho_fast);

    double slow = cfg.slow_std * rng.normal();
    double fast = cfg.fast_std * rng.normal();
    double phase1 = rng.uniform(0, 2 * M_PI);
    const double phase2 = rng.uniform(0, 2 * M_PI);

    // cell handover every 5-15 minutes among a small pool
    const char* cells[] = {"12A7", "12B3", "130F", "14C2"};
    size_t cell_idx = rng.uniform_index(4);
    double next_handover = rng.uniform(300.0, 900.0);

    double lat = 53.35 + 0.01 * rng.normal();
    double lon = -6.26 + 0.01 * rng.normal();
    double speed = cfg.driving ? rng.uniform(20.0, 80.0) : 0.0;

    // sensor dropout bursts
    size_t ping_gap = 0, nrx_gap = 0;
    const double ping_gap_hazard = cfg.ping_missing / 20.0;  // mean burst 20 s
    const double nrx_gap_hazard = cfg.nrx_missing / 20.0;

    size_t idle_left = 0;
    const double idle_hazard = cfg.idle_fraction > 0 ? cfg.idle_fraction / 40.0 : 0.0;

    for (size_t t = 0; t < cfg.seconds; ++t) {
        slow = rho_slow * slow + sig_slow * rng.normal();
        fast = rho_fast * fast + sig_fast * rng.normal();
        phase1 += cfg.season1_phase_walk * rng.normal();

        const double ts = cfg.start_epoch + static_cast<double>(t);
        const double season =
            cfg.season1_amp * std::sin(2 * M_PI * static_cast<double>(t) / cfg.season1_period_s + phase1) +
            cfg.season2_amp * std::sin(2 * M_PI * static_cast<double>(t) / cfg.season2_period_s + phase2);
        const double hour = std::fmod(ts, 86400.0) / 3600.0;
        const double diurnal = 1.0 + cfg.diurnal_amp * std::sin(2 * M_PI * (hour - 14.0) / 24.0);
        const double z = slow + fast + season;

        double dl = std::exp(std::log(cfg.base_kbps) + z) * diurnal + cfg.noise_kbps * rng.normal();
        dl = std::max(0.0, dl);

        if (idle_left == 0 && idle_hazard > 0 && rng.uniform() < idle_hazard)
            idle_left = 20 + rng.uniform_index(41);
        const bool idle = idle_left > 0;
        if (idle) {
            --idle_left;
            dl = rng.uniform(0.0, 200.0);
        }

        if (static_cast<double>(t) >= next_handover) {
            cell_idx = (cell_idx + 1 + rng.uniform_index(3)) % 4;
            next_handover += rng.uniform(300.0, 900.0);
        }

        if (cfg.driving) {
            speed = std::clamp(speed + 2.0 * rng.normal(), 5.0, 110.0);
            lat += speed * 2.5e-6 * rng.uniform(0.5, 1.0);
            lon += speed * 1.5e-6 * rng.normal();
        } else {
            lat += 1e-6 * rng.normal();
            lon += 1e-6 * rng.normal();
        }

        if (ping_gap == 0 && rng.uniform() < ping_gap_hazard) ping_gap = 10 + rng.uniform_index(21);
        if (nrx_gap == 0 && rng.uniform() < nrx_gap_hazard) nrx_gap = 10 + rng.uniform_index(21);

        TelemetryRecord r;
        r.timestamp = ts;
        r.longitude = lon;
        r.latitude = lat;
        r.speed = speed;
        r.operator_name = "OP_A";
        r.network_mode = cfg.mode;
        r.node_hex = "B1";
        r.lac_hex = "C9";
        r.cell_id = cells[cell_idx];
        r.cell_hex = std::string(cells[cell_idx]) + "F";
        r.cell_raw = std::string("90") + cells[cell_idx];
        r.state = idle ? DownloadState::Idle : DownloadState::Downloading;
        r.dl_bitrate = dl;
        r.ul_bitrate = std::max(0.0, 0.06 * dl + 1500.0 * rng.normal());

        const double snr = 4.0 + 3.5 * z + 0.8 * rng.normal();
        if (rng.uniform() >= cfg.snr_missing) {
            r.snr = snr;
            r.cqi = std::clamp(std::round(7.0 + snr / 2.0 + 0.7 * rng.normal()), 0.0, 15.0);
        }
        r.rsrp = -95.0 + 6.0 * slow + 1.2 * rng.normal();
        r.rssi = *r.rsrp + 25.0 + 0.8 * rng.normal();
        r.rsrq = -11.0 + 1.8 * fast + 0.5 * rng.normal();

        if (nrx_gap > 0) {
            --nrx_gap;
        } else {
            r.nrx_rsrp = *r.rsrp - 8.0 + 2.0 * rng.normal();
            r.nrx_rsrq = *r.rsrq - 1.5 + 1.0 * rng.normal();
        }

        if (ping_gap > 0) {
            --ping_gap;
        } else {
            const double ping = std::clamp(22.0 - 6.0 * z + 2.0 * rng.normal(), 5.0, 200.0);
            r.ping_avg = ping;
            r.ping_min = std::max(1.0, ping - std::abs(2.0 * rng.normal()));
            r.ping_max = ping + std::abs(5.0 * rng.normal());
            r.ping_std = std::abs(2.0 * rng.normal());
            r.ping_loss = (rng.uniform() < 0.02) ? rng.uniform(0.0, 0.1) : 0.0;
        }

        ds.records.push_back(std::move(r));
    }
    return ds;
}

}  // namespace flowcast::synth
