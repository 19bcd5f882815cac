#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "flowcast/common.hpp"

namespace flowcast::ingest {

enum class NetworkMode { FourG, FiveG, Other };
enum class DownloadState { Idle, Downloading };
enum class Application { Streaming, Downloading };
enum class Mobility { Static, Driving, Merged };

std::string to_string(NetworkMode m);
std::string to_string(DownloadState s);
std::string to_string(Application a);
std::string to_string(Mobility m);
NetworkMode parse_network_mode(const std::string& token);
Application parse_application(const std::string& token);

// One telemetry sample. Optional metrics stay absent rather than defaulting
// to zero; zero bitrate is a real signal while a dropped ping probe is not.
struct TelemetryRecord {
    double timestamp = 0.0;  // seconds since epoch
    std::optional<double> longitude;
    std::optional<double> latitude;
    std::optional<double> speed;  // km/h
    std::string operator_name;
    NetworkMode network_mode = NetworkMode::Other;
    std::string node_hex;
    std::string lac_hex;
    std::string cell_id;
    std::string cell_hex;
    std::string cell_raw;
    DownloadState state = DownloadState::Idle;
    double dl_bitrate = 0.0;  // kbps
    std::optional<double> ul_bitrate;
    std::optional<double> ping_avg;
    std::optional<double> ping_min;
    std::optional<double> ping_max;
    std::optional<double> ping_std;
    std::optional<double> ping_loss;
    std::optional<double> cqi;
    std::optional<double> snr;
    std::optional<double> rssi;
    std::optional<double> rsrp;
    std::optional<double> rsrq;
    std::optional<double> nrx_rsrp;
    std::optional<double> nrx_rsrq;

    bool operator==(const TelemetryRecord&) const = default;
};

struct SessionDataset {
    std::vector<TelemetryRecord> records;
    NetworkMode network_mode = NetworkMode::Other;
    Application application = Application::Downloading;
    Mobility mobility = Mobility::Static;
    std::vector<std::string> source_files;
    // Start index of each contiguous segment; resampling and merging maintain
    // this so windowing never spans a measurement break.
    std::vector<size_t> segment_starts = {0};

    size_t size() const { return records.size(); }
    bool empty() const { return records.empty(); }
    double time_span_seconds() const {
        return records.empty() ? 0.0 : records.back().timestamp - records.front().timestamp;
    }
    std::vector<std::pair<size_t, size_t>> segments() const;  // [begin, end) pairs
};

// Canonical column order used by parse/write. A schema maps these names to
// whatever headers a particular trace export uses.
const std::vector<std::string>& canonical_columns();

struct Schema {
    // canonical name -> header cell in the input file
    std::map<std::string, std::string> header_for;

    static Schema canonical();   // identity mapping
    static Schema gnettrack();   // G-NetTrack Pro export headers
    static Schema from_json_file(const std::string& path);
};

struct ParseOptions {
    Application application = Application::Downloading;
    Mobility mobility = Mobility::Static;
};

SessionDataset parse_csv(const std::string& path, const Schema& schema,
                         const ParseOptions& opts = {});

void write_canonical_csv(const SessionDataset& ds, const std::string& path);
std::string canonical_csv_string(const SessionDataset& ds);
void write_sidecar_json(const SessionDataset& ds, const std::string& path);

struct PartitionKey {
    NetworkMode mode;
    Application application;
    bool operator<(const PartitionKey& o) const {
        return std::tie(mode, application) < std::tie(o.mode, o.application);
    }
};

std::map<PartitionKey, SessionDataset> partition(const std::vector<SessionDataset>& datasets);

SessionDataset resample_uniform(const SessionDataset& ds, double period_s, double max_gap_s = 30.0);

// 64-bit content fingerprint of the canonical serialization.
uint64_t fingerprint(const SessionDataset& ds);

}  // namespace flowcast::ingest
