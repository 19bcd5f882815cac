#include "flowcast/telemetry.hpp"

#include <algorithm>
#include <cstdio>
#include <ctime>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace flowcast::ingest {

using nlohmann::json;

std::string to_string(NetworkMode m) {
    switch (m) {
        case NetworkMode::FourG: return "4G";
        case NetworkMode::FiveG: return "5G";
        case NetworkMode::Other: return "OTHER";
    }
    return "OTHER";
}

std::string to_string(DownloadState s) {
    return s == DownloadState::Downloading ? "D" : "I";
}

std::string to_string(Application a) {
    return a == Application::Streaming ? "streaming" : "downloading";
}

std::string to_string(Mobility m) {
    switch (m) {
        case Mobility::Static: return "static";
        case Mobility::Driving: return "driving";
        case Mobility::Merged: return "merged";
    }
    return "static";
}

NetworkMode parse_network_mode(const std::string& token) {
    std::string t;
    t.reserve(token.size());
    for (char c : token) t.push_back(static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
    if (t.find("5G") != std::string::npos || t.find("NR") != std::string::npos) return NetworkMode::FiveG;
    if (t.find("4G") != std::string::npos || t.find("LTE") != std::string::npos) return NetworkMode::FourG;
    return NetworkMode::Other;
}

Application parse_application(const std::string& token) {
    std::string t;
    for (char c : token) t.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
    if (t == "streaming" || t == "stream") return Application::Streaming;
    if (t == "downloading" || t == "download") return Application::Downloading;
    throw Error("ConfigInvalid", "unknown application tag '" + token + "'");
}

std::vector<std::pair<size_t, size_t>> SessionDataset::segments() const {
    std::vector<std::pair<size_t, size_t>> out;
    for (size_t i = 0; i < segment_starts.size(); ++i) {
        const size_t begin = segment_starts[i];
        const size_t end = (i + 1 < segment_starts.size()) ? segment_starts[i + 1] : records.size();
        if (begin < end) out.emplace_back(begin, end);
    }
    return out;
}

const std::vector<std::string>& canonical_columns() {
    static const std::vector<std::string> cols = {
        "timestamp",  "longitude", "latitude",  "speed",    "operator_name", "network_mode",
        "node_hex",   "lac_hex",   "cell_id",   "cell_hex", "cell_raw",      "state",
        "dl_bitrate", "ul_bitrate", "ping_avg", "ping_min", "ping_max",      "ping_std",
        "ping_loss",  "cqi",       "snr",       "rssi",     "rsrp",          "rsrq",
        "nrx_rsrp",   "nrx_rsrq"};
    return cols;
}

Schema Schema::canonical() {
    Schema s;
    for (const auto& c : canonical_columns()) s.header_for[c] = c;
    return s;
}

Schema Schema::gnettrack() {
    Schema s;
    s.header_for = {
        {"timestamp", "Timestamp"},   {"longitude", "Longitude"}, {"latitude", "Latitude"},
        {"speed", "Speed"},           {"operator_name", "Operatorname"},
        {"network_mode", "NetworkMode"}, {"node_hex", "NODEHEX"},  {"lac_hex", "LACHEX"},
        {"cell_id", "CellID"},        {"cell_hex", "CELLHEX"},    {"cell_raw", "RAWCELLID"},
        {"state", "State"},           {"dl_bitrate", "DL_bitrate"}, {"ul_bitrate", "UL_bitrate"},
        {"ping_avg", "PINGAVG"},      {"ping_min", "PINGMIN"},    {"ping_max", "PINGMAX"},
        {"ping_std", "PINGSTDEV"},    {"ping_loss", "PINGLOSS"},  {"cqi", "CQI"},
        {"snr", "SNR"},               {"rssi", "RSSI"},           {"rsrp", "RSRP"},
        {"rsrq", "RSRQ"},             {"nrx_rsrp", "NRxRSRP"},    {"nrx_rsrq", "NRxRSRQ"}};
    return s;
}

Schema Schema::from_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("MissingArtifact", "schema file not found: " + path);
    json j;
    in >> j;
    Schema s = canonical();
    for (auto& [key, value] : j.items()) {
        if (s.header_for.find(key) == s.header_for.end())
            throw Error("ConfigInvalid", "schema maps unknown column '" + key + "'");
        s.header_for[key] = value.get<std::string>();
    }
    return s;
}

namespace {

std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> cells;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            cells.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    cells.push_back(cur);
    return cells;
}

bool cell_missing(const std::string& cell) { return cell.empty() || cell == "-"; }

// Accepts plain epoch seconds or the trace-log form YYYY.MM.DD_HH.MM.SS (UTC).
bool parse_timestamp(const std::string& cell, double& out) {
    if (parse_double(cell, out)) return true;
    int y, mo, d, h, mi, s;
    if (std::sscanf(cell.c_str(), "%d.%d.%d_%d.%d.%d", &y, &mo, &d, &h, &mi, &s) == 6) {
        std::tm tm{};
        tm.tm_year = y - 1900;
        tm.tm_mon = mo - 1;
        tm.tm_mday = d;
        tm.tm_hour = h;
        tm.tm_min = mi;
        tm.tm_sec = s;
        const time_t t = timegm(&tm);
        if (t == static_cast<time_t>(-1)) return false;
        out = static_cast<double>(t);
        return true;
    }
    return false;
}

struct ColumnIndex {
    // canonical name -> column position, or npos when that column is absent
    std::map<std::string, size_t> pos;

    bool has(const std::string& name) const { return pos.count(name) > 0; }
    const std::string* cell(const std::vector<std::string>& cells, const std::string& name) const {
        auto it = pos.find(name);
        if (it == pos.end() || it->second >= cells.size()) return nullptr;
        return &cells[it->second];
    }
};

std::optional<double> parse_optional(const ColumnIndex& idx, const std::vector<std::string>& cells,
                                     const std::string& name, size_t line_no) {
    const std::string* cell = idx.cell(cells, name);
    if (cell == nullptr || cell_missing(*cell)) return std::nullopt;
    double v;
    if (!parse_double(*cell, v))
        throw Error("MalformedRow",
                    "line " + std::to_string(line_no) + ": " + name + " not numeric ('" + *cell + "')");
    return v;
}

std::string parse_category(const ColumnIndex& idx, const std::vector<std::string>& cells,
                           const std::string& name) {
    const std::string* cell = idx.cell(cells, name);
    if (cell == nullptr || cell_missing(*cell)) return "";
    return *cell;
}

}  // namespace

SessionDataset parse_csv(const std::string& path, const Schema& schema, const ParseOptions& opts) {
    std::ifstream in(path);
    if (!in) throw Error("MissingArtifact", "input file not found: " + path);

    std::string line;
    if (!std::getline(in, line)) throw Error("EmptyFile", path + " has no header row");
    const std::vector<std::string> header = split_line(line);

    ColumnIndex idx;
    for (const auto& [canon, hdr] : schema.header_for) {
        auto it = std::find(header.begin(), header.end(), hdr);
        if (it != header.end()) idx.pos[canon] = static_cast<size_t>(it - header.begin());
    }
    for (const char* mandatory : {"timestamp", "network_mode", "state", "dl_bitrate"}) {
        if (!idx.has(mandatory))
            throw Error("MissingColumn", std::string(mandatory) + " (header '" +
                                             schema.header_for.at(mandatory) + "') not in " + path);
    }

    SessionDataset ds;
    ds.application = opts.application;
    ds.mobility = opts.mobility;
    ds.source_files = {path};

    size_t line_no = 1;
    double prev_ts = -std::numeric_limits<double>::infinity();
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty() || line == "\r") continue;
        const std::vector<std::string> cells = split_line(line);

        TelemetryRecord rec;
        const std::string* ts_cell = idx.cell(cells, "timestamp");
        if (ts_cell == nullptr || cell_missing(*ts_cell) || !parse_timestamp(*ts_cell, rec.timestamp))
            throw Error("MalformedRow", "line " + std::to_string(line_no) + ": bad timestamp");
        if (rec.timestamp < prev_ts)
            throw Error("MalformedRow",
                        "line " + std::to_string(line_no) + ": timestamp decreased within session");

        const std::string* state_cell = idx.cell(cells, "state");
        if (state_cell == nullptr || cell_missing(*state_cell))
            throw Error("MalformedRow", "line " + std::to_string(line_no) + ": state missing");
        if (*state_cell == "D")
            rec.state = DownloadState::Downloading;
        else if (*state_cell == "I")
            rec.state = DownloadState::Idle;
        else
            throw Error("MalformedRow",
                        "line " + std::to_string(line_no) + ": state must be 'I' or 'D', got '" +
                            *state_cell + "'");

        const std::string* dl_cell = idx.cell(cells, "dl_bitrate");
        if (dl_cell == nullptr || cell_missing(*dl_cell))
            throw Error("MalformedRow", "line " + std::to_string(line_no) + ": dl_bitrate missing");
        if (!parse_double(*dl_cell, rec.dl_bitrate))
            throw Error("MalformedRow", "line " + std::to_string(line_no) + ": dl_bitrate not numeric");
        if (rec.dl_bitrate < 0)
            throw Error("MalformedRow", "line " + std::to_string(line_no) + ": dl_bitrate negative");

        rec.network_mode = parse_network_mode(parse_category(idx, cells, "network_mode"));
        rec.operator_name = parse_category(idx, cells, "operator_name");
        rec.node_hex = parse_category(idx, cells, "node_hex");
        rec.lac_hex = parse_category(idx, cells, "lac_hex");
        rec.cell_id = parse_category(idx, cells, "cell_id");
        rec.cell_hex = parse_category(idx, cells, "cell_hex");
        rec.cell_raw = parse_category(idx, cells, "cell_raw");

        rec.longitude = parse_optional(idx, cells, "longitude", line_no);
        rec.latitude = parse_optional(idx, cells, "latitude", line_no);
        rec.speed = parse_optional(idx, cells, "speed", line_no);
        rec.ul_bitrate = parse_optional(idx, cells, "ul_bitrate", line_no);
        if (rec.ul_bitrate && *rec.ul_bitrate < 0)
            throw Error("MalformedRow", "line " + std::to_string(line_no) + ": ul_bitrate negative");
        rec.ping_avg = parse_optional(idx, cells, "ping_avg", line_no);
        rec.ping_min = parse_optional(idx, cells, "ping_min", line_no);
        rec.ping_max = parse_optional(idx, cells, "ping_max", line_no);
        rec.ping_std = parse_optional(idx, cells, "ping_std", line_no);
        rec.ping_loss = parse_optional(idx, cells, "ping_loss", line_no);
        rec.cqi = parse_optional(idx, cells, "cqi", line_no);
        rec.snr = parse_optional(idx, cells, "snr", line_no);
        rec.rssi = parse_optional(idx, cells, "rssi", line_no);
        rec.rsrp = parse_optional(idx, cells, "rsrp", line_no);
        rec.rsrq = parse_optional(idx, cells, "rsrq", line_no);
        rec.nrx_rsrp = parse_optional(idx, cells, "nrx_rsrp", line_no);
        rec.nrx_rsrq = parse_optional(idx, cells, "nrx_rsrq", line_no);

        // duplicate timestamp: keep the last row (log-append semantics)
        if (!ds.records.empty() && ds.records.back().timestamp == rec.timestamp)
            ds.records.back() = rec;
        else
            ds.records.push_back(rec);
        prev_ts = rec.timestamp;
    }

    if (ds.records.empty()) throw Error("EmptyFile", path + " has a header but no data rows");

    const NetworkMode first = ds.records.front().network_mode;
    const bool uniform = std::all_of(ds.records.begin(), ds.records.end(),
                                     [&](const TelemetryRecord& r) { return r.network_mode == first; });
    ds.network_mode = uniform ? first : NetworkMode::Other;
    ds.segment_starts = {0};
    return ds;
}

namespace {

void append_cell(std::string& out, const std::optional<double>& v) {
    if (v) out += format_double(*v);
}

std::string record_row(const TelemetryRecord& r) {
    std::string out;
    out += format_double(r.timestamp);
    out += ',';
    append_cell(out, r.longitude);
    out += ',';
    append_cell(out, r.latitude);
    out += ',';
    append_cell(out, r.speed);
    out += ',';
    out += r.operator_name;
    out += ',';
    out += to_string(r.network_mode);
    out += ',';
    out += r.node_hex;
    out += ',';
    out += r.lac_hex;
    out += ',';
    out += r.cell_id;
    out += ',';
    out += r.cell_hex;
    out += ',';
    out += r.cell_raw;
    out += ',';
    out += to_string(r.state);
    out += ',';
    out += format_double(r.dl_bitrate);
    out += ',';
    append_cell(out, r.ul_bitrate);
    out += ',';
    append_cell(out, r.ping_avg);
    out += ',';
    append_cell(out, r.ping_min);
    out += ',';
    append_cell(out, r.ping_max);
    out += ',';
    append_cell(out, r.ping_std);
    out += ',';
    append_cell(out, r.ping_loss);
    out += ',';
    append_cell(out, r.cqi);
    out += ',';
    append_cell(out, r.snr);
    out += ',';
    append_cell(out, r.rssi);
    out += ',';
    append_cell(out, r.rsrp);
    out += ',';
    append_cell(out, r.rsrq);
    out += ',';
    append_cell(out, r.nrx_rsrp);
    out += ',';
    append_cell(out, r.nrx_rsrq);
    return out;
}

}  // namespace

std::string canonical_csv_string(const SessionDataset& ds) {
    std::string out;
    const auto& cols = canonical_columns();
    for (size_t i = 0; i < cols.size(); ++i) {
        out += cols[i];
        out += (i + 1 < cols.size()) ? ',' : '\n';
    }
    for (const auto& r : ds.records) {
        out += record_row(r);
        out += '\n';
    }
    return out;
}

void write_canonical_csv(const SessionDataset& ds, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << canonical_csv_string(ds);
}

void write_sidecar_json(const SessionDataset& ds, const std::string& path) {
    json j;
    j["record_count"] = ds.records.size();
    j["time_span_seconds"] = ds.time_span_seconds();
    j["mode"] = to_string(ds.network_mode);
    j["application"] = to_string(ds.application);
    j["mobility"] = to_string(ds.mobility);
    j["segments"] = ds.segment_starts;
    std::ofstream out(path);
    if (!out) throw Error("IoError", "cannot write " + path);
    out << j.dump(2) << "\n";
}

std::map<PartitionKey, SessionDataset> partition(const std::vector<SessionDataset>& datasets) {
    for (const auto& ds : datasets) {
        for (const auto& r : ds.records) {
            if (r.network_mode != ds.network_mode)
                throw Error("ConflictingTags",
                            "dataset from " +
                                (ds.source_files.empty() ? std::string("<memory>") : ds.source_files[0]) +
                                " mixes network modes");
        }
    }

    // deterministic reduction: merge in source-path order, then order segments
    // by first timestamp
    std::vector<const SessionDataset*> ordered;
    ordered.reserve(datasets.size());
    for (const auto& ds : datasets) ordered.push_back(&ds);
    std::stable_sort(ordered.begin(), ordered.end(), [](const SessionDataset* a, const SessionDataset* b) {
        const std::string& pa = a->source_files.empty() ? "" : a->source_files.front();
        const std::string& pb = b->source_files.empty() ? "" : b->source_files.front();
        return pa < pb;
    });

    std::map<PartitionKey, std::vector<const SessionDataset*>> groups;
    for (const SessionDataset* ds : ordered)
        groups[{ds->network_mode, ds->application}].push_back(ds);

    std::map<PartitionKey, SessionDataset> out;
    for (auto& [key, members] : groups) {
        std::stable_sort(members.begin(), members.end(),
                         [](const SessionDataset* a, const SessionDataset* b) {
                             const double ta = a->records.empty() ? 0 : a->records.front().timestamp;
                             const double tb = b->records.empty() ? 0 : b->records.front().timestamp;
                             return ta < tb;
                         });
        SessionDataset merged;
        merged.network_mode = key.mode;
        merged.application = key.application;
        merged.mobility = Mobility::Merged;
        merged.segment_starts.clear();
        for (const SessionDataset* ds : members) {
            for (const auto& f : ds->source_files) merged.source_files.push_back(f);
            for (size_t s : ds->segment_starts) merged.segment_starts.push_back(merged.records.size() + s);
            merged.records.insert(merged.records.end(), ds->records.begin(), ds->records.end());
        }
        if (merged.segment_starts.empty()) merged.segment_starts = {0};
        out.emplace(key, std::move(merged));
    }
    return out;
}

SessionDataset resample_uniform(const SessionDataset& ds, double period_s, double max_gap_s) {
    if (period_s <= 0) throw Error("ConfigInvalid", "resample period must be positive");

    SessionDataset out;
    out.network_mode = ds.network_mode;
    out.application = ds.application;
    out.mobility = ds.mobility;
    out.source_files = ds.source_files;
    out.segment_starts.clear();

    for (const auto& [begin, end] : ds.segments()) {
        size_t i = begin;
        while (i < end) {
            // contiguous run: split whenever an inter-record gap exceeds max_gap
            size_t run_end = i + 1;
            while (run_end < end &&
                   ds.records[run_end].timestamp - ds.records[run_end - 1].timestamp <= max_gap_s)
                ++run_end;

            const double t0 = ds.records[i].timestamp;
            const double t_last = ds.records[run_end - 1].timestamp;
            out.segment_starts.push_back(out.records.size());

            size_t cursor = i;
            for (size_t k = 0;; ++k) {
                const double t = t0 + static_cast<double>(k) * period_s;
                if (t > t_last + 1e-9) break;
                while (cursor + 1 < run_end && ds.records[cursor + 1].timestamp <= t + 1e-9) ++cursor;
                TelemetryRecord rec = ds.records[cursor];  // last observation at or before t
                rec.timestamp = t;
                out.records.push_back(rec);
            }
            i = run_end;
        }
    }
    if (out.segment_starts.empty()) out.segment_starts = {0};
    return out;
}

uint64_t fingerprint(const SessionDataset& ds) {
    return fnv1a64(canonical_csv_string(ds));
}

}  // namespace flowcast::ingest
