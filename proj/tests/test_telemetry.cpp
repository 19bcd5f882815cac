#include <doctest.h>

#include <cstdio>
#include <fstream>

#include "flowcast/synthetic.hpp"
#include "flowcast/telemetry.hpp"

using namespace flowcast;
using namespace flowcast::ingest;

namespace {

std::string write_temp(const std::string& name, const std::string& content) {
    const std::string path = std::string("/tmp/flowcast_test_") + name;
    std::ofstream out(path);
    out << content;
    return path;
}

}  // namespace

TEST_CASE("parse_csv maps G-NetTrack style headers") {
    const std::string path = write_temp(
        "gnet.csv",
        "Timestamp,Longitude,Latitude,Speed,Operatorname,CellID,NetworkMode,RSRP,RSRQ,SNR,CQI,RSSI,"
        "DL_bitrate,UL_bitrate,State,NRxRSRP,NRxRSRQ,NODEHEX,LACHEX,CELLHEX,RAWCELLID,PINGAVG,"
        "PINGMIN,PINGMAX,PINGSTDEV,PINGLOSS\n"
        "2019.12.16_08.00.00,-6.26,53.35,0,OP,12A7,NR_NSA,-95,-11,4.5,9,-70,52000,3100,D,-103,-12.5,"
        "B1,C9,12A7F,9012A7,21,18,30,2,0\n"
        "2019.12.16_08.00.01,-6.26,53.35,0,OP,12A7,NR_NSA,-96,-,-,-,-71,49500,2900,I,-,-,B1,C9,"
        "12A7F,9012A7,-,-,-,-,-\n");

    const SessionDataset ds = parse_csv(path, Schema::gnettrack(), {});
    REQUIRE(ds.records.size() == 2);
    CHECK(ds.network_mode == NetworkMode::FiveG);
    CHECK(ds.records[0].state == DownloadState::Downloading);
    CHECK(ds.records[1].state == DownloadState::Idle);
    CHECK(ds.records[0].dl_bitrate == 52000);
    CHECK(ds.records[0].cqi.has_value());
    CHECK(!ds.records[1].cqi.has_value());   // "-" is an explicit missing marker
    CHECK(!ds.records[1].snr.has_value());
    CHECK(ds.records[1].timestamp == ds.records[0].timestamp + 1);
}

TEST_CASE("parse_csv errors") {
    SUBCASE("header-only file -> EmptyFile") {
        const std::string path = write_temp("empty.csv", "timestamp,network_mode,state,dl_bitrate\n");
        CHECK_THROWS_WITH_AS(parse_csv(path, Schema::canonical(), {}), doctest::Contains("no data rows"),
                             Error);
        try {
            parse_csv(path, Schema::canonical(), {});
        } catch (const Error& e) {
            CHECK(e.kind() == "EmptyFile");
        }
    }
    SUBCASE("missing mandatory column") {
        const std::string path = write_temp("nocol.csv", "timestamp,network_mode,state\n1,5G,D\n");
        try {
            parse_csv(path, Schema::canonical(), {});
            FAIL("expected MissingColumn");
        } catch (const Error& e) {
            CHECK(e.kind() == "MissingColumn");
        }
    }
    SUBCASE("non-numeric dl_bitrate -> MalformedRow with line number") {
        const std::string path = write_temp(
            "badnum.csv", "timestamp,network_mode,state,dl_bitrate\n1,5G,D,100\n2,5G,D,abc\n");
        try {
            parse_csv(path, Schema::canonical(), {});
            FAIL("expected MalformedRow");
        } catch (const Error& e) {
            CHECK(e.kind() == "MalformedRow");
            CHECK(std::string(e.what()).find("line 3") != std::string::npos);
        }
    }
    SUBCASE("bad state token") {
        const std::string path =
            write_temp("badstate.csv", "timestamp,network_mode,state,dl_bitrate\n1,5G,X,100\n");
        try {
            parse_csv(path, Schema::canonical(), {});
            FAIL("expected MalformedRow");
        } catch (const Error& e) {
            CHECK(e.kind() == "MalformedRow");
        }
    }
}

TEST_CASE("duplicate timestamps keep the last row") {
    const std::string path = write_temp(
        "dup.csv", "timestamp,network_mode,state,dl_bitrate\n1,5G,D,100\n1,5G,D,200\n2,5G,D,300\n");
    const SessionDataset ds = parse_csv(path, Schema::canonical(), {});
    REQUIRE(ds.records.size() == 2);
    CHECK(ds.records[0].dl_bitrate == 200);
}

TEST_CASE("canonical CSV round trip reproduces the record list exactly") {
    synth::GeneratorConfig gc;
    gc.seconds = 300;
    gc.seed = 9;
    gc.idle_fraction = 0.1;
    const SessionDataset ds = synth::generate(gc);

    const std::string path = write_temp("roundtrip.csv", canonical_csv_string(ds));
    ParseOptions opts;
    opts.application = ds.application;
    opts.mobility = ds.mobility;
    const SessionDataset back = parse_csv(path, Schema::canonical(), opts);
    REQUIRE(back.records.size() == ds.records.size());
    CHECK(back.records == ds.records);
}

TEST_CASE("partition merges by (mode, application) and conserves counts") {
    auto mk = [](NetworkMode m, Application a, double t0, size_t n, const std::string& src) {
        SessionDataset ds;
        ds.network_mode = m;
        ds.application = a;
        ds.source_files = {src};
        for (size_t i = 0; i < n; ++i) {
            TelemetryRecord r;
            r.timestamp = t0 + static_cast<double>(i);
            r.network_mode = m;
            r.state = DownloadState::Downloading;
            r.dl_bitrate = 1;
            ds.records.push_back(r);
        }
        return ds;
    };

    SUBCASE("two 5G-download sessions of 100 and 50 records merge into 150") {
        const auto out = partition({mk(NetworkMode::FiveG, Application::Downloading, 0, 100, "a.csv"),
                                    mk(NetworkMode::FiveG, Application::Downloading, 1000, 50, "b.csv")});
        REQUIRE(out.size() == 1);
        const SessionDataset& merged = out.begin()->second;
        CHECK(merged.records.size() == 150);
        CHECK(merged.mobility == Mobility::Merged);
        CHECK(merged.segment_starts == std::vector<size_t>({0, 100}));
    }
    SUBCASE("all four combinations give a map of size 4") {
        const auto out = partition({mk(NetworkMode::FourG, Application::Streaming, 0, 5, "a"),
                                    mk(NetworkMode::FourG, Application::Downloading, 0, 5, "b"),
                                    mk(NetworkMode::FiveG, Application::Streaming, 0, 5, "c"),
                                    mk(NetworkMode::FiveG, Application::Downloading, 0, 5, "d")});
        CHECK(out.size() == 4);
        size_t total = 0;
        for (const auto& [k, v] : out) total += v.records.size();
        CHECK(total == 20);
    }
    SUBCASE("empty input -> empty map") { CHECK(partition({}).empty()); }
    SUBCASE("mixed modes inside one file -> ConflictingTags") {
        SessionDataset bad = mk(NetworkMode::FiveG, Application::Downloading, 0, 3, "x");
        bad.records[1].network_mode = NetworkMode::FourG;
        try {
            partition({bad});
            FAIL("expected ConflictingTags");
        } catch (const Error& e) {
            CHECK(e.kind() == "ConflictingTags");
        }
    }
}

TEST_CASE("resample_uniform") {
    auto mk = [](std::vector<double> ts) {
        SessionDataset ds;
        for (double t : ts) {
            TelemetryRecord r;
            r.timestamp = t;
            r.network_mode = NetworkMode::FiveG;
            r.state = DownloadState::Downloading;
            r.dl_bitrate = 100 * t;
            ds.records.push_back(r);
        }
        ds.network_mode = NetworkMode::FiveG;
        return ds;
    };

    SUBCASE("already uniform input is unchanged") {
        const SessionDataset ds = mk({0, 1, 2, 3, 4});
        const SessionDataset out = resample_uniform(ds, 1.0, 5.0);
        REQUIRE(out.records.size() == 5);
        CHECK(out.records == ds.records);
    }
    SUBCASE("gap inside max_gap is carried forward") {
        const SessionDataset out = resample_uniform(mk({0, 1, 3}), 1.0, 5.0);
        REQUIRE(out.records.size() == 4);
        CHECK(out.records[2].timestamp == 2.0);
        CHECK(out.records[2].dl_bitrate == 100.0);  // value from t=1
        CHECK(out.records[3].dl_bitrate == 300.0);
    }
    SUBCASE("gap beyond max_gap splits the session") {
        const SessionDataset out = resample_uniform(mk({0, 1, 3601, 3602}), 1.0, 60.0);
        CHECK(out.segment_starts.size() == 2);
        CHECK(out.records.size() == 4);
    }
    SUBCASE("all inter-sample deltas equal the period within segments") {
        synth::GeneratorConfig gc;
        gc.seconds = 500;
        gc.seed = 4;
        const SessionDataset out = resample_uniform(synth::generate(gc), 7.0, 30.0);
        for (const auto& [b, e] : out.segments())
            for (size_t i = b + 1; i < e; ++i)
                CHECK(out.records[i].timestamp - out.records[i - 1].timestamp ==
                      doctest::Approx(7.0).epsilon(1e-12));
    }
    SUBCASE("empty in, empty out") {
        const SessionDataset out = resample_uniform(SessionDataset{}, 1.0, 5.0);
        CHECK(out.records.empty());
    }
}

TEST_CASE("network mode token parsing") {
    CHECK(parse_network_mode("NR_NSA") == NetworkMode::FiveG);
    CHECK(parse_network_mode("5G") == NetworkMode::FiveG);
    CHECK(parse_network_mode("LTE_CA") == NetworkMode::FourG);
    CHECK(parse_network_mode("4G") == NetworkMode::FourG);
    CHECK(parse_network_mode("UMTS") == NetworkMode::Other);
}
