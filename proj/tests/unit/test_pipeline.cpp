#include <cmath>
#include <set>

#include "doctest.h"
#include "helpers.hpp"
#include "ssin/error.hpp"
#include "ssin/pipeline.hpp"

using namespace ssin;
using namespace ssin::pipeline;

namespace {

const geom::StationSet kRoster({{"A", 22.30, 114.10}, {"B", 22.35, 114.20}, {"C", 22.40, 114.05}});

Snapshot snapshot_of(std::vector<double> values, std::vector<bool> observed = {}) {
    Snapshot s;
    s.timestamp = "2020-01-01T00:00:00Z";
    s.values = Eigen::Map<Vector>(values.data(), static_cast<Index>(values.size()));
    s.observed = observed.empty() ? std::vector<bool>(values.size(), true) : observed;
    return s;
}

Snapshot ramp(std::size_t n, double offset = 0.0) {
    std::vector<double> v(n);
    for (std::size_t i = 0; i < n; ++i) v[i] = offset + static_cast<double>(i) * 0.7 + 0.3 * static_cast<double>(i % 3);
    return snapshot_of(v);
}

}  // namespace

TEST_CASE("timestamps") {
    CHECK(parse_timestamp("1970-01-01T00:00:00Z") == 0);
    CHECK(parse_timestamp("2020-03-01 12:30") == parse_timestamp("2020-03-01T12:30:00Z"));
    CHECK(parse_timestamp("2020-03-01T20:30:00+08:00") == parse_timestamp("2020-03-01T12:30:00Z"));
    CHECK(parse_timestamp("2020-02-29T00:00:00Z") - parse_timestamp("2020-02-28T00:00:00Z") == 86400);
    CHECK(format_timestamp(parse_timestamp("2016-07-04T05:06:07-03:00")) == "2016-07-04T08:06:07Z");
    CHECK_THROWS_AS(parse_timestamp("2019-02-29T00:00"), IngestError);
    CHECK_THROWS_AS(parse_timestamp("yesterday"), IngestError);
    CHECK_THROWS_AS(parse_timestamp("2020-01-01T00:00:00Zjunk"), IngestError);
}

TEST_CASE("ingestion") {
    testing::TempDir dir("ingest");
    const auto path = dir.file("r.csv");

    SUBCASE("complete data") {
        testing::write_text(path,
                            "station_id,timestamp,value_mm\n"
                            "A,2020-01-01T01:00:00Z,1.5\nB,2020-01-01T01:00:00Z,0\nC,2020-01-01T01:00:00Z,2\n"
                            "C,2020-01-01T00:00:00Z,0.1\nA,2020-01-01T00:00:00Z,0.2\nB,2020-01-01T00:00:00Z,0.3\n");
        const auto r = ingest(kRoster, path);
        REQUIRE(r.snapshots.size() == 2);
        CHECK(r.snapshots[0].timestamp == "2020-01-01T00:00:00Z");  // ascending
        for (const auto& s : r.snapshots) CHECK(s.observed_count() == 3);
        CHECK(r.snapshots[1].values[0] == 1.5);
        CHECK(r.warnings.empty());
    }
    SUBCASE("missing reading") {
        testing::write_text(path, "station_id,timestamp,value_mm\nA,2020-01-01T00:00:00Z,1\nC,2020-01-01T00:00:00Z,2\n");
        const auto r = ingest(kRoster, path);
        REQUIRE(r.snapshots.size() == 1);
        CHECK(r.snapshots[0].observed == std::vector<bool>{true, false, true});
    }
    SUBCASE("duplicate rows name both lines") {
        testing::write_text(path, "station_id,timestamp,value_mm\nA,2020-01-01T00:00:00Z,1\nB,2020-01-01T00:00:00Z,1\n"
                                  "A,2020-01-01T00:00:00Z,3\n");
        try {
            (void)ingest(kRoster, path);
            FAIL("expected an ingestion error");
        } catch (const IngestError& e) {
            const std::string msg = e.what();
            CHECK(msg.find("lines 2 and 4") != std::string::npos);
        }
    }
    SUBCASE("unknown station reports the row") {
        testing::write_text(path, "station_id,timestamp,value_mm\nA,2020-01-01T00:00:00Z,1\nZ,2020-01-01T00:00:00Z,1\n");
        try {
            (void)ingest(kRoster, path);
            FAIL("expected an ingestion error");
        } catch (const IngestError& e) {
            CHECK(std::string(e.what()).find(":3") != std::string::npos);
        }
    }
    SUBCASE("negative rainfall is rejected and logged") {
        testing::write_text(path, "station_id,timestamp,value_mm\nA,2020-01-01T00:00:00Z,-1\nB,2020-01-01T00:00:00Z,1\n");
        const auto r = ingest(kRoster, path);
        REQUIRE(r.snapshots.size() == 1);
        CHECK_FALSE(r.snapshots[0].observed[0]);
        REQUIRE(r.warnings.size() == 1);
        CHECK(r.warnings[0].find("-1") != std::string::npos);
    }
    SUBCASE("bad header") {
        testing::write_text(path, "station,time,value\nA,2020-01-01T00:00:00Z,1\n");
        CHECK_THROWS_AS(ingest(kRoster, path), IngestError);
    }
    SUBCASE("write and read back") {
        testing::write_text(path, "station_id,timestamp,value_mm\nA,2020-01-01T00:00:00Z,1.2\nB,2020-01-01T03:00:00Z,4.5\n");
        const auto first = ingest(kRoster, path);
        write_records_csv(dir.file("copy.csv"), kRoster, first.snapshots);
        const auto second = ingest(kRoster, dir.file("copy.csv"));
        REQUIRE(second.snapshots.size() == 2);
        CHECK(second.snapshots[1].values[1] == 4.5);
        CHECK(second.snapshots[1].observed == std::vector<bool>{false, true, false});
    }
}

TEST_CASE("rainy hours") {
    const std::vector<Snapshot> s{snapshot_of({0, 0, 0}), snapshot_of({0, 0.1, 0}), snapshot_of({0, 0.05, 0}),
                                  snapshot_of({5, 0, 0}, {false, true, true})};
    CHECK(select_rainy_hours(s, 0.1).size() == 1);
    CHECK(select_rainy_hours(s, 0.1)[0].values[1] == 0.1);
    CHECK(select_rainy_hours(s, 0.0).size() == 4);
}

TEST_CASE("instance standardization") {
    const auto a = standardize_instance((Vector(3) << 1, 2, 3).finished());
    CHECK(a.stats.mean == 2.0);
    CHECK(a.stats.std == doctest::Approx(std::sqrt(2.0 / 3)).epsilon(1e-12));
    CHECK(a.z[0] == doctest::Approx(-1.22474).epsilon(1e-5));
    CHECK(a.z[1] == 0.0);
    CHECK(a.z[2] == doctest::Approx(1.22474).epsilon(1e-5));
    CHECK(standardize_instance(Vector::Constant(3, 5.0)).z.isZero());
    CHECK(standardize_instance(Vector::Constant(1, 7.0)).z[0] == 0.0);
    CHECK_THROWS_AS(standardize_instance(Vector()), ContractViolation);
}

TEST_CASE("dynamic masking") {
    const auto s = ramp(10);
    Rng rng(1);
    const auto seq = dynamic_mask(s, {}, rng);
    REQUIRE(seq);
    CHECK(seq->mask.size() == 2);
    CHECK(seq->nodes.size() == 10);
    for (std::size_t k = 0; k < seq->mask.size(); ++k) {
        const auto p = seq->mask[k];
        CHECK(seq->x_std[p] == 0.0);
        const double raw = s.values[seq->nodes[static_cast<std::size_t>(p)]];
        CHECK(seq->targets_std[static_cast<Index>(k)] ==
              doctest::Approx((raw - seq->stats.mean) / seq->stats.std).epsilon(1e-12));
    }
    // Stats come from the eight remaining known nodes.
    double sum = 0;
    for (Index i = 0; i < 10; ++i) {
        if (std::find(seq->mask.begin(), seq->mask.end(), i) == seq->mask.end()) sum += s.values[i];
    }
    CHECK(seq->stats.mean == doctest::Approx(sum / 8));

    SUBCASE("single-node mask") {
        Rng r(2);
        const auto one = dynamic_mask(ramp(4), {0.2, false}, r);
        REQUIRE(one);
        CHECK(one->mask.size() == 1);
    }
    SUBCASE("too few known nodes") {
        Rng r(3);
        CHECK_FALSE(dynamic_mask(snapshot_of({1, 2, 3}, {false, true, false}), {}, r));
    }
    SUBCASE("seeded determinism and variety") {
        Rng a(42), b(42);
        CHECK(dynamic_mask(s, {}, a)->mask == dynamic_mask(s, {}, b)->mask);
        std::set<std::vector<Index>> seen;
        Rng c(7);
        for (int k = 0; k < 200; ++k) seen.insert(dynamic_mask(s, {}, c)->mask);
        CHECK(seen.size() > 30);  // C(10, 2) = 45 patterns
    }
    SUBCASE("zero fill") {
        Rng r(1);
        const auto z = dynamic_mask(s, {0.2, true}, r);
        for (auto p : z->mask) CHECK(z->x_std[p] == doctest::Approx(-z->stats.mean / z->stats.std).epsilon(1e-12));
    }
    SUBCASE("masked targets stay finite on every draw") {
        Rng r(11);
        for (int k = 0; k < 100; ++k) {
            const auto q = dynamic_mask(snapshot_of({0, 0, 0, 3.5, 0}), {0.4, false}, r);
            for (auto p : q->mask) CHECK(q->x_std[p] == 0.0);
            CHECK(num::all_finite(q->targets_std));
        }
    }
    SUBCASE("ratio bounds") {
        Rng r(1);
        CHECK_THROWS_AS(dynamic_mask(s, {0.0, false}, r), ContractViolation);
        CHECK_THROWS_AS(dynamic_mask(s, {1.0, false}, r), ContractViolation);
    }
}

TEST_CASE("epoch stream") {
    std::vector<Snapshot> snaps;
    for (int k = 0; k < 100; ++k) snaps.push_back(ramp(10, k));
    StreamOptions o;
    o.remask = 10;
    o.seed = 5;
    const EpochStream dyn(snaps, o);
    const auto e0 = dyn.epoch(0), e1 = dyn.epoch(1);
    CHECK(e0.size() == 1000);
    CHECK(sequence_hash(e0) != sequence_hash(e1));
    CHECK(sequence_hash(e0) == sequence_hash(EpochStream(snaps, o).epoch(0)));

    // Shuffled order: the first sequences do not all come from snapshot 0.
    std::set<std::size_t> first_snapshots;
    for (int k = 0; k < 10; ++k) first_snapshots.insert(e0[static_cast<std::size_t>(k)].snapshot);
    CHECK(first_snapshots.size() > 1);

    o.static_masking = true;
    const EpochStream stat(snaps, o);
    auto by_key = [](std::vector<MaskedSequence> v) {
        std::sort(v.begin(), v.end(), [](const auto& a, const auto& b) {
            return std::tie(a.snapshot, a.replica) < std::tie(b.snapshot, b.replica);
        });
        return sequence_hash(v);
    };
    CHECK(by_key(stat.epoch(0)) == by_key(stat.epoch(1)));
    CHECK(by_key(dyn.epoch(0)) != by_key(dyn.epoch(1)));

    std::vector<Snapshot> sparse{snapshot_of({1, 2}, {true, false}), ramp(5)};
    const EpochStream skip(sparse, StreamOptions{});
    CHECK(skip.skipped() == 1);
    CHECK(skip.epoch(0).size() == 10);
}

TEST_CASE("station split") {
    const auto a = split_stations(100, 0.2, 9);
    const auto b = split_stations(100, 0.2, 9);
    CHECK(a.test == b.test);
    CHECK(a.train == b.train);
    CHECK(a.test.size() == 20);
    CHECK(a.train.size() == 80);
    std::set<std::size_t> all(a.test.begin(), a.test.end());
    for (auto t : a.train) CHECK(all.insert(t).second);
    CHECK(all.size() == 100);
    CHECK(split_stations(100, 0.2, 10).test != a.test);
}

TEST_CASE("manifest and dataset") {
    testing::TempDir dir("manifest");
    geom::write_roster_csv(dir.file("roster.csv"), kRoster);
    testing::write_text(dir.file("records.csv"),
                        "station_id,timestamp,value_mm\nA,2020-01-01T00:00:00Z,0\nB,2020-01-01T00:00:00Z,0\n"
                        "A,2020-01-01T01:00:00Z,2\nB,2020-01-01T01:00:00Z,1\nC,2020-01-01T01:00:00Z,0\n"
                        "A,2020-01-02T01:00:00Z,2\n");
    testing::write_text(dir.file("m.json"), R"({"name": "tiny", "roster": "roster.csv", "records": "records.csv",
        "split_seed": 3, "test_fraction": 0.34, "time_span": {"end": "2020-01-01T23:00:00Z"}})");
    const auto m = DatasetManifest::load(dir.file("m.json"));
    CHECK(m.name == "tiny");
    CHECK(m.rain_threshold == 0.1);
    const auto ds = load_dataset(m);
    REQUIRE(ds.snapshots.size() == 1);  // dry hour dropped, second day outside the span
    CHECK(ds.snapshots[0].timestamp == "2020-01-01T01:00:00Z");
    CHECK(ds.split.test.size() == 1);
    CHECK(ds.train_stations().size() == 2);
    CHECK(ds.train_snapshots()[0].values.size() == 2);
    CHECK(ds.checksums["records"].get<std::string>().rfind("fnv1a64:", 0) == 0);
    CHECK(load_dataset(m).split.test == ds.split.test);

    testing::write_text(dir.file("bad.json"), R"({"name": "x", "roster": "roster.csv"})");
    CHECK_THROWS_AS(DatasetManifest::load(dir.file("bad.json")), ConfigError);
    testing::write_text(dir.file("frac.json"),
                        R"({"name": "x", "roster": "roster.csv", "records": "records.csv", "test_fraction": 1.5})");
    CHECK_THROWS_AS(DatasetManifest::load(dir.file("frac.json")), ConfigError);
}

TEST_CASE("inference fill") {
    model::StandardizationStats stats;
    stats.relpos = geom::build_relpos_table(kRoster).stats();
    stats.coords = geom::coordinate_stats(kRoster);
    const auto snap = snapshot_of({1.0, 4.0, 7.0}, {true, true, false});

    SUBCASE("no queries") {
        const auto seq = fill_for_inference(kRoster, snap, {}, stats);
        CHECK(seq.observed == 2);
        CHECK(seq.queries() == 0);
        CHECK(seq.input.plan.unobserved.empty());
        CHECK(seq.x_std[0] == -1.0);
    }
    SUBCASE("query on a station") {
        const auto seq = fill_for_inference(kRoster, snap, {{"q", kRoster[0].lat, kRoster[0].lon}}, stats);
        CHECK(seq.x_std[2] == 0.0);
        const auto self = seq.input.relpos(2, 0);
        const auto zero = geom::standardize(geom::RelPos{0, 0}, stats.relpos);
        CHECK(self[0] == zero[0]);
        CHECK(self[1] == zero[1]);
    }
    SUBCASE("pair count for many queries") {
        const auto roster = testing::random_stations(123, 1);
        std::vector<double> v(123, 1.0);
        v[5] = 2.0;
        const auto big = snapshot_of(v);
        std::vector<geom::Station> q;
        Rng rng(2);
        for (int k = 0; k < 1000; ++k) q.push_back({"q", rng.uniform(22.2, 22.5), rng.uniform(113.9, 114.3)});
        model::StandardizationStats s2;
        s2.relpos = geom::build_relpos_table(roster).stats();
        const auto seq = fill_for_inference(roster, big, q, s2);
        CHECK(seq.input.length() == 1123);
        CHECK(attn::PairList::shielded(seq.input.plan).total() == 123 * 123 + 1000 * 124);
    }
    SUBCASE("errors") {
        CHECK_THROWS_AS(fill_for_inference(kRoster, snap, {{"q", 95, 0}}, stats), ContractViolation);
        CHECK_THROWS_AS(fill_for_inference(kRoster, snapshot_of({1, 1, 1}, {false, false, false}), {}, stats),
                        ContractViolation);
    }
}

TEST_CASE("de-standardization") {
    const InstanceStats flat{5.0, 0.0};
    CHECK(std::abs(destandardize(Vector::Constant(3, 123.0), flat, false)[0] - 5.0) < 1e-7);
    const InstanceStats s{2.0, 3.0};
    CHECK(destandardize(Vector::Zero(1), s, false)[0] == 2.0);
    CHECK(destandardize(Vector::Constant(1, -1.0), s, false)[0] == -1.0);
    CHECK(destandardize(Vector::Constant(1, -1.0), s, true)[0] == 0.0);

    const Vector known = (Vector(4) << 0.2, 3.1, 7.5, 1.0).finished();
    const auto st = standardize_instance(known);
    CHECK((destandardize(st.z, st.stats, false) - known).cwiseAbs().maxCoeff() < 1e-9);
}
