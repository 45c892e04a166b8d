#include <cmath>

#include "doctest.h"
#include "helpers.hpp"
#include "ssin/error.hpp"
#include "ssin/geom.hpp"

using namespace ssin;
using namespace ssin::geom;

TEST_CASE("haversine distance") {
    const Station o{"o", 0, 0};
    CHECK(distance_km(o, o) == 0.0);
    // One degree of longitude on the equator is R * pi / 180.
    CHECK(std::abs(distance_km(o, {"e", 0, 1}) - kEarthRadiusKm * M_PI / 180) < 1e-9);
    CHECK(std::abs(distance_km(o, {"e", 0, 1}) - 111.1949) < 1e-3);

    Rng rng(11);
    for (int k = 0; k < 100; ++k) {
        const Station a{"a", rng.uniform(-80, 80), rng.uniform(-180, 180)};
        const Station b{"b", rng.uniform(-80, 80), rng.uniform(-180, 180)};
        CHECK(distance_km(a, b) == distance_km(b, a));
        CHECK(distance_km(a, b) > 0);
    }
}

TEST_CASE("azimuth conventions") {
    const Station o{"o", 0, 0};
    CHECK(azimuth_deg(o, {"n", 1, 0}) == 0.0);
    CHECK(azimuth_deg(o, {"e", 0, 1}) == doctest::Approx(90.0).epsilon(1e-12));
    CHECK(azimuth_deg(o, {"s", -1, 0}) == doctest::Approx(180.0).epsilon(1e-12));
    CHECK(azimuth_deg(o, {"w", 0, -1}) == doctest::Approx(270.0).epsilon(1e-12));
    CHECK(azimuth_deg(o, o) == 0.0);

    SUBCASE("reciprocal on the equator") {
        Rng rng(3);
        for (int k = 0; k < 100; ++k) {
            const Station a{"a", 0, rng.uniform(-170, 170)};
            const Station b{"b", 0, rng.uniform(-170, 170)};
            if (a.lon == b.lon) continue;
            const double back = std::fmod(azimuth_deg(a, b) + 180.0, 360.0);
            CHECK(std::abs(azimuth_deg(b, a) - back) < 1e-6);
        }
    }
    SUBCASE("reciprocal at station scale elsewhere") {
        const auto st = testing::random_stations(30, 5);
        for (std::size_t i = 0; i < st.size(); ++i) {
            for (std::size_t j = 0; j < st.size(); ++j) {
                if (i == j) continue;
                double d = std::fmod(azimuth_deg(st[j], st[i]) - azimuth_deg(st[i], st[j]) + 720.0, 360.0);
                CHECK(std::abs(d - 180.0) < 1e-3);
            }
        }
    }
    SUBCASE("range") {
        Rng rng(8);
        for (int k = 0; k < 200; ++k) {
            const Station a{"a", rng.uniform(-60, 60), rng.uniform(-180, 180)};
            const Station b{"b", rng.uniform(-60, 60), rng.uniform(-180, 180)};
            const double az = azimuth_deg(a, b);
            CHECK(az >= 0.0);
            CHECK(az < 360.0);
        }
    }
}

TEST_CASE("relative position table") {
    SUBCASE("two stations") {
        const StationSet st({{"a", 22.3, 114.1}, {"b", 22.4, 114.2}});
        const auto t = build_relpos_table(st);
        REQUIRE(t.size() == 2);
        CHECK(t.at(0, 0).distance_km == 0.0);
        CHECK(t.at(0, 0).azimuth_deg == 0.0);
        CHECK(t.at(1, 1).distance_km == 0.0);
        CHECK(t.at(0, 1).distance_km == t.at(1, 0).distance_km);
        CHECK(t.at(1, 0).azimuth_deg == doctest::Approx(std::fmod(t.at(0, 1).azimuth_deg + 180, 360)));
        CHECK(t.stats().distance.std == 0.0);

        const auto z = standardize_relpos(t);
        CHECK(z(1, 0) == 0.0);
        CHECK(z(2, 0) == 0.0);
    }
    SUBCASE("collinear north-south stations") {
        const StationSet st({{"a", 22.1, 114.0}, {"b", 22.2, 114.0}, {"c", 22.4, 114.0}});
        const auto t = build_relpos_table(st);
        for (std::size_t i = 0; i < 3; ++i) {
            for (std::size_t j = 0; j < 3; ++j) {
                const double az = t.at(i, j).azimuth_deg;
                CHECK((az == 0.0 || az == 180.0));
            }
        }
    }
    SUBCASE("fewer than two stations") {
        CHECK_THROWS_AS(build_relpos_table(StationSet({{"a", 0, 0}})), ConfigError);
    }
    SUBCASE("deterministic and standardized") {
        const auto st = testing::random_stations(40, 17);
        const auto t1 = build_relpos_table(st);
        const auto t2 = build_relpos_table(st);
        for (std::size_t k = 0; k < t1.entries().size(); ++k) {
            CHECK(t1.entries()[k].distance_km == t2.entries()[k].distance_km);
            CHECK(t1.entries()[k].azimuth_deg == t2.entries()[k].azimuth_deg);
        }
        const auto z = standardize_relpos(t1);
        const auto n = static_cast<Eigen::Index>(st.size());
        Eigen::VectorXd d(n * (n - 1)), a(n * (n - 1));
        Eigen::Index k = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            for (Eigen::Index j = 0; j < n; ++j) {
                if (i == j) continue;
                d[k] = z(i * n + j, 0);
                a[k++] = z(i * n + j, 1);
            }
        }
        const auto md = population_moments(d);
        const auto ma = population_moments(a);
        CHECK(std::abs(md.mean) < 1e-9);
        CHECK(std::abs(ma.mean) < 1e-9);
        CHECK(std::abs(md.std - 1) < 1e-6);
        CHECK(std::abs(ma.std - 1) < 1e-6);
        // The diagonal is standardized like any other entry.
        CHECK(z(0, 0) == doctest::Approx(standardize(0.0, t1.stats().distance)));
    }
}

TEST_CASE("standardize") {
    const Moments m{3.0, 2.0};
    CHECK(std::abs(standardize(5.0, m) - 1.0) < 1e-9);
    CHECK(standardize(3.0, m) == 0.0);
    CHECK(standardize(4.0, Moments{4.0, 0.0}) == 0.0);
}

TEST_CASE("custom distance provider") {
    struct Doubled final : DistanceProvider {
        double distance_km(const Station& a, const Station& b) const override { return 2 * geom::distance_km(a, b); }
    };
    const auto st = testing::random_stations(5, 2);
    const auto plain = build_relpos_table(st);
    const auto doubled = build_relpos_table(st, Doubled{});
    CHECK(doubled.at(1, 3).distance_km == doctest::Approx(2 * plain.at(1, 3).distance_km));
    CHECK(doubled.at(1, 3).azimuth_deg == plain.at(1, 3).azimuth_deg);
}

TEST_CASE("station roster") {
    CHECK_THROWS_AS(StationSet({{"a", 0, 0}, {"a", 1, 1}}), ConfigError);
    CHECK_THROWS_AS(StationSet({{"a", 91, 0}}), ConfigError);
    CHECK_THROWS_AS(StationSet({{"a", 0, 181}}), ConfigError);

    const auto st = testing::random_stations(7, 4);
    CHECK(st.find("s3") == 3);
    CHECK(st.find("nope") == st.size());
    const auto sub = st.subset({1, 4});
    CHECK(sub.size() == 2);
    CHECK(sub[1].id == "s4");

    testing::TempDir dir("roster");
    write_roster_csv(dir.file("r.csv"), st);
    const auto back = read_roster_csv(dir.file("r.csv"));
    REQUIRE(back.size() == st.size());
    for (std::size_t i = 0; i < st.size(); ++i) {
        CHECK(back[i].id == st[i].id);
        CHECK(back[i].lat == st[i].lat);
        CHECK(back[i].lon == st[i].lon);
    }

    testing::write_text(dir.file("bad.csv"), "id,lon,lat\na,1,2\n");
    CHECK_THROWS_AS(read_roster_csv(dir.file("bad.csv")), IngestError);
    testing::write_text(dir.file("nan.csv"), "id,lat,lon\na,x,2\n");
    CHECK_THROWS_AS(read_roster_csv(dir.file("nan.csv")), IngestError);
}

TEST_CASE("coordinate moments") {
    const StationSet st({{"a", 1, 10}, {"b", 3, 20}});
    const auto c = coordinate_stats(st);
    CHECK(c.lat.mean == 2.0);
    CHECK(c.lat.std == 1.0);
    CHECK(c.lon.mean == 15.0);
    CHECK(c.lon.std == 5.0);
}
