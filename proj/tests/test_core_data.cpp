#include "pct/core_data.hpp"
#include "pct/error.hpp"
#include "pct/geojson_io.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <sstream>

using namespace pct;

namespace {

std::vector<ODPair> parse(const std::string &text) {
    std::istringstream in(text);
    return parse_od_table(in);
}

const std::string kHeader = "origin,dest,all,cycle,walk,car,other\n";

// Independent oracle: spherical law of cosines.
double cosine_law_km(Point a, Point b) {
    const double r = std::numbers::pi / 180.0;
    const double c = std::sin(a.lat * r) * std::sin(b.lat * r) +
                     std::cos(a.lat * r) * std::cos(b.lat * r) * std::cos((b.lon - a.lon) * r);
    return 6371.0088 * std::acos(std::clamp(c, -1.0, 1.0));
}

Zone square_zone(const std::string &id, Point centroid) {
    Zone z;
    z.id = id;
    z.name = id;
    z.centroid = centroid;
    z.boundary.push_back({{{centroid.lon - 0.001, centroid.lat - 0.001},
                           {centroid.lon + 0.001, centroid.lat - 0.001},
                           {centroid.lon + 0.001, centroid.lat + 0.001},
                           {centroid.lon - 0.001, centroid.lat + 0.001},
                           {centroid.lon - 0.001, centroid.lat - 0.001}},
                          {}});
    z.area_km2 = 0.05;
    z.mortality_area = id;
    return z;
}

ODPair od(std::string o, std::string d, std::int64_t all, std::int64_t cycle) {
    ODPair p;
    p.origin = std::move(o);
    p.dest = std::move(d);
    p.all = all;
    p.cycle = cycle;
    p.car = all - cycle;
    return p;
}

} // namespace

TEST_CASE("parse_od_table reads the census sample row") {
    auto rows = parse(kHeader + "E02002361,E02002361,109,2,59,39,9\n");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].origin == "E02002361");
    CHECK(rows[0].all == 109);
    CHECK(rows[0].cycle == 2);
    CHECK(rows[0].walk == 59);
    CHECK(rows[0].car == 39);
    CHECK(rows[0].other == 9);
    CHECK_FALSE(rows[0].gender.has_value());
}

TEST_CASE("parse_od_table accepts an empty flow") {
    auto rows = parse(kHeader + "A,B,0,0,0,0,0\n");
    REQUIRE(rows.size() == 1);
    CHECK(rows[0].all == 0);
}

TEST_CASE("parse_od_table rejects a mode-sum mismatch and names the pair") {
    try {
        parse(kHeader + "A,B,10,2,3,4,2\n");
        FAIL("expected ValidationError");
    } catch (const ValidationError &e) {
        const std::string msg = e.what();
        CHECK(msg.find("A") != std::string::npos);
        CHECK(msg.find("line 2") != std::string::npos);
    }
}

TEST_CASE("parse_od_table errors") {
    CHECK_THROWS_AS(parse(kHeader + "A,B,10,-1,3,4,4\n"), ValidationError);
    CHECK_THROWS_AS(parse("origin,dest,all\nA,B,1\n"), ParseError);
    try {
        parse(kHeader + "A,B,10,2,3,4,1\nA,C,x,1,1,1,1\n");
        FAIL("expected ParseError");
    } catch (const ParseError &e) {
        CHECK(std::string(e.what()).find("line 3") != std::string::npos);
    }
    CHECK_THROWS_AS(parse(kHeader + "A,B,10,2,3,4\n"), ParseError);
}

TEST_CASE("parse_od_table handles CRLF and gender columns") {
    auto rows = parse("origin,dest,all,cycle,walk,car,other,male_all,male_cycle,female_all,female_cycle\r\n"
                      "A,B,100,12,20,60,8,50,10,50,2\r\n");
    REQUIRE(rows.size() == 1);
    REQUIRE(rows[0].gender.has_value());
    CHECK(rows[0].gender->male_cycle == 10);
    CHECK(rows[0].gender->female_all == 50);
    CHECK_THROWS_AS(parse("origin,dest,all,cycle,walk,car,other,male_all,male_cycle,female_all,female_cycle\n"
                          "A,B,100,12,20,60,8,50,10,49,2\n"),
                    ValidationError);
}

TEST_CASE("OD table round-trips through write and parse") {
    std::mt19937_64 rng(7);
    std::vector<ODPair> pairs;
    for (int i = 0; i < 200; ++i) {
        ODPair p;
        p.origin = "Z" + std::to_string(rng() % 30);
        p.dest = "Z" + std::to_string(rng() % 30);
        p.cycle = static_cast<std::int64_t>(rng() % 50);
        p.walk = static_cast<std::int64_t>(rng() % 50);
        p.car = static_cast<std::int64_t>(rng() % 50);
        p.other = static_cast<std::int64_t>(rng() % 50);
        p.all = p.cycle + p.walk + p.car + p.other;
        GenderSplit g;
        g.male_all = p.all / 2;
        g.female_all = p.all - g.male_all;
        g.male_cycle = std::min(g.male_all, p.cycle);
        g.female_cycle = p.cycle - g.male_cycle;
        p.gender = g;
        pairs.push_back(p);
    }
    std::ostringstream first;
    write_od_table(first, pairs);
    auto parsed = parse(first.str());
    CHECK(parsed == pairs);
    std::ostringstream second;
    write_od_table(second, parsed);
    CHECK(first.str() == second.str());
}

TEST_CASE("aggregate_bidirectional sums both directions") {
    std::vector<ODPair> in{od("A", "B", 10, 3), od("B", "A", 20, 5)};
    auto out = aggregate_bidirectional(in);
    REQUIRE(out.size() == 1);
    CHECK(out[0].origin == "A");
    CHECK(out[0].dest == "B");
    CHECK(out[0].cycle == 8);
    CHECK(out[0].all == 30);

    std::vector<ODPair> single{od("B", "A", 10, 3)};
    auto one = aggregate_bidirectional(single);
    REQUIRE(one.size() == 1);
    CHECK(one[0].origin == "A");
    CHECK(one[0].cycle == 3);

    std::vector<ODPair> intra{od("A", "A", 10, 2)};
    CHECK(aggregate_bidirectional(intra) == intra);
}

TEST_CASE("aggregate_bidirectional is idempotent, order-independent and conserves totals") {
    std::mt19937_64 rng(11);
    std::vector<ODPair> pairs;
    std::int64_t total = 0;
    for (int i = 0; i < 300; ++i) {
        auto p = od("Z" + std::to_string(rng() % 12), "Z" + std::to_string(rng() % 12),
                    static_cast<std::int64_t>(rng() % 100) + 5, 2);
        total += p.all;
        pairs.push_back(p);
    }
    auto once = aggregate_bidirectional(pairs);
    CHECK(aggregate_bidirectional(once) == once);
    std::shuffle(pairs.begin(), pairs.end(), rng);
    CHECK(aggregate_bidirectional(pairs) == once);
    std::int64_t after = 0;
    for (const auto &p : once) {
        after += p.all;
        CHECK(p.origin <= p.dest);
    }
    CHECK(after == total);
}

TEST_CASE("euclidean_km") {
    CHECK(euclidean_km({-1.5, 53.8}, {-1.5, 53.8}) == 0.0);
    CHECK(euclidean_km({0, 0}, {0, 1}) == doctest::Approx(111.195).epsilon(0.1 / 111.195));
    CHECK(euclidean_km({0, 0}, {0, 1}) == doctest::Approx(cosine_law_km({0, 0}, {0, 1})).epsilon(1e-9));
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> lon(-10, 10);
    std::uniform_real_distribution<double> lat(40, 60);
    for (int i = 0; i < 500; ++i) {
        Point a{lon(rng), lat(rng)};
        Point b{lon(rng), lat(rng)};
        CHECK(euclidean_km(a, b) == euclidean_km(b, a));
        CHECK(euclidean_km(a, b) == doctest::Approx(cosine_law_km(a, b)).epsilon(1e-9));
    }
    CHECK_THROWS_AS(euclidean_km({0, 91}, {0, 0}), ValidationError);
    CHECK_THROWS_AS(euclidean_km({181, 0}, {0, 0}), ValidationError);
}

TEST_CASE("intrazonal_nominal_distance") {
    Zone z;
    z.area_km2 = std::numbers::pi;
    CHECK(intrazonal_nominal_distance(z) == doctest::Approx(1.0).epsilon(1e-15));
    z.area_km2 = 12.566;
    CHECK(std::abs(intrazonal_nominal_distance(z) - 2.0) < 1e-3);
    z.area_km2 = 1.0;
    CHECK(std::abs(intrazonal_nominal_distance(z) - 0.5642) < 1e-4);
    z.area_km2 = 0.0;
    CHECK_THROWS(intrazonal_nominal_distance(z));
}

TEST_CASE("filter_eligible applies inclusive thresholds") {
    // Place B exactly 20 km north of A along a meridian.
    const double deg_per_km = 180.0 / (std::numbers::pi * kEarthRadiusKm);
    Point a{0.0, 10.0};
    Point b{0.0, 10.0 + 20.0 * deg_per_km};
    while (euclidean_km(a, b) > 20.0) {
        b.lat = std::nextafter(b.lat, 0.0);
    }
    Point c{0.0, 10.0 + 21.0 * deg_per_km};
    Point d{0.0, 10.0 + 5.0 * deg_per_km};
    ZoneIndex zones({square_zone("A", a), square_zone("B", b), square_zone("C", c), square_zone("D", d)});
    REQUIRE(std::abs(euclidean_km(a, b) - 20.0) < 1e-12);

    std::vector<ODPair> pairs{od("A", "B", 10, 1), od("A", "C", 50, 1), od("A", "D", 9, 1), od("A", "A", 40, 4),
                              od("A", "X", 40, 4)};
    auto split = filter_eligible(pairs, zones, {});
    REQUIRE(split.lines.size() == 1);
    CHECK(split.lines[0].od.dest == "B");
    CHECK(split.excluded.size() == 2);
    CHECK(split.intrazonal.size() == 1);
    CHECK(split.outside_region.size() == 1);
    CHECK(split.lines.size() + split.excluded.size() + split.intrazonal.size() + split.outside_region.size() ==
          pairs.size());
}

TEST_CASE("desire line length matches endpoints") {
    ZoneIndex zones({square_zone("A", {-1.55, 53.80}), square_zone("B", {-1.50, 53.82})});
    auto line = make_desire_line(od("A", "B", 20, 2), zones);
    CHECK(line.euclid_km == doctest::Approx(cosine_law_km(line.from, line.to)).epsilon(1e-9));
}

TEST_CASE("ZoneIndex rejects duplicate ids") {
    CHECK_THROWS_AS(ZoneIndex({square_zone("A", {0, 0}), square_zone("A", {1, 1})}), ValidationError);
}

TEST_CASE("mortality table lookups and validation") {
    std::istringstream in("area_id,sex,age_min,age_max,annual_rate\nLA,male,16,39,0.001\nLA,female,16,39,0.0005\n");
    auto table = parse_mortality_table(in);
    CHECK(table.rate("LA", Sex::male, 16, 39) == 0.001);
    CHECK(table.has_area("LA"));
    try {
        table.rate("LA", Sex::male, 40, 64);
        FAIL("expected NotFound");
    } catch (const NotFound &e) {
        CHECK(std::string(e.what()).find("40-64") != std::string::npos);
    }
    CHECK_THROWS_AS(MortalityTable({{"LA", Sex::male, 16, 39, 1.5}}), ValidationError);
    CHECK_THROWS_AS(MortalityTable({{"LA", Sex::male, 16, 39, 0.1}, {"LA", Sex::male, 30, 50, 0.1}}), ValidationError);
}

TEST_CASE("zones load from GeoJSON with property or table centroids") {
    const auto doc = json::parse(R"({"type":"FeatureCollection","features":[
      {"type":"Feature","properties":{"id":"A","name":"Alpha","centroid_lon":0.5,"centroid_lat":0.5},
       "geometry":{"type":"Polygon","coordinates":[[[0,0],[1,0],[1,1],[0,1],[0,0]]]}},
      {"type":"Feature","properties":{"id":"B","name":"Beta","area_km2":2.5,"mortality_area":"LA"},
       "geometry":{"type":"MultiPolygon","coordinates":[[[[2,0],[3,0],[3,1],[2,1],[2,0]]]]}}]})");
    std::map<std::string, Point> table{{"A", {0.4, 0.4}}, {"B", {2.5, 0.5}}};
    auto zones = parse_zones(doc, &table);
    REQUIRE(zones.size() == 2);
    CHECK(zones[0].centroid == Point{0.4, 0.4});
    CHECK(zones[0].mortality_area == "A");
    CHECK(zones[1].mortality_area == "LA");
    CHECK(zones[1].area_km2 == 2.5);
    // one degree square at the equator
    CHECK(zones[0].area_km2 == doctest::Approx(111.195 * 111.195).epsilon(1e-3));
    CHECK_THROWS_AS(parse_zones(doc), ValidationError);

    std::map<std::string, Point> outside{{"A", {5, 5}}, {"B", {2.5, 0.5}}};
    CHECK_THROWS_AS(parse_zones(doc, &outside), ValidationError);
}
