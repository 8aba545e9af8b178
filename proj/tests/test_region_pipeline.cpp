#include "pct/error.hpp"
#include "pct/region_pipeline.hpp"
#include "synthetic_region.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

using namespace pct;

namespace {

fs::path scratch(const std::string &name) {
    auto dir = fs::temp_directory_path() / ("pct_pipeline_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

std::string slurp(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
}

json read_json(const fs::path &path) { return json::parse(slurp(path)); }

testing::SyntheticOptions three_zones() {
    testing::SyntheticOptions o;
    o.region_id = "three";
    o.rows = 1;
    o.cols = 3;
    o.pair_density = 1.0;
    return o;
}

std::map<std::string, std::string> bundle_files(const fs::path &dir) {
    std::map<std::string, std::string> out;
    for (const auto &entry : fs::recursive_directory_iterator(dir)) {
        if (entry.is_regular_file()) {
            out[fs::relative(entry.path(), dir).generic_string()] = slurp(entry.path());
        }
    }
    return out;
}

LineSummary summary(std::string o, std::string d, double slc, double health, double co2) {
    LineSummary s;
    s.origin = std::move(o);
    s.dest = std::move(d);
    s.slc.fill(slc);
    s.health_value.fill(health);
    s.co2_saved.fill(co2);
    return s;
}

} // namespace

TEST_CASE("three-zone fixture builds a complete bundle") {
    const auto dir = scratch("three");
    const auto config_path =
        testing::write_synthetic_inputs(dir, three_zones(), false, dir / "out", dir / "cache");
    const auto summary = build_region(load_pipeline_config(config_path));
    const auto bundle = dir / "out" / "three";
    CHECK(summary.bundle_dir == bundle);

    const auto zones = read_json(bundle / "zones.geojson");
    REQUIRE(zones["features"].size() == 3);
    std::set<std::string> zone_ids;
    for (const auto &f : zones["features"]) {
        zone_ids.insert(f["properties"]["id"].get<std::string>());
    }

    const auto lines = read_json(bundle / "lines.geojson");
    CHECK(lines["features"].size() <= 3);
    CHECK(lines["features"].size() == summary.lines);
    CHECK(summary.lines > 0);
    std::set<std::string> line_ids;
    for (const auto &f : lines["features"]) {
        const auto &p = f["properties"];
        CHECK(zone_ids.count(p["origin"].get<std::string>()) == 1);
        CHECK(zone_ids.count(p["dest"].get<std::string>()) == 1);
        CHECK(line_ids.insert(p["id"].get<std::string>()).second);
    }

    // every line has both routes or a recorded routing error
    const auto fast = read_json(bundle / "routes_fast.geojson");
    const auto quiet = read_json(bundle / "routes_quiet.geojson");
    std::set<std::string> fast_ids;
    std::set<std::string> quiet_ids;
    for (const auto &f : fast["features"]) {
        fast_ids.insert(f["properties"]["id"].get<std::string>());
    }
    for (const auto &f : quiet["features"]) {
        quiet_ids.insert(f["properties"]["id"].get<std::string>());
    }
    for (const auto &f : lines["features"]) {
        const auto &p = f["properties"];
        const auto id = p["id"].get<std::string>();
        const bool routed = fast_ids.count(id + "_fast") && quiet_ids.count(id + "_quiet");
        CHECK((routed || !p["routing_error"].is_null()));
    }

    const auto network = read_json(bundle / "network.geojson");
    CHECK_FALSE(network["features"].empty());
    CHECK(network["features"].size() == summary.network_segments);

    const auto manifest = read_json(bundle / "manifest.json");
    CHECK(manifest["region_id"] == "three");
    const auto stats = read_json(bundle / "stats" / "stats.json");
    CHECK(stats["region_id"] == "three");
    CHECK(stats["coefficient_source"].is_string());
    CHECK(fs::exists(bundle / "stats" / "distance_distribution.csv"));
    CHECK(fs::exists(bundle / "centroids.geojson"));
    CHECK_FALSE(fs::exists(dir / "out" / "three.partial"));
}

TEST_CASE("every eligible pair appears exactly once and areas follow the documented accounting") {
    auto options = three_zones();
    options.rows = 3;
    options.region_id = "nine";
    const auto dir = scratch("nine");
    const auto config_path = testing::write_synthetic_inputs(dir, options, false, dir / "out", dir / "cache");
    const auto config = load_pipeline_config(config_path);
    build_region(config);
    const auto bundle = dir / "out" / "nine";

    const auto region = testing::make_synthetic_region(options);
    const ZoneIndex index(region.zones);
    const auto split = filter_eligible(aggregate_bidirectional(region.od), index, config.thresholds);
    std::set<std::pair<std::string, std::string>> expected;
    for (const auto &l : split.lines) {
        expected.emplace(l.od.origin, l.od.dest);
    }

    const auto lines = read_json(bundle / "lines.geojson");
    std::multiset<std::pair<std::string, std::string>> seen;
    for (const auto &f : lines["features"]) {
        seen.emplace(f["properties"]["origin"].get<std::string>(), f["properties"]["dest"].get<std::string>());
    }
    CHECK(seen.size() == expected.size());
    CHECK(std::set(seen.begin(), seen.end()) == expected);

    const auto zones = read_json(bundle / "zones.geojson");
    for (const auto &z : zones["features"]) {
        const auto &zp = z["properties"];
        const auto id = zp["id"].get<std::string>();
        std::map<std::string, double> half_sum;
        for (const auto &f : lines["features"]) {
            const auto &lp = f["properties"];
            if (!lp["routing_error"].is_null()) {
                continue;
            }
            if (lp["origin"] == id || lp["dest"] == id) {
                half_sum["cycle"] += 0.5 * lp["cycle"].get<double>();
                half_sum["all"] += 0.5 * lp["all"].get<double>();
                for (const char *p : {"govtarget", "genderequal", "dutch", "ebike"}) {
                    half_sum[p] += 0.5 * lp[std::string(p) + "_slc"].get<double>();
                }
            }
        }
        const double intra_cycle = zp["intrazonal_cycle"].get<double>();
        const double intra_all = zp["intrazonal_all"].get<double>();
        CHECK(zp["cycle"].get<double>() == doctest::Approx(half_sum["cycle"] + intra_cycle).epsilon(1e-12));
        CHECK(zp["all"].get<double>() == doctest::Approx(half_sum["all"] + intra_all).epsilon(1e-12));
        for (const char *p : {"govtarget", "genderequal", "dutch", "ebike"}) {
            const auto &intra = zp[std::string("intrazonal_") + p + "_slc"];
            const double iz = intra.is_null() ? 0.0 : intra.get<double>();
            CHECK(zp[std::string(p) + "_slc"].get<double>() == doctest::Approx(half_sum[p] + iz).epsilon(1e-12));
        }
    }
}

TEST_CASE("rebuilding from unchanged inputs is byte-identical") {
    const auto dir = scratch("determinism");
    const auto config_path =
        testing::write_synthetic_inputs(dir, three_zones(), false, dir / "out", dir / "cache");
    const auto config = load_pipeline_config(config_path);
    build_region(config);
    const auto first = bundle_files(dir / "out" / "three");

    // A cold cache must not change anything either.
    fs::remove_all(dir / "cache");
    build_region(config);
    const auto second = bundle_files(dir / "out" / "three");
    CHECK(first.size() == second.size());
    CHECK(first == second);
    CHECK(first.at("manifest.json") == second.at("manifest.json"));
}

TEST_CASE("a missing mortality file aborts in the impacts stage without leaving a bundle") {
    const auto dir = scratch("no_mortality");
    const auto config_path =
        testing::write_synthetic_inputs(dir, three_zones(), false, dir / "out", dir / "cache");
    fs::remove(dir / "mortality.csv");
    try {
        build_region(load_pipeline_config(config_path));
        FAIL("expected StageError");
    } catch (const StageError &e) {
        CHECK(e.stage() == "impacts");
        CHECK(std::string(e.what()).rfind("[impacts]", 0) == 0);
    }
    CHECK_FALSE(fs::exists(dir / "out" / "three"));
    CHECK_FALSE(fs::exists(dir / "out" / "three.partial"));
}

TEST_CASE("configuration errors name the config stage") {
    const auto dir = scratch("bad_config");
    std::ofstream(dir / "config.json") << R"({"region_id": "x"})";
    try {
        load_pipeline_config(dir / "config.json");
        FAIL("expected StageError");
    } catch (const StageError &e) {
        CHECK(e.stage() == "config");
    }
    CHECK_THROWS_AS(load_pipeline_config(dir / "missing.json"), StageError);
}

TEST_CASE("distance distribution") {
    const std::vector<Scenario> scenarios(kAllScenarios.begin(), kAllScenarios.end());
    const std::vector<double> edges{0, 2, 5, 10, 30};

    std::vector<DistanceRecord> one{{3.0, 50.0, {5, 10, 12, 20, 25}}};
    const auto single = distance_distribution(one, scenarios, edges);
    REQUIRE(single.rows.size() == 4 * scenarios.size());
    for (const auto &row : single.rows) {
        if (row.band_min_km == 2.0) {
            CHECK(row.trips == 50.0);
            CHECK(row.share == one[0].slc[index_of(row.scenario)] / 50.0);
        } else {
            CHECK(row.trips == 0.0);
            CHECK(row.share == 0.0);
        }
    }

    // Band membership is (lower, upper].
    std::vector<DistanceRecord> edge_case{{2.0, 10.0, {1, 1, 1, 1, 1}}};
    const auto at_edge = distance_distribution(edge_case, scenarios, edges);
    CHECK(at_edge.rows[index_of(Scenario::baseline)].trips == 10.0);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(0.1, 35.0);
    std::vector<DistanceRecord> many;
    double in_range = 0.0;
    double out_of_range = 0.0;
    for (int i = 0; i < 500; ++i) {
        DistanceRecord r{d(rng), static_cast<double>(10 + rng() % 90), {}};
        for (auto &v : r.slc) {
            v = r.all * 0.3;
        }
        (r.d_km <= 30.0 ? in_range : out_of_range) += r.all;
        many.push_back(r);
    }
    const auto dist = distance_distribution(many, scenarios, edges);
    double counted = 0.0;
    for (const auto &row : dist.rows) {
        CHECK(row.share >= 0.0);
        CHECK(row.share <= 1.0);
        if (row.scenario == Scenario::baseline) {
            counted += row.trips;
        }
    }
    CHECK(counted == in_range);
    CHECK(dist.out_of_range_trips == out_of_range);

    const auto csv = to_csv(dist);
    CHECK(csv.substr(0, csv.find('\n')).find("band_min_km") != std::string::npos);
    CHECK(std::count(csv.begin(), csv.end(), '\n') == static_cast<long>(dist.rows.size() + 1));
    CHECK(to_json(dist).size() == dist.rows.size());

    CHECK_THROWS_AS(distance_distribution(one, scenarios, std::vector<double>{}), ValidationError);
    CHECK_THROWS_AS(distance_distribution(one, scenarios, std::vector<double>{0, 5, 3}), ValidationError);
}

TEST_CASE("go dutch shares by band ignore observed cycling") {
    const ModelCoefficients c{-3.0, -0.25, 0.8, 0.0, -0.2, 0.0, 0.0};
    const ScenarioParams p{2.5, -0.07, 0.3, 0.05, 0.1};
    const std::vector<double> edges{0, 2, 4, 6, 10, 30};
    const std::vector<Scenario> dutch{Scenario::godutch};
    std::mt19937_64 rng(12);
    std::vector<DistanceRecord> a;
    std::vector<DistanceRecord> b;
    for (int i = 0; i < 200; ++i) {
        ODPair od;
        od.all = 20 + static_cast<std::int64_t>(rng() % 200);
        od.cycle = static_cast<std::int64_t>(rng() % 10);
        od.car = od.all - od.cycle;
        ODPair other = od;
        other.cycle = static_cast<std::int64_t>(rng() % (od.all / 2));
        other.car = other.all - other.cycle;
        const double d = 0.5 + static_cast<double>(rng() % 250) / 10.0;
        const double h = static_cast<double>(rng() % 50) / 10.0;
        DistanceRecord ra{d, static_cast<double>(od.all), {}};
        DistanceRecord rb = ra;
        ra.slc[index_of(Scenario::godutch)] = scenario_godutch(c, p, d, h, od);
        rb.slc[index_of(Scenario::godutch)] = scenario_godutch(c, p, d, h, other);
        a.push_back(ra);
        b.push_back(rb);
    }
    const auto da = distance_distribution(a, dutch, edges);
    const auto db = distance_distribution(b, dutch, edges);
    REQUIRE(da.rows.size() == db.rows.size());
    for (std::size_t i = 0; i < da.rows.size(); ++i) {
        CHECK(da.rows[i].share == db.rows[i].share);
    }
}

TEST_CASE("rank_lines") {
    std::vector<LineSummary> lines{summary("A", "B", 5, 10, 1), summary("A", "C", 9, 3, 2), summary("B", "C", 7, 8, 3)};
    CHECK(rank_lines(lines, Scenario::godutch, RankKey::slc, 1) == std::vector<std::size_t>{1});
    CHECK(rank_lines(lines, Scenario::godutch, RankKey::slc, 10) == std::vector<std::size_t>{1, 2, 0});
    CHECK(rank_lines(lines, Scenario::godutch, RankKey::health_value, 3) == std::vector<std::size_t>{0, 2, 1});
    CHECK(rank_lines(lines, Scenario::godutch, RankKey::co2_saved, 2) == std::vector<std::size_t>{2, 1});

    std::vector<LineSummary> tied{summary("C", "D", 4, 0, 0), summary("A", "Z", 4, 0, 0), summary("A", "B", 4, 0, 0)};
    CHECK(rank_lines(tied, Scenario::baseline, RankKey::slc, 3) == std::vector<std::size_t>{2, 1, 0});
    CHECK_THROWS_AS(rank_lines(lines, Scenario::godutch, RankKey::slc, 0), ValidationError);

    for (auto key : {RankKey::slc, RankKey::health_value, RankKey::co2_saved}) {
        CHECK(parse_rank_key(to_string(key)) == key);
    }
    CHECK_THROWS_AS(parse_rank_key("popularity"), ParseError);
}

TEST_CASE("health ranking favours a long low-volume line over a short busy one") {
    const auto params = testing::test_impact_params();
    const MortalityTable table({{"LA", Sex::male, 16, 64, 0.002}, {"LA", Sex::female, 16, 64, 0.002}});
    const AgeProfiles profiles({{"census", {{Sex::male, 16, 64, 0.5}, {Sex::female, 16, 64, 0.5}}},
                                {"netherlands", {{Sex::male, 16, 64, 0.5}, {Sex::female, 16, 64, 0.5}}}});
    const ImpactContext ctx{params, table, profiles};

    auto make = [&](std::string dest, std::int64_t all, double new_cyclists, double d_km) {
        ODPair od;
        od.origin = "A";
        od.dest = std::move(dest);
        od.all = all;
        od.car = all;
        const ScenarioResult r{Scenario::govtarget, new_cyclists, apportion_mode_shift(od, new_cyclists)};
        const auto impact = impact_for_od(od, r, d_km, "LA", ctx);
        LineSummary s;
        s.origin = od.origin;
        s.dest = od.dest;
        s.slc[index_of(Scenario::govtarget)] = new_cyclists;
        s.health_value[index_of(Scenario::govtarget)] = impact.health_value;
        s.co2_saved[index_of(Scenario::govtarget)] = impact.co2_saved_kg;
        return s;
    };
    // Short trips stay below the benefit cap, so minutes (and benefit) scale with distance.
    const std::vector<LineSummary> lines{make("SHORT", 400, 40.0, 1.0), make("LONG", 100, 25.0, 4.0)};
    CHECK(rank_lines(lines, Scenario::govtarget, RankKey::slc, 1) == std::vector<std::size_t>{0});
    CHECK(rank_lines(lines, Scenario::govtarget, RankKey::health_value, 1) == std::vector<std::size_t>{1});
}

TEST_CASE("line summaries read back from a bundle") {
    const auto dir = scratch("summaries");
    const auto config_path =
        testing::write_synthetic_inputs(dir, three_zones(), false, dir / "out", dir / "cache");
    build_region(load_pipeline_config(config_path));
    const auto lines = read_json(dir / "out" / "three" / "lines.geojson");
    const auto summaries = line_summaries(lines);
    const auto records = distance_records(lines);
    REQUIRE(summaries.size() == lines["features"].size());
    for (std::size_t i = 0; i < summaries.size(); ++i) {
        const auto &p = lines["features"][i]["properties"];
        CHECK(summaries[i].origin == p["origin"].get<std::string>());
        CHECK(summaries[i].slc[index_of(Scenario::godutch)] == p["dutch_slc"].get<double>());
        CHECK(summaries[i].health_value[index_of(Scenario::ebikes)] == p["ebike_health_value"].get<double>());
    }
    for (const auto &r : records) {
        CHECK(r.d_km > 0.0);
    }
}

TEST_CASE("fitting from a route cache recovers the generating model") {
    auto options = three_zones();
    options.rows = 6;
    options.cols = 6;
    options.min_all = 2000;
    options.max_all = 4000;
    options.region_id = "fitme";
    const auto dir = scratch("fit_cache");
    const auto config_path = testing::write_synthetic_inputs(dir, options, true, dir / "out", dir / "cache");
    const auto summary = build_region(load_pipeline_config(config_path));
    CHECK(summary.lines > 100);

    FitOptions fit;
    fit.active = {true, true, true, false, true, false, false};
    const auto from_cache = fit_from_route_cache(dir / "od.csv", dir / "cache", fit);
    CHECK(from_cache.missing_routes == 0);
    CHECK(from_cache.coefficients.alpha == doctest::Approx(options.truth.alpha).epsilon(0.15));
    CHECK(from_cache.coefficients.beta_d == doctest::Approx(options.truth.beta_d).epsilon(0.15));
    CHECK(from_cache.coefficients.gamma_h == doctest::Approx(options.truth.gamma_h).epsilon(0.25));

    const auto stats = read_json(dir / "out" / "fitme" / "stats" / "stats.json");
    CHECK(stats["coefficient_source"] == "fitted");
}

TEST_CASE("sha256") {
    CHECK(sha256_hex("abc") == "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    CHECK(sha256_hex("") == "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855");
}
