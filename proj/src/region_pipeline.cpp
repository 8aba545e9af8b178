#include "pct/region_pipeline.hpp"

#include "pct/error.hpp"
#include "pct/netagg.hpp"

#include <fmt/format.h>
#include <openssl/evp.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

namespace pct {

namespace {

template <typename F>
auto run_stage(const char *name, F &&body) {
    try {
        return body();
    } catch (const StageError &) {
        throw;
    } catch (const std::exception &e) {
        throw StageError(name, e.what());
    }
}

fs::path resolve(const fs::path &base, const std::string &value) {
    fs::path p(value);
    return p.is_absolute() ? p : base / p;
}

void write_text(const fs::path &path, std::string_view text) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    out.write(text.data(), static_cast<std::streamsize>(text.size()));
    if (!out) {
        throw Error("cannot write " + path.string());
    }
}

struct LineState {
    DesireLine line;
    std::optional<Route> fast;
    std::optional<Route> quiet;
    std::string routing_error;
    std::array<std::optional<ScenarioResult>, kScenarioCount> results;
    std::array<ImpactResult, kScenarioCount> impacts{};

    bool routed() const { return fast && quiet; }
};

struct IntrazonalState {
    ODPair od;
    double d_km = 0.0;
    double h_pct = 0.0;
    std::array<std::optional<ScenarioResult>, kScenarioCount> results;
    std::array<ImpactResult, kScenarioCount> impacts{};
};

constexpr std::array<Scenario, 4> kAlternativeScenarios = {Scenario::govtarget, Scenario::genderequal,
                                                           Scenario::godutch, Scenario::ebikes};

void add_scenario_properties(json &props, const std::array<std::optional<ScenarioResult>, kScenarioCount> &results,
                             const std::array<ImpactResult, kScenarioCount> &impacts, bool routed) {
    for (auto s : kAlternativeScenarios) {
        const std::string prefix(property_prefix(s));
        const auto &r = results[index_of(s)];
        const bool present = routed && r.has_value();
        const auto &impact = impacts[index_of(s)];
        props[prefix + "_slc"] = present ? json(r->slc) : json(nullptr);
        props[prefix + "_net_deaths"] = present ? json(impact.net_deaths_avoided) : json(nullptr);
        props[prefix + "_health_value"] = present ? json(impact.health_value) : json(nullptr);
        props[prefix + "_co2_saved"] = present ? json(impact.co2_saved_kg) : json(nullptr);
    }
}

json line_properties(const LineState &st) {
    const auto &od = st.line.od;
    json props;
    props["id"] = od.origin + "_" + od.dest;
    props["origin"] = od.origin;
    props["dest"] = od.dest;
    props["all"] = od.all;
    props["cycle"] = od.cycle;
    props["walk"] = od.walk;
    props["car"] = od.car;
    props["other"] = od.other;
    props["euclid_km"] = st.line.euclid_km;
    const bool routed = st.routed();
    props["fast_km"] = routed ? json(st.fast->distance_km()) : json(nullptr);
    props["quiet_km"] = routed ? json(st.quiet->distance_km()) : json(nullptr);
    props["gradient_pct"] = routed ? json(st.fast->gradient_pct) : json(nullptr);
    props["circuity_fast"] =
        routed && st.line.euclid_km > 0.0 ? json(circuity(st.fast->distance_km(), st.line.euclid_km)) : json(nullptr);
    props["circuity_quiet"] =
        routed && st.line.euclid_km > 0.0 ? json(circuity(st.quiet->distance_km(), st.line.euclid_km)) : json(nullptr);
    props["routing_error"] = st.routing_error.empty() ? json(nullptr) : json(st.routing_error);
    add_scenario_properties(props, st.results, st.impacts, routed);
    return props;
}

json route_feature(const LineState &st, const Route &route, const json &line_props) {
    json props;
    for (const char *key : {"origin", "dest", "all", "cycle", "walk", "car", "other", "euclid_km"}) {
        props[key] = line_props[key];
    }
    for (auto s : kAlternativeScenarios) {
        const std::string prefix(property_prefix(s));
        for (const char *suffix : {"_slc", "_net_deaths", "_health_value", "_co2_saved"}) {
            props[prefix + suffix] = line_props[prefix + suffix];
        }
    }
    props["id"] = fmt::format("{}_{}_{}", route.origin, route.dest, to_string(route.profile));
    props["profile"] = std::string(to_string(route.profile));
    props["distance_km"] = route.distance_km();
    props["gradient_pct"] = route.gradient_pct;
    const double c = circuity(route.distance_km(), st.line.euclid_km);
    props["circuity"] = c;
    props["exceeds_crow"] = c > kCrowCircuityBenchmark;
    return feature(line_string(route.coords), std::move(props));
}

std::string sha256_bytes(const void *data, std::size_t size) {
    unsigned char digest[EVP_MAX_MD_SIZE];
    unsigned int length = 0;
    if (EVP_Digest(data, size, digest, &length, EVP_sha256(), nullptr) != 1) {
        throw Error("SHA-256 failed");
    }
    std::string hex;
    hex.reserve(length * 2);
    for (unsigned int i = 0; i < length; ++i) {
        hex += fmt::format("{:02x}", digest[i]);
    }
    return hex;
}

std::string read_file(const fs::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error("cannot read " + path.string());
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

double number_or_zero(const json &props, const std::string &key) {
    if (!props.contains(key) || props[key].is_null()) {
        return 0.0;
    }
    return props[key].get<double>();
}

} // namespace

std::string sha256_hex(std::string_view data) { return sha256_bytes(data.data(), data.size()); }

std::string sha256_file(const fs::path &path) { return sha256_hex(read_file(path)); }

PipelineConfig load_pipeline_config(const fs::path &path) {
    return run_stage("config", [&] {
        const auto doc = read_json_file(path.string());
        const auto base = fs::absolute(path).parent_path();
        PipelineConfig cfg;
        cfg.region_id = doc.at("region_id").get<std::string>();
        if (cfg.region_id.empty() || cfg.region_id.find('/') != std::string::npos) {
            throw ValidationError("region_id must be a non-empty file name");
        }
        const auto &inputs = doc.at("inputs");
        cfg.od = resolve(base, inputs.at("od").get<std::string>());
        cfg.zones = resolve(base, inputs.at("zones").get<std::string>());
        if (inputs.contains("centroids")) {
            cfg.centroids = resolve(base, inputs["centroids"].get<std::string>());
        }
        cfg.mortality = resolve(base, inputs.at("mortality").get<std::string>());
        cfg.age_profiles = resolve(base, inputs.at("age_profiles").get<std::string>());
        if (doc.contains("thresholds")) {
            const auto &t = doc["thresholds"];
            cfg.thresholds.max_euclid_km = t.value("max_euclid_km", cfg.thresholds.max_euclid_km);
            cfg.thresholds.min_commuters = t.value("min_commuters", cfg.thresholds.min_commuters);
        }
        const auto &model = doc.at("model");
        if (model.contains("coefficients")) {
            cfg.coefficients = resolve(base, model["coefficients"].get<std::string>());
        } else if (!model.value("fit", false)) {
            throw ValidationError("model needs either 'coefficients' or \"fit\": true");
        }
        if (model.contains("active_terms")) {
            cfg.fit.active.fill(false);
            for (const auto &name : model["active_terms"]) {
                const auto n = name.get<std::string>();
                auto it = std::find(kCoefficientNames.begin(), kCoefficientNames.end(), n);
                if (it == kCoefficientNames.end()) {
                    throw ValidationError("unknown model term " + n);
                }
                cfg.fit.active[static_cast<std::size_t>(it - kCoefficientNames.begin())] = true;
            }
        }
        cfg.scenario_params = resolve(base, doc.at("scenario_params").get<std::string>());
        cfg.impact_params = resolve(base, doc.at("impact_params").get<std::string>());
        if (doc.contains("routing")) {
            const auto &r = doc["routing"];
            cfg.routing.backend = r.value("backend", cfg.routing.backend);
            cfg.routing.base_url = r.value("base_url", "");
            cfg.routing.api_key = r.value("api_key", "");
            cfg.routing.rate_limit_per_s = r.value("rate_limit_per_s", 0.0);
            cfg.routing.parallelism = r.value("parallelism", std::size_t{4});
            if (r.contains("cache_dir")) {
                cfg.routing.cache_dir = resolve(base, r["cache_dir"].get<std::string>());
            }
            if (r.contains("stub")) {
                const auto &s = r["stub"];
                cfg.routing.stub_densify_step_deg = s.value("densify_step_deg", 0.0);
                cfg.routing.stub_terrain_amplitude_m = s.value("terrain_amplitude_m", 0.0);
                cfg.routing.stub_terrain_wavelength_deg = s.value("terrain_wavelength_deg", 0.05);
            }
        }
        if (cfg.routing.backend != "stub" && cfg.routing.backend != "service") {
            throw ValidationError("routing backend must be 'stub' or 'service'");
        }
        cfg.output_dir = resolve(base, doc.at("output_dir").get<std::string>());
        if (cfg.routing.cache_dir.empty()) {
            cfg.routing.cache_dir = cfg.output_dir / "route_cache";
        }
        if (doc.contains("distance_bands_km")) {
            cfg.distance_bands_km = doc["distance_bands_km"].get<std::vector<double>>();
        }
        return cfg;
    });
}

DistanceDistribution distance_distribution(std::span<const DistanceRecord> records,
                                           std::span<const Scenario> scenarios, std::span<const double> band_edges_km) {
    if (band_edges_km.size() < 2) {
        throw ValidationError("distance distribution needs at least one band");
    }
    if (!std::is_sorted(band_edges_km.begin(), band_edges_km.end()) ||
        std::adjacent_find(band_edges_km.begin(), band_edges_km.end()) != band_edges_km.end()) {
        throw ValidationError("distance band edges must be strictly ascending");
    }
    const std::size_t bands = band_edges_km.size() - 1;
    std::vector<double> trips(bands, 0.0);
    std::vector<ScenarioValues> cyclists(bands, ScenarioValues{});
    DistanceDistribution dist;
    for (const auto &rec : records) {
        // (edge[i], edge[i+1]]
        auto it = std::lower_bound(band_edges_km.begin(), band_edges_km.end(), rec.d_km);
        if (it == band_edges_km.begin() || it == band_edges_km.end()) {
            dist.out_of_range_trips += rec.all;
            continue;
        }
        const auto band = static_cast<std::size_t>(it - band_edges_km.begin()) - 1;
        trips[band] += rec.all;
        for (std::size_t s = 0; s < kScenarioCount; ++s) {
            cyclists[band][s] += rec.slc[s];
        }
    }
    for (std::size_t b = 0; b < bands; ++b) {
        for (auto s : scenarios) {
            DistanceBandRow row;
            row.band_min_km = band_edges_km[b];
            row.band_max_km = band_edges_km[b + 1];
            row.scenario = s;
            row.trips = trips[b];
            row.cyclists = cyclists[b][index_of(s)];
            row.share = trips[b] > 0.0 ? row.cyclists / trips[b] : 0.0;
            dist.rows.push_back(row);
        }
    }
    return dist;
}

json to_json(const DistanceDistribution &dist) {
    json rows = json::array();
    for (const auto &r : dist.rows) {
        rows.push_back({{"band_min_km", r.band_min_km},
                        {"band_max_km", r.band_max_km},
                        {"scenario", std::string(to_string(r.scenario))},
                        {"trips", r.trips},
                        {"cyclists", r.cyclists},
                        {"share", r.share}});
    }
    return rows;
}

std::string to_csv(const DistanceDistribution &dist) {
    std::string out = "band_min_km,band_max_km,scenario,trips,cyclists,share\n";
    for (const auto &r : dist.rows) {
        out += fmt::format("{},{},{},{},{},{}\n", r.band_min_km, r.band_max_km, to_string(r.scenario), r.trips,
                           r.cyclists, r.share);
    }
    return out;
}

std::string_view to_string(RankKey key) {
    switch (key) {
    case RankKey::slc:
        return "slc";
    case RankKey::health_value:
        return "health_value";
    case RankKey::co2_saved:
        return "co2_saved";
    }
    return "unknown";
}

RankKey parse_rank_key(std::string_view text) {
    for (auto k : {RankKey::slc, RankKey::health_value, RankKey::co2_saved}) {
        if (to_string(k) == text) {
            return k;
        }
    }
    throw ParseError(fmt::format("unknown ranking key '{}' (slc, health_value, co2_saved)", text));
}

std::vector<std::size_t> rank_lines(std::span<const LineSummary> lines, Scenario scenario, RankKey key,
                                    std::size_t n) {
    if (n == 0) {
        throw ValidationError("top-n needs n >= 1");
    }
    const auto s = index_of(scenario);
    auto value = [&](const LineSummary &l) {
        switch (key) {
        case RankKey::slc:
            return l.slc[s];
        case RankKey::health_value:
            return l.health_value[s];
        case RankKey::co2_saved:
            return l.co2_saved[s];
        }
        return 0.0;
    };
    std::vector<std::size_t> order(lines.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        const double va = value(lines[a]);
        const double vb = value(lines[b]);
        if (va != vb) {
            return va > vb;
        }
        return std::tie(lines[a].origin, lines[a].dest) < std::tie(lines[b].origin, lines[b].dest);
    });
    order.resize(std::min(n, order.size()));
    return order;
}

std::vector<LineSummary> line_summaries(const json &lines_collection) {
    std::vector<LineSummary> out;
    for (const auto &f : lines_collection.at("features")) {
        const auto &p = f.at("properties");
        LineSummary l;
        l.origin = p.at("origin").get<std::string>();
        l.dest = p.at("dest").get<std::string>();
        l.slc[index_of(Scenario::baseline)] = number_or_zero(p, "cycle");
        for (auto s : kAlternativeScenarios) {
            const std::string prefix(property_prefix(s));
            l.slc[index_of(s)] = number_or_zero(p, prefix + "_slc");
            l.health_value[index_of(s)] = number_or_zero(p, prefix + "_health_value");
            l.co2_saved[index_of(s)] = number_or_zero(p, prefix + "_co2_saved");
        }
        out.push_back(std::move(l));
    }
    return out;
}

std::vector<DistanceRecord> distance_records(const json &lines_collection) {
    std::vector<DistanceRecord> out;
    for (const auto &f : lines_collection.at("features")) {
        const auto &p = f.at("properties");
        if (p.at("fast_km").is_null()) {
            continue;
        }
        DistanceRecord r;
        r.d_km = p["fast_km"].get<double>();
        r.all = p.at("all").get<double>();
        r.slc[index_of(Scenario::baseline)] = p.at("cycle").get<double>();
        for (auto s : kAlternativeScenarios) {
            r.slc[index_of(s)] = number_or_zero(p, std::string(property_prefix(s)) + "_slc");
        }
        out.push_back(r);
    }
    return out;
}

FitSummary fit_from_route_cache(const fs::path &od_path, const fs::path &routes_dir, const FitOptions &options) {
    const auto pairs = aggregate_bidirectional(read_od_table(od_path.string()));
    const RouteCache cache(routes_dir);
    FitSummary summary;
    std::vector<TrainingObservation> obs;
    for (const auto &od : pairs) {
        if (od.intrazonal()) {
            continue;
        }
        const auto body = cache.load(od.origin, od.dest, RouteProfile::fast);
        if (!body) {
            ++summary.missing_routes;
            continue;
        }
        const auto route = parse_route_body(*body, od.origin, od.dest, RouteProfile::fast);
        obs.push_back({route.distance_km(), route.gradient_pct, static_cast<double>(od.all),
                       static_cast<double>(od.cycle)});
    }
    summary.coefficients = fit_logistic(obs, options, &summary.report);
    return summary;
}

BuildSummary build_region(const PipelineConfig &cfg) {
    const fs::path final_dir = cfg.output_dir / cfg.region_id;
    const fs::path temp_dir = cfg.output_dir / (cfg.region_id + ".partial");
    BuildSummary summary;
    summary.bundle_dir = final_dir;

    std::error_code ec;
    fs::remove_all(temp_dir, ec);
    try {
        // ingest
        struct Ingested {
            std::size_t od_rows = 0;
            ZoneIndex zones;
            EligibilitySplit split;
            bool gender_available = false;
        };
        auto in = run_stage("ingest", [&] {
            Ingested out;
            const auto raw = read_od_table(cfg.od.string());
            out.od_rows = raw.size();
            const auto pairs = aggregate_bidirectional(raw);
            out.zones = ZoneIndex(read_zones(cfg.zones.string(),
                                             cfg.centroids ? std::optional(cfg.centroids->string()) : std::nullopt));
            out.split = filter_eligible(pairs, out.zones, cfg.thresholds);
            out.gender_available =
                !pairs.empty() && std::all_of(pairs.begin(), pairs.end(), [](const auto &od) { return od.gender; });
            return out;
        });

        // route
        std::vector<LineState> lines;
        lines.reserve(in.split.lines.size());
        for (const auto &l : in.split.lines) {
            lines.push_back(LineState{l, {}, {}, {}, {}, {}});
        }
        run_stage("route", [&] {
            std::shared_ptr<RoutingBackend> backend;
            if (cfg.routing.backend == "service") {
                backend = std::make_shared<ServiceBackend>(ServiceConfig{cfg.routing.base_url, cfg.routing.api_key});
            } else {
                StubOptions opts;
                opts.densify_step_deg = cfg.routing.stub_densify_step_deg;
                if (cfg.routing.stub_terrain_amplitude_m > 0.0) {
                    opts.elevation =
                        synthetic_terrain(cfg.routing.stub_terrain_amplitude_m, cfg.routing.stub_terrain_wavelength_deg);
                }
                backend = std::make_shared<StubBackend>(std::move(opts));
            }
            RouteClient client(backend, RouteCache(cfg.routing.cache_dir),
                               ClientOptions{cfg.routing.parallelism, cfg.routing.rate_limit_per_s, 2});
            std::vector<RouteRequest> requests;
            for (const auto &st : lines) {
                for (auto profile : {RouteProfile::fast, RouteProfile::quiet}) {
                    requests.push_back({st.line.od.origin, st.line.od.dest, st.line.from, st.line.to, profile});
                }
            }
            auto outcomes = client.route_batch(requests);
            for (std::size_t i = 0; i < lines.size(); ++i) {
                auto &fast = outcomes[2 * i];
                auto &quiet = outcomes[2 * i + 1];
                lines[i].fast = std::move(fast.route);
                lines[i].quiet = std::move(quiet.route);
                for (const auto *err : {&fast.error, &quiet.error}) {
                    if (!err->empty()) {
                        lines[i].routing_error += (lines[i].routing_error.empty() ? "" : "; ") + *err;
                    }
                }
                if (!lines[i].routed()) {
                    ++summary.routing_errors;
                }
            }
            return 0;
        });

        // fit
        std::optional<FitReport> fit_report;
        const auto coeffs = run_stage("fit", [&] {
            if (cfg.coefficients) {
                return read_coefficients(cfg.coefficients->string());
            }
            std::vector<TrainingObservation> obs;
            for (const auto &st : lines) {
                if (st.routed()) {
                    obs.push_back({st.fast->distance_km(), st.fast->gradient_pct, static_cast<double>(st.line.od.all),
                                   static_cast<double>(st.line.od.cycle)});
                }
            }
            FitReport report;
            auto fitted = fit_logistic(obs, cfg.fit, &report);
            fit_report = report;
            return fitted;
        });

        // scenarios
        std::vector<IntrazonalState> intrazonal;
        run_stage("scenarios", [&] {
            const auto params = read_scenario_params(cfg.scenario_params.string());
            std::map<std::string, std::pair<double, int>> zone_gradient;
            for (auto &st : lines) {
                if (!st.routed()) {
                    continue;
                }
                const double d = st.fast->distance_km();
                const double h = st.fast->gradient_pct;
                for (auto s : kAllScenarios) {
                    st.results[index_of(s)] = evaluate_scenario(s, coeffs, params, d, h, st.line.od);
                }
                for (const auto &z : {st.line.od.origin, st.line.od.dest}) {
                    auto &acc = zone_gradient[z];
                    acc.first += h;
                    acc.second += 1;
                }
            }
            for (const auto &od : in.split.intrazonal) {
                IntrazonalState iz;
                iz.od = od;
                iz.d_km = intrazonal_nominal_distance(in.zones.at(od.origin));
                if (auto it = zone_gradient.find(od.origin); it != zone_gradient.end()) {
                    iz.h_pct = it->second.first / it->second.second;
                }
                for (auto s : kAllScenarios) {
                    iz.results[index_of(s)] = evaluate_scenario(s, coeffs, params, iz.d_km, iz.h_pct, od);
                }
                intrazonal.push_back(std::move(iz));
            }
            return 0;
        });

        // impacts
        run_stage("impacts", [&] {
            const auto params = read_impact_params(cfg.impact_params.string());
            const auto mortality = read_mortality_table(cfg.mortality.string());
            const auto profiles = read_age_profiles(cfg.age_profiles.string());
            const ImpactContext ctx{params, mortality, profiles};
            auto fill = [&](const ODPair &od, double d_km, const auto &results, auto &impacts) {
                const auto &area = in.zones.at(od.origin).mortality_area;
                const double dutch = results[index_of(Scenario::godutch)] ? results[index_of(Scenario::godutch)]->slc : 0.0;
                for (auto s : kAllScenarios) {
                    if (const auto &r = results[index_of(s)]) {
                        impacts[index_of(s)] = impact_for_od(od, *r, d_km, area, ctx, dutch);
                    }
                }
            };
            for (auto &st : lines) {
                if (st.routed()) {
                    fill(st.line.od, st.fast->distance_km(), st.results, st.impacts);
                }
            }
            for (auto &iz : intrazonal) {
                fill(iz.od, iz.d_km, iz.results, iz.impacts);
            }
            return 0;
        });

        // network
        const auto network = run_stage("network", [&] {
            std::vector<RouteFlow> flows;
            for (const auto &st : lines) {
                if (!st.routed()) {
                    continue;
                }
                RouteFlow flow{st.fast->coords, {}};
                for (auto s : kAllScenarios) {
                    flow.values[index_of(s)] = st.results[index_of(s)] ? st.results[index_of(s)]->slc : 0.0;
                }
                flows.push_back(std::move(flow));
            }
            return merge_contiguous(overline(flows));
        });

        // write
        run_stage("write", [&] {
            fs::create_directories(temp_dir / "stats");
            std::vector<std::string> outputs;
            auto emit = [&](const std::string &name, const std::string &text) {
                write_text(temp_dir / name, text);
                outputs.push_back(name);
            };

            std::vector<Scenario> available;
            for (auto s : kAllScenarios) {
                if (s != Scenario::genderequal || in.gender_available) {
                    available.push_back(s);
                }
            }

            // lines and routes
            json line_features = json::array();
            json fast_features = json::array();
            json quiet_features = json::array();
            for (const auto &st : lines) {
                auto props = line_properties(st);
                if (st.fast) {
                    fast_features.push_back(route_feature(st, *st.fast, props));
                }
                if (st.quiet) {
                    quiet_features.push_back(route_feature(st, *st.quiet, props));
                }
                const Point ends[] = {st.line.from, st.line.to};
                line_features.push_back(feature(line_string(ends), std::move(props)));
            }
            const auto lines_fc = feature_collection(line_features);
            emit("lines.geojson", dump_stable(lines_fc));
            emit("routes_fast.geojson", dump_stable(feature_collection(std::move(fast_features))));
            emit("routes_quiet.geojson", dump_stable(feature_collection(std::move(quiet_features))));
            emit("network.geojson", dump_stable(feature_collection(network_features(network, in.gender_available))));

            // zones: half of every routed line touching the zone plus the intrazonal flow
            struct AreaTotals {
                double all = 0.0;
                ScenarioValues slc{};
                ScenarioValues health{};
                ScenarioValues co2{};
            };
            std::map<std::string, AreaTotals> totals;
            auto accumulate = [&](const std::string &zone, double weight, double all, const auto &results,
                                  const auto &impacts) {
                auto &t = totals[zone];
                t.all += weight * all;
                for (auto s : kAllScenarios) {
                    const auto i = index_of(s);
                    if (results[i]) {
                        t.slc[i] += weight * results[i]->slc;
                        t.health[i] += weight * impacts[i].health_value;
                        t.co2[i] += weight * impacts[i].co2_saved_kg;
                    }
                }
            };
            for (const auto &st : lines) {
                if (st.routed()) {
                    const auto all = static_cast<double>(st.line.od.all);
                    accumulate(st.line.od.origin, 0.5, all, st.results, st.impacts);
                    accumulate(st.line.od.dest, 0.5, all, st.results, st.impacts);
                }
            }
            std::map<std::string, const IntrazonalState *> intra_by_zone;
            for (const auto &iz : intrazonal) {
                accumulate(iz.od.origin, 1.0, static_cast<double>(iz.od.all), iz.results, iz.impacts);
                intra_by_zone[iz.od.origin] = &iz;
            }

            json zone_features = json::array();
            json centroid_features = json::array();
            for (const auto &zone : in.zones.zones()) {
                const auto &t = totals[zone.id];
                const auto *iz = intra_by_zone.count(zone.id) ? intra_by_zone[zone.id] : nullptr;
                const double intra_all = iz ? static_cast<double>(iz->od.all) : 0.0;
                const double intra_cycle = iz ? static_cast<double>(iz->od.cycle) : 0.0;
                const double intra_rate = intra_all > 0.0 ? intra_cycle / intra_all : 0.0;

                json props;
                props["id"] = zone.id;
                props["name"] = zone.name;
                props["area_km2"] = zone.area_km2;
                props["mortality_area"] = zone.mortality_area;
                props["all"] = t.all;
                props["cycle"] = t.slc[index_of(Scenario::baseline)];
                props["intrazonal_all"] = intra_all;
                props["intrazonal_cycle"] = intra_cycle;
                props["intrazonal_rate"] = intra_rate;
                for (auto s : kAlternativeScenarios) {
                    const std::string prefix(property_prefix(s));
                    const bool ok = s != Scenario::genderequal || in.gender_available;
                    props[prefix + "_slc"] = ok ? json(t.slc[index_of(s)]) : json(nullptr);
                    props[prefix + "_health_value"] = ok ? json(t.health[index_of(s)]) : json(nullptr);
                    props[prefix + "_co2_saved"] = ok ? json(t.co2[index_of(s)]) : json(nullptr);
                    props["intrazonal_" + prefix + "_slc"] =
                        ok && iz && iz->results[index_of(s)] ? json(iz->results[index_of(s)]->slc) : json(nullptr);
                }
                json centroid_props = {{"id", zone.id},
                                       {"name", zone.name},
                                       {"intrazonal_all", intra_all},
                                       {"intrazonal_cycle", intra_cycle},
                                       {"intrazonal_rate", intra_rate}};
                for (auto s : kAlternativeScenarios) {
                    const std::string key = "intrazonal_" + std::string(property_prefix(s)) + "_slc";
                    centroid_props[key] = props[key];
                }
                zone_features.push_back(feature(zone_geometry(zone), std::move(props)));
                centroid_features.push_back(
                    feature({{"type", "Point"}, {"coordinates", to_json(zone.centroid)}}, std::move(centroid_props)));
            }
            emit("zones.geojson", dump_stable(feature_collection(std::move(zone_features))));
            emit("centroids.geojson", dump_stable(feature_collection(std::move(centroid_features))));

            // stats
            const auto records = distance_records(lines_fc);
            const auto dist = distance_distribution(records, available, cfg.distance_bands_km);
            json fit_by_distance = json::array();
            for (std::size_t b = 0; b + 1 < cfg.distance_bands_km.size(); ++b) {
                double trips = 0.0;
                double observed = 0.0;
                double predicted = 0.0;
                for (const auto &st : lines) {
                    if (!st.routed()) {
                        continue;
                    }
                    const double d = st.fast->distance_km();
                    if (d > cfg.distance_bands_km[b] && d <= cfg.distance_bands_km[b + 1]) {
                        const auto all = static_cast<double>(st.line.od.all);
                        trips += all;
                        observed += static_cast<double>(st.line.od.cycle);
                        predicted += all * predict_pcycle(coeffs, d, st.fast->gradient_pct);
                    }
                }
                fit_by_distance.push_back({{"band_min_km", cfg.distance_bands_km[b]},
                                           {"band_max_km", cfg.distance_bands_km[b + 1]},
                                           {"trips", trips},
                                           {"observed_share", trips > 0.0 ? observed / trips : 0.0},
                                           {"predicted_share", trips > 0.0 ? predicted / trips : 0.0}});
            }
            json scenario_totals;
            for (auto s : available) {
                double sum = 0.0;
                for (const auto &r : records) {
                    sum += r.slc[index_of(s)];
                }
                scenario_totals[std::string(to_string(s))] = sum;
            }
            json scenario_names = json::array();
            for (auto s : available) {
                scenario_names.push_back(std::string(to_string(s)));
            }
            json coefficient_doc = json::parse(serialize_coefficients(coeffs));
            json stats = {
                {"region_id", cfg.region_id},
                {"coefficients", coefficient_doc},
                {"coefficient_source", cfg.coefficients ? "configured" : "fitted"},
                {"fit", fit_report ? json{{"iterations", fit_report->iterations},
                                          {"log_likelihood", fit_report->log_likelihood},
                                          {"observations", fit_report->observations_used}}
                                   : json(nullptr)},
                {"counts",
                 {{"od_rows", in.od_rows},
                  {"lines", lines.size()},
                  {"excluded_lines", in.split.excluded.size()},
                  {"intrazonal_pairs", in.split.intrazonal.size()},
                  {"outside_region_pairs", in.split.outside_region.size()},
                  {"routing_errors", summary.routing_errors},
                  {"network_segments", network.size()}}},
                {"thresholds",
                 {{"max_euclid_km", cfg.thresholds.max_euclid_km}, {"min_commuters", cfg.thresholds.min_commuters}}},
                {"scenarios", scenario_names},
                {"band_edges_km", cfg.distance_bands_km},
                {"distance_distribution", to_json(dist)},
                {"out_of_range_trips", dist.out_of_range_trips},
                {"model_fit_by_distance", fit_by_distance},
                {"scenario_totals", scenario_totals},
            };
            emit("stats/stats.json", dump_stable(stats));
            emit("stats/distance_distribution.csv", to_csv(dist));
            emit("stats/coefficients.json", serialize_coefficients(coeffs));

            // manifest
            json input_hashes;
            auto hash_input = [&](const char *name, const fs::path &p) {
                input_hashes[name] = {{"file", p.filename().string()}, {"sha256", sha256_file(p)}};
            };
            hash_input("od", cfg.od);
            hash_input("zones", cfg.zones);
            if (cfg.centroids) {
                hash_input("centroids", *cfg.centroids);
            }
            hash_input("mortality", cfg.mortality);
            hash_input("age_profiles", cfg.age_profiles);
            if (cfg.coefficients) {
                hash_input("coefficients", *cfg.coefficients);
            }
            hash_input("scenario_params", cfg.scenario_params);
            hash_input("impact_params", cfg.impact_params);
            json output_hashes;
            std::sort(outputs.begin(), outputs.end());
            for (const auto &name : outputs) {
                output_hashes[name] = sha256_file(temp_dir / name);
            }
            json manifest = {{"region_id", cfg.region_id},
                             {"inputs", input_hashes},
                             {"outputs", output_hashes},
                             {"thresholds",
                              {{"max_euclid_km", cfg.thresholds.max_euclid_km},
                               {"min_commuters", cfg.thresholds.min_commuters}}},
                             {"routing_backend", cfg.routing.backend}};
            write_text(temp_dir / "manifest.json", dump_stable(manifest));

            fs::remove_all(final_dir);
            fs::rename(temp_dir, final_dir);
            return 0;
        });

        summary.lines = lines.size();
        summary.excluded = in.split.excluded.size();
        summary.intrazonal = in.split.intrazonal.size();
        summary.outside_region = in.split.outside_region.size();
        summary.network_segments = network.size();
    } catch (...) {
        fs::remove_all(temp_dir, ec);
        throw;
    }
    return summary;
}

} // namespace pct
