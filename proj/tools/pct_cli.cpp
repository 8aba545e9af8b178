#include "pct/api_service.hpp"
#include "pct/error.hpp"
#include "pct/region_pipeline.hpp"

#include <CLI11.hpp>
#include <fmt/format.h>

#include <algorithm>
#include <fstream>
#include <iostream>

namespace {

using namespace pct;

int fail(std::string_view stage, std::string_view message) {
    std::cerr << fmt::format("pct: error: [{}] {}\n", stage, message);
    return 1;
}

template <typename F>
int guarded(std::string_view stage, F &&body) {
    try {
        return body();
    } catch (const StageError &e) {
        std::cerr << "pct: error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception &e) {
        return fail(stage, e.what());
    }
}

FitOptions fit_options_from_terms(const std::vector<std::string> &terms) {
    FitOptions options;
    if (terms.empty()) {
        return options;
    }
    options.active.fill(false);
    for (const auto &t : terms) {
        auto it = std::find(kCoefficientNames.begin(), kCoefficientNames.end(), t);
        if (it == kCoefficientNames.end()) {
            throw ValidationError("unknown model term " + t);
        }
        options.active[static_cast<std::size_t>(it - kCoefficientNames.begin())] = true;
    }
    return options;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Propensity to Cycle: region builder and layer service"};
    app.require_subcommand(1);

    // build
    auto *build = app.add_subcommand("build", "Run the full pipeline for one region");
    std::string config_path;
    build->add_option("--config", config_path, "Pipeline configuration (JSON)")->required();

    // fit
    auto *fit = app.add_subcommand("fit", "Fit the propensity model from an OD table and cached fast routes");
    std::string fit_od;
    std::string fit_routes;
    std::string fit_out;
    std::vector<std::string> fit_terms;
    fit->add_option("--od", fit_od, "OD table (CSV)")->required();
    fit->add_option("--routes", fit_routes, "Route cache directory")->required();
    fit->add_option("--out", fit_out, "Coefficient file to write")->required();
    fit->add_option("--terms", fit_terms, "Active model terms (default: all)")->delimiter(',');

    // route
    auto *route = app.add_subcommand("route", "Route every eligible desire line into the cache");
    std::string route_od;
    std::string route_zones;
    std::string route_centroids;
    std::string route_cache;
    std::string backend = "stub";
    RoutingConfig rc;
    Thresholds thresholds;
    route->add_option("--od", route_od, "OD table (CSV)")->required();
    route->add_option("--zones", route_zones, "Zones (GeoJSON)")->required();
    route->add_option("--centroids", route_centroids, "Centroid table id,lon,lat");
    route->add_option("--cache", route_cache, "Route cache directory")->required();
    route->add_option("--backend", backend, "stub or service")->check(CLI::IsMember({"stub", "service"}));
    route->add_option("--base-url", rc.base_url, "Routing service endpoint");
    route->add_option("--api-key", rc.api_key, "Routing service key");
    route->add_option("--rate", rc.rate_limit_per_s, "Max requests per second (0 = unlimited)");
    route->add_option("--parallel", rc.parallelism, "Concurrent requests")->check(CLI::PositiveNumber);
    route->add_option("--densify", rc.stub_densify_step_deg, "Stub vertex spacing in degrees");
    route->add_option("--terrain-amplitude", rc.stub_terrain_amplitude_m, "Stub terrain amplitude in metres");
    route->add_option("--max-euclid-km", thresholds.max_euclid_km, "Eligibility distance threshold");
    route->add_option("--min-commuters", thresholds.min_commuters, "Eligibility commuter threshold");

    // stats
    auto *stats = app.add_subcommand("stats", "Print diagnostics for a built bundle");
    std::string bundle_dir;
    std::string stats_scenario = "godutch";
    std::string order_by = "slc";
    std::size_t top_n = 0;
    stats->add_option("--bundle", bundle_dir, "Bundle directory")->required();
    stats->add_option("--scenario", stats_scenario, "Scenario for the top-n table");
    stats->add_option("--top", top_n, "Print the top-n lines");
    stats->add_option("--order-by", order_by, "slc, health_value or co2_saved");

    // serve
    auto *serve_cmd = app.add_subcommand("serve", "Serve region bundles over HTTP");
    std::string bundles_root;
    ServerOptions server;
    std::string static_root;
    serve_cmd->add_option("--bundles", bundles_root, "Directory holding region bundles")->required();
    serve_cmd->add_option("--host", server.host, "Listen address");
    serve_cmd->add_option("--port", server.port, "Listen port");
    serve_cmd->add_option("--static", static_root, "Static file root for the map UI");

    CLI11_PARSE(app, argc, argv);

    if (*build) {
        return guarded("config", [&] {
            const auto cfg = load_pipeline_config(config_path);
            const auto s = build_region(cfg);
            std::cout << fmt::format("built {}: {} lines, {} excluded, {} intrazonal, {} outside region, "
                                     "{} routing errors, {} network segments\n",
                                     s.bundle_dir.string(), s.lines, s.excluded, s.intrazonal, s.outside_region,
                                     s.routing_errors, s.network_segments);
            return 0;
        });
    }
    if (*fit) {
        return guarded("fit", [&] {
            const auto summary = fit_from_route_cache(fit_od, fit_routes, fit_options_from_terms(fit_terms));
            std::ofstream out(fit_out, std::ios::binary | std::ios::trunc);
            out << serialize_coefficients(summary.coefficients);
            if (!out) {
                throw Error("cannot write " + fit_out);
            }
            std::cout << fmt::format("fitted on {} observations in {} iterations (log-likelihood {:.6f}); "
                                     "{} pairs without a cached route\n",
                                     summary.report.observations_used, summary.report.iterations,
                                     summary.report.log_likelihood, summary.missing_routes);
            return 0;
        });
    }
    if (*route) {
        return guarded("route", [&] {
            const auto pairs = aggregate_bidirectional(read_od_table(route_od));
            const ZoneIndex zones(read_zones(
                route_zones, route_centroids.empty() ? std::nullopt : std::optional<std::string>(route_centroids)));
            const auto split = filter_eligible(pairs, zones, thresholds);
            std::shared_ptr<RoutingBackend> be;
            if (backend == "service") {
                if (rc.base_url.empty()) {
                    throw ValidationError("--base-url is required for the service backend");
                }
                be = std::make_shared<ServiceBackend>(ServiceConfig{rc.base_url, rc.api_key});
            } else {
                StubOptions opts;
                opts.densify_step_deg = rc.stub_densify_step_deg;
                if (rc.stub_terrain_amplitude_m > 0.0) {
                    opts.elevation = synthetic_terrain(rc.stub_terrain_amplitude_m, rc.stub_terrain_wavelength_deg);
                }
                be = std::make_shared<StubBackend>(std::move(opts));
            }
            RouteClient client(be, RouteCache(route_cache), ClientOptions{rc.parallelism, rc.rate_limit_per_s, 2});
            std::vector<RouteRequest> requests;
            for (const auto &l : split.lines) {
                for (auto p : {RouteProfile::fast, RouteProfile::quiet}) {
                    requests.push_back({l.od.origin, l.od.dest, l.from, l.to, p});
                }
            }
            const auto outcomes = client.route_batch(requests);
            std::size_t errors = 0;
            for (std::size_t i = 0; i < outcomes.size(); ++i) {
                if (!outcomes[i].route) {
                    ++errors;
                    std::cerr << fmt::format("pct: route {} -> {} ({}): {}\n", requests[i].origin, requests[i].dest,
                                             to_string(requests[i].profile), outcomes[i].error);
                }
            }
            std::cout << fmt::format("routed {} of {} requests ({} backend calls)\n", outcomes.size() - errors,
                                     outcomes.size(), client.backend_calls());
            if (errors > 0) {
                return fail("route", fmt::format("{} requests failed", errors));
            }
            return 0;
        });
    }
    if (*stats) {
        return guarded("stats", [&] {
            const auto stats_doc = read_json_file((std::filesystem::path(bundle_dir) / "stats" / "stats.json").string());
            std::cout << "coefficients: " << stats_doc.at("coefficients").dump() << "\n";
            std::ifstream csv(std::filesystem::path(bundle_dir) / "stats" / "distance_distribution.csv");
            std::cout << csv.rdbuf();
            if (top_n > 0) {
                const auto lines = read_json_file((std::filesystem::path(bundle_dir) / "lines.geojson").string());
                const auto summaries = line_summaries(lines);
                const auto scenario = parse_scenario(stats_scenario);
                const auto key = parse_rank_key(order_by);
                std::cout << fmt::format("top {} lines by {} ({}):\n", top_n, order_by, stats_scenario);
                for (auto i : rank_lines(summaries, scenario, key, top_n)) {
                    const auto &l = summaries[i];
                    const auto s = index_of(scenario);
                    std::cout << fmt::format("  {} -> {}: slc {:.2f}, health value {:.2f}, CO2 {:.2f} kg\n", l.origin,
                                             l.dest, l.slc[s], l.health_value[s], l.co2_saved[s]);
                }
            }
            return 0;
        });
    }
    if (*serve_cmd) {
        return guarded("serve", [&] {
            if (!static_root.empty()) {
                server.static_root = static_root;
            }
            ApiService service(load_bundles(bundles_root));
            std::cout << fmt::format("serving {} on http://{}:{}\n", bundles_root, server.host, server.port)
                      << std::flush;
            serve(service, server);
            return 0;
        });
    }
    return 0;
}
