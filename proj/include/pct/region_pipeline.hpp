#pragma once

#include "pct/core_data.hpp"
#include "pct/geojson_io.hpp"
#include "pct/impacts.hpp"
#include "pct/mode_model.hpp"
#include "pct/routing.hpp"
#include "pct/scenarios.hpp"

#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pct {

namespace fs = std::filesystem;

struct RoutingConfig {
    std::string backend = "stub"; ///< stub | service
    std::string base_url;
    std::string api_key;
    double rate_limit_per_s = 0.0;
    std::size_t parallelism = 4;
    fs::path cache_dir;
    double stub_densify_step_deg = 0.0;
    double stub_terrain_amplitude_m = 0.0;
    double stub_terrain_wavelength_deg = 0.05;
};

/// Everything `build` needs. Relative paths in the file resolve against the config's directory.
struct PipelineConfig {
    std::string region_id;
    fs::path od;
    fs::path zones;
    std::optional<fs::path> centroids;
    fs::path mortality;
    fs::path age_profiles;
    Thresholds thresholds;
    /// When empty the model is fitted on the region's routed lines.
    std::optional<fs::path> coefficients;
    FitOptions fit;
    fs::path scenario_params;
    fs::path impact_params;
    RoutingConfig routing;
    fs::path output_dir;
    std::vector<double> distance_bands_km{0, 2, 4, 6, 8, 10, 15, 20, 25, 30};
};

PipelineConfig load_pipeline_config(const fs::path &path);

struct BuildSummary {
    fs::path bundle_dir;
    std::size_t lines = 0;
    std::size_t excluded = 0;
    std::size_t intrazonal = 0;
    std::size_t outside_region = 0;
    std::size_t routing_errors = 0;
    std::size_t network_segments = 0;
};

/// Runs ingest -> route -> fit -> scenarios -> impacts -> network -> write and leaves
/// `<output_dir>/<region_id>/` holding zones, centroids, lines, routes, network, stats
/// and a manifest of input/output SHA-256 hashes. On failure throws StageError and
/// leaves no partial bundle behind.
BuildSummary build_region(const PipelineConfig &config);

// Diagnostics

struct DistanceRecord {
    double d_km = 0.0;
    double all = 0.0;
    ScenarioValues slc{};
};

struct DistanceBandRow {
    double band_min_km = 0.0;
    double band_max_km = 0.0;
    Scenario scenario = Scenario::baseline;
    double trips = 0.0;
    double cyclists = 0.0;
    double share = 0.0;
};

struct DistanceDistribution {
    std::vector<DistanceBandRow> rows;
    double out_of_range_trips = 0.0;
};

/// Bands are (edge[i], edge[i+1]]. Rows are ordered band-major, scenario-minor.
DistanceDistribution distance_distribution(std::span<const DistanceRecord> records,
                                           std::span<const Scenario> scenarios, std::span<const double> band_edges_km);

json to_json(const DistanceDistribution &dist);
std::string to_csv(const DistanceDistribution &dist);

enum class RankKey { slc, health_value, co2_saved };

std::string_view to_string(RankKey key);
/// Throws ParseError for unknown keys.
RankKey parse_rank_key(std::string_view text);

struct LineSummary {
    std::string origin;
    std::string dest;
    ScenarioValues slc{};
    ScenarioValues health_value{};
    ScenarioValues co2_saved{};
};

/// Indices of the top-n lines, descending by key; ties by (origin, dest).
std::vector<std::size_t> rank_lines(std::span<const LineSummary> lines, Scenario scenario, RankKey key,
                                    std::size_t n);

/// Reads the per-line summaries back from a bundle's lines feature collection.
std::vector<LineSummary> line_summaries(const json &lines_collection);
/// Distance records (fast-route distance) from a bundle's lines feature collection.
std::vector<DistanceRecord> distance_records(const json &lines_collection);

// Sub-commands that work without a full config.

struct FitSummary {
    ModelCoefficients coefficients;
    FitReport report;
    std::size_t missing_routes = 0;
};

/// Fits the model from an OD table and a directory of cached fast-route documents.
FitSummary fit_from_route_cache(const fs::path &od_path, const fs::path &routes_dir, const FitOptions &options = {});

std::string sha256_hex(std::string_view data);
std::string sha256_file(const fs::path &path);

} // namespace pct
