#pragma once

#include "pct/core_data.hpp"

#include <json.hpp>

#include <optional>
#include <span>
#include <string>
#include <vector>

namespace pct {

using json = nlohmann::json;

/// Loads zones from a GeoJSON FeatureCollection of Polygon/MultiPolygon features
/// with `id` and `name` properties. Centroids come from `centroid_lon`/`centroid_lat`
/// properties, or from `centroid_csv` (`id,lon,lat`) when given. Area is taken from
/// an `area_km2` property when present, else computed from the boundary.
std::vector<Zone> parse_zones(const json &collection, const std::map<std::string, Point> *centroids = nullptr);
std::vector<Zone> read_zones(const std::string &geojson_path, const std::optional<std::string> &centroid_csv = {});

json to_json(const Point &p);
json line_string(std::span<const Point> coords);
json zone_geometry(const Zone &zone);
json feature(json geometry, json properties);
json feature_collection(json features);

json read_json_file(const std::string &path);
/// Deterministic serialization: sorted keys, two-space indent, trailing newline.
std::string dump_stable(const json &doc);

} // namespace pct
