#include "pct/geojson_io.hpp"

#include "pct/error.hpp"

#include <fmt/format.h>

#include <fstream>
#include <sstream>

namespace pct {

namespace {

Point parse_position(const json &pos) {
    if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
        throw ParseError("GeoJSON position must be [lon, lat]");
    }
    return {pos[0].get<double>(), pos[1].get<double>()};
}

Ring parse_ring(const json &ring) {
    if (!ring.is_array()) {
        throw ParseError("GeoJSON ring must be an array of positions");
    }
    Ring out;
    out.reserve(ring.size());
    for (const auto &pos : ring) {
        out.push_back(parse_position(pos));
    }
    return out;
}

Polygon parse_polygon(const json &rings) {
    if (!rings.is_array() || rings.empty()) {
        throw ParseError("GeoJSON polygon must have at least one ring");
    }
    Polygon poly;
    poly.outer = parse_ring(rings[0]);
    for (std::size_t i = 1; i < rings.size(); ++i) {
        poly.holes.push_back(parse_ring(rings[i]));
    }
    return poly;
}

json ring_json(const Ring &ring) {
    json out = json::array();
    for (const auto &p : ring) {
        out.push_back(to_json(p));
    }
    return out;
}

json polygon_json(const Polygon &poly) {
    json rings = json::array();
    rings.push_back(ring_json(poly.outer));
    for (const auto &hole : poly.holes) {
        rings.push_back(ring_json(hole));
    }
    return rings;
}

std::string property_string(const json &props, const char *key) {
    if (!props.contains(key)) {
        throw ParseError(fmt::format("zone feature missing property '{}'", key));
    }
    const auto &v = props[key];
    return v.is_string() ? v.get<std::string>() : v.dump();
}

} // namespace

std::vector<Zone> parse_zones(const json &collection, const std::map<std::string, Point> *centroids) {
    if (!collection.is_object() || collection.value("type", "") != "FeatureCollection" ||
        !collection.contains("features") || !collection["features"].is_array()) {
        throw ParseError("zones: expected a GeoJSON FeatureCollection");
    }
    std::vector<Zone> zones;
    for (const auto &f : collection["features"]) {
        const auto &props = f.contains("properties") ? f["properties"] : json::object();
        Zone zone;
        zone.id = property_string(props, "id");
        zone.name = props.contains("name") ? property_string(props, "name") : zone.id;
        zone.mortality_area = props.contains("mortality_area") ? property_string(props, "mortality_area") : zone.id;

        const auto &geom = f.at("geometry");
        const auto type = geom.value("type", "");
        if (type == "Polygon") {
            zone.boundary.push_back(parse_polygon(geom.at("coordinates")));
        } else if (type == "MultiPolygon") {
            for (const auto &rings : geom.at("coordinates")) {
                zone.boundary.push_back(parse_polygon(rings));
            }
        } else {
            throw ParseError(fmt::format("zone {}: unsupported geometry type '{}'", zone.id, type));
        }

        if (centroids) {
            auto it = centroids->find(zone.id);
            if (it == centroids->end()) {
                throw ValidationError(fmt::format("zone {}: no centroid in centroid table", zone.id));
            }
            zone.centroid = it->second;
        } else if (props.contains("centroid_lon") && props.contains("centroid_lat")) {
            zone.centroid = {props["centroid_lon"].get<double>(), props["centroid_lat"].get<double>()};
        } else {
            throw ValidationError(fmt::format("zone {}: no centroid_lon/centroid_lat and no centroid table", zone.id));
        }

        zone.area_km2 = props.contains("area_km2") ? props["area_km2"].get<double>()
                                                    : spherical_area_km2(zone.boundary);
        if (!(zone.area_km2 > 0.0)) {
            throw ValidationError(fmt::format("zone {}: area must be positive", zone.id));
        }
        if (!zone.bbox().contains(zone.centroid)) {
            throw ValidationError(fmt::format("zone {}: centroid outside boundary bounding box", zone.id));
        }
        zones.push_back(std::move(zone));
    }
    return zones;
}

std::vector<Zone> read_zones(const std::string &geojson_path, const std::optional<std::string> &centroid_csv) {
    const auto doc = read_json_file(geojson_path);
    if (!centroid_csv) {
        return parse_zones(doc);
    }
    std::ifstream in(*centroid_csv, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open centroid table " + *centroid_csv);
    }
    const auto centroids = parse_centroid_table(in);
    return parse_zones(doc, &centroids);
}

json to_json(const Point &p) { return json::array({p.lon, p.lat}); }

json line_string(std::span<const Point> coords) {
    json c = json::array();
    for (const auto &p : coords) {
        c.push_back(to_json(p));
    }
    return {{"type", "LineString"}, {"coordinates", std::move(c)}};
}

json zone_geometry(const Zone &zone) {
    if (zone.boundary.size() == 1) {
        return {{"type", "Polygon"}, {"coordinates", polygon_json(zone.boundary.front())}};
    }
    json polys = json::array();
    for (const auto &poly : zone.boundary) {
        polys.push_back(polygon_json(poly));
    }
    return {{"type", "MultiPolygon"}, {"coordinates", std::move(polys)}};
}

json feature(json geometry, json properties) {
    return {{"type", "Feature"}, {"geometry", std::move(geometry)}, {"properties", std::move(properties)}};
}

json feature_collection(json features) {
    return {{"type", "FeatureCollection"}, {"features", std::move(features)}};
}

json read_json_file(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open " + path);
    }
    try {
        return json::parse(in);
    } catch (const json::parse_error &e) {
        throw ParseError(fmt::format("{}: {}", path, e.what()));
    }
}

std::string dump_stable(const json &doc) { return doc.dump(2) + "\n"; }

} // namespace pct
