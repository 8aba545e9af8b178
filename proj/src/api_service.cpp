#include "pct/api_service.hpp"

#include "pct/error.hpp"

#include <fmt/format.h>
#include <httplib.h>

#include <algorithm>
#include <charconv>
#include <limits>

namespace pct {

namespace {

constexpr std::array<Layer, 6> kAllLayers = {Layer::zones,       Layer::straight_lines, Layer::fast_routes,
                                             Layer::quiet_routes, Layer::network,        Layer::centroids};

const char *bundle_file(Layer layer) {
    switch (layer) {
    case Layer::zones:
        return "zones.geojson";
    case Layer::straight_lines:
        return "lines.geojson";
    case Layer::fast_routes:
        return "routes_fast.geojson";
    case Layer::quiet_routes:
        return "routes_quiet.geojson";
    case Layer::network:
        return "network.geojson";
    case Layer::centroids:
        return "centroids.geojson";
    }
    return "";
}

void extend_bbox(const json &coords, BoundingBox &box, bool &empty) {
    if (!coords.is_array() || coords.empty()) {
        return;
    }
    if (coords[0].is_number()) {
        const double lon = coords[0].get<double>();
        const double lat = coords[1].get<double>();
        if (empty) {
            box = {lon, lat, lon, lat};
            empty = false;
        } else {
            box.min_lon = std::min(box.min_lon, lon);
            box.min_lat = std::min(box.min_lat, lat);
            box.max_lon = std::max(box.max_lon, lon);
            box.max_lat = std::max(box.max_lat, lat);
        }
        return;
    }
    for (const auto &c : coords) {
        extend_bbox(c, box, empty);
    }
}

HttpResponse json_response(int status, const json &body) {
    HttpResponse r;
    r.status = status;
    r.body = body.dump() + "\n";
    return r;
}

HttpResponse error_response(int status, std::string_view code, std::string_view message) {
    return json_response(status, {{"error", {{"code", code}, {"message", message}}}});
}

std::string active_key(Layer layer, Scenario s, std::string_view field) {
    if (s == Scenario::baseline) {
        return "";
    }
    const std::string prefix(property_prefix(s));
    if (layer == Layer::centroids) {
        return field == "slc" ? "intrazonal_" + prefix + "_slc" : "";
    }
    if (layer == Layer::network && field != "slc") {
        return "";
    }
    return prefix + "_" + std::string(field);
}

json pick(const json &props, const std::string &key) {
    if (key.empty() || !props.contains(key)) {
        return nullptr;
    }
    return props[key];
}

void add_active_properties(Layer layer, Scenario s, json &props) {
    json slc;
    json health;
    json co2;
    if (s == Scenario::baseline) {
        switch (layer) {
        case Layer::network:
            slc = props["baseline"];
            break;
        case Layer::centroids:
            slc = props["intrazonal_cycle"];
            break;
        default:
            slc = props["cycle"];
            health = 0.0;
            co2 = 0.0;
        }
    } else {
        slc = pick(props, active_key(layer, s, "slc"));
        health = pick(props, active_key(layer, s, "health_value"));
        co2 = pick(props, active_key(layer, s, "co2_saved"));
    }
    props["scenario"] = std::string(to_string(s));
    props["slc"] = slc;
    props["health_value"] = health;
    props["co2_saved"] = co2;
}

std::map<std::string, std::string> with_active(std::map<std::string, std::string> schema) {
    schema["scenario"] = "string";
    schema["slc"] = "number?";
    schema["health_value"] = "number?";
    schema["co2_saved"] = "number?";
    return schema;
}

void add_prefixed(std::map<std::string, std::string> &schema, std::initializer_list<const char *> suffixes,
                  const std::string &lead = "") {
    for (auto s : {Scenario::govtarget, Scenario::genderequal, Scenario::godutch, Scenario::ebikes}) {
        for (const char *suffix : suffixes) {
            schema[lead + std::string(property_prefix(s)) + suffix] = "number?";
        }
    }
}

std::map<std::string, std::string> build_schema(Layer layer) {
    std::map<std::string, std::string> s;
    switch (layer) {
    case Layer::zones:
        s = {{"id", "string"},           {"name", "string"},           {"mortality_area", "string"},
             {"area_km2", "number"},     {"all", "number"},            {"cycle", "number"},
             {"intrazonal_all", "number"}, {"intrazonal_cycle", "number"}, {"intrazonal_rate", "number"}};
        add_prefixed(s, {"_slc", "_health_value", "_co2_saved"});
        add_prefixed(s, {"_slc"}, "intrazonal_");
        break;
    case Layer::centroids:
        s = {{"id", "string"},
             {"name", "string"},
             {"intrazonal_all", "number"},
             {"intrazonal_cycle", "number"},
             {"intrazonal_rate", "number"}};
        add_prefixed(s, {"_slc"}, "intrazonal_");
        break;
    case Layer::straight_lines:
        s = {{"id", "string"},          {"origin", "string"},         {"dest", "string"},
             {"all", "number"},         {"cycle", "number"},          {"walk", "number"},
             {"car", "number"},         {"other", "number"},          {"euclid_km", "number"},
             {"fast_km", "number?"},    {"quiet_km", "number?"},      {"gradient_pct", "number?"},
             {"circuity_fast", "number?"}, {"circuity_quiet", "number?"}, {"routing_error", "string?"}};
        add_prefixed(s, {"_slc", "_net_deaths", "_health_value", "_co2_saved"});
        break;
    case Layer::fast_routes:
    case Layer::quiet_routes:
        s = {{"id", "string"},        {"origin", "string"},       {"dest", "string"},     {"profile", "string"},
             {"all", "number"},       {"cycle", "number"},        {"walk", "number"},     {"car", "number"},
             {"other", "number"},     {"euclid_km", "number"},    {"distance_km", "number"},
             {"gradient_pct", "number"}, {"circuity", "number"},  {"exceeds_crow", "boolean"}};
        add_prefixed(s, {"_slc", "_net_deaths", "_health_value", "_co2_saved"});
        break;
    case Layer::network:
        s = {{"baseline", "number"},  {"govtarget_slc", "number"}, {"genderequal_slc", "number?"},
             {"dutch_slc", "number"}, {"ebike_slc", "number"},     {"length_km", "number"}};
        break;
    }
    return with_active(std::move(s));
}

const char *geometry_type(Layer layer) {
    switch (layer) {
    case Layer::zones:
        return "Polygon|MultiPolygon";
    case Layer::centroids:
        return "Point";
    default:
        return "LineString";
    }
}

bool type_matches(const json &value, std::string_view type) {
    const bool nullable = !type.empty() && type.back() == '?';
    if (nullable) {
        type.remove_suffix(1);
        if (value.is_null()) {
            return true;
        }
    }
    if (type == "number") {
        return value.is_number();
    }
    if (type == "string") {
        return value.is_string();
    }
    if (type == "boolean") {
        return value.is_boolean();
    }
    return false;
}

std::optional<std::size_t> parse_count(std::string_view text) {
    std::size_t value = 0;
    const auto *end = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(text.data(), end, value);
    if (ec != std::errc{} || ptr != end) {
        return std::nullopt;
    }
    return value;
}

} // namespace

std::string_view to_string(Layer layer) {
    switch (layer) {
    case Layer::zones:
        return "zones";
    case Layer::straight_lines:
        return "straight_lines";
    case Layer::fast_routes:
        return "fast_routes";
    case Layer::quiet_routes:
        return "quiet_routes";
    case Layer::network:
        return "network";
    case Layer::centroids:
        return "centroids";
    }
    return "unknown";
}

Layer parse_layer(std::string_view text) {
    for (auto l : kAllLayers) {
        if (to_string(l) == text) {
            return l;
        }
    }
    throw NotFound(fmt::format("unknown layer '{}'", text));
}

bool is_line_layer(Layer layer) noexcept {
    return layer == Layer::straight_lines || layer == Layer::fast_routes || layer == Layer::quiet_routes;
}

LayerQuery parse_layer_query(std::string region, std::string_view layer, const QueryParams &params) {
    LayerQuery q;
    q.region = std::move(region);
    q.layer = parse_layer(layer);
    if (auto it = params.find("scenario"); it != params.end()) {
        try {
            q.scenario = parse_scenario(it->second);
        } catch (const Error &e) {
            throw ValidationError(e.what());
        }
    }
    if (auto it = params.find("n"); it != params.end()) {
        auto n = parse_count(it->second);
        if (!n || *n == 0) {
            throw ValidationError(fmt::format("n must be an integer >= 1, got '{}'", it->second));
        }
        if (!is_line_layer(q.layer)) {
            throw ValidationError("n applies to line layers only");
        }
        q.n = n;
    }
    if (auto it = params.find("order_by"); it != params.end()) {
        try {
            q.order_by = parse_rank_key(it->second);
        } catch (const Error &e) {
            throw ValidationError(e.what());
        }
        if (q.order_by != RankKey::slc) {
            if (!is_line_layer(q.layer)) {
                throw ValidationError("order_by applies to line layers only");
            }
            if (q.scenario == Scenario::baseline) {
                throw ValidationError("order_by other than slc needs a scenario other than baseline");
            }
        }
    }
    if (auto it = params.find("download"); it != params.end()) {
        if (it->second != "0" && it->second != "1") {
            throw ValidationError("download must be 0 or 1");
        }
        q.download = it->second == "1";
    }
    return q;
}

RegionBundle load_bundle(const std::filesystem::path &dir) {
    RegionBundle b;
    const auto manifest = read_json_file((dir / "manifest.json").string());
    b.id = manifest.at("region_id").get<std::string>();
    for (auto l : kAllLayers) {
        b.layers[l] = read_json_file((dir / bundle_file(l)).string());
    }
    b.stats = read_json_file((dir / "stats" / "stats.json").string());
    const auto &names = b.stats.at("scenarios");
    b.gender_available = std::find(names.begin(), names.end(), "genderequal") != names.end();
    bool empty = true;
    for (const auto &f : b.layers[Layer::zones].at("features")) {
        extend_bbox(f.at("geometry").at("coordinates"), b.bbox, empty);
    }
    return b;
}

std::vector<RegionBundle> load_bundles(const std::filesystem::path &root) {
    std::vector<RegionBundle> out;
    if (!std::filesystem::is_directory(root)) {
        throw NotFound("bundle directory " + root.string() + " does not exist");
    }
    for (const auto &entry : std::filesystem::directory_iterator(root)) {
        if (entry.is_directory() && std::filesystem::exists(entry.path() / "manifest.json")) {
            out.push_back(load_bundle(entry.path()));
        }
    }
    std::sort(out.begin(), out.end(), [](const auto &a, const auto &b) { return a.id < b.id; });
    return out;
}

const std::map<std::string, std::string> &layer_schema(Layer layer) {
    static const auto schemas = [] {
        std::map<Layer, std::map<std::string, std::string>> m;
        for (auto l : kAllLayers) {
            m[l] = build_schema(l);
        }
        return m;
    }();
    return schemas.at(layer);
}

std::vector<std::string> validate_feature(Layer layer, const json &feature) {
    std::vector<std::string> problems;
    if (!feature.is_object() || feature.value("type", "") != "Feature") {
        problems.push_back("not a GeoJSON Feature");
        return problems;
    }
    const std::string geometry = feature.contains("geometry") && feature["geometry"].is_object()
                                     ? feature["geometry"].value("type", "")
                                     : "";
    const std::string allowed = geometry_type(layer);
    if (geometry.empty() || (allowed != geometry && allowed.find(geometry + "|") != 0 &&
                             allowed.find("|" + geometry) == std::string::npos)) {
        problems.push_back(fmt::format("geometry type '{}' not allowed (expected {})", geometry, allowed));
    }
    if (!feature.contains("properties") || !feature["properties"].is_object()) {
        problems.push_back("missing properties object");
        return problems;
    }
    const auto &props = feature["properties"];
    const auto &schema = layer_schema(layer);
    for (const auto &[name, type] : schema) {
        if (!props.contains(name)) {
            problems.push_back("missing property " + name);
        } else if (!type_matches(props[name], type)) {
            problems.push_back(fmt::format("property {} should be {}", name, type));
        }
    }
    for (const auto &[name, value] : props.items()) {
        if (!schema.count(name)) {
            problems.push_back("unexpected property " + name);
        }
    }
    return problems;
}

ApiService::ApiService(std::vector<RegionBundle> bundles) : bundles_{std::move(bundles)} {
    std::sort(bundles_.begin(), bundles_.end(), [](const auto &a, const auto &b) { return a.id < b.id; });
}

const RegionBundle *ApiService::find(std::string_view id) const {
    for (const auto &b : bundles_) {
        if (b.id == id) {
            return &b;
        }
    }
    return nullptr;
}

HttpResponse ApiService::regions() const {
    json list = json::array();
    for (const auto &b : bundles_) {
        json scenarios = b.stats.at("scenarios");
        list.push_back({{"id", b.id},
                        {"bbox", {b.bbox.min_lon, b.bbox.min_lat, b.bbox.max_lon, b.bbox.max_lat}},
                        {"scenarios", scenarios}});
    }
    return json_response(200, {{"regions", list}});
}

json ApiService::layer_collection(const LayerQuery &query) const {
    const auto *bundle = find(query.region);
    if (!bundle) {
        throw NotFound(fmt::format("unknown region '{}'", query.region));
    }
    if (query.scenario == Scenario::genderequal && !bundle->gender_available) {
        throw ValidationError(fmt::format("region '{}' has no gender split; genderequal is unavailable", query.region));
    }
    const auto &source = bundle->layers.at(query.layer).at("features");
    std::vector<std::size_t> selected;
    if (is_line_layer(query.layer) && query.n) {
        const auto summaries = line_summaries(bundle->layers.at(query.layer));
        selected = rank_lines(summaries, query.scenario, query.order_by, *query.n);
    } else {
        selected.resize(source.size());
        for (std::size_t i = 0; i < selected.size(); ++i) {
            selected[i] = i;
        }
    }
    json features = json::array();
    for (auto i : selected) {
        json f = source[i];
        add_active_properties(query.layer, query.scenario, f["properties"]);
        features.push_back(std::move(f));
    }
    return feature_collection(std::move(features));
}

HttpResponse ApiService::layer(std::string_view region, std::string_view layer, const QueryParams &params) const {
    try {
        if (!find(region)) {
            return error_response(404, "not_found", fmt::format("unknown region '{}'", region));
        }
        const auto query = parse_layer_query(std::string(region), layer, params);
        auto response = json_response(200, layer_collection(query));
        response.content_type = "application/geo+json";
        if (query.download) {
            response.headers["Content-Disposition"] = fmt::format(
                "attachment; filename=\"{}_{}_{}.geojson\"", region, to_string(query.layer), to_string(query.scenario));
        }
        return response;
    } catch (const NotFound &e) {
        return error_response(404, "not_found", e.what());
    } catch (const ValidationError &e) {
        return error_response(400, "invalid_query", e.what());
    }
}

HttpResponse ApiService::stats(std::string_view region) const {
    const auto *bundle = find(region);
    if (!bundle) {
        return error_response(404, "not_found", fmt::format("unknown region '{}'", region));
    }
    return json_response(200, bundle->stats);
}

HttpResponse ApiService::get(std::string_view path, const QueryParams &params) const {
    if (path == "/regions" || path == "/regions/") {
        return regions();
    }
    constexpr std::string_view prefix = "/regions/";
    if (path.substr(0, prefix.size()) == prefix) {
        const auto rest = path.substr(prefix.size());
        const auto slash = rest.find('/');
        if (slash != std::string_view::npos && slash > 0) {
            const auto id = rest.substr(0, slash);
            const auto tail = rest.substr(slash + 1);
            if (tail == "layer") {
                const auto it = params.find("layer");
                if (it == params.end()) {
                    return error_response(400, "invalid_query", "missing 'layer' parameter");
                }
                return layer(id, it->second, params);
            }
            if (tail == "stats") {
                return stats(id);
            }
        }
    }
    return error_response(404, "not_found", fmt::format("no such endpoint {}", path));
}

struct HttpServer::Impl {
    httplib::Server server;
};

HttpServer::HttpServer(const ApiService &service, std::optional<std::filesystem::path> static_root)
    : impl_{std::make_unique<Impl>()} {
    auto handler = [&service](const httplib::Request &req, httplib::Response &res) {
        QueryParams params;
        for (const auto &[k, v] : req.params) {
            params.emplace(k, v);
        }
        const auto r = service.get(req.path, params);
        res.status = r.status;
        for (const auto &[k, v] : r.headers) {
            res.set_header(k, v);
        }
        res.set_content(r.body, r.content_type);
    };
    impl_->server.Get(R"(/regions(/.*)?)", handler);
    if (static_root) {
        if (!impl_->server.set_mount_point("/", static_root->string())) {
            throw NotFound("static root " + static_root->string() + " does not exist");
        }
    }
}

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string &host, int port) {
    if (port == 0) {
        const int bound = impl_->server.bind_to_any_port(host);
        if (bound < 0) {
            throw Error("cannot bind " + host);
        }
        return bound;
    }
    if (!impl_->server.bind_to_port(host, port)) {
        throw Error(fmt::format("cannot bind {}:{}", host, port));
    }
    return port;
}

void HttpServer::listen() { impl_->server.listen_after_bind(); }

void HttpServer::stop() { impl_->server.stop(); }

void serve(const ApiService &service, const ServerOptions &options) {
    HttpServer server(service, options.static_root);
    server.bind(options.host, options.port);
    server.listen();
}

} // namespace pct
