#pragma once

#include "pct/core_data.hpp"
#include "pct/geojson_io.hpp"
#include "pct/region_pipeline.hpp"
#include "pct/scenarios.hpp"

#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pct {

enum class Layer { zones, straight_lines, fast_routes, quiet_routes, network, centroids };

std::string_view to_string(Layer layer);
/// Throws NotFound for unknown layer names.
Layer parse_layer(std::string_view text);
bool is_line_layer(Layer layer) noexcept;

struct LayerQuery {
    std::string region;
    Layer layer = Layer::zones;
    Scenario scenario = Scenario::baseline;
    std::optional<std::size_t> n;
    RankKey order_by = RankKey::slc;
    bool download = false;
};

using QueryParams = std::map<std::string, std::string, std::less<>>;

/// Builds a LayerQuery from URL parameters. Unknown layers throw NotFound;
/// malformed or disallowed combinations throw ValidationError.
LayerQuery parse_layer_query(std::string region, std::string_view layer, const QueryParams &params);

/// A loaded, immutable region bundle.
struct RegionBundle {
    std::string id;
    BoundingBox bbox;
    std::map<Layer, json> layers;
    json stats;
    bool gender_available = false;
};

RegionBundle load_bundle(const std::filesystem::path &dir);
/// Every subdirectory holding a manifest.json, ordered by region id.
std::vector<RegionBundle> load_bundles(const std::filesystem::path &root);

/// Names and JSON types of every property a served feature of the layer carries.
/// Types are "number", "string", "boolean", with a trailing "?" when null is allowed.
const std::map<std::string, std::string> &layer_schema(Layer layer);
/// Problems found validating a served feature; empty when it conforms.
std::vector<std::string> validate_feature(Layer layer, const json &feature);

struct HttpResponse {
    int status = 200;
    std::string content_type = "application/json";
    std::string body;
    std::map<std::string, std::string> headers;
};

class ApiService {
  public:
    explicit ApiService(std::vector<RegionBundle> bundles);

    HttpResponse regions() const;
    HttpResponse layer(std::string_view region, std::string_view layer, const QueryParams &params) const;
    HttpResponse stats(std::string_view region) const;
    /// Dispatches a GET path to the handlers above; unknown paths are 404.
    HttpResponse get(std::string_view path, const QueryParams &params) const;

    /// The collection served for a parsed query (active-scenario properties added, top-n applied).
    json layer_collection(const LayerQuery &query) const;

  private:
    const RegionBundle *find(std::string_view id) const;
    std::vector<RegionBundle> bundles_;
};

struct ServerOptions {
    std::string host = "127.0.0.1";
    int port = 8080;
    std::optional<std::filesystem::path> static_root;
};

/// HTTP front end over an ApiService.
class HttpServer {
  public:
    HttpServer(const ApiService &service, std::optional<std::filesystem::path> static_root = {});
    ~HttpServer();
    HttpServer(const HttpServer &) = delete;
    HttpServer &operator=(const HttpServer &) = delete;

    /// Binds the listening socket; port 0 picks a free port. Returns the bound port.
    int bind(const std::string &host, int port);
    /// Blocks serving requests until stop().
    void listen();
    void stop();

  private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

/// Binds and serves until the process is stopped.
void serve(const ApiService &service, const ServerOptions &options);

} // namespace pct
