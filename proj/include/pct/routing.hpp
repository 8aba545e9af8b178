#pragma once

#include "pct/core_data.hpp"

#include <atomic>
#include <chrono>
#include <filesystem>
#include <functional>
#include <memory>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pct {

enum class RouteProfile { fast, quiet };

std::string_view to_string(RouteProfile profile);
RouteProfile parse_route_profile(std::string_view text);
/// Value of the `plan` query parameter: fastest or quietest.
std::string_view plan_name(RouteProfile profile);

/// Circuity above which a route is flagged (CROW design guidance).
inline constexpr double kCrowCircuityBenchmark = 1.2;

struct Route {
    std::string origin;
    std::string dest;
    RouteProfile profile = RouteProfile::fast;
    std::vector<Point> coords;
    double distance_m = 0.0;
    double gradient_pct = 0.0;
    std::optional<std::vector<double>> elevations_m;

    double distance_km() const noexcept { return distance_m / 1000.0; }

    friend bool operator==(const Route &, const Route &) = default;
};

struct RouteRequest {
    std::string origin;
    std::string dest;
    Point from;
    Point to;
    RouteProfile profile = RouteProfile::fast;
};

/// Great-circle length of a polyline in km.
double path_length_km(std::span<const Point> coords);

/// 100 * total absolute elevation change / path length. Throws on mismatched lengths.
double mean_gradient(std::span<const Point> coords, std::span<const double> elevations_m, double distance_km);

/// route_km / euclid_km, reported to 12 decimal places.
double circuity(double route_km, double euclid_km);

/// Parses the routing document: {"coordinates": [[lon, lat], ...], "distance_m": x, "elevations_m": [...]}.
/// Checks the result against the request: endpoints within 1e-6 degrees of the
/// request points and length not shorter than the great-circle distance.
Route parse_route_document(std::string_view body, const RouteRequest &request);
/// Same document without the endpoint and length checks (centroids unknown).
Route parse_route_body(std::string_view body, std::string_view origin, std::string_view dest, RouteProfile profile);
std::string serialize_route_document(const Route &route);

/// Structural validation shared by every route source.
void validate_route(const Route &route, const Point &from, const Point &to);

struct StubOptions {
    /// Grid spacing for intermediate vertices along each leg; 0 disables densification.
    double densify_step_deg = 0.0;
    /// Optional synthetic terrain; when empty routes are flat.
    std::function<double(const Point &)> elevation;
};

/// Smooth synthetic terrain used by the offline stub.
std::function<double(const Point &)> synthetic_terrain(double amplitude_m, double wavelength_deg);

/// Deterministic offline route. Fast is a two-leg axis-aligned path through the corner
/// on the latitude farther from the equator; quiet is a three-leg staircase whose
/// crossing leg runs closer to the equator, so it is never shorter than fast.
/// Geometry depends only on the unordered endpoint pair, so A->B mirrors B->A.
Route stub_route(const RouteRequest &request, const StubOptions &options = {});

class RoutingBackend {
  public:
    virtual ~RoutingBackend() = default;
    /// Returns the raw routing document for the request.
    virtual std::string fetch_document(const RouteRequest &request) = 0;
};

class StubBackend final : public RoutingBackend {
  public:
    explicit StubBackend(StubOptions options = {}) : options_{std::move(options)} {}
    std::string fetch_document(const RouteRequest &request) override;

  private:
    StubOptions options_;
};

struct ServiceConfig {
    /// e.g. http://host:port/api/journey
    std::string base_url;
    std::string api_key;
    std::chrono::seconds timeout{30};
};

/// HTTP client for the routing service: GET <base>?plan=<fastest|quietest>&points=lon,lat|lon,lat[&key=...].
class ServiceBackend final : public RoutingBackend {
  public:
    explicit ServiceBackend(ServiceConfig config);
    std::string fetch_document(const RouteRequest &request) override;

  private:
    ServiceConfig config_;
    std::string host_;
    std::string path_;
};

/// One file per (origin, dest, profile) named `<origin>_<dest>_<profile>`.
class RouteCache {
  public:
    explicit RouteCache(std::filesystem::path dir);

    std::filesystem::path path_for(std::string_view origin, std::string_view dest, RouteProfile profile) const;
    std::optional<std::string> load(std::string_view origin, std::string_view dest, RouteProfile profile) const;
    /// Write-temp-then-rename.
    void store(std::string_view origin, std::string_view dest, RouteProfile profile, std::string_view body) const;
    const std::filesystem::path &dir() const noexcept { return dir_; }

  private:
    std::filesystem::path dir_;
};

/// Spaces requests at least 1/rate seconds apart across all threads. rate <= 0 disables.
class RateLimiter {
  public:
    explicit RateLimiter(double requests_per_second);
    void acquire();

  private:
    std::chrono::steady_clock::duration interval_{};
    std::chrono::steady_clock::time_point next_{};
    std::mutex mutex_;
};

struct ClientOptions {
    std::size_t parallelism = 4;
    double rate_limit_per_s = 0.0;
    int max_retries = 2;
};

struct RouteOutcome {
    std::optional<Route> route;
    std::string error;
};

class RouteClient {
  public:
    RouteClient(std::shared_ptr<RoutingBackend> backend, std::optional<RouteCache> cache, ClientOptions options = {});

    /// Cache first, then the backend. Successful backend responses are cached.
    Route fetch_route(const RouteRequest &request);

    /// Routes every request with bounded parallelism; result i belongs to request i.
    std::vector<RouteOutcome> route_batch(std::span<const RouteRequest> requests);

    std::size_t backend_calls() const noexcept { return backend_calls_; }

  private:
    std::shared_ptr<RoutingBackend> backend_;
    std::optional<RouteCache> cache_;
    ClientOptions options_;
    RateLimiter limiter_;
    std::atomic<std::size_t> backend_calls_{0};
};

} // namespace pct
