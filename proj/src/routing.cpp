#include "pct/routing.hpp"

#include "pct/error.hpp"

#include <fmt/format.h>
#include <httplib.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <sstream>
#include <thread>

namespace pct {

namespace {

constexpr double kEndpointToleranceDeg = 1e-6;
constexpr double kLengthToleranceKm = 1e-6;

std::string excerpt(std::string_view body) {
    constexpr std::size_t kMax = 120;
    if (body.size() <= kMax) {
        return std::string(body);
    }
    return std::string(body.substr(0, kMax)) + "...";
}

bool near(const Point &a, const Point &b) {
    return std::abs(a.lon - b.lon) <= kEndpointToleranceDeg && std::abs(a.lat - b.lat) <= kEndpointToleranceDeg;
}

void push_unique(std::vector<Point> &path, const Point &p) {
    if (path.empty() || !(path.back() == p)) {
        path.push_back(p);
    }
}

// Appends the leg a -> b (axis-aligned) to path, with grid vertices strictly inside it.
void append_leg(std::vector<Point> &path, const Point &a, const Point &b, double step) {
    push_unique(path, a);
    if (step > 0.0) {
        const bool horizontal = a.lat == b.lat;
        const double from = horizontal ? a.lon : a.lat;
        const double to = horizontal ? b.lon : b.lat;
        const double lo = std::min(from, to);
        const double hi = std::max(from, to);
        std::vector<double> ticks;
        for (auto k = static_cast<long long>(std::floor(lo / step)) + 1; static_cast<double>(k) * step < hi; ++k) {
            const double v = static_cast<double>(k) * step;
            if (v > lo) {
                ticks.push_back(v);
            }
        }
        if (from > to) {
            std::reverse(ticks.begin(), ticks.end());
        }
        for (double v : ticks) {
            push_unique(path, horizontal ? Point{v, a.lat} : Point{a.lon, v});
        }
    }
    push_unique(path, b);
}

bool lex_less(const Point &a, const Point &b) { return std::tie(a.lon, a.lat) < std::tie(b.lon, b.lat); }

} // namespace

std::string_view to_string(RouteProfile profile) { return profile == RouteProfile::fast ? "fast" : "quiet"; }

RouteProfile parse_route_profile(std::string_view text) {
    if (text == "fast") {
        return RouteProfile::fast;
    }
    if (text == "quiet") {
        return RouteProfile::quiet;
    }
    throw ParseError(fmt::format("unknown route profile '{}'", text));
}

std::string_view plan_name(RouteProfile profile) { return profile == RouteProfile::fast ? "fastest" : "quietest"; }

double path_length_km(std::span<const Point> coords) {
    double total = 0.0;
    for (std::size_t i = 1; i < coords.size(); ++i) {
        total += euclidean_km(coords[i - 1], coords[i]);
    }
    return total;
}

double mean_gradient(std::span<const Point> coords, std::span<const double> elevations_m, double distance_km) {
    if (coords.size() != elevations_m.size()) {
        throw ValidationError(fmt::format("elevation count {} does not match vertex count {}", elevations_m.size(),
                                          coords.size()));
    }
    if (!(distance_km > 0.0)) {
        throw ValidationError(fmt::format("route distance must be positive, got {}", distance_km));
    }
    double climb = 0.0;
    for (std::size_t i = 1; i < elevations_m.size(); ++i) {
        climb += std::abs(elevations_m[i] - elevations_m[i - 1]);
    }
    return 100.0 * climb / (distance_km * 1000.0);
}

double circuity(double route_km, double euclid_km) {
    if (!(euclid_km > 0.0)) {
        throw ValidationError(fmt::format("circuity undefined for Euclidean distance {}", euclid_km));
    }
    constexpr double kScale = 1e12;
    return std::round(route_km / euclid_km * kScale) / kScale;
}

void validate_route(const Route &route, const Point &from, const Point &to) {
    if (route.coords.size() < 2) {
        throw ValidationError(fmt::format("route {}->{}: fewer than 2 vertices", route.origin, route.dest));
    }
    if (!near(route.coords.front(), from) || !near(route.coords.back(), to)) {
        throw ValidationError(
            fmt::format("route {}->{}: endpoints do not match the zone centroids", route.origin, route.dest));
    }
    const double euclid = euclidean_km(from, to);
    if (!std::isfinite(route.distance_m) || route.distance_km() < euclid - kLengthToleranceKm) {
        throw ValidationError(fmt::format("route {}->{}: length {} km shorter than straight line {} km",
                                          route.origin, route.dest, route.distance_km(), euclid));
    }
    if (!(route.gradient_pct >= 0.0)) {
        throw ValidationError(fmt::format("route {}->{}: negative gradient", route.origin, route.dest));
    }
    if (route.elevations_m && route.elevations_m->size() != route.coords.size()) {
        throw ValidationError(fmt::format("route {}->{}: elevation count mismatch", route.origin, route.dest));
    }
}

Route parse_route_body(std::string_view body, std::string_view origin, std::string_view dest,
                       RouteProfile profile) {
    auto fail = [&](std::string_view why) {
        return ParseError(
            fmt::format("route {}->{} ({}): {}: {}", origin, dest, to_string(profile), why, excerpt(body)));
    };
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(body);
    } catch (const nlohmann::json::parse_error &) {
        throw fail("malformed document");
    }
    if (!doc.is_object() || !doc.contains("coordinates") || !doc["coordinates"].is_array()) {
        throw fail("missing coordinates");
    }
    if (!doc.contains("distance_m") || !doc["distance_m"].is_number()) {
        throw fail("missing distance_m");
    }
    Route route;
    route.origin = std::string(origin);
    route.dest = std::string(dest);
    route.profile = profile;
    for (const auto &pos : doc["coordinates"]) {
        if (!pos.is_array() || pos.size() < 2 || !pos[0].is_number() || !pos[1].is_number()) {
            throw fail("coordinate is not [lon, lat]");
        }
        route.coords.push_back({pos[0].get<double>(), pos[1].get<double>()});
    }
    if (route.coords.size() < 2) {
        throw fail("fewer than 2 coordinates");
    }
    route.distance_m = doc["distance_m"].get<double>();
    if (doc.contains("elevations_m") && !doc["elevations_m"].is_null()) {
        if (!doc["elevations_m"].is_array()) {
            throw fail("elevations_m is not a list");
        }
        std::vector<double> elevations;
        for (const auto &e : doc["elevations_m"]) {
            if (!e.is_number()) {
                throw fail("elevation is not a number");
            }
            elevations.push_back(e.get<double>());
        }
        route.elevations_m = std::move(elevations);
    }
    if (route.elevations_m) {
        try {
            route.gradient_pct = mean_gradient(route.coords, *route.elevations_m, route.distance_km());
        } catch (const ValidationError &e) {
            throw fail(e.what());
        }
    }
    return route;
}

Route parse_route_document(std::string_view body, const RouteRequest &request) {
    auto route = parse_route_body(body, request.origin, request.dest, request.profile);
    try {
        validate_route(route, request.from, request.to);
    } catch (const ValidationError &e) {
        throw ParseError(fmt::format("{}: {}", e.what(), excerpt(body)));
    }
    return route;
}

std::string serialize_route_document(const Route &route) {
    nlohmann::ordered_json doc;
    nlohmann::ordered_json coords = nlohmann::ordered_json::array();
    for (const auto &p : route.coords) {
        coords.push_back({p.lon, p.lat});
    }
    doc["coordinates"] = std::move(coords);
    doc["distance_m"] = route.distance_m;
    if (route.elevations_m) {
        doc["elevations_m"] = *route.elevations_m;
    }
    return doc.dump() + "\n";
}

std::function<double(const Point &)> synthetic_terrain(double amplitude_m, double wavelength_deg) {
    return [amplitude_m, wavelength_deg](const Point &p) {
        const double k = 2.0 * std::numbers::pi / wavelength_deg;
        return amplitude_m * (1.0 + 0.5 * (std::sin(k * p.lon) + std::cos(k * p.lat)));
    };
}

Route stub_route(const RouteRequest &request, const StubOptions &options) {
    const Point &a = request.from;
    const Point &b = request.to;
    if (a == b) {
        throw ValidationError(fmt::format("stub route {}->{}: identical endpoints", request.origin, request.dest));
    }
    euclidean_km(a, b); // range check

    const bool reversed = lex_less(b, a);
    const Point &lo = reversed ? b : a;
    const Point &hi = reversed ? a : b;
    const bool hi_is_polar = std::abs(hi.lat) >= std::abs(lo.lat);
    const Point &polar = hi_is_polar ? hi : lo;
    const Point &equatorial = hi_is_polar ? lo : hi;

    std::vector<Point> path;
    const double step = options.densify_step_deg;
    if (request.profile == RouteProfile::fast) {
        const Point corner = hi_is_polar ? Point{lo.lon, hi.lat} : Point{hi.lon, lo.lat};
        append_leg(path, lo, corner, step);
        append_leg(path, corner, hi, step);
    } else {
        const double delta = 0.25 * std::max(std::abs(hi.lat - lo.lat), std::abs(hi.lon - lo.lon));
        // Crossing leg never moves past the equator: parallels shrink away from it.
        double crossing = 0.0;
        if ((polar.lat >= 0.0) == (equatorial.lat >= 0.0)) {
            crossing = equatorial.lat >= 0.0 ? std::max(equatorial.lat - delta, 0.0)
                                             : std::min(equatorial.lat + delta, 0.0);
        }
        const Point c1{lo.lon, crossing};
        const Point c2{hi.lon, crossing};
        append_leg(path, lo, c1, step);
        append_leg(path, c1, c2, step);
        append_leg(path, c2, hi, step);
    }
    if (reversed) {
        std::reverse(path.begin(), path.end());
    }

    Route route;
    route.origin = request.origin;
    route.dest = request.dest;
    route.profile = request.profile;
    route.coords = std::move(path);
    // Sum legs in canonical direction so both orientations give identical lengths.
    std::vector<Point> canonical = route.coords;
    if (reversed) {
        std::reverse(canonical.begin(), canonical.end());
    }
    route.distance_m = path_length_km(canonical) * 1000.0;
    if (options.elevation) {
        std::vector<double> elevations;
        elevations.reserve(route.coords.size());
        for (const auto &p : route.coords) {
            elevations.push_back(options.elevation(p));
        }
        route.gradient_pct = mean_gradient(route.coords, elevations, route.distance_km());
        route.elevations_m = std::move(elevations);
    }
    return route;
}

std::string StubBackend::fetch_document(const RouteRequest &request) {
    return serialize_route_document(stub_route(request, options_));
}

ServiceBackend::ServiceBackend(ServiceConfig config) : config_{std::move(config)} {
    const auto scheme = config_.base_url.find("://");
    if (scheme == std::string::npos) {
        throw ValidationError("routing base URL needs a scheme: " + config_.base_url);
    }
    const auto slash = config_.base_url.find('/', scheme + 3);
    host_ = config_.base_url.substr(0, slash);
    path_ = slash == std::string::npos ? "/" : config_.base_url.substr(slash);
}

std::string ServiceBackend::fetch_document(const RouteRequest &request) {
    httplib::Client client(host_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    httplib::Params params{
        {"plan", std::string(plan_name(request.profile))},
        {"points", fmt::format("{:.7f},{:.7f}|{:.7f},{:.7f}", request.from.lon, request.from.lat, request.to.lon,
                               request.to.lat)},
    };
    if (!config_.api_key.empty()) {
        params.emplace("key", config_.api_key);
    }
    auto res = client.Get(path_, params, httplib::Headers{});
    if (!res) {
        throw RetriableError(fmt::format("routing service {} unreachable: {}", host_, httplib::to_string(res.error())));
    }
    if (res->status == 429) {
        throw ThrottleError(fmt::format("routing service quota exceeded for {}->{}", request.origin, request.dest));
    }
    if (res->status >= 500) {
        throw RetriableError(fmt::format("routing service returned {}", res->status));
    }
    if (res->status != 200) {
        throw Error(fmt::format("routing service returned {}: {}", res->status, excerpt(res->body)));
    }
    return res->body;
}

RouteCache::RouteCache(std::filesystem::path dir) : dir_{std::move(dir)} { std::filesystem::create_directories(dir_); }

std::filesystem::path RouteCache::path_for(std::string_view origin, std::string_view dest,
                                           RouteProfile profile) const {
    return dir_ / fmt::format("{}_{}_{}", origin, dest, to_string(profile));
}

std::optional<std::string> RouteCache::load(std::string_view origin, std::string_view dest,
                                            RouteProfile profile) const {
    std::ifstream in(path_for(origin, dest, profile), std::ios::binary);
    if (!in) {
        return std::nullopt;
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return buffer.str();
}

void RouteCache::store(std::string_view origin, std::string_view dest, RouteProfile profile,
                       std::string_view body) const {
    const auto target = path_for(origin, dest, profile);
    auto temp = target;
    temp += fmt::format(".tmp.{}", std::hash<std::thread::id>{}(std::this_thread::get_id()));
    {
        std::ofstream out(temp, std::ios::binary | std::ios::trunc);
        out.write(body.data(), static_cast<std::streamsize>(body.size()));
        if (!out) {
            throw Error("cannot write route cache file " + temp.string());
        }
    }
    std::filesystem::rename(temp, target);
}

RateLimiter::RateLimiter(double requests_per_second) {
    if (requests_per_second > 0.0) {
        interval_ = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
            std::chrono::duration<double>(1.0 / requests_per_second));
    }
}

void RateLimiter::acquire() {
    if (interval_ == std::chrono::steady_clock::duration::zero()) {
        return;
    }
    std::chrono::steady_clock::time_point slot;
    {
        std::lock_guard lock(mutex_);
        const auto now = std::chrono::steady_clock::now();
        slot = std::max(now, next_);
        next_ = slot + interval_;
    }
    std::this_thread::sleep_until(slot);
}

RouteClient::RouteClient(std::shared_ptr<RoutingBackend> backend, std::optional<RouteCache> cache,
                         ClientOptions options)
    : backend_{std::move(backend)}, cache_{std::move(cache)}, options_{options},
      limiter_{options.rate_limit_per_s} {}

Route RouteClient::fetch_route(const RouteRequest &request) {
    if (cache_) {
        if (auto body = cache_->load(request.origin, request.dest, request.profile)) {
            return parse_route_document(*body, request);
        }
    }
    for (int attempt = 0;; ++attempt) {
        try {
            limiter_.acquire();
            ++backend_calls_;
            const auto body = backend_->fetch_document(request);
            auto route = parse_route_document(body, request);
            if (cache_) {
                cache_->store(request.origin, request.dest, request.profile, body);
            }
            return route;
        } catch (const RetriableError &) {
            if (attempt >= options_.max_retries) {
                throw;
            }
            std::this_thread::sleep_for(std::chrono::milliseconds(100 * (attempt + 1)));
        }
    }
}

std::vector<RouteOutcome> RouteClient::route_batch(std::span<const RouteRequest> requests) {
    std::vector<RouteOutcome> outcomes(requests.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (auto i = next++; i < requests.size(); i = next++) {
            try {
                outcomes[i].route = fetch_route(requests[i]);
            } catch (const std::exception &e) {
                outcomes[i].error = e.what();
            }
        }
    };
    const auto threads = std::max<std::size_t>(1, std::min(options_.parallelism, requests.size()));
    {
        std::vector<std::jthread> pool;
        for (std::size_t t = 1; t < threads; ++t) {
            pool.emplace_back(worker);
        }
        worker();
    }
    return outcomes;
}

} // namespace pct
