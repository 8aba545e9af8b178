#pragma once

#include "pct/core_data.hpp"
#include "pct/geojson_io.hpp"
#include "pct/scenarios.hpp"

#include <compare>
#include <cstdint>
#include <span>
#include <vector>

namespace pct {

/// Coordinates snapped to a 1e-6 degree grid.
struct GridPoint {
    std::int64_t lon_e6 = 0;
    std::int64_t lat_e6 = 0;

    auto operator<=>(const GridPoint &) const = default;
};

inline constexpr double kGridScale = 1e6;

GridPoint quantize(const Point &p) noexcept;
Point to_point(const GridPoint &g) noexcept;

/// Undirected segment with a < b.
struct SegmentKey {
    GridPoint a;
    GridPoint b;

    auto operator<=>(const SegmentKey &) const = default;
};

double length_km(const SegmentKey &key);

/// One key per consecutive vertex pair; zero-length pairs after snapping are dropped.
std::vector<SegmentKey> atomize(std::span<const Point> coords);

struct RouteFlow {
    std::vector<Point> coords;
    ScenarioValues values{};
};

struct AtomicSegment {
    SegmentKey key;
    ScenarioValues values{};
};

/// Sums route values per atomic segment. A route passing a segment k times contributes
/// k times. Contributions are summed in ascending value order, so the result does not
/// depend on route order. Output is sorted by key.
std::vector<AtomicSegment> overline(std::span<const RouteFlow> routes);

struct NetworkSegment {
    std::vector<Point> geometry;
    ScenarioValues values{};
};

double length_km(const NetworkSegment &segment);

/// Joins chains of segments through degree-2 vertices whose two segments carry equal
/// values. Closed loops come out as rings starting at their smallest vertex.
std::vector<NetworkSegment> merge_contiguous(std::span<const AtomicSegment> segments);

/// GeoJSON LineString features with `baseline`, `govtarget_slc`, `genderequal_slc`,
/// `dutch_slc`, `ebike_slc` and `length_km` properties. genderequal_slc is null when
/// the region has no gender split.
json network_features(std::span<const NetworkSegment> segments, bool gender_available);

} // namespace pct
