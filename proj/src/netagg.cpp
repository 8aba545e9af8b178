#include "pct/netagg.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace pct {

GridPoint quantize(const Point &p) noexcept {
    return {std::llround(p.lon * kGridScale), std::llround(p.lat * kGridScale)};
}

Point to_point(const GridPoint &g) noexcept {
    return {static_cast<double>(g.lon_e6) / kGridScale, static_cast<double>(g.lat_e6) / kGridScale};
}

double length_km(const SegmentKey &key) { return euclidean_km(to_point(key.a), to_point(key.b)); }

std::vector<SegmentKey> atomize(std::span<const Point> coords) {
    std::vector<SegmentKey> keys;
    for (std::size_t i = 1; i < coords.size(); ++i) {
        const auto p = quantize(coords[i - 1]);
        const auto q = quantize(coords[i]);
        if (p == q) {
            continue;
        }
        keys.push_back(p < q ? SegmentKey{p, q} : SegmentKey{q, p});
    }
    return keys;
}

std::vector<AtomicSegment> overline(std::span<const RouteFlow> routes) {
    std::map<SegmentKey, std::vector<std::size_t>> contributions;
    for (std::size_t r = 0; r < routes.size(); ++r) {
        for (const auto &key : atomize(routes[r].coords)) {
            contributions[key].push_back(r);
        }
    }
    std::vector<AtomicSegment> out;
    out.reserve(contributions.size());
    std::vector<double> column;
    for (const auto &[key, route_ids] : contributions) {
        AtomicSegment seg{key, {}};
        for (std::size_t s = 0; s < kScenarioCount; ++s) {
            column.clear();
            for (auto r : route_ids) {
                column.push_back(routes[r].values[s]);
            }
            std::sort(column.begin(), column.end());
            double sum = 0.0;
            for (double v : column) {
                sum += v;
            }
            seg.values[s] = sum;
        }
        out.push_back(seg);
    }
    return out;
}

double length_km(const NetworkSegment &segment) {
    double total = 0.0;
    for (std::size_t i = 1; i < segment.geometry.size(); ++i) {
        total += euclidean_km(segment.geometry[i - 1], segment.geometry[i]);
    }
    return total;
}

std::vector<NetworkSegment> merge_contiguous(std::span<const AtomicSegment> segments) {
    std::map<GridPoint, std::vector<std::size_t>> incident;
    for (std::size_t i = 0; i < segments.size(); ++i) {
        incident[segments[i].key.a].push_back(i);
        incident[segments[i].key.b].push_back(i);
    }
    auto pass_through = [&](const GridPoint &node) {
        const auto &edges = incident.at(node);
        return edges.size() == 2 && segments[edges[0]].values == segments[edges[1]].values;
    };
    auto other_end = [&](std::size_t seg, const GridPoint &node) {
        const auto &key = segments[seg].key;
        return key.a == node ? key.b : key.a;
    };

    std::vector<bool> used(segments.size(), false);
    std::vector<NetworkSegment> out;

    auto walk = [&](std::size_t seg, GridPoint start) {
        NetworkSegment chain{{to_point(start)}, segments[seg].values};
        GridPoint node = start;
        while (true) {
            used[seg] = true;
            node = other_end(seg, node);
            chain.geometry.push_back(to_point(node));
            if (node == start || !pass_through(node)) {
                break;
            }
            const auto &edges = incident.at(node);
            const auto next = edges[0] == seg ? edges[1] : edges[0];
            if (used[next]) {
                break;
            }
            seg = next;
        }
        out.push_back(std::move(chain));
    };

    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (used[i]) {
            continue;
        }
        const auto &key = segments[i].key;
        if (!pass_through(key.a)) {
            walk(i, key.a);
        } else if (!pass_through(key.b)) {
            walk(i, key.b);
        }
    }
    // Whatever is left forms closed loops of pass-through vertices.
    for (std::size_t i = 0; i < segments.size(); ++i) {
        if (!used[i]) {
            walk(i, segments[i].key.a);
        }
    }
    return out;
}

json network_features(std::span<const NetworkSegment> segments, bool gender_available) {
    json features = json::array();
    for (const auto &seg : segments) {
        json props;
        props["baseline"] = seg.values[index_of(Scenario::baseline)];
        props["govtarget_slc"] = seg.values[index_of(Scenario::govtarget)];
        props["genderequal_slc"] =
            gender_available ? json(seg.values[index_of(Scenario::genderequal)]) : json(nullptr);
        props["dutch_slc"] = seg.values[index_of(Scenario::godutch)];
        props["ebike_slc"] = seg.values[index_of(Scenario::ebikes)];
        props["length_km"] = length_km(seg);
        features.push_back(feature(line_string(seg.geometry), std::move(props)));
    }
    return features;
}

} // namespace pct
