#include "pct/netagg.hpp"
#include "route_sets.hpp"

#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>
#include <set>

using namespace pct;

namespace {

ScenarioValues all_of(double v) {
    ScenarioValues out{};
    out.fill(v);
    return out;
}

const std::vector<Point> kStraight{{0.000, 0.0}, {0.001, 0.0}, {0.002, 0.0}, {0.003, 0.0}};

double weighted_length(const std::vector<RouteFlow> &routes, std::size_t s) {
    double total = 0.0;
    for (const auto &r : routes) {
        for (std::size_t i = 1; i < r.coords.size(); ++i) {
            total += r.values[s] * euclidean_km(r.coords[i - 1], r.coords[i]);
        }
    }
    return total;
}

} // namespace

TEST_CASE("atomize") {
    const auto keys = atomize(kStraight);
    REQUIRE(keys.size() == 3);
    for (const auto &k : keys) {
        CHECK(k.a < k.b);
    }
    std::vector<Point> reversed(kStraight.rbegin(), kStraight.rend());
    const auto back = atomize(reversed);
    CHECK(std::set<SegmentKey>(keys.begin(), keys.end()) == std::set<SegmentKey>(back.begin(), back.end()));

    const std::vector<Point> noisy{{0.0, 0.0}, {1e-9, 0.0}, {0.001, 0.0}};
    CHECK(atomize(noisy).size() == 1);
    CHECK(quantize({-1.5234567, 53.8000004}) == GridPoint{-1523457, 53800000});
}

TEST_CASE("overline examples") {
    const std::vector<RouteFlow> one{{kStraight, all_of(7.0)}};
    const auto single = overline(one);
    REQUIRE(single.size() == 3);
    for (const auto &seg : single) {
        CHECK(seg.values == all_of(7.0));
    }

    const std::vector<RouteFlow> twins{{kStraight, all_of(3.0)}, {kStraight, all_of(5.0)}};
    for (const auto &seg : overline(twins)) {
        CHECK(seg.values == all_of(8.0));
    }

    // Shared middle edge (0.001,0)-(0.002,0) only.
    const std::vector<RouteFlow> crossing{
        {{{0.001, -0.001}, {0.001, 0.0}, {0.002, 0.0}, {0.002, 0.001}}, all_of(2.0)},
        {{{0.000, 0.0}, {0.001, 0.0}, {0.002, 0.0}, {0.003, 0.0}}, all_of(4.0)},
    };
    const auto segs = overline(crossing);
    CHECK(segs.size() == 5);
    const auto middle = atomize(std::vector<Point>{{0.001, 0.0}, {0.002, 0.0}}).front();
    for (const auto &seg : segs) {
        if (seg.key == middle) {
            CHECK(seg.values == all_of(6.0));
        } else {
            CHECK((seg.values == all_of(2.0) || seg.values == all_of(4.0)));
        }
    }
    CHECK(overline(std::vector<RouteFlow>{}).empty());
}

TEST_CASE("a route that revisits a segment counts each pass") {
    const std::vector<RouteFlow> back_and_forth{{{{0.0, 0.0}, {0.001, 0.0}, {0.0, 0.0}}, all_of(3.0)}};
    const auto segs = overline(back_and_forth);
    REQUIRE(segs.size() == 1);
    CHECK(segs[0].values == all_of(6.0));
}

TEST_CASE("overline matches the brute-force dictionary and conserves flow") {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const auto routes = testing::random_route_set(rng, 50, 30);
        const auto segs = overline(routes);
        const auto oracle = testing::brute_force_overline(routes);
        REQUIRE(segs.size() == oracle.size());
        for (const auto &seg : segs) {
            const auto it = oracle.find(testing::segment_text(seg.key));
            REQUIRE(it != oracle.end());
            CHECK(seg.values == it->second);
        }
        for (std::size_t s = 0; s < kScenarioCount; ++s) {
            double network = 0.0;
            for (const auto &seg : segs) {
                network += seg.values[s] * length_km(seg.key);
            }
            const double expected = weighted_length(routes, s);
            CHECK(std::abs(network - expected) <= 1e-6 * std::max(expected, 1e-12));
        }
    }
}

TEST_CASE("overline does not depend on route order") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> value(0.0, 100.0);
    for (int trial = 0; trial < 20; ++trial) {
        auto routes = testing::random_route_set(rng, 40, 20);
        for (auto &r : routes) {
            for (auto &v : r.values) {
                v = value(rng);
            }
        }
        const auto base = overline(routes);
        for (int k = 0; k < 3; ++k) {
            std::shuffle(routes.begin(), routes.end(), rng);
            const auto shuffled = overline(routes);
            REQUIRE(shuffled.size() == base.size());
            for (std::size_t i = 0; i < base.size(); ++i) {
                CHECK(shuffled[i].key == base[i].key);
                CHECK(shuffled[i].values == base[i].values);
            }
        }
    }
}

TEST_CASE("network value on a corridor dominates every single route through it") {
    std::mt19937_64 rng(11);
    for (int trial = 0; trial < 20; ++trial) {
        const auto routes = testing::random_route_set(rng, 30, 25);
        const auto segs = overline(routes);
        for (const auto &seg : segs) {
            for (const auto &r : routes) {
                const auto keys = atomize(r.coords);
                if (std::find(keys.begin(), keys.end(), seg.key) != keys.end()) {
                    for (std::size_t s = 0; s < kScenarioCount; ++s) {
                        CHECK(seg.values[s] >= r.values[s]);
                    }
                }
            }
        }
    }
}

TEST_CASE("merge_contiguous") {
    const std::vector<RouteFlow> one{{kStraight, all_of(4.0)}};
    const auto merged = merge_contiguous(overline(one));
    REQUIRE(merged.size() == 1);
    CHECK(merged[0].geometry.size() == 4);
    CHECK(merged[0].values == all_of(4.0));

    // Second route covers only the last edge, so the value changes at (0.002, 0).
    const std::vector<RouteFlow> split{{kStraight, all_of(4.0)}, {{{0.002, 0.0}, {0.003, 0.0}}, all_of(1.0)}};
    const auto parts = merge_contiguous(overline(split));
    REQUIRE(parts.size() == 2);
    for (const auto &p : parts) {
        if (p.values == all_of(4.0)) {
            CHECK(p.geometry.size() == 3);
        } else {
            CHECK(p.values == all_of(5.0));
            CHECK(p.geometry.size() == 2);
        }
    }

    const std::vector<RouteFlow> loop{{{{0.0, 0.0}, {0.001, 0.0}, {0.001, 0.001}, {0.0, 0.001}, {0.0, 0.0}}, all_of(2.0)}};
    const auto ring = merge_contiguous(overline(loop));
    REQUIRE(ring.size() == 1);
    CHECK(ring[0].geometry.size() == 5);
    CHECK(ring[0].geometry.front() == ring[0].geometry.back());
    CHECK(ring[0].geometry.front() == Point{0.0, 0.0});
}

TEST_CASE("merge then re-atomize reproduces the atomic segments") {
    std::mt19937_64 rng(23);
    for (int trial = 0; trial < 50; ++trial) {
        const auto routes = testing::random_route_set(rng, 50, 30);
        const auto segs = overline(routes);
        const auto merged = merge_contiguous(segs);
        std::vector<RouteFlow> as_routes;
        double merged_length = 0.0;
        for (const auto &m : merged) {
            as_routes.push_back({m.geometry, m.values});
            merged_length += length_km(m);
        }
        const auto again = overline(as_routes);
        REQUIRE(again.size() == segs.size());
        double atomic_length = 0.0;
        for (std::size_t i = 0; i < segs.size(); ++i) {
            CHECK(again[i].key == segs[i].key);
            CHECK(again[i].values == segs[i].values);
            atomic_length += length_km(segs[i].key);
        }
        CHECK(std::abs(merged_length - atomic_length) <= 1e-9 * atomic_length);
    }
}

TEST_CASE("network features carry per-scenario volumes") {
    const std::vector<RouteFlow> one{{kStraight, {1.0, 2.0, 3.0, 4.0, 5.0}}};
    const auto merged = merge_contiguous(overline(one));
    const auto with_gender = network_features(merged, true);
    REQUIRE(with_gender.size() == 1);
    const auto &props = with_gender[0]["properties"];
    CHECK(with_gender[0]["geometry"]["type"] == "LineString");
    CHECK(props["baseline"] == 1.0);
    CHECK(props["govtarget_slc"] == 2.0);
    CHECK(props["genderequal_slc"] == 3.0);
    CHECK(props["dutch_slc"] == 4.0);
    CHECK(props["ebike_slc"] == 5.0);
    CHECK(props["length_km"].get<double>() == doctest::Approx(length_km(merged[0])));
    CHECK(network_features(merged, false)[0]["properties"]["genderequal_slc"].is_null());
}
