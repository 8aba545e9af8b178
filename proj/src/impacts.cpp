#include "pct/impacts.hpp"

#include "pct/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pct {

namespace {

constexpr double kWeightTolerance = 1e-9;

bool uses_netherlands_profile(Scenario s) { return s == Scenario::godutch || s == Scenario::ebikes; }

} // namespace

AgeProfiles::AgeProfiles(std::map<std::string, AgeProfile> profiles) : profiles_{std::move(profiles)} {
    for (const auto &[label, profile] : profiles_) {
        double total = 0.0;
        for (const auto &cell : profile) {
            if (cell.weight < 0.0) {
                throw ValidationError(fmt::format("age profile '{}': negative weight", label));
            }
            total += cell.weight;
        }
        if (std::abs(total - 1.0) > kWeightTolerance) {
            throw ValidationError(fmt::format("age profile '{}': weights sum to {}, expected 1", label, total));
        }
    }
}

const AgeProfile &AgeProfiles::for_scenario(Scenario s) const {
    if (auto it = profiles_.find(std::string(to_string(s))); it != profiles_.end()) {
        return it->second;
    }
    const char *fallback = uses_netherlands_profile(s) ? "netherlands" : "census";
    if (auto it = profiles_.find(fallback); it != profiles_.end()) {
        return it->second;
    }
    throw NotFound(fmt::format("no cyclist age profile for scenario {} (nor '{}')", to_string(s), fallback));
}

AgeProfiles parse_age_profiles(std::istream &in) {
    std::string line;
    if (!std::getline(in, line) || split_csv_line(line) !=
                                       std::vector<std::string>{"scenario", "sex", "age_min", "age_max", "weight"}) {
        throw ParseError("age profile table: expected header 'scenario,sex,age_min,age_max,weight'");
    }
    std::map<std::string, AgeProfile> profiles;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        const auto f = split_csv_line(line);
        if (f.size() == 1 && f[0].empty()) {
            continue;
        }
        if (f.size() != 5) {
            throw ParseError(fmt::format("age profile line {}: expected 5 columns, found {}", line_no, f.size()));
        }
        try {
            profiles[f[0]].push_back({parse_sex(f[1]), std::stoi(f[2]), std::stoi(f[3]), std::stod(f[4])});
        } catch (const std::logic_error &) {
            throw ParseError(fmt::format("age profile line {}: malformed number", line_no));
        }
    }
    return AgeProfiles(std::move(profiles));
}

AgeProfiles read_age_profiles(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open age profile table " + path);
    }
    return parse_age_profiles(in);
}

void validate(const ImpactParams &p) {
    if (!(p.speed_cycle > 0.0 && p.speed_walk > 0.0 && p.speed_ebike > 0.0)) {
        throw ValidationError("impact parameters: speeds must be positive");
    }
    if (!(p.rr_cycle > 0.0 && p.rr_cycle < 1.0 && p.rr_walk > 0.0 && p.rr_walk < 1.0)) {
        throw ValidationError("impact parameters: relative risks must lie in (0, 1)");
    }
    if (!(p.ref_min_cycle > 0.0 && p.ref_min_walk > 0.0 && p.benefit_cap > 0.0)) {
        throw ValidationError("impact parameters: reference minutes and cap must be positive");
    }
    if (!(p.ebike_benefit_scale > 0.0 && p.ebike_benefit_scale <= 1.0)) {
        throw ValidationError("impact parameters: ebike_benefit_scale must lie in (0, 1]");
    }
    if (!(p.vsl >= 0.0 && p.commute_trips_per_week >= 0.0 && p.weeks_per_year >= 0.0 && p.co2_kg_per_km >= 0.0)) {
        throw ValidationError("impact parameters: vsl, trip counts and CO2 factor must be non-negative");
    }
}

ImpactParams parse_impact_params(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(std::string("impact parameter file: ") + e.what());
    }
    auto get = [&](const char *key, std::optional<double> fallback = std::nullopt) {
        if (!doc.contains(key)) {
            if (fallback) {
                return *fallback;
            }
            throw ParseError(fmt::format("impact parameter file: missing '{}'", key));
        }
        if (!doc[key].is_number()) {
            throw ParseError(fmt::format("impact parameter file: '{}' must be a number", key));
        }
        return doc[key].get<double>();
    };
    ImpactParams p;
    p.speed_cycle = get("speed_cycle");
    p.speed_walk = get("speed_walk");
    p.speed_ebike = get("speed_ebike");
    p.rr_cycle = get("rr_cycle");
    p.rr_walk = get("rr_walk");
    p.ref_min_cycle = get("ref_min_cycle");
    p.ref_min_walk = get("ref_min_walk");
    p.benefit_cap = get("benefit_cap");
    p.ebike_benefit_scale = get("ebike_benefit_scale");
    p.vsl = get("vsl");
    p.commute_trips_per_week = get("commute_trips_per_week", 10.0);
    p.weeks_per_year = get("weeks_per_year", 45.6);
    p.co2_kg_per_km = get("co2_kg_per_km", 0.186);
    validate(p);
    return p;
}

ImpactParams read_impact_params(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open impact parameter file " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_impact_params(buffer.str());
}

double weekly_active_minutes(double d_km, double speed_kmh, double trips_per_week) {
    if (!(speed_kmh > 0.0)) {
        throw ValidationError(fmt::format("speed must be positive, got {}", speed_kmh));
    }
    return d_km / speed_kmh * 60.0 * trips_per_week;
}

double deaths_avoided(double delta_people, double minutes_per_week, double rr, double ref_minutes, double cap,
                      double mortality_rate, double benefit_scale) {
    const double volume = std::min(minutes_per_week / ref_minutes, cap);
    return delta_people * mortality_rate * (1.0 - rr) * volume * benefit_scale;
}

double walking_displacement_harm(double displaced_walk, double d_km, const ImpactParams &params,
                                 double mortality_rate) {
    const double minutes = weekly_active_minutes(d_km, params.speed_walk, params.commute_trips_per_week);
    return deaths_avoided(displaced_walk, minutes, params.rr_walk, params.ref_min_walk, params.benefit_cap,
                          mortality_rate, 1.0);
}

double blended_mortality_rate(const MortalityTable &table, std::string_view area_id, const AgeProfile &profile) {
    double total_weight = 0.0;
    for (const auto &cell : profile) {
        total_weight += cell.weight;
    }
    if (std::abs(total_weight - 1.0) > kWeightTolerance) {
        throw ValidationError(fmt::format("age profile weights sum to {}, expected 1", total_weight));
    }
    // Sum in (sex, age) order so the result does not depend on profile row order.
    std::vector<const AgeProfileCell *> cells;
    for (const auto &cell : profile) {
        cells.push_back(&cell);
    }
    std::sort(cells.begin(), cells.end(), [](const auto *a, const auto *b) {
        return std::tie(a->sex, a->age_min, a->age_max, a->weight) < std::tie(b->sex, b->age_min, b->age_max, b->weight);
    });
    double rate = 0.0;
    for (const auto *cell : cells) {
        rate += cell->weight * table.rate(area_id, cell->sex, cell->age_min, cell->age_max);
    }
    return rate;
}

double co2_saved(double displaced_car, double route_km, const ImpactParams &params) {
    return displaced_car * route_km * params.commute_trips_per_week * params.weeks_per_year * params.co2_kg_per_km;
}

ImpactResult impact_for_od(const ODPair &od, const ScenarioResult &result, double route_km,
                           std::string_view mortality_area, const ImpactContext &ctx, double godutch_slc) {
    ImpactResult out;
    out.scenario = result.scenario;
    const double cycle = static_cast<double>(od.cycle);
    const double delta = std::max(result.slc - cycle, 0.0);
    if (delta == 0.0) {
        return out;
    }
    const auto &p = ctx.params;
    const double rate = blended_mortality_rate(ctx.mortality, mortality_area, ctx.profiles.for_scenario(result.scenario));

    double conventional = delta;
    double electric = 0.0;
    if (result.scenario == Scenario::ebikes) {
        conventional = std::min(std::max(godutch_slc - cycle, 0.0), delta);
        electric = delta - conventional;
    }

    const double cycle_minutes = weekly_active_minutes(route_km, p.speed_cycle, p.commute_trips_per_week);
    out.deaths_avoided_cycle =
        deaths_avoided(conventional, cycle_minutes, p.rr_cycle, p.ref_min_cycle, p.benefit_cap, rate, 1.0);
    if (electric > 0.0) {
        const double ebike_minutes = weekly_active_minutes(route_km, p.speed_ebike, p.commute_trips_per_week);
        out.deaths_avoided_cycle += deaths_avoided(electric, ebike_minutes, p.rr_cycle, p.ref_min_cycle,
                                                   p.benefit_cap, rate, p.ebike_benefit_scale);
    }
    out.deaths_incurred_walk = walking_displacement_harm(result.displaced.walk, route_km, p, rate);
    out.net_deaths_avoided = out.deaths_avoided_cycle - out.deaths_incurred_walk;
    out.health_value = out.net_deaths_avoided * p.vsl;
    out.co2_saved_kg = co2_saved(result.displaced.car, route_km, p);
    return out;
}

} // namespace pct
