#pragma once

#include "pct/core_data.hpp"
#include "pct/scenarios.hpp"

#include <iosfwd>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace pct {

struct AgeProfileCell {
    Sex sex = Sex::male;
    int age_min = 0;
    int age_max = 0;
    double weight = 0.0;
};

using AgeProfile = std::vector<AgeProfileCell>;

/// Age/sex profiles of cyclists keyed by label. Labels are scenario names, or
/// "census" (baseline, govtarget, genderequal) and "netherlands" (godutch, ebikes)
/// as fallbacks when no scenario-specific profile exists.
class AgeProfiles {
  public:
    AgeProfiles() = default;
    explicit AgeProfiles(std::map<std::string, AgeProfile> profiles);

    /// Throws NotFound when no profile applies to the scenario.
    const AgeProfile &for_scenario(Scenario s) const;
    const std::map<std::string, AgeProfile> &all() const noexcept { return profiles_; }

  private:
    std::map<std::string, AgeProfile> profiles_;
};

/// `scenario,sex,age_min,age_max,weight`; weights of each profile must sum to 1.
AgeProfiles parse_age_profiles(std::istream &in);
AgeProfiles read_age_profiles(const std::string &path);

struct ImpactParams {
    double speed_cycle = 0.0;     ///< km/h
    double speed_walk = 0.0;      ///< km/h
    double speed_ebike = 0.0;     ///< km/h
    double rr_cycle = 0.0;        ///< relative risk at the reference volume
    double rr_walk = 0.0;
    double ref_min_cycle = 0.0;   ///< reference minutes per week
    double ref_min_walk = 0.0;
    double benefit_cap = 0.0;     ///< max multiple of the reference volume
    double ebike_benefit_scale = 1.0;
    double vsl = 0.0;             ///< currency per statistical death
    double commute_trips_per_week = 10.0;
    double weeks_per_year = 45.6;
    double co2_kg_per_km = 0.186; ///< per car-km
};

/// Throws ValidationError when an invariant fails (speeds > 0, 0 < rr < 1, ...).
void validate(const ImpactParams &params);
/// JSON object; all keys required except commute_trips_per_week, weeks_per_year, co2_kg_per_km.
ImpactParams parse_impact_params(std::string_view text);
ImpactParams read_impact_params(const std::string &path);

struct ImpactResult {
    Scenario scenario = Scenario::baseline;
    double deaths_avoided_cycle = 0.0;
    double deaths_incurred_walk = 0.0;
    double net_deaths_avoided = 0.0;
    double health_value = 0.0;
    double co2_saved_kg = 0.0;
};

double weekly_active_minutes(double d_km, double speed_kmh, double trips_per_week);

double deaths_avoided(double delta_people, double minutes_per_week, double rr, double ref_minutes, double cap,
                      double mortality_rate, double benefit_scale);

/// Deaths per year caused by walkers switching to cycling (positive harm).
double walking_displacement_harm(double displaced_walk, double d_km, const ImpactParams &params,
                                 double mortality_rate);

double blended_mortality_rate(const MortalityTable &table, std::string_view area_id, const AgeProfile &profile);

/// kg CO2e per year from car trips replaced by cycling.
double co2_saved(double displaced_car, double route_km, const ImpactParams &params);

struct ImpactContext {
    const ImpactParams &params;
    const MortalityTable &mortality;
    const AgeProfiles &profiles;
};

/// Health and carbon impacts of one scenario on one pair. `godutch_slc` is only
/// read for the ebikes scenario: cyclists up to the Go Dutch level use conventional
/// bike parameters, the remainder use ebike speed and benefit scale.
ImpactResult impact_for_od(const ODPair &od, const ScenarioResult &result, double route_km,
                           std::string_view mortality_area, const ImpactContext &ctx, double godutch_slc = 0.0);

} // namespace pct
