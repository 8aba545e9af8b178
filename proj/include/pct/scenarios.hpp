#pragma once

#include "pct/core_data.hpp"
#include "pct/mode_model.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>

namespace pct {

enum class Scenario { baseline, govtarget, genderequal, godutch, ebikes };

inline constexpr std::size_t kScenarioCount = 5;
inline constexpr std::array<Scenario, kScenarioCount> kAllScenarios = {
    Scenario::baseline, Scenario::govtarget, Scenario::genderequal, Scenario::godutch, Scenario::ebikes};

/// Query/enum name: baseline, govtarget, genderequal, godutch, ebikes.
std::string_view to_string(Scenario s);
Scenario parse_scenario(std::string_view text);
/// Prefix used for per-scenario output properties: govtarget, genderequal, dutch, ebike.
/// Baseline has no prefix and throws.
std::string_view property_prefix(Scenario s);

inline std::size_t index_of(Scenario s) noexcept { return static_cast<std::size_t>(s); }

/// Per-scenario values indexed by index_of(Scenario).
using ScenarioValues = std::array<double, kScenarioCount>;

/// Logit offsets applied on top of the baseline propensity.
struct ScenarioParams {
    double gd_main = 0.0;
    double gd_dist = 0.0;
    double eb_main = 0.0;
    double eb_dist = 0.0;
    double eb_hill = 0.0;
};

/// JSON object with all five keys required (no built-in defaults).
ScenarioParams parse_scenario_params(std::string_view text);
ScenarioParams read_scenario_params(const std::string &path);

struct DisplacedModes {
    double walk = 0.0;
    double car = 0.0;
    double other = 0.0;

    double total() const noexcept { return walk + car + other; }
};

struct ScenarioResult {
    Scenario scenario = Scenario::baseline;
    double slc = 0.0;
    DisplacedModes displaced;
};

double scenario_govtarget(const ODPair &od, double p_base);
/// Throws ScenarioUnavailable when the pair has no gender split.
double scenario_genderequal(const ODPair &od);
double godutch_logit(const ModelCoefficients &coeffs, const ScenarioParams &params, double d_km, double h_pct);
double ebikes_logit(const ModelCoefficients &coeffs, const ScenarioParams &params, double d_km, double h_pct);
double scenario_godutch(const ModelCoefficients &coeffs, const ScenarioParams &params, double d_km, double h_pct,
                        const ODPair &od);
double scenario_ebikes(const ModelCoefficients &coeffs, const ScenarioParams &params, double d_km, double h_pct,
                       const ODPair &od);

/// Non-cycle modes lose commuters in proportion to their baseline counts.
DisplacedModes apportion_mode_shift(const ODPair &od, double slc);

/// Evaluates one scenario for a pair with route distance d_km and gradient h_pct.
/// Returns nullopt for genderequal when no gender split is present.
std::optional<ScenarioResult> evaluate_scenario(Scenario scenario, const ModelCoefficients &coeffs,
                                                const ScenarioParams &params, double d_km, double h_pct,
                                                const ODPair &od);

} // namespace pct
