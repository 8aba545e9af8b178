#include "pct/scenarios.hpp"

#include "pct/error.hpp"

#include <fmt/format.h>
#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace pct {

std::string_view to_string(Scenario s) {
    switch (s) {
    case Scenario::baseline:
        return "baseline";
    case Scenario::govtarget:
        return "govtarget";
    case Scenario::genderequal:
        return "genderequal";
    case Scenario::godutch:
        return "godutch";
    case Scenario::ebikes:
        return "ebikes";
    }
    return "unknown";
}

Scenario parse_scenario(std::string_view text) {
    for (auto s : kAllScenarios) {
        if (to_string(s) == text) {
            return s;
        }
    }
    throw ParseError(fmt::format("unknown scenario '{}'", text));
}

std::string_view property_prefix(Scenario s) {
    switch (s) {
    case Scenario::govtarget:
        return "govtarget";
    case Scenario::genderequal:
        return "genderequal";
    case Scenario::godutch:
        return "dutch";
    case Scenario::ebikes:
        return "ebike";
    case Scenario::baseline:
        break;
    }
    throw Error("baseline has no scenario property prefix");
}

ScenarioParams parse_scenario_params(std::string_view text) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error &e) {
        throw ParseError(std::string("scenario parameter file: ") + e.what());
    }
    auto get = [&](const char *key) {
        if (!doc.contains(key) || !doc[key].is_number() || !std::isfinite(doc[key].get<double>())) {
            throw ParseError(fmt::format("scenario parameter file: '{}' missing or not a finite number", key));
        }
        return doc[key].get<double>();
    };
    return {get("gd_main"), get("gd_dist"), get("eb_main"), get("eb_dist"), get("eb_hill")};
}

ScenarioParams read_scenario_params(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open scenario parameter file " + path);
    }
    std::stringstream buffer;
    buffer << in.rdbuf();
    return parse_scenario_params(buffer.str());
}

double scenario_govtarget(const ODPair &od, double p_base) {
    const auto all = static_cast<double>(od.all);
    return std::min(static_cast<double>(od.cycle) + p_base * all, all);
}

double scenario_genderequal(const ODPair &od) {
    if (!od.gender) {
        throw ScenarioUnavailable(fmt::format("{}->{}: genderequal needs a gender split", od.origin, od.dest));
    }
    const auto &g = *od.gender;
    if (g.male_all == 0) {
        return static_cast<double>(od.cycle);
    }
    const double male_rate = static_cast<double>(g.male_cycle) / static_cast<double>(g.male_all);
    const double female_rate =
        g.female_all == 0 ? 0.0 : static_cast<double>(g.female_cycle) / static_cast<double>(g.female_all);
    if (female_rate >= male_rate) {
        return static_cast<double>(od.cycle);
    }
    return static_cast<double>(g.male_cycle) + static_cast<double>(g.female_all) * male_rate;
}

double godutch_logit(const ModelCoefficients &coeffs, const ScenarioParams &params, double d_km, double h_pct) {
    return linear_predictor(coeffs, d_km, h_pct) + params.gd_main + params.gd_dist * d_km;
}

double ebikes_logit(const ModelCoefficients &coeffs, const ScenarioParams &params, double d_km, double h_pct) {
    return godutch_logit(coeffs, params, d_km, h_pct) + params.eb_main + params.eb_dist * d_km +
           params.eb_hill * h_pct;
}

double scenario_godutch(const ModelCoefficients &coeffs, const ScenarioParams &params, double d_km, double h_pct,
                        const ODPair &od) {
    return logistic(godutch_logit(coeffs, params, d_km, h_pct)) * static_cast<double>(od.all);
}

double scenario_ebikes(const ModelCoefficients &coeffs, const ScenarioParams &params, double d_km, double h_pct,
                       const ODPair &od) {
    return logistic(ebikes_logit(coeffs, params, d_km, h_pct)) * static_cast<double>(od.all);
}

DisplacedModes apportion_mode_shift(const ODPair &od, double slc) {
    const double delta = std::max(slc - static_cast<double>(od.cycle), 0.0);
    const auto non_cycle = od.all - od.cycle;
    if (delta == 0.0 || non_cycle == 0) {
        return {};
    }
    const double share = delta / static_cast<double>(non_cycle);
    return {share * static_cast<double>(od.walk), share * static_cast<double>(od.car),
            share * static_cast<double>(od.other)};
}

std::optional<ScenarioResult> evaluate_scenario(Scenario scenario, const ModelCoefficients &coeffs,
                                                const ScenarioParams &params, double d_km, double h_pct,
                                                const ODPair &od) {
    double slc = 0.0;
    switch (scenario) {
    case Scenario::baseline:
        slc = static_cast<double>(od.cycle);
        break;
    case Scenario::govtarget:
        slc = scenario_govtarget(od, predict_pcycle(coeffs, d_km, h_pct));
        break;
    case Scenario::genderequal:
        if (!od.gender) {
            return std::nullopt;
        }
        slc = scenario_genderequal(od);
        break;
    case Scenario::godutch:
        slc = scenario_godutch(coeffs, params, d_km, h_pct, od);
        break;
    case Scenario::ebikes:
        slc = scenario_ebikes(coeffs, params, d_km, h_pct, od);
        break;
    }
    return ScenarioResult{scenario, slc, apportion_mode_shift(od, slc)};
}

} // namespace pct
