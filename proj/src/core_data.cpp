#include "pct/core_data.hpp"

#include "pct/error.hpp"

#include <fmt/format.h>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <numbers>
#include <ostream>
#include <tuple>

namespace pct {

namespace {

constexpr std::string_view kBaseHeader = "origin,dest,all,cycle,walk,car,other";
constexpr std::string_view kGenderHeader =
    "origin,dest,all,cycle,walk,car,other,male_all,male_cycle,female_all,female_cycle";

std::string_view chomp(std::string_view line) {
    if (!line.empty() && line.back() == '\r') {
        line.remove_suffix(1);
    }
    return line;
}

template <typename T>
bool parse_number(std::string_view text, T &out) {
    const auto *first = text.data();
    const auto *last = text.data() + text.size();
    auto [ptr, ec] = std::from_chars(first, last, out);
    return ec == std::errc{} && ptr == last && !text.empty();
}

std::int64_t parse_count(std::string_view text, std::size_t line_no, std::string_view column) {
    std::int64_t value = 0;
    if (!parse_number(text, value)) {
        throw ParseError(fmt::format("line {}: column '{}' is not an integer: '{}'", line_no, column, text));
    }
    return value;
}

double parse_real(std::string_view text, std::size_t line_no, std::string_view column) {
    double value = 0.0;
    if (!parse_number(text, value)) {
        throw ParseError(fmt::format("line {}: column '{}' is not a number: '{}'", line_no, column, text));
    }
    return value;
}

double to_radians(double deg) { return deg * std::numbers::pi / 180.0; }

void check_point(const Point &p) {
    if (!std::isfinite(p.lon) || !std::isfinite(p.lat) || p.lon < -180.0 || p.lon > 180.0 ||
        p.lat < -90.0 || p.lat > 90.0) {
        throw ValidationError(fmt::format("coordinate out of range: ({}, {})", p.lon, p.lat));
    }
}

std::string describe(const ODPair &od) { return od.origin + "->" + od.dest; }

} // namespace

BoundingBox Zone::bbox() const {
    BoundingBox box{centroid.lon, centroid.lat, centroid.lon, centroid.lat};
    bool first = true;
    for (const auto &poly : boundary) {
        for (const auto &p : poly.outer) {
            if (first) {
                box = {p.lon, p.lat, p.lon, p.lat};
                first = false;
            }
            box.min_lon = std::min(box.min_lon, p.lon);
            box.min_lat = std::min(box.min_lat, p.lat);
            box.max_lon = std::max(box.max_lon, p.lon);
            box.max_lat = std::max(box.max_lat, p.lat);
        }
    }
    return box;
}

void validate(const ODPair &od) {
    for (auto [name, value] : {std::pair{"all", od.all}, std::pair{"cycle", od.cycle},
                               std::pair{"walk", od.walk}, std::pair{"car", od.car},
                               std::pair{"other", od.other}}) {
        if (value < 0) {
            throw ValidationError(fmt::format("{}: negative count in '{}' ({})", describe(od), name, value));
        }
    }
    const auto sum = od.cycle + od.walk + od.car + od.other;
    if (sum != od.all) {
        throw ValidationError(fmt::format("{}: mode counts sum to {} but all = {}", describe(od), sum, od.all));
    }
    if (od.gender) {
        const auto &g = *od.gender;
        if (g.male_all < 0 || g.male_cycle < 0 || g.female_all < 0 || g.female_cycle < 0) {
            throw ValidationError(fmt::format("{}: negative gender count", describe(od)));
        }
        if (g.male_all + g.female_all != od.all) {
            throw ValidationError(fmt::format("{}: male_all + female_all = {} but all = {}", describe(od),
                                              g.male_all + g.female_all, od.all));
        }
        if (g.male_cycle + g.female_cycle != od.cycle) {
            throw ValidationError(fmt::format("{}: male_cycle + female_cycle = {} but cycle = {}",
                                              describe(od), g.male_cycle + g.female_cycle, od.cycle));
        }
        if (g.male_cycle > g.male_all || g.female_cycle > g.female_all) {
            throw ValidationError(fmt::format("{}: gender cyclists exceed gender totals", describe(od)));
        }
    }
}

std::string_view to_string(Sex sex) { return sex == Sex::male ? "male" : "female"; }

Sex parse_sex(std::string_view text) {
    if (text == "male" || text == "m" || text == "M") {
        return Sex::male;
    }
    if (text == "female" || text == "f" || text == "F") {
        return Sex::female;
    }
    throw ParseError(fmt::format("unknown sex '{}'", text));
}

MortalityTable::MortalityTable(std::vector<MortalityRow> rows) : rows_{std::move(rows)} {
    for (const auto &row : rows_) {
        if (!(row.annual_rate >= 0.0 && row.annual_rate <= 1.0)) {
            throw ValidationError(fmt::format("mortality rate {} for ({}, {}, {}-{}) outside [0, 1]",
                                              row.annual_rate, row.area_id, to_string(row.sex), row.age_min,
                                              row.age_max));
        }
        if (row.age_min > row.age_max) {
            throw ValidationError(fmt::format("mortality band {}-{} for {} is empty", row.age_min, row.age_max,
                                              row.area_id));
        }
    }
    std::vector<const MortalityRow *> order;
    order.reserve(rows_.size());
    for (const auto &row : rows_) {
        order.push_back(&row);
    }
    std::sort(order.begin(), order.end(), [](const auto *a, const auto *b) {
        return std::tie(a->area_id, a->sex, a->age_min) < std::tie(b->area_id, b->sex, b->age_min);
    });
    for (std::size_t i = 1; i < order.size(); ++i) {
        const auto &prev = *order[i - 1];
        const auto &cur = *order[i];
        if (prev.area_id == cur.area_id && prev.sex == cur.sex && cur.age_min <= prev.age_max) {
            throw ValidationError(fmt::format("overlapping mortality bands for ({}, {}): {}-{} and {}-{}",
                                              cur.area_id, to_string(cur.sex), prev.age_min, prev.age_max,
                                              cur.age_min, cur.age_max));
        }
    }
}

double MortalityTable::rate(std::string_view area_id, Sex sex, int age_min, int age_max) const {
    for (const auto &row : rows_) {
        if (row.area_id == area_id && row.sex == sex && row.age_min == age_min && row.age_max == age_max) {
            return row.annual_rate;
        }
    }
    throw NotFound(fmt::format("no mortality rate for (area {}, {}, ages {}-{})", area_id, to_string(sex),
                               age_min, age_max));
}

bool MortalityTable::has_area(std::string_view area_id) const {
    return std::any_of(rows_.begin(), rows_.end(), [&](const auto &r) { return r.area_id == area_id; });
}

std::vector<std::string> split_csv_line(std::string_view line) {
    line = chomp(line);
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
        auto comma = line.find(',', start);
        if (comma == std::string_view::npos) {
            fields.emplace_back(line.substr(start));
            break;
        }
        fields.emplace_back(line.substr(start, comma - start));
        start = comma + 1;
    }
    return fields;
}

std::vector<ODPair> parse_od_table(std::istream &in) {
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError("OD table is empty (missing header)");
    }
    const auto header = chomp(line);
    bool with_gender = false;
    if (header == kGenderHeader) {
        with_gender = true;
    } else if (header != kBaseHeader) {
        throw ParseError(fmt::format("line 1: unexpected OD header '{}'", header));
    }
    const std::size_t columns = with_gender ? 11 : 7;

    std::vector<ODPair> pairs;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (chomp(line).empty()) {
            continue;
        }
        const auto fields = split_csv_line(line);
        if (fields.size() != columns) {
            throw ParseError(fmt::format("line {}: expected {} columns, found {}", line_no, columns, fields.size()));
        }
        ODPair od;
        od.origin = fields[0];
        od.dest = fields[1];
        if (od.origin.empty() || od.dest.empty()) {
            throw ParseError(fmt::format("line {}: empty zone id", line_no));
        }
        od.all = parse_count(fields[2], line_no, "all");
        od.cycle = parse_count(fields[3], line_no, "cycle");
        od.walk = parse_count(fields[4], line_no, "walk");
        od.car = parse_count(fields[5], line_no, "car");
        od.other = parse_count(fields[6], line_no, "other");
        if (with_gender) {
            od.gender = GenderSplit{parse_count(fields[7], line_no, "male_all"),
                                    parse_count(fields[8], line_no, "male_cycle"),
                                    parse_count(fields[9], line_no, "female_all"),
                                    parse_count(fields[10], line_no, "female_cycle")};
        }
        try {
            validate(od);
        } catch (const ValidationError &e) {
            throw ValidationError(fmt::format("line {}: {}", line_no, e.what()));
        }
        pairs.push_back(std::move(od));
    }
    return pairs;
}

std::vector<ODPair> read_od_table(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open OD table " + path);
    }
    return parse_od_table(in);
}

void write_od_table(std::ostream &out, std::span<const ODPair> pairs) {
    const bool with_gender =
        !pairs.empty() && std::all_of(pairs.begin(), pairs.end(), [](const auto &od) { return od.gender.has_value(); });
    out << (with_gender ? kGenderHeader : kBaseHeader) << '\n';
    for (const auto &od : pairs) {
        out << od.origin << ',' << od.dest << ',' << od.all << ',' << od.cycle << ',' << od.walk << ',' << od.car
            << ',' << od.other;
        if (with_gender) {
            const auto &g = *od.gender;
            out << ',' << g.male_all << ',' << g.male_cycle << ',' << g.female_all << ',' << g.female_cycle;
        }
        out << '\n';
    }
}

std::vector<ODPair> aggregate_bidirectional(std::span<const ODPair> pairs) {
    std::map<std::pair<std::string, std::string>, ODPair> merged;
    for (const auto &od : pairs) {
        auto key = od.origin <= od.dest ? std::pair{od.origin, od.dest} : std::pair{od.dest, od.origin};
        auto [it, inserted] = merged.try_emplace(key);
        auto &acc = it->second;
        if (inserted) {
            acc = od;
            acc.origin = key.first;
            acc.dest = key.second;
            continue;
        }
        acc.all += od.all;
        acc.cycle += od.cycle;
        acc.walk += od.walk;
        acc.car += od.car;
        acc.other += od.other;
        if (acc.gender && od.gender) {
            acc.gender->male_all += od.gender->male_all;
            acc.gender->male_cycle += od.gender->male_cycle;
            acc.gender->female_all += od.gender->female_all;
            acc.gender->female_cycle += od.gender->female_cycle;
        } else {
            acc.gender.reset();
        }
    }
    std::vector<ODPair> out;
    out.reserve(merged.size());
    for (auto &[key, od] : merged) {
        out.push_back(std::move(od));
    }
    return out;
}

double euclidean_km(const Point &a, const Point &b) {
    check_point(a);
    check_point(b);
    const double phi1 = to_radians(a.lat);
    const double phi2 = to_radians(b.lat);
    const double dphi = phi2 - phi1;
    const double dlambda = to_radians(b.lon - a.lon);
    const double s1 = std::sin(dphi / 2.0);
    const double s2 = std::sin(dlambda / 2.0);
    // Symmetric in (a, b): every term is either squared or a product of cosines.
    const double h = s1 * s1 + std::cos(phi1) * std::cos(phi2) * s2 * s2;
    return 2.0 * kEarthRadiusKm * std::asin(std::min(1.0, std::sqrt(h)));
}

double intrazonal_nominal_distance(const Zone &zone) {
    if (!(zone.area_km2 > 0.0)) {
        throw ValidationError(fmt::format("zone {} has non-positive area {}", zone.id, zone.area_km2));
    }
    return std::sqrt(zone.area_km2 / std::numbers::pi);
}

namespace {

double ring_area_km2(const Ring &ring) {
    if (ring.size() < 3) {
        return 0.0;
    }
    double sum = 0.0;
    for (std::size_t i = 0; i < ring.size(); ++i) {
        const auto &p1 = ring[i];
        const auto &p2 = ring[(i + 1) % ring.size()];
        sum += to_radians(p2.lon - p1.lon) * (2.0 + std::sin(to_radians(p1.lat)) + std::sin(to_radians(p2.lat)));
    }
    return std::abs(sum * kEarthRadiusKm * kEarthRadiusKm / 2.0);
}

} // namespace

double spherical_area_km2(std::span<const Polygon> polygons) {
    double area = 0.0;
    for (const auto &poly : polygons) {
        area += ring_area_km2(poly.outer);
        for (const auto &hole : poly.holes) {
            area -= ring_area_km2(hole);
        }
    }
    return area;
}

ZoneIndex::ZoneIndex(std::vector<Zone> zones) : zones_{std::move(zones)} {
    std::sort(zones_.begin(), zones_.end(), [](const auto &a, const auto &b) { return a.id < b.id; });
    for (std::size_t i = 0; i < zones_.size(); ++i) {
        if (!by_id_.emplace(zones_[i].id, i).second) {
            throw ValidationError("duplicate zone id " + zones_[i].id);
        }
    }
}

const Zone *ZoneIndex::find(std::string_view id) const {
    auto it = by_id_.find(id);
    return it == by_id_.end() ? nullptr : &zones_[it->second];
}

const Zone &ZoneIndex::at(std::string_view id) const {
    if (const auto *zone = find(id)) {
        return *zone;
    }
    throw NotFound(fmt::format("unknown zone '{}'", id));
}

DesireLine make_desire_line(const ODPair &od, const ZoneIndex &zones) {
    if (od.intrazonal()) {
        throw ValidationError(fmt::format("{}: intrazonal pairs have no desire line", describe(od)));
    }
    DesireLine line{od, zones.at(od.origin).centroid, zones.at(od.dest).centroid, 0.0};
    line.euclid_km = euclidean_km(line.from, line.to);
    return line;
}

EligibilitySplit filter_eligible(std::span<const ODPair> pairs, const ZoneIndex &zones,
                                 const Thresholds &thresholds) {
    EligibilitySplit split;
    for (const auto &od : pairs) {
        if (!zones.find(od.origin) || !zones.find(od.dest)) {
            split.outside_region.push_back(od);
            continue;
        }
        if (od.intrazonal()) {
            split.intrazonal.push_back(od);
            continue;
        }
        auto line = make_desire_line(od, zones);
        if (line.euclid_km <= thresholds.max_euclid_km && od.all >= thresholds.min_commuters) {
            split.lines.push_back(std::move(line));
        } else {
            split.excluded.push_back(std::move(line));
        }
    }
    return split;
}

MortalityTable parse_mortality_table(std::istream &in) {
    std::string line;
    if (!std::getline(in, line) || chomp(line) != "area_id,sex,age_min,age_max,annual_rate") {
        throw ParseError("mortality table: expected header 'area_id,sex,age_min,age_max,annual_rate'");
    }
    std::vector<MortalityRow> rows;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (chomp(line).empty()) {
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 5) {
            throw ParseError(fmt::format("line {}: expected 5 columns, found {}", line_no, f.size()));
        }
        MortalityRow row;
        row.area_id = f[0];
        row.sex = parse_sex(f[1]);
        row.age_min = static_cast<int>(parse_count(f[2], line_no, "age_min"));
        row.age_max = static_cast<int>(parse_count(f[3], line_no, "age_max"));
        row.annual_rate = parse_real(f[4], line_no, "annual_rate");
        rows.push_back(std::move(row));
    }
    return MortalityTable(std::move(rows));
}

MortalityTable read_mortality_table(const std::string &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw ParseError("cannot open mortality table " + path);
    }
    return parse_mortality_table(in);
}

std::map<std::string, Point> parse_centroid_table(std::istream &in) {
    std::string line;
    if (!std::getline(in, line) || chomp(line) != "id,lon,lat") {
        throw ParseError("centroid table: expected header 'id,lon,lat'");
    }
    std::map<std::string, Point> out;
    std::size_t line_no = 1;
    while (std::getline(in, line)) {
        ++line_no;
        if (chomp(line).empty()) {
            continue;
        }
        const auto f = split_csv_line(line);
        if (f.size() != 3) {
            throw ParseError(fmt::format("line {}: expected 3 columns, found {}", line_no, f.size()));
        }
        Point p{parse_real(f[1], line_no, "lon"), parse_real(f[2], line_no, "lat")};
        check_point(p);
        out[f[0]] = p;
    }
    return out;
}

} // namespace pct
