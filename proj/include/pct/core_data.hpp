#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace pct {

/// Mean Earth radius used for every great-circle distance, km.
inline constexpr double kEarthRadiusKm = 6371.0088;

/// WGS84 position in degrees.
struct Point {
    double lon = 0.0;
    double lat = 0.0;

    friend bool operator==(const Point &, const Point &) = default;
};

using Ring = std::vector<Point>;

/// A polygon as outer ring followed by holes; MultiPolygons hold several.
struct Polygon {
    Ring outer;
    std::vector<Ring> holes;
};

struct BoundingBox {
    double min_lon = 0.0;
    double min_lat = 0.0;
    double max_lon = 0.0;
    double max_lat = 0.0;

    bool contains(const Point &p) const noexcept {
        return p.lon >= min_lon && p.lon <= max_lon && p.lat >= min_lat && p.lat <= max_lat;
    }
};

struct Zone {
    std::string id;
    std::string name;
    std::vector<Polygon> boundary;
    Point centroid;
    double area_km2 = 0.0;
    /// Key into the mortality table; defaults to the zone id.
    std::string mortality_area;

    BoundingBox bbox() const;
};

struct GenderSplit {
    std::int64_t male_all = 0;
    std::int64_t male_cycle = 0;
    std::int64_t female_all = 0;
    std::int64_t female_cycle = 0;

    friend bool operator==(const GenderSplit &, const GenderSplit &) = default;
};

/// Commuters between two zones by main mode. "car" counts drivers only.
struct ODPair {
    std::string origin;
    std::string dest;
    std::int64_t all = 0;
    std::int64_t cycle = 0;
    std::int64_t walk = 0;
    std::int64_t car = 0;
    std::int64_t other = 0;
    std::optional<GenderSplit> gender;

    bool intrazonal() const noexcept { return origin == dest; }

    friend bool operator==(const ODPair &, const ODPair &) = default;
};

/// Throws ValidationError if the mode or gender sums are inconsistent.
void validate(const ODPair &od);

struct DesireLine {
    ODPair od;
    Point from;
    Point to;
    double euclid_km = 0.0;
};

enum class Sex { male, female };

std::string_view to_string(Sex sex);
Sex parse_sex(std::string_view text);

struct MortalityRow {
    std::string area_id;
    Sex sex = Sex::male;
    int age_min = 0;
    int age_max = 0;
    double annual_rate = 0.0;
};

class MortalityTable {
  public:
    MortalityTable() = default;
    explicit MortalityTable(std::vector<MortalityRow> rows);

    /// Rate for the exact band [age_min, age_max]; throws NotFound naming the cell.
    double rate(std::string_view area_id, Sex sex, int age_min, int age_max) const;

    const std::vector<MortalityRow> &rows() const noexcept { return rows_; }
    bool has_area(std::string_view area_id) const;

  private:
    std::vector<MortalityRow> rows_;
};

// OD tables

/// Parses the commuter CSV. Header must be exactly
/// `origin,dest,all,cycle,walk,car,other` optionally followed by
/// `male_all,male_cycle,female_all,female_cycle`. Accepts LF or CRLF.
std::vector<ODPair> parse_od_table(std::istream &in);
std::vector<ODPair> read_od_table(const std::string &path);

/// Writes pairs in the same format; gender columns are emitted when every pair has them.
void write_od_table(std::ostream &out, std::span<const ODPair> pairs);

/// One pair per unordered {origin, dest}, lexicographically smaller id first.
/// Output is sorted by (origin, dest) so the result is independent of input order.
std::vector<ODPair> aggregate_bidirectional(std::span<const ODPair> pairs);

// Geometry

/// Great-circle distance in km. Throws ValidationError on out-of-range coordinates.
double euclidean_km(const Point &a, const Point &b);

/// Equal-area circle radius, used as the nominal trip length inside a zone.
double intrazonal_nominal_distance(const Zone &zone);

/// Spherical area of a polygon set in km².
double spherical_area_km2(std::span<const Polygon> polygons);

// Eligibility

struct Thresholds {
    double max_euclid_km = 20.0;
    std::int64_t min_commuters = 10;
};

/// Zone lookup by id. Zones are kept in id order.
class ZoneIndex {
  public:
    ZoneIndex() = default;
    explicit ZoneIndex(std::vector<Zone> zones);

    const Zone *find(std::string_view id) const;
    const Zone &at(std::string_view id) const;
    const std::vector<Zone> &zones() const noexcept { return zones_; }
    std::size_t size() const noexcept { return zones_.size(); }

  private:
    std::vector<Zone> zones_;
    std::map<std::string, std::size_t, std::less<>> by_id_;
};

DesireLine make_desire_line(const ODPair &od, const ZoneIndex &zones);

struct EligibilitySplit {
    std::vector<DesireLine> lines;      ///< interzonal, within both thresholds
    std::vector<DesireLine> excluded;   ///< interzonal, outside a threshold
    std::vector<ODPair> intrazonal;     ///< area-statistics path
    std::vector<ODPair> outside_region; ///< an endpoint is not a zone of this region
};

/// Keeps interzonal pairs with euclid_km <= max and all >= min (both inclusive).
EligibilitySplit filter_eligible(std::span<const ODPair> pairs, const ZoneIndex &zones,
                                 const Thresholds &thresholds);

// Other inputs

MortalityTable parse_mortality_table(std::istream &in);
MortalityTable read_mortality_table(const std::string &path);

/// `id,lon,lat` centroid table.
std::map<std::string, Point> parse_centroid_table(std::istream &in);

/// Splits one CSV line on commas (no quoting), trimming a trailing CR.
std::vector<std::string> split_csv_line(std::string_view line);

} // namespace pct
