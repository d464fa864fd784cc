#pragma once

#include <compare>
#include <cstddef>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace flowgen {

inline constexpr double earth_radius_km = 6371.0;
/// Length of one degree of latitude (and of longitude at the equator).
inline constexpr double km_per_degree = earth_radius_km * 3.14159265358979323846 / 180.0;

struct LatLon {
    double lat = 0.0;
    double lon = 0.0;
};

/// A census polygon: the origin/destination unit of flows.
struct Location {
    std::string id;
    LatLon centroid;
    double area_km2   = 0.0;
    double population = 0.0;
    std::vector<LatLon> polygon; // outer ring, open (first vertex not repeated); may be empty
};

/// Throws MalformedInput unless area > 0, population >= 0 and the centroid is a valid coordinate.
void validate(const Location& location);

double haversine_km(LatLon a, LatLon b);

inline double distance(const Location& a, const Location& b)
{
    return haversine_km(a.centroid, b.centroid);
}

/// Planar centroid of a ring, treating (lon, lat) as cartesian coordinates.
LatLon planar_centroid(std::span<const LatLon> ring);
/// Ring area under an equirectangular projection at the ring's centroid latitude.
double polygon_area_km2(std::span<const LatLon> ring);
/// Even-odd ray casting in (lon, lat) space.
bool point_in_polygon(LatLon point, std::span<const LatLon> ring);

enum class LocationFormat { geojson, csv };

/// Format is inferred from the extension (.geojson / .json vs anything else) when not given.
std::vector<Location> load_locations(const std::filesystem::path& path,
                                     std::optional<LocationFormat> format = std::nullopt);
void write_locations_csv(const std::filesystem::path& path, std::span<const Location> locations);

// ---------------------------------------------------------------------------
// Tessellation

struct GridIndex {
    int i = 0; // column, along longitude
    int j = 0; // row, along latitude
    auto operator<=>(const GridIndex&) const = default;
};

struct Bounds {
    double min_lat = 0.0;
    double min_lon = 0.0;
    double max_lat = 0.0;
    double max_lon = 0.0;
};

struct RegionOfInterest {
    GridIndex grid_index;
    Bounds bounds;
    std::vector<std::string> location_ids; // sorted
    double total_population = 0.0;
    std::optional<int> decile;

    /// Stable textual id, "R<i>_<j>".
    std::string id() const;
};

/// Square grid over the centroid bounding box. Cells are half-open
/// [min, min + cell) in an equirectangular frame anchored at the mean latitude.
struct Tessellation {
    double cell_size_km = 0.0;
    double anchor_lat   = 0.0; // degrees
    LatLon origin;             // south-west grid corner
    int nx = 0;                // L_x
    int ny = 0;                // L_y
    std::vector<RegionOfInterest> cells; // non-empty cells ordered by (i, j)
    std::map<std::string, GridIndex> assignment;

    /// Bounding polygon of the whole grid, counter-clockwise from the origin.
    std::vector<LatLon> boundary() const;
    const RegionOfInterest* find(const std::string& region_id) const;
    std::optional<std::size_t> index_of(const std::string& region_id) const;
};

Tessellation build_tessellation(std::span<const Location> locations, double cell_size_km);

/// Writes `location_id,cell_i,cell_j` rows and a JSON sidecar with grid metadata.
void write_tessellation(const Tessellation& tess, const std::filesystem::path& csv_path,
                        const std::filesystem::path& json_path);
/// Rebuilds a tessellation from its CSV + JSON files; populations come from `locations`.
Tessellation load_tessellation(const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
                               std::span<const Location> locations);

// ---------------------------------------------------------------------------
// Flows

struct FlowRecord {
    std::string origin;
    std::string destination;
    double flow = 0.0;
};

/// Sparse origin-destination flows, one record per pair, ordered by (origin, destination).
class FlowTable {
public:
    FlowTable() = default;
    /// Sums duplicate pairs. Throws NegativeFlow on any negative or non-finite value.
    static FlowTable from_records(std::vector<FlowRecord> records);

    const std::vector<FlowRecord>& records() const { return m_records; }
    const std::map<std::string, double>& outflows() const { return m_outflows; }
    double outflow(const std::string& origin) const;
    double total() const;
    bool empty() const { return m_records.empty(); }
    std::size_t size() const { return m_records.size(); }

private:
    std::vector<FlowRecord> m_records;
    std::map<std::string, double> m_outflows;
};

FlowTable load_flows(const std::filesystem::path& path);
void write_flows(const std::filesystem::path& path, const FlowTable& flows);

/// Records with both endpoints inside the region; outflows recomputed over the subset.
FlowTable intra_region_flows(const FlowTable& flows, const RegionOfInterest& region);
FlowTable without_self_flows(const FlowTable& flows);

} // namespace flowgen
