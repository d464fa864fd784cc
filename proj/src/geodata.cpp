#include "flowgen/geodata.hpp"
#include "flowgen/csv.hpp"
#include "flowgen/error.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <set>
#include <unordered_set>

namespace flowgen {

namespace {

constexpr double deg = std::numbers::pi / 180.0;

std::vector<LatLon> ring_from_geojson(const nlohmann::json& coords, const std::string& id)
{
    std::vector<LatLon> ring;
    for (const auto& vertex : coords) {
        if (!vertex.is_array() || vertex.size() < 2) {
            throw Error(ErrorCode::MalformedInput, "location " + id + ": bad polygon vertex");
        }
        ring.push_back({vertex[1].get<double>(), vertex[0].get<double>()});
    }
    if (ring.size() > 1 && ring.front().lat == ring.back().lat && ring.front().lon == ring.back().lon) {
        ring.pop_back();
    }
    if (ring.size() < 3) {
        throw Error(ErrorCode::DegenerateGeometry, "location " + id + ": polygon has fewer than 3 vertices");
    }
    return ring;
}

double signed_planar_area(std::span<const LatLon> ring)
{
    double twice = 0.0;
    for (std::size_t k = 0; k < ring.size(); ++k) {
        const auto& a = ring[k];
        const auto& b = ring[(k + 1) % ring.size()];
        twice += a.lon * b.lat - b.lon * a.lat;
    }
    return 0.5 * twice;
}

std::string json_id(const nlohmann::json& feature)
{
    const auto& props = feature.value("properties", nlohmann::json::object());
    const nlohmann::json* raw = nullptr;
    if (props.contains("id")) {
        raw = &props["id"];
    }
    else if (feature.contains("id")) {
        raw = &feature["id"];
    }
    if (!raw || raw->is_null()) {
        throw Error(ErrorCode::MalformedInput, "feature without id");
    }
    return raw->is_string() ? raw->get<std::string>() : raw->dump();
}

std::vector<Location> load_geojson(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::InputNotFound, "input not found: " + path.string());
    }
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedInput, path.string() + ": " + e.what());
    }
    if (doc.value("type", "") != "FeatureCollection" || !doc.contains("features")) {
        throw Error(ErrorCode::MalformedInput, path.string() + ": expected a FeatureCollection");
    }

    std::vector<Location> out;
    for (const auto& feature : doc["features"]) {
        Location loc;
        loc.id = json_id(feature);
        const auto& props = feature.value("properties", nlohmann::json::object());
        if (!props.contains("population") || !props["population"].is_number()) {
            throw Error(ErrorCode::MalformedInput, "location " + loc.id + ": missing population");
        }
        loc.population = props["population"].get<double>();

        const auto& geom = feature.value("geometry", nlohmann::json());
        const std::string type = geom.is_object() ? geom.value("type", "") : "";
        if (type == "Polygon") {
            loc.polygon = ring_from_geojson(geom.at("coordinates").at(0), loc.id);
        }
        else if (type == "MultiPolygon") {
            loc.polygon = ring_from_geojson(geom.at("coordinates").at(0).at(0), loc.id);
        }
        else if (type == "Point") {
            const auto& c = geom.at("coordinates");
            loc.centroid  = {c.at(1).get<double>(), c.at(0).get<double>()};
        }
        else {
            throw Error(ErrorCode::MalformedInput, "location " + loc.id + ": needs Polygon or Point geometry");
        }

        if (!loc.polygon.empty()) {
            if (std::abs(signed_planar_area(loc.polygon)) == 0.0) {
                throw Error(ErrorCode::DegenerateGeometry, "location " + loc.id + ": zero-area polygon");
            }
            loc.centroid = planar_centroid(loc.polygon);
        }
        if (props.contains("area_km2") && props["area_km2"].is_number()) {
            loc.area_km2 = props["area_km2"].get<double>();
        }
        else if (!loc.polygon.empty()) {
            loc.area_km2 = polygon_area_km2(loc.polygon);
        }
        else {
            throw Error(ErrorCode::MalformedInput, "location " + loc.id + ": point geometry needs area_km2");
        }
        out.push_back(std::move(loc));
    }
    return out;
}

std::vector<Location> load_csv(const std::filesystem::path& path)
{
    const auto table = csv::read(path);
    const auto c_id  = table.require_column("id", path);
    const auto c_lat = table.require_column("lat", path);
    const auto c_lon = table.require_column("lon", path);
    const auto c_area = table.require_column("area_km2", path);
    const auto c_pop  = table.require_column("population", path);

    std::vector<Location> out;
    out.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        Location loc;
        loc.id = row[c_id];
        if (loc.id.empty()) {
            throw Error(ErrorCode::MalformedInput, path.string() + ": empty id");
        }
        loc.centroid   = {csv::to_double(row[c_lat], "lat"), csv::to_double(row[c_lon], "lon")};
        loc.area_km2   = csv::to_double(row[c_area], "area_km2");
        loc.population = csv::to_double(row[c_pop], "population");
        out.push_back(std::move(loc));
    }
    return out;
}

} // namespace

void validate(const Location& location)
{
    const auto& c = location.centroid;
    if (!(location.area_km2 > 0.0) || !std::isfinite(location.area_km2)) {
        throw Error(ErrorCode::MalformedInput, "location " + location.id + ": area must be positive");
    }
    if (!(location.population >= 0.0) || !std::isfinite(location.population)) {
        throw Error(ErrorCode::MalformedInput, "location " + location.id + ": population must be nonnegative");
    }
    if (!(c.lat >= -90.0 && c.lat <= 90.0 && c.lon >= -180.0 && c.lon <= 180.0)) {
        throw Error(ErrorCode::MalformedInput, "location " + location.id + ": centroid out of range");
    }
}

double haversine_km(LatLon a, LatLon b)
{
    const double dlat = (b.lat - a.lat) * deg;
    const double dlon = (b.lon - a.lon) * deg;
    const double s1   = std::sin(dlat / 2.0);
    const double s2   = std::sin(dlon / 2.0);
    const double h    = s1 * s1 + std::cos(a.lat * deg) * std::cos(b.lat * deg) * s2 * s2;
    return 2.0 * earth_radius_km * std::asin(std::min(1.0, std::sqrt(h)));
}

LatLon planar_centroid(std::span<const LatLon> ring)
{
    const double area = signed_planar_area(ring);
    if (area == 0.0) {
        throw Error(ErrorCode::DegenerateGeometry, "zero-area polygon");
    }
    double cx = 0.0;
    double cy = 0.0;
    for (std::size_t k = 0; k < ring.size(); ++k) {
        const auto& a      = ring[k];
        const auto& b      = ring[(k + 1) % ring.size()];
        const double cross = a.lon * b.lat - b.lon * a.lat;
        cx += (a.lon + b.lon) * cross;
        cy += (a.lat + b.lat) * cross;
    }
    return {cy / (6.0 * area), cx / (6.0 * area)};
}

double polygon_area_km2(std::span<const LatLon> ring)
{
    const LatLon c   = planar_centroid(ring);
    const double kx  = km_per_degree * std::cos(c.lat * deg);
    const double ky  = km_per_degree;
    double twice = 0.0;
    for (std::size_t k = 0; k < ring.size(); ++k) {
        const auto& a = ring[k];
        const auto& b = ring[(k + 1) % ring.size()];
        twice += (a.lon * kx) * (b.lat * ky) - (b.lon * kx) * (a.lat * ky);
    }
    return std::abs(0.5 * twice);
}

bool point_in_polygon(LatLon p, std::span<const LatLon> ring)
{
    bool inside = false;
    for (std::size_t k = 0, prev = ring.size() - 1; k < ring.size(); prev = k++) {
        const auto& a = ring[k];
        const auto& b = ring[prev];
        if ((a.lat > p.lat) != (b.lat > p.lat)) {
            const double x = (b.lon - a.lon) * (p.lat - a.lat) / (b.lat - a.lat) + a.lon;
            if (p.lon < x) {
                inside = !inside;
            }
        }
    }
    return inside;
}

std::vector<Location> load_locations(const std::filesystem::path& path, std::optional<LocationFormat> format)
{
    if (!std::filesystem::exists(path)) {
        throw Error(ErrorCode::InputNotFound, "input not found: " + path.string());
    }
    if (!format) {
        const auto ext = path.extension().string();
        format = (ext == ".geojson" || ext == ".json") ? LocationFormat::geojson : LocationFormat::csv;
    }
    auto locations = *format == LocationFormat::geojson ? load_geojson(path) : load_csv(path);

    std::set<std::string> seen;
    for (const auto& loc : locations) {
        validate(loc);
        if (!seen.insert(loc.id).second) {
            throw Error(ErrorCode::DuplicateId, "duplicate location id " + loc.id);
        }
    }
    return locations;
}

void write_locations_csv(const std::filesystem::path& path, std::span<const Location> locations)
{
    std::ofstream out(path, std::ios::binary);
    out << "id,lat,lon,area_km2,population\n";
    for (const auto& loc : locations) {
        out << loc.id << ',' << csv::format_double(loc.centroid.lat) << ',' << csv::format_double(loc.centroid.lon)
            << ',' << csv::format_double(loc.area_km2) << ',' << csv::format_double(loc.population) << '\n';
    }
}

// ---------------------------------------------------------------------------

std::string RegionOfInterest::id() const
{
    return "R" + std::to_string(grid_index.i) + "_" + std::to_string(grid_index.j);
}

std::vector<LatLon> Tessellation::boundary() const
{
    const double dlat = nx > 0 ? ny * cell_size_km / km_per_degree : 0.0;
    const double dlon = nx * cell_size_km / (km_per_degree * std::cos(anchor_lat * deg));
    return {origin,
            {origin.lat, origin.lon + dlon},
            {origin.lat + dlat, origin.lon + dlon},
            {origin.lat + dlat, origin.lon}};
}

const RegionOfInterest* Tessellation::find(const std::string& region_id) const
{
    auto idx = index_of(region_id);
    return idx ? &cells[*idx] : nullptr;
}

std::optional<std::size_t> Tessellation::index_of(const std::string& region_id) const
{
    for (std::size_t k = 0; k < cells.size(); ++k) {
        if (cells[k].id() == region_id) {
            return k;
        }
    }
    return std::nullopt;
}

namespace {

struct GridFrame {
    double cell_km;
    double anchor_lat;
    LatLon origin;

    double km_per_deg_lon() const { return km_per_degree * std::cos(anchor_lat * deg); }

    GridIndex locate(LatLon p) const
    {
        const double x = (p.lon - origin.lon) * km_per_deg_lon();
        const double y = (p.lat - origin.lat) * km_per_degree;
        return {static_cast<int>(std::floor(x / cell_km)), static_cast<int>(std::floor(y / cell_km))};
    }

    Bounds cell_bounds(GridIndex g) const
    {
        const double dlat = cell_km / km_per_degree;
        const double dlon = cell_km / km_per_deg_lon();
        return {origin.lat + g.j * dlat, origin.lon + g.i * dlon, origin.lat + (g.j + 1) * dlat,
                origin.lon + (g.i + 1) * dlon};
    }
};

Tessellation assemble(const GridFrame& frame, int nx, int ny, const std::map<std::string, GridIndex>& assignment,
                      std::span<const Location> locations)
{
    std::unordered_map<std::string, double> population;
    for (const auto& loc : locations) {
        population[loc.id] = loc.population;
    }

    std::map<GridIndex, RegionOfInterest> by_cell;
    for (const auto& [id, g] : assignment) {
        auto& cell      = by_cell[g];
        cell.grid_index = g;
        cell.location_ids.push_back(id);
        auto pop = population.find(id);
        if (pop == population.end()) {
            throw Error(ErrorCode::MissingData, "tessellation references unknown location " + id);
        }
        cell.total_population += pop->second;
    }

    Tessellation tess;
    tess.cell_size_km = frame.cell_km;
    tess.anchor_lat   = frame.anchor_lat;
    tess.origin       = frame.origin;
    tess.nx           = nx;
    tess.ny           = ny;
    tess.assignment   = assignment;
    for (auto& [g, cell] : by_cell) {
        cell.bounds = frame.cell_bounds(g);
        std::sort(cell.location_ids.begin(), cell.location_ids.end());
        tess.cells.push_back(std::move(cell));
    }
    return tess;
}

} // namespace

Tessellation build_tessellation(std::span<const Location> locations, double cell_size_km)
{
    if (locations.empty()) {
        throw Error(ErrorCode::EmptyInput, "no locations to tessellate");
    }
    if (!(cell_size_km > 0.0)) {
        throw Error(ErrorCode::MalformedInput, "cell size must be positive");
    }

    double lat_sum = 0.0;
    LatLon lo{locations[0].centroid};
    LatLon hi{locations[0].centroid};
    for (const auto& loc : locations) {
        lat_sum += loc.centroid.lat;
        lo.lat = std::min(lo.lat, loc.centroid.lat);
        lo.lon = std::min(lo.lon, loc.centroid.lon);
        hi.lat = std::max(hi.lat, loc.centroid.lat);
        hi.lon = std::max(hi.lon, loc.centroid.lon);
    }
    const GridFrame frame{cell_size_km, lat_sum / static_cast<double>(locations.size()), lo};

    std::map<std::string, GridIndex> assignment;
    for (const auto& loc : locations) {
        assignment[loc.id] = frame.locate(loc.centroid);
    }
    const GridIndex far = frame.locate(hi);
    return assemble(frame, far.i + 1, far.j + 1, assignment, locations);
}

void write_tessellation(const Tessellation& tess, const std::filesystem::path& csv_path,
                        const std::filesystem::path& json_path)
{
    {
        std::ofstream out(csv_path, std::ios::binary);
        out << "location_id,cell_i,cell_j\n";
        for (const auto& [id, g] : tess.assignment) {
            out << id << ',' << g.i << ',' << g.j << '\n';
        }
    }
    const auto outline = tess.boundary();
    nlohmann::json meta;
    meta["format"]       = "flowgen-tessellation/1";
    meta["cell_size_km"] = tess.cell_size_km;
    meta["anchor_lat"]   = tess.anchor_lat;
    meta["origin"]       = {{"lat", tess.origin.lat}, {"lon", tess.origin.lon}};
    meta["nx"]           = tess.nx;
    meta["ny"]           = tess.ny;
    meta["bounds"]       = {{"min_lat", outline[0].lat},
                            {"min_lon", outline[0].lon},
                            {"max_lat", outline[2].lat},
                            {"max_lon", outline[2].lon}};
    meta["n_cells"]      = tess.cells.size();
    std::ofstream(json_path, std::ios::binary) << meta.dump(2) << '\n';
}

Tessellation load_tessellation(const std::filesystem::path& csv_path, const std::filesystem::path& json_path,
                               std::span<const Location> locations)
{
    std::ifstream in(json_path);
    if (!in) {
        throw Error(ErrorCode::InputNotFound, "input not found: " + json_path.string());
    }
    nlohmann::json meta;
    try {
        meta = nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedInput, json_path.string() + ": " + e.what());
    }
    const GridFrame frame{meta.at("cell_size_km").get<double>(), meta.at("anchor_lat").get<double>(),
                          {meta.at("origin").at("lat").get<double>(), meta.at("origin").at("lon").get<double>()}};

    const auto table = csv::read(csv_path);
    const auto c_id  = table.require_column("location_id", csv_path);
    const auto c_i   = table.require_column("cell_i", csv_path);
    const auto c_j   = table.require_column("cell_j", csv_path);
    std::map<std::string, GridIndex> assignment;
    for (const auto& row : table.rows) {
        assignment[row[c_id]] = {static_cast<int>(csv::to_double(row[c_i], "cell_i")),
                                 static_cast<int>(csv::to_double(row[c_j], "cell_j"))};
    }
    return assemble(frame, meta.at("nx").get<int>(), meta.at("ny").get<int>(), assignment, locations);
}

// ---------------------------------------------------------------------------

FlowTable FlowTable::from_records(std::vector<FlowRecord> records)
{
    std::map<std::pair<std::string, std::string>, double> merged;
    for (auto& r : records) {
        if (!(r.flow >= 0.0) || !std::isfinite(r.flow)) {
            throw Error(ErrorCode::NegativeFlow,
                        "flow " + r.origin + "->" + r.destination + " = " + std::to_string(r.flow));
        }
        merged[{std::move(r.origin), std::move(r.destination)}] += r.flow;
    }
    FlowTable table;
    table.m_records.reserve(merged.size());
    for (auto& [key, value] : merged) {
        table.m_outflows[key.first] += value;
        table.m_records.push_back({key.first, key.second, value});
    }
    return table;
}

double FlowTable::outflow(const std::string& origin) const
{
    auto it = m_outflows.find(origin);
    return it == m_outflows.end() ? 0.0 : it->second;
}

double FlowTable::total() const
{
    double sum = 0.0;
    for (const auto& r : m_records) {
        sum += r.flow;
    }
    return sum;
}

FlowTable load_flows(const std::filesystem::path& path)
{
    const auto table = csv::read(path);
    const auto c_o   = table.require_column("origin_id", path);
    const auto c_d   = table.require_column("destination_id", path);
    const auto c_f   = table.require_column("flow", path);
    std::vector<FlowRecord> records;
    records.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        if (row[c_o].empty() || row[c_d].empty()) {
            throw Error(ErrorCode::MalformedInput, path.string() + ": empty origin or destination id");
        }
        records.push_back({row[c_o], row[c_d], csv::to_double(row[c_f], "flow")});
    }
    return FlowTable::from_records(std::move(records));
}

void write_flows(const std::filesystem::path& path, const FlowTable& flows)
{
    std::ofstream out(path, std::ios::binary);
    out << "origin_id,destination_id,flow\n";
    for (const auto& r : flows.records()) {
        out << r.origin << ',' << r.destination << ',' << csv::format_double(r.flow) << '\n';
    }
}

FlowTable intra_region_flows(const FlowTable& flows, const RegionOfInterest& region)
{
    const std::unordered_set<std::string> members(region.location_ids.begin(), region.location_ids.end());
    auto member = [&](const std::string& id) { return members.contains(id); };
    std::vector<FlowRecord> kept;
    for (const auto& r : flows.records()) {
        if (member(r.origin) && member(r.destination)) {
            kept.push_back(r);
        }
    }
    return FlowTable::from_records(std::move(kept));
}

FlowTable without_self_flows(const FlowTable& flows)
{
    std::vector<FlowRecord> kept;
    for (const auto& r : flows.records()) {
        if (r.origin != r.destination) {
            kept.push_back(r);
        }
    }
    return FlowTable::from_records(std::move(kept));
}

} // namespace flowgen
