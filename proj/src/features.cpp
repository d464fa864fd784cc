#include "flowgen/features.hpp"
#include "flowgen/csv.hpp"
#include "flowgen/error.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <numeric>

namespace flowgen {

namespace {

std::string normalized_token(std::string_view text)
{
    std::string s(text);
    for (auto& c : s) {
        c = c == '_' ? '-' : static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    }
    return s;
}

} // namespace

std::string_view to_string(ModelVariant variant)
{
    switch (variant) {
    case ModelVariant::g: return "g";
    case ModelVariant::ng: return "ng";
    case ModelVariant::mfg: return "mfg";
    case ModelVariant::dg: return "dg";
    case ModelVariant::dg_sum: return "dg-sum";
    case ModelVariant::dg_knn: return "dg-knn";
    }
    return "?";
}

std::string_view to_string(Deterrence deterrence)
{
    return deterrence == Deterrence::power ? "power" : "exponential";
}

ModelVariant parse_variant(std::string_view text)
{
    const auto s = normalized_token(text);
    if (s == "g") return ModelVariant::g;
    if (s == "ng") return ModelVariant::ng;
    if (s == "mfg") return ModelVariant::mfg;
    if (s == "dg") return ModelVariant::dg;
    if (s == "dg-sum") return ModelVariant::dg_sum;
    if (s == "dg-knn") return ModelVariant::dg_knn;
    throw Error(ErrorCode::MalformedInput, "unknown model variant '" + std::string(text) + "'");
}

Deterrence parse_deterrence(std::string_view text)
{
    const auto s = normalized_token(text);
    if (s == "power") return Deterrence::power;
    if (s == "exponential" || s == "exp") return Deterrence::exponential;
    throw Error(ErrorCode::MalformedInput, "unknown deterrence '" + std::string(text) + "'");
}

std::optional<int> feature_index(std::string_view name)
{
    for (int k = 0; k < n_geo_features; ++k) {
        if (feature_names[k] == name) {
            return k;
        }
    }
    return std::nullopt;
}

PoiCategory parse_poi_category(std::string_view text)
{
    const auto s = normalized_token(text);
    if (s == "transport") return PoiCategory::transport;
    if (s == "food") return PoiCategory::food;
    if (s == "health") return PoiCategory::health;
    if (s == "education") return PoiCategory::education;
    if (s == "retail") return PoiCategory::retail;
    throw Error(ErrorCode::MalformedInput, "unknown POI category '" + std::string(text) + "'");
}

int poi_feature_index(PoiCategory category)
{
    return first_count_feature + 2 * static_cast<int>(category);
}

std::vector<Poi> load_pois(const std::filesystem::path& path)
{
    const auto table = csv::read(path);
    const auto c_lat = table.require_column("lat", path);
    const auto c_lon = table.require_column("lon", path);
    const auto c_cat = table.require_column("category", path);
    std::vector<Poi> pois;
    pois.reserve(table.rows.size());
    for (const auto& row : table.rows) {
        pois.push_back({{csv::to_double(row[c_lat], "lat"), csv::to_double(row[c_lon], "lon")},
                        parse_poi_category(row[c_cat])});
    }
    return pois;
}

std::size_t PoiAggregation::total_dropped() const
{
    return std::accumulate(dropped.begin(), dropped.end(), std::size_t{0});
}

PoiAggregation aggregate_pois(std::span<const Location> locations, std::span<const Poi> pois)
{
    PoiAggregation result;
    for (const auto& loc : locations) {
        if (loc.polygon.empty()) {
            throw Error(ErrorCode::MissingPolygon, "location " + loc.id + " has no polygon for POI aggregation");
        }
        result.counts[loc.id] = GeoVector::Zero();
    }
    for (const auto& poi : pois) {
        bool placed = false;
        for (const auto& loc : locations) {
            if (point_in_polygon(poi.position, loc.polygon)) {
                result.counts[loc.id][poi_feature_index(poi.category)] += 1.0;
                placed = true;
                break;
            }
        }
        if (!placed) {
            ++result.dropped[static_cast<std::size_t>(poi.category)];
        }
    }
    return result;
}

std::map<std::string, GeoVector> load_precomputed_features(const std::filesystem::path& path)
{
    const auto table = csv::read(path);
    const auto c_id  = table.require_column("location_id", path);
    std::vector<std::pair<std::size_t, int>> columns;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
        if (c == c_id) {
            continue;
        }
        auto k = feature_index(table.header[c]);
        if (!k) {
            throw Error(ErrorCode::UnknownFeatureColumn, path.string() + ": column '" + table.header[c] + "'");
        }
        columns.emplace_back(c, *k);
    }

    std::map<std::string, GeoVector> out;
    for (const auto& row : table.rows) {
        GeoVector v = GeoVector::Zero();
        for (auto [c, k] : columns) {
            const double value = csv::to_double(row[c], table.header[c]);
            if (!(value >= 0.0) || !std::isfinite(value)) {
                throw Error(ErrorCode::MalformedInput, path.string() + ": negative feature for " + row[c_id]);
            }
            v[k] = value;
        }
        if (!out.emplace(row[c_id], v).second) {
            throw Error(ErrorCode::DuplicateId, path.string() + ": duplicate location " + row[c_id]);
        }
    }
    return out;
}

std::map<std::string, GeoVector> merge_features(const std::map<std::string, GeoVector>& a,
                                                const std::map<std::string, GeoVector>& b)
{
    auto merged = a;
    for (const auto& [id, vb] : b) {
        auto [it, inserted] = merged.emplace(id, vb);
        if (inserted) {
            continue;
        }
        GeoVector& va = it->second;
        for (int k = 0; k < n_geo_features; ++k) {
            if (k >= first_count_feature && (k - first_count_feature) % 2 == 0) {
                va[k] += vb[k];
            }
            else if (va[k] != 0.0 && vb[k] != 0.0) {
                throw Error(ErrorCode::ConflictingFeature,
                            "location " + id + ": " + std::string(feature_names[k]) + " set by both sources");
            }
            else {
                va[k] += vb[k];
            }
        }
    }
    return merged;
}

void write_features_csv(const std::filesystem::path& path, const std::map<std::string, GeoVector>& raw)
{
    std::ofstream out(path, std::ios::binary);
    out << "location_id";
    for (auto name : feature_names) {
        out << ',' << name;
    }
    out << '\n';
    for (const auto& [id, v] : raw) {
        out << id;
        for (int k = 0; k < n_geo_features; ++k) {
            out << ',' << csv::format_double(v[k]);
        }
        out << '\n';
    }
}

LocationFeatures normalize(const GeoVector& raw, const Location& location)
{
    if (!(location.area_km2 > 0.0)) {
        throw Error(ErrorCode::ZeroArea, "location " + location.id + " has nonpositive area");
    }
    LocationFeatures f;
    f.location_id        = location.id;
    f.raw                = raw;
    f.normalized         = raw / location.area_km2;
    f.population_density = location.population / location.area_km2;
    return f;
}

LocationVector knn_neighbor_averages(std::size_t target, std::span<const Location> locations,
                                     std::span<const LocationFeatures> features, int k)
{
    if (k < 1 || static_cast<std::size_t>(k) >= locations.size()) {
        throw Error(ErrorCode::InsufficientLocations,
                    "k=" + std::to_string(k) + " needs more than k locations, have " +
                        std::to_string(locations.size()));
    }
    std::vector<std::pair<double, std::size_t>> order;
    order.reserve(locations.size() - 1);
    for (std::size_t n = 0; n < locations.size(); ++n) {
        if (n != target) {
            order.emplace_back(distance(locations[target], locations[n]), n);
        }
    }
    std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](const auto& a, const auto& b) {
        if (a.first != b.first) {
            return a.first < b.first;
        }
        return locations[a.second].id < locations[b.second].id;
    });
    LocationVector sum = LocationVector::Zero();
    for (int n = 0; n < k; ++n) {
        sum += features[order[n].second].stacked();
    }
    return sum / static_cast<double>(k);
}

int input_dimension(ModelVariant variant)
{
    switch (variant) {
    case ModelVariant::g: return 2;
    case ModelVariant::ng: return 3;
    case ModelVariant::dg_sum: return 5;
    case ModelVariant::mfg:
    case ModelVariant::dg: return 2 * (n_geo_features + 1) + 1;
    case ModelVariant::dg_knn: return 4 * (n_geo_features + 1) + 1;
    }
    return 0;
}

void write_pair_input(const Location& origin, const LocationFeatures& of, const Location& dest,
                      const LocationFeatures& df, double r, ModelVariant variant, const PairInputOptions& options,
                      Eigen::Ref<Eigen::VectorXd> out)
{
    if (out.size() != input_dimension(variant)) {
        throw Error(ErrorCode::DimensionMismatch, "pair input buffer has wrong length");
    }
    if (!(r >= 0.0)) {
        throw Error(ErrorCode::MalformedInput, "negative distance");
    }
    constexpr int w = n_geo_features + 1;
    switch (variant) {
    case ModelVariant::g:
        if (!(dest.population > 0.0)) {
            throw Error(ErrorCode::ZeroPopulationCandidate, "destination " + dest.id + " has zero population");
        }
        if (options.deterrence == Deterrence::power && !(r > 0.0)) {
            throw Error(ErrorCode::NonpositiveDistanceForLog, origin.id + "->" + dest.id + " at zero distance");
        }
        out << std::log(dest.population), options.deterrence == Deterrence::power ? std::log(r) : r;
        break;
    case ModelVariant::ng:
        out << of.population_density, df.population_density, r;
        break;
    case ModelVariant::dg_sum:
        out << of.normalized.tail(n_geo_features - first_count_feature).sum(),
            df.normalized.tail(n_geo_features - first_count_feature).sum(), of.population_density,
            df.population_density, r;
        break;
    case ModelVariant::mfg:
    case ModelVariant::dg:
    case ModelVariant::dg_knn:
        out.segment<w>(0)  = of.stacked();
        out.segment<w>(w)  = df.stacked();
        out[2 * w]         = r;
        if (variant == ModelVariant::dg_knn) {
            if (!options.knn) {
                throw Error(ErrorCode::MissingKnnContext, "DG-Knn input needs neighbor averages");
            }
            out.segment<w>(2 * w + 1) = options.knn->origin;
            out.segment<w>(3 * w + 1) = options.knn->destination;
        }
        break;
    }
}

PairInput assemble_pair_input(const Location& origin, const LocationFeatures& origin_features, const Location& dest,
                              const LocationFeatures& dest_features, double distance_km, ModelVariant variant,
                              const PairInputOptions& options)
{
    PairInput p{origin.id, dest.id, Eigen::VectorXd(input_dimension(variant))};
    write_pair_input(origin, origin_features, dest, dest_features, distance_km, variant, options, p.vector);
    return p;
}

std::vector<std::string> input_names(ModelVariant variant, Deterrence deterrence)
{
    auto side = [](const std::string& prefix) {
        std::vector<std::string> names;
        for (auto n : feature_names) {
            names.push_back(prefix + std::string(n));
        }
        names.push_back(prefix + "population_density");
        return names;
    };
    std::vector<std::string> names;
    switch (variant) {
    case ModelVariant::g:
        return {"ln_population_dest", deterrence == Deterrence::power ? "ln_distance_km" : "distance_km"};
    case ModelVariant::ng:
        return {"origin_population_density", "dest_population_density", "distance_km"};
    case ModelVariant::dg_sum:
        return {"origin_poi_total", "dest_poi_total", "origin_population_density", "dest_population_density",
                "distance_km"};
    case ModelVariant::mfg:
    case ModelVariant::dg:
    case ModelVariant::dg_knn: {
        names = side("origin_");
        auto d = side("dest_");
        names.insert(names.end(), d.begin(), d.end());
        names.push_back("distance_km");
        if (variant == ModelVariant::dg_knn) {
            auto ko = side("origin_knn_");
            auto kd = side("dest_knn_");
            names.insert(names.end(), ko.begin(), ko.end());
            names.insert(names.end(), kd.begin(), kd.end());
        }
        return names;
    }
    }
    return names;
}

} // namespace flowgen
