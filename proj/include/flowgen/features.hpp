#pragma once

#include "flowgen/geodata.hpp"
#include "flowgen/variant.hpp"

#include <Eigen/Core>

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace flowgen {

inline constexpr int n_geo_features = 18;

/// Versioned column order of the per-location geographic features.
inline constexpr std::array<std::string_view, n_geo_features> feature_names = {
    "landuse_residential_km2", "landuse_commercial_km2", "landuse_industrial_km2", "landuse_retail_km2",
    "landuse_natural_km2",     "road_residential_km",    "road_main_km",           "road_other_km",
    "transport_pois",          "transport_buildings",    "food_pois",              "food_buildings",
    "health_pois",             "health_buildings",       "education_pois",         "education_buildings",
    "retail_pois",             "retail_buildings"};
inline constexpr std::string_view feature_schema_version = "flowgen-features/1";

/// Columns 8..17 count POIs or buildings; the first 8 are areas and lengths.
inline constexpr int first_count_feature = 8;

std::optional<int> feature_index(std::string_view name);

using GeoVector = Eigen::Matrix<double, n_geo_features, 1>;
/// 18 geographic features followed by population density.
using LocationVector = Eigen::Matrix<double, n_geo_features + 1, 1>;

enum class PoiCategory { transport, food, health, education, retail };
PoiCategory parse_poi_category(std::string_view text);
/// Schema column incremented by a POI of this category.
int poi_feature_index(PoiCategory category);

struct Poi {
    LatLon position;
    PoiCategory category;
};

std::vector<Poi> load_pois(const std::filesystem::path& path);

struct PoiAggregation {
    std::map<std::string, GeoVector> counts; // only *_pois columns are nonzero
    std::array<std::size_t, 5> dropped{};    // per category, outside every polygon

    std::size_t total_dropped() const;
};

/// Point-in-polygon assignment of POIs to location polygons. A POI on several
/// overlapping polygons goes to the first in input order.
PoiAggregation aggregate_pois(std::span<const Location> locations, std::span<const Poi> pois);

/// Missing schema columns default to zero; a column outside the schema throws UnknownFeatureColumn.
std::map<std::string, GeoVector> load_precomputed_features(const std::filesystem::path& path);

/// Sums count columns present in both tables; any other column set in both throws ConflictingFeature.
std::map<std::string, GeoVector> merge_features(const std::map<std::string, GeoVector>& a,
                                                const std::map<std::string, GeoVector>& b);

void write_features_csv(const std::filesystem::path& path, const std::map<std::string, GeoVector>& raw);

struct LocationFeatures {
    std::string location_id;
    GeoVector raw;
    GeoVector normalized;
    double population_density = 0.0;

    LocationVector stacked() const
    {
        LocationVector v;
        v << normalized, population_density;
        return v;
    }
};

LocationFeatures normalize(const GeoVector& raw, const Location& location);

/// Mean of the stacked vectors of the k locations nearest to `target` (the
/// target itself excluded); distance ties go to the smaller id.
LocationVector knn_neighbor_averages(std::size_t target, std::span<const Location> locations,
                                     std::span<const LocationFeatures> features, int k);

/// Length of the per-pair input vector of each variant.
int input_dimension(ModelVariant variant);

struct KnnContext {
    LocationVector origin;
    LocationVector destination;
};

struct PairInputOptions {
    Deterrence deterrence = Deterrence::power; // only used by G
    std::optional<KnnContext> knn;             // required iff DG-Knn
};

/// Writes x(l_i, l_j) for the variant into `out`, which must have input_dimension(variant) rows.
/// G uses populations (m_j); every other variant uses area-normalized values.
void write_pair_input(const Location& origin, const LocationFeatures& origin_features, const Location& dest,
                      const LocationFeatures& dest_features, double distance_km, ModelVariant variant,
                      const PairInputOptions& options, Eigen::Ref<Eigen::VectorXd> out);

struct PairInput {
    std::string origin_id;
    std::string destination_id;
    Eigen::VectorXd vector;
};

PairInput assemble_pair_input(const Location& origin, const LocationFeatures& origin_features,
                              const Location& dest, const LocationFeatures& dest_features, double distance_km,
                              ModelVariant variant, const PairInputOptions& options = {});

/// Human-readable names of the input vector entries of a variant.
std::vector<std::string> input_names(ModelVariant variant, Deterrence deterrence = Deterrence::power);

} // namespace flowgen
