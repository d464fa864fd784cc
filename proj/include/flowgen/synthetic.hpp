#pragma once

// Desk-scale oracle datasets with known generating parameters.

#include "flowgen/dataset.hpp"
#include "flowgen/features.hpp"
#include "flowgen/geodata.hpp"
#include "flowgen/variant.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

namespace flowgen {

enum class SyntheticGenerator { gravity_truth, nonlinear_truth };

std::string_view to_string(SyntheticGenerator g);
SyntheticGenerator parse_generator(std::string_view text);

struct SyntheticSpec {
    int n_regions            = 10;
    int locations_per_region = 40;
    std::uint64_t seed       = 1;
    SyntheticGenerator generator = SyntheticGenerator::gravity_truth;
    double outflow_scale     = 1000.0; // O_i of every origin

    double beta1          = 1.0;
    double beta2          = -2.0;
    Deterrence deterrence = Deterrence::power;

    // nonlinear_truth only. Score terms, with z(.) a standardized log value:
    //   delta  * z(m_i) * g(r)               origin-population dependent decay
    //   lambda * z(commercial land use of j)
    //   gamma  * z(food_j) * z(retail_j)     feature-product interaction
    double delta  = 0.0;
    double lambda = 0.0;
    double gamma  = 0.0;

    double population_min = 500.0;
    double population_max = 2000.0;
    double feature_min    = 10.0;
    double feature_max    = 100.0;
    double cell_size_km   = 25.0;
    double margin_km      = 2.0; // locations keep this distance from tile edges
    int n_groups          = 1;   // contiguous blocks of regions, for leave-one-group-out
    double zero_outflow_fraction = 0.0;
    LatLon anchor{45.0, 9.0};
};

/// Planted-interaction defaults used for the model-ordering experiment.
SyntheticSpec nonlinear_truth_spec(int n_regions, int locations_per_region, std::uint64_t seed);

struct SyntheticDataset {
    SyntheticSpec spec;
    std::vector<Location> locations;
    std::map<std::string, GeoVector> raw_features;
    FlowTable flows;
    std::map<std::string, std::string> region_of; // location id -> region id
    std::map<std::string, std::vector<std::string>> groups;

    nlohmann::json truth() const;
};

/// Locations on a jittered grid inside one tessellation cell per region, log-uniform
/// populations and features, multinomial(O_i, p_i) flows from the planted score.
SyntheticDataset generate_synthetic(const SyntheticSpec& spec);

/// Tessellates at the generating cell size; regions coincide with the generating tiles.
Dataset to_dataset(const SyntheticDataset& synthetic);

/// locations.csv, features.csv, flows.csv, groups.csv and truth.json in `dir`.
void write_synthetic(const SyntheticDataset& synthetic, const std::filesystem::path& dir);

} // namespace flowgen
