#pragma once

#include "flowgen/features.hpp"
#include "flowgen/geodata.hpp"

#include <cstddef>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>
#include <vector>

namespace flowgen {

/// Locations, their normalized features, all observed flows and the region
/// tessellation, indexed for model training and evaluation.
class Dataset {
public:
    Dataset() = default;
    /// Locations without an entry in `raw_features` get an all-zero feature vector.
    Dataset(std::vector<Location> locations, const std::map<std::string, GeoVector>& raw_features, FlowTable flows,
            Tessellation tessellation);

    const std::vector<Location>& locations() const { return m_locations; }
    const std::vector<LocationFeatures>& features() const { return m_features; }
    const FlowTable& flows() const { return m_flows; }
    const Tessellation& tessellation() const { return m_tessellation; }
    const std::vector<RegionOfInterest>& regions() const { return m_tessellation.cells; }

    /// Throws MissingData for an unknown id.
    std::size_t location_index(const std::string& id) const;
    /// Throws MissingData for an unknown region id.
    std::size_t region_index(const std::string& region_id) const;
    std::vector<std::size_t> region_indices(const std::vector<std::string>& region_ids) const;

    /// Dataset location indices of a region's members, in region order.
    std::vector<std::size_t> members(std::size_t region) const;

    /// Caches the k-nearest-neighbor averages used by DG-Knn (computed over all locations).
    void prepare_knn(int k);
    int knn_k() const { return m_knn_k; }
    const LocationVector& knn_average(std::size_t location) const { return m_knn[location]; }

    /// Overwrites region deciles (e.g. from a split plan).
    void set_deciles(const std::map<std::string, int>& deciles);

private:
    std::vector<Location> m_locations;
    std::vector<LocationFeatures> m_features;
    FlowTable m_flows;
    Tessellation m_tessellation;
    std::unordered_map<std::string, std::size_t> m_index;
    std::unordered_map<std::string, std::size_t> m_region_index;
    std::vector<LocationVector> m_knn;
    int m_knn_k = 0;
};

/// Intra-region flows of one region with self-flows removed, in member-local indexing.
struct RegionFlows {
    std::size_t region = 0;
    std::vector<std::size_t> members;                                  // dataset location indices
    std::vector<double> outflow;                                       // O_i per member
    std::vector<std::vector<std::pair<std::size_t, double>>> observed; // per member: (member position, flow)
    FlowTable table;
};

RegionFlows region_flows(const Dataset& data, std::size_t region);

} // namespace flowgen
