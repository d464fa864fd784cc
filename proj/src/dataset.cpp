#include "flowgen/dataset.hpp"
#include "flowgen/error.hpp"

namespace flowgen {

Dataset::Dataset(std::vector<Location> locations, const std::map<std::string, GeoVector>& raw_features,
                 FlowTable flows, Tessellation tessellation)
    : m_locations(std::move(locations))
    , m_flows(std::move(flows))
    , m_tessellation(std::move(tessellation))
{
    m_features.reserve(m_locations.size());
    for (std::size_t n = 0; n < m_locations.size(); ++n) {
        const auto& loc = m_locations[n];
        if (!m_index.emplace(loc.id, n).second) {
            throw Error(ErrorCode::DuplicateId, "duplicate location id " + loc.id);
        }
        auto raw = raw_features.find(loc.id);
        m_features.push_back(normalize(raw == raw_features.end() ? GeoVector::Zero() : raw->second, loc));
    }
    for (std::size_t r = 0; r < m_tessellation.cells.size(); ++r) {
        m_region_index.emplace(m_tessellation.cells[r].id(), r);
        for (const auto& id : m_tessellation.cells[r].location_ids) {
            if (!m_index.contains(id)) {
                throw Error(ErrorCode::MissingData, "region " + m_tessellation.cells[r].id() +
                                                        " references unknown location " + id);
            }
        }
    }
}

std::size_t Dataset::location_index(const std::string& id) const
{
    auto it = m_index.find(id);
    if (it == m_index.end()) {
        throw Error(ErrorCode::MissingData, "unknown location " + id);
    }
    return it->second;
}

std::size_t Dataset::region_index(const std::string& region_id) const
{
    auto it = m_region_index.find(region_id);
    if (it == m_region_index.end()) {
        throw Error(ErrorCode::MissingData, "unknown region " + region_id);
    }
    return it->second;
}

std::vector<std::size_t> Dataset::region_indices(const std::vector<std::string>& region_ids) const
{
    std::vector<std::size_t> out;
    out.reserve(region_ids.size());
    for (const auto& id : region_ids) {
        out.push_back(region_index(id));
    }
    return out;
}

std::vector<std::size_t> Dataset::members(std::size_t region) const
{
    std::vector<std::size_t> out;
    for (const auto& id : m_tessellation.cells.at(region).location_ids) {
        out.push_back(location_index(id));
    }
    return out;
}

void Dataset::prepare_knn(int k)
{
    if (k == m_knn_k && m_knn.size() == m_locations.size()) {
        return;
    }
    m_knn.clear();
    m_knn.reserve(m_locations.size());
    for (std::size_t n = 0; n < m_locations.size(); ++n) {
        m_knn.push_back(knn_neighbor_averages(n, m_locations, m_features, k));
    }
    m_knn_k = k;
}

void Dataset::set_deciles(const std::map<std::string, int>& deciles)
{
    for (auto& cell : m_tessellation.cells) {
        auto it = deciles.find(cell.id());
        if (it != deciles.end()) {
            cell.decile = it->second;
        }
    }
}

RegionFlows region_flows(const Dataset& data, std::size_t region)
{
    RegionFlows rf;
    rf.region  = region;
    rf.members = data.members(region);
    rf.table   = without_self_flows(intra_region_flows(data.flows(), data.regions()[region]));

    std::unordered_map<std::string, std::size_t> position;
    for (std::size_t a = 0; a < rf.members.size(); ++a) {
        position.emplace(data.locations()[rf.members[a]].id, a);
    }
    rf.outflow.assign(rf.members.size(), 0.0);
    rf.observed.resize(rf.members.size());
    for (const auto& r : rf.table.records()) {
        if (r.flow <= 0.0) {
            continue;
        }
        const auto o = position.at(r.origin);
        rf.observed[o].emplace_back(position.at(r.destination), r.flow);
        rf.outflow[o] += r.flow;
    }
    return rf;
}

} // namespace flowgen
