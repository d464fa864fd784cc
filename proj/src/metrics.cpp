#include "flowgen/metrics.hpp"

#include <map>

namespace flowgen {

namespace {

using PairKey = std::pair<std::string, std::string>;

AlignedFlows from_map(const std::map<PairKey, std::pair<double, double>>& merged)
{
    AlignedFlows out;
    out.real.resize(static_cast<Eigen::Index>(merged.size()));
    out.generated.resize(static_cast<Eigen::Index>(merged.size()));
    Eigen::Index k = 0;
    for (const auto& [key, values] : merged) {
        out.pairs.push_back(key);
        out.real[k]      = values.first;
        out.generated[k] = values.second;
        ++k;
    }
    return out;
}

} // namespace

AlignedFlows align(const FlowTable& real, const FlowTable& generated)
{
    std::map<PairKey, std::pair<double, double>> merged;
    for (const auto& r : real.records()) {
        merged[{r.origin, r.destination}].first += r.flow;
    }
    for (const auto& r : generated.records()) {
        merged[{r.origin, r.destination}].second += r.flow;
    }
    return from_map(merged);
}

AlignedFlows align(const AlignedFlows& aligned)
{
    std::map<PairKey, std::pair<double, double>> merged;
    for (std::size_t k = 0; k < aligned.pairs.size(); ++k) {
        auto& slot = merged[aligned.pairs[k]];
        slot.first += aligned.real[static_cast<Eigen::Index>(k)];
        slot.second += aligned.generated[static_cast<Eigen::Index>(k)];
    }
    return from_map(merged);
}

Eigen::VectorXd flows_to_distribution(const FlowTable& table)
{
    Eigen::VectorXd values(static_cast<Eigen::Index>(table.size()));
    for (std::size_t k = 0; k < table.size(); ++k) {
        values[static_cast<Eigen::Index>(k)] = table.records()[k].flow;
    }
    return to_distribution(values);
}

MetricValues compute_metrics(const AlignedFlows& aligned)
{
    MetricValues m;
    if (aligned.pairs.empty()) {
        return m;
    }
    auto guarded = [](auto&& f) {
        try {
            return f();
        }
        catch (const Error&) {
            return std::numeric_limits<double>::quiet_NaN();
        }
    };
    m.cpc     = guarded([&] { return cpc(aligned); });
    m.pearson = guarded([&] { return pearson(aligned); });
    m.nrmse   = guarded([&] { return nrmse(aligned); });
    m.jsd     = guarded([&] { return jsd(aligned); });
    return m;
}

} // namespace flowgen
