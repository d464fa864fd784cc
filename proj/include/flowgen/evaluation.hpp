#pragma once

#include "flowgen/dataset.hpp"
#include "flowgen/metrics.hpp"
#include "flowgen/model.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flowgen {

// ---------------------------------------------------------------------------
// Splits

/// Decile 1..10 of every region, by rank of total population (ties by grid index).
std::map<std::string, int> population_deciles(std::span<const RegionOfInterest> regions);

struct SplitPlan {
    std::vector<std::string> train_region_ids;
    std::vector<std::string> test_region_ids;
    std::uint64_t seed = 0;
    double fraction    = 0.5;
    std::map<int, std::pair<int, int>> strata; // decile -> (train count, test count)
    std::map<std::string, int> deciles;
};

/// Stratified by population decile; within a decile regions are shuffled and the
/// train side takes round(fraction * cumulative count) of them. Throws TooFewRegions below 10.
SplitPlan stratified_split(std::span<const RegionOfInterest> regions, std::uint64_t seed, double fraction = 0.5);

nlohmann::json to_json(const SplitPlan& plan);
SplitPlan split_from_json(const nlohmann::json& j);
void save_split(const SplitPlan& plan, const std::filesystem::path& path);
SplitPlan load_split(const std::filesystem::path& path);

/// Throws LeakageDetected naming the shared regions.
void assert_disjoint(std::span<const std::string> train, std::span<const std::string> test);

// ---------------------------------------------------------------------------
// Reports

struct RegionResult {
    std::string region_id;
    MetricValues metrics;
    std::size_t n_locations = 0;
    double population       = 0.0;
    int decile              = 0;
};

struct DecileSummary {
    double mean_cpc     = 0.0;
    double std_cpc      = 0.0; // population std over regions (or over runs, after aggregation)
    std::size_t n       = 0;
    MetricValues mean;         // all four measures averaged
};

struct EvalReport {
    std::string model;
    std::vector<RegionResult> per_region; // ordered by region id
    std::map<int, DecileSummary> per_decile;
    MetricValues pooled; // all OD pairs of all test regions aligned together
    MetricValues macro;  // mean of per-region values
};

/// Generated flows of one region given its members' observed outflows.
using Predictor = std::function<FlowTable(const Dataset&, std::size_t region, std::span<const double> outflow)>;

/// Runs `predict` on each test region against its real intra-region flows
/// (self-flows excluded). Deciles come from `deciles` when present, else from the regions.
EvalReport evaluate_predictor(const Predictor& predict, std::string name, const Dataset& data,
                              std::span<const std::string> test_region_ids,
                              const std::map<std::string, int>& deciles = {}, int jobs = 1);

/// Throws LeakageDetected when the model's training regions meet the test set.
EvalReport evaluate_model(const FlowModel& model, const SplitPlan& split, const Dataset& data, int jobs = 1);

/// 100 (model - baseline) / baseline. Throws ZeroBaseline.
double relative_improvement(double model_cpc, double baseline_cpc);

struct RelativeImprovement {
    std::map<int, double> per_decile;
    double global = 0.0; // on pooled CPC
};
RelativeImprovement relative_improvement(const EvalReport& model, const EvalReport& baseline);

/// Mean over runs of each decile's mean CPC, with the std over runs; likewise for the global measures.
struct RunSummary {
    std::string model;
    std::size_t n_runs = 0;
    std::map<int, DecileSummary> per_decile;
    MetricValues pooled_mean;
    MetricValues pooled_std;
};
RunSummary summarize_runs(std::span<const EvalReport> runs);

nlohmann::json to_json(const EvalReport& report);
nlohmann::json to_json(const RunSummary& summary);
/// region_id, decile, model, cpc, pearson, nrmse, jsd.
void write_report_csv(const std::filesystem::path& path, std::span<const EvalReport> reports);

// ---------------------------------------------------------------------------
// Leave-one-group-out

struct FoldResult {
    std::string group;
    std::vector<std::string> train_region_ids;
    std::vector<std::string> test_region_ids;
    EvalReport report;
};

/// group,region_id rows.
std::map<std::string, std::vector<std::string>> load_groups(const std::filesystem::path& path);

/// One fold per group: train on every other group's regions, test on the group.
/// Throws OverlappingGroups when a region is in two groups, TooFewRegions with fewer than 2 groups.
std::vector<FoldResult> leave_one_group_out(const std::map<std::string, std::vector<std::string>>& groups,
                                            const ModelConfig& config, Dataset& data);

} // namespace flowgen
