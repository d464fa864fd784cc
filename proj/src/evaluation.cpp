#include "flowgen/evaluation.hpp"
#include "flowgen/csv.hpp"
#include "flowgen/error.hpp"
#include "flowgen/log.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>
#include <set>
#include <thread>

namespace flowgen {

std::map<std::string, int> population_deciles(std::span<const RegionOfInterest> regions)
{
    std::vector<std::size_t> order(regions.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (regions[a].total_population != regions[b].total_population) {
            return regions[a].total_population < regions[b].total_population;
        }
        return regions[a].grid_index < regions[b].grid_index;
    });
    std::map<std::string, int> deciles;
    const auto n = regions.size();
    for (std::size_t rank = 0; rank < n; ++rank) {
        deciles[regions[order[rank]].id()] = static_cast<int>(rank * 10 / n) + 1;
    }
    return deciles;
}

SplitPlan stratified_split(std::span<const RegionOfInterest> regions, std::uint64_t seed, double fraction)
{
    if (regions.size() < 10) {
        throw Error(ErrorCode::TooFewRegions,
                    "a stratified split needs at least 10 regions, have " + std::to_string(regions.size()));
    }
    if (!(fraction > 0.0 && fraction < 1.0)) {
        throw Error(ErrorCode::MalformedInput, "split fraction must be in (0, 1)");
    }
    SplitPlan plan;
    plan.seed     = seed;
    plan.fraction = fraction;
    plan.deciles  = population_deciles(regions);

    std::map<int, std::vector<std::string>> strata;
    for (const auto& r : regions) {
        strata[plan.deciles.at(r.id())].push_back(r.id());
    }
    std::mt19937_64 rng(seed);
    std::size_t cumulative = 0;
    long long train_so_far = 0;
    for (auto& [decile, ids] : strata) {
        std::sort(ids.begin(), ids.end());
        std::shuffle(ids.begin(), ids.end(), rng);
        cumulative += ids.size();
        const auto target = std::llround(fraction * static_cast<double>(cumulative));
        const auto take   = static_cast<std::size_t>(std::clamp<long long>(target - train_so_far, 0,
                                                                              static_cast<long long>(ids.size())));
        train_so_far += static_cast<long long>(take);
        plan.train_region_ids.insert(plan.train_region_ids.end(), ids.begin(), ids.begin() + take);
        plan.test_region_ids.insert(plan.test_region_ids.end(), ids.begin() + take, ids.end());
        plan.strata[decile] = {static_cast<int>(take), static_cast<int>(ids.size() - take)};
    }
    std::sort(plan.train_region_ids.begin(), plan.train_region_ids.end());
    std::sort(plan.test_region_ids.begin(), plan.test_region_ids.end());
    return plan;
}

nlohmann::json to_json(const SplitPlan& plan)
{
    nlohmann::json strata = nlohmann::json::array();
    for (const auto& [d, counts] : plan.strata) {
        strata.push_back({{"decile", d}, {"train", counts.first}, {"test", counts.second}});
    }
    return {{"format", "flowgen-split/1"},
            {"seed", plan.seed},
            {"fraction", plan.fraction},
            {"train_region_ids", plan.train_region_ids},
            {"test_region_ids", plan.test_region_ids},
            {"strata", strata},
            {"deciles", plan.deciles}};
}

SplitPlan split_from_json(const nlohmann::json& j)
{
    try {
        SplitPlan plan;
        plan.seed             = j.at("seed").get<std::uint64_t>();
        plan.fraction         = j.at("fraction").get<double>();
        plan.train_region_ids = j.at("train_region_ids").get<std::vector<std::string>>();
        plan.test_region_ids  = j.at("test_region_ids").get<std::vector<std::string>>();
        for (const auto& s : j.at("strata")) {
            plan.strata[s.at("decile").get<int>()] = {s.at("train").get<int>(), s.at("test").get<int>()};
        }
        plan.deciles = j.at("deciles").get<std::map<std::string, int>>();
        assert_disjoint(plan.train_region_ids, plan.test_region_ids);
        return plan;
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedInput, std::string("split plan: ") + e.what());
    }
}

void save_split(const SplitPlan& plan, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::MalformedInput, "cannot write " + path.string());
    }
    out << to_json(plan).dump(2) << '\n';
}

SplitPlan load_split(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::InputNotFound, "input not found: " + path.string());
    }
    try {
        return split_from_json(nlohmann::json::parse(in));
    }
    catch (const nlohmann::json::parse_error& e) {
        throw Error(ErrorCode::MalformedInput, path.string() + ": " + e.what());
    }
}

void assert_disjoint(std::span<const std::string> train, std::span<const std::string> test)
{
    const std::set<std::string> train_set(train.begin(), train.end());
    std::string shared;
    for (const auto& id : std::set<std::string>(test.begin(), test.end())) {
        if (train_set.contains(id)) {
            shared += (shared.empty() ? "" : ", ") + id;
        }
    }
    if (!shared.empty()) {
        throw Error(ErrorCode::LeakageDetected, "regions in both train and test sets: " + shared);
    }
}

// ---------------------------------------------------------------------------

namespace {

double nan()
{
    return std::numeric_limits<double>::quiet_NaN();
}

/// Mean and population std of the finite entries.
std::pair<double, double> mean_std(const std::vector<double>& values)
{
    double sum = 0.0;
    std::size_t n = 0;
    for (double v : values) {
        if (std::isfinite(v)) {
            sum += v;
            ++n;
        }
    }
    if (n == 0) {
        return {nan(), nan()};
    }
    const double mean = sum / static_cast<double>(n);
    double ss = 0.0;
    for (double v : values) {
        if (std::isfinite(v)) {
            ss += (v - mean) * (v - mean);
        }
    }
    return {mean, std::sqrt(ss / static_cast<double>(n))};
}

MetricValues mean_metrics(const std::vector<MetricValues>& values)
{
    auto field = [&](double MetricValues::*f) {
        std::vector<double> v;
        for (const auto& m : values) {
            v.push_back(m.*f);
        }
        return mean_std(v).first;
    };
    return {field(&MetricValues::cpc), field(&MetricValues::pearson), field(&MetricValues::nrmse),
            field(&MetricValues::jsd)};
}

nlohmann::json metrics_json(const MetricValues& m)
{
    return {{"cpc", m.cpc}, {"pearson", m.pearson}, {"nrmse", m.nrmse}, {"jsd", m.jsd}};
}

} // namespace

EvalReport evaluate_predictor(const Predictor& predict, std::string name, const Dataset& data,
                              std::span<const std::string> test_region_ids, const std::map<std::string, int>& deciles,
                              int jobs)
{
    std::vector<std::string> ids(test_region_ids.begin(), test_region_ids.end());
    std::sort(ids.begin(), ids.end());
    if (std::adjacent_find(ids.begin(), ids.end()) != ids.end()) {
        throw Error(ErrorCode::MalformedInput, "duplicate test region id");
    }
    const auto fallback = deciles.empty() ? population_deciles(data.regions()) : std::map<std::string, int>{};
    const auto& decile_of = deciles.empty() ? fallback : deciles;

    EvalReport report;
    report.model = std::move(name);
    report.per_region.resize(ids.size());
    std::vector<AlignedFlows> aligned(ids.size());
    const auto regions = data.region_indices(ids);

    auto work = [&](std::size_t k) {
        const auto r  = regions[k];
        const auto rf = region_flows(data, r);
        const auto generated = predict(data, r, rf.outflow);
        aligned[k]           = align(rf.table, without_self_flows(generated));
        auto& out            = report.per_region[k];
        out.region_id        = ids[k];
        out.metrics          = compute_metrics(aligned[k]);
        out.n_locations      = rf.members.size();
        out.population       = data.regions()[r].total_population;
        const auto d         = decile_of.find(ids[k]);
        if (d == decile_of.end()) {
            throw Error(ErrorCode::MissingData, "no decile for region " + ids[k]);
        }
        out.decile = d->second;
    };

    const auto n_threads = static_cast<std::size_t>(std::clamp(jobs, 1, 64));
    if (n_threads == 1 || ids.size() < 2) {
        for (std::size_t k = 0; k < ids.size(); ++k) {
            work(k);
        }
    }
    else {
        std::atomic<std::size_t> next{0};
        std::vector<std::exception_ptr> failures(ids.size());
        std::vector<std::thread> pool;
        for (std::size_t t = 0; t < std::min(n_threads, ids.size()); ++t) {
            pool.emplace_back([&] {
                for (std::size_t k = next++; k < ids.size(); k = next++) {
                    try {
                        work(k);
                    }
                    catch (...) {
                        failures[k] = std::current_exception();
                    }
                }
            });
        }
        for (auto& th : pool) {
            th.join();
        }
        for (const auto& f : failures) {
            if (f) {
                std::rethrow_exception(f);
            }
        }
    }

    std::map<int, std::vector<MetricValues>> by_decile;
    std::vector<MetricValues> all;
    AlignedFlows pooled;
    std::vector<double> real, generated;
    for (std::size_t k = 0; k < ids.size(); ++k) {
        by_decile[report.per_region[k].decile].push_back(report.per_region[k].metrics);
        all.push_back(report.per_region[k].metrics);
        pooled.pairs.insert(pooled.pairs.end(), aligned[k].pairs.begin(), aligned[k].pairs.end());
        real.insert(real.end(), aligned[k].real.begin(), aligned[k].real.end());
        generated.insert(generated.end(), aligned[k].generated.begin(), aligned[k].generated.end());
    }
    for (const auto& [d, values] : by_decile) {
        std::vector<double> cpcs;
        for (const auto& m : values) {
            cpcs.push_back(m.cpc);
        }
        auto& s                   = report.per_decile[d];
        std::tie(s.mean_cpc, s.std_cpc) = mean_std(cpcs);
        s.n                       = values.size();
        s.mean                    = mean_metrics(values);
    }
    pooled.real      = Eigen::Map<Eigen::VectorXd>(real.data(), static_cast<Eigen::Index>(real.size()));
    pooled.generated = Eigen::Map<Eigen::VectorXd>(generated.data(), static_cast<Eigen::Index>(generated.size()));
    report.pooled    = compute_metrics(pooled);
    report.macro     = mean_metrics(all);
    return report;
}

EvalReport evaluate_model(const FlowModel& model, const SplitPlan& split, const Dataset& data, int jobs)
{
    assert_disjoint(split.train_region_ids, split.test_region_ids);
    assert_disjoint(model.provenance.train_region_ids, split.test_region_ids);
    const Predictor predict = [&model](const Dataset& d, std::size_t region, std::span<const double> outflow) {
        return model.predict_region(d, region, outflow);
    };
    return evaluate_predictor(predict, std::string(to_string(model.variant)), data, split.test_region_ids,
                              split.deciles, jobs);
}

double relative_improvement(double model_cpc, double baseline_cpc)
{
    if (baseline_cpc == 0.0 || !std::isfinite(baseline_cpc)) {
        throw Error(ErrorCode::ZeroBaseline, "relative improvement over a zero baseline");
    }
    return 100.0 * (model_cpc - baseline_cpc) / baseline_cpc;
}

RelativeImprovement relative_improvement(const EvalReport& model, const EvalReport& baseline)
{
    RelativeImprovement out;
    for (const auto& [d, s] : model.per_decile) {
        const auto b = baseline.per_decile.find(d);
        if (b == baseline.per_decile.end()) {
            throw Error(ErrorCode::MissingData, "baseline report has no decile " + std::to_string(d));
        }
        out.per_decile[d] = relative_improvement(s.mean_cpc, b->second.mean_cpc);
    }
    out.global = relative_improvement(model.pooled.cpc, baseline.pooled.cpc);
    return out;
}

RunSummary summarize_runs(std::span<const EvalReport> runs)
{
    RunSummary out;
    out.n_runs = runs.size();
    if (runs.empty()) {
        return out;
    }
    out.model = runs.front().model;
    std::map<int, std::vector<double>> cpcs;
    std::map<int, std::vector<MetricValues>> means;
    std::vector<MetricValues> pooled;
    for (const auto& r : runs) {
        for (const auto& [d, s] : r.per_decile) {
            cpcs[d].push_back(s.mean_cpc);
            means[d].push_back(s.mean);
        }
        pooled.push_back(r.pooled);
    }
    for (const auto& [d, v] : cpcs) {
        auto& s                         = out.per_decile[d];
        std::tie(s.mean_cpc, s.std_cpc) = mean_std(v);
        s.n                             = v.size();
        s.mean                          = mean_metrics(means[d]);
    }
    auto field = [&](double MetricValues::*f) {
        std::vector<double> v;
        for (const auto& m : pooled) {
            v.push_back(m.*f);
        }
        return mean_std(v);
    };
    std::tie(out.pooled_mean.cpc, out.pooled_std.cpc)         = field(&MetricValues::cpc);
    std::tie(out.pooled_mean.pearson, out.pooled_std.pearson) = field(&MetricValues::pearson);
    std::tie(out.pooled_mean.nrmse, out.pooled_std.nrmse)     = field(&MetricValues::nrmse);
    std::tie(out.pooled_mean.jsd, out.pooled_std.jsd)         = field(&MetricValues::jsd);
    return out;
}

nlohmann::json to_json(const EvalReport& report)
{
    nlohmann::json regions = nlohmann::json::array();
    for (const auto& r : report.per_region) {
        auto row           = metrics_json(r.metrics);
        row["region_id"]   = r.region_id;
        row["decile"]      = r.decile;
        row["n_locations"] = r.n_locations;
        row["population"]  = r.population;
        regions.push_back(std::move(row));
    }
    nlohmann::json deciles = nlohmann::json::array();
    for (const auto& [d, s] : report.per_decile) {
        auto row        = metrics_json(s.mean);
        row["decile"]   = d;
        row["mean_cpc"] = s.mean_cpc;
        row["std_cpc"]  = s.std_cpc;
        row["n_regions"] = s.n;
        deciles.push_back(std::move(row));
    }
    return {{"model", report.model},
            {"per_region", regions},
            {"per_decile", deciles},
            {"global", {{"pooled", metrics_json(report.pooled)}, {"macro", metrics_json(report.macro)}}}};
}

nlohmann::json to_json(const RunSummary& summary)
{
    nlohmann::json deciles = nlohmann::json::array();
    for (const auto& [d, s] : summary.per_decile) {
        deciles.push_back({{"decile", d}, {"mean_cpc", s.mean_cpc}, {"std_cpc", s.std_cpc}, {"n_runs", s.n}});
    }
    return {{"model", summary.model},
            {"n_runs", summary.n_runs},
            {"per_decile", deciles},
            {"global", {{"mean", metrics_json(summary.pooled_mean)}, {"std", metrics_json(summary.pooled_std)}}}};
}

void write_report_csv(const std::filesystem::path& path, std::span<const EvalReport> reports)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::MalformedInput, "cannot write " + path.string());
    }
    auto num = [](double v) { return std::isfinite(v) ? csv::format_double(v) : std::string("nan"); };
    out << "region_id,decile,model,cpc,pearson,nrmse,jsd\n";
    for (const auto& report : reports) {
        for (const auto& r : report.per_region) {
            out << r.region_id << ',' << r.decile << ',' << report.model << ',' << num(r.metrics.cpc) << ','
                << num(r.metrics.pearson) << ',' << num(r.metrics.nrmse) << ',' << num(r.metrics.jsd) << '\n';
        }
    }
}

// ---------------------------------------------------------------------------

std::map<std::string, std::vector<std::string>> load_groups(const std::filesystem::path& path)
{
    const auto table  = csv::read(path);
    const auto group  = table.require_column("group", path);
    const auto region = table.require_column("region_id", path);
    std::map<std::string, std::vector<std::string>> groups;
    for (const auto& row : table.rows) {
        groups[row[group]].push_back(row[region]);
    }
    return groups;
}

std::vector<FoldResult> leave_one_group_out(const std::map<std::string, std::vector<std::string>>& groups,
                                            const ModelConfig& config, Dataset& data)
{
    if (groups.size() < 2) {
        throw Error(ErrorCode::TooFewRegions, "leave-one-group-out needs at least 2 groups");
    }
    std::map<std::string, std::string> owner;
    for (const auto& [name, ids] : groups) {
        for (const auto& id : ids) {
            const auto [it, fresh] = owner.emplace(id, name);
            if (!fresh && it->second != name) {
                throw Error(ErrorCode::OverlappingGroups,
                            "region " + id + " is in groups " + it->second + " and " + name);
            }
        }
    }
    const auto deciles = population_deciles(data.regions());
    std::vector<FoldResult> folds;
    for (const auto& [name, ids] : groups) {
        FoldResult fold;
        fold.group           = name;
        fold.test_region_ids = ids;
        for (const auto& [other, other_ids] : groups) {
            if (other != name) {
                fold.train_region_ids.insert(fold.train_region_ids.end(), other_ids.begin(), other_ids.end());
            }
        }
        std::sort(fold.train_region_ids.begin(), fold.train_region_ids.end());
        std::sort(fold.test_region_ids.begin(), fold.test_region_ids.end());
        assert_disjoint(fold.train_region_ids, fold.test_region_ids);

        log::info("fold ", name, ": ", fold.train_region_ids.size(), " train regions, ",
                  fold.test_region_ids.size(), " test regions");
        const auto train_idx = data.region_indices(fold.train_region_ids);
        const auto model     = train_model(data, train_idx, config);
        SplitPlan plan;
        plan.train_region_ids = fold.train_region_ids;
        plan.test_region_ids  = fold.test_region_ids;
        plan.seed             = config.mlp.seed;
        plan.deciles          = deciles;
        fold.report           = evaluate_model(model, plan, data);
        folds.push_back(std::move(fold));
    }
    return folds;
}

} // namespace flowgen
