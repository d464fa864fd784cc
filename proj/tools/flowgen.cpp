// flowgen command-line interface.

#include "flowgen/error.hpp"
#include "flowgen/evaluation.hpp"
#include "flowgen/explain.hpp"
#include "flowgen/features.hpp"
#include "flowgen/geodata.hpp"
#include "flowgen/log.hpp"
#include "flowgen/model.hpp"
#include "flowgen/synthetic.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <set>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace flowgen;

namespace {

void require_file(const fs::path& path)
{
    if (!fs::exists(path)) {
        throw Error(ErrorCode::InputNotFound, "input not found: " + path.string());
    }
}

void write_json(const fs::path& path, const nlohmann::json& j)
{
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::MalformedInput, "cannot write " + path.string());
    }
    out << j.dump(2) << '\n';
}

/// Inputs shared by every command that needs locations, features, flows and regions.
struct DataOptions {
    std::string locations;
    std::string features;
    std::string flows;
    std::string tessellation; // CSV; its JSON sidecar has the same stem
    double cell_size_km = 25.0;

    void add_to(CLI::App& cmd, bool need_flows = true)
    {
        cmd.add_option("--locations", locations, "Locations (GeoJSON or CSV id,lat,lon,area_km2,population)")
            ->required();
        cmd.add_option("--features", features, "Feature CSV (location_id + schema columns)");
        auto* f = cmd.add_option("--flows", flows, "Flow CSV (origin_id,destination_id,flow)");
        if (need_flows) {
            f->required();
        }
        cmd.add_option("--tessellation", tessellation, "Tessellation CSV written by 'tessellate'");
        cmd.add_option("--cell-size", cell_size_km, "Cell size in km when no tessellation is given")
            ->capture_default_str();
    }

    Dataset load() const
    {
        require_file(locations);
        auto locs = load_locations(locations);
        std::map<std::string, GeoVector> raw;
        if (!features.empty()) {
            require_file(features);
            raw = load_precomputed_features(features);
        }
        else {
            log::warn("no feature file given; geographic features are zero");
        }
        FlowTable table;
        if (!flows.empty()) {
            require_file(flows);
            table = load_flows(flows);
        }
        Tessellation tess;
        if (!tessellation.empty()) {
            const fs::path csv_path = tessellation;
            auto json_path          = csv_path;
            json_path.replace_extension(".json");
            require_file(csv_path);
            require_file(json_path);
            tess = load_tessellation(csv_path, json_path, locs);
        }
        else {
            tess = build_tessellation(locs, cell_size_km);
        }
        return Dataset(std::move(locs), raw, std::move(table), std::move(tess));
    }
};

std::vector<std::string> split_list(const std::string& text)
{
    std::vector<std::string> out;
    std::stringstream ss(text);
    for (std::string item; std::getline(ss, item, ',');) {
        item.erase(0, item.find_first_not_of(" \t"));
        item.erase(item.find_last_not_of(" \t") + 1);
        if (!item.empty()) {
            out.push_back(item);
        }
    }
    return out;
}

std::vector<std::string> all_region_ids(const Dataset& data)
{
    std::vector<std::string> ids;
    for (const auto& r : data.regions()) {
        ids.push_back(r.id());
    }
    return ids;
}

// ---------------------------------------------------------------------------

struct TessellateCmd {
    std::string locations;
    double cell_size_km = 25.0;
    std::string out_dir = ".";

    void add(CLI::App& app)
    {
        auto* cmd = app.add_subcommand("tessellate", "Assign locations to square grid cells (regions of interest)");
        cmd->add_option("--locations", locations, "Locations (GeoJSON or CSV)")->required();
        cmd->add_option("--cell-size", cell_size_km, "Cell side in km")->capture_default_str();
        cmd->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
        cmd->callback([this] { run(); });
    }

    void run()
    {
        require_file(locations);
        const auto locs = load_locations(locations);
        const auto tess = build_tessellation(locs, cell_size_km);
        fs::create_directories(out_dir);
        write_tessellation(tess, fs::path(out_dir) / "tessellation.csv", fs::path(out_dir) / "tessellation.json");
        log::info(tess.cells.size(), " non-empty cells of ", tess.nx * tess.ny);
    }
};

struct FeaturizeCmd {
    std::string locations;
    std::string pois;
    std::vector<std::string> features;
    std::string out = "features.csv";

    void add(CLI::App& app)
    {
        auto* cmd = app.add_subcommand("featurize", "Build the per-location geographic feature table");
        cmd->add_option("--locations", locations, "Locations (GeoJSON or CSV)")->required();
        cmd->add_option("--pois", pois, "POI CSV (lat,lon,category); needs location polygons");
        cmd->add_option("--features", features, "Precomputed feature CSVs to merge (repeatable)");
        cmd->add_option("--out", out, "Output feature CSV")->capture_default_str();
        cmd->callback([this] { run(); });
    }

    void run()
    {
        require_file(locations);
        const auto locs = load_locations(locations);
        std::map<std::string, GeoVector> raw;
        for (const auto& f : features) {
            require_file(f);
            raw = merge_features(raw, load_precomputed_features(f));
        }
        if (!pois.empty()) {
            require_file(pois);
            const auto agg = aggregate_pois(locs, load_pois(pois));
            if (agg.total_dropped() > 0) {
                log::warn(agg.total_dropped(), " POIs fall outside every location polygon and were dropped");
            }
            raw = merge_features(raw, agg.counts);
        }
        for (const auto& loc : locs) {
            raw.try_emplace(loc.id, GeoVector::Zero());
        }
        write_features_csv(out, raw);
    }
};

struct SynthCmd {
    std::string generator = "gravity_truth";
    int regions           = 10;
    int per_region        = 40;
    std::uint64_t seed    = 1;
    double outflow        = 1000.0;
    std::optional<double> beta1, beta2, delta, lambda, gamma;
    std::optional<std::string> deterrence;
    int groups          = 1;
    double cell_size_km = 25.0;
    std::string out_dir = "synthetic";

    void add(CLI::App& app)
    {
        auto* cmd = app.add_subcommand("synth", "Generate a synthetic dataset with known generating parameters");
        cmd->add_option("--generator", generator, "gravity_truth or nonlinear_truth")->capture_default_str();
        cmd->add_option("--regions", regions, "Number of regions")->capture_default_str();
        cmd->add_option("--locations-per-region", per_region, "Locations per region")->capture_default_str();
        cmd->add_option("--seed", seed, "Random seed")->capture_default_str();
        cmd->add_option("--outflow", outflow, "Outflow O_i of every origin")->capture_default_str();
        cmd->add_option("--beta1", beta1, "Mass exponent (default 1.0)");
        cmd->add_option("--beta2", beta2, "Deterrence coefficient (default -2.0, nonlinear_truth -0.3)");
        cmd->add_option("--deterrence", deterrence, "power or exponential (nonlinear_truth default exponential)");
        cmd->add_option("--delta", delta, "nonlinear_truth: origin-population x distance term");
        cmd->add_option("--lambda", lambda, "nonlinear_truth: destination land-use term");
        cmd->add_option("--gamma", gamma, "nonlinear_truth: food x retail interaction term");
        cmd->add_option("--groups", groups, "Contiguous region groups for leave-one-group-out")
            ->capture_default_str();
        cmd->add_option("--cell-size", cell_size_km, "Region tile side in km")->capture_default_str();
        cmd->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
        cmd->callback([this] { run(); });
    }

    void run()
    {
        SyntheticSpec spec;
        if (parse_generator(generator) == SyntheticGenerator::nonlinear_truth) {
            spec = nonlinear_truth_spec(regions, per_region, seed);
        }
        spec.n_regions            = regions;
        spec.locations_per_region = per_region;
        spec.seed                 = seed;
        spec.outflow_scale        = outflow;
        spec.n_groups             = groups;
        spec.cell_size_km         = cell_size_km;
        spec.beta1                = beta1.value_or(spec.beta1);
        spec.beta2                = beta2.value_or(spec.beta2);
        spec.delta                = delta.value_or(spec.delta);
        spec.lambda               = lambda.value_or(spec.lambda);
        spec.gamma                = gamma.value_or(spec.gamma);
        if (deterrence) {
            spec.deterrence = parse_deterrence(*deterrence);
        }
        write_synthetic(generate_synthetic(spec), out_dir);
    }
};

struct TrainCmd {
    DataOptions data;
    std::string variant    = "dg";
    std::string deterrence = "power";
    std::uint64_t seed     = 0;
    MlpConfig mlp          = default_mlp_config(ModelVariant::dg);
    bool no_standardize    = false;
    int knn_k              = 5;
    std::string split;
    std::string split_out;
    std::uint64_t split_seed = 0;
    double split_fraction    = 0.5;
    std::string regions;
    std::string out = "model.json";
    std::string divergence_dump;

    void add(CLI::App& app)
    {
        auto* cmd = app.add_subcommand("train", "Fit a flow model on training regions");
        data.add_to(*cmd);
        cmd->add_option("--variant", variant, "g, ng, mfg, dg, dg-sum or dg-knn")->capture_default_str();
        cmd->add_option("--deterrence", deterrence, "G deterrence: power or exponential")->capture_default_str();
        cmd->add_option("--seed", seed, "Initialization and sampling seed")->capture_default_str();
        cmd->add_option("--epochs", mlp.epochs, "Training epochs")->capture_default_str();
        cmd->add_option("--lr", mlp.learning_rate, "RMSprop learning rate")->capture_default_str();
        cmd->add_option("--momentum", mlp.momentum, "RMSprop momentum")->capture_default_str();
        cmd->add_option("--batch-origins", mlp.batch_origins, "Origins per batch")->capture_default_str();
        cmd->add_option("--negatives", mlp.negative_samples, "Candidate destinations per origin")
            ->capture_default_str();
        cmd->add_option("--leaky-slope", mlp.leaky_slope, "LeakyReLU negative slope")->capture_default_str();
        cmd->add_flag("--no-standardize", no_standardize, "Feed raw inputs to the network");
        cmd->add_option("--knn-k", knn_k, "Neighbors averaged by dg-knn")->capture_default_str();
        cmd->add_option("--split", split, "Existing split plan JSON");
        cmd->add_option("--split-out", split_out, "Where to write a newly drawn split (default <out>.split.json)");
        cmd->add_option("--split-seed", split_seed, "Seed of a newly drawn split")->capture_default_str();
        cmd->add_option("--split-fraction", split_fraction, "Train fraction of a newly drawn split")
            ->capture_default_str();
        cmd->add_option("--regions", regions, "Comma-separated training region ids (overrides the split's)");
        cmd->add_option("--out", out, "Model file")->capture_default_str();
        cmd->add_option("--divergence-dump", divergence_dump, "Where to dump model state if training diverges");
        cmd->callback([this] { run(); });
    }

    void run()
    {
        auto dataset = data.load();
        SplitPlan plan;
        bool have_plan = false;
        if (!split.empty()) {
            plan      = load_split(split);
            have_plan = true;
        }
        std::vector<std::string> train_ids;
        if (!regions.empty()) {
            train_ids = split_list(regions);
            if (have_plan) {
                assert_disjoint(train_ids, plan.test_region_ids);
            }
        }
        else {
            if (!have_plan) {
                plan = stratified_split(dataset.regions(), split_seed, split_fraction);
                fs::path where = split_out;
                if (where.empty()) {
                    where = fs::path(out).replace_extension(".split.json");
                }
                save_split(plan, where);
                log::info("split written to ", where.string());
            }
            train_ids = plan.train_region_ids;
        }

        auto config       = default_model_config(parse_variant(variant));
        const auto recipe = config.mlp;
        config.mlp        = mlp;
        config.mlp.input_dim   = recipe.input_dim;
        config.mlp.hidden_dims = recipe.hidden_dims;
        config.mlp.seed        = seed;
        config.mlp.standardize_inputs = !no_standardize;
        config.deterrence      = parse_deterrence(deterrence);
        config.knn_k           = knn_k;
        if (!divergence_dump.empty()) {
            config.divergence_dump = divergence_dump;
        }
        const auto idx   = dataset.region_indices(train_ids);
        const auto model = train_model(dataset, idx, config);
        save_model(model, out);
    }
};

/// Regions selected by --regions, else a split's test side, else every region.
std::vector<std::string> select_regions(const Dataset& data, const std::string& regions, const std::string& split)
{
    if (!regions.empty()) {
        return split_list(regions);
    }
    if (!split.empty()) {
        return load_split(split).test_region_ids;
    }
    return all_region_ids(data);
}

FlowModel load_model_for(Dataset& data, const std::string& path)
{
    require_file(path);
    auto model = load_model(path);
    if (model.variant == ModelVariant::dg_knn) {
        data.prepare_knn(model.knn_k);
    }
    return model;
}

struct GenerateCmd {
    DataOptions data;
    std::string model;
    std::string split;
    std::string regions;
    std::string out = "generated_flows.csv";

    void add(CLI::App& app)
    {
        auto* cmd = app.add_subcommand("generate", "Generate expected flows O_i p_ij with a trained model");
        data.add_to(*cmd);
        cmd->add_option("--model", model, "Model file")->required();
        cmd->add_option("--split", split, "Generate for this split's test regions");
        cmd->add_option("--regions", regions, "Comma-separated region ids (default: all)");
        cmd->add_option("--out", out, "Output flow CSV")->capture_default_str();
        cmd->callback([this] { run(); });
    }

    void run()
    {
        require_file(model);
        auto dataset  = data.load();
        const auto m  = load_model_for(dataset, model);
        std::vector<FlowRecord> records;
        for (const auto& id : select_regions(dataset, regions, split)) {
            const auto r  = dataset.region_index(id);
            const auto rf = region_flows(dataset, r);
            const auto generated = m.predict_region(dataset, r, rf.outflow);
            records.insert(records.end(), generated.records().begin(), generated.records().end());
        }
        write_flows(out, FlowTable::from_records(std::move(records)));
    }
};

struct EvaluateCmd {
    DataOptions data;
    std::vector<std::string> models;
    std::string baseline;
    std::string split;
    std::string groups;
    std::string variant = "dg";
    std::uint64_t seed  = 0;
    MlpConfig mlp       = default_mlp_config(ModelVariant::dg);
    std::string deterrence = "power";
    std::string out_dir    = "report";
    int jobs               = 1;

    void add(CLI::App& app)
    {
        auto* cmd = app.add_subcommand("evaluate", "Score models on held-out regions (CPC, Pearson, NRMSE, JSD)");
        data.add_to(*cmd);
        cmd->add_option("--model", models, "Model files (repeatable; same variant = seeds of one run)");
        cmd->add_option("--baseline", baseline, "Baseline model for relative improvement");
        cmd->add_option("--split", split, "Split plan JSON the models were trained with");
        cmd->add_option("--groups", groups, "Groups CSV (group,region_id): run leave-one-group-out instead");
        cmd->add_option("--variant", variant, "Leave-one-group-out: variant to train")->capture_default_str();
        cmd->add_option("--seed", seed, "Leave-one-group-out: training seed")->capture_default_str();
        cmd->add_option("--epochs", mlp.epochs, "Leave-one-group-out: epochs")->capture_default_str();
        cmd->add_option("--lr", mlp.learning_rate, "Leave-one-group-out: learning rate")->capture_default_str();
        cmd->add_option("--deterrence", deterrence, "Leave-one-group-out: G deterrence")->capture_default_str();
        cmd->add_option("--out-dir", out_dir, "Writes report.json and report.csv here")->capture_default_str();
        cmd->add_option("--jobs", jobs, "Regions evaluated in parallel")->capture_default_str();
        cmd->callback([this] { run(); });
    }

    void run()
    {
        auto dataset = data.load();
        fs::create_directories(out_dir);
        nlohmann::json doc;
        doc["format"] = "flowgen-report/1";
        std::vector<EvalReport> reports;

        if (!groups.empty()) {
            require_file(groups);
            auto config            = default_model_config(parse_variant(variant));
            const auto recipe      = config.mlp;
            config.mlp             = mlp;
            config.mlp.input_dim   = recipe.input_dim;
            config.mlp.hidden_dims = recipe.hidden_dims;
            config.mlp.seed        = seed;
            config.deterrence      = parse_deterrence(deterrence);
            const auto folds       = leave_one_group_out(load_groups(groups), config, dataset);
            for (const auto& f : folds) {
                doc["folds"].push_back({{"group", f.group},
                                        {"train_region_ids", f.train_region_ids},
                                        {"test_region_ids", f.test_region_ids},
                                        {"report", to_json(f.report)}});
                auto r  = f.report;
                r.model = f.group;
                reports.push_back(std::move(r));
            }
        }
        else {
            if (split.empty()) {
                throw Error(ErrorCode::MissingData, "evaluate needs --split (or --groups)");
            }
            if (models.empty()) {
                throw Error(ErrorCode::MissingData, "evaluate needs at least one --model");
            }
            require_file(split);
            const auto plan = load_split(split);
            doc["split_seed"] = plan.seed;
            std::map<std::string, std::vector<EvalReport>> by_variant;
            for (const auto& path : models) {
                const auto m = load_model_for(dataset, path);
                auto report  = evaluate_model(m, plan, dataset, jobs);
                by_variant[report.model].push_back(report);
                auto entry      = to_json(report);
                entry["file"]   = fs::path(path).filename().string();
                entry["seed"]   = m.provenance.seed;
                doc["reports"].push_back(std::move(entry));
                reports.push_back(std::move(report));
            }
            for (const auto& [name, runs] : by_variant) {
                doc["summaries"].push_back(to_json(summarize_runs(runs)));
            }
            if (!baseline.empty()) {
                const auto b      = load_model_for(dataset, baseline);
                const auto base   = evaluate_model(b, plan, dataset, jobs);
                doc["baseline"]   = to_json(base);
                for (const auto& r : reports) {
                    const auto ri = relative_improvement(r, base);
                    nlohmann::json per;
                    for (const auto& [d, v] : ri.per_decile) {
                        per[std::to_string(d)] = v;
                    }
                    doc["relative_improvement"].push_back(
                        {{"model", r.model}, {"per_decile", per}, {"global", ri.global}});
                }
                reports.push_back(base);
            }
        }
        write_json(fs::path(out_dir) / "report.json", doc);
        write_report_csv(fs::path(out_dir) / "report.csv", reports);
    }
};

struct ExplainCmd {
    DataOptions data;
    std::string model;
    std::string split;
    std::string regions;
    std::string origin;
    std::string destination;
    int n_pairs        = 50;
    int n_background   = 100;
    int permutations   = 200;
    std::uint64_t seed = 0;
    std::string out_dir = "explain";

    void add(CLI::App& app)
    {
        auto* cmd = app.add_subcommand("explain", "Shapley attributions of a model's pair scores");
        data.add_to(*cmd);
        cmd->add_option("--model", model, "Model file")->required();
        cmd->add_option("--split", split, "Explain pairs of this split's test regions");
        cmd->add_option("--regions", regions, "Comma-separated regions to draw explained pairs from");
        cmd->add_option("--origin", origin, "Explain the single pair (origin, destination)");
        cmd->add_option("--destination", destination, "Destination of the single explained pair");
        cmd->add_option("--pairs", n_pairs, "Pairs sampled for the global summary")->capture_default_str();
        cmd->add_option("--background", n_background, "Background pairs from the training regions")
            ->capture_default_str();
        cmd->add_option("--permutations", permutations, "Permutations per attribution")->capture_default_str();
        cmd->add_option("--seed", seed, "Sampling seed")->capture_default_str();
        cmd->add_option("--out-dir", out_dir, "Output directory")->capture_default_str();
        cmd->callback([this] { run(); });
    }

    /// Every ordered member pair (origin != destination) of the given regions.
    static std::vector<std::pair<std::size_t, std::size_t>> region_pairs(const Dataset& d,
                                                                         const std::vector<std::string>& ids)
    {
        std::vector<std::pair<std::size_t, std::size_t>> out;
        for (const auto& id : ids) {
            const auto m = d.members(d.region_index(id));
            for (auto a : m) {
                for (auto b : m) {
                    if (a != b) {
                        out.emplace_back(a, b);
                    }
                }
            }
        }
        return out;
    }

    void run()
    {
        require_file(model);
        auto dataset = data.load();
        const auto m = load_model_for(dataset, model);
        const auto names = m.input_names();
        const BatchScore f = [&m](const Eigen::MatrixXd& x) { return m.score(x); };
        auto pair_input = [&](std::size_t a, std::size_t b) {
            Eigen::VectorXd x(m.input_dim());
            write_dataset_pair_input(dataset, m.variant, m.deterrence, a, b, x);
            return x;
        };

        std::vector<std::string> train_ids = m.provenance.train_region_ids;
        if (train_ids.empty()) {
            train_ids = all_region_ids(dataset);
        }
        const auto pool_pairs = region_pairs(dataset, train_ids);
        if (pool_pairs.empty()) {
            throw Error(ErrorCode::EmptyBackground, "training regions have no location pairs");
        }
        Eigen::MatrixXd pool(m.input_dim(), static_cast<Eigen::Index>(pool_pairs.size()));
        for (std::size_t k = 0; k < pool_pairs.size(); ++k) {
            pool.col(static_cast<Eigen::Index>(k)) = pair_input(pool_pairs[k].first, pool_pairs[k].second);
        }
        const auto background = sample_columns(pool, n_background, seed);

        ShapleyOptions options;
        options.n_permutations = permutations;
        options.seed           = seed;
        fs::create_directories(out_dir);

        if (!origin.empty()) {
            if (destination.empty()) {
                throw Error(ErrorCode::MalformedInput, "--origin needs --destination");
            }
            auto a           = shapley_values(f, pair_input(dataset.location_index(origin),
                                                            dataset.location_index(destination)),
                                              background, options);
            a.origin_id      = origin;
            a.destination_id = destination;
            write_json(fs::path(out_dir) / "attribution.json", to_json(a, names));
            return;
        }

        auto candidates = region_pairs(dataset, select_regions(dataset, regions, split));
        std::mt19937_64 rng(seed + 1);
        std::shuffle(candidates.begin(), candidates.end(), rng);
        candidates.resize(std::min(candidates.size(), static_cast<std::size_t>(std::max(n_pairs, 0))));
        std::vector<ExplainedPair> pairs;
        for (auto [a, b] : candidates) {
            pairs.push_back({dataset.locations()[a].id, dataset.locations()[b].id, pair_input(a, b)});
        }
        const auto summary = global_summary(f, pairs, background, names, options);
        write_beeswarm_csv(fs::path(out_dir) / "beeswarm.csv", summary, names);
        write_ranking_csv(fs::path(out_dir) / "ranking.csv", summary);
        nlohmann::json all = nlohmann::json::array();
        for (const auto& a : summary.attributions) {
            all.push_back(to_json(a, names));
        }
        write_json(fs::path(out_dir) / "attributions.json", all);
    }
};

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"flowgen: origin-destination flow generation with gravity and Deep Gravity models"};
    app.require_subcommand(1);
    app.set_config("--config", "", "INI file; a [subcommand] section holds that command's option defaults");
    app.fallthrough();
    app.set_help_all_flag("--help-all", "Help for every subcommand");

    TessellateCmd tessellate;
    FeaturizeCmd featurize;
    SynthCmd synth;
    TrainCmd train;
    GenerateCmd generate;
    EvaluateCmd evaluate;
    ExplainCmd explain;
    tessellate.add(app);
    featurize.add(app);
    synth.add(app);
    train.add(app);
    generate.add(app);
    evaluate.add(app);
    explain.add(app);

    try {
        app.parse(argc, argv);
    }
    catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    }
    catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }
    catch (const Error& e) {
        std::cerr << "flowgen: " << e.what() << '\n';
        return exit_code(e.code());
    }
    catch (const std::exception& e) {
        std::cerr << "flowgen: internal error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
