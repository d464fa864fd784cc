#include "flowgen/model.hpp"
#include "flowgen/error.hpp"
#include "flowgen/mlp.hpp"

#include <cstdio>
#include <fstream>

namespace flowgen {

ModelConfig default_model_config(ModelVariant variant)
{
    ModelConfig cfg;
    cfg.variant = variant;
    cfg.mlp     = default_mlp_config(variant);
    return cfg;
}

int FlowModel::input_dim() const
{
    return input_dimension(variant);
}

std::vector<std::string> FlowModel::input_names() const
{
    return flowgen::input_names(variant, deterrence);
}

Eigen::RowVectorXd FlowModel::score(const Eigen::MatrixXd& raw_inputs) const
{
    if (raw_inputs.rows() != input_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "model expects " + std::to_string(input_dim()) + " inputs, got " +
                                                      std::to_string(raw_inputs.rows()));
    }
    if (gravity) {
        return gravity->params.beta().transpose() * raw_inputs;
    }
    if (neural) {
        return neural->score(raw_inputs);
    }
    throw Error(ErrorCode::MissingData, "model has no parameters");
}

FlowTable FlowModel::predict_region(const Dataset& data, std::size_t region, std::span<const double> outflow) const
{
    if (neural) {
        return predict_flows(*neural, data, region, outflow);
    }
    const auto members = data.members(region);
    if (outflow.size() != members.size()) {
        throw Error(ErrorCode::DimensionMismatch, "one outflow per region member expected");
    }
    std::vector<FlowRecord> records;
    for (std::size_t a = 0; a < members.size(); ++a) {
        if (!(outflow[a] > 0.0) || members.size() < 2) {
            continue;
        }
        std::vector<std::size_t> dest;
        for (std::size_t b = 0; b < members.size(); ++b) {
            if (b != a) {
                dest.push_back(members[b]);
            }
        }
        const Eigen::VectorXd p = softmax(score(candidate_inputs(data, variant, deterrence, members[a], dest)));
        for (std::size_t k = 0; k < dest.size(); ++k) {
            records.push_back({data.locations()[members[a]].id, data.locations()[dest[k]].id,
                               outflow[a] * p[static_cast<Eigen::Index>(k)]});
        }
    }
    return FlowTable::from_records(std::move(records));
}

FlowModel train_model(Dataset& data, std::span<const std::size_t> train_regions, const ModelConfig& config)
{
    FlowModel model;
    model.variant    = config.variant;
    model.deterrence = config.deterrence;
    for (auto r : train_regions) {
        model.provenance.train_region_ids.push_back(data.regions().at(r).id());
    }
    model.provenance.seed        = config.mlp.seed;
    model.provenance.config_hash = config_hash(config);

    if (config.variant == ModelVariant::g) {
        std::vector<GravityObservation> obs;
        for (auto r : train_regions) {
            const auto rf = region_flows(data, r);
            for (std::size_t a = 0; a < rf.members.size(); ++a) {
                if (!(rf.outflow[a] > 0.0)) {
                    continue;
                }
                std::vector<std::size_t> dest;
                std::vector<std::size_t> position(rf.members.size(), 0);
                for (std::size_t b = 0; b < rf.members.size(); ++b) {
                    if (b != a) {
                        position[b] = dest.size();
                        dest.push_back(rf.members[b]);
                    }
                }
                GravityObservation o;
                o.x = candidate_inputs(data, ModelVariant::g, config.deterrence, rf.members[a], dest);
                o.y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(dest.size()));
                for (auto [b, y] : rf.observed[a]) {
                    o.y[static_cast<Eigen::Index>(position[b])] = y;
                }
                obs.push_back(std::move(o));
            }
        }
        auto init       = config.gravity_init;
        init.deterrence = config.deterrence;
        model.gravity   = fit_gravity(obs, config.deterrence, init, config.gravity_fit);
        model.training_log = model.gravity->loglik_trace;
        return model;
    }

    if (config.variant == ModelVariant::dg_knn) {
        data.prepare_knn(config.knn_k);
        model.knn_k = config.knn_k;
    }
    MlpConfig mlp = config.mlp;
    if (mlp.input_dim == 0) {
        const auto seed = mlp.seed;
        mlp             = default_mlp_config(config.variant);
        mlp.seed        = seed;
    }
    const auto set = build_training_set(data, train_regions, config.variant, config.deterrence);
    TrainOptions options;
    options.divergence_dump = config.divergence_dump;
    auto result             = train(data, set, mlp, options);
    model.neural            = std::move(result.model);
    model.training_log      = std::move(result.epoch_loss);
    return model;
}

// ---------------------------------------------------------------------------

namespace {

nlohmann::json mlp_to_json(const MlpConfig& c)
{
    return {{"input_dim", c.input_dim},
            {"hidden_dims", c.hidden_dims},
            {"leaky_slope", c.leaky_slope},
            {"seed", c.seed},
            {"learning_rate", c.learning_rate},
            {"momentum", c.momentum},
            {"epochs", c.epochs},
            {"batch_origins", c.batch_origins},
            {"negative_samples", c.negative_samples},
            {"standardize_inputs", c.standardize_inputs}};
}

MlpConfig mlp_from_json(const nlohmann::json& j)
{
    MlpConfig c;
    c.input_dim          = j.at("input_dim").get<int>();
    c.hidden_dims        = j.at("hidden_dims").get<std::vector<int>>();
    c.leaky_slope        = j.at("leaky_slope").get<double>();
    c.seed               = j.at("seed").get<std::uint64_t>();
    c.learning_rate      = j.at("learning_rate").get<double>();
    c.momentum           = j.at("momentum").get<double>();
    c.epochs             = j.at("epochs").get<int>();
    c.batch_origins      = j.at("batch_origins").get<int>();
    c.negative_samples   = j.at("negative_samples").get<int>();
    c.standardize_inputs = j.at("standardize_inputs").get<bool>();
    return c;
}

std::vector<double> to_vector(const Eigen::Ref<const Eigen::VectorXd>& v)
{
    return {v.data(), v.data() + v.size()};
}

Eigen::VectorXd from_vector(const std::vector<double>& v)
{
    return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

} // namespace

nlohmann::json config_to_json(const ModelConfig& config)
{
    nlohmann::json j;
    j["variant"]    = std::string(to_string(config.variant));
    j["deterrence"] = std::string(to_string(config.deterrence));
    j["knn_k"]      = config.knn_k;
    if (is_neural(config.variant)) {
        j["mlp"] = mlp_to_json(config.mlp);
    }
    else {
        j["gravity_init"] = {{"beta1", config.gravity_init.beta1}, {"beta2", config.gravity_init.beta2}};
        j["gravity_fit"]  = {{"max_iters", config.gravity_fit.max_iters}, {"tol", config.gravity_fit.tol}};
    }
    return j;
}

std::string config_hash(const ModelConfig& config)
{
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : config_to_json(config).dump()) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

nlohmann::json to_json(const FlowModel& model)
{
    nlohmann::json j;
    j["format"]     = std::string(model_format_tag);
    j["variant"]    = std::string(to_string(model.variant));
    j["deterrence"] = std::string(to_string(model.deterrence));
    j["knn_k"]      = model.knn_k;
    j["input_dim"]  = model.input_dim();
    j["provenance"] = {{"train_region_ids", model.provenance.train_region_ids},
                       {"seed", model.provenance.seed},
                       {"config_hash", model.provenance.config_hash}};
    j["training_log"] = model.training_log;
    if (model.gravity) {
        const auto& g = *model.gravity;
        j["gravity"]  = {{"model", "gravity"},
                         {"deterrence", std::string(to_string(g.params.deterrence))},
                         {"beta1", g.params.beta1},
                         {"beta2", g.params.beta2},
                         {"loglik", g.loglik},
                         {"converged", g.converged},
                         {"iterations", g.iterations}};
    }
    if (model.neural) {
        const auto& n = *model.neural;
        nlohmann::json net;
        net["config"] = mlp_to_json(n.config);
        net["scaler"] = {{"mean", to_vector(n.scaler.mean)}, {"scale", to_vector(n.scaler.scale)}};
        for (std::size_t h = 0; h < n.params.depth(); ++h) {
            const auto& w = n.params.weights[h];
            net["layers"].push_back({{"rows", w.rows()},
                                     {"cols", w.cols()},
                                     {"weights", std::vector<double>(w.data(), w.data() + w.size())},
                                     {"bias", to_vector(n.params.biases[h])}});
        }
        j["network"] = std::move(net);
    }
    return j;
}

FlowModel model_from_json(const nlohmann::json& j)
{
    try {
        if (j.value("format", "") != model_format_tag) {
            throw Error(ErrorCode::MalformedInput, "not a " + std::string(model_format_tag) + " model file");
        }
        FlowModel m;
        m.variant    = parse_variant(j.at("variant").get<std::string>());
        m.deterrence = parse_deterrence(j.at("deterrence").get<std::string>());
        m.knn_k      = j.at("knn_k").get<int>();
        const auto& p = j.at("provenance");
        m.provenance  = {p.at("train_region_ids").get<std::vector<std::string>>(), p.at("seed").get<std::uint64_t>(),
                         p.at("config_hash").get<std::string>()};
        m.training_log = j.value("training_log", std::vector<double>{});
        if (j.contains("gravity")) {
            const auto& g = j["gravity"];
            GravityFit fit;
            fit.params     = {g.at("beta1").get<double>(), g.at("beta2").get<double>(),
                              parse_deterrence(g.at("deterrence").get<std::string>())};
            fit.loglik     = g.at("loglik").get<double>();
            fit.converged  = g.at("converged").get<bool>();
            fit.iterations = g.value("iterations", 0);
            m.gravity      = fit;
        }
        if (j.contains("network")) {
            const auto& net = j["network"];
            NeuralModel n;
            n.variant      = m.variant;
            n.deterrence   = m.deterrence;
            n.knn_k        = m.knn_k;
            n.config       = mlp_from_json(net.at("config"));
            n.scaler.mean  = from_vector(net.at("scaler").at("mean").get<std::vector<double>>());
            n.scaler.scale = from_vector(net.at("scaler").at("scale").get<std::vector<double>>());
            for (const auto& layer : net.at("layers")) {
                const auto rows = layer.at("rows").get<Eigen::Index>();
                const auto cols = layer.at("cols").get<Eigen::Index>();
                const auto w    = layer.at("weights").get<std::vector<double>>();
                if (static_cast<Eigen::Index>(w.size()) != rows * cols) {
                    throw Error(ErrorCode::MalformedInput, "layer weight count does not match its shape");
                }
                n.params.weights.push_back(Eigen::Map<const Eigen::MatrixXd>(w.data(), rows, cols));
                n.params.biases.push_back(from_vector(layer.at("bias").get<std::vector<double>>()));
            }
            if (n.params.input_dim() != input_dimension(m.variant)) {
                throw Error(ErrorCode::DimensionMismatch, "network input width does not match the variant");
            }
            m.neural = std::move(n);
        }
        if (!m.gravity && !m.neural) {
            throw Error(ErrorCode::MalformedInput, "model file has neither gravity nor network parameters");
        }
        return m;
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedInput, std::string("model file: ") + e.what());
    }
}

void save_model(const FlowModel& model, const std::filesystem::path& path)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::MalformedInput, "cannot write " + path.string());
    }
    out << to_json(model).dump() << '\n';
}

FlowModel load_model(const std::filesystem::path& path)
{
    std::ifstream in(path);
    if (!in) {
        throw Error(ErrorCode::InputNotFound, "input not found: " + path.string());
    }
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    }
    catch (const nlohmann::json::exception& e) {
        throw Error(ErrorCode::MalformedInput, path.string() + ": " + e.what());
    }
    return model_from_json(j);
}

} // namespace flowgen
