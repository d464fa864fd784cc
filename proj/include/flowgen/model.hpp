#pragma once

#include "flowgen/dataset.hpp"
#include "flowgen/gravity.hpp"
#include "flowgen/neural.hpp"
#include "flowgen/variant.hpp"

#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace flowgen {

inline constexpr std::string_view model_format_tag = "flowgen-model/1";

struct ModelConfig {
    ModelVariant variant  = ModelVariant::dg;
    Deterrence deterrence = Deterrence::power; // G only
    MlpConfig mlp;                             // neural variants; input_dim 0 means "variant default"
    GravityParams gravity_init;
    GravityFitOptions gravity_fit;
    int knn_k = 5; // DG-Knn only
    std::optional<std::filesystem::path> divergence_dump;
};

ModelConfig default_model_config(ModelVariant variant);

/// Training regions and seed a model was fitted with, for leakage checks.
struct Provenance {
    std::vector<std::string> train_region_ids;
    std::uint64_t seed = 0;
    std::string config_hash;
};

/// A trained flow generation model of any variant.
struct FlowModel {
    ModelVariant variant  = ModelVariant::dg;
    Deterrence deterrence = Deterrence::power;
    int knn_k             = 0;
    std::optional<GravityFit> gravity;
    std::optional<NeuralModel> neural;
    Provenance provenance;
    std::vector<double> training_log;

    int input_dim() const;
    std::vector<std::string> input_names() const;

    /// Raw scores s(l_i, l_j) for unscaled input columns; for G this is beta . x.
    Eigen::RowVectorXd score(const Eigen::MatrixXd& raw_inputs) const;

    /// Expected flows O_i p_ij over all other locations of the region, for each
    /// member with positive outflow (one entry of `outflow` per region member).
    FlowTable predict_region(const Dataset& data, std::size_t region, std::span<const double> outflow) const;
};

/// Fits the configured variant on the given regions. Prepares the DG-Knn
/// neighbor cache on `data` when needed.
FlowModel train_model(Dataset& data, std::span<const std::size_t> train_regions, const ModelConfig& config);

nlohmann::json config_to_json(const ModelConfig& config);
/// FNV-1a 64 of the canonical JSON dump, as 16 hex digits.
std::string config_hash(const ModelConfig& config);

nlohmann::json to_json(const FlowModel& model);
FlowModel model_from_json(const nlohmann::json& j);
void save_model(const FlowModel& model, const std::filesystem::path& path);
/// Throws InputNotFound when the file is missing, MalformedInput on a format mismatch.
FlowModel load_model(const std::filesystem::path& path);

} // namespace flowgen
