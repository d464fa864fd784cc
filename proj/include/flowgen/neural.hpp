#pragma once

#include "flowgen/dataset.hpp"
#include "flowgen/mlp.hpp"
#include "flowgen/variant.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <filesystem>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace flowgen {

struct MlpConfig {
    int input_dim = 0;
    std::vector<int> hidden_dims;
    double leaky_slope     = 0.01;
    std::uint64_t seed     = 0;
    double learning_rate   = 5e-6;
    double momentum        = 0.9;
    int epochs             = 20;
    int batch_origins      = 64;
    int negative_samples   = 512;
    bool standardize_inputs = true;
};

/// 256 x 6 followed by 128 x 9 hidden units.
std::vector<int> deep_gravity_hidden_dims();

/// Training recipe for a variant: the deep stack for NG and the DG family,
/// no hidden layer for MFG (and for G run as a linear network).
MlpConfig default_mlp_config(ModelVariant variant);

/// Per-feature affine map x -> (x - mean) / scale fitted on training inputs.
struct InputScaler {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;

    static InputScaler identity(Eigen::Index dim);
    /// Columns are samples; zero-variance features keep scale 1.
    static InputScaler fit(const Eigen::MatrixXd& samples);

    void apply(Eigen::Ref<Eigen::MatrixXd> inputs) const;
    bool is_identity() const;
};

/// Input vector of pair (origin, destination), both dataset location indices.
void write_dataset_pair_input(const Dataset& data, ModelVariant variant, Deterrence deterrence, std::size_t origin,
                              std::size_t destination, Eigen::Ref<Eigen::VectorXd> out);

/// Inputs of `origin` against each of `destinations`, one column per destination.
Eigen::MatrixXd candidate_inputs(const Dataset& data, ModelVariant variant, Deterrence deterrence,
                                 std::size_t origin, std::span<const std::size_t> destinations);

struct TrainingRegion {
    RegionFlows flows;
    Eigen::MatrixXd pair_inputs; // column (a, b) for every ordered member pair a != b

    Eigen::Index column(std::size_t a, std::size_t b) const
    {
        const auto n = flows.members.size();
        return static_cast<Eigen::Index>(a * (n - 1) + (b < a ? b : b - 1));
    }
};

struct TrainingSet {
    ModelVariant variant = ModelVariant::dg;
    Deterrence deterrence = Deterrence::power;
    int input_dim = 0;
    int knn_k     = 0;
    std::vector<TrainingRegion> regions;
    std::vector<std::string> region_ids;
};

/// Pair inputs of every training region. DG-Knn requires data.prepare_knn first.
TrainingSet build_training_set(const Dataset& data, std::span<const std::size_t> regions, ModelVariant variant,
                               Deterrence deterrence = Deterrence::power);

/// Candidate sets of a batch of origins. Columns of `inputs` are grouped by
/// origin: origin k owns columns [offsets[k], offsets[k+1]).
struct TrainBatch {
    std::vector<std::string> origin_ids;
    std::vector<std::vector<std::string>> candidate_ids;
    std::vector<Eigen::Index> offsets;
    Eigen::VectorXd targets; // y(l_i, l_j) / O_i, zero for sampled negatives
    Eigen::MatrixXd inputs;
};

/// One epoch of batches: origins with positive outflow are shuffled, then each
/// keeps every observed destination plus uniformly sampled zero-flow
/// destinations up to min(negative_samples, region size - 1) candidates.
std::vector<TrainBatch> make_batches(const Dataset& data, const TrainingSet& set, std::mt19937_64& rng,
                                     int batch_origins, int negative_samples);

struct LossGradient {
    double loss = 0.0;
    MlpParams<double> gradient;
};

/// Cross-entropy H = -sum_i sum_j (y_ij / O_i) ln p_ij over the batch and its
/// gradient by reverse-mode accumulation. Throws NumericalOverflow naming the
/// first layer with a non-finite activation.
LossGradient loss_and_gradient(const MlpParams<double>& params, const TrainBatch& batch, double leaky_slope);

struct NeuralModel {
    ModelVariant variant = ModelVariant::dg;
    Deterrence deterrence = Deterrence::power;
    int knn_k = 0;
    MlpConfig config;
    InputScaler scaler;
    MlpParams<double> params;

    /// Raw scores s(l_i, l_j) for unscaled input columns.
    Eigen::RowVectorXd score(const Eigen::MatrixXd& raw_inputs) const;
};

struct TrainOptions {
    /// Where to write the model state when training diverges.
    std::optional<std::filesystem::path> divergence_dump;
};

struct TrainResult {
    NeuralModel model;
    std::vector<double> epoch_loss; // mean cross-entropy per training origin
};

/// Fixed-epoch RMSprop training. Throws DivergenceDetected when the loss becomes non-finite.
TrainResult train(const Dataset& data, const TrainingSet& set, const MlpConfig& config,
                  const TrainOptions& options = {});

/// Expected flows O_i p_ij from every origin with positive outflow to every
/// other location of the region.
FlowTable predict_flows(const NeuralModel& model, const Dataset& data, std::size_t region,
                        std::span<const double> outflow);

} // namespace flowgen
