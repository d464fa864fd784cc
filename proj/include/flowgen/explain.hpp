#pragma once

// Monte Carlo permutation Shapley values of a pair score.

#include <Eigen/Core>
#include <json.hpp>

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace flowgen {

/// Scores every column of a batch of inputs.
using BatchScore = std::function<Eigen::RowVectorXd(const Eigen::MatrixXd&)>;

struct ShapleyOptions {
    int n_permutations = 200; // rounded up to a multiple of the background size
    std::uint64_t seed = 0;
    bool antithetic    = true;  // each permutation is followed by its reverse, on the same background row
    bool exhaustive    = false; // all d! orderings against every background row
};

struct Attribution {
    std::string origin_id;
    std::string destination_id;
    double base_value   = 0.0; // mean f over the background
    double model_output = 0.0;
    Eigen::VectorXd value; // the explained input
    Eigen::VectorXd phi;
    std::size_t n_samples = 0;
    /// |base_value + sum phi - model_output|
    double residual = 0.0;
};

/// Background rows are the columns of `background`. Sample p (an antithetic pair
/// shares one) is evaluated against column order[p mod n] of a seeded shuffle, and the
/// sample count is rounded up to a multiple of n, so base_value + sum phi = f(x) up to
/// rounding. Throws EmptyBackground.
Attribution shapley_values(const BatchScore& f, const Eigen::VectorXd& x, const Eigen::MatrixXd& background,
                           const ShapleyOptions& options = {});

struct ExplainedPair {
    std::string origin_id;
    std::string destination_id;
    Eigen::VectorXd x;
};

struct FeatureSummary {
    std::string name;
    double mean_abs_phi = 0.0;
    std::vector<double> percentile; // of the pair's feature value within the sample, 0..100
    std::vector<double> phi;
};

struct GlobalSummary {
    std::vector<FeatureSummary> features; // descending mean |phi|
    std::vector<Attribution> attributions;
};

GlobalSummary global_summary(const BatchScore& f, std::span<const ExplainedPair> pairs,
                             const Eigen::MatrixXd& background, std::span<const std::string> feature_names,
                             const ShapleyOptions& options = {});

/// Up to n distinct columns of `pool`, chosen uniformly.
Eigen::MatrixXd sample_columns(const Eigen::MatrixXd& pool, int n, std::uint64_t seed);

nlohmann::json to_json(const Attribution& a, std::span<const std::string> feature_names);
/// feature, value, percentile, phi, origin_id, destination_id; one row per pair and feature.
void write_beeswarm_csv(const std::filesystem::path& path, const GlobalSummary& summary,
                        std::span<const std::string> feature_names);
/// feature, rank, mean_abs_phi.
void write_ranking_csv(const std::filesystem::path& path, const GlobalSummary& summary);

} // namespace flowgen
