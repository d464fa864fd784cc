#include "flowgen/explain.hpp"
#include "flowgen/csv.hpp"
#include "flowgen/error.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <random>

namespace flowgen {

namespace {

constexpr Eigen::Index max_batch_columns = 8192;

struct Sample {
    std::vector<int> order;
    Eigen::Index background = 0;
};

} // namespace

Attribution shapley_values(const BatchScore& f, const Eigen::VectorXd& x, const Eigen::MatrixXd& background,
                           const ShapleyOptions& options)
{
    if (background.cols() == 0) {
        throw Error(ErrorCode::EmptyBackground, "Shapley values need a non-empty background");
    }
    const Eigen::Index d = x.size();
    if (background.rows() != d) {
        throw Error(ErrorCode::DimensionMismatch, "background rows do not match the input dimension");
    }
    const Eigen::Index nb = background.cols();

    Attribution out;
    out.value        = x;
    out.model_output = f(x)(0);
    out.base_value   = f(background).mean();
    out.phi          = Eigen::VectorXd::Zero(d);

    std::vector<Sample> samples;
    std::vector<int> identity(static_cast<std::size_t>(d));
    std::iota(identity.begin(), identity.end(), 0);
    if (options.exhaustive) {
        auto order = identity;
        do {
            for (Eigen::Index b = 0; b < nb; ++b) {
                samples.push_back({order, b});
            }
        } while (std::next_permutation(order.begin(), order.end()));
    }
    else {
        if (options.n_permutations < 1) {
            throw Error(ErrorCode::MalformedInput, "n_permutations must be positive");
        }
        std::mt19937_64 rng(options.seed);
        std::vector<Eigen::Index> rows(static_cast<std::size_t>(nb));
        std::iota(rows.begin(), rows.end(), Eigen::Index{0});
        std::shuffle(rows.begin(), rows.end(), rng);
        // Round up so every background row is used equally often: the samples then
        // telescope to f(x) minus the background mean exactly.
        const auto wanted = static_cast<std::size_t>(options.antithetic ? (options.n_permutations + 1) / 2
                                                                         : options.n_permutations);
        const auto draws  = (wanted + rows.size() - 1) / rows.size() * rows.size();
        for (std::size_t p = 0; p < draws; ++p) {
            auto order = identity;
            std::shuffle(order.begin(), order.end(), rng);
            const auto b = rows[p % rows.size()];
            samples.push_back({order, b});
            if (options.antithetic) {
                std::reverse(order.begin(), order.end());
                samples.push_back({std::move(order), b});
            }
        }
    }

    // Each sample walks from its background row to x one feature at a time; the
    // d + 1 points of many samples are scored in one batch.
    const Eigen::Index per_batch = std::max<Eigen::Index>(1, max_batch_columns / (d + 1));
    Eigen::MatrixXd z;
    for (std::size_t first = 0; first < samples.size(); first += static_cast<std::size_t>(per_batch)) {
        const auto count = std::min(samples.size() - first, static_cast<std::size_t>(per_batch));
        z.resize(d, static_cast<Eigen::Index>(count) * (d + 1));
        for (std::size_t s = 0; s < count; ++s) {
            const auto& sample = samples[first + s];
            const auto base    = static_cast<Eigen::Index>(s) * (d + 1);
            z.col(base)        = background.col(sample.background);
            for (Eigen::Index k = 0; k < d; ++k) {
                z.col(base + k + 1)              = z.col(base + k);
                const int feature                = sample.order[static_cast<std::size_t>(k)];
                z(feature, base + k + 1)         = x[feature];
            }
        }
        const Eigen::RowVectorXd scores = f(z);
        for (std::size_t s = 0; s < count; ++s) {
            const auto& sample = samples[first + s];
            const auto base    = static_cast<Eigen::Index>(s) * (d + 1);
            for (Eigen::Index k = 0; k < d; ++k) {
                out.phi[sample.order[static_cast<std::size_t>(k)]] += scores(base + k + 1) - scores(base + k);
            }
        }
    }
    out.n_samples = samples.size();
    out.phi /= static_cast<double>(samples.size());
    out.residual = std::abs(out.base_value + out.phi.sum() - out.model_output);
    return out;
}

GlobalSummary global_summary(const BatchScore& f, std::span<const ExplainedPair> pairs,
                             const Eigen::MatrixXd& background, std::span<const std::string> feature_names,
                             const ShapleyOptions& options)
{
    if (pairs.empty()) {
        throw Error(ErrorCode::EmptyInput, "no pairs to explain");
    }
    const auto d = static_cast<std::size_t>(pairs.front().x.size());
    if (feature_names.size() != d) {
        throw Error(ErrorCode::DimensionMismatch, "one feature name per input expected");
    }
    GlobalSummary out;
    for (const auto& p : pairs) {
        auto a           = shapley_values(f, p.x, background, options);
        a.origin_id      = p.origin_id;
        a.destination_id = p.destination_id;
        out.attributions.push_back(std::move(a));
    }
    const auto n = pairs.size();
    for (std::size_t k = 0; k < d; ++k) {
        FeatureSummary s;
        s.name = feature_names[k];
        std::vector<double> values;
        for (const auto& p : pairs) {
            values.push_back(p.x[static_cast<Eigen::Index>(k)]);
        }
        auto sorted = values;
        std::sort(sorted.begin(), sorted.end());
        for (std::size_t i = 0; i < n; ++i) {
            // Mid-rank percentile, so ties share a value.
            const auto lo = std::lower_bound(sorted.begin(), sorted.end(), values[i]) - sorted.begin();
            const auto hi = std::upper_bound(sorted.begin(), sorted.end(), values[i]) - sorted.begin();
            s.percentile.push_back(n > 1 ? 100.0 * (0.5 * static_cast<double>(lo + hi - 1)) / static_cast<double>(n - 1)
                                         : 50.0);
            const double phi = out.attributions[i].phi[static_cast<Eigen::Index>(k)];
            s.phi.push_back(phi);
            s.mean_abs_phi += std::abs(phi) / static_cast<double>(n);
        }
        out.features.push_back(std::move(s));
    }
    std::stable_sort(out.features.begin(), out.features.end(),
                     [](const FeatureSummary& a, const FeatureSummary& b) { return a.mean_abs_phi > b.mean_abs_phi; });
    return out;
}

Eigen::MatrixXd sample_columns(const Eigen::MatrixXd& pool, int n, std::uint64_t seed)
{
    const auto cols = static_cast<std::size_t>(pool.cols());
    const auto take = std::min(cols, static_cast<std::size_t>(std::max(n, 0)));
    std::vector<Eigen::Index> idx(cols);
    std::iota(idx.begin(), idx.end(), Eigen::Index{0});
    std::mt19937_64 rng(seed);
    for (std::size_t k = 0; k < take; ++k) {
        std::uniform_int_distribution<std::size_t> pick(k, cols - 1);
        std::swap(idx[k], idx[pick(rng)]);
    }
    Eigen::MatrixXd out(pool.rows(), static_cast<Eigen::Index>(take));
    for (std::size_t k = 0; k < take; ++k) {
        out.col(static_cast<Eigen::Index>(k)) = pool.col(idx[k]);
    }
    return out;
}

nlohmann::json to_json(const Attribution& a, std::span<const std::string> feature_names)
{
    nlohmann::json phi = nlohmann::json::array();
    for (Eigen::Index k = 0; k < a.phi.size(); ++k) {
        phi.push_back({{"feature", feature_names[static_cast<std::size_t>(k)]},
                       {"value", a.value.size() > k ? a.value[k] : 0.0},
                       {"phi", a.phi[k]}});
    }
    return {{"pair", {{"origin_id", a.origin_id}, {"destination_id", a.destination_id}}},
            {"base_value", a.base_value},
            {"model_output", a.model_output},
            {"phi", phi},
            {"n_samples", a.n_samples},
            {"residual", a.residual}};
}

void write_beeswarm_csv(const std::filesystem::path& path, const GlobalSummary& summary,
                        std::span<const std::string> feature_names)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::MalformedInput, "cannot write " + path.string());
    }
    out << "feature,value,percentile,phi,origin_id,destination_id\n";
    for (const auto& s : summary.features) {
        const auto k = static_cast<Eigen::Index>(
            std::find(feature_names.begin(), feature_names.end(), s.name) - feature_names.begin());
        for (std::size_t i = 0; i < summary.attributions.size(); ++i) {
            const auto& a = summary.attributions[i];
            out << s.name << ',' << csv::format_double(a.value[k]) << ',' << csv::format_double(s.percentile[i])
                << ',' << csv::format_double(s.phi[i]) << ',' << a.origin_id << ',' << a.destination_id << '\n';
        }
    }
}

void write_ranking_csv(const std::filesystem::path& path, const GlobalSummary& summary)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw Error(ErrorCode::MalformedInput, "cannot write " + path.string());
    }
    out << "feature,rank,mean_abs_phi\n";
    for (std::size_t r = 0; r < summary.features.size(); ++r) {
        out << summary.features[r].name << ',' << r + 1 << ',' << csv::format_double(summary.features[r].mean_abs_phi)
            << '\n';
    }
}

} // namespace flowgen
