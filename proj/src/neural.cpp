#include "flowgen/neural.hpp"
#include "flowgen/error.hpp"
#include "flowgen/log.hpp"

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>

namespace flowgen {

std::vector<int> deep_gravity_hidden_dims()
{
    std::vector<int> dims(6, 256);
    dims.insert(dims.end(), 9, 128);
    return dims;
}

MlpConfig default_mlp_config(ModelVariant variant)
{
    MlpConfig cfg;
    cfg.input_dim   = input_dimension(variant);
    cfg.hidden_dims = (variant == ModelVariant::mfg || variant == ModelVariant::g) ? std::vector<int>{}
                                                                                     : deep_gravity_hidden_dims();
    return cfg;
}

// ---------------------------------------------------------------------------

InputScaler InputScaler::identity(Eigen::Index dim)
{
    return {Eigen::VectorXd::Zero(dim), Eigen::VectorXd::Ones(dim)};
}

InputScaler InputScaler::fit(const Eigen::MatrixXd& samples)
{
    const Eigen::Index dim = samples.rows();
    if (samples.cols() == 0) {
        return identity(dim);
    }
    InputScaler s;
    s.mean                  = samples.rowwise().mean();
    const Eigen::MatrixXd c = samples.colwise() - s.mean;
    s.scale = (c.array().square().rowwise().sum() / static_cast<double>(samples.cols())).sqrt().matrix();
    for (Eigen::Index k = 0; k < dim; ++k) {
        if (!(s.scale[k] > 1e-12 * std::max(1.0, std::abs(s.mean[k])))) {
            s.scale[k] = 1.0;
        }
    }
    return s;
}

void InputScaler::apply(Eigen::Ref<Eigen::MatrixXd> inputs) const
{
    inputs.colwise() -= mean;
    inputs.array().colwise() /= scale.array();
}

bool InputScaler::is_identity() const
{
    return mean.isZero(0.0) && (scale.array() == 1.0).all();
}

// ---------------------------------------------------------------------------

void write_dataset_pair_input(const Dataset& data, ModelVariant variant, Deterrence deterrence, std::size_t origin,
                              std::size_t destination, Eigen::Ref<Eigen::VectorXd> out)
{
    const auto& locs  = data.locations();
    const auto& feats = data.features();
    PairInputOptions options;
    options.deterrence = deterrence;
    if (variant == ModelVariant::dg_knn) {
        if (data.knn_k() == 0) {
            throw Error(ErrorCode::MissingFeatures, "DG-Knn neighbor averages have not been prepared");
        }
        options.knn = KnnContext{data.knn_average(origin), data.knn_average(destination)};
    }
    write_pair_input(locs[origin], feats[origin], locs[destination], feats[destination],
                     distance(locs[origin], locs[destination]), variant, options, out);
}

Eigen::MatrixXd candidate_inputs(const Dataset& data, ModelVariant variant, Deterrence deterrence,
                                 std::size_t origin, std::span<const std::size_t> destinations)
{
    Eigen::MatrixXd x(input_dimension(variant), static_cast<Eigen::Index>(destinations.size()));
    for (std::size_t k = 0; k < destinations.size(); ++k) {
        write_dataset_pair_input(data, variant, deterrence, origin, destinations[k],
                                 x.col(static_cast<Eigen::Index>(k)));
    }
    return x;
}

TrainingSet build_training_set(const Dataset& data, std::span<const std::size_t> regions, ModelVariant variant,
                               Deterrence deterrence)
{
    TrainingSet set;
    set.variant    = variant;
    set.deterrence = deterrence;
    set.input_dim  = input_dimension(variant);
    set.knn_k      = variant == ModelVariant::dg_knn ? data.knn_k() : 0;
    for (auto r : regions) {
        TrainingRegion tr;
        tr.flows       = region_flows(data, r);
        const auto& m  = tr.flows.members;
        const auto n   = m.size();
        tr.pair_inputs = Eigen::MatrixXd(set.input_dim, static_cast<Eigen::Index>(n * (n > 0 ? n - 1 : 0)));
        for (std::size_t a = 0; a < n; ++a) {
            for (std::size_t b = 0; b < n; ++b) {
                if (a != b) {
                    write_dataset_pair_input(data, variant, deterrence, m[a], m[b], tr.pair_inputs.col(tr.column(a, b)));
                }
            }
        }
        set.region_ids.push_back(data.regions()[r].id());
        set.regions.push_back(std::move(tr));
    }
    return set;
}

std::vector<TrainBatch> make_batches(const Dataset& data, const TrainingSet& set, std::mt19937_64& rng,
                                     int batch_origins, int negative_samples)
{
    if (batch_origins < 1) {
        throw Error(ErrorCode::MalformedInput, "batch size must be positive");
    }
    std::vector<std::pair<std::size_t, std::size_t>> origins; // (region, member)
    for (std::size_t r = 0; r < set.regions.size(); ++r) {
        const auto& f = set.regions[r].flows;
        for (std::size_t a = 0; a < f.members.size(); ++a) {
            if (f.outflow[a] > 0.0) {
                origins.emplace_back(r, a);
            }
        }
    }
    std::shuffle(origins.begin(), origins.end(), rng);

    std::vector<TrainBatch> batches;
    for (std::size_t start = 0; start < origins.size(); start += static_cast<std::size_t>(batch_origins)) {
        const auto stop = std::min(origins.size(), start + static_cast<std::size_t>(batch_origins));
        TrainBatch batch;
        std::vector<std::vector<std::size_t>> chosen;
        std::vector<std::vector<double>> targets;
        batch.offsets.push_back(0);
        for (std::size_t k = start; k < stop; ++k) {
            const auto [r, a] = origins[k];
            const auto& f     = set.regions[r].flows;
            const auto n      = f.members.size();
            const auto cap    = std::min<std::size_t>(static_cast<std::size_t>(std::max(negative_samples, 0)), n - 1);

            std::vector<std::size_t> cand;
            std::vector<double> t;
            std::vector<char> is_observed(n, 0);
            for (auto [b, y] : f.observed[a]) {
                cand.push_back(b);
                t.push_back(y / f.outflow[a]);
                is_observed[b] = 1;
            }
            if (cand.size() < cap) {
                std::vector<std::size_t> pool;
                for (std::size_t b = 0; b < n; ++b) {
                    if (b != a && !is_observed[b]) {
                        pool.push_back(b);
                    }
                }
                const auto need = std::min(cap - cand.size(), pool.size());
                // partial Fisher-Yates: uniform sample without replacement
                for (std::size_t s = 0; s < need; ++s) {
                    std::uniform_int_distribution<std::size_t> pick(s, pool.size() - 1);
                    std::swap(pool[s], pool[pick(rng)]);
                    cand.push_back(pool[s]);
                    t.push_back(0.0);
                }
            }
            batch.origin_ids.push_back(data.locations()[f.members[a]].id);
            std::vector<std::string> ids;
            for (auto b : cand) {
                ids.push_back(data.locations()[f.members[b]].id);
            }
            batch.candidate_ids.push_back(std::move(ids));
            batch.offsets.push_back(batch.offsets.back() + static_cast<Eigen::Index>(cand.size()));
            chosen.push_back(std::move(cand));
            targets.push_back(std::move(t));
        }

        batch.inputs  = Eigen::MatrixXd(set.input_dim, batch.offsets.back());
        batch.targets = Eigen::VectorXd(batch.offsets.back());
        for (std::size_t o = 0; o < chosen.size(); ++o) {
            const auto [r, a] = origins[start + o];
            const auto& tr    = set.regions[r];
            for (std::size_t c = 0; c < chosen[o].size(); ++c) {
                const auto col         = batch.offsets[o] + static_cast<Eigen::Index>(c);
                batch.inputs.col(col)  = tr.pair_inputs.col(tr.column(a, chosen[o][c]));
                batch.targets[col]     = targets[o][c];
            }
        }
        batches.push_back(std::move(batch));
    }
    return batches;
}

// ---------------------------------------------------------------------------

namespace {

constexpr Eigen::Index chunk_columns = 4096;

void check_finite(const ForwardCache<double>& cache, const Eigen::RowVectorXd& scores)
{
    for (std::size_t h = 0; h < cache.pre.size(); ++h) {
        if (!cache.pre[h].allFinite()) {
            throw Error(ErrorCode::NumericalOverflow, "non-finite activation in hidden layer " + std::to_string(h));
        }
    }
    if (!scores.allFinite()) {
        throw Error(ErrorCode::NumericalOverflow, "non-finite score in output layer " + std::to_string(cache.pre.size()));
    }
}

void accumulate(MlpParams<double>& into, const MlpParams<double>& g)
{
    for (std::size_t h = 0; h < into.depth(); ++h) {
        into.weights[h] += g.weights[h];
        into.biases[h] += g.biases[h];
    }
}

} // namespace

LossGradient loss_and_gradient(const MlpParams<double>& params, const TrainBatch& batch, double slope)
{
    if (batch.inputs.rows() != params.input_dim()) {
        throw Error(ErrorCode::DimensionMismatch, "batch inputs have " + std::to_string(batch.inputs.rows()) +
                                                      " rows, network expects " +
                                                      std::to_string(params.input_dim()));
    }
    LossGradient out{0.0, MlpParams<double>::zeros_like(params)};
    const std::size_t n_origins = batch.offsets.size() - 1;

    std::size_t first = 0;
    while (first < n_origins) {
        // whole origins only, so each softmax stays inside one chunk
        std::size_t last = first + 1;
        while (last < n_origins && batch.offsets[last + 1] - batch.offsets[first] <= chunk_columns) {
            ++last;
        }
        const Eigen::Index c0 = batch.offsets[first];
        const Eigen::Index nc = batch.offsets[last] - c0;
        const auto x          = batch.inputs.middleCols(c0, nc);

        ForwardCache<double> cache;
        const Eigen::RowVectorXd scores = forward(params, x, slope, &cache);
        check_finite(cache, scores);

        Eigen::RowVectorXd dscore(nc);
        for (std::size_t o = first; o < last; ++o) {
            const Eigen::Index b   = batch.offsets[o] - c0;
            const Eigen::Index len = batch.offsets[o + 1] - batch.offsets[o];
            const auto s           = scores.segment(b, len);
            const auto t           = batch.targets.segment(batch.offsets[o], len);
            const double lse       = log_sum_exp(s);
            const double mass      = t.sum();
            out.loss -= t.dot(s.transpose()) - mass * lse;
            dscore.segment(b, len) = (mass * (s.array() - lse).exp()).matrix() - t.transpose();
        }
        accumulate(out.gradient, backward(params, x, cache, dscore, slope));
        first = last;
    }
    return out;
}

Eigen::RowVectorXd NeuralModel::score(const Eigen::MatrixXd& raw_inputs) const
{
    Eigen::MatrixXd x = raw_inputs;
    scaler.apply(x);
    return forward(params, x, config.leaky_slope);
}

namespace {

void dump_state(const std::filesystem::path& path, const MlpParams<double>& params, int epoch, std::size_t batch)
{
    nlohmann::json j;
    j["epoch"] = epoch;
    j["batch"] = batch;
    for (std::size_t h = 0; h < params.depth(); ++h) {
        j["layers"].push_back({{"weight_norm", params.weights[h].norm()},
                               {"bias_norm", params.biases[h].norm()},
                               {"finite", params.weights[h].allFinite() && params.biases[h].allFinite()}});
    }
    std::ofstream(path) << j.dump(2) << '\n';
}

std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t stream)
{
    // splitmix64 finalizer
    std::uint64_t z = seed + 0x9e3779b97f4a7c15ULL * (stream + 1);
    z               = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z               = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

} // namespace

TrainResult train(const Dataset& data, const TrainingSet& set, const MlpConfig& config, const TrainOptions& options)
{
    if (config.input_dim != set.input_dim) {
        throw Error(ErrorCode::DimensionMismatch, "config input_dim " + std::to_string(config.input_dim) +
                                                      " does not match variant dimension " +
                                                      std::to_string(set.input_dim));
    }
    TrainResult result;
    auto& model      = result.model;
    model.variant    = set.variant;
    model.deterrence = set.deterrence;
    model.knn_k      = set.knn_k;
    model.config     = config;
    model.params     = glorot_init<double>(config.input_dim, config.hidden_dims, derive_seed(config.seed, 0));

    if (config.standardize_inputs) {
        Eigen::Index total = 0;
        for (const auto& r : set.regions) {
            total += r.pair_inputs.cols();
        }
        Eigen::MatrixXd all(set.input_dim, total);
        Eigen::Index at = 0;
        for (const auto& r : set.regions) {
            all.middleCols(at, r.pair_inputs.cols()) = r.pair_inputs;
            at += r.pair_inputs.cols();
        }
        model.scaler = InputScaler::fit(all);
    }
    else {
        model.scaler = InputScaler::identity(set.input_dim);
    }

    RmsPropState<double> state(model.params);
    const RmsPropConfig rms{config.learning_rate, config.momentum};
    std::mt19937_64 rng(derive_seed(config.seed, 1));

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        auto batches     = make_batches(data, set, rng, config.batch_origins, config.negative_samples);
        double loss_sum  = 0.0;
        std::size_t seen = 0;
        for (std::size_t b = 0; b < batches.size(); ++b) {
            auto& batch = batches[b];
            model.scaler.apply(batch.inputs);
            LossGradient lg;
            try {
                lg = loss_and_gradient(model.params, batch, config.leaky_slope);
            }
            catch (const Error& e) {
                if (options.divergence_dump) {
                    dump_state(*options.divergence_dump, model.params, epoch, b);
                }
                throw Error(ErrorCode::DivergenceDetected, "epoch " + std::to_string(epoch) + " batch " +
                                                               std::to_string(b) + ": " + e.what());
            }
            if (!std::isfinite(lg.loss) || !lg.gradient.all_finite()) {
                if (options.divergence_dump) {
                    dump_state(*options.divergence_dump, model.params, epoch, b);
                }
                throw Error(ErrorCode::DivergenceDetected,
                            "non-finite loss at epoch " + std::to_string(epoch) + " batch " + std::to_string(b));
            }
            loss_sum += lg.loss;
            seen += batch.origin_ids.size();
            rmsprop_step(model.params, lg.gradient, state, rms);
        }
        result.epoch_loss.push_back(seen ? loss_sum / static_cast<double>(seen) : 0.0);
        log::info("epoch ", epoch + 1, "/", config.epochs, " mean loss ", result.epoch_loss.back());
    }
    return result;
}

FlowTable predict_flows(const NeuralModel& model, const Dataset& data, std::size_t region,
                        std::span<const double> outflow)
{
    const auto members = data.members(region);
    if (outflow.size() != members.size()) {
        throw Error(ErrorCode::DimensionMismatch, "one outflow per region member expected");
    }
    if (model.variant == ModelVariant::dg_knn && data.knn_k() != model.knn_k) {
        throw Error(ErrorCode::MissingFeatures, "neighbor averages for k=" + std::to_string(model.knn_k) +
                                                    " have not been prepared");
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
        const Eigen::MatrixXd x = candidate_inputs(data, model.variant, model.deterrence, members[a], dest);
        const Eigen::VectorXd p = softmax(model.score(x));
        for (std::size_t k = 0; k < dest.size(); ++k) {
            records.push_back({data.locations()[members[a]].id, data.locations()[dest[k]].id,
                               outflow[a] * p[static_cast<Eigen::Index>(k)]});
        }
    }
    return FlowTable::from_records(std::move(records));
}

} // namespace flowgen
