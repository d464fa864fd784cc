// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include "support.hpp"

#include "flowgen/error.hpp"
#include "flowgen/evaluation.hpp"
#include "flowgen/explain.hpp"
#include "flowgen/gravity.hpp"
#include "flowgen/metrics.hpp"
#include "flowgen/mlp.hpp"
#include "flowgen/model.hpp"
#include "flowgen/neural.hpp"
#include "flowgen/synthetic.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <sys/wait.h>
#include <vector>

using namespace flowgen;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

class Timer {
public:
    double seconds() const
    {
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - m_start).count();
    }

private:
    std::chrono::steady_clock::time_point m_start = std::chrono::steady_clock::now();
};

std::string fmt(const char* f, auto... args)
{
    char buf[512];
    std::snprintf(buf, sizeof buf, f, args...);
    return buf;
}

std::vector<std::size_t> all_regions(const Dataset& data)
{
    std::vector<std::size_t> r(data.regions().size());
    std::iota(r.begin(), r.end(), std::size_t{0});
    return r;
}

// ---------------------------------------------------------------------------

Outcome gravity_recovery()
{
    Timer t;
    double worst = 0.0;
    bool ok      = true;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SyntheticSpec spec{.n_regions = 50, .locations_per_region = 40, .seed = seed};
        auto data        = to_dataset(generate_synthetic(spec));
        const auto model = train_model(data, all_regions(data), default_model_config(ModelVariant::g));
        const double e1  = std::abs(model.gravity->params.beta1 - 1.0);
        const double e2  = std::abs(model.gravity->params.beta2 + 2.0);
        worst            = std::max({worst, e1, e2});
        ok               = ok && e1 <= 0.1 && e2 <= 0.1;
    }
    const double secs = t.seconds();
    return {ok && secs < 60.0, fmt("max |beta - truth| = %.4f over 5 seeds, %.1f s", worst, secs)};
}

Outcome dg_gradient()
{
    Timer t;
    std::mt19937_64 rng(2024);
    std::normal_distribution<double> n01;
    double worst  = 0.0;
    bool shift_ok = true;
    for (int point = 0; point < 10; ++point) {
        TrainBatch batch;
        batch.offsets = {0, 4, 9};
        batch.inputs  = Eigen::MatrixXd(39, 9);
        for (auto& v : batch.inputs.reshaped()) {
            v = n01(rng);
        }
        batch.targets = Eigen::VectorXd::Zero(9);
        batch.targets.head(4) << 0.5, 0.25, 0.25, 0.0;
        batch.targets.tail(5) << 0.0, 0.6, 0.0, 0.4, 0.0;

        auto params = glorot_init<double>(39, deep_gravity_hidden_dims(), rng());
        for (auto& b : params.biases) {
            for (auto& v : b) {
                v = 0.1 * n01(rng);
            }
        }
        const auto grad = loss_and_gradient(params, batch, 0.01).gradient;
        const double h  = 1e-5;
        auto loss_at    = [&](const MlpParams<double>& p) { return loss_and_gradient(p, batch, 0.01).loss; };

        // sampled coordinates of every weight and bias block
        for (std::size_t layer = 0; layer < params.depth(); ++layer) {
            for (int which = 0; which < 2; ++which) {
                const Eigen::MatrixXd g = which == 0 ? grad.weights[layer] : Eigen::MatrixXd(grad.biases[layer]);
                const double scale      = g.cwiseAbs().maxCoeff();
                // the score bias shifts every candidate equally, so softmax cancels it
                const bool shift_only = which == 1 && layer + 1 == params.depth();
                std::uniform_int_distribution<Eigen::Index> pick(0, g.size() - 1);
                for (int s = 0; s < 6; ++s) {
                    const auto k = pick(rng);
                    auto up = params, down = params;
                    if (which == 0) {
                        up.weights[layer].reshaped()[k] += h;
                        down.weights[layer].reshaped()[k] -= h;
                    }
                    else {
                        up.biases[layer][k] += h;
                        down.biases[layer][k] -= h;
                    }
                    const double fd = (loss_at(up) - loss_at(down)) / (2 * h);
                    if (shift_only) {
                        shift_ok = shift_ok && std::abs(fd) < 1e-9 && std::abs(g.reshaped()[k]) < 1e-12;
                    }
                    else {
                        worst = std::max(worst, std::abs(fd - g.reshaped()[k]) / scale);
                    }
                }
            }
        }
        // one random direction through all parameters at once
        Eigen::VectorXd dir(params.size());
        for (auto& v : dir) {
            v = n01(rng);
        }
        dir.normalize();
        const Eigen::VectorXd theta = params.flatten();
        auto up = params, down = params;
        up.assign(theta + h * dir);
        down.assign(theta - h * dir);
        const double fd       = (loss_at(up) - loss_at(down)) / (2 * h);
        const double analytic = grad.flatten().dot(dir);
        worst                 = std::max(worst, std::abs(fd - analytic) / std::abs(analytic));
    }
    const double secs = t.seconds();
    return {worst < 1e-5 && shift_ok && secs < 60.0,
            fmt("max relative error %.2e at 10 points, score bias gradient zero: %s, %.1f s", worst,
                shift_ok ? "yes" : "no", secs)};
}

Outcome conservation()
{
    const ModelVariant variants[] = {ModelVariant::g,  ModelVariant::ng,     ModelVariant::mfg,
                                     ModelVariant::dg, ModelVariant::dg_sum, ModelVariant::dg_knn};
    std::mt19937_64 rng(77);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst_p = 0.0, worst_flow = 0.0;
    for (int instance = 0; instance < 1000; ++instance) {
        const auto v = variants[instance % 6];
        SyntheticSpec spec{.n_regions = 1, .locations_per_region = 2 + static_cast<int>(rng() % 11),
                           .seed = static_cast<std::uint64_t>(instance + 1)};
        auto data = to_dataset(generate_synthetic(spec));

        FlowModel model;
        model.variant    = v;
        model.deterrence = u(rng) < 0.5 ? Deterrence::power : Deterrence::exponential;
        if (v == ModelVariant::g) {
            GravityFit fit;
            fit.params    = {2.0 * u(rng), -3.0 * u(rng), model.deterrence};
            model.gravity = fit;
        }
        else {
            if (v == ModelVariant::dg_knn) {
                model.knn_k = std::min(3, spec.locations_per_region - 1);
                data.prepare_knn(model.knn_k);
            }
            NeuralModel net;
            net.variant    = v;
            net.deterrence = model.deterrence;
            net.knn_k      = model.knn_k;
            net.config     = default_mlp_config(v);
            net.scaler     = InputScaler::identity(net.config.input_dim);
            net.params     = glorot_init<double>(net.config.input_dim, net.config.hidden_dims, rng());
            model.neural   = std::move(net);
        }

        const auto members = data.members(0);
        std::vector<double> outflow(members.size());
        for (auto& o : outflow) {
            o = u(rng) < 0.2 ? 0.0 : std::floor(1.0 + 5000.0 * u(rng));
        }
        const auto flows = model.predict_region(data, 0, outflow);
        for (std::size_t a = 0; a < members.size(); ++a) {
            std::vector<std::size_t> dest;
            for (std::size_t b = 0; b < members.size(); ++b) {
                if (b != a) {
                    dest.push_back(members[b]);
                }
            }
            const auto x = candidate_inputs(data, v, model.deterrence, members[a], dest);
            worst_p      = std::max(worst_p, std::abs(softmax(model.score(x)).sum() - 1.0));
            if (outflow[a] > 0.0) {
                const double got = flows.outflow(data.locations()[members[a]].id);
                worst_flow       = std::max(worst_flow, std::abs(got - outflow[a]) / outflow[a]);
            }
        }
    }
    return {worst_p <= 1e-9 && worst_flow <= 1e-9,
            fmt("1000 instances over 6 variants: max |sum p - 1| = %.1e, max relative outflow error = %.1e", worst_p,
                worst_flow)};
}

// Independent reference implementations over a union-aligned pair map.
struct Reference {
    double cpc, pearson, nrmse, kld, jsd;
};

Reference reference_metrics(const std::map<std::pair<std::string, std::string>, std::pair<double, double>>& m)
{
    std::vector<long double> r, g;
    for (const auto& [k, v] : m) {
        r.push_back(v.first);
        g.push_back(v.second);
    }
    const std::size_t n = r.size();
    long double sr = 0, sg = 0, common = 0;
    for (std::size_t k = 0; k < n; ++k) {
        sr += r[k];
        sg += g[k];
        common += std::min(r[k], g[k]);
    }
    Reference out{};
    out.cpc = static_cast<double>(2 * common / (sr + sg));

    const long double mr = sr / n, mg = sg / n;
    long double sxy = 0, sxx = 0, syy = 0, se = 0;
    long double hi = -1e300L, lo = 1e300L;
    for (std::size_t k = 0; k < n; ++k) {
        sxy += (r[k] - mr) * (g[k] - mg);
        sxx += (r[k] - mr) * (r[k] - mr);
        syy += (g[k] - mg) * (g[k] - mg);
        se += (r[k] - g[k]) * (r[k] - g[k]);
        hi = std::max({hi, r[k], g[k]});
        lo = std::min({lo, r[k], g[k]});
    }
    out.pearson = static_cast<double>(sxy / std::sqrt(sxx * syy));
    out.nrmse   = static_cast<double>(std::sqrt(se / n) / (hi - lo));

    long double kl = 0, js = 0;
    bool infinite  = false;
    for (std::size_t k = 0; k < n; ++k) {
        const long double p = r[k] / sr, q = g[k] / sg, mid = (p + q) / 2;
        if (p > 0) {
            if (q == 0) {
                infinite = true;
            }
            else {
                kl += p * std::log(p / q);
            }
            js += 0.5L * p * std::log2(p / mid);
        }
        if (q > 0) {
            js += 0.5L * q * std::log2(q / mid);
        }
    }
    out.kld = infinite ? std::numeric_limits<double>::infinity() : static_cast<double>(kl);
    out.jsd = static_cast<double>(js);
    return out;
}

Outcome metric_oracle()
{
    std::mt19937_64 rng(99);
    std::uniform_int_distribution<int> size(2, 12), node(0, 4), val(0, 20);
    double worst = 0.0;
    bool ok      = true;
    for (int t = 0; t < 100; ++t) {
        std::vector<FlowRecord> real, gen;
        std::map<std::pair<std::string, std::string>, std::pair<double, double>> oracle;
        const int n = size(rng);
        for (int k = 0; k < n; ++k) {
            const std::string o = "O" + std::to_string(node(rng)), d = "D" + std::to_string(node(rng));
            const double y = 1 + val(rng);
            real.push_back({o, d, y});
            oracle[{o, d}].first += y;
        }
        for (int k = 0; k < n; ++k) {
            const std::string o = "O" + std::to_string(node(rng)), d = "D" + std::to_string(node(rng));
            const double y = val(rng) * 0.37;
            gen.push_back({o, d, y});
            oracle[{o, d}].second += y;
        }
        const auto a = align(FlowTable::from_records(real), FlowTable::from_records(gen));
        if (a.generated.sum() == 0.0) {
            continue;
        }
        const auto ref = reference_metrics(oracle);
        worst = std::max(worst, std::abs(cpc(a) - ref.cpc));
        worst = std::max(worst, std::abs(nrmse(a) - ref.nrmse));
        worst = std::max(worst, std::abs(jsd(a) - ref.jsd));
        const double p = pearson(a);
        worst = std::max(worst, std::isnan(ref.pearson) ? 0.0 : std::abs(p - ref.pearson));
        const double kl = kld(to_distribution(a.real), to_distribution(a.generated));
        if (std::isinf(ref.kld) || std::isinf(kl)) {
            ok = ok && std::isinf(ref.kld) && std::isinf(kl);
        }
        else {
            worst = std::max(worst, std::abs(kl - ref.kld));
        }
        ok = ok && jsd(a) >= 0.0 && jsd(a) <= 1.0;
        // CPC = 1 exactly when the tables agree
        ok = ok && (cpc(a) == 1.0) == (a.real == a.generated);
        ok = ok && cpc(align(FlowTable::from_records(real), FlowTable::from_records(real))) == 1.0;
    }

    // CPC against the best trip-by-trip matching when outflows agree
    std::uniform_int_distribution<int> dest(0, 3), trips(1, 6);
    double worst_acc = 0.0;
    for (int t = 0; t < 100; ++t) {
        Eigen::VectorXd real = Eigen::VectorXd::Zero(12), gen = Eigen::VectorXd::Zero(12);
        double correct = 0, total = 0;
        for (int origin = 0; origin < 3; ++origin) {
            const int n = trips(rng);
            std::vector<int> r(static_cast<std::size_t>(n)), g(static_cast<std::size_t>(n));
            for (auto& d : r) {
                d = dest(rng);
                real[origin * 4 + d] += 1;
            }
            for (auto& d : g) {
                d = dest(rng);
                gen[origin * 4 + d] += 1;
            }
            std::sort(g.begin(), g.end());
            int best = 0;
            do {
                int hits = 0;
                for (std::size_t k = 0; k < r.size(); ++k) {
                    hits += r[k] == g[k];
                }
                best = std::max(best, hits);
            } while (std::next_permutation(g.begin(), g.end()));
            correct += best;
            total += n;
        }
        worst_acc = std::max(worst_acc, std::abs(cpc(real, gen) - correct / total));
    }
    ok = ok && worst <= 1e-9 && worst_acc <= 1e-9;
    return {ok, fmt("100 tables: max deviation %.1e; CPC vs matching accuracy %.1e", worst, worst_acc)};
}

// ---------------------------------------------------------------------------

ModelConfig ordering_config(ModelVariant v, std::uint64_t seed)
{
    auto cfg              = default_model_config(v);
    cfg.deterrence        = Deterrence::exponential;
    cfg.mlp.seed          = seed;
    cfg.mlp.epochs        = 30;
    cfg.mlp.learning_rate = v == ModelVariant::mfg ? 1e-2 : 1e-4;
    return cfg;
}

Outcome model_ordering()
{
    Timer t;
    const ModelVariant variants[] = {ModelVariant::g, ModelVariant::ng, ModelVariant::mfg, ModelVariant::dg};
    std::map<ModelVariant, double> mean;
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        auto data       = to_dataset(generate_synthetic(nonlinear_truth_spec(16, 36, seed)));
        const auto plan = stratified_split(data.regions(), seed);
        const auto idx  = data.region_indices(plan.train_region_ids);
        for (auto v : variants) {
            const auto model = train_model(data, idx, ordering_config(v, seed));
            mean[v] += evaluate_model(model, plan, data).pooled.cpc / 5.0;
        }
    }
    const double g = mean[ModelVariant::g], ng = mean[ModelVariant::ng], mfg = mean[ModelVariant::mfg],
                 dg = mean[ModelVariant::dg];
    const double secs = t.seconds();
    const bool ok     = dg > ng && ng > g && dg > mfg && mfg > g && dg - g >= 0.05 && secs < 600.0;
    return {ok, fmt("mean CPC G %.4f NG %.4f MFG %.4f DG %.4f (DG - G = %.4f), %.0f s", g, ng, mfg, dg, dg - g, secs)};
}

Outcome gravity_mfg_equivalence()
{
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    double worst = 0.0;
    for (int t = 0; t < 100; ++t) {
        const Location origin{"O", {45.0, 9.0}, 1.0, 1000.0, {}};
        std::vector<Location> candidates;
        const int n = 2 + static_cast<int>(rng() % 49);
        for (int k = 0; k < n; ++k) {
            candidates.push_back({"C" + std::to_string(k), {45.0 + 0.3 * (u(rng) - 0.5), 9.0 + 0.3 * (u(rng) - 0.5)},
                                  1.0, 50.0 + 5000.0 * u(rng), {}});
        }
        const auto det = t % 2 ? Deterrence::power : Deterrence::exponential;
        const GravityParams params{3.0 * u(rng), det == Deterrence::power ? -4.0 * u(rng) : -0.5 * u(rng), det};
        const auto obs = make_observation(origin, candidates, Eigen::VectorXd::Zero(n), det);
        auto mfg       = MlpParams<double>::zeros(2, std::vector<int>{});
        mfg.weights[0] << params.beta1, params.beta2;
        const Eigen::VectorXd p_mfg = softmax(forward(mfg, Eigen::MatrixXd(obs.x), 0.01));
        worst = std::max(worst, (p_mfg - gravity_probs(origin, candidates, params).probs).cwiseAbs().maxCoeff());
    }
    return {worst <= 1e-9, fmt("100 instances: max |p_MFG - p_G| = %.1e", worst)};
}

Outcome leave_one_group_out_check()
{
    Timer t;
    auto spec     = nonlinear_truth_spec(32, 36, 1);
    spec.n_groups = 4;
    const auto synth = generate_synthetic(spec);
    auto data        = to_dataset(synth);
    const auto cfg   = ordering_config(ModelVariant::dg, 1);

    const auto folds = leave_one_group_out(synth.groups, cfg, data);
    bool disjoint    = folds.size() == 4;
    double held_out  = 0.0;
    for (const auto& f : folds) {
        for (const auto& id : f.test_region_ids) {
            disjoint = disjoint && std::find(f.train_region_ids.begin(), f.train_region_ids.end(), id) ==
                                       f.train_region_ids.end();
        }
        held_out += f.report.pooled.cpc / static_cast<double>(folds.size());
    }
    const auto plan     = stratified_split(data.regions(), 1);
    const auto model    = train_model(data, data.region_indices(plan.train_region_ids), cfg);
    const double split  = evaluate_model(model, plan, data).pooled.cpc;
    const bool ok       = disjoint && std::abs(held_out - split) <= 0.05;
    return {ok, fmt("4 folds disjoint: %s; held-out DG CPC %.4f vs in-split %.4f, %.0f s", disjoint ? "yes" : "no",
                    held_out, split, t.seconds())};
}

Outcome shapley_correctness()
{
    std::mt19937_64 rng(8);
    std::normal_distribution<double> n01;
    auto randn = [&](Eigen::Index r, Eigen::Index c) {
        Eigen::MatrixXd m(r, c);
        for (auto& v : m.reshaped()) {
            v = n01(rng);
        }
        return m;
    };

    // 4-feature nonlinear model against coalition enumeration
    auto f4 = [](const Eigen::VectorXd& z) { return z[0] * z[1] * z[2] + std::tanh(z[3]) * z[0] + z[2] * z[2]; };
    const BatchScore batch4 = [&](const Eigen::MatrixXd& z) {
        Eigen::RowVectorXd s(z.cols());
        for (Eigen::Index c = 0; c < z.cols(); ++c) {
            s[c] = f4(z.col(c));
        }
        return s;
    };
    double worst_exact = 0.0;
    for (int t = 0; t < 5; ++t) {
        const Eigen::VectorXd x = randn(4, 1).col(0);
        const auto bg           = randn(4, 5);
        const auto a            = shapley_values(batch4, x, bg, {.exhaustive = true});
        for (int k = 0; k < 4; ++k) {
            double phi = 0.0;
            for (Eigen::Index b = 0; b < bg.cols(); ++b) {
                for (unsigned mask = 0; mask < 16; ++mask) {
                    if (mask & (1u << k)) {
                        continue;
                    }
                    Eigen::VectorXd without = bg.col(b);
                    for (int j = 0; j < 4; ++j) {
                        if (mask & (1u << j)) {
                            without[j] = x[j];
                        }
                    }
                    Eigen::VectorXd with = without;
                    with[k]              = x[k];
                    const int s          = std::popcount(mask);
                    phi += std::tgamma(s + 1.0) * std::tgamma(4.0 - s) / 24.0 * (f4(with) - f4(without));
                }
            }
            worst_exact = std::max(worst_exact, std::abs(a.phi[k] - phi / static_cast<double>(bg.cols())));
        }
    }

    // linear scores
    double worst_linear = 0.0;
    for (int t = 0; t < 5; ++t) {
        const Eigen::VectorXd w = randn(10, 1).col(0), x = randn(10, 1).col(0);
        const auto bg           = randn(10, 40);
        const BatchScore lin    = [&](const Eigen::MatrixXd& z) -> Eigen::RowVectorXd { return w.transpose() * z; };
        const auto a            = shapley_values(lin, x, bg, {.n_permutations = 200, .seed = 1});
        worst_linear = std::max(worst_linear, (a.phi - w.cwiseProduct(x - bg.rowwise().mean())).cwiseAbs().maxCoeff());
    }

    // local accuracy of a Deep Gravity network on real pair inputs
    auto data = to_dataset(generate_synthetic(nonlinear_truth_spec(2, 25, 4)));
    const std::vector<std::size_t> regions{0};
    auto cfg       = default_mlp_config(ModelVariant::dg);
    cfg.epochs     = 2;
    cfg.seed       = 3;
    const auto set = build_training_set(data, regions, ModelVariant::dg);
    const auto net = train(data, set, cfg).model;
    const BatchScore score = [&](const Eigen::MatrixXd& z) { return net.score(z); };
    const auto background  = sample_columns(set.regions[0].pair_inputs, 100, 1);
    const auto members     = data.members(1);
    double worst_ratio     = 0.0;
    for (int t = 0; t < 5; ++t) {
        const std::size_t dest[] = {members[static_cast<std::size_t>(t) + 1]};
        const Eigen::VectorXd x  = candidate_inputs(data, ModelVariant::dg, Deterrence::power, members[0], dest).col(0);
        const auto a = shapley_values(score, x, background, {.n_permutations = 200, .seed = static_cast<std::uint64_t>(t)});
        worst_ratio  = std::max(worst_ratio, a.residual / (std::abs(a.model_output - a.base_value) + 1e-6));
    }
    const bool ok = worst_exact <= 1e-9 && worst_linear <= 1e-6 && worst_ratio < 0.05;
    return {ok, fmt("exhaustive vs enumeration %.1e; linear %.1e; DG residual / |f - base| %.1e", worst_exact,
                    worst_linear, worst_ratio)};
}

int run_cli(const std::string& args)
{
    const std::string cmd = std::string("\"") + FLOWGEN_CLI_PATH + "\" " + args + " >/dev/null 2>&1";
    const int raw         = std::system(cmd.c_str());
    return WIFEXITED(raw) ? WEXITSTATUS(raw) : -1;
}

Outcome determinism()
{
    testing::TempDir dir("accept");
    auto pipeline = [&](const std::string& name) {
        const auto root = dir / name;
        auto q          = [](const std::filesystem::path& p) { return "\"" + p.string() + "\""; };
        const std::string data = " --locations " + q(root / "data/locations.csv") + " --features " +
                                 q(root / "data/features.csv") + " --flows " + q(root / "data/flows.csv");
        int status = run_cli("synth --generator nonlinear_truth --regions 10 --locations-per-region 16 --seed 3 --out-dir " +
                             q(root / "data"));
        status |= run_cli("train --variant dg --epochs 3 --lr 1e-4 --seed 5 --split-seed 9" + data + " --out " +
                          q(root / "dg.json"));
        status |= run_cli("train --variant g --split " + q(root / "dg.split.json") + data + " --out " +
                          q(root / "g.json"));
        status |= run_cli("evaluate --model " + q(root / "dg.json") + " --baseline " + q(root / "g.json") + " --split " +
                          q(root / "dg.split.json") + data + " --out-dir " + q(root / "eval"));
        return status;
    };
    const int s1 = pipeline("run1");
    const int s2 = pipeline("run2");
    bool same    = s1 == 0 && s2 == 0;
    int compared = 0;
    for (const char* file : {"data/locations.csv", "data/features.csv", "data/flows.csv", "data/truth.json",
                             "dg.split.json", "dg.json", "g.json", "eval/report.json", "eval/report.csv"}) {
        const auto a = testing::slurp(dir / "run1" / file), b = testing::slurp(dir / "run2" / file);
        same         = same && !a.empty() && a == b;
        ++compared;
    }
    return {same, fmt("%d files byte-identical across two runs (exit codes %d, %d)", compared, s1, s2)};
}

Outcome split_balance()
{
    std::mt19937_64 rng(10);
    std::uniform_real_distribution<double> pop(1.0, 1e6);
    std::uniform_int_distribution<int> count(10, 200);
    int worst = 0;
    bool ok   = true;
    for (int t = 0; t < 100; ++t) {
        std::vector<RegionOfInterest> regions(static_cast<std::size_t>(count(rng)));
        for (std::size_t k = 0; k < regions.size(); ++k) {
            regions[k].grid_index       = {static_cast<int>(k % 15), static_cast<int>(k / 15)};
            regions[k].total_population = t % 10 == 0 ? std::floor(pop(rng) / 2e5) : pop(rng);
            regions[k].location_ids     = {"L" + std::to_string(k)};
        }
        const auto plan = stratified_split(regions, rng());
        // recount deciles from scratch: rank by population then grid index
        std::vector<std::size_t> order(regions.size());
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            if (regions[a].total_population != regions[b].total_population) {
                return regions[a].total_population < regions[b].total_population;
            }
            return regions[a].grid_index < regions[b].grid_index;
        });
        std::map<std::string, int> decile;
        for (std::size_t r = 0; r < order.size(); ++r) {
            decile[regions[order[r]].id()] = static_cast<int>(r * 10 / order.size()) + 1;
        }
        std::map<int, std::pair<int, int>> counts;
        for (const auto& id : plan.train_region_ids) {
            ++counts[decile.at(id)].first;
        }
        for (const auto& id : plan.test_region_ids) {
            ++counts[decile.at(id)].second;
        }
        for (const auto& [d, c] : counts) {
            worst = std::max(worst, std::abs(c.first - c.second));
        }
        ok = ok && plan.train_region_ids.size() + plan.test_region_ids.size() == regions.size();
    }
    return {ok && worst <= 1, fmt("100 random region sets: max per-decile |train - test| = %d", worst)};
}

} // namespace

int main()
{
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"gravity parameter recovery", gravity_recovery},
        {"gradient exactness through the DG stack", dg_gradient},
        {"conservation and normalization", conservation},
        {"metric oracle equivalence", metric_oracle},
        {"model ordering on nonlinear synthetic data", model_ordering},
        {"gravity / MFG equivalence", gravity_mfg_equivalence},
        {"leave-one-group-out harness", leave_one_group_out_check},
        {"Shapley correctness", shapley_correctness},
        {"determinism", determinism},
        {"stratified split balance", split_balance},
    };
    int failed = 0;
    for (std::size_t k = 0; k < criteria.size(); ++k) {
        Outcome o;
        try {
            o = criteria[k].second();
        }
        catch (const std::exception& e) {
            o = {false, std::string("threw: ") + e.what()};
        }
        failed += !o.pass;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", k + 1, criteria[k].first.c_str(), o.detail.c_str());
        std::fflush(stdout);
    }
    return failed == 0 ? 0 : 1;
}
