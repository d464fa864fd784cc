#include "flowgen/dataset.hpp"
#include "flowgen/error.hpp"
#include "flowgen/mlp.hpp"
#include "flowgen/neural.hpp"
#include "flowgen/synthetic.hpp"

#include <doctest.h>

#include <cmath>
#include <random>

using namespace flowgen;

namespace {

/// One region holding every location (the cell is wide enough), random features.
Dataset single_region(std::vector<Location> locs, std::vector<FlowRecord> flows, std::uint64_t seed = 1,
                      bool identical_features = false)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(1.0, 20.0);
    std::map<std::string, GeoVector> raw;
    GeoVector shared;
    for (auto& v : shared) {
        v = u(rng);
    }
    for (const auto& l : locs) {
        GeoVector g = shared;
        if (!identical_features) {
            for (auto& v : g) {
                v = u(rng);
            }
        }
        raw[l.id] = g;
    }
    auto tess = build_tessellation(locs, 1000.0);
    REQUIRE(tess.cells.size() == 1);
    return Dataset(std::move(locs), raw, FlowTable::from_records(std::move(flows)), std::move(tess));
}

std::vector<Location> line_of(int n, double step_deg = 0.01)
{
    std::vector<Location> out;
    for (int k = 0; k < n; ++k) {
        char id[16];
        std::snprintf(id, sizeof id, "L%03d", k);
        out.push_back({id, {0.0, step_deg * k}, 1.0, 100.0, {}});
    }
    return out;
}

double max_abs(const MlpParams<double>& p)
{
    return p.flatten().cwiseAbs().maxCoeff();
}

TrainBatch random_batch(std::mt19937_64& rng, int dim, std::vector<int> sizes)
{
    std::normal_distribution<double> n01;
    std::uniform_real_distribution<double> u(0.0, 1.0);
    TrainBatch b;
    b.offsets.push_back(0);
    for (int s : sizes) {
        b.offsets.push_back(b.offsets.back() + s);
    }
    b.inputs  = Eigen::MatrixXd(dim, b.offsets.back());
    b.targets = Eigen::VectorXd(b.offsets.back());
    for (auto& v : b.inputs.reshaped()) {
        v = n01(rng);
    }
    for (std::size_t o = 0; o < sizes.size(); ++o) {
        auto t = b.targets.segment(b.offsets[o], sizes[o]);
        for (auto& v : t) {
            v = u(rng);
        }
        t /= t.sum();
    }
    return b;
}

} // namespace

TEST_CASE("forward pass")
{
    auto p = MlpParams<double>::zeros(1, std::vector<int>{1});
    p.weights[0](0, 0) = 1.0;
    p.weights[1](0, 0) = 1.0;
    CHECK(forward(p, Eigen::MatrixXd::Constant(1, 1, -2.0), 0.01)(0) == doctest::Approx(-0.02).epsilon(1e-14));

    std::mt19937_64 rng(1);
    const auto zero = MlpParams<double>::zeros(39, deep_gravity_hidden_dims());
    const Eigen::MatrixXd x = Eigen::MatrixXd::Random(39, 7);
    CHECK(forward(zero, x, 0.01).isZero(0.0));

    CHECK(deep_gravity_hidden_dims().size() == 15);
    CHECK(default_mlp_config(ModelVariant::mfg).hidden_dims.empty());
    CHECK(default_mlp_config(ModelVariant::dg).input_dim == 39);
    CHECK(default_mlp_config(ModelVariant::dg_knn).input_dim == 77);
    CHECK_THROWS(forward(zero, Eigen::MatrixXd::Zero(3, 1), 0.01));
}

TEST_CASE("softmax")
{
    CHECK(softmax(Eigen::Vector3d::Zero()).isApprox(Eigen::Vector3d::Constant(1.0 / 3.0), 1e-15));
    for (double c : {-800.0, 0.0, 3.5, 900.0}) {
        const auto p = softmax(Eigen::Vector2d(c, c + std::log(3.0)));
        CHECK(std::abs(p[0] - 0.25) < 1e-12);
        CHECK(std::abs(p[1] - 0.75) < 1e-12);
    }
    CHECK(softmax(Eigen::VectorXd::Constant(1, 42.0))[0] == 1.0);

    std::mt19937_64 rng(2);
    std::normal_distribution<double> n(0.0, 5.0);
    Eigen::VectorXd s(20);
    for (auto& v : s) {
        v = n(rng);
    }
    const Eigen::VectorXd p = softmax(s);
    CHECK(std::abs(p.sum() - 1.0) < 1e-12);
    CHECK((softmax(Eigen::VectorXd(s.array() + 17.25)) - p).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("cross-entropy loss")
{
    SUBCASE("equal scores, one-hot target")
    {
        TrainBatch b;
        b.offsets = {0, 2};
        b.inputs  = Eigen::MatrixXd::Ones(3, 2);
        b.targets = Eigen::Vector2d(1.0, 0.0);
        std::mt19937_64 rng(3);
        const auto p = glorot_init<double>(3, std::vector<int>{4}, 3);
        CHECK(loss_and_gradient(p, b, 0.01).loss == doctest::Approx(std::log(2.0)).epsilon(1e-14));
    }
    SUBCASE("targets at the model probabilities give a zero gradient")
    {
        std::mt19937_64 rng(4);
        auto b       = random_batch(rng, 5, {4, 6});
        const auto p = glorot_init<double>(5, std::vector<int>{4, 4}, 4);
        const Eigen::RowVectorXd s = forward(p, b.inputs, 0.01);
        for (std::size_t o = 0; o + 1 < b.offsets.size(); ++o) {
            const auto len = b.offsets[o + 1] - b.offsets[o];
            b.targets.segment(b.offsets[o], len) = softmax(s.segment(b.offsets[o], len));
        }
        CHECK(max_abs(loss_and_gradient(p, b, 0.01).gradient) < 1e-14);
    }
    SUBCASE("dimension mismatch")
    {
        std::mt19937_64 rng(5);
        const auto b = random_batch(rng, 4, {3});
        const auto p = glorot_init<double>(5, std::vector<int>{4}, 1);
        try {
            loss_and_gradient(p, b, 0.01);
            FAIL("expected DimensionMismatch");
        }
        catch (const Error& e) {
            CHECK(e.code() == ErrorCode::DimensionMismatch);
        }
    }
}

TEST_CASE("analytic gradient matches central differences for every input width")
{
    std::mt19937_64 rng(6);
    for (auto v : {ModelVariant::g, ModelVariant::ng, ModelVariant::dg_sum, ModelVariant::dg, ModelVariant::dg_knn}) {
        for (const std::vector<int>& hidden : {std::vector<int>{}, std::vector<int>{4, 4}}) {
            const int dim = input_dimension(v);
            const auto b  = random_batch(rng, dim, {3, 5, 2});
            auto p        = glorot_init<double>(dim, hidden, rng());
            // nonzero biases so the bias gradients are exercised too
            for (auto& bias : p.biases) {
                bias.setRandom();
                bias *= 0.3;
            }
            const auto analytic     = loss_and_gradient(p, b, 0.01).gradient.flatten();
            const Eigen::VectorXd theta = p.flatten();
            Eigen::VectorXd numeric(theta.size());
            const double h = 1e-5;
            for (Eigen::Index k = 0; k < theta.size(); ++k) {
                Eigen::VectorXd up = theta, down = theta;
                up[k] += h;
                down[k] -= h;
                auto pu = p, pd = p;
                pu.assign(up);
                pd.assign(down);
                numeric[k] = (loss_and_gradient(pu, b, 0.01).loss - loss_and_gradient(pd, b, 0.01).loss) / (2 * h);
            }
            CAPTURE(dim);
            CAPTURE(hidden.size());
            CHECK((numeric - analytic).cwiseAbs().maxCoeff() / analytic.cwiseAbs().maxCoeff() < 1e-5);
        }
    }
}

TEST_CASE("RMSprop with momentum")
{
    SUBCASE("single step")
    {
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(1), v = theta, buf = theta;
        const Eigen::VectorXd g = Eigen::VectorXd::Ones(1);
        rmsprop_update(theta, g, v, buf, {0.1, 0.0, 0.99, 1e-8});
        CHECK(theta[0] == doctest::Approx(-0.1 / std::sqrt(0.01 + 1e-8)).epsilon(1e-12));
        CHECK(std::abs(theta[0] + 1.0) < 1e-3);
    }
    SUBCASE("momentum accumulates")
    {
        // with rho = 1 the normalizer stays at sqrt(eps), isolating the momentum buffer
        const RmsPropConfig fixed{0.1, 0.9, 1.0, 1e-8};
        Eigen::VectorXd theta = Eigen::VectorXd::Zero(1), v = theta, buf = theta;
        const Eigen::VectorXd g = Eigen::VectorXd::Constant(1, 0.5);
        rmsprop_update(theta, g, v, buf, fixed);
        const double first = -theta[0];
        rmsprop_update(theta, g, v, buf, fixed);
        const double second = -theta[0] - first;
        CHECK(second / first == doctest::Approx(1.9).epsilon(1e-12));

        const RmsPropConfig normal{0.1, 0.9, 0.99, 1e-8};
        theta.setZero();
        v.setZero();
        buf.setZero();
        rmsprop_update(theta, g, v, buf, normal);
        const double f1 = -theta[0];
        rmsprop_update(theta, g, v, buf, normal);
        const double f2 = -theta[0] - f1;
        const double v1 = 0.01 * 0.25, v2 = 0.99 * v1 + 0.01 * 0.25;
        CHECK(f2 / f1 == doctest::Approx(0.9 + std::sqrt((v1 + 1e-8) / (v2 + 1e-8))).epsilon(1e-12));
    }
    SUBCASE("zero gradient leaves parameters unchanged")
    {
        auto p        = glorot_init<double>(5, std::vector<int>{3}, 9);
        const auto p0 = p;
        RmsPropState<double> state(p);
        rmsprop_step(p, MlpParams<double>::zeros_like(p), state, {});
        CHECK(p.flatten() == p0.flatten());
    }
}

TEST_CASE("candidate sets and negative sampling")
{
    SUBCASE("small region: every other location")
    {
        const auto data = single_region(line_of(10), {{"L000", "L003", 7.0}});
        const std::vector<std::size_t> regions{0};
        const auto set  = build_training_set(data, regions, ModelVariant::dg);
        std::mt19937_64 rng(1);
        const auto batches = make_batches(data, set, rng, 64, 512);
        REQUIRE(batches.size() == 1);
        REQUIRE(batches[0].origin_ids.size() == 1);
        CHECK(batches[0].candidate_ids[0].size() == 9);
        CHECK(batches[0].targets.sum() == doctest::Approx(1.0).epsilon(1e-15));
        CHECK((batches[0].targets.array() == 0.0).count() == 8);
    }
    SUBCASE("observed destinations are never dropped")
    {
        const auto locs = line_of(700, 0.0005);
        std::vector<FlowRecord> flows;
        for (int k = 1; k <= 600; ++k) {
            flows.push_back({"L000", locs[static_cast<std::size_t>(k)].id, 1.0 + k % 3});
        }
        flows.push_back({"L001", "L002", 1.0});
        const auto data = single_region(locs, flows);
        const std::vector<std::size_t> regions{0};
        const auto set  = build_training_set(data, regions, ModelVariant::ng);
        std::mt19937_64 rng(2);
        const auto batches = make_batches(data, set, rng, 64, 512);
        REQUIRE(batches.size() == 1);
        for (std::size_t o = 0; o < batches[0].origin_ids.size(); ++o) {
            const auto len = batches[0].offsets[o + 1] - batches[0].offsets[o];
            const auto t   = batches[0].targets.segment(batches[0].offsets[o], len);
            CHECK(t.sum() == doctest::Approx(1.0).epsilon(1e-12));
            if (batches[0].origin_ids[o] == "L000") {
                CHECK(len == 600);
                CHECK((t.array() > 0.0).count() == 600);
            }
            else {
                CHECK(len == 512);
                CHECK((t.array() > 0.0).count() == 1);
            }
        }
    }
    SUBCASE("fixed seed gives identical batch streams")
    {
        const auto synth = generate_synthetic({.n_regions = 3, .locations_per_region = 30, .seed = 4});
        const auto data  = to_dataset(synth);
        const std::vector<std::size_t> regions{0, 1, 2};
        const auto set = build_training_set(data, regions, ModelVariant::ng);
        std::mt19937_64 a(77), b(77);
        for (int epoch = 0; epoch < 3; ++epoch) {
            const auto x = make_batches(data, set, a, 16, 10);
            const auto y = make_batches(data, set, b, 16, 10);
            REQUIRE(x.size() == y.size());
            for (std::size_t k = 0; k < x.size(); ++k) {
                CHECK(x[k].origin_ids == y[k].origin_ids);
                CHECK(x[k].candidate_ids == y[k].candidate_ids);
                CHECK(x[k].inputs == y[k].inputs);
                CHECK(x[k].targets == y[k].targets);
            }
        }
    }
}

TEST_CASE("training")
{
    const auto synth = generate_synthetic(nonlinear_truth_spec(5, 36, 3));
    const auto data  = to_dataset(synth);
    const std::vector<std::size_t> regions{0, 1, 2, 3, 4};

    SUBCASE("zero epochs return the initialization")
    {
        const auto set = build_training_set(data, regions, ModelVariant::mfg);
        auto cfg       = default_mlp_config(ModelVariant::mfg);
        cfg.epochs     = 0;
        const auto r0  = train(data, set, cfg);
        CHECK(r0.epoch_loss.empty());
        cfg.epochs        = 1;
        cfg.learning_rate = 0.0;
        const auto r1     = train(data, set, cfg);
        CHECK(r0.model.params.flatten() == r1.model.params.flatten());
    }
    SUBCASE("loss decreases at the default learning rate and training is deterministic")
    {
        const auto set = build_training_set(data, regions, ModelVariant::dg);
        auto cfg       = default_mlp_config(ModelVariant::dg);
        cfg.seed       = 11;
        const auto a   = train(data, set, cfg);
        REQUIRE(a.epoch_loss.size() == 20);
        int non_increasing = 0;
        for (std::size_t e = 1; e < a.epoch_loss.size(); ++e) {
            non_increasing += a.epoch_loss[e] <= a.epoch_loss[e - 1];
        }
        CHECK(non_increasing >= 16);

        cfg.epochs   = 3;
        const auto b = train(data, set, cfg);
        const auto c = train(data, set, cfg);
        CHECK(b.epoch_loss.size() == 3);
        CHECK(b.epoch_loss == c.epoch_loss);
        CHECK(b.model.params.flatten() == c.model.params.flatten());

        for (std::size_t r = 0; r < regions.size(); ++r) {
            const auto members = data.members(r);
            std::vector<double> outflow(members.size());
            for (std::size_t k = 0; k < members.size(); ++k) {
                outflow[k] = 10.0 + 3.0 * static_cast<double>(k);
            }
            const auto flows = predict_flows(b.model, data, r, outflow);
            for (std::size_t k = 0; k < members.size(); ++k) {
                CHECK(std::abs(flows.outflow(data.locations()[members[k]].id) - outflow[k]) <= 1e-9 * outflow[k]);
            }
        }
    }
}

TEST_CASE("prediction")
{
    const auto train_data = to_dataset(generate_synthetic({.n_regions = 2, .locations_per_region = 16, .seed = 8}));
    const std::vector<std::size_t> regions{0, 1};
    auto cfg   = default_mlp_config(ModelVariant::dg);
    cfg.epochs = 2;
    cfg.seed   = 5;
    const auto model = train(train_data, build_training_set(train_data, regions, ModelVariant::dg), cfg).model;

    SUBCASE("two locations")
    {
        const auto data      = single_region(line_of(2), {});
        const double out[]   = {12.0, 5.0};
        const auto flows     = predict_flows(model, data, 0, out);
        REQUIRE(flows.size() == 2);
        CHECK(flows.records()[0].flow == doctest::Approx(12.0).epsilon(1e-12));
        CHECK(flows.records()[1].flow == doctest::Approx(5.0).epsilon(1e-12));
    }
    SUBCASE("symmetric candidates are equally likely")
    {
        const auto data    = single_region(line_of(3), {}, 1, true);
        const double out[] = {0.0, 9.0, 0.0};
        const auto flows   = predict_flows(model, data, 0, out);
        REQUIRE(flows.size() == 2);
        CHECK(flows.records()[0].flow == doctest::Approx(4.5).epsilon(1e-9));
        CHECK(flows.records()[1].flow == doctest::Approx(4.5).epsilon(1e-9));
    }
    SUBCASE("DG-Knn needs prepared neighbor averages")
    {
        auto knn = model;
        knn.variant = ModelVariant::dg_knn;
        knn.knn_k   = 3;
        const auto data     = single_region(line_of(5), {});
        const double out[]  = {1, 1, 1, 1, 1};
        try {
            predict_flows(knn, data, 0, out);
            FAIL("expected MissingFeatures");
        }
        catch (const Error& e) {
            CHECK(e.code() == ErrorCode::MissingFeatures);
        }
    }
}
