#pragma once

// Dense feed-forward scoring network: LeakyReLU hidden layers followed by a
// linear scalar score row. Columns of the input matrix are samples.

#include <Eigen/Core>

#include <cmath>
#include <cstdint>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

namespace flowgen {

template <typename Scalar> using MatrixX = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;
template <typename Scalar> using VectorX = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
template <typename Scalar> using RowVectorX = Eigen::Matrix<Scalar, 1, Eigen::Dynamic>;

/// Max-shifted softmax of a score vector.
template <typename Derived>
VectorX<typename Derived::Scalar> softmax(const Eigen::MatrixBase<Derived>& scores)
{
    using Scalar = typename Derived::Scalar;
    const auto s       = scores.derived().reshaped();
    const Scalar shift = s.maxCoeff();
    VectorX<Scalar> e  = (s.array() - shift).exp().matrix();
    return e / e.sum();
}

template <typename Derived>
typename Derived::Scalar log_sum_exp(const Eigen::MatrixBase<Derived>& scores)
{
    using std::exp;
    using std::log;
    const auto s      = scores.derived().reshaped();
    const auto shift  = s.maxCoeff();
    return shift + log((s.array() - shift).exp().sum());
}

template <typename Derived>
auto leaky_relu(const Eigen::MatrixBase<Derived>& z, typename Derived::Scalar slope)
{
    return z.derived().unaryExpr([slope](auto u) { return u >= 0 ? u : slope * u; });
}

/// Weights W^(h) and biases b^(h) of every affine layer; the last layer has one row.
template <typename Scalar> struct MlpParams {
    std::vector<MatrixX<Scalar>> weights;
    std::vector<VectorX<Scalar>> biases;

    Eigen::Index input_dim() const { return weights.empty() ? 0 : weights.front().cols(); }
    std::size_t depth() const { return weights.size(); }

    std::vector<int> hidden_dims() const
    {
        std::vector<int> dims;
        for (std::size_t h = 0; h + 1 < weights.size(); ++h) {
            dims.push_back(static_cast<int>(weights[h].rows()));
        }
        return dims;
    }

    Eigen::Index size() const
    {
        Eigen::Index n = 0;
        for (std::size_t h = 0; h < weights.size(); ++h) {
            n += weights[h].size() + biases[h].size();
        }
        return n;
    }

    static MlpParams zeros(Eigen::Index input_dim, std::span<const int> hidden)
    {
        MlpParams p;
        Eigen::Index fan_in = input_dim;
        for (int width : hidden) {
            p.weights.push_back(MatrixX<Scalar>::Zero(width, fan_in));
            p.biases.push_back(VectorX<Scalar>::Zero(width));
            fan_in = width;
        }
        p.weights.push_back(MatrixX<Scalar>::Zero(1, fan_in));
        p.biases.push_back(VectorX<Scalar>::Zero(1));
        return p;
    }

    static MlpParams zeros_like(const MlpParams& other)
    {
        MlpParams p;
        for (std::size_t h = 0; h < other.weights.size(); ++h) {
            p.weights.push_back(MatrixX<Scalar>::Zero(other.weights[h].rows(), other.weights[h].cols()));
            p.biases.push_back(VectorX<Scalar>::Zero(other.biases[h].size()));
        }
        return p;
    }

    /// Calls f(block) on every weight matrix and bias vector in layer order.
    template <typename F> void for_each_block(F&& f)
    {
        for (std::size_t h = 0; h < weights.size(); ++h) {
            f(weights[h]);
            f(biases[h]);
        }
    }

    bool all_finite() const
    {
        for (std::size_t h = 0; h < weights.size(); ++h) {
            if (!weights[h].allFinite() || !biases[h].allFinite()) {
                return false;
            }
        }
        return true;
    }

    VectorX<Scalar> flatten() const
    {
        VectorX<Scalar> flat(size());
        Eigen::Index at = 0;
        for (std::size_t h = 0; h < weights.size(); ++h) {
            flat.segment(at, weights[h].size()) = weights[h].reshaped();
            at += weights[h].size();
            flat.segment(at, biases[h].size()) = biases[h];
            at += biases[h].size();
        }
        return flat;
    }

    void assign(const VectorX<Scalar>& flat)
    {
        if (flat.size() != size()) {
            throw std::invalid_argument("flat parameter vector has wrong length");
        }
        Eigen::Index at = 0;
        for (std::size_t h = 0; h < weights.size(); ++h) {
            weights[h].reshaped() = flat.segment(at, weights[h].size());
            at += weights[h].size();
            biases[h] = flat.segment(at, biases[h].size());
            at += biases[h].size();
        }
    }
};

/// Glorot-uniform weights in ±sqrt(6 / (fan_in + fan_out)), zero biases.
template <typename Scalar>
MlpParams<Scalar> glorot_init(Eigen::Index input_dim, std::span<const int> hidden, std::uint64_t seed)
{
    auto p = MlpParams<Scalar>::zeros(input_dim, hidden);
    std::mt19937_64 rng(seed);
    for (auto& w : p.weights) {
        const double limit = std::sqrt(6.0 / static_cast<double>(w.rows() + w.cols()));
        std::uniform_real_distribution<double> u(-limit, limit);
        for (Eigen::Index c = 0; c < w.cols(); ++c) {
            for (Eigen::Index r = 0; r < w.rows(); ++r) {
                w(r, c) = static_cast<Scalar>(u(rng));
            }
        }
    }
    return p;
}

/// Pre-activations of every hidden layer, kept for the backward pass.
template <typename Scalar> struct ForwardCache {
    std::vector<MatrixX<Scalar>> pre;
};

/// Scores (1 x N) for the N input columns of `x`.
template <typename Scalar, typename Derived>
RowVectorX<Scalar> forward(const MlpParams<Scalar>& params, const Eigen::MatrixBase<Derived>& x, Scalar slope,
                           ForwardCache<Scalar>* cache = nullptr)
{
    if (x.rows() != params.input_dim()) {
        throw std::invalid_argument("input dimension does not match the network");
    }
    if (cache) {
        cache->pre.clear();
    }
    const std::size_t hidden = params.depth() - 1;
    MatrixX<Scalar> a        = x;
    for (std::size_t h = 0; h < hidden; ++h) {
        MatrixX<Scalar> z = params.weights[h] * a;
        z.colwise() += params.biases[h];
        a = leaky_relu(z, slope);
        if (cache) {
            cache->pre.push_back(std::move(z));
        }
    }
    RowVectorX<Scalar> s = params.weights.back() * a;
    s.array() += params.biases.back()(0);
    return s;
}

/// Gradient of a loss with respect to all parameters, given dLoss/dScore for
/// every column and the cache of the matching forward pass.
template <typename Scalar, typename DerivedX, typename DerivedS>
MlpParams<Scalar> backward(const MlpParams<Scalar>& params, const Eigen::MatrixBase<DerivedX>& x,
                           const ForwardCache<Scalar>& cache, const Eigen::MatrixBase<DerivedS>& dscore,
                           Scalar slope)
{
    auto grad                = MlpParams<Scalar>::zeros_like(params);
    const std::size_t hidden = params.depth() - 1;
    auto activation          = [&](std::size_t h) -> MatrixX<Scalar> {
        return h == 0 ? MatrixX<Scalar>(x) : MatrixX<Scalar>(leaky_relu(cache.pre[h - 1], slope));
    };

    const RowVectorX<Scalar> ds = dscore;
    MatrixX<Scalar> below       = activation(hidden);
    grad.weights.back().noalias() = ds * below.transpose();
    grad.biases.back()(0)         = ds.sum();
    MatrixX<Scalar> delta         = params.weights.back().transpose() * ds;
    for (std::size_t h = hidden; h-- > 0;) {
        delta.array() *= cache.pre[h].array().unaryExpr([slope](Scalar u) { return u >= 0 ? Scalar(1) : slope; });
        below = activation(h);
        grad.weights[h].noalias() = delta * below.transpose();
        grad.biases[h]            = delta.rowwise().sum();
        if (h > 0) {
            delta = params.weights[h].transpose() * delta;
        }
    }
    return grad;
}

struct RmsPropConfig {
    double learning_rate = 5e-6;
    double momentum      = 0.9;
    double rho           = 0.99;
    double eps           = 1e-8;
};

/// One RMSprop-with-momentum update of a parameter block:
/// v <- rho v + (1 - rho) g^2; buf <- mu buf + g / sqrt(v + eps); theta <- theta - lr buf.
template <typename P, typename G, typename V, typename B>
void rmsprop_update(Eigen::DenseBase<P>& theta, const Eigen::DenseBase<G>& grad, Eigen::DenseBase<V>& square_avg,
                    Eigen::DenseBase<B>& buffer, const RmsPropConfig& cfg)
{
    using Scalar = typename P::Scalar;
    const auto g = grad.derived().array();
    square_avg.derived().array() =
        Scalar(cfg.rho) * square_avg.derived().array() + Scalar(1.0 - cfg.rho) * g.square();
    buffer.derived().array() =
        Scalar(cfg.momentum) * buffer.derived().array() + g / (square_avg.derived().array() + Scalar(cfg.eps)).sqrt();
    theta.derived().array() -= Scalar(cfg.learning_rate) * buffer.derived().array();
}

template <typename Scalar> struct RmsPropState {
    MlpParams<Scalar> square_avg;
    MlpParams<Scalar> buffer;

    explicit RmsPropState(const MlpParams<Scalar>& like)
        : square_avg(MlpParams<Scalar>::zeros_like(like))
        , buffer(MlpParams<Scalar>::zeros_like(like))
    {
    }
};

template <typename Scalar>
void rmsprop_step(MlpParams<Scalar>& params, const MlpParams<Scalar>& grad, RmsPropState<Scalar>& state,
                  const RmsPropConfig& cfg)
{
    for (std::size_t h = 0; h < params.depth(); ++h) {
        rmsprop_update(params.weights[h], grad.weights[h], state.square_avg.weights[h], state.buffer.weights[h],
                       cfg);
        rmsprop_update(params.biases[h], grad.biases[h], state.square_avg.biases[h], state.buffer.biases[h], cfg);
    }
}

} // namespace flowgen
