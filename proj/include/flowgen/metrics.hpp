#pragma once

// Similarity and error measures between real and generated flows. The vector
// forms accept any Eigen dense expression; the AlignedFlows forms apply them
// to two flow tables aligned over the union of their OD pairs.

#include "flowgen/error.hpp"
#include "flowgen/geodata.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>
#include <utility>
#include <vector>

namespace flowgen {

/// Common Part of Commuters: 2 sum min(g, r) / (sum g + sum r).
template <typename DerivedR, typename DerivedG>
double cpc(const Eigen::MatrixBase<DerivedR>& real, const Eigen::MatrixBase<DerivedG>& generated)
{
    const double denom = real.sum() + generated.sum();
    if (!(denom > 0.0)) {
        throw Error(ErrorCode::AllZeroFlows, "CPC of two all-zero flow vectors");
    }
    return 2.0 * real.derived().array().min(generated.derived().array()).sum() / denom;
}

/// Product-moment correlation.
template <typename DerivedR, typename DerivedG>
double pearson(const Eigen::MatrixBase<DerivedR>& real, const Eigen::MatrixBase<DerivedG>& generated)
{
    const auto n = static_cast<double>(real.size());
    const Eigen::ArrayXd a = real.derived().reshaped().array() - real.sum() / n;
    const Eigen::ArrayXd b = generated.derived().reshaped().array() - generated.sum() / n;
    const double va = a.square().sum();
    const double vb = b.square().sum();
    if (!(va > 0.0) || !(vb > 0.0)) {
        throw Error(ErrorCode::ZeroVariance, "correlation of a constant vector");
    }
    return (a * b).sum() / std::sqrt(va * vb);
}

/// RMSE divided by the range of values over both vectors.
template <typename DerivedR, typename DerivedG>
double nrmse(const Eigen::MatrixBase<DerivedR>& real, const Eigen::MatrixBase<DerivedG>& generated)
{
    const double hi    = std::max(real.maxCoeff(), generated.maxCoeff());
    const double lo    = std::min(real.minCoeff(), generated.minCoeff());
    const double range = hi - lo;
    if (!(range > 0.0)) {
        throw Error(ErrorCode::ZeroRange, "NRMSE of constant vectors");
    }
    const double rmse = std::sqrt((real - generated).squaredNorm() / static_cast<double>(real.size()));
    return rmse / range;
}

/// Kullback-Leibler divergence in nats, with 0 ln(0/q) = 0. Returns +infinity
/// when q vanishes somewhere p does not.
template <typename DerivedP, typename DerivedQ>
double kld(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q)
{
    double sum = 0.0;
    for (Eigen::Index k = 0; k < p.size(); ++k) {
        const double pk = p.derived().coeff(k);
        const double qk = q.derived().coeff(k);
        if (pk > 0.0) {
            if (!(qk > 0.0)) {
                return std::numeric_limits<double>::infinity();
            }
            sum += pk * std::log(pk / qk);
        }
    }
    return sum;
}

/// Jensen-Shannon divergence with base-2 logarithms, in [0, 1].
template <typename DerivedP, typename DerivedQ>
double jsd(const Eigen::MatrixBase<DerivedP>& p, const Eigen::MatrixBase<DerivedQ>& q)
{
    const Eigen::VectorXd m = 0.5 * (p.derived().reshaped() + q.derived().reshaped());
    const double nats       = 0.5 * kld(p.derived().reshaped(), m) + 0.5 * kld(q.derived().reshaped(), m);
    return std::clamp(nats / std::log(2.0), 0.0, 1.0);
}

/// Divides a nonnegative vector by its total.
template <typename Derived>
Eigen::VectorXd to_distribution(const Eigen::MatrixBase<Derived>& values)
{
    const double total = values.sum();
    if (!(total > 0.0)) {
        throw Error(ErrorCode::AllZeroFlows, "distribution of all-zero flows");
    }
    return values.derived().reshaped() / total;
}

struct AlignedFlows {
    std::vector<std::pair<std::string, std::string>> pairs;
    Eigen::VectorXd real;
    Eigen::VectorXd generated;
};

/// Union alignment: every pair present in either table appears once, ordered
/// by (origin, destination), the absent side filled with 0.
AlignedFlows align(const FlowTable& real, const FlowTable& generated);
/// Same alignment over already aligned data (pairs are re-merged).
AlignedFlows align(const AlignedFlows& aligned);

inline double cpc(const AlignedFlows& a) { return cpc(a.real, a.generated); }
inline double pearson(const AlignedFlows& a) { return pearson(a.real, a.generated); }
inline double nrmse(const AlignedFlows& a) { return nrmse(a.real, a.generated); }
/// JSD between the OD distributions of the real and the generated flows.
inline double jsd(const AlignedFlows& a) { return jsd(to_distribution(a.real), to_distribution(a.generated)); }

/// Flow values in table order divided by the grand total.
Eigen::VectorXd flows_to_distribution(const FlowTable& table);

struct MetricValues {
    double cpc     = std::numeric_limits<double>::quiet_NaN();
    double pearson = std::numeric_limits<double>::quiet_NaN();
    double nrmse   = std::numeric_limits<double>::quiet_NaN();
    double jsd     = std::numeric_limits<double>::quiet_NaN();
};

/// All four measures; an undefined measure (zero variance, zero range, no flow) is NaN.
MetricValues compute_metrics(const AlignedFlows& aligned);

} // namespace flowgen
