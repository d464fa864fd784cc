#include "flowgen/gravity.hpp"
#include "flowgen/error.hpp"
#include "flowgen/log.hpp"
#include "flowgen/mlp.hpp"

#include <cmath>

namespace flowgen {

namespace {

Eigen::Matrix2Xd design_matrix(const Location& origin, std::span<const Location> candidates, Deterrence deterrence)
{
    if (candidates.empty()) {
        throw Error(ErrorCode::EmptyInput, "origin " + origin.id + " has no candidate destinations");
    }
    Eigen::Matrix2Xd x(2, static_cast<Eigen::Index>(candidates.size()));
    for (std::size_t k = 0; k < candidates.size(); ++k) {
        const auto& c = candidates[k];
        if (!(c.population > 0.0)) {
            throw Error(ErrorCode::ZeroPopulationCandidate, "candidate " + c.id + " has zero population");
        }
        const double r = distance(origin, c);
        if (deterrence == Deterrence::power && !(r > 0.0)) {
            throw Error(ErrorCode::ZeroDistancePowerLaw, "candidate " + c.id + " is at zero distance from " +
                                                             origin.id);
        }
        x(0, static_cast<Eigen::Index>(k)) = std::log(c.population);
        x(1, static_cast<Eigen::Index>(k)) = deterrence == Deterrence::power ? std::log(r) : r;
    }
    return x;
}

} // namespace

Eigen::VectorXd gravity_log_scores(const Location& origin, std::span<const Location> candidates,
                                   const GravityParams& params)
{
    return design_matrix(origin, candidates, params.deterrence).transpose() * params.beta();
}

DestinationProbabilities gravity_probs(const Location& origin, std::span<const Location> candidates,
                                       const GravityParams& params)
{
    DestinationProbabilities out;
    out.origin_id = origin.id;
    for (const auto& c : candidates) {
        out.destination_ids.push_back(c.id);
    }
    out.probs = softmax(gravity_log_scores(origin, candidates, params));
    return out;
}

std::vector<std::pair<std::string, double>> generate_flows(const Location& origin,
                                                           std::span<const Location> candidates,
                                                           const GravityParams& params, double outflow)
{
    if (!(outflow >= 0.0)) {
        throw Error(ErrorCode::NegativeFlow, "negative outflow for " + origin.id);
    }
    const auto p = gravity_probs(origin, candidates, params);
    std::vector<std::pair<std::string, double>> flows;
    flows.reserve(candidates.size());
    for (Eigen::Index k = 0; k < p.probs.size(); ++k) {
        flows.emplace_back(p.destination_ids[static_cast<std::size_t>(k)], outflow * p.probs[k]);
    }
    return flows;
}

GravityObservation make_observation(const Location& origin, std::span<const Location> candidates,
                                    const Eigen::VectorXd& flows, Deterrence deterrence)
{
    if (flows.size() != static_cast<Eigen::Index>(candidates.size())) {
        throw Error(ErrorCode::DimensionMismatch, "flows and candidates differ in length");
    }
    return {design_matrix(origin, candidates, deterrence), flows};
}

double gravity_loglik(std::span<const GravityObservation> data, const Eigen::Vector2d& beta,
                      Eigen::Vector2d* gradient)
{
    double loglik = 0.0;
    Eigen::Vector2d grad = Eigen::Vector2d::Zero();
    for (const auto& obs : data) {
        const Eigen::VectorXd s = obs.x.transpose() * beta;
        const double lse        = log_sum_exp(s);
        const double total      = obs.y.sum();
        loglik += obs.y.dot(s) - total * lse;
        if (gradient) {
            const Eigen::VectorXd p = (s.array() - lse).exp().matrix();
            grad += obs.x * obs.y - total * (obs.x * p);
        }
    }
    if (gradient) {
        *gradient = grad;
    }
    return loglik;
}

namespace {

/// LogL(beta + delta) - LogL(beta), with scores centered on their expectation under
/// p(beta) so that the first-order part is delta . gradient and the remainder a log1p.
double loglik_gain(std::span<const GravityObservation> data, const Eigen::Vector2d& beta,
                   const Eigen::Vector2d& delta)
{
    double gain = 0.0;
    for (const auto& obs : data) {
        const Eigen::VectorXd s    = obs.x.transpose() * beta;
        const Eigen::VectorXd p    = (s.array() - log_sum_exp(s)).exp().matrix();
        const Eigen::Vector2d mean = obs.x * p;
        const double total         = obs.y.sum();
        const Eigen::VectorXd ds   = (obs.x.colwise() - mean).transpose() * delta;
        gain += delta.dot(obs.x * obs.y - total * mean) - total * std::log1p(p.dot(ds.array().expm1().matrix()));
    }
    return gain;
}

} // namespace

GravityFit fit_gravity(std::span<const GravityObservation> data, Deterrence deterrence, GravityParams init,
                       const GravityFitOptions& options)
{
    if (data.empty()) {
        throw Error(ErrorCode::EmptyInput, "no training origins for the gravity fit");
    }
    bool degenerate = true;
    for (const auto& obs : data) {
        if (!(obs.y.sum() > 0.0)) {
            throw Error(ErrorCode::MalformedInput, "training origin without outflow");
        }
        if ((obs.y.array() > 0.0).count() > 1) {
            degenerate = false;
        }
    }
    if (degenerate) {
        log::warn("gravity fit: every origin has a single destination; the deterrence exponent is unbounded");
    }

    constexpr double armijo = 1e-4;
    Eigen::Vector2d beta = init.beta();
    Eigen::Vector2d grad;
    double loglik = gravity_loglik(data, beta, &grad);

    GravityFit fit;
    fit.degenerate = degenerate;
    fit.loglik_trace.push_back(loglik);

    double step = 1.0 / std::max(1.0, grad.lpNorm<Eigen::Infinity>());
    int iter    = 0;
    for (; iter < options.max_iters; ++iter) {
        if (grad.lpNorm<Eigen::Infinity>() < options.tol) {
            fit.converged = true;
            break;
        }
        const double slope = grad.squaredNorm();
        Eigen::Vector2d next_beta;
        Eigen::Vector2d next_grad;
        double gain   = 0.0;
        bool accepted = false;
        for (int halvings = 0; halvings < 60; ++halvings) {
            next_beta = beta + step * grad;
            // Differencing two loglik values loses the gain to rounding near the optimum.
            gain = loglik_gain(data, beta, step * grad);
            if (std::isfinite(gain) && gain >= armijo * step * slope) {
                gravity_loglik(data, next_beta, &next_grad);
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) {
            break;
        }
        const Eigen::Vector2d s = next_beta - beta;
        const Eigen::Vector2d d = next_grad - grad;
        beta   = next_beta;
        grad   = next_grad;
        loglik += gain;
        fit.loglik_trace.push_back(loglik);

        // Barzilai-Borwein trial step for the next iteration; concavity makes s.d < 0.
        const double curvature = -s.dot(d);
        step = curvature > 0.0 ? s.squaredNorm() / curvature : 2.0 * step;
    }
    if (!fit.converged && grad.lpNorm<Eigen::Infinity>() < options.tol) {
        fit.converged = true;
    }
    if (!fit.converged) {
        log::warn("gravity fit did not converge: |grad|_inf = ", grad.lpNorm<Eigen::Infinity>());
    }
    fit.params        = {beta[0], beta[1], deterrence};
    fit.loglik        = loglik;
    fit.gradient_norm = grad.lpNorm<Eigen::Infinity>();
    fit.iterations    = iter;
    return fit;
}

} // namespace flowgen
