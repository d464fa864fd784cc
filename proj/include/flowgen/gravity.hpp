#pragma once

#include "flowgen/geodata.hpp"
#include "flowgen/variant.hpp"

#include <Eigen/Core>

#include <span>
#include <string>
#include <utility>
#include <vector>

namespace flowgen {

/// Singly-constrained gravity model: p_ij ∝ m_j^beta1 f(r_ij).
struct GravityParams {
    double beta1           = 1.0;
    double beta2           = -1.0;
    Deterrence deterrence  = Deterrence::power;

    Eigen::Vector2d beta() const { return {beta1, beta2}; }
};

struct DestinationProbabilities {
    std::string origin_id;
    std::vector<std::string> destination_ids;
    Eigen::VectorXd probs;
};

/// Log-space scores beta1 ln m_j + beta2 g(r_ij), g = identity or ln.
Eigen::VectorXd gravity_log_scores(const Location& origin, std::span<const Location> candidates,
                                   const GravityParams& params);

DestinationProbabilities gravity_probs(const Location& origin, std::span<const Location> candidates,
                                       const GravityParams& params);

/// Expected flows O_i p_ij to each candidate.
std::vector<std::pair<std::string, double>> generate_flows(const Location& origin,
                                                           std::span<const Location> candidates,
                                                           const GravityParams& params, double outflow);

/// One origin's candidate destinations: design matrix (2 x n, columns x(l_i, l_j))
/// and observed flows y(l_i, l_j).
struct GravityObservation {
    Eigen::Matrix2Xd x;
    Eigen::VectorXd y;
};

GravityObservation make_observation(const Location& origin, std::span<const Location> candidates,
                                    const Eigen::VectorXd& flows, Deterrence deterrence);

/// LogL(beta | y) = sum_ij y_ij ln p_ij, with the analytic gradient written to `gradient` when non-null.
double gravity_loglik(std::span<const GravityObservation> data, const Eigen::Vector2d& beta,
                      Eigen::Vector2d* gradient = nullptr);

struct GravityFitOptions {
    int max_iters = 500;
    double tol    = 1e-6; // on the gradient infinity-norm
};

struct GravityFit {
    GravityParams params;
    double loglik        = 0.0;
    double gradient_norm = 0.0;
    int iterations       = 0;
    bool converged       = false;
    bool degenerate      = false; // every origin sends all its flow to a single destination
    std::vector<double> loglik_trace; // one entry per accepted step, starting at the initial point
};

/// Maximum likelihood fit by gradient ascent with backtracking line search
/// (Barzilai-Borwein trial steps, Armijo acceptance).
GravityFit fit_gravity(std::span<const GravityObservation> data, Deterrence deterrence, GravityParams init = {},
                       const GravityFitOptions& options = {});

} // namespace flowgen
