#pragma once

#include "cirl/mdp.hpp"
#include "cirl/reward.hpp"
#include "cirl/rollout.hpp"

#include <span>
#include <vector>

namespace cirl {

struct MaxEntConfig {
    double beta = 1.0;
    double learning_rate = 0.05;
    int max_epochs = 5000;
    /// Forward visitation horizon; the benchmark episode cap by default.
    int horizon = 200;
    /// Soft value iteration fixpoint tolerance.
    double soft_tol = 1e-10;
    /// Relative log-likelihood improvement treated as convergence.
    double convergence_tol = 1e-10;
};

struct SoftValues {
    Vector v;
    Matrix q;
    StochasticPolicy policy;
    int sweeps = 0;
};

/// Q(s,a) = R(s,a) + gamma sum T V, V(s) = (1/beta) logsumexp_a beta Q(s,a),
/// pi(a|s) = exp(beta (Q(s,a) - V(s))). Terminal states keep V = 0.
SoftValues soft_value_iteration(const Mdp& mdp, const Matrix& reward, double beta,
                                double tol = 1e-10, int max_sweeps = 1'000'000,
                                const Vector* warm_start = nullptr);

/// Discounted empirical statistics of a rollout set.
struct DemonstrationStats {
    Matrix discounted_counts;  ///< sum over steps of gamma^t [s_t = s, a_t = a]
    Vector start_distribution;
    int n_trajectories = 0;
};

DemonstrationStats demonstration_stats(std::span<const Rollout> rollouts, const Mdp& mdp);

/// Per-trajectory discounted log-likelihood sum_t gamma^t log pi(a_t | s_t).
double demonstration_log_likelihood(const DemonstrationStats& stats, const StochasticPolicy& policy);

/// Expected discounted state-action visitation of `policy` started from
/// `start`, over `horizon` steps, excluding terminal states.
Matrix expected_visitation(const Mdp& mdp, const StochasticPolicy& policy, const Vector& start,
                           int horizon);

/// Gradient of the per-trajectory log-likelihood with respect to R_S.
Vector maxent_gradient(const Mdp& mdp, const DemonstrationStats& stats,
                       const StochasticPolicy& policy, double beta, int horizon);

struct MaxEntTrace {
    std::vector<double> log_likelihoods;
    std::vector<double> policy_tv;  ///< mean TV distance to the empirical policy on visited states
};

/// Likelihood ascent over R_S with R_A fixed. The result is the best
/// iterate; diagnostics.converged is false after max_epochs.
IrlSolution maxent_irl(std::span<const Rollout> rollouts, const Mdp& mdp,
                       const Vector& fixed_r_action, const MaxEntConfig& config,
                       MaxEntTrace* trace = nullptr);

}  // namespace cirl
