#pragma once

#include "cirl/lp_solver.hpp"
#include "cirl/mdp.hpp"
#include "cirl/reward.hpp"
#include "cirl/rollout.hpp"

#include <vector>

namespace cirl {

enum class LossInit { zeros, lp_warm_start };

struct LossIrlConfig {
    double r_max = 1000.0;
    double step_size = 0.5;
    int max_iters = 20'000;
    double grad_tol = 1e-8;
    LossInit init = LossInit::zeros;
    /// Smallest backtracking step before a descent attempt is abandoned.
    double min_step = 1e-14;
    /// After descent stalls above the global minimum, solve the convex
    /// problem exactly and move to the nearest minimiser (L1) of the
    /// descent endpoint.
    bool exact_polish = true;
    /// Re-run LP-IRL on the modal policy afterwards for LP-style magnitudes.
    bool lp_refinement = false;
    LpOptions lp;
};

/// Q under a fixed stochastic policy as an affine map of R_S:
/// vec(Q) = q_map * R_S + q_offset. `states` lists the states that enter
/// the loss.
struct LossModel {
    Matrix q_map;
    Vector q_offset;
    Matrix pi;
    std::vector<int> states;
    int n_states = 0;
    int n_actions = 0;
};

/// `visited` selects the loss terms. Rows of `pi` for unvisited states are
/// only used inside T^pi.
LossModel build_loss_model(const Mdp& mdp, const StochasticPolicy& pi,
                           const std::vector<bool>& visited, const Vector& fixed_r_action);

/// Per-state inner expression sum_a pi(s,a) [max_{a' != a} Q(s,a') - Q(s,a)].
Vector loss_margins(const LossModel& model, const Vector& r_state);

double loss(const LossModel& model, const Vector& r_state);

/// Analytic gradient. relu'(0) = 0; the inner max uses the lowest-index
/// maximiser.
Vector loss_gradient(const LossModel& model, const Vector& r_state);

double loss_and_gradient(const LossModel& model, const Vector& r_state, Vector& gradient);

/// Distance of `r_state` from the nearest non-smooth point: the smaller of
/// min_s |margin_s| and the smallest gap between the two largest
/// alternatives in any inner max. Actions with identical Q maps count as one.
double kink_distance(const LossModel& model, const Vector& r_state);

struct LossTrace {
    std::vector<double> losses;
    std::vector<Vector> iterates;
};

/// Projected gradient descent with backtracking in the box |R_S| <= r_max,
/// then the optional exact polish. Throws SolverError if the loss cannot be
/// evaluated (non-finite).
IrlSolution minimize_loss(const Mdp& mdp, const EmpiricalPolicies& empirical,
                          const Vector& fixed_r_action, const LossIrlConfig& config,
                          LossTrace* trace = nullptr);

}  // namespace cirl
