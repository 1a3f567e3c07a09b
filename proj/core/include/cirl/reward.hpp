#pragma once

#include "cirl/mdp.hpp"

#include <nlohmann/json.hpp>

#include <stdexcept>
#include <string>
#include <vector>

namespace cirl {

/// R(s, a) = R_A(a) + R_S(s) on non-terminal states, 0 on terminal states.
struct RewardDecomposition {
    Vector r_action;
    Vector r_state;

    Matrix table(const std::vector<bool>& terminal_mask) const;
    Vector vec(const std::vector<bool>& terminal_mask) const;
};

/// The N_S*N_A x N_S broadcast that maps R_S onto vec(R), with terminal
/// columns masked out.
Matrix state_broadcast(int n_states, int n_actions, const std::vector<bool>& terminal_mask);

/// vec(R) contribution of a fixed R_A, zero on terminal states.
Vector action_reward_vec(const Vector& r_action, int n_states,
                         const std::vector<bool>& terminal_mask);

/// Raised when an optimiser cannot produce a solution (infeasible LP,
/// iteration limit, divergence).
class SolverError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct IrlDiagnostics {
    std::string method;
    double objective = 0.0;
    int iterations = 0;
    double max_constraint_violation = 0.0;
    bool converged = true;
    std::vector<int> unvisited_states;
    std::vector<std::string> warnings;
    nlohmann::ordered_json extra = nlohmann::ordered_json::object();
};

struct IrlSolution {
    /// Reward exactly as returned by the optimiser.
    RewardDecomposition raw;
    /// R_S after removing the potential-shaping offset (see gridworld.hpp).
    Vector r_state_canonical;
    IrlDiagnostics diagnostics;
};

}  // namespace cirl
