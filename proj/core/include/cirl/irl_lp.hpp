#pragma once

#include "cirl/lp_solver.hpp"
#include "cirl/mdp.hpp"
#include "cirl/reward.hpp"

#include <vector>

namespace cirl {

struct LpIrlConfig {
    double lambda = 0.0;
    double r_max = 1000.0;
    /// Known R_A, length N_A.
    Vector fixed_r_action;
    /// Keep the R_A offset inside the per-state max instead of splitting it
    /// out as a constant.
    bool exact_margin_objective = false;
    LpOptions lp;
};

/// Omega = I-hat - (I-tilde - gamma T)(I - gamma T^pi)^{-1} pi-hat, with
/// (Omega vec(R))_{s,a} = Q(s, a) - V(s). `constraint_rows` is the validity
/// matrix [I-tilde + gamma (T-tilde^pi - T)(I - gamma T^pi)^{-1}] pi-hat - I-hat,
/// built from its own formula; row (s, a) times vec(R) is Q(s, pi(s)) - Q(s, a).
struct LpMatrices {
    Matrix omega;
    Matrix constraint_rows;
};

/// Row index of (s, a) in either matrix is vec_index(s, a, N_S).
LpMatrices build_lp_matrices(const Mdp& mdp, const StochasticPolicy& policy);
Matrix omega_matrix(const Mdp& mdp, const StochasticPolicy& policy);
Matrix build_validity_constraints(const Mdp& mdp, const DeterministicPolicy& policy);

/// The system over R_S alone: Omega vec(R) = state_map * R_S + offset.
struct ReducedSystem {
    Matrix state_map;
    Vector offset;
};

ReducedSystem reduce_to_state_reward(const Mdp& mdp, const LpMatrices& matrices,
                                     const Vector& fixed_r_action);

/// Sum over constrained states of max_{a != pi(s)} (Omega vec(R))_{s,a}.
double margin_objective(const Matrix& omega, const Vector& reward_vec,
                        const DeterministicPolicy& policy, const std::vector<bool>& constrained,
                        int n_states);

/// Sum over constrained states of max_{a != pi(s)} (state_map R_S)_{s,a},
/// plus lambda ||R_S||_1.
double reduced_objective(const ReducedSystem& system, const Vector& r_state,
                         const DeterministicPolicy& policy, const std::vector<bool>& constrained,
                         double lambda);

/// Recovers R_S with R_A fixed. Only `constrained` states contribute
/// validity rows and objective terms; the policy entry of every other
/// non-terminal state may be kNoAction, and those states follow the uniform
/// policy inside T^pi. Throws SolverError if the LP has no solution.
IrlSolution solve_lp_irl(const Mdp& mdp, const DeterministicPolicy& policy,
                         const std::vector<bool>& constrained, const LpIrlConfig& config);

}  // namespace cirl
