#pragma once

#include <Eigen/Dense>

#include <span>
#include <vector>

namespace cirl {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Marks a state without a demonstrated or assigned action.
inline constexpr int kNoAction = -1;

/// Position of R(s, a) inside vec(R). Blocks are action-major, so stacking
/// N_A copies of a state vector is plain block repetition. An Eigen
/// column-major N_S x N_A table already has this memory layout.
constexpr int vec_index(int state, int action, int n_states) noexcept {
    return action * n_states + state;
}

Vector vectorize(const Matrix& table);
Matrix unvectorize(const Vector& vec, int n_states, int n_actions);

struct Successor {
    int state;
    double prob;
};

/// Finite tabular MDP (S, A, T, gamma, R) with absorbing, zero-reward
/// terminal states. Construction validates every invariant and throws
/// std::invalid_argument on violation.
class Mdp {
public:
    /// `transitions[a]` is the N_S x N_S matrix T[., a, .].
    Mdp(std::vector<Matrix> transitions, Matrix reward, double discount,
        std::vector<int> terminal_states);

    int n_states() const noexcept { return n_states_; }
    int n_actions() const noexcept { return n_actions_; }
    double discount() const noexcept { return discount_; }

    const Matrix& transition(int action) const { return transitions_[action]; }
    double transition(int state, int action, int next) const {
        return transitions_[action](state, next);
    }
    /// Non-zero entries of the row T[state, action, .] in increasing state order.
    std::span<const Successor> successors(int state, int action) const;

    const Matrix& reward() const noexcept { return reward_; }
    bool is_terminal(int state) const { return terminal_mask_[state]; }
    const std::vector<int>& terminal_states() const noexcept { return terminal_states_; }
    const std::vector<bool>& terminal_mask() const noexcept { return terminal_mask_; }

    /// Same dynamics, different reward table (validated).
    Mdp with_reward(Matrix reward) const;

private:
    int n_states_;
    int n_actions_;
    std::vector<Matrix> transitions_;
    Matrix reward_;
    double discount_;
    std::vector<int> terminal_states_;
    std::vector<bool> terminal_mask_;
    std::vector<Successor> successor_storage_;
    std::vector<std::size_t> successor_offsets_;
};

struct DeterministicPolicy {
    std::vector<int> action_of;
};

/// Row-stochastic N_S x N_A table pi(s, a).
struct StochasticPolicy {
    Matrix probs;

    static StochasticPolicy from(const DeterministicPolicy& policy, int n_actions);
    static StochasticPolicy uniform(int n_states, int n_actions);
};

/// Throws std::invalid_argument unless the policy assigns an in-range action
/// to every non-terminal state. Terminal states may carry kNoAction.
void validate_policy(const Mdp& mdp, const DeterministicPolicy& policy);
void validate_policy(const Mdp& mdp, const StochasticPolicy& policy);

struct ValueFunctions {
    Vector v;
    Matrix q;
};

/// T^pi (N_S x N_S) and pi-hat (N_S x N_S*N_A) for a fixed policy. The
/// selector I-hat is the identity on vec(R) and is not materialised.
struct PolicyMatrices {
    Matrix t_pi;
    Matrix pi_hat;
};

PolicyMatrices policy_matrices(const Mdp& mdp, const StochasticPolicy& policy);

/// (I - gamma T^pi)^{-1} from an LU factorisation.
Matrix resolvent(const Mdp& mdp, const Matrix& t_pi);

/// V^pi = (I - gamma T^pi)^{-1} pi-hat vec(R), by a direct linear solve.
Vector policy_evaluation_direct(const Mdp& mdp, const StochasticPolicy& policy);
Vector policy_evaluation_direct(const Mdp& mdp, const StochasticPolicy& policy,
                                const Vector& reward_vec);

/// The composed operator I-hat + gamma T (I - gamma T^pi)^{-1} pi-hat, an
/// (N_S*N_A) x (N_S*N_A) matrix mapping vec(R) to vec(Q^pi).
Matrix q_operator(const Mdp& mdp, const StochasticPolicy& policy);

/// Q^pi as an N_S x N_A table for an arbitrary reward vector.
Matrix q_from_reward(const Mdp& mdp, const StochasticPolicy& policy, const Vector& reward_vec);

/// Greedy policy, lowest action index wins ties.
DeterministicPolicy greedy_policy(const Matrix& q);

struct ValueIterationResult {
    ValueFunctions values;
    DeterministicPolicy policy;
    int sweeps = 0;
    double residual = 0.0;  ///< sup-norm Bellman residual of `values.v`
};

/// Value iteration with sup-norm residual <= tol on the returned V.
ValueIterationResult value_iteration(const Mdp& mdp, double tol = 1e-10,
                                     int max_sweeps = 1'000'000);

/// One Bellman backup R + gamma T V as an N_S x N_A table.
Matrix bellman_backup(const Mdp& mdp, const Matrix& reward, const Vector& v);

}  // namespace cirl
