#include "cirl/mdp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace cirl {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

}  // namespace

Vector vectorize(const Matrix& table) {
    return Eigen::Map<const Vector>(table.data(), table.size());
}

Matrix unvectorize(const Vector& vec, int n_states, int n_actions) {
    require(vec.size() == static_cast<Eigen::Index>(n_states) * n_actions,
            "vec(R) length does not match N_S * N_A");
    return Eigen::Map<const Matrix>(vec.data(), n_states, n_actions);
}

Mdp::Mdp(std::vector<Matrix> transitions, Matrix reward, double discount,
         std::vector<int> terminal_states)
    : n_states_(static_cast<int>(reward.rows())),
      n_actions_(static_cast<int>(reward.cols())),
      transitions_(std::move(transitions)),
      reward_(std::move(reward)),
      discount_(discount),
      terminal_states_(std::move(terminal_states)) {
    require(n_states_ > 0 && n_actions_ > 0, "MDP needs at least one state and one action");
    require(static_cast<int>(transitions_.size()) == n_actions_,
            "one transition matrix per action is required");
    require(discount_ >= 0.0 && discount_ < 1.0, "discount must lie in [0, 1)");
    require(reward_.allFinite(), "reward table must be finite");

    for (int a = 0; a < n_actions_; ++a) {
        const Matrix& t = transitions_[a];
        require(t.rows() == n_states_ && t.cols() == n_states_,
                "transition matrix for action " + std::to_string(a) + " has wrong shape");
        require(t.allFinite() && t.minCoeff() >= 0.0 && t.maxCoeff() <= 1.0,
                "transition probabilities must lie in [0, 1]");
        for (int s = 0; s < n_states_; ++s) {
            require(std::abs(t.row(s).sum() - 1.0) <= 1e-12,
                    "transition row (" + std::to_string(s) + ", " + std::to_string(a) +
                        ") does not sum to 1");
        }
    }

    std::sort(terminal_states_.begin(), terminal_states_.end());
    terminal_states_.erase(std::unique(terminal_states_.begin(), terminal_states_.end()),
                           terminal_states_.end());
    terminal_mask_.assign(n_states_, false);
    for (int t : terminal_states_) {
        require(t >= 0 && t < n_states_, "terminal state index out of range");
        terminal_mask_[t] = true;
        for (int a = 0; a < n_actions_; ++a) {
            require(transitions_[a](t, t) == 1.0, "terminal states must be absorbing");
            require(reward_(t, a) == 0.0, "terminal states must carry zero reward");
        }
    }

    successor_offsets_.reserve(static_cast<std::size_t>(n_states_) * n_actions_ + 1);
    successor_offsets_.push_back(0);
    for (int s = 0; s < n_states_; ++s) {
        for (int a = 0; a < n_actions_; ++a) {
            for (int s2 = 0; s2 < n_states_; ++s2) {
                const double p = transitions_[a](s, s2);
                if (p > 0.0) successor_storage_.push_back({s2, p});
            }
            successor_offsets_.push_back(successor_storage_.size());
        }
    }
}

std::span<const Successor> Mdp::successors(int state, int action) const {
    const std::size_t k = static_cast<std::size_t>(state) * n_actions_ + action;
    return {successor_storage_.data() + successor_offsets_[k],
            successor_offsets_[k + 1] - successor_offsets_[k]};
}

Mdp Mdp::with_reward(Matrix reward) const {
    return Mdp(transitions_, std::move(reward), discount_, terminal_states_);
}

StochasticPolicy StochasticPolicy::from(const DeterministicPolicy& policy, int n_actions) {
    const int n = static_cast<int>(policy.action_of.size());
    StochasticPolicy out{Matrix::Zero(n, n_actions)};
    for (int s = 0; s < n; ++s) {
        const int a = policy.action_of[s];
        if (a >= 0 && a < n_actions) {
            out.probs(s, a) = 1.0;
        } else {
            out.probs.row(s).setConstant(1.0 / n_actions);
        }
    }
    return out;
}

StochasticPolicy StochasticPolicy::uniform(int n_states, int n_actions) {
    return {Matrix::Constant(n_states, n_actions, 1.0 / n_actions)};
}

void validate_policy(const Mdp& mdp, const DeterministicPolicy& policy) {
    require(static_cast<int>(policy.action_of.size()) == mdp.n_states(),
            "policy length does not match N_S");
    for (int s = 0; s < mdp.n_states(); ++s) {
        const int a = policy.action_of[s];
        if (mdp.is_terminal(s) && a == kNoAction) continue;
        require(a >= 0 && a < mdp.n_actions(),
                "policy action out of range at state " + std::to_string(s));
    }
}

void validate_policy(const Mdp& mdp, const StochasticPolicy& policy) {
    require(policy.probs.rows() == mdp.n_states() && policy.probs.cols() == mdp.n_actions(),
            "policy table has wrong shape");
    require(policy.probs.allFinite() && policy.probs.minCoeff() >= 0.0,
            "policy probabilities must be non-negative");
    for (int s = 0; s < mdp.n_states(); ++s) {
        require(std::abs(policy.probs.row(s).sum() - 1.0) <= 1e-12,
                "policy row " + std::to_string(s) + " does not sum to 1");
    }
}

PolicyMatrices policy_matrices(const Mdp& mdp, const StochasticPolicy& policy) {
    validate_policy(mdp, policy);
    const int ns = mdp.n_states();
    const int na = mdp.n_actions();
    PolicyMatrices out{Matrix::Zero(ns, ns), Matrix::Zero(ns, ns * na)};
    for (int a = 0; a < na; ++a) {
        out.t_pi.noalias() += policy.probs.col(a).asDiagonal() * mdp.transition(a);
        for (int s = 0; s < ns; ++s) out.pi_hat(s, vec_index(s, a, ns)) = policy.probs(s, a);
    }
    return out;
}

Matrix resolvent(const Mdp& mdp, const Matrix& t_pi) {
    const int ns = mdp.n_states();
    const Matrix system = Matrix::Identity(ns, ns) - mdp.discount() * t_pi;
    return system.partialPivLu().inverse();
}

Vector policy_evaluation_direct(const Mdp& mdp, const StochasticPolicy& policy) {
    return policy_evaluation_direct(mdp, policy, vectorize(mdp.reward()));
}

Vector policy_evaluation_direct(const Mdp& mdp, const StochasticPolicy& policy,
                                const Vector& reward_vec) {
    const int ns = mdp.n_states();
    require(reward_vec.size() == static_cast<Eigen::Index>(ns) * mdp.n_actions(),
            "vec(R) length does not match N_S * N_A");
    const PolicyMatrices pm = policy_matrices(mdp, policy);
    const Matrix system = Matrix::Identity(ns, ns) - mdp.discount() * pm.t_pi;
    const Vector r_pi = pm.pi_hat * reward_vec;
    return system.partialPivLu().solve(r_pi);
}

Matrix q_operator(const Mdp& mdp, const StochasticPolicy& policy) {
    const int ns = mdp.n_states();
    const int na = mdp.n_actions();
    const PolicyMatrices pm = policy_matrices(mdp, policy);
    const Matrix value_map = resolvent(mdp, pm.t_pi) * pm.pi_hat;  // vec(R) -> V
    Matrix op = Matrix::Identity(ns * na, ns * na);
    for (int a = 0; a < na; ++a) {
        op.middleRows(static_cast<Eigen::Index>(a) * ns, ns).noalias() +=
            mdp.discount() * mdp.transition(a) * value_map;
    }
    return op;
}

Matrix q_from_reward(const Mdp& mdp, const StochasticPolicy& policy, const Vector& reward_vec) {
    require(reward_vec.size() == static_cast<Eigen::Index>(mdp.n_states()) * mdp.n_actions(),
            "vec(R) length does not match N_S * N_A");
    const Vector q = q_operator(mdp, policy) * reward_vec;
    return unvectorize(q, mdp.n_states(), mdp.n_actions());
}

DeterministicPolicy greedy_policy(const Matrix& q) {
    DeterministicPolicy out;
    out.action_of.resize(q.rows());
    for (Eigen::Index s = 0; s < q.rows(); ++s) {
        const double best = q.row(s).maxCoeff();
        const double slack = 1e-12 * (1.0 + std::abs(best));
        int chosen = 0;
        for (Eigen::Index a = 0; a < q.cols(); ++a) {
            if (q(s, a) >= best - slack) {
                chosen = static_cast<int>(a);
                break;
            }
        }
        out.action_of[s] = chosen;
    }
    return out;
}

Matrix bellman_backup(const Mdp& mdp, const Matrix& reward, const Vector& v) {
    Matrix q(mdp.n_states(), mdp.n_actions());
    for (int a = 0; a < mdp.n_actions(); ++a) {
        q.col(a) = reward.col(a) + mdp.discount() * (mdp.transition(a) * v);
    }
    return q;
}

ValueIterationResult value_iteration(const Mdp& mdp, double tol, int max_sweeps) {
    require(tol > 0.0, "value iteration tolerance must be positive");
    const double gamma = mdp.discount();
    // Stopping on successive differences below this bound keeps the residual
    // of the returned V, and its distance to V*, within tol.
    const double step_tol = gamma > 0.0 ? tol * (1.0 - gamma) / (2.0 * gamma) : tol;

    ValueIterationResult out;
    Vector v = Vector::Zero(mdp.n_states());
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        const Vector next = bellman_backup(mdp, mdp.reward(), v).rowwise().maxCoeff();
        const double delta = (next - v).lpNorm<Eigen::Infinity>();
        v = next;
        out.sweeps = sweep;
        const double floor =
            16.0 * std::numeric_limits<double>::epsilon() * (1.0 + v.lpNorm<Eigen::Infinity>());
        if (delta <= std::max(step_tol, floor)) break;
    }
    out.values.q = bellman_backup(mdp, mdp.reward(), v);
    out.residual = (out.values.q.rowwise().maxCoeff() - v).lpNorm<Eigen::Infinity>();
    out.values.v = std::move(v);
    out.policy = greedy_policy(out.values.q);
    return out;
}

}  // namespace cirl
