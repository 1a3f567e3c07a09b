#include "cirl/reward.hpp"

#include <stdexcept>

namespace cirl {

Matrix RewardDecomposition::table(const std::vector<bool>& terminal_mask) const {
    const auto ns = r_state.size();
    const auto na = r_action.size();
    if (static_cast<Eigen::Index>(terminal_mask.size()) != ns)
        throw std::invalid_argument("terminal mask length does not match R_S");
    Matrix out(ns, na);
    for (Eigen::Index s = 0; s < ns; ++s) {
        if (terminal_mask[s]) {
            out.row(s).setZero();
        } else {
            out.row(s) = r_action.transpose().array() + r_state(s);
        }
    }
    return out;
}

Vector RewardDecomposition::vec(const std::vector<bool>& terminal_mask) const {
    return vectorize(table(terminal_mask));
}

Matrix state_broadcast(int n_states, int n_actions, const std::vector<bool>& terminal_mask) {
    Matrix out = Matrix::Zero(static_cast<Eigen::Index>(n_states) * n_actions, n_states);
    for (int a = 0; a < n_actions; ++a)
        for (int s = 0; s < n_states; ++s)
            if (!terminal_mask[s]) out(vec_index(s, a, n_states), s) = 1.0;
    return out;
}

Vector action_reward_vec(const Vector& r_action, int n_states,
                         const std::vector<bool>& terminal_mask) {
    const auto na = static_cast<int>(r_action.size());
    Vector out = Vector::Zero(static_cast<Eigen::Index>(n_states) * na);
    for (int a = 0; a < na; ++a)
        for (int s = 0; s < n_states; ++s)
            if (!terminal_mask[s]) out(vec_index(s, a, n_states)) = r_action(a);
    return out;
}

}  // namespace cirl
