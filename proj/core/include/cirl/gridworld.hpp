#pragma once

#include "cirl/mdp.hpp"
#include "cirl/reward.hpp"

#include <nlohmann/json.hpp>

#include <optional>
#include <string>
#include <vector>

namespace cirl {

struct Cell {
    int row = 0;
    int col = 0;

    bool operator==(const Cell&) const = default;
};

enum class Direction { up = 0, down = 1, left = 2, right = 3 };

inline constexpr int kDirections = 4;

std::string to_string(Direction d);
Direction direction_from_string(const std::string& text);

struct CareAction {
    Direction direction = Direction::up;
    int care = 1;

    bool operator==(const CareAction&) const = default;
};

enum class SlipModel { uniform_random_direction };

/// Declarative cliff-world config. Row 0 is the top row; states are indexed
/// row-major (state = row * width + col) followed by one absorbing sink.
struct GridworldSpec {
    int width = 6;
    int height = 4;
    std::vector<Cell> cliff_cells = {{3, 0}, {3, 1}, {3, 2}, {3, 3}, {3, 4}};
    Cell goal_cell = {3, 5};
    int carefulness_levels = 14;
    double cliff_reward = -1000.0;
    double goal_reward = 100.0;
    double cost_per_care_level = 1.0;
    double discount = 0.95;
    SlipModel slip_model = SlipModel::uniform_random_direction;
    bool deterministic = false;
    /// Replaces 1 - 2^-c as the success probability when C = 1.
    std::optional<double> simple_success_prob;
    int max_episode_steps = 200;

    static GridworldSpec carefulness(int levels = 14);
    static GridworldSpec simple();
    static GridworldSpec benchmark();

    /// Throws std::invalid_argument on malformed geometry or rewards.
    void validate() const;
};

nlohmann::json to_json(const GridworldSpec& spec);
/// Missing keys take the carefulness defaults; unknown keys are rejected.
GridworldSpec gridworld_spec_from_json(const nlohmann::json& j);
GridworldSpec load_gridworld_spec(const std::string& path);

/// FNV-1a 64 of the sorted-key JSON dump, as 16 lowercase hex digits.
std::string fingerprint(const GridworldSpec& spec);

/// 1 - 2^-care. Throws std::out_of_range unless 1 <= care <= levels.
double success_probability(int care, int levels);
double action_cost(int care, int levels, double cost_per_care_level);

enum class CellKind { ground, cliff, goal, sink };

/// The built MDP plus index maps.
///
/// Cliff and goal cells are ordinary non-terminal states whose every action
/// moves to the sink. Their R_S carries the cliff or goal bonus, which is
/// paid on that exit step, so R(s, a) = R_A(a) + R_S(s) holds exactly.
class Gridworld {
public:
    explicit Gridworld(GridworldSpec spec);

    const GridworldSpec& spec() const noexcept { return spec_; }
    const Mdp& mdp() const noexcept { return mdp_; }
    const std::string& fingerprint() const noexcept { return fingerprint_; }

    int n_states() const noexcept { return mdp_.n_states(); }
    int n_actions() const noexcept { return mdp_.n_actions(); }
    int levels() const noexcept { return spec_.carefulness_levels; }
    int sink() const noexcept { return spec_.width * spec_.height; }

    int state_of(Cell cell) const;
    Cell cell_of(int state) const;
    CellKind kind(int state) const;
    bool is_exit(int state) const;

    int action_index(CareAction action) const;
    CareAction care_action(int action) const;

    const std::vector<int>& ground_states() const noexcept { return ground_; }
    const std::vector<int>& cliff_states() const noexcept { return cliff_; }
    int goal_state() const { return state_of(spec_.goal_cell); }

    double success_probability(int care) const;
    double action_cost(int care) const;

    const RewardDecomposition& true_reward() const noexcept { return true_reward_; }
    Vector known_action_reward() const { return true_reward_.r_action; }

    /// Removes the potential offset that leaves every policy and every IRL
    /// objective unchanged. Adding k(1 - gamma) to ground cells and k to exit
    /// cells is such an offset; the canonical representative has zero mean
    /// over ground cells. The sink stays at 0.
    Vector canonicalize(const Vector& r_state) const;

    /// |mean R_S over cliff cells| / |R_S at the goal|.
    double severity_ratio(const Vector& r_state) const;

private:
    GridworldSpec spec_;
    std::vector<CellKind> kinds_;
    std::vector<int> ground_;
    std::vector<int> cliff_;
    RewardDecomposition true_reward_;
    Mdp mdp_;
    std::string fingerprint_;

    static Mdp build_mdp(const GridworldSpec& spec, const std::vector<CellKind>& kinds,
                         const RewardDecomposition& reward);
};

}  // namespace cirl
