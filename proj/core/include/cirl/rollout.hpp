#pragma once

#include "cirl/mdp.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace cirl {

enum class RolloutSource { synthetic, human };

std::string to_string(RolloutSource source);
RolloutSource rollout_source_from_string(const std::string& text);

struct Step {
    int s = 0;
    int a = 0;
    double r = 0.0;
    int s2 = 0;

    bool operator==(const Step&) const = default;
};

struct Rollout {
    std::vector<Step> steps;
    std::optional<std::uint64_t> seed;
    RolloutSource source = RolloutSource::synthetic;
    std::optional<std::string> session_id;
    std::string env_fingerprint;
    bool truncated = false;

    bool operator==(const Rollout&) const = default;
};

/// Samples one episode. Stops on reaching a terminal state or after
/// `max_steps` transitions, in which case `truncated` is set.
Rollout simulate_rollout(const Mdp& mdp, const StochasticPolicy& policy, int start_state,
                         std::uint64_t seed, int max_steps);
Rollout simulate_rollout(const Mdp& mdp, const DeterministicPolicy& policy, int start_state,
                         std::uint64_t seed, int max_steps);

/// Throws std::invalid_argument if the rollout is not a chained episode of
/// `mdp` with rewards R[s][a].
void validate_rollout(const Mdp& mdp, const Rollout& rollout);

struct EmpiricalPolicies {
    /// Action frequencies; rows of unvisited states are all zero.
    Matrix frequencies;
    /// Modal action per state, kNoAction where unvisited.
    DeterministicPolicy modal;
    std::vector<int> visit_counts;
    std::vector<bool> visited;
    Matrix action_counts;

    int n_visited() const;
    /// Frequencies with unvisited rows filled uniformly, so the result is a
    /// valid StochasticPolicy. Those rows are placeholders only.
    StochasticPolicy completed() const;
    /// Modal policy with unvisited states assigned `fill`.
    DeterministicPolicy completed_modal(int fill = 0) const;
};

EmpiricalPolicies empirical_policies(std::span<const Rollout> rollouts, int n_states,
                                     int n_actions);

nlohmann::ordered_json to_json(const Rollout& rollout);
Rollout rollout_from_json(const nlohmann::json& j);

void write_rollouts_jsonl(std::ostream& out, std::span<const Rollout> rollouts);
std::vector<Rollout> read_rollouts_jsonl(std::istream& in);
std::string to_jsonl(std::span<const Rollout> rollouts);

}  // namespace cirl
