#pragma once

#include "cirl/gridworld.hpp"
#include "cirl/irl_loss.hpp"
#include "cirl/irl_lp.hpp"
#include "cirl/irl_maxent.hpp"
#include "cirl/rollout.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace cirl {

/// (1 - epsilon) on the policy action plus epsilon spread uniformly.
StochasticPolicy epsilon_greedy(const DeterministicPolicy& policy, double epsilon, int n_actions);

/// Episode i uses seed derive_seed(seed, i); its start cell is drawn
/// uniformly from the ground cells with Rng(derive_seed(that seed, 1)).
std::vector<Rollout> generate_rollouts(const Gridworld& world, const StochasticPolicy& policy,
                                       int n, std::uint64_t seed);
std::vector<Rollout> generate_rollouts(const Gridworld& world, const DeterministicPolicy& policy,
                                       int n, std::uint64_t seed);

enum class IrlMethod { lp, loss, maxent };

std::string to_string(IrlMethod method);
IrlMethod irl_method_from_string(const std::string& text);

struct IrlRunConfig {
    LpIrlConfig lp;
    LossIrlConfig loss;
    MaxEntConfig maxent;
};

/// Defaults for `world`: R_A from the action costs, MaxEnt horizon from the
/// episode cap.
IrlRunConfig default_irl_config(const Gridworld& world);

/// Applies overrides from a JSON object (lambda, r_max, beta, step_size,
/// max_iters, grad_tol, init, learning_rate, max_epochs, horizon,
/// exact_margin_objective, exact_polish, lp_refinement).
void apply_irl_overrides(IrlRunConfig& config, const nlohmann::json& overrides);

/// Checks fingerprints and episode integrity. Throws std::invalid_argument.
void check_rollouts(const Gridworld& world, const std::vector<Rollout>& rollouts);

/// Runs one IRL method on rollouts and fills in the canonical R_S.
IrlSolution run_irl(const Gridworld& world, IrlMethod method, const std::vector<Rollout>& rollouts,
                    const IrlRunConfig& config);

/// LP-IRL from a complete policy (every ground and exit cell constrained).
IrlSolution run_lp_irl_on_policy(const Gridworld& world, const DeterministicPolicy& policy,
                                 const IrlRunConfig& config);

/// Severity summary of a solution in both gauges.
nlohmann::ordered_json severity_summary(const Gridworld& world, const IrlSolution& solution);

nlohmann::ordered_json to_json(const IrlSolution& solution, const Gridworld& world,
                               std::optional<std::uint64_t> seed);

nlohmann::ordered_json policy_to_json(const Gridworld& world, const DeterministicPolicy& policy,
                                      std::optional<std::uint64_t> seed);
/// Reads {"actions": [...]} and checks range and length against `world`.
DeterministicPolicy policy_from_json(const Gridworld& world, const nlohmann::json& j);

struct ExpertSpec {
    enum class Source { value_iteration, softmax, rollout_file };
    Source source = Source::value_iteration;
    int rollouts = 100;
    double epsilon = 0.0;
    double beta = 1.0;
    std::string path;
};

struct ExperimentRun {
    std::string id;
    IrlMethod method = IrlMethod::lp;
    ExpertSpec expert;
    nlohmann::json config = nlohmann::json::object();
    nlohmann::json env_override = nlohmann::json::object();
    /// Empty means the manifest-wide list.
    std::vector<int> carefulness_levels;
};

struct ExperimentManifest {
    std::string name;
    GridworldSpec env;
    std::uint64_t seed = 0;
    std::string output_dir;
    std::vector<int> carefulness_levels;
    std::vector<ExperimentRun> runs;
};

/// Relative paths resolve against `base_dir`. Throws std::invalid_argument
/// on missing fields or paths.
ExperimentManifest parse_manifest(const nlohmann::json& j, const std::string& base_dir);
ExperimentManifest load_manifest(const std::string& path);

/// Runs every (run, carefulness level) pair, in parallel worker threads when
/// `threads` > 1, and writes per-run artefacts plus report.json into
/// output_dir. Returns the report.
nlohmann::ordered_json run_experiment(const ExperimentManifest& manifest, int threads = 0);

}  // namespace cirl
