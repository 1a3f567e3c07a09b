#include "cirl/experiment.hpp"

#include "cirl/random.hpp"
#include "cirl/render.hpp"

#include <atomic>
#include <exception>
#include <filesystem>
#include <fstream>
#include <mutex>
#include <set>
#include <stdexcept>
#include <thread>

namespace cirl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

StochasticPolicy epsilon_greedy(const DeterministicPolicy& policy, double epsilon, int n_actions) {
    if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw std::invalid_argument("epsilon must lie in [0, 1]");
    const int n = static_cast<int>(policy.action_of.size());
    StochasticPolicy out{Matrix::Constant(n, n_actions, epsilon / n_actions)};
    for (int s = 0; s < n; ++s) {
        const int a = policy.action_of[s];
        if (a == kNoAction) {
            out.probs.row(s).setConstant(1.0 / n_actions);
        } else {
            out.probs(s, a) += 1.0 - epsilon;
        }
    }
    return out;
}

namespace {

template <typename Policy>
std::vector<Rollout> generate_impl(const Gridworld& world, const Policy& policy, int n,
                                   std::uint64_t seed) {
    if (n < 0) throw std::invalid_argument("rollout count must be non-negative");
    const auto& ground = world.ground_states();
    std::vector<Rollout> out;
    out.reserve(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) {
        const std::uint64_t episode_seed = derive_seed(seed, static_cast<std::uint64_t>(i));
        Rng start_rng(derive_seed(episode_seed, 1));
        const int start = ground[start_rng.below(ground.size())];
        Rollout r = simulate_rollout(world.mdp(), policy, start, episode_seed,
                                     world.spec().max_episode_steps);
        r.env_fingerprint = world.fingerprint();
        out.push_back(std::move(r));
    }
    return out;
}

}  // namespace

std::vector<Rollout> generate_rollouts(const Gridworld& world, const StochasticPolicy& policy,
                                       int n, std::uint64_t seed) {
    validate_policy(world.mdp(), policy);
    return generate_impl(world, policy, n, seed);
}

std::vector<Rollout> generate_rollouts(const Gridworld& world, const DeterministicPolicy& policy,
                                       int n, std::uint64_t seed) {
    validate_policy(world.mdp(), policy);
    return generate_impl(world, policy, n, seed);
}

std::string to_string(IrlMethod method) {
    switch (method) {
        case IrlMethod::lp: return "lp";
        case IrlMethod::loss: return "loss";
        case IrlMethod::maxent: return "maxent";
    }
    return "?";
}

IrlMethod irl_method_from_string(const std::string& text) {
    if (text == "lp") return IrlMethod::lp;
    if (text == "loss") return IrlMethod::loss;
    if (text == "maxent") return IrlMethod::maxent;
    throw std::invalid_argument("unknown IRL method '" + text + "' (expected lp, loss or maxent)");
}

IrlRunConfig default_irl_config(const Gridworld& world) {
    IrlRunConfig config;
    config.lp.fixed_r_action = world.known_action_reward();
    config.maxent.horizon = world.spec().max_episode_steps;
    return config;
}

namespace {

double positive(const json& v, const char* key) {
    const double x = v.get<double>();
    if (!(x > 0.0)) throw std::invalid_argument(std::string(key) + " must be positive");
    return x;
}

int positive_int(const json& v, const char* key) {
    const int x = v.get<int>();
    if (x <= 0) throw std::invalid_argument(std::string(key) + " must be a positive integer");
    return x;
}

}  // namespace

void apply_irl_overrides(IrlRunConfig& config, const json& overrides) {
    if (overrides.is_null()) return;
    if (!overrides.is_object()) throw std::invalid_argument("IRL config must be a JSON object");
    try {
        for (const auto& [key, value] : overrides.items()) {
            if (key == "lambda") {
                config.lp.lambda = value.get<double>();
                if (config.lp.lambda < 0.0) throw std::invalid_argument("lambda must be non-negative");
            } else if (key == "r_max") {
                config.lp.r_max = positive(value, "r_max");
                config.loss.r_max = config.lp.r_max;
            } else if (key == "beta") {
                config.maxent.beta = positive(value, "beta");
            } else if (key == "step_size") {
                config.loss.step_size = positive(value, "step_size");
            } else if (key == "max_iters") {
                config.loss.max_iters = positive_int(value, "max_iters");
            } else if (key == "grad_tol") {
                config.loss.grad_tol = positive(value, "grad_tol");
            } else if (key == "init") {
                const auto text = value.get<std::string>();
                if (text == "zeros") {
                    config.loss.init = LossInit::zeros;
                } else if (text == "lp_warm_start") {
                    config.loss.init = LossInit::lp_warm_start;
                } else {
                    throw std::invalid_argument("init must be zeros or lp_warm_start");
                }
            } else if (key == "learning_rate") {
                config.maxent.learning_rate = positive(value, "learning_rate");
            } else if (key == "max_epochs") {
                config.maxent.max_epochs = positive_int(value, "max_epochs");
            } else if (key == "horizon") {
                config.maxent.horizon = positive_int(value, "horizon");
            } else if (key == "exact_margin_objective") {
                config.lp.exact_margin_objective = value.get<bool>();
            } else if (key == "exact_polish") {
                config.loss.exact_polish = value.get<bool>();
            } else if (key == "lp_refinement") {
                config.loss.lp_refinement = value.get<bool>();
            } else {
                throw std::invalid_argument("unknown IRL config key '" + key + "'");
            }
        }
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("bad IRL config value: ") + e.what());
    }
}

void check_rollouts(const Gridworld& world, const std::vector<Rollout>& rollouts) {
    for (std::size_t i = 0; i < rollouts.size(); ++i) {
        const Rollout& r = rollouts[i];
        if (r.env_fingerprint != world.fingerprint()) {
            throw std::invalid_argument("rollout " + std::to_string(i) + " has env fingerprint '" +
                                        r.env_fingerprint + "' but the environment is '" +
                                        world.fingerprint() + "'");
        }
        try {
            validate_rollout(world.mdp(), r);
        } catch (const std::invalid_argument& e) {
            throw std::invalid_argument("rollout " + std::to_string(i) + ": " + e.what());
        }
    }
}

IrlSolution run_irl(const Gridworld& world, IrlMethod method, const std::vector<Rollout>& rollouts,
                    const IrlRunConfig& config) {
    check_rollouts(world, rollouts);
    if (rollouts.empty()) throw std::invalid_argument("IRL needs at least one rollout");
    const Mdp& mdp = world.mdp();
    IrlSolution solution;
    switch (method) {
        case IrlMethod::lp: {
            const EmpiricalPolicies emp = empirical_policies(rollouts, mdp.n_states(), mdp.n_actions());
            std::vector<bool> constrained(emp.visited);
            for (int s : mdp.terminal_states()) constrained[s] = false;
            solution = solve_lp_irl(mdp, emp.modal, constrained, config.lp);
            break;
        }
        case IrlMethod::loss: {
            const EmpiricalPolicies emp = empirical_policies(rollouts, mdp.n_states(), mdp.n_actions());
            solution = minimize_loss(mdp, emp, world.known_action_reward(), config.loss);
            break;
        }
        case IrlMethod::maxent:
            solution = maxent_irl(rollouts, mdp, world.known_action_reward(), config.maxent);
            break;
    }
    solution.r_state_canonical = world.canonicalize(solution.raw.r_state);
    return solution;
}

IrlSolution run_lp_irl_on_policy(const Gridworld& world, const DeterministicPolicy& policy,
                                 const IrlRunConfig& config) {
    validate_policy(world.mdp(), policy);
    std::vector<bool> constrained(static_cast<std::size_t>(world.n_states()), true);
    for (int s : world.mdp().terminal_states()) constrained[s] = false;
    IrlSolution solution = solve_lp_irl(world.mdp(), policy, constrained, config.lp);
    solution.r_state_canonical = world.canonicalize(solution.raw.r_state);
    return solution;
}

namespace {

ordered_json gauge_summary(const Gridworld& world, const Vector& r_state) {
    double cliff = 0.0;
    for (int s : world.cliff_states()) cliff += r_state(s);
    cliff /= static_cast<double>(world.cliff_states().size());
    double ground_min = r_state(world.ground_states().front());
    double ground_max = ground_min;
    for (int s : world.ground_states()) {
        ground_min = std::min(ground_min, r_state(s));
        ground_max = std::max(ground_max, r_state(s));
    }
    const double goal = r_state(world.goal_state());
    ordered_json j;
    j["cliff_mean"] = cliff;
    j["goal"] = goal;
    j["ground_min"] = ground_min;
    j["ground_max"] = ground_max;
    j["severity_ratio"] = world.severity_ratio(r_state);
    j["signs_correct"] = cliff < 0.0 && goal > 0.0;
    j["cliff_below_ground"] = cliff < ground_min;
    return j;
}

ordered_json vector_json(const Vector& v) {
    ordered_json arr = ordered_json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) arr.push_back(v(i));
    return arr;
}

}  // namespace

ordered_json severity_summary(const Gridworld& world, const IrlSolution& solution) {
    ordered_json j;
    j["true_severity_ratio"] = world.severity_ratio(world.true_reward().r_state);
    j["true_severity_ratio_canonical"] =
        world.severity_ratio(world.canonicalize(world.true_reward().r_state));
    j["canonical"] = gauge_summary(world, solution.r_state_canonical);
    j["raw"] = gauge_summary(world, solution.raw.r_state);
    return j;
}

ordered_json to_json(const IrlSolution& solution, const Gridworld& world,
                     std::optional<std::uint64_t> seed) {
    const IrlDiagnostics& d = solution.diagnostics;
    ordered_json j;
    j["method"] = d.method;
    j["env_fingerprint"] = world.fingerprint();
    j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
    j["carefulness_levels"] = world.levels();
    j["r_action"] = vector_json(solution.raw.r_action);
    j["r_state"] = vector_json(solution.raw.r_state);
    j["r_state_canonical"] = vector_json(solution.r_state_canonical);
    j["severity"] = severity_summary(world, solution);
    ordered_json diag;
    diag["objective"] = d.objective;
    diag["iterations"] = d.iterations;
    diag["max_constraint_violation"] = d.max_constraint_violation;
    diag["converged"] = d.converged;
    diag["unvisited_states"] = d.unvisited_states;
    diag["warnings"] = d.warnings;
    diag["extra"] = d.extra;
    j["diagnostics"] = std::move(diag);
    return j;
}

ordered_json policy_to_json(const Gridworld& world, const DeterministicPolicy& policy,
                            std::optional<std::uint64_t> seed) {
    ordered_json j;
    j["env_fingerprint"] = world.fingerprint();
    j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
    ordered_json actions = ordered_json::array();
    ordered_json readable = ordered_json::array();
    for (int s = 0; s < world.n_states(); ++s) {
        const int a = policy.action_of[s];
        if (a == kNoAction || world.mdp().is_terminal(s)) {
            actions.push_back(a == kNoAction ? ordered_json(nullptr) : ordered_json(a));
            readable.push_back(nullptr);
            continue;
        }
        actions.push_back(a);
        const CareAction ca = world.care_action(a);
        readable.push_back({{"direction", to_string(ca.direction)}, {"care", ca.care}});
    }
    j["actions"] = std::move(actions);
    j["readable"] = std::move(readable);
    return j;
}

DeterministicPolicy policy_from_json(const Gridworld& world, const json& j) {
    if (!j.is_object() || !j.contains("actions") || !j.at("actions").is_array())
        throw std::invalid_argument("policy JSON needs an 'actions' array");
    if (j.contains("env_fingerprint") && j.at("env_fingerprint").is_string() &&
        j.at("env_fingerprint").get<std::string>() != world.fingerprint()) {
        throw std::invalid_argument("policy env fingerprint '" + j.at("env_fingerprint").get<std::string>() +
                                    "' does not match the environment '" + world.fingerprint() + "'");
    }
    const auto& arr = j.at("actions");
    if (static_cast<int>(arr.size()) != world.n_states())
        throw std::invalid_argument("policy has " + std::to_string(arr.size()) + " entries, expected " +
                                    std::to_string(world.n_states()));
    DeterministicPolicy policy;
    policy.action_of.reserve(arr.size());
    for (const auto& v : arr) {
        if (v.is_null()) {
            policy.action_of.push_back(kNoAction);
        } else if (v.is_number_integer()) {
            policy.action_of.push_back(v.get<int>());
        } else {
            throw std::invalid_argument("policy actions must be integers or null");
        }
    }
    validate_policy(world.mdp(), policy);
    return policy;
}

namespace {

json read_json_file(const fs::path& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open '" + path.string() + "'");
    try {
        return json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("'" + path.string() + "' is not valid JSON: " + e.what());
    }
}

const json& require(const json& j, const char* key, const std::string& where) {
    if (!j.contains(key)) throw std::invalid_argument(where + ": missing field '" + key + "'");
    return j.at(key);
}

fs::path resolve(const std::string& base_dir, const std::string& path) {
    fs::path p(path);
    return p.is_absolute() ? p : fs::path(base_dir) / p;
}

ExpertSpec parse_expert(const json& j, const std::string& base_dir, const std::string& where) {
    if (!j.is_object()) throw std::invalid_argument(where + ": expert must be an object");
    ExpertSpec e;
    const auto source = require(j, "source", where).get<std::string>();
    if (source == "value_iteration") {
        e.source = ExpertSpec::Source::value_iteration;
    } else if (source == "softmax") {
        e.source = ExpertSpec::Source::softmax;
    } else if (source == "rollout_file") {
        e.source = ExpertSpec::Source::rollout_file;
    } else {
        throw std::invalid_argument(where + ": unknown expert source '" + source + "'");
    }
    for (const auto& [key, value] : j.items()) {
        if (key == "source") continue;
        if (key == "rollouts") {
            e.rollouts = value.get<int>();
            if (e.rollouts < 0) throw std::invalid_argument(where + ": rollouts must be non-negative");
        } else if (key == "epsilon") {
            e.epsilon = value.get<double>();
        } else if (key == "beta") {
            e.beta = value.get<double>();
            if (!(e.beta > 0.0)) throw std::invalid_argument(where + ": beta must be positive");
        } else if (key == "path") {
            e.path = resolve(base_dir, value.get<std::string>()).string();
        } else {
            throw std::invalid_argument(where + ": unknown expert field '" + key + "'");
        }
    }
    if (e.source == ExpertSpec::Source::rollout_file) {
        if (e.path.empty()) throw std::invalid_argument(where + ": rollout_file expert needs 'path'");
        if (!fs::exists(e.path)) throw std::invalid_argument(where + ": rollout file '" + e.path + "' does not exist");
    }
    return e;
}

GridworldSpec job_spec(const ExperimentManifest& m, const ExperimentRun& run, int levels) {
    json env = to_json(m.env);
    env["carefulness_levels"] = levels;
    for (const auto& [key, value] : run.env_override.items()) env[key] = value;
    // A C = 1 override table only makes sense at C = 1.
    if (env.value("carefulness_levels", 1) != 1) env["simple_success_prob"] = nullptr;
    return gridworld_spec_from_json(env);
}

}  // namespace

ExperimentManifest parse_manifest(const json& j, const std::string& base_dir) {
    if (!j.is_object()) throw std::invalid_argument("manifest must be a JSON object");
    static const std::set<std::string> known = {"name", "env", "seed", "output_dir",
                                                "carefulness_levels", "runs"};
    for (const auto& [key, value] : j.items()) {
        if (!known.contains(key)) throw std::invalid_argument("manifest: unknown field '" + key + "'");
    }
    try {
        ExperimentManifest m;
        m.name = require(j, "name", "manifest").get<std::string>();
        const json& env = require(j, "env", "manifest");
        if (env.is_string()) {
            const fs::path p = resolve(base_dir, env.get<std::string>());
            if (!fs::exists(p)) throw std::invalid_argument("manifest: env file '" + p.string() + "' does not exist");
            m.env = load_gridworld_spec(p.string());
        } else {
            m.env = gridworld_spec_from_json(env);
        }
        const json& seed = require(j, "seed", "manifest");
        if (!seed.is_number_integer() || (!seed.is_number_unsigned() && seed.get<std::int64_t>() < 0))
            throw std::invalid_argument("manifest: seed must be a non-negative integer");
        m.seed = seed.get<std::uint64_t>();
        m.output_dir = resolve(base_dir, require(j, "output_dir", "manifest").get<std::string>()).string();
        if (j.contains("carefulness_levels")) {
            m.carefulness_levels = j.at("carefulness_levels").get<std::vector<int>>();
            if (m.carefulness_levels.empty())
                throw std::invalid_argument("manifest: carefulness_levels must not be empty");
        } else {
            m.carefulness_levels = {m.env.carefulness_levels};
        }
        const json& runs = require(j, "runs", "manifest");
        if (!runs.is_array() || runs.empty()) throw std::invalid_argument("manifest: runs must be a non-empty array");
        std::set<std::string> ids;
        for (std::size_t i = 0; i < runs.size(); ++i) {
            const json& r = runs[i];
            const std::string where = "manifest run " + std::to_string(i);
            if (!r.is_object()) throw std::invalid_argument(where + ": must be an object");
            for (const auto& [key, value] : r.items()) {
                if (key != "id" && key != "method" && key != "expert" && key != "config" && key != "env_override" &&
                    key != "carefulness_levels")
                    throw std::invalid_argument(where + ": unknown field '" + key + "'");
            }
            ExperimentRun run;
            run.id = require(r, "id", where).get<std::string>();
            if (run.id.empty() || run.id.find_first_of("/\\") != std::string::npos)
                throw std::invalid_argument(where + ": id must be a non-empty file-name-safe string");
            if (!ids.insert(run.id).second) throw std::invalid_argument(where + ": duplicate id '" + run.id + "'");
            run.method = irl_method_from_string(require(r, "method", where).get<std::string>());
            run.expert = parse_expert(require(r, "expert", where), base_dir, where);
            if (run.expert.source != ExpertSpec::Source::rollout_file && run.expert.rollouts == 0 &&
                run.method != IrlMethod::lp) {
                throw std::invalid_argument(where + ": only lp can run on the full policy (rollouts = 0)");
            }
            if (r.contains("config")) run.config = r.at("config");
            if (r.contains("env_override")) {
                run.env_override = r.at("env_override");
                if (!run.env_override.is_object()) throw std::invalid_argument(where + ": env_override must be an object");
            }
            if (r.contains("carefulness_levels")) {
                run.carefulness_levels = r.at("carefulness_levels").get<std::vector<int>>();
                if (run.carefulness_levels.empty())
                    throw std::invalid_argument(where + ": carefulness_levels must not be empty");
            }
            IrlRunConfig probe;
            apply_irl_overrides(probe, run.config);
            m.runs.push_back(std::move(run));
        }
        for (const auto& run : m.runs) {
            for (int c : run.carefulness_levels.empty() ? m.carefulness_levels : run.carefulness_levels)
                job_spec(m, run, c);
        }
        return m;
    } catch (const json::exception& e) {
        throw std::invalid_argument(std::string("manifest: ") + e.what());
    }
}

ExperimentManifest load_manifest(const std::string& path) {
    const json j = read_json_file(path);
    return parse_manifest(j, fs::path(path).parent_path().string());
}

namespace {

struct Job {
    const ExperimentRun* run;
    int levels;
};

struct JobResult {
    ordered_json entry;
};


void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write '" + path.string() + "'");
    out << text;
}

ordered_json run_job(const ExperimentManifest& m, const Job& job) {
    const Gridworld world(job_spec(m, *job.run, job.levels));
    const ExperimentRun& run = *job.run;
    IrlRunConfig config = default_irl_config(world);
    apply_irl_overrides(config, run.config);

    const std::string stem = run.id + "_C" + std::to_string(job.levels);
    const fs::path dir(m.output_dir);

    std::vector<Rollout> rollouts;
    IrlSolution solution;
    const auto& ex = run.expert;
    if (ex.source == ExpertSpec::Source::rollout_file) {
        std::ifstream in(ex.path);
        rollouts = read_rollouts_jsonl(in);
    } else if (ex.source == ExpertSpec::Source::value_iteration) {
        const auto vi = value_iteration(world.mdp());
        if (ex.rollouts > 0) {
            rollouts = ex.epsilon > 0.0
                           ? generate_rollouts(world, epsilon_greedy(vi.policy, ex.epsilon, world.n_actions()),
                                               ex.rollouts, m.seed)
                           : generate_rollouts(world, vi.policy, ex.rollouts, m.seed);
        } else {
            solution = run_lp_irl_on_policy(world, vi.policy, config);
        }
    } else {
        const SoftValues soft = soft_value_iteration(world.mdp(), world.mdp().reward(), ex.beta);
        rollouts = generate_rollouts(world, soft.policy, ex.rollouts, m.seed);
    }
    if (!rollouts.empty() || ex.rollouts > 0) {
        solution = run_irl(world, run.method, rollouts, config);
        write_text(dir / (stem + "_rollouts.jsonl"), to_jsonl(rollouts));
    }

    ordered_json sol = to_json(solution, world, m.seed);
    write_text(dir / (stem + "_solution.json"), sol.dump(2) + "\n");
    write_text(dir / (stem + "_reward.csv"),
               provenance_comment(world.fingerprint(), m.seed) + grid_csv(world, solution.r_state_canonical));

    ordered_json entry;
    entry["run"] = run.id;
    entry["method"] = to_string(run.method);
    entry["carefulness_levels"] = job.levels;
    entry["env_fingerprint"] = world.fingerprint();
    entry["seed"] = m.seed;
    entry["rollouts"] = rollouts.size();
    entry["severity"] = sol["severity"];
    entry["converged"] = solution.diagnostics.converged;
    entry["warnings"] = solution.diagnostics.warnings;
    entry["artefacts"] = {stem + "_solution.json", stem + "_reward.csv"};
    if (!rollouts.empty()) entry["artefacts"].push_back(stem + "_rollouts.jsonl");
    return entry;
}

}  // namespace

ordered_json run_experiment(const ExperimentManifest& manifest, int threads) {
    fs::create_directories(manifest.output_dir);
    std::vector<Job> jobs;
    for (const auto& run : manifest.runs) {
        for (int c : run.carefulness_levels.empty() ? manifest.carefulness_levels : run.carefulness_levels)
            jobs.push_back({&run, c});
    }

    std::vector<ordered_json> entries(jobs.size());
    std::vector<std::exception_ptr> errors(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t i = next++; i < jobs.size(); i = next++) {
            try {
                entries[i] = run_job(manifest, jobs[i]);
            } catch (...) {
                errors[i] = std::current_exception();
            }
        }
    };
    std::size_t n_threads = threads > 0 ? static_cast<std::size_t>(threads)
                                        : std::max(1u, std::thread::hardware_concurrency());
    n_threads = std::min(n_threads, jobs.size());
    if (n_threads <= 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (std::size_t t = 0; t < n_threads; ++t) pool.emplace_back(worker);
    }
    for (const auto& e : errors)
        if (e) std::rethrow_exception(e);

    ordered_json report;
    report["name"] = manifest.name;
    report["seed"] = manifest.seed;
    report["env_fingerprint"] = fingerprint(manifest.env);
    report["carefulness_levels"] = manifest.carefulness_levels;
    report["results"] = ordered_json::array();
    for (auto& e : entries) report["results"].push_back(std::move(e));
    write_text(fs::path(manifest.output_dir) / "report.json", report.dump(2) + "\n");
    return report;
}

}  // namespace cirl
