#include "cirl/rollout.hpp"

#include "cirl/random.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace cirl {

namespace {

int sample_successor(const Mdp& mdp, int s, int a, Rng& rng) {
    const auto succ = mdp.successors(s, a);
    const double u = rng.uniform();
    double acc = 0.0;
    for (const Successor& e : succ) {
        acc += e.prob;
        if (u < acc) return e.state;
    }
    return succ.back().state;
}

template <class ChooseAction>
Rollout run_episode(const Mdp& mdp, int start_state, std::uint64_t seed, int max_steps,
                    ChooseAction&& choose) {
    if (start_state < 0 || start_state >= mdp.n_states())
        throw std::invalid_argument("start state out of range");
    if (mdp.is_terminal(start_state))
        throw std::invalid_argument("start state must be non-terminal");
    Rollout out;
    out.seed = seed;
    Rng rng(seed);
    int s = start_state;
    for (int t = 0; t < max_steps; ++t) {
        const int a = choose(s, rng);
        const int s2 = sample_successor(mdp, s, a, rng);
        out.steps.push_back({s, a, mdp.reward()(s, a), s2});
        s = s2;
        if (mdp.is_terminal(s)) return out;
    }
    out.truncated = true;
    return out;
}

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

}  // namespace

std::string to_string(RolloutSource source) {
    return source == RolloutSource::human ? "human" : "synthetic";
}

RolloutSource rollout_source_from_string(const std::string& text) {
    if (text == "human") return RolloutSource::human;
    if (text == "synthetic") return RolloutSource::synthetic;
    throw std::invalid_argument("unknown rollout source '" + text + "'");
}

Rollout simulate_rollout(const Mdp& mdp, const StochasticPolicy& policy, int start_state,
                         std::uint64_t seed, int max_steps) {
    validate_policy(mdp, policy);
    return run_episode(mdp, start_state, seed, max_steps, [&](int s, Rng& rng) {
        const auto row = policy.probs.row(s);
        std::vector<double> w(row.begin(), row.end());
        return static_cast<int>(rng.categorical(w));
    });
}

Rollout simulate_rollout(const Mdp& mdp, const DeterministicPolicy& policy, int start_state,
                         std::uint64_t seed, int max_steps) {
    validate_policy(mdp, policy);
    return run_episode(mdp, start_state, seed, max_steps,
                       [&](int s, Rng&) { return policy.action_of[s]; });
}

void validate_rollout(const Mdp& mdp, const Rollout& rollout) {
    for (std::size_t i = 0; i < rollout.steps.size(); ++i) {
        const Step& st = rollout.steps[i];
        require(st.s >= 0 && st.s < mdp.n_states() && st.s2 >= 0 && st.s2 < mdp.n_states(),
                "step " + std::to_string(i) + ": state index out of range");
        require(st.a >= 0 && st.a < mdp.n_actions(),
                "step " + std::to_string(i) + ": action index out of range");
        require(!mdp.is_terminal(st.s), "step " + std::to_string(i) + ": starts in a terminal state");
        require(mdp.transition(st.s, st.a, st.s2) > 0.0,
                "step " + std::to_string(i) + ": transition has zero probability");
        const double expected = mdp.reward()(st.s, st.a);
        require(std::abs(st.r - expected) <= 1e-9 * (1.0 + std::abs(expected)),
                "step " + std::to_string(i) + ": reward does not match R[s][a]");
        if (i + 1 < rollout.steps.size())
            require(rollout.steps[i + 1].s == st.s2,
                    "step " + std::to_string(i) + ": steps do not chain");
    }
    if (!rollout.truncated) {
        require(!rollout.steps.empty() && mdp.is_terminal(rollout.steps.back().s2),
                "untruncated rollout must end in a terminal state");
    }
}

int EmpiricalPolicies::n_visited() const {
    int n = 0;
    for (bool v : visited) n += v ? 1 : 0;
    return n;
}

StochasticPolicy EmpiricalPolicies::completed() const {
    StochasticPolicy out{frequencies};
    for (Eigen::Index s = 0; s < out.probs.rows(); ++s)
        if (!visited[s]) out.probs.row(s).setConstant(1.0 / static_cast<double>(out.probs.cols()));
    return out;
}

DeterministicPolicy EmpiricalPolicies::completed_modal(int fill) const {
    DeterministicPolicy out = modal;
    for (auto& a : out.action_of)
        if (a == kNoAction) a = fill;
    return out;
}

EmpiricalPolicies empirical_policies(std::span<const Rollout> rollouts, int n_states,
                                     int n_actions) {
    require(!rollouts.empty(), "at least one rollout is required");
    require(n_states > 0 && n_actions > 0, "dimensions must be positive");
    EmpiricalPolicies out;
    out.action_counts = Matrix::Zero(n_states, n_actions);
    for (const Rollout& r : rollouts) {
        for (const Step& st : r.steps) {
            require(st.s >= 0 && st.s < n_states && st.s2 >= 0 && st.s2 < n_states,
                    "rollout state index out of range");
            require(st.a >= 0 && st.a < n_actions, "rollout action index out of range");
            out.action_counts(st.s, st.a) += 1.0;
        }
    }
    out.frequencies = Matrix::Zero(n_states, n_actions);
    out.modal.action_of.assign(n_states, kNoAction);
    out.visit_counts.assign(n_states, 0);
    out.visited.assign(n_states, false);
    for (int s = 0; s < n_states; ++s) {
        const double total = out.action_counts.row(s).sum();
        if (total == 0.0) continue;
        out.visited[s] = true;
        out.visit_counts[s] = static_cast<int>(total);
        out.frequencies.row(s) = out.action_counts.row(s) / total;
        Eigen::Index best = 0;
        for (Eigen::Index a = 1; a < n_actions; ++a)
            if (out.action_counts(s, a) > out.action_counts(s, best)) best = a;
        out.modal.action_of[s] = static_cast<int>(best);
    }
    return out;
}

nlohmann::ordered_json to_json(const Rollout& rollout) {
    nlohmann::ordered_json j;
    j["seed"] = rollout.seed ? nlohmann::ordered_json(*rollout.seed) : nlohmann::ordered_json();
    j["source"] = to_string(rollout.source);
    j["session_id"] =
        rollout.session_id ? nlohmann::ordered_json(*rollout.session_id) : nlohmann::ordered_json();
    j["env_fingerprint"] = rollout.env_fingerprint;
    j["truncated"] = rollout.truncated;
    auto steps = nlohmann::ordered_json::array();
    for (const Step& st : rollout.steps) {
        nlohmann::ordered_json e;
        e["s"] = st.s;
        e["a"] = st.a;
        e["r"] = st.r;
        e["s2"] = st.s2;
        steps.push_back(std::move(e));
    }
    j["steps"] = std::move(steps);
    return j;
}

Rollout rollout_from_json(const nlohmann::json& j) {
    static const std::set<std::string> kFields = {"seed",          "source",    "session_id",
                                                  "env_fingerprint", "truncated", "steps"};
    require(j.is_object(), "rollout must be a JSON object");
    for (const auto& [key, _] : j.items())
        require(kFields.count(key) == 1, "unexpected rollout field '" + key + "'");
    for (const auto& key : kFields) require(j.contains(key), "missing rollout field '" + key + "'");

    Rollout r;
    const auto& seed = j.at("seed");
    if (!seed.is_null()) {
        require(seed.is_number_unsigned() || (seed.is_number_integer() && seed.get<long long>() >= 0),
                "rollout seed must be a non-negative integer or null");
        r.seed = seed.get<std::uint64_t>();
    }
    require(j.at("source").is_string(), "rollout source must be a string");
    r.source = rollout_source_from_string(j.at("source").get<std::string>());
    const auto& sid = j.at("session_id");
    if (!sid.is_null()) {
        require(sid.is_string(), "session_id must be a string or null");
        r.session_id = sid.get<std::string>();
    }
    require(j.at("env_fingerprint").is_string(), "env_fingerprint must be a string");
    r.env_fingerprint = j.at("env_fingerprint").get<std::string>();
    require(j.at("truncated").is_boolean(), "truncated must be a boolean");
    r.truncated = j.at("truncated").get<bool>();
    require(j.at("steps").is_array(), "steps must be an array");
    for (const auto& e : j.at("steps")) {
        require(e.is_object() && e.size() == 4 && e.contains("s") && e.contains("a") &&
                    e.contains("r") && e.contains("s2"),
                "each step must be {\"s\",\"a\",\"r\",\"s2\"}");
        require(e.at("s").is_number_integer() && e.at("a").is_number_integer() &&
                    e.at("s2").is_number_integer() && e.at("r").is_number(),
                "step fields have wrong types");
        r.steps.push_back({e.at("s").get<int>(), e.at("a").get<int>(), e.at("r").get<double>(),
                           e.at("s2").get<int>()});
    }
    return r;
}

void write_rollouts_jsonl(std::ostream& out, std::span<const Rollout> rollouts) {
    for (const Rollout& r : rollouts) out << to_json(r).dump() << '\n';
}

std::vector<Rollout> read_rollouts_jsonl(std::istream& in) {
    std::vector<Rollout> out;
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        try {
            out.push_back(rollout_from_json(nlohmann::json::parse(line)));
        } catch (const std::exception& e) {
            throw std::invalid_argument("rollout line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return out;
}

std::string to_jsonl(std::span<const Rollout> rollouts) {
    std::ostringstream os;
    write_rollouts_jsonl(os, rollouts);
    return os.str();
}

}  // namespace cirl
