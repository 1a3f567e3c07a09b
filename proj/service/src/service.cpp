#include "cirl/service.hpp"

#include <httplib.h>

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace cirl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

constexpr double kInitialScore = 200.0;
constexpr int kRetryAfterSeconds = 1;
constexpr const char* kStoreFile = "human_rollouts.jsonl";

ApiResponse error(int status, const std::string& message) {
    return {status, ordered_json{{"error", message}}, std::nullopt};
}

ordered_json cell_json(Cell c) { return {{"row", c.row}, {"col", c.col}}; }

std::string hex_id(std::uint64_t v) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(v));
    return buf;
}

}  // namespace

std::int64_t system_clock_ms() {
    using namespace std::chrono;
    return duration_cast<milliseconds>(system_clock::now().time_since_epoch()).count();
}

std::string to_string(SessionStatus status) {
    switch (status) {
        case SessionStatus::active: return "active";
        case SessionStatus::fell: return "fell";
        case SessionStatus::reached_goal: return "reached_goal";
        case SessionStatus::truncated: return "truncated";
    }
    return "?";
}

SessionStore::SessionStore(ServiceConfig config, Clock clock)
    : config_(std::move(config)), clock_(std::move(clock)) {
    config_.env.validate();
    world_for(config_.env);
    if (config_.data_dir.empty()) return;
    fs::create_directories(config_.data_dir);
    store_path_ = (fs::path(config_.data_dir) / kStoreFile).string();
    std::ifstream in(store_path_);
    if (!in) return;
    // Rollouts from earlier runs keep no creation time; any `since` filter excludes them.
    for (const Rollout& r : read_rollouts_jsonl(in))
        completed_.push_back({0, r.source, to_json(r).dump()});
}

std::shared_ptr<const Gridworld> SessionStore::world_for(const GridworldSpec& spec) {
    const std::string key = fingerprint(spec);
    std::lock_guard lock(worlds_mutex_);
    auto it = worlds_.find(key);
    if (it == worlds_.end()) it = worlds_.emplace(key, std::make_shared<const Gridworld>(spec)).first;
    return it->second;
}

std::shared_ptr<SessionStore::Session> SessionStore::find(const std::string& id) const {
    std::shared_lock lock(sessions_mutex_);
    const auto it = sessions_.find(id);
    return it == sessions_.end() ? nullptr : it->second;
}

ordered_json SessionStore::view(const Session& s) const {
    ordered_json j;
    j["session_id"] = s.id;
    j["status"] = to_string(s.status);
    j["done"] = s.status != SessionStatus::active;
    j["state"] = s.state;
    j["cell"] = s.state == s.world->sink() ? ordered_json(nullptr) : cell_json(s.world->cell_of(s.state));
    j["score"] = s.score;
    j["steps"] = s.log.steps.size();
    j["created_at_ms"] = s.created_at;
    j["env_fingerprint"] = s.world->fingerprint();
    return j;
}

void SessionStore::finish(Session& s, SessionStatus status) {
    s.status = status;
    s.log.truncated = status == SessionStatus::truncated;
    const std::string line = to_json(s.log).dump();
    std::lock_guard lock(completed_mutex_);
    if (!store_path_.empty()) {
        std::ofstream out(store_path_, std::ios::app | std::ios::binary);
        if (!out) throw std::runtime_error("cannot append to '" + store_path_ + "'");
        out << line << '\n';
    }
    completed_.push_back({s.created_at, s.log.source, line});
}

ApiResponse SessionStore::create(const json& body) {
    if (!body.is_null() && !body.is_object()) return error(400, "request body must be a JSON object");
    std::shared_ptr<const Gridworld> world;
    if (body.is_object() && body.contains("env")) {
        const json& override_env = body.at("env");
        if (!override_env.is_object()) return error(400, "env override must be a JSON object");
        json merged = to_json(config_.env);
        for (const auto& [key, value] : override_env.items()) merged[key] = value;
        if (!override_env.contains("simple_success_prob") && merged.value("carefulness_levels", 1) != 1)
            merged["simple_success_prob"] = nullptr;
        try {
            world = world_for(gridworld_spec_from_json(merged));
        } catch (const std::exception& e) {
            return error(400, std::string("invalid env override: ") + e.what());
        }
    } else {
        world = world_for(config_.env);
    }

    auto s = std::make_shared<Session>();
    {
        std::unique_lock lock(sessions_mutex_);
        const std::uint64_t n = counter_++;
        s->seed = derive_seed(config_.master_seed, n);
        s->id = hex_id(derive_seed(s->seed, 0x5e55));
        sessions_[s->id] = s;
    }
    std::lock_guard guard(s->mutex);
    s->world = world;
    s->rng = Rng(s->seed);
    const auto& ground = world->ground_states();
    s->state = ground[s->rng.below(ground.size())];
    s->score = kInitialScore;
    s->created_at = clock_();
    s->last_activity = s->created_at;
    s->log.seed = s->seed;
    s->log.source = RolloutSource::human;
    s->log.session_id = s->id;
    s->log.env_fingerprint = world->fingerprint();

    ordered_json j = view(*s);
    j["seed"] = s->seed;
    const auto& spec = world->spec();
    ordered_json cliffs = ordered_json::array();
    for (Cell c : spec.cliff_cells) cliffs.push_back(cell_json(c));
    j["grid"] = {{"width", spec.width},       {"height", spec.height},
                 {"cliff_cells", cliffs},     {"goal_cell", cell_json(spec.goal_cell)},
                 {"sink_state", world->sink()}};
    j["carefulness_levels"] = world->levels();
    ordered_json costs = ordered_json::array();
    ordered_json success = ordered_json::array();
    for (int c = 1; c <= world->levels(); ++c) {
        costs.push_back(world->action_cost(c));
        success.push_back(world->success_probability(c));
    }
    j["cost_schedule"] = std::move(costs);
    j["success_probabilities"] = std::move(success);
    ordered_json actions = ordered_json::array();
    for (int a = 0; a < world->n_actions(); ++a) {
        const CareAction ca = world->care_action(a);
        actions.push_back({{"index", a},
                           {"direction", to_string(ca.direction)},
                           {"care", ca.care},
                           {"cost", world->action_cost(ca.care)}});
    }
    j["actions"] = std::move(actions);
    j["max_episode_steps"] = spec.max_episode_steps;
    return {201, std::move(j), std::nullopt};
}

ApiResponse SessionStore::step(const std::string& id, const json& body) {
    const auto s = find(id);
    if (!s) return error(404, "unknown session '" + id + "'");
    if (!body.is_object()) return error(400, "request body must be a JSON object");

    std::optional<std::string> request_id;
    if (body.contains("request_id")) {
        if (!body.at("request_id").is_string()) return error(400, "request_id must be a string");
        request_id = body.at("request_id").get<std::string>();
    }

    std::unique_lock lock(s->mutex, std::try_to_lock);
    if (!lock.owns_lock()) {
        ApiResponse busy = error(429, "a step for this session is already in progress");
        busy.body["retry_after_ms"] = kRetryAfterSeconds * 1000;
        busy.retry_after = kRetryAfterSeconds;
        return busy;
    }
    if (config_.on_step_locked) config_.on_step_locked();
    if (request_id) {
        const auto it = s->replies.find(*request_id);
        if (it != s->replies.end()) {
            ApiResponse dup = error(409, "duplicate request_id '" + *request_id + "'");
            dup.body["duplicate"] = true;
            dup.body["response"] = it->second;
            return dup;
        }
    }

    const Gridworld& world = *s->world;
    const std::int64_t now = clock_();
    if (s->status == SessionStatus::active && now - s->last_activity > config_.idle_timeout_ms)
        finish(*s, SessionStatus::truncated);
    if (s->status != SessionStatus::active)
        return error(409, "session is finished (" + to_string(s->status) + ")");

    Direction direction;
    int care = 0;
    try {
        direction = direction_from_string(body.at("direction").get<std::string>());
        const json& c = body.at("care");
        if (!c.is_number_integer()) throw std::invalid_argument("care must be an integer");
        care = c.get<int>();
    } catch (const std::exception& e) {
        return error(400, std::string("malformed action: ") + e.what());
    }
    if (care < 1 || care > world.levels())
        return error(400, "care must lie in [1, " + std::to_string(world.levels()) + "]");

    const Mdp& mdp = world.mdp();
    ordered_json transitions = ordered_json::array();
    double reward = 0.0;
    auto apply = [&](int action) {
        const auto succ = mdp.successors(s->state, action);
        std::vector<double> probs;
        probs.reserve(succ.size());
        for (const Successor& x : succ) probs.push_back(x.prob);
        const int next = succ[s->rng.categorical(probs)].state;
        const double r = mdp.reward()(s->state, action);
        s->log.steps.push_back({s->state, action, r, next});
        transitions.push_back({{"s", s->state}, {"a", action}, {"r", r}, {"s2", next}});
        s->score += r;
        reward += r;
        s->state = next;
    };

    apply(world.action_index({direction, care}));
    if (world.is_exit(s->state)) {
        const SessionStatus outcome =
            world.kind(s->state) == CellKind::cliff ? SessionStatus::fell : SessionStatus::reached_goal;
        // The exit cell pays its bonus on the move into the sink.
        apply(0);
        finish(*s, outcome);
    } else if (static_cast<int>(s->log.steps.size()) >= world.spec().max_episode_steps) {
        finish(*s, SessionStatus::truncated);
    }
    s->last_activity = now;

    ordered_json j = view(*s);
    j["reward"] = reward;
    j["outcome"] = s->status == SessionStatus::active ? ordered_json(nullptr) : ordered_json(to_string(s->status));
    j["transitions"] = std::move(transitions);
    if (request_id) s->replies[*request_id] = j;
    return {200, std::move(j), std::nullopt};
}

ApiResponse SessionStore::get(const std::string& id) {
    const auto s = find(id);
    if (!s) return error(404, "unknown session '" + id + "'");
    std::lock_guard lock(s->mutex);
    if (s->status == SessionStatus::active && clock_() - s->last_activity > config_.idle_timeout_ms)
        finish(*s, SessionStatus::truncated);
    return {200, view(*s), std::nullopt};
}

std::string SessionStore::export_rollouts(std::optional<RolloutSource> source,
                                          std::optional<std::int64_t> since_ms) const {
    std::lock_guard lock(completed_mutex_);
    std::string out;
    for (const Completed& c : completed_) {
        if (source && c.source != *source) continue;
        if (since_ms && c.created_at < *since_ms) continue;
        out += c.line;
        out += '\n';
    }
    return out;
}

int SessionStore::expire_idle() {
    std::vector<std::shared_ptr<Session>> all;
    {
        std::shared_lock lock(sessions_mutex_);
        for (const auto& [id, s] : sessions_) all.push_back(s);
    }
    const std::int64_t now = clock_();
    int expired = 0;
    for (const auto& s : all) {
        std::unique_lock lock(s->mutex, std::try_to_lock);
        if (!lock.owns_lock()) continue;
        if (s->status == SessionStatus::active && now - s->last_activity > config_.idle_timeout_ms) {
            finish(*s, SessionStatus::truncated);
            ++expired;
        }
    }
    return expired;
}

std::size_t SessionStore::completed_count() const {
    std::lock_guard lock(completed_mutex_);
    return completed_.size();
}

namespace {

void send(httplib::Response& res, const ApiResponse& api) {
    res.status = api.status;
    if (api.retry_after) res.set_header("Retry-After", std::to_string(*api.retry_after));
    res.set_content(api.body.dump(), "application/json");
}

std::optional<json> parse_body(const httplib::Request& req, httplib::Response& res) {
    if (req.body.empty()) return json::object();
    try {
        return json::parse(req.body);
    } catch (const json::parse_error& e) {
        send(res, error(400, std::string("malformed JSON: ") + e.what()));
        return std::nullopt;
    }
}

}  // namespace

void register_routes(httplib::Server& server, SessionStore& store) {
    server.Post("/sessions", [&store](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req, res);
        if (body) send(res, store.create(*body));
    });
    server.Post(R"(/sessions/([^/]+)/step)", [&store](const httplib::Request& req, httplib::Response& res) {
        const auto body = parse_body(req, res);
        if (body) send(res, store.step(req.matches[1], *body));
    });
    server.Get(R"(/sessions/([^/]+))", [&store](const httplib::Request& req, httplib::Response& res) {
        send(res, store.get(req.matches[1]));
    });
    server.Get("/rollouts", [&store](const httplib::Request& req, httplib::Response& res) {
        std::optional<RolloutSource> source;
        std::optional<std::int64_t> since;
        try {
            if (req.has_param("source")) source = rollout_source_from_string(req.get_param_value("source"));
            if (req.has_param("since")) {
                const std::string text = req.get_param_value("since");
                std::size_t used = 0;
                since = std::stoll(text, &used);
                if (used != text.size()) throw std::invalid_argument("since must be an integer");
            }
        } catch (const std::exception& e) {
            send(res, error(400, std::string("bad query: ") + e.what()));
            return;
        }
        store.expire_idle();
        res.set_content(store.export_rollouts(source, since), "application/x-ndjson");
    });
    const std::string& dir = store.config().static_dir;
    if (!dir.empty()) {
        if (!server.set_mount_point("/", dir))
            throw std::invalid_argument("static directory '" + dir + "' does not exist");
    }
}

}  // namespace cirl
