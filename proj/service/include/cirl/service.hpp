#pragma once

#include "cirl/gridworld.hpp"
#include "cirl/random.hpp"
#include "cirl/rollout.hpp"

#include <nlohmann/json.hpp>

#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

namespace httplib {
class Server;
}

namespace cirl {

/// Milliseconds since the Unix epoch.
using Clock = std::function<std::int64_t()>;
std::int64_t system_clock_ms();

struct ServiceConfig {
    GridworldSpec env;
    std::uint64_t master_seed = 0;
    /// Completed rollouts are appended to data_dir/human_rollouts.jsonl.
    /// Empty keeps them in memory only.
    std::string data_dir;
    std::string static_dir;
    std::int64_t idle_timeout_ms = 30 * 60 * 1000;
    /// Called while a step holds its session lock. Test seam.
    std::function<void()> on_step_locked;
};

enum class SessionStatus { active, fell, reached_goal, truncated };
std::string to_string(SessionStatus status);

struct ApiResponse {
    int status = 200;
    nlohmann::ordered_json body;
    /// Seconds, sent as Retry-After when set.
    std::optional<int> retry_after;
};

/// In-process session state behind the HTTP API. Thread-safe; steps within
/// one session are serialised and a concurrent second step is rejected.
class SessionStore {
public:
    explicit SessionStore(ServiceConfig config, Clock clock = system_clock_ms);

    /// Body may carry {"env": {...}} with keys overriding the default spec.
    ApiResponse create(const nlohmann::json& body);
    /// Body: {"direction": "up|down|left|right", "care": int, "request_id"?: string}.
    ApiResponse step(const std::string& id, const nlohmann::json& body);
    ApiResponse get(const std::string& id);

    /// Completed rollouts, in completion order, created at or after `since_ms`.
    std::string export_rollouts(std::optional<RolloutSource> source,
                                std::optional<std::int64_t> since_ms) const;

    /// Truncates and flushes active sessions idle longer than the timeout.
    int expire_idle();

    std::size_t completed_count() const;
    const ServiceConfig& config() const noexcept { return config_; }

private:
    struct Session {
        std::string id;
        std::shared_ptr<const Gridworld> world;
        Rng rng{0};
        std::uint64_t seed = 0;
        int state = 0;
        double score = 0.0;
        SessionStatus status = SessionStatus::active;
        Rollout log;
        std::int64_t created_at = 0;
        std::int64_t last_activity = 0;
        std::map<std::string, nlohmann::ordered_json> replies;
        std::mutex mutex;
    };

    struct Completed {
        std::int64_t created_at;
        RolloutSource source;
        std::string line;
    };

    std::shared_ptr<Session> find(const std::string& id) const;
    std::shared_ptr<const Gridworld> world_for(const GridworldSpec& spec);
    nlohmann::ordered_json view(const Session& session) const;
    void finish(Session& session, SessionStatus status);

    ServiceConfig config_;
    Clock clock_;
    std::string store_path_;

    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::uint64_t counter_ = 0;

    std::mutex worlds_mutex_;
    std::map<std::string, std::shared_ptr<const Gridworld>> worlds_;

    mutable std::mutex completed_mutex_;
    std::vector<Completed> completed_;
};

/// Registers the JSON routes (and the static mount when configured) on `server`.
void register_routes(httplib::Server& server, SessionStore& store);

}  // namespace cirl
