#include "cirl/experiment.hpp"
#include "cirl/service.hpp"

#include <gtest/gtest.h>
#include <httplib.h>

#include <atomic>
#include <filesystem>
#include <fstream>
#include <future>
#include <set>
#include <sstream>
#include <thread>

using namespace cirl;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct FakeClock {
    std::shared_ptr<std::atomic<std::int64_t>> now = std::make_shared<std::atomic<std::int64_t>>(1'000'000);
    Clock clock() const {
        return [n = now] { return n->load(); };
    }
    void advance(std::int64_t ms) { *now += ms; }
};

ServiceConfig config(std::uint64_t seed = 0) {
    ServiceConfig c;
    c.env = GridworldSpec::carefulness();
    c.master_seed = seed;
    return c;
}

std::vector<Rollout> parse_export(const std::string& text) {
    std::istringstream in(text);
    return read_rollouts_jsonl(in);
}

json step_body(const std::string& dir, int care) { return {{"direction", dir}, {"care", care}}; }

// Walks a deterministic-world session into the cliff and returns the last reply.
ApiResponse walk_into_cliff(SessionStore& store, const std::string& id, int care) {
    ApiResponse r = store.get(id);
    for (int guard = 0; guard < 20; ++guard) {
        const int row = r.body["cell"]["row"];
        const int col = r.body["cell"]["col"];
        const std::string dir = col == 5 ? "left" : "down";
        r = store.step(id, step_body(dir, care));
        if (r.body["done"].get<bool>()) return r;
        (void)row;
    }
    return r;
}

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("cirl_service_" + name);
    fs::remove_all(p);
    return p;
}

}  // namespace

TEST(SessionStore, CreateDescribesTheBoard) {
    SessionStore store(config());
    const ApiResponse r = store.create(json::object());
    ASSERT_EQ(r.status, 201);
    const auto& b = r.body;
    EXPECT_EQ(b["score"], 200.0);
    EXPECT_EQ(b["status"], "active");
    EXPECT_EQ(b["carefulness_levels"], 14);
    EXPECT_EQ(b["actions"].size(), 56u);
    EXPECT_EQ(b["grid"]["width"], 6);
    EXPECT_EQ(b["grid"]["cliff_cells"].size(), 5u);
    const Gridworld w(GridworldSpec::carefulness());
    ASSERT_EQ(b["cost_schedule"].size(), 14u);
    for (int c = 1; c <= 14; ++c) EXPECT_EQ(b["cost_schedule"][c - 1].get<double>(), w.action_cost(c));
    EXPECT_EQ(w.kind(b["state"].get<int>()), CellKind::ground);
    EXPECT_EQ(b["env_fingerprint"], w.fingerprint());
}

TEST(SessionStore, SameMasterSeedReplaysStarts) {
    SessionStore a(config(5)), b(config(5));
    std::set<int> starts;
    for (int i = 0; i < 30; ++i) {
        const auto ra = a.create(json::object());
        const auto rb = b.create(json::object());
        EXPECT_EQ(ra.body["session_id"], rb.body["session_id"]);
        EXPECT_EQ(ra.body["state"], rb.body["state"]);
        starts.insert(ra.body["state"].get<int>());
    }
    EXPECT_GT(starts.size(), 5u);
}

TEST(SessionStore, EnvOverride) {
    SessionStore store(config());
    const auto r = store.create({{"env", {{"carefulness_levels", 2}}}});
    ASSERT_EQ(r.status, 201);
    EXPECT_EQ(r.body["actions"].size(), 8u);
    EXPECT_EQ(store.create({{"env", {{"carefulness_levels", 0}}}}).status, 400);
    EXPECT_EQ(store.create({{"env", {{"colour", "red"}}}}).status, 400);
    EXPECT_EQ(store.create({{"env", 3}}).status, 400);
    EXPECT_EQ(store.create(json::array()).status, 400);
}

TEST(SessionStore, FullCareOnDeterministicWorldAlwaysMovesAsIntended) {
    SessionStore store(config());
    const auto created = store.create({{"env", {{"deterministic", true}}}});
    const std::string id = created.body["session_id"];
    int col = created.body["cell"]["col"];
    int row = created.body["cell"]["row"];
    for (int i = 0; i < 10; ++i) {
        const std::string dir = i % 2 == 0 ? "up" : "right";
        const auto r = store.step(id, step_body(dir, 14));
        ASSERT_EQ(r.status, 200);
        if (dir == "up") row = std::max(0, row - 1);
        if (dir == "right") col = std::min(5, col + 1);
        EXPECT_EQ(r.body["cell"]["row"], row);
        EXPECT_EQ(r.body["cell"]["col"], col);
    }
}

TEST(SessionStore, FallingIntoTheCliff) {
    SessionStore store(config());
    const auto created = store.create({{"env", {{"deterministic", true}}}});
    const std::string id = created.body["session_id"];
    double before = 200.0;
    ApiResponse r = store.get(id);
    while (!r.body["done"].get<bool>()) {
        before = r.body["score"];
        const std::string dir = r.body["cell"]["col"] == 5 ? "left" : "down";
        r = store.step(id, step_body(dir, 3));
        ASSERT_EQ(r.status, 200);
    }
    EXPECT_EQ(r.body["outcome"], "fell");
    EXPECT_EQ(r.body["state"], 24);
    // The move costs 3; the exit step costs 1 and pays the -1000 penalty.
    EXPECT_DOUBLE_EQ(before - r.body["score"].get<double>(), 3.0 + 1000.0 + 1.0);
    ASSERT_EQ(r.body["transitions"].size(), 2u);
    EXPECT_EQ(store.step(id, step_body("up", 1)).status, 409);
    EXPECT_EQ(store.get(id).body["status"], "fell");

    const auto exported = parse_export(store.export_rollouts(RolloutSource::human, std::nullopt));
    ASSERT_EQ(exported.size(), 1u);
    double sum = 0.0;
    for (const Step& s : exported[0].steps) sum += s.r;
    EXPECT_EQ(200.0 + sum, r.body["score"].get<double>());
    EXPECT_EQ(exported[0].session_id, id);
    EXPECT_FALSE(exported[0].truncated);
}

TEST(SessionStore, ErrorCodes) {
    SessionStore store(config());
    const std::string id = store.create(json::object()).body["session_id"];
    EXPECT_EQ(store.step("nope", step_body("up", 1)).status, 404);
    EXPECT_EQ(store.get("nope").status, 404);
    EXPECT_EQ(store.step(id, step_body("north", 1)).status, 400);
    EXPECT_EQ(store.step(id, step_body("up", 0)).status, 400);
    EXPECT_EQ(store.step(id, step_body("up", 15)).status, 400);
    EXPECT_EQ(store.step(id, {{"direction", "up"}, {"care", 1.5}}).status, 400);
    EXPECT_EQ(store.step(id, {{"direction", "up"}}).status, 400);
    EXPECT_EQ(store.step(id, json::array()).status, 400);
    EXPECT_EQ(store.step(id, {{"direction", "up"}, {"care", 1}, {"request_id", 7}}).status, 400);
    EXPECT_EQ(store.get(id).body["steps"], 0);
}

TEST(SessionStore, DuplicateRequestIdIsRejectedWithOriginalReply) {
    SessionStore store(config());
    const std::string id = store.create(json::object()).body["session_id"];
    json body = step_body("right", 2);
    body["request_id"] = "r-1";
    const auto first = store.step(id, body);
    ASSERT_EQ(first.status, 200);
    const auto again = store.step(id, body);
    EXPECT_EQ(again.status, 409);
    EXPECT_TRUE(again.body["duplicate"].get<bool>());
    EXPECT_EQ(again.body["response"], first.body);
    EXPECT_EQ(store.get(id).body["steps"], first.body["steps"]);
}

TEST(SessionStore, ConcurrentStepInSameSessionIsRejected) {
    std::promise<void> entered;
    std::promise<void> release;
    auto release_future = release.get_future().share();
    std::atomic<int> calls{0};
    ServiceConfig c = config();
    c.on_step_locked = [&] {
        if (calls++ == 0) {
            entered.set_value();
            release_future.wait();
        }
    };
    SessionStore store(c);
    const std::string id = store.create(json::object()).body["session_id"];
    auto first = std::async(std::launch::async, [&] { return store.step(id, step_body("up", 1)); });
    entered.get_future().wait();
    const ApiResponse busy = store.step(id, step_body("up", 1));
    EXPECT_EQ(busy.status, 429);
    ASSERT_TRUE(busy.retry_after.has_value());
    EXPECT_GT(busy.body["retry_after_ms"].get<int>(), 0);
    release.set_value();
    EXPECT_EQ(first.get().status, 200);
    EXPECT_EQ(store.get(id).body["steps"], 1);
}

TEST(SessionStore, ParallelSessionsKeepTheirLogsSeparate) {
    FakeClock clock;
    SessionStore store(config(9), clock.clock());
    std::vector<std::string> ids;
    for (int i = 0; i < 100; ++i) ids.push_back(store.create(json::object()).body["session_id"]);
    std::vector<std::thread> threads;
    for (int i = 0; i < 100; ++i) {
        threads.emplace_back([&, i] {
            static const char* dirs[] = {"up", "right", "up", "left"};
            for (int k = 0; k < 30; ++k) {
                const auto r = store.step(ids[i], step_body(dirs[k % 4], 1 + (k + i) % 14));
                if (r.status != 200) break;
            }
        });
    }
    for (auto& t : threads) t.join();
    clock.advance(31 * 60 * 1000);
    store.expire_idle();
    const Gridworld w(GridworldSpec::carefulness());
    const auto rollouts = parse_export(store.export_rollouts(std::nullopt, std::nullopt));
    ASSERT_EQ(rollouts.size(), 100u);
    std::set<std::string> seen;
    for (const auto& r : rollouts) {
        EXPECT_NO_THROW(validate_rollout(w.mdp(), r));
        seen.insert(*r.session_id);
    }
    EXPECT_EQ(seen.size(), 100u);
    EXPECT_NO_THROW(check_rollouts(w, rollouts));
}

TEST(SessionStore, IdleSessionsAreTruncated) {
    FakeClock clock;
    SessionStore store(config(), clock.clock());
    const std::string id = store.create(json::object()).body["session_id"];
    ASSERT_EQ(store.step(id, step_body("up", 1)).status, 200);
    clock.advance(29 * 60 * 1000);
    EXPECT_EQ(store.expire_idle(), 0);
    clock.advance(2 * 60 * 1000);
    EXPECT_EQ(store.step(id, step_body("up", 1)).status, 409);
    EXPECT_EQ(store.get(id).body["status"], "truncated");
    const auto rollouts = parse_export(store.export_rollouts(RolloutSource::human, std::nullopt));
    ASSERT_EQ(rollouts.size(), 1u);
    EXPECT_TRUE(rollouts[0].truncated);
    EXPECT_EQ(rollouts[0].steps.size(), 1u);
}

TEST(SessionStore, ExportFilters) {
    FakeClock clock;
    SessionStore store(config(), clock.clock());
    EXPECT_EQ(store.export_rollouts(RolloutSource::human, std::nullopt), "");
    const std::string early = store.create({{"env", {{"deterministic", true}}}}).body["session_id"];
    walk_into_cliff(store, early, 1);
    clock.advance(5000);
    const std::int64_t t = *clock.now;
    const std::string late = store.create({{"env", {{"deterministic", true}}}}).body["session_id"];
    walk_into_cliff(store, late, 1);
    EXPECT_EQ(parse_export(store.export_rollouts(RolloutSource::human, std::nullopt)).size(), 2u);
    const auto since = parse_export(store.export_rollouts(RolloutSource::human, t));
    ASSERT_EQ(since.size(), 1u);
    EXPECT_EQ(since[0].session_id, late);
    EXPECT_TRUE(parse_export(store.export_rollouts(RolloutSource::synthetic, std::nullopt)).empty());
}

TEST(SessionStore, PersistsAndReloadsJsonl) {
    const fs::path dir = scratch("persist");
    ServiceConfig c = config();
    c.data_dir = dir.string();
    {
        SessionStore store(c);
        for (int i = 0; i < 3; ++i) {
            const std::string id = store.create({{"env", {{"deterministic", true}}}}).body["session_id"];
            walk_into_cliff(store, id, 2);
        }
    }
    std::ifstream in(dir / "human_rollouts.jsonl");
    EXPECT_EQ(read_rollouts_jsonl(in).size(), 3u);
    SessionStore reloaded(c);
    EXPECT_EQ(reloaded.completed_count(), 3u);
    EXPECT_EQ(parse_export(reloaded.export_rollouts(RolloutSource::human, std::nullopt)).size(), 3u);
    EXPECT_TRUE(parse_export(reloaded.export_rollouts(RolloutSource::human, 1)).empty());
}

// Ten completed sessions feed loss-IRL unchanged, and every final score is
// 200 plus the summed rewards.
TEST(SessionStore, ExportFeedsLossIrl) {
    SessionStore store(config(3));
    const Gridworld w(GridworldSpec::carefulness());
    const auto policy = value_iteration(w.mdp()).policy;
    std::map<std::string, double> scores;
    for (int i = 0; i < 10; ++i) {
        auto r = store.create(json::object());
        const std::string id = r.body["session_id"];
        while (!r.body["done"].get<bool>()) {
            const CareAction a = w.care_action(policy.action_of[r.body["state"].get<int>()]);
            r = store.step(id, step_body(to_string(a.direction), a.care));
            ASSERT_EQ(r.status, 200);
        }
        scores[id] = r.body["score"];
    }
    const auto rollouts = parse_export(store.export_rollouts(RolloutSource::human, std::nullopt));
    ASSERT_EQ(rollouts.size(), 10u);
    for (const auto& r : rollouts) {
        double sum = 0.0;
        for (const Step& s : r.steps) sum += s.r;
        EXPECT_EQ(200.0 + sum, scores.at(*r.session_id));
    }
    const auto sol = run_irl(w, IrlMethod::loss, rollouts, default_irl_config(w));
    EXPECT_TRUE(sol.diagnostics.warnings.empty());
}

class HttpApi : public ::testing::Test {
protected:
    void SetUp() override {
        static_dir_ = scratch("static");
        fs::create_directories(static_dir_);
        std::ofstream(static_dir_ / "index.html") << "<html>game</html>";
        ServiceConfig c = config(1);
        c.static_dir = static_dir_.string();
        c.on_step_locked = [this] {
            if (block_next_) {
                block_next_ = false;
                entered_.set_value();
                release_.get_future().wait();
            }
        };
        store_ = std::make_unique<SessionStore>(c);
        register_routes(server_, *store_);
        port_ = server_.bind_to_any_port("127.0.0.1");
        ASSERT_GT(port_, 0);
        thread_ = std::thread([this] { server_.listen_after_bind(); });
        server_.wait_until_ready();
    }
    void TearDown() override {
        server_.stop();
        thread_.join();
    }
    httplib::Client client() const { return httplib::Client("127.0.0.1", port_); }

    fs::path static_dir_;
    std::unique_ptr<SessionStore> store_;
    httplib::Server server_;
    std::thread thread_;
    int port_ = 0;
    std::atomic<bool> block_next_{false};
    std::promise<void> entered_;
    std::promise<void> release_;
};

TEST_F(HttpApi, SessionLifecycle) {
    auto cli = client();
    auto created = cli.Post("/sessions", "{}", "application/json");
    ASSERT_TRUE(created);
    EXPECT_EQ(created->status, 201);
    const json body = json::parse(created->body);
    const std::string id = body["session_id"];

    auto step = cli.Post("/sessions/" + id + "/step", R"({"direction":"up","care":2,"request_id":"a"})",
                         "application/json");
    ASSERT_TRUE(step);
    EXPECT_EQ(step->status, 200);
    EXPECT_EQ(step->get_header_value("Content-Type"), "application/json");
    auto dup = cli.Post("/sessions/" + id + "/step", R"({"direction":"up","care":2,"request_id":"a"})",
                        "application/json");
    EXPECT_EQ(dup->status, 409);
    EXPECT_EQ(json::parse(dup->body)["response"], json::parse(step->body));

    auto got = cli.Get("/sessions/" + id);
    EXPECT_EQ(got->status, 200);
    EXPECT_EQ(json::parse(got->body)["steps"], 1);

    EXPECT_EQ(cli.Get("/sessions/unknown")->status, 404);
    EXPECT_EQ(cli.Post("/sessions/unknown/step", R"({"direction":"up","care":1})", "application/json")->status, 404);
    EXPECT_EQ(cli.Post("/sessions/" + id + "/step", "{not json", "application/json")->status, 400);
    EXPECT_EQ(cli.Post("/sessions/" + id + "/step", R"({"direction":"up","care":99})", "application/json")->status,
              400);
    EXPECT_EQ(cli.Post("/sessions", "[1,", "application/json")->status, 400);
}

TEST_F(HttpApi, BusySessionGets429WithRetryAfter) {
    auto cli = client();
    const std::string id = json::parse(cli.Post("/sessions", "{}", "application/json")->body)["session_id"];
    block_next_ = true;
    auto first = std::async(std::launch::async, [&] {
        auto c = client();
        return c.Post("/sessions/" + id + "/step", R"({"direction":"up","care":1})", "application/json")->status;
    });
    entered_.get_future().wait();
    auto busy = cli.Post("/sessions/" + id + "/step", R"({"direction":"up","care":1})", "application/json");
    EXPECT_EQ(busy->status, 429);
    EXPECT_EQ(busy->get_header_value("Retry-After"), "1");
    release_.set_value();
    EXPECT_EQ(first.get(), 200);
}

TEST_F(HttpApi, RolloutExport) {
    auto cli = client();
    auto empty = cli.Get("/rollouts?source=human");
    ASSERT_TRUE(empty);
    EXPECT_EQ(empty->status, 200);
    EXPECT_EQ(empty->body, "");
    const std::string id =
        json::parse(cli.Post("/sessions", R"({"env":{"deterministic":true}})", "application/json")->body)["session_id"];
    json r;
    do {
        r = json::parse(cli.Get("/sessions/" + id)->body);
        const std::string dir = r["cell"].is_null() || r["cell"]["col"] != 5 ? "down" : "left";
        r = json::parse(cli.Post("/sessions/" + id + "/step", json{{"direction", dir}, {"care", 1}}.dump(),
                                 "application/json")
                            ->body);
    } while (!r["done"].get<bool>());
    auto all = cli.Get("/rollouts?source=human");
    EXPECT_EQ(all->get_header_value("Content-Type"), "application/x-ndjson");
    EXPECT_EQ(parse_export(all->body).size(), 1u);
    EXPECT_EQ(parse_export(cli.Get("/rollouts?source=human&since=99999999999999")->body).size(), 0u);
    EXPECT_EQ(cli.Get("/rollouts?source=robot")->status, 400);
    EXPECT_EQ(cli.Get("/rollouts?since=yesterday")->status, 400);
}

TEST_F(HttpApi, ServesStaticBundle) {
    auto cli = client();
    auto page = cli.Get("/index.html");
    ASSERT_TRUE(page);
    EXPECT_EQ(page->status, 200);
    EXPECT_EQ(page->body, "<html>game</html>");
}
