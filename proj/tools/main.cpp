#include "cirl/experiment.hpp"
#include "cirl/render.hpp"
#include "cirl/service.hpp"

#include <CLI11.hpp>
#include <httplib.h>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include <atomic>
#include <csignal>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;
using namespace cirl;

namespace {

constexpr int kConfigError = 2;
constexpr int kSolverError = 3;

/// A preset name, or a path to a GridworldSpec JSON file.
GridworldSpec load_env(const std::string& env) {
    if (env.empty() || env == "carefulness") return GridworldSpec::carefulness();
    if (env == "simple") return GridworldSpec::simple();
    if (env == "benchmark") return GridworldSpec::benchmark();
    return load_gridworld_spec(env);
}

std::string read_file(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

json read_json(const std::string& path) {
    try {
        return json::parse(read_file(path));
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("'" + path + "' is not valid JSON: " + e.what());
    }
}

void write_file(const fs::path& path, const std::string& text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::invalid_argument("cannot write '" + path.string() + "'");
    out << text;
    spdlog::info("wrote {}", path.string());
}

std::vector<Rollout> read_rollouts(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("cannot open '" + path + "'");
    return read_rollouts_jsonl(in);
}

struct Common {
    std::string env;
    std::uint64_t seed = 0;
    std::string out;
};

void add_common(CLI::App* cmd, Common& c, const std::string& out_help) {
    cmd->add_option("--env", c.env, "Preset (carefulness, simple, benchmark) or GridworldSpec JSON path")
        ->default_str("carefulness");
    cmd->add_option("--seed", c.seed, "Random seed recorded in every artefact")->default_val(0);
    cmd->add_option("--out", c.out, out_help)->required();
}

int cmd_solve(const Common& c) {
    const Gridworld world(load_env(c.env));
    const auto vi = value_iteration(world.mdp());
    const fs::path dir(c.out);
    const std::string header = provenance_comment(world.fingerprint(), c.seed);
    ordered_json policy = policy_to_json(world, vi.policy, c.seed);
    policy["sweeps"] = vi.sweeps;
    write_file(dir / "policy.json", policy.dump(2) + "\n");
    write_file(dir / "policy.csv", header + policy_grid_csv(world, vi.policy));
    write_file(dir / "values.csv", header + grid_csv(world, vi.values.v));
    write_file(dir / "q.csv", header + q_table_csv(world, vi.values.q));
    std::cout << ascii_policy(world, vi.policy);
    return 0;
}

struct RolloutArgs {
    std::string policy;
    int n = 100;
    double epsilon = 0.0;
    double beta = 0.0;
};

int cmd_rollout(const Common& c, const RolloutArgs& a) {
    const Gridworld world(load_env(c.env));
    DeterministicPolicy policy = a.policy.empty() ? value_iteration(world.mdp()).policy
                                                  : policy_from_json(world, read_json(a.policy));
    std::vector<Rollout> rollouts;
    if (a.beta > 0.0) {
        if (!a.policy.empty()) throw std::invalid_argument("--beta samples the softmax expert; drop --policy");
        const SoftValues soft = soft_value_iteration(world.mdp(), world.mdp().reward(), a.beta);
        rollouts = generate_rollouts(world, soft.policy, a.n, c.seed);
    } else if (a.epsilon > 0.0) {
        rollouts = generate_rollouts(world, epsilon_greedy(policy, a.epsilon, world.n_actions()), a.n, c.seed);
    } else {
        rollouts = generate_rollouts(world, policy, a.n, c.seed);
    }
    write_file(c.out, to_jsonl(rollouts));
    std::size_t truncated = 0;
    for (const auto& r : rollouts) truncated += r.truncated ? 1 : 0;
    std::cout << rollouts.size() << " rollouts, " << truncated << " truncated\n";
    return 0;
}

struct IrlArgs {
    std::string method = "lp";
    std::string rollouts;
    std::string policy;
    std::string config;
    std::optional<double> lambda;
    std::optional<double> r_max;
    std::optional<double> beta;
};

int cmd_irl(const Common& c, const IrlArgs& a) {
    const Gridworld world(load_env(c.env));
    const IrlMethod method = irl_method_from_string(a.method);
    IrlRunConfig config = default_irl_config(world);
    if (!a.config.empty()) apply_irl_overrides(config, read_json(a.config));
    json flags = json::object();
    if (a.lambda) flags["lambda"] = *a.lambda;
    if (a.r_max) flags["r_max"] = *a.r_max;
    if (a.beta) flags["beta"] = *a.beta;
    apply_irl_overrides(config, flags);

    if (a.rollouts.empty() == a.policy.empty())
        throw std::invalid_argument("give exactly one of --rollouts and --policy");
    IrlSolution solution;
    if (!a.policy.empty()) {
        if (method != IrlMethod::lp) throw std::invalid_argument("--policy input is only supported by --method lp");
        solution = run_lp_irl_on_policy(world, policy_from_json(world, read_json(a.policy)), config);
    } else {
        solution = run_irl(world, method, read_rollouts(a.rollouts), config);
    }
    for (const auto& w : solution.diagnostics.warnings) spdlog::warn("{}", w);

    const fs::path dir(c.out);
    const std::string header = provenance_comment(world.fingerprint(), c.seed);
    const ordered_json j = to_json(solution, world, c.seed);
    write_file(dir / "solution.json", j.dump(2) + "\n");
    write_file(dir / "reward.csv", header + grid_csv(world, solution.r_state_canonical));
    write_file(dir / "reward_raw.csv", header + grid_csv(world, solution.raw.r_state));
    const auto& sev = j["severity"]["canonical"];
    std::cout << "severity ratio " << format_number(sev["severity_ratio"].get<double>()) << " (cliff mean "
              << format_number(sev["cliff_mean"].get<double>()) << ", goal "
              << format_number(sev["goal"].get<double>()) << ")\n";
    std::cout << ascii_grid(world, solution.r_state_canonical);
    return 0;
}

struct RenderArgs {
    std::string reward;
    std::string policy;
    std::string title;
};

int cmd_render(const Common& c, const RenderArgs& a) {
    const Gridworld world(load_env(c.env));
    if (a.reward.empty() == a.policy.empty())
        throw std::invalid_argument("give exactly one of --reward and --policy");
    const fs::path dir(c.out);
    const std::string comment = "<!-- env_fingerprint=" + world.fingerprint() + " seed=" + std::to_string(c.seed) + " -->\n";
    if (!a.reward.empty()) {
        const Vector r = parse_grid_csv(world, read_file(a.reward));
        const std::string title = a.title.empty() ? "reward" : a.title;
        write_file(dir / "reward.txt", ascii_grid(world, r));
        write_file(dir / "reward.svg", comment + svg_heatmap(world, r, title));
        std::cout << ascii_grid(world, r);
    } else {
        const DeterministicPolicy p = policy_from_json(world, read_json(a.policy));
        const std::string title = a.title.empty() ? "policy" : a.title;
        write_file(dir / "policy.txt", ascii_policy(world, p));
        write_file(dir / "policy.svg", comment + svg_policy(world, p, title));
        std::cout << ascii_policy(world, p);
    }
    return 0;
}

int cmd_experiment(const std::string& manifest_path, int threads) {
    const ExperimentManifest manifest = load_manifest(manifest_path);
    const ordered_json report = run_experiment(manifest, threads);
    for (const auto& r : report["results"]) {
        std::cout << r["run"].get<std::string>() << " C=" << r["carefulness_levels"].get<int>()
                  << " ratio=" << format_number(r["severity"]["canonical"]["severity_ratio"].get<double>()) << '\n';
    }
    std::cout << "report: " << (fs::path(manifest.output_dir) / "report.json").string() << '\n';
    return 0;
}

struct ServeArgs {
    std::string env;
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string data_dir = "data";
    std::string static_dir;
    std::uint64_t master_seed = 0;
};

httplib::Server* g_server = nullptr;

void on_signal(int) {
    if (g_server) g_server->stop();
}

int cmd_serve(const ServeArgs& a) {
    ServiceConfig config;
    config.env = load_env(a.env);
    config.master_seed = a.master_seed;
    config.data_dir = a.data_dir;
    config.static_dir = a.static_dir;
    SessionStore store(config);
    httplib::Server server;
    register_routes(server, store);

    std::atomic<bool> running{true};
    std::jthread sweeper([&] {
        while (running) {
            for (int i = 0; i < 50 && running; ++i) std::this_thread::sleep_for(std::chrono::milliseconds(100));
            if (const int n = store.expire_idle(); n > 0) spdlog::info("truncated {} idle sessions", n);
        }
    });
    g_server = &server;
    std::signal(SIGINT, on_signal);
    std::signal(SIGTERM, on_signal);
    int port = a.port;
    if (port == 0) {
        port = server.bind_to_any_port(a.host);
    } else if (!server.bind_to_port(a.host, port)) {
        port = -1;
    }
    if (port < 0) {
        running = false;
        throw std::invalid_argument("cannot bind " + a.host + ":" + std::to_string(a.port));
    }
    // Tests read the bound port from this line.
    std::cout << "listening on " << a.host << ":" << port << std::endl;
    server.listen_after_bind();
    running = false;
    g_server = nullptr;
    return 0;
}

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("careful-irl");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* level = std::getenv("CAREFUL_IRL_LOG")) {
        spdlog::set_level(spdlog::level::from_str(level));
    }
}

}  // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"Inverse reinforcement learning on the carefulness gridworld"};
    app.require_subcommand(1);

    Common solve_c;
    auto* solve = app.add_subcommand("solve", "Value iteration: policy JSON, V and Q CSV");
    add_common(solve, solve_c, "Output directory");

    Common roll_c;
    RolloutArgs roll_a;
    auto* roll = app.add_subcommand("rollout", "Sample episodes into a JSONL file");
    add_common(roll, roll_c, "Output JSONL file");
    roll->add_option("--policy", roll_a.policy, "Policy JSON (default: optimal policy)");
    roll->add_option("-n,--count", roll_a.n, "Number of episodes")->default_val(100)->check(CLI::NonNegativeNumber);
    roll->add_option("--epsilon", roll_a.epsilon, "Epsilon-greedy noise")->default_val(0.0)->check(CLI::Range(0.0, 1.0));
    roll->add_option("--beta", roll_a.beta, "Sample a softmax expert with this inverse temperature")
        ->check(CLI::PositiveNumber);

    Common irl_c;
    IrlArgs irl_a;
    auto* irl = app.add_subcommand("irl", "Recover R_S from rollouts or a policy");
    add_common(irl, irl_c, "Output directory");
    irl->add_option("--method", irl_a.method, "lp, loss or maxent")->default_val("lp");
    irl->add_option("--rollouts", irl_a.rollouts, "Rollout JSONL file");
    irl->add_option("--policy", irl_a.policy, "Policy JSON (lp only; every state constrained)");
    irl->add_option("--config", irl_a.config, "JSON object of solver overrides");
    irl->add_option("--lambda", irl_a.lambda, "L1 weight (lp)");
    irl->add_option("--rmax", irl_a.r_max, "Reward bound |R_S| <= rmax (lp, loss)");
    irl->add_option("--beta", irl_a.beta, "Inverse temperature (maxent)");

    Common render_c;
    RenderArgs render_a;
    auto* render = app.add_subcommand("render", "ASCII and SVG figures from a reward CSV or policy JSON");
    add_common(render, render_c, "Output directory");
    render->add_option("--reward", render_a.reward, "Grid reward CSV");
    render->add_option("--policy", render_a.policy, "Policy JSON");
    render->add_option("--title", render_a.title, "Figure title");

    std::string manifest;
    int threads = 0;
    auto* experiment = app.add_subcommand("experiment", "Run a manifest of IRL fits and write report.json");
    experiment->add_option("manifest", manifest, "Manifest JSON")->required();
    experiment->add_option("--threads", threads, "Worker threads (0: hardware concurrency)")->default_val(0);

    ServeArgs serve_a;
    auto* serve = app.add_subcommand("serve", "HTTP session service for the browser game");
    serve->add_option("--env", serve_a.env, "Preset or GridworldSpec JSON path")->default_str("carefulness");
    serve->add_option("--host", serve_a.host, "Bind address")->default_val("127.0.0.1");
    serve->add_option("--port", serve_a.port, "Port (0 picks a free one)")->default_val(8080);
    serve->add_option("--data-dir", serve_a.data_dir, "Directory for human_rollouts.jsonl")->default_val("data");
    serve->add_option("--static", serve_a.static_dir, "Directory served at /");
    serve->add_option("--master-seed", serve_a.master_seed, "Seed for the per-session streams")->default_val(0);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kConfigError;
    }

    try {
        if (*solve) return cmd_solve(solve_c);
        if (*roll) return cmd_rollout(roll_c, roll_a);
        if (*irl) return cmd_irl(irl_c, irl_a);
        if (*render) return cmd_render(render_c, render_a);
        if (*experiment) return cmd_experiment(manifest, threads);
        if (*serve) return cmd_serve(serve_a);
    } catch (const SolverError& e) {
        spdlog::error("solver failure: {}", e.what());
        return kSolverError;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return kConfigError;
    }
    return kConfigError;
}
