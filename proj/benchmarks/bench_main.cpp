#include "cirl/experiment.hpp"
#include "cirl/irl_loss.hpp"
#include "cirl/irl_lp.hpp"
#include "cirl/irl_maxent.hpp"

#include <benchmark/benchmark.h>

#include <map>

using namespace cirl;

namespace {

const Gridworld& world(int levels) {
    static std::map<int, Gridworld> cache;
    auto it = cache.find(levels);
    if (it == cache.end()) it = cache.emplace(levels, Gridworld(GridworldSpec::carefulness(levels))).first;
    return it->second;
}

void BM_ValueIteration(benchmark::State& state) {
    const Gridworld& w = world(static_cast<int>(state.range(0)));
    for (auto _ : state) benchmark::DoNotOptimize(value_iteration(w.mdp()));
}
BENCHMARK(BM_ValueIteration)->Arg(1)->Arg(4)->Arg(14)->Unit(benchmark::kMillisecond);

void BM_PolicyEvaluationDirect(benchmark::State& state) {
    const Gridworld& w = world(static_cast<int>(state.range(0)));
    const auto pi = StochasticPolicy::from(value_iteration(w.mdp()).policy, w.n_actions());
    for (auto _ : state) benchmark::DoNotOptimize(policy_evaluation_direct(w.mdp(), pi));
}
BENCHMARK(BM_PolicyEvaluationDirect)->Arg(1)->Arg(14)->Unit(benchmark::kMicrosecond);

void BM_BuildLpMatrices(benchmark::State& state) {
    const Gridworld& w = world(static_cast<int>(state.range(0)));
    const auto pi = StochasticPolicy::from(value_iteration(w.mdp()).policy, w.n_actions());
    for (auto _ : state) benchmark::DoNotOptimize(build_lp_matrices(w.mdp(), pi));
}
BENCHMARK(BM_BuildLpMatrices)->Arg(1)->Arg(14)->Unit(benchmark::kMillisecond);

void BM_LpIrl(benchmark::State& state) {
    const Gridworld& w = world(static_cast<int>(state.range(0)));
    const auto rollouts = generate_rollouts(w, value_iteration(w.mdp()).policy, 100, 0);
    const IrlRunConfig config = default_irl_config(w);
    for (auto _ : state) benchmark::DoNotOptimize(run_irl(w, IrlMethod::lp, rollouts, config));
}
BENCHMARK(BM_LpIrl)->Arg(1)->Arg(14)->Unit(benchmark::kMillisecond);

void BM_LossAndGradient(benchmark::State& state) {
    const Gridworld& w = world(14);
    const auto pi = epsilon_greedy(value_iteration(w.mdp()).policy, 0.1, w.n_actions());
    const auto emp = empirical_policies(generate_rollouts(w, pi, 10, 0), w.n_states(), w.n_actions());
    const LossModel model = build_loss_model(w.mdp(), emp.completed(), emp.visited, w.known_action_reward());
    Vector r = Vector::Constant(w.n_states(), -1.0);
    r(w.sink()) = 0.0;
    Vector g;
    for (auto _ : state) benchmark::DoNotOptimize(loss_and_gradient(model, r, g));
}
BENCHMARK(BM_LossAndGradient)->Unit(benchmark::kMicrosecond);

void BM_LossIrl(benchmark::State& state) {
    const Gridworld& w = world(static_cast<int>(state.range(0)));
    const auto pi = epsilon_greedy(value_iteration(w.mdp()).policy, 0.1, w.n_actions());
    const auto rollouts = generate_rollouts(w, pi, 10, 0);
    const IrlRunConfig config = default_irl_config(w);
    for (auto _ : state) benchmark::DoNotOptimize(run_irl(w, IrlMethod::loss, rollouts, config));
}
BENCHMARK(BM_LossIrl)->Arg(3)->Arg(14)->Unit(benchmark::kMillisecond)->Iterations(1);

void BM_SoftValueIteration(benchmark::State& state) {
    const Gridworld w(GridworldSpec::benchmark());
    for (auto _ : state) benchmark::DoNotOptimize(soft_value_iteration(w.mdp(), w.mdp().reward(), 1.0));
}
BENCHMARK(BM_SoftValueIteration)->Unit(benchmark::kMillisecond);

void BM_MaxEntIrl(benchmark::State& state) {
    const Gridworld w(GridworldSpec::benchmark());
    const auto expert = soft_value_iteration(w.mdp(), w.mdp().reward(), 1.0).policy;
    const auto rollouts = generate_rollouts(w, expert, static_cast<int>(state.range(0)), 0);
    const IrlRunConfig config = default_irl_config(w);
    for (auto _ : state) benchmark::DoNotOptimize(run_irl(w, IrlMethod::maxent, rollouts, config));
}
BENCHMARK(BM_MaxEntIrl)->Arg(1000)->Arg(10000)->Unit(benchmark::kMillisecond)->Iterations(1);

void BM_GenerateRollouts(benchmark::State& state) {
    const Gridworld& w = world(14);
    const auto policy = value_iteration(w.mdp()).policy;
    for (auto _ : state)
        benchmark::DoNotOptimize(generate_rollouts(w, policy, static_cast<int>(state.range(0)), 0));
}
BENCHMARK(BM_GenerateRollouts)->Arg(100)->Arg(10000)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
