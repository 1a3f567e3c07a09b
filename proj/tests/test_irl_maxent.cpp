#include "cirl/experiment.hpp"
#include "cirl/irl_maxent.hpp"
#include "support/generators.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cirl;
using namespace cirl::testing;

namespace {

Matrix reward_table(const Gridworld& w, const Vector& r_state) {
    return RewardDecomposition{w.known_action_reward(), r_state}.table(w.mdp().terminal_mask());
}

}  // namespace

TEST(SoftValueIteration, SatisfiesSoftBellmanEquation) {
    Rng rng(41);
    for (int trial = 0; trial < 20; ++trial) {
        const Mdp mdp = random_mdp(rng, random_shape(rng));
        for (double beta : {0.5, 2.0}) {
            const SoftValues sv = soft_value_iteration(mdp, mdp.reward(), beta);
            const Matrix q = explicit_q(mdp, mdp.reward(), sv.v);
            EXPECT_LE((q - sv.q).cwiseAbs().maxCoeff(), 1e-8);
            for (int s = 0; s < mdp.n_states(); ++s) {
                if (mdp.is_terminal(s)) {
                    EXPECT_EQ(sv.v(s), 0.0);
                    continue;
                }
                const double lse = std::log((beta * q.row(s).array()).exp().sum()) / beta;
                EXPECT_NEAR(sv.v(s), lse, 1e-8);
                EXPECT_NEAR(sv.policy.probs.row(s).sum(), 1.0, 1e-12);
                for (int a = 0; a < mdp.n_actions(); ++a)
                    EXPECT_NEAR(sv.policy.probs(s, a), std::exp(beta * (q(s, a) - sv.v(s))), 1e-9);
            }
        }
    }
}

TEST(SoftValueIteration, LargeBetaRecoversGreedyPolicy) {
    const Gridworld w(GridworldSpec::benchmark());
    const auto vi = value_iteration(w.mdp());
    const SoftValues sv = soft_value_iteration(w.mdp(), w.mdp().reward(), 50.0);
    for (int s : w.ground_states()) {
        Eigen::Index best;
        sv.policy.probs.row(s).maxCoeff(&best);
        // Ties between equally short paths may resolve either way.
        EXPECT_NEAR(vi.values.q(s, best), vi.values.v(s), 1e-9) << "state " << s;
    }
}

// Monte-Carlo oracle for the forward visitation pass.
TEST(MaxEnt, ExpectedVisitationMatchesSimulation) {
    const Gridworld w(GridworldSpec::carefulness(2));
    const auto pi = soft_value_iteration(w.mdp(), w.mdp().reward(), 0.2).policy;
    Vector start = Vector::Zero(w.n_states());
    start(w.state_of({0, 0})) = 0.5;
    start(w.state_of({2, 3})) = 0.5;
    const int horizon = 30;
    const Matrix dp = expected_visitation(w.mdp(), pi, start, horizon);
    Matrix mc = Matrix::Zero(w.n_states(), w.n_actions());
    const int n = 20000;
    for (int i = 0; i < n; ++i) {
        const int s0 = i % 2 == 0 ? w.state_of({0, 0}) : w.state_of({2, 3});
        const Rollout r = simulate_rollout(w.mdp(), pi, s0, derive_seed(5, static_cast<std::uint64_t>(i)), horizon);
        double g = 1.0;
        for (const Step& st : r.steps) {
            mc(st.s, st.a) += g / n;
            g *= w.spec().discount;
        }
    }
    const Vector dp_s = dp.rowwise().sum();
    const Vector mc_s = mc.rowwise().sum();
    for (int s = 0; s < w.n_states(); ++s) EXPECT_NEAR(dp_s(s), mc_s(s), 0.03 + 0.03 * dp_s(s)) << "state " << s;
    EXPECT_NEAR(dp.sum(), mc.sum(), 0.02 * dp.sum());
}

// On deterministic dynamics the visitation-difference gradient is the exact
// gradient of the discounted demonstration log-likelihood.
TEST(MaxEnt, GradientMatchesFiniteDifferencesOnDeterministicWorld) {
    const Gridworld w(GridworldSpec::benchmark());
    const auto expert = soft_value_iteration(w.mdp(), w.mdp().reward(), 1.0).policy;
    const auto rollouts = generate_rollouts(w, expert, 200, 3);
    const DemonstrationStats stats = demonstration_stats(rollouts, w.mdp());
    Rng rng(6);
    for (int trial = 0; trial < 5; ++trial) {
        Vector r = random_vector(rng, w.n_states(), 3.0);
        r(w.sink()) = 0.0;
        const double beta = 1.0;
        const auto pol = soft_value_iteration(w.mdp(), reward_table(w, r), beta, 1e-13).policy;
        const Vector g = maxent_gradient(w.mdp(), stats, pol, beta, 3000);
        const double h = 1e-5;
        for (int s = 0; s < w.sink(); ++s) {
            Vector up = r, down = r;
            up(s) += h;
            down(s) -= h;
            const double lu = demonstration_log_likelihood(
                stats, soft_value_iteration(w.mdp(), reward_table(w, up), beta, 1e-13).policy);
            const double ld = demonstration_log_likelihood(
                stats, soft_value_iteration(w.mdp(), reward_table(w, down), beta, 1e-13).policy);
            EXPECT_NEAR(g(s), (lu - ld) / (2 * h), 1e-5 + 1e-4 * std::abs(g(s))) << "state " << s;
        }
        EXPECT_EQ(g(w.sink()), 0.0);
    }
}

TEST(MaxEnt, LikelihoodIsNonDecreasing) {
    const Gridworld w(GridworldSpec::benchmark());
    const auto expert = soft_value_iteration(w.mdp(), w.mdp().reward(), 1.0).policy;
    const auto rollouts = generate_rollouts(w, expert, 500, 1);
    MaxEntConfig config;
    config.max_epochs = 200;
    MaxEntTrace trace;
    const auto sol = maxent_irl(rollouts, w.mdp(), w.known_action_reward(), config, &trace);
    ASSERT_GE(trace.log_likelihoods.size(), 2u);
    for (std::size_t i = 1; i < trace.log_likelihoods.size(); ++i)
        EXPECT_GE(trace.log_likelihoods[i], trace.log_likelihoods[i - 1]);
    EXPECT_EQ(sol.diagnostics.method, "maxent");
}

// A state that neither the demonstrations nor the model can reach has zero
// gradient and keeps its initial reward.
TEST(MaxEnt, UnreachableStateKeepsInitialReward) {
    // 0 -> {0, 1}, 1 -> 3 (terminal); state 2 has no incoming transitions.
    Matrix t0 = Matrix::Zero(4, 4), t1 = Matrix::Zero(4, 4);
    t0(0, 0) = 1.0;
    t1(0, 1) = 1.0;
    t0(1, 3) = t1(1, 3) = 1.0;
    t0(2, 0) = t1(2, 3) = 1.0;
    t0(3, 3) = t1(3, 3) = 1.0;
    const Mdp mdp({t0, t1}, Matrix::Zero(4, 2), 0.9, {3});
    std::vector<Rollout> rollouts(3);
    for (auto& r : rollouts) r.steps = {{0, 0, 0, 0}, {0, 1, 0, 1}, {1, 0, 0, 3}};
    const auto sol = maxent_irl(rollouts, mdp, Vector::Zero(2), MaxEntConfig{});
    EXPECT_EQ(sol.raw.r_state(2), 0.0);
    EXPECT_NE(sol.raw.r_state(0), 0.0);
    EXPECT_EQ(sol.raw.r_state(3), 0.0);
}

// Only visited states are identifiable; the exit cells of this reward are
// never reached, so the comparison runs over visited states.
TEST(MaxEnt, RegeneratedRewardIsRecoveredOnVisitedStates) {
    const Gridworld w(GridworldSpec::benchmark());
    Rng rng(17);
    Vector truth = random_vector(rng, w.n_states(), 2.0);
    truth(w.sink()) = 0.0;
    const auto expert = soft_value_iteration(w.mdp(), reward_table(w, truth), 1.0).policy;
    const auto rollouts = generate_rollouts(w, expert, 10000, 2);
    const auto emp = empirical_policies(rollouts, w.n_states(), w.n_actions());
    const auto sol = run_irl(w, IrlMethod::maxent, rollouts, default_irl_config(w));
    EXPECT_TRUE(sol.diagnostics.converged);
    const Vector canon = w.canonicalize(truth);
    std::vector<double> a, b;
    for (int s = 0; s < w.sink(); ++s) {
        if (emp.visit_counts[s] < 500) continue;
        a.push_back(canon(s));
        b.push_back(sol.r_state_canonical(s));
    }
    ASSERT_GE(a.size(), 10u);
    const Eigen::Map<const Vector> va(a.data(), static_cast<Eigen::Index>(a.size()));
    const Eigen::Map<const Vector> vb(b.data(), static_cast<Eigen::Index>(b.size()));
    const Vector da = va.array() - va.mean();
    const Vector db = vb.array() - vb.mean();
    EXPECT_GT(da.dot(db) / (da.norm() * db.norm()), 0.95);
}

TEST(MaxEnt, BenchmarkRewardHasCorrectSignsButUnderestimatesSeverity) {
    const Gridworld w(GridworldSpec::benchmark());
    const auto expert = soft_value_iteration(w.mdp(), w.mdp().reward(), 1.0).policy;
    const auto rollouts = generate_rollouts(w, expert, 10000, 0);
    const auto sol = run_irl(w, IrlMethod::maxent, rollouts, default_irl_config(w));
    const Vector& r = sol.raw.r_state;
    double cliff = 0.0;
    for (int s : w.cliff_states()) cliff += r(s);
    cliff /= static_cast<double>(w.cliff_states().size());
    EXPECT_LT(cliff, 0.0);
    EXPECT_GT(r(w.goal_state()), 0.0);
    EXPECT_LT(w.severity_ratio(r), w.severity_ratio(w.true_reward().r_state));
}
