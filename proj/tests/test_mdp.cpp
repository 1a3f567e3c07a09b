#include "cirl/mdp.hpp"
#include "support/generators.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace cirl;
using namespace cirl::testing;

namespace {

Mdp two_state_chain() {
    // State 0 moves to the absorbing state 1 under action 1, stays under action 0.
    Matrix t0(2, 2), t1(2, 2);
    t0 << 1, 0, 0, 1;
    t1 << 0, 1, 0, 1;
    Matrix r(2, 2);
    r << 1, 5, 0, 0;
    return Mdp({t0, t1}, r, 0.9, {1});
}

}  // namespace

TEST(Mdp, VectorizeIsActionMajor) {
    Matrix table(3, 2);
    table << 1, 4, 2, 5, 3, 6;
    const Vector v = vectorize(table);
    for (int s = 0; s < 3; ++s)
        for (int a = 0; a < 2; ++a) EXPECT_EQ(v(vec_index(s, a, 3)), table(s, a));
    EXPECT_EQ(unvectorize(v, 3, 2), table);
}

TEST(Mdp, RejectsMalformedInput) {
    Matrix t(2, 2);
    t << 0.5, 0.4, 0, 1;
    EXPECT_THROW(Mdp({t}, Matrix::Zero(2, 1), 0.9, {}), std::invalid_argument);
    Matrix ok(2, 2);
    ok << 0.5, 0.5, 0, 1;
    EXPECT_THROW(Mdp({ok}, Matrix::Zero(2, 1), 1.0, {}), std::invalid_argument);
    EXPECT_THROW(Mdp({ok}, Matrix::Zero(2, 1), -0.1, {}), std::invalid_argument);
    EXPECT_THROW(Mdp({ok}, Matrix::Zero(2, 1), 0.9, {0}), std::invalid_argument);
    Matrix r = Matrix::Zero(2, 1);
    r(1, 0) = 1.0;
    EXPECT_THROW(Mdp({ok}, r, 0.9, {1}), std::invalid_argument);
    EXPECT_THROW(Mdp({ok}, Matrix::Zero(3, 1), 0.9, {}), std::invalid_argument);
    Matrix neg(2, 2);
    neg << 1.5, -0.5, 0, 1;
    EXPECT_THROW(Mdp({neg}, Matrix::Zero(2, 1), 0.9, {}), std::invalid_argument);
}

TEST(Mdp, SuccessorsListNonZeroEntries) {
    const Mdp mdp = two_state_chain();
    const auto succ = mdp.successors(0, 1);
    ASSERT_EQ(succ.size(), 1u);
    EXPECT_EQ(succ[0].state, 1);
    EXPECT_DOUBLE_EQ(succ[0].prob, 1.0);
}

TEST(Mdp, PolicyEvaluationMatchesClosedForm) {
    const Mdp mdp = two_state_chain();
    // Staying forever in state 0 earns 1 / (1 - 0.9) = 10.
    const Vector v = policy_evaluation_direct(mdp, StochasticPolicy::from({{0, 0}}, 2));
    EXPECT_NEAR(v(0), 10.0, 1e-12);
    EXPECT_NEAR(v(1), 0.0, 1e-12);
    const Vector leave = policy_evaluation_direct(mdp, StochasticPolicy::from({{1, 0}}, 2));
    EXPECT_NEAR(leave(0), 5.0, 1e-12);
}

TEST(Mdp, ValueIterationPicksBetterAction) {
    const auto vi = value_iteration(two_state_chain());
    EXPECT_EQ(vi.policy.action_of[0], 0);
    EXPECT_NEAR(vi.values.v(0), 10.0, 1e-9);
    EXPECT_LE(vi.residual, 1e-10);
}

TEST(Mdp, GreedyPolicyBreaksTiesTowardsLowestIndex) {
    Matrix q(2, 3);
    q << 1, 3, 3, 2, 2, 2;
    const auto p = greedy_policy(q);
    EXPECT_EQ(p.action_of[0], 1);
    EXPECT_EQ(p.action_of[1], 0);
}

TEST(Mdp, ValidatePolicy) {
    const Mdp mdp = two_state_chain();
    EXPECT_NO_THROW(validate_policy(mdp, DeterministicPolicy{{0, kNoAction}}));
    EXPECT_THROW(validate_policy(mdp, DeterministicPolicy{{kNoAction, 0}}), std::invalid_argument);
    EXPECT_THROW(validate_policy(mdp, DeterministicPolicy{{2, 0}}), std::invalid_argument);
    EXPECT_THROW(validate_policy(mdp, DeterministicPolicy{{0}}), std::invalid_argument);
    StochasticPolicy bad{Matrix::Constant(2, 2, 0.4)};
    EXPECT_THROW(validate_policy(mdp, bad), std::invalid_argument);
}

TEST(Mdp, StochasticFromDeterministicFillsUnassignedUniformly) {
    const auto p = StochasticPolicy::from({{1, kNoAction}}, 2);
    EXPECT_EQ(p.probs(0, 1), 1.0);
    EXPECT_EQ(p.probs(1, 0), 0.5);
}

// Property: direct solve agrees with iterative evaluation on random MDPs.
TEST(MdpProperty, DirectEvaluationMatchesIterative) {
    Rng rng(11);
    for (int trial = 0; trial < 60; ++trial) {
        const Mdp mdp = random_mdp(rng, random_shape(rng));
        const auto pi = random_stochastic_policy(rng, mdp.n_states(), mdp.n_actions());
        const Vector direct = policy_evaluation_direct(mdp, pi);
        const Vector iter = iterative_policy_evaluation(mdp, pi, mdp.reward());
        EXPECT_LE((direct - iter).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
    }
}

// Property: the composed Q operator equals one Bellman backup of V^pi, for
// arbitrary reward vectors.
TEST(MdpProperty, ComposedQMatchesBellmanBackup) {
    Rng rng(12);
    for (int trial = 0; trial < 60; ++trial) {
        const Mdp mdp = random_mdp(rng, random_shape(rng));
        const auto pi = random_stochastic_policy(rng, mdp.n_states(), mdp.n_actions());
        Vector r_vec = random_vector(rng, mdp.n_states() * mdp.n_actions(), 5.0);
        Matrix r = unvectorize(r_vec, mdp.n_states(), mdp.n_actions());
        for (int s : mdp.terminal_states()) r.row(s).setZero();
        r_vec = vectorize(r);
        const Matrix q = q_from_reward(mdp, pi, r_vec);
        const Vector v = iterative_policy_evaluation(mdp, pi, r);
        const Matrix oracle = explicit_q(mdp, r, v);
        EXPECT_LE((q - oracle).cwiseAbs().maxCoeff(), 1e-8) << "trial " << trial;
        const Matrix backup = bellman_backup(mdp, r, policy_evaluation_direct(mdp, pi, r_vec));
        EXPECT_LE((q - backup).cwiseAbs().maxCoeff(), 1e-10) << "trial " << trial;
    }
}

// Property: T^pi is row-stochastic and pi-hat selects pi(s, a) at column a*N_S + s.
TEST(MdpProperty, PolicyMatricesStructure) {
    Rng rng(13);
    for (int trial = 0; trial < 40; ++trial) {
        const Mdp mdp = random_mdp(rng, random_shape(rng));
        const int n = mdp.n_states();
        const auto pi = random_stochastic_policy(rng, n, mdp.n_actions());
        const auto m = policy_matrices(mdp, pi);
        for (int s = 0; s < n; ++s) {
            EXPECT_NEAR(m.t_pi.row(s).sum(), 1.0, 1e-12);
            for (int a = 0; a < mdp.n_actions(); ++a)
                EXPECT_EQ(m.pi_hat(s, vec_index(s, a, n)), pi.probs(s, a));
        }
        EXPECT_NEAR(m.pi_hat.sum(), n, 1e-9);
    }
}

// Property: value iteration's policy is greedy in its own Q and no stochastic
// policy does better.
TEST(MdpProperty, ValueIterationIsOptimal) {
    Rng rng(14);
    for (int trial = 0; trial < 40; ++trial) {
        const Mdp mdp = random_mdp(rng, random_shape(rng));
        const auto vi = value_iteration(mdp);
        const Vector v_star = policy_evaluation_direct(mdp, StochasticPolicy::from(vi.policy, mdp.n_actions()));
        EXPECT_LE((v_star - vi.values.v).cwiseAbs().maxCoeff(), 1e-8);
        for (int k = 0; k < 5; ++k) {
            const auto pi = random_stochastic_policy(rng, mdp.n_states(), mdp.n_actions());
            const Vector v = policy_evaluation_direct(mdp, pi);
            EXPECT_LE((v - v_star).maxCoeff(), 1e-8);
        }
    }
}
