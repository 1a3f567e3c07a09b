#include "cirl/lp_solver.hpp"
#include "cirl/random.hpp"

#include <gtest/gtest.h>

#include <cmath>
#include <limits>

using namespace cirl;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Brute-force oracle for small bounded LPs: enumerate every basis of the
// inequality form (rows plus bounds) and keep the best feasible vertex.
double vertex_oracle(const LinearProgram& lp, bool& feasible) {
    const int n = static_cast<int>(lp.c.size());
    MatrixXd g(lp.a_ub.rows() + 2 * n, n);
    VectorXd h(g.rows());
    g.topRows(lp.a_ub.rows()) = lp.a_ub;
    h.head(lp.a_ub.rows()) = lp.b_ub;
    for (int i = 0; i < n; ++i) {
        g.row(lp.a_ub.rows() + i) = -VectorXd::Unit(n, i).transpose();
        h(lp.a_ub.rows() + i) = -lp.lower(i);
        g.row(lp.a_ub.rows() + n + i) = VectorXd::Unit(n, i).transpose();
        h(lp.a_ub.rows() + n + i) = lp.upper(i);
    }
    const int m = static_cast<int>(g.rows());
    double best = kInf;
    feasible = false;
    std::vector<int> pick(static_cast<std::size_t>(n));
    for (int i = 0; i < n; ++i) pick[i] = i;
    while (true) {
        MatrixXd a(n, n);
        VectorXd b(n);
        for (int i = 0; i < n; ++i) {
            a.row(i) = g.row(pick[i]);
            b(i) = h(pick[i]);
        }
        Eigen::FullPivLU<MatrixXd> lu(a);
        if (lu.isInvertible()) {
            const VectorXd x = lu.solve(b);
            if (((g * x - h).array() <= 1e-9).all()) {
                feasible = true;
                best = std::min(best, lp.c.dot(x));
            }
        }
        int k = n - 1;
        while (k >= 0 && pick[k] == m - n + k) --k;
        if (k < 0) break;
        ++pick[k];
        for (int i = k + 1; i < n; ++i) pick[i] = pick[i - 1] + 1;
    }
    return best;
}

}  // namespace

TEST(LpSolver, TextbookMaximisation) {
    // max 3x + 5y s.t. x <= 4, 2y <= 12, 3x + 2y <= 18 -> (2, 6), 36.
    LinearProgram lp = LinearProgram::with_variables(2);
    lp.c = VectorXd::Zero(2);
    lp.c << -3, -5;
    lp.a_ub = MatrixXd(3, 2);
    lp.a_ub << 1, 0, 0, 2, 3, 2;
    lp.b_ub = VectorXd(3);
    lp.b_ub << 4, 12, 18;
    const LpResult r = solve_lp(lp);
    ASSERT_EQ(r.status, LpStatus::optimal);
    EXPECT_NEAR(r.objective, -36.0, 1e-9);
    EXPECT_NEAR(r.x(0), 2.0, 1e-9);
    EXPECT_NEAR(r.x(1), 6.0, 1e-9);
    EXPECT_LE(r.max_violation, 1e-9);
}

TEST(LpSolver, EqualityAndNegativeBounds) {
    // min x + 2y s.t. x + y = 1, x, y in [-5, 5] -> x = 5, y = -4.
    LinearProgram lp = LinearProgram::with_variables(2);
    lp.c = VectorXd(2);
    lp.c << 1, 2;
    lp.a_eq = MatrixXd(1, 2);
    lp.a_eq << 1, 1;
    lp.b_eq = VectorXd::Ones(1);
    lp.lower = VectorXd::Constant(2, -5);
    lp.upper = VectorXd::Constant(2, 5);
    const LpResult r = solve_lp(lp);
    ASSERT_EQ(r.status, LpStatus::optimal);
    EXPECT_NEAR(r.x(0), 5.0, 1e-9);
    EXPECT_NEAR(r.x(1), -4.0, 1e-9);
}

TEST(LpSolver, InfeasibleAndUnbounded) {
    LinearProgram lp = LinearProgram::with_variables(1);
    lp.c = VectorXd::Ones(1);
    lp.a_ub = MatrixXd::Ones(1, 1);
    lp.b_ub = VectorXd::Constant(1, -1.0);
    EXPECT_EQ(solve_lp(lp).status, LpStatus::infeasible);

    LinearProgram unb = LinearProgram::with_variables(1);
    unb.c = -VectorXd::Ones(1);
    EXPECT_EQ(solve_lp(unb).status, LpStatus::unbounded);
}

TEST(LpSolver, DegenerateProblem) {
    // Beale's cycling example; Bland's fallback must terminate at -1/20.
    LinearProgram lp = LinearProgram::with_variables(4);
    lp.c = VectorXd(4);
    lp.c << -0.75, 150, -0.02, 6;
    lp.a_ub = MatrixXd(3, 4);
    lp.a_ub << 0.25, -60, -0.04, 9, 0.5, -90, -0.02, 3, 0, 0, 1, 0;
    lp.b_ub = VectorXd(3);
    lp.b_ub << 0, 0, 1;
    const LpResult r = solve_lp(lp);
    ASSERT_EQ(r.status, LpStatus::optimal);
    EXPECT_NEAR(r.objective, -0.05, 1e-9);
}

// Property: random bounded LPs agree with the vertex-enumeration oracle.
TEST(LpSolverProperty, MatchesVertexEnumeration) {
    Rng rng(21);
    int solved = 0;
    for (int trial = 0; trial < 150; ++trial) {
        const int n = 2 + static_cast<int>(rng.below(3));
        const int m = 1 + static_cast<int>(rng.below(5));
        LinearProgram lp = LinearProgram::with_variables(n);
        lp.c = VectorXd(n);
        for (int i = 0; i < n; ++i) lp.c(i) = 2 * rng.uniform() - 1;
        lp.a_ub = MatrixXd(m, n);
        lp.b_ub = VectorXd(m);
        for (int i = 0; i < m; ++i) {
            for (int j = 0; j < n; ++j) lp.a_ub(i, j) = 2 * rng.uniform() - 1;
            lp.b_ub(i) = 2 * rng.uniform() - 0.7;
        }
        for (int j = 0; j < n; ++j) {
            lp.lower(j) = -1 - 2 * rng.uniform();
            lp.upper(j) = 1 + 2 * rng.uniform();
        }
        bool feasible = false;
        const double oracle = vertex_oracle(lp, feasible);
        const LpResult r = solve_lp(lp);
        if (!feasible) {
            EXPECT_EQ(r.status, LpStatus::infeasible) << "trial " << trial;
            continue;
        }
        ASSERT_EQ(r.status, LpStatus::optimal) << "trial " << trial;
        EXPECT_NEAR(r.objective, oracle, 1e-7) << "trial " << trial;
        EXPECT_LE(r.max_violation, 1e-8);
        EXPECT_NEAR(lp.c.dot(r.x), r.objective, 1e-9);
        ++solved;
    }
    EXPECT_GT(solved, 50);
}
