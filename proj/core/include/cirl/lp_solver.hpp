#pragma once

#include <Eigen/Dense>

#include <string>

namespace cirl {

/// minimise c'x  s.t.  A_ub x <= b_ub,  A_eq x = b_eq,  lower <= x <= upper.
/// Lower bounds must be finite; upper bounds may be +infinity.
struct LinearProgram {
    Eigen::VectorXd c;
    Eigen::MatrixXd a_ub;
    Eigen::VectorXd b_ub;
    Eigen::MatrixXd a_eq;
    Eigen::VectorXd b_eq;
    Eigen::VectorXd lower;
    Eigen::VectorXd upper;

    /// An LP with `n` variables, no rows and bounds [0, +inf).
    static LinearProgram with_variables(int n);
};

enum class LpStatus { optimal, infeasible, unbounded, iteration_limit };

std::string to_string(LpStatus status);

struct LpOptions {
    int max_iterations = 200'000;
    double tolerance = 1e-9;
    /// Consecutive degenerate pivots before switching to Bland's rule.
    int degenerate_limit = 50;
};

struct LpResult {
    LpStatus status = LpStatus::iteration_limit;
    Eigen::VectorXd x;
    double objective = 0.0;
    int iterations = 0;
    /// Largest violation of any row or bound at `x`.
    double max_violation = 0.0;
};

/// Dense two-phase primal simplex on the full tableau. Dantzig pricing with a
/// Bland fallback under degeneracy. The final basic solution is recomputed
/// from an LU factorisation of the basis for accuracy.
LpResult solve_lp(const LinearProgram& lp, const LpOptions& options = {});

/// Largest violation of rows and bounds at x.
double lp_violation(const LinearProgram& lp, const Eigen::VectorXd& x);

}  // namespace cirl
