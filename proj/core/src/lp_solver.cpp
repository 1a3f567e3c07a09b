#include "cirl/lp_solver.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <vector>

namespace cirl {

using Eigen::MatrixXd;
using Eigen::VectorXd;

LinearProgram LinearProgram::with_variables(int n) {
    LinearProgram lp;
    lp.c = VectorXd::Zero(n);
    lp.a_ub = MatrixXd::Zero(0, n);
    lp.b_ub = VectorXd::Zero(0);
    lp.a_eq = MatrixXd::Zero(0, n);
    lp.b_eq = VectorXd::Zero(0);
    lp.lower = VectorXd::Zero(n);
    lp.upper = VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    return lp;
}

std::string to_string(LpStatus status) {
    switch (status) {
        case LpStatus::optimal: return "optimal";
        case LpStatus::infeasible: return "infeasible";
        case LpStatus::unbounded: return "unbounded";
        case LpStatus::iteration_limit: return "iteration_limit";
    }
    return "unknown";
}

double lp_violation(const LinearProgram& lp, const VectorXd& x) {
    double worst = 0.0;
    if (lp.a_ub.rows() > 0) worst = std::max(worst, (lp.a_ub * x - lp.b_ub).maxCoeff());
    if (lp.a_eq.rows() > 0) worst = std::max(worst, (lp.a_eq * x - lp.b_eq).cwiseAbs().maxCoeff());
    for (Eigen::Index i = 0; i < x.size(); ++i) {
        worst = std::max(worst, lp.lower(i) - x(i));
        if (std::isfinite(lp.upper(i))) worst = std::max(worst, x(i) - lp.upper(i));
    }
    return worst;
}

namespace {

class Tableau {
public:
    Tableau(MatrixXd a, VectorXd b, std::vector<int> basis, int n_real, const LpOptions& options)
        : a_(std::move(a)), b_(std::move(b)), basis_(std::move(basis)), n_real_(n_real), opt_(options) {
        const auto m = a_.rows();
        const auto n = a_.cols();
        t_.resize(m + 1, n + 1);
        t_.topLeftCorner(m, n) = a_;
        t_.topRightCorner(m, 1) = b_;
        t_.bottomRows(1).setZero();
    }

    /// Loads the cost row for `cost` given the current basis.
    void set_cost(const VectorXd& cost) {
        cost_ = cost;
        const auto m = a_.rows();
        const auto n = a_.cols();
        t_.row(m).head(n) = cost.transpose();
        t_(m, n) = 0.0;
        for (Eigen::Index i = 0; i < m; ++i) {
            const double cb = cost(basis_[i]);
            if (cb != 0.0) t_.row(m) -= cb * t_.row(i);
        }
    }

    /// Rebuilds the tableau from the original columns and the current basis,
    /// discarding accumulated rounding error. Returns false if the basis is
    /// numerically singular.
    bool refactor() {
        const auto m = a_.rows();
        const auto n = a_.cols();
        MatrixXd basis_matrix(m, m);
        for (Eigen::Index i = 0; i < m; ++i) basis_matrix.col(i) = a_.col(basis_[i]);
        const Eigen::PartialPivLU<MatrixXd> lu(basis_matrix);
        MatrixXd body(m, n + 1);
        body.leftCols(n) = lu.solve(a_);
        body.col(n) = lu.solve(b_);
        if (!body.allFinite()) return false;
        for (Eigen::Index i = 0; i < m; ++i)
            if (std::abs(body(i, basis_[i]) - 1.0) > 1e-6) return false;
        t_.topRows(m) = body;
        set_cost(cost_);
        return true;
    }

    /// Runs simplex pivots on columns [0, allowed). Returns optimal,
    /// unbounded or iteration_limit.
    LpStatus run(int allowed, int& iterations) {
        const auto m = a_.rows();
        const auto n = a_.cols();
        int degenerate = 0;
        int since_refactor = 0;
        bool verified = false;
        int verifications = 0;
        while (true) {
            if (iterations >= opt_.max_iterations) return LpStatus::iteration_limit;
            if (since_refactor >= kRefactorInterval) {
                refactor();
                since_refactor = 0;
            }
            const bool bland = degenerate >= opt_.degenerate_limit;
            int enter = -1;
            double best = -opt_.tolerance;
            for (int j = 0; j < allowed; ++j) {
                const double d = t_(m, j);
                if (d < best) {
                    enter = j;
                    if (bland) break;
                    best = d;
                }
            }
            if (enter < 0) {
                // Confirm optimality on a freshly factorised tableau, a
                // bounded number of times so rounding noise cannot loop.
                if (verified || since_refactor == 0 || verifications >= kMaxVerifications ||
                    !refactor())
                    return LpStatus::optimal;
                verified = true;
                ++verifications;
                since_refactor = 0;
                continue;
            }
            verified = false;

            double col_max = 0.0;
            for (Eigen::Index i = 0; i < m; ++i) col_max = std::max(col_max, t_(i, enter));
            const double pivot_tol = std::max(opt_.tolerance, 1e-7 * col_max);
            int leave = -1;
            double ratio = std::numeric_limits<double>::infinity();
            for (Eigen::Index i = 0; i < m; ++i) {
                const double p = t_(i, enter);
                if (p <= pivot_tol) continue;
                const double r = std::max(0.0, t_(i, n)) / p;
                if (leave < 0 || r < ratio - opt_.tolerance) {
                    leave = static_cast<int>(i);
                    ratio = r;
                } else if (r <= ratio + opt_.tolerance) {
                    const bool better = bland ? basis_[i] < basis_[leave]
                                              : p > t_(leave, enter);
                    if (better) {
                        leave = static_cast<int>(i);
                        ratio = std::min(ratio, r);
                    }
                }
            }
            if (leave < 0) return LpStatus::unbounded;
            degenerate = ratio <= opt_.tolerance ? degenerate + 1 : 0;
            pivot(leave, enter);
            ++iterations;
            ++since_refactor;
        }
    }

    void pivot(int row, int col) {
        t_.row(row) /= t_(row, col);
        Eigen::VectorXd factors = t_.col(col);
        factors(row) = 0.0;
        t_.noalias() -= factors * t_.row(row);
        basis_[row] = col;
    }

    double objective_row_value() const { return -t_(a_.rows(), a_.cols()); }

    /// Pivots basic artificials out where a real column is available.
    void expel_artificials() {
        for (Eigen::Index i = 0; i < a_.rows(); ++i) {
            if (basis_[i] < n_real_) continue;
            for (int j = 0; j < n_real_; ++j) {
                if (std::abs(t_(i, j)) > 1e-7) {
                    pivot(static_cast<int>(i), j);
                    break;
                }
            }
        }
    }

    /// Basic solution recomputed from the original columns.
    VectorXd basic_solution() const {
        const auto m = a_.rows();
        MatrixXd basis_matrix(m, m);
        for (Eigen::Index i = 0; i < m; ++i) basis_matrix.col(i) = a_.col(basis_[i]);
        VectorXd xb = basis_matrix.partialPivLu().solve(b_);
        if (!xb.allFinite()) xb = t_.col(a_.cols()).head(m);
        VectorXd x = VectorXd::Zero(a_.cols());
        for (Eigen::Index i = 0; i < m; ++i) x(basis_[i]) = xb(i);
        return x;
    }

private:
    MatrixXd a_;
    VectorXd b_;
    std::vector<int> basis_;
    int n_real_;
    LpOptions opt_;
    MatrixXd t_;
    VectorXd cost_;

    static constexpr int kRefactorInterval = 200;
    static constexpr int kMaxVerifications = 3;
};

}  // namespace

LpResult solve_lp(const LinearProgram& lp, const LpOptions& options) {
    const auto n = lp.c.size();
    if (lp.a_ub.cols() != n || lp.a_eq.cols() != n || lp.b_ub.size() != lp.a_ub.rows() ||
        lp.b_eq.size() != lp.a_eq.rows() || lp.lower.size() != n || lp.upper.size() != n)
        throw std::invalid_argument("linear program dimensions are inconsistent");
    for (Eigen::Index j = 0; j < n; ++j) {
        if (!std::isfinite(lp.lower(j))) throw std::invalid_argument("lower bounds must be finite");
        if (lp.upper(j) < lp.lower(j)) {
            LpResult r;
            r.status = LpStatus::infeasible;
            return r;
        }
    }

    // Shift x' = x - lower and add finite upper bounds as rows.
    std::vector<int> upper_rows;
    for (Eigen::Index j = 0; j < n; ++j)
        if (std::isfinite(lp.upper(j))) upper_rows.push_back(static_cast<int>(j));
    const auto n_ineq = lp.a_ub.rows() + static_cast<Eigen::Index>(upper_rows.size());
    const auto n_eq = lp.a_eq.rows();
    const auto m = n_ineq + n_eq;

    MatrixXd rows = MatrixXd::Zero(m, n);
    VectorXd rhs(m);
    rows.topRows(lp.a_ub.rows()) = lp.a_ub;
    rhs.head(lp.a_ub.rows()) = lp.b_ub - lp.a_ub * lp.lower;
    for (std::size_t k = 0; k < upper_rows.size(); ++k) {
        const auto i = lp.a_ub.rows() + static_cast<Eigen::Index>(k);
        rows(i, upper_rows[k]) = 1.0;
        rhs(i) = lp.upper(upper_rows[k]) - lp.lower(upper_rows[k]);
    }
    rows.bottomRows(n_eq) = lp.a_eq;
    rhs.tail(n_eq) = lp.b_eq - lp.a_eq * lp.lower;

    std::vector<int> needs_artificial;
    for (Eigen::Index i = 0; i < m; ++i)
        if (i >= n_ineq || rhs(i) < 0.0) needs_artificial.push_back(static_cast<int>(i));
    const auto n_real = n + n_ineq;
    const auto n_total = n_real + static_cast<Eigen::Index>(needs_artificial.size());

    MatrixXd a = MatrixXd::Zero(m, n_total);
    VectorXd b(m);
    std::vector<int> basis(m, -1);
    a.leftCols(n) = rows;
    for (Eigen::Index i = 0; i < n_ineq; ++i) {
        a(i, n + i) = 1.0;
        basis[i] = static_cast<int>(n + i);
    }
    b = rhs;
    for (std::size_t k = 0; k < needs_artificial.size(); ++k) {
        const int i = needs_artificial[k];
        if (rhs(i) < 0.0) {
            a.row(i) = -a.row(i);
            b(i) = -b(i);
        }
        const auto col = n_real + static_cast<Eigen::Index>(k);
        a(i, col) = 1.0;
        basis[i] = static_cast<int>(col);
    }

    Tableau tab(a, b, basis, static_cast<int>(n_real), options);
    LpResult result;
    if (!needs_artificial.empty()) {
        VectorXd phase1 = VectorXd::Zero(n_total);
        phase1.tail(static_cast<Eigen::Index>(needs_artificial.size())).setOnes();
        tab.set_cost(phase1);
        const LpStatus s = tab.run(static_cast<int>(n_total), result.iterations);
        if (s == LpStatus::iteration_limit) {
            result.status = s;
            return result;
        }
        const double scale = 1.0 + b.cwiseAbs().maxCoeff();
        if (tab.objective_row_value() > 1e-7 * scale) {
            result.status = LpStatus::infeasible;
            return result;
        }
        tab.expel_artificials();
    }

    VectorXd phase2 = VectorXd::Zero(n_total);
    phase2.head(n) = lp.c;
    tab.set_cost(phase2);
    result.status = tab.run(static_cast<int>(n_real), result.iterations);
    if (result.status != LpStatus::optimal) return result;

    const VectorXd xs = tab.basic_solution();
    result.x = xs.head(n) + lp.lower;
    for (Eigen::Index j = 0; j < n; ++j) {
        result.x(j) = std::max(result.x(j), lp.lower(j));
        if (std::isfinite(lp.upper(j))) result.x(j) = std::min(result.x(j), lp.upper(j));
    }
    result.objective = lp.c.dot(result.x);
    result.max_violation = lp_violation(lp, result.x);
    return result;
}

}  // namespace cirl
