#include "cirl/irl_lp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cirl {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

struct RowRef {
    int state;
    int action;
};

}  // namespace

Matrix omega_matrix(const Mdp& mdp, const StochasticPolicy& policy) {
    const int ns = mdp.n_states();
    const int na = mdp.n_actions();
    const PolicyMatrices pm = policy_matrices(mdp, policy);
    const Matrix value_map = resolvent(mdp, pm.t_pi) * pm.pi_hat;
    Matrix omega = Matrix::Identity(ns * na, ns * na);
    for (int a = 0; a < na; ++a) {
        // (I-tilde - gamma T) restricted to the block of action a.
        const Matrix block = Matrix::Identity(ns, ns) - mdp.discount() * mdp.transition(a);
        omega.middleRows(static_cast<Eigen::Index>(a) * ns, ns).noalias() -= block * value_map;
    }
    return omega;
}

Matrix build_validity_constraints(const Mdp& mdp, const DeterministicPolicy& policy) {
    const int ns = mdp.n_states();
    const int na = mdp.n_actions();
    const StochasticPolicy sp = StochasticPolicy::from(policy, na);
    const PolicyMatrices pm = policy_matrices(mdp, sp);
    const Matrix value_map = resolvent(mdp, pm.t_pi) * pm.pi_hat;
    Matrix g(ns * na, ns * na);
    for (int a = 0; a < na; ++a) {
        const Matrix diff = pm.t_pi - mdp.transition(a);
        g.middleRows(static_cast<Eigen::Index>(a) * ns, ns) =
            pm.pi_hat + mdp.discount() * diff * value_map;
    }
    g -= Matrix::Identity(ns * na, ns * na);
    return g;
}

LpMatrices build_lp_matrices(const Mdp& mdp, const StochasticPolicy& policy) {
    LpMatrices out;
    out.omega = omega_matrix(mdp, policy);
    DeterministicPolicy det;
    det.action_of.resize(mdp.n_states());
    bool one_hot = true;
    for (int s = 0; s < mdp.n_states(); ++s) {
        Eigen::Index a = 0;
        const double p = policy.probs.row(s).maxCoeff(&a);
        det.action_of[s] = static_cast<int>(a);
        if (p != 1.0) one_hot = false;
    }
    // The validity matrix is defined for deterministic policies; for other
    // inputs it equals -Omega by construction.
    out.constraint_rows = one_hot ? build_validity_constraints(mdp, det) : Matrix(-out.omega);
    return out;
}

ReducedSystem reduce_to_state_reward(const Mdp& mdp, const LpMatrices& matrices,
                                     const Vector& fixed_r_action) {
    const int ns = mdp.n_states();
    const int na = mdp.n_actions();
    require(fixed_r_action.size() == na, "fixed R_A length does not match N_A");
    require(matrices.omega.rows() == ns * na && matrices.omega.cols() == ns * na,
            "Omega has wrong shape");
    ReducedSystem out;
    out.state_map = matrices.omega * state_broadcast(ns, na, mdp.terminal_mask());
    out.offset = matrices.omega * action_reward_vec(fixed_r_action, ns, mdp.terminal_mask());
    return out;
}

double margin_objective(const Matrix& omega, const Vector& reward_vec,
                        const DeterministicPolicy& policy, const std::vector<bool>& constrained,
                        int n_states) {
    const Vector gaps = omega * reward_vec;
    const auto na = static_cast<int>(gaps.size() / n_states);
    double total = 0.0;
    for (int s = 0; s < n_states; ++s) {
        if (!constrained[s] || na < 2) continue;
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < na; ++a)
            if (a != policy.action_of[s]) best = std::max(best, gaps(vec_index(s, a, n_states)));
        total += best;
    }
    return total;
}

double reduced_objective(const ReducedSystem& system, const Vector& r_state,
                         const DeterministicPolicy& policy, const std::vector<bool>& constrained,
                         double lambda) {
    const auto ns = static_cast<int>(r_state.size());
    const Vector gaps = system.state_map * r_state;
    const auto na = static_cast<int>(gaps.size() / ns);
    double total = lambda * r_state.lpNorm<1>();
    for (int s = 0; s < ns; ++s) {
        if (!constrained[s] || na < 2) continue;
        double best = -std::numeric_limits<double>::infinity();
        for (int a = 0; a < na; ++a)
            if (a != policy.action_of[s]) best = std::max(best, gaps(vec_index(s, a, ns)));
        total += best;
    }
    return total;
}

IrlSolution solve_lp_irl(const Mdp& mdp, const DeterministicPolicy& policy,
                         const std::vector<bool>& constrained, const LpIrlConfig& config) {
    const int ns = mdp.n_states();
    const int na = mdp.n_actions();
    require(config.lambda >= 0.0, "lambda must be non-negative");
    require(std::isfinite(config.r_max) && config.r_max > 0.0, "r_max must be positive and finite");
    require(static_cast<int>(policy.action_of.size()) == ns, "policy length does not match N_S");
    require(static_cast<int>(constrained.size()) == ns, "constrained mask length does not match N_S");
    std::vector<bool> active(ns, false);
    for (int s = 0; s < ns; ++s) {
        if (!constrained[s] || mdp.is_terminal(s)) continue;
        require(policy.action_of[s] >= 0 && policy.action_of[s] < na,
                "constrained state " + std::to_string(s) + " lacks a policy action");
        active[s] = true;
    }

    const StochasticPolicy sp = StochasticPolicy::from(policy, na);
    const LpMatrices matrices{omega_matrix(mdp, sp), Matrix()};
    const ReducedSystem sys = reduce_to_state_reward(mdp, matrices, config.fixed_r_action);

    // Variable layout: R_S | t (one per objective state) | u (L1, when lambda > 0).
    std::vector<int> objective_states;
    if (na > 1)
        for (int s = 0; s < ns; ++s)
            if (active[s]) objective_states.push_back(s);
    const int n_t = static_cast<int>(objective_states.size());
    const bool use_l1 = config.lambda > 0.0;
    const int n_u = use_l1 ? ns : 0;
    const int n_var = ns + n_t + n_u;

    std::vector<RowRef> rows;
    for (int s : objective_states)
        for (int a = 0; a < na; ++a)
            if (a != policy.action_of[s]) rows.push_back({s, a});

    double t_big = 1.0;
    for (const RowRef& r : rows) {
        const auto k = vec_index(r.state, r.action, ns);
        t_big = std::max(t_big, config.r_max * sys.state_map.row(k).lpNorm<1>() +
                                    std::abs(sys.offset(k)) + 1.0);
    }

    LinearProgram base = LinearProgram::with_variables(n_var);
    for (int s = 0; s < ns; ++s) {
        const bool fixed = mdp.is_terminal(s);
        base.lower(s) = fixed ? 0.0 : -config.r_max;
        base.upper(s) = fixed ? 0.0 : config.r_max;
    }
    for (int i = 0; i < n_t; ++i) {
        base.c(ns + i) = 1.0;
        base.lower(ns + i) = -t_big;
        base.upper(ns + i) = t_big;
    }
    for (int i = 0; i < n_u; ++i) {
        base.c(ns + n_t + i) = config.lambda;
        base.upper(ns + n_t + i) = config.r_max;
    }
    std::vector<int> t_index(ns, -1);
    for (int i = 0; i < n_t; ++i) t_index[objective_states[i]] = ns + i;

    // Each generated (s, a) contributes a validity row and an epigraph row.
    auto all_rows_at = [&](const Vector& r_state, double& worst_validity) {
        const Vector gaps = sys.state_map * r_state;
        worst_validity = 0.0;
        for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
            const auto k = vec_index(rows[i].state, rows[i].action, ns);
            worst_validity = std::max(worst_validity, gaps(k) + sys.offset(k));
        }
        return gaps;
    };

    std::vector<char> in_lp(rows.size(), 0);
    // Seed with the first alternative of every state.
    {
        int last = -1;
        for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
            if (rows[i].state != last) {
                in_lp[i] = 1;
                last = rows[i].state;
            }
        }
    }

    const double tol = 1e-9;
    LpResult lp_result;
    int rounds = 0;
    int total_pivots = 0;
    Vector r_state = Vector::Zero(ns);
    Vector t_value = Vector::Zero(n_t);
    while (true) {
        ++rounds;
        std::vector<int> chosen;
        for (int i = 0; i < static_cast<int>(rows.size()); ++i)
            if (in_lp[i]) chosen.push_back(i);
        LinearProgram lp = base;
        const auto m_ub = static_cast<Eigen::Index>(2 * chosen.size() + 2 * n_u);
        lp.a_ub = Matrix::Zero(m_ub, n_var);
        lp.b_ub = Vector::Zero(m_ub);
        Eigen::Index row = 0;
        for (int i : chosen) {
            const auto k = vec_index(rows[i].state, rows[i].action, ns);
            lp.a_ub.row(row).head(ns) = sys.state_map.row(k);
            lp.b_ub(row) = -sys.offset(k);
            ++row;
            lp.a_ub.row(row).head(ns) = sys.state_map.row(k);
            lp.a_ub(row, t_index[rows[i].state]) = -1.0;
            lp.b_ub(row) = config.exact_margin_objective ? -sys.offset(k) : 0.0;
            ++row;
        }
        for (int i = 0; i < n_u; ++i) {
            lp.a_ub(row, i) = 1.0;
            lp.a_ub(row, ns + n_t + i) = -1.0;
            ++row;
            lp.a_ub(row, i) = -1.0;
            lp.a_ub(row, ns + n_t + i) = -1.0;
            ++row;
        }
        lp_result = solve_lp(lp, config.lp);
        total_pivots += lp_result.iterations;
        if (lp_result.status != LpStatus::optimal)
            throw SolverError("LP-IRL solve failed: " + to_string(lp_result.status));
        r_state = lp_result.x.head(ns);
        t_value = lp_result.x.segment(ns, n_t);

        double worst = 0.0;
        const Vector gaps = all_rows_at(r_state, worst);
        // Add the most violated missing row of each state.
        int added = 0;
        std::vector<int> pick(ns, -1);
        std::vector<double> pick_violation(ns, tol);
        for (int i = 0; i < static_cast<int>(rows.size()); ++i) {
            if (in_lp[i]) continue;
            const int s = rows[i].state;
            const auto k = vec_index(s, rows[i].action, ns);
            const double epi_rhs = config.exact_margin_objective ? -sys.offset(k) : 0.0;
            const double t = t_value(t_index[s] - ns);
            const double violation = std::max(gaps(k) + sys.offset(k), gaps(k) - t - epi_rhs);
            if (violation > pick_violation[s]) {
                pick_violation[s] = violation;
                pick[s] = i;
            }
        }
        for (int s = 0; s < ns; ++s) {
            if (pick[s] < 0) continue;
            in_lp[pick[s]] = 1;
            ++added;
        }
        if (added == 0) break;
    }

    IrlSolution out;
    out.raw.r_action = config.fixed_r_action;
    out.raw.r_state = r_state;
    out.r_state_canonical = r_state;
    double worst = 0.0;
    all_rows_at(r_state, worst);
    IrlDiagnostics& d = out.diagnostics;
    d.method = "lp";
    d.objective = reduced_objective(sys, r_state, policy, active, config.lambda);
    if (config.exact_margin_objective) {
        const Vector vec_r =
            RewardDecomposition{config.fixed_r_action, r_state}.vec(mdp.terminal_mask());
        d.objective = margin_objective(matrices.omega, vec_r, policy, active, ns) +
                      config.lambda * r_state.lpNorm<1>();
    }
    d.iterations = total_pivots;
    d.max_constraint_violation = worst;
    d.converged = true;
    for (int s = 0; s < ns; ++s)
        if (!mdp.is_terminal(s) && !active[s]) d.unvisited_states.push_back(s);
    int generated = 0;
    for (char c : in_lp) generated += c;
    d.extra["row_generation_rounds"] = rounds;
    d.extra["rows_generated"] = generated;
    d.extra["rows_total"] = rows.size();
    d.extra["lambda"] = config.lambda;
    d.extra["r_max"] = config.r_max;
    d.extra["exact_margin_objective"] = config.exact_margin_objective;
    if (worst > 1e-6) d.warnings.push_back("validity residual exceeds 1e-6");
    return out;
}

}  // namespace cirl
