#include "cirl/irl_maxent.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cirl {

namespace {

void require(bool ok, const std::string& what) {
    if (!ok) throw std::invalid_argument(what);
}

Matrix reward_table(const Mdp& mdp, const Vector& r_action, const Vector& r_state) {
    return RewardDecomposition{r_action, r_state}.table(mdp.terminal_mask());
}

double mean_tv(const EmpiricalPolicies& emp, const StochasticPolicy& policy) {
    double total = 0.0;
    int n = 0;
    for (Eigen::Index s = 0; s < policy.probs.rows(); ++s) {
        if (!emp.visited[s]) continue;
        total += 0.5 * (policy.probs.row(s) - emp.frequencies.row(s)).cwiseAbs().sum();
        ++n;
    }
    return n > 0 ? total / n : 0.0;
}

}  // namespace

SoftValues soft_value_iteration(const Mdp& mdp, const Matrix& reward, double beta, double tol,
                                int max_sweeps, const Vector* warm_start) {
    require(std::isfinite(beta) && beta > 0.0, "beta must be positive and finite");
    require(reward.rows() == mdp.n_states() && reward.cols() == mdp.n_actions(),
            "reward table has wrong shape");
    const int ns = mdp.n_states();
    const int na = mdp.n_actions();
    SoftValues out;
    Vector v = warm_start ? *warm_start : Vector::Zero(ns);
    for (int t : mdp.terminal_states()) v(t) = 0.0;
    auto soft_max = [&](const Matrix& q) {
        Vector next(ns);
        for (int s = 0; s < ns; ++s) {
            if (mdp.is_terminal(s)) {
                next(s) = 0.0;
                continue;
            }
            const double m = q.row(s).maxCoeff();
            next(s) = m + std::log((beta * (q.row(s).array() - m)).exp().sum()) / beta;
        }
        return next;
    };
    Matrix q;
    for (int sweep = 1; sweep <= max_sweeps; ++sweep) {
        q = bellman_backup(mdp, reward, v);
        const Vector next = soft_max(q);
        const double delta = (next - v).lpNorm<Eigen::Infinity>();
        v = next;
        out.sweeps = sweep;
        const double floor =
            16.0 * std::numeric_limits<double>::epsilon() * (1.0 + v.lpNorm<Eigen::Infinity>());
        if (delta <= std::max(tol, floor)) break;
    }
    out.q = bellman_backup(mdp, reward, v);
    out.policy.probs.resize(ns, na);
    for (int s = 0; s < ns; ++s) {
        const double m = out.q.row(s).maxCoeff();
        const auto w = (beta * (out.q.row(s).array() - m)).exp();
        out.policy.probs.row(s) = w / w.sum();
    }
    out.v = std::move(v);
    return out;
}

DemonstrationStats demonstration_stats(std::span<const Rollout> rollouts, const Mdp& mdp) {
    require(!rollouts.empty(), "at least one rollout is required");
    DemonstrationStats st;
    st.discounted_counts = Matrix::Zero(mdp.n_states(), mdp.n_actions());
    st.start_distribution = Vector::Zero(mdp.n_states());
    for (const Rollout& r : rollouts) {
        if (r.steps.empty()) continue;
        ++st.n_trajectories;
        st.start_distribution(r.steps.front().s) += 1.0;
        double w = 1.0;
        for (const Step& step : r.steps) {
            require(step.s >= 0 && step.s < mdp.n_states() && step.a >= 0 &&
                        step.a < mdp.n_actions(),
                    "rollout index out of range");
            st.discounted_counts(step.s, step.a) += w;
            w *= mdp.discount();
        }
    }
    require(st.n_trajectories > 0, "rollouts contain no steps");
    st.start_distribution /= st.n_trajectories;
    return st;
}

double demonstration_log_likelihood(const DemonstrationStats& stats, const StochasticPolicy& policy) {
    double total = 0.0;
    for (Eigen::Index s = 0; s < stats.discounted_counts.rows(); ++s)
        for (Eigen::Index a = 0; a < stats.discounted_counts.cols(); ++a) {
            const double c = stats.discounted_counts(s, a);
            if (c == 0.0) continue;
            total += c * std::log(std::max(policy.probs(s, a), std::numeric_limits<double>::min()));
        }
    return total / stats.n_trajectories;
}

Matrix expected_visitation(const Mdp& mdp, const StochasticPolicy& policy, const Vector& start,
                           int horizon) {
    const int ns = mdp.n_states();
    const int na = mdp.n_actions();
    Matrix total = Matrix::Zero(ns, na);
    Vector mu = start;
    double w = 1.0;
    for (int t = 0; t < horizon; ++t) {
        Vector next = Vector::Zero(ns);
        for (int s = 0; s < ns; ++s) {
            if (mu(s) == 0.0 || mdp.is_terminal(s)) continue;
            for (int a = 0; a < na; ++a) {
                const double p = mu(s) * policy.probs(s, a);
                if (p == 0.0) continue;
                total(s, a) += w * p;
                for (const Successor& e : mdp.successors(s, a)) next(e.state) += p * e.prob;
            }
        }
        mu = std::move(next);
        w *= mdp.discount();
    }
    return total;
}

Vector maxent_gradient(const Mdp& mdp, const DemonstrationStats& stats,
                       const StochasticPolicy& policy, double beta, int horizon) {
    const Matrix model = expected_visitation(mdp, policy, stats.start_distribution, horizon);
    const Matrix empirical = stats.discounted_counts / stats.n_trajectories;
    Vector g = beta * (empirical - model).rowwise().sum();
    for (int t : mdp.terminal_states()) g(t) = 0.0;
    return g;
}

IrlSolution maxent_irl(std::span<const Rollout> rollouts, const Mdp& mdp,
                       const Vector& fixed_r_action, const MaxEntConfig& config,
                       MaxEntTrace* trace) {
    require(std::isfinite(config.beta) && config.beta > 0.0, "beta must be positive and finite");
    require(config.learning_rate > 0.0, "learning_rate must be positive");
    require(config.max_epochs >= 0 && config.horizon >= 1, "invalid epoch count or horizon");
    require(fixed_r_action.size() == mdp.n_actions(), "fixed R_A length does not match N_A");
    const int ns = mdp.n_states();
    const DemonstrationStats stats = demonstration_stats(rollouts, mdp);
    const EmpiricalPolicies emp = empirical_policies(rollouts, ns, mdp.n_actions());

    Vector r = Vector::Zero(ns);
    SoftValues sv = soft_value_iteration(mdp, reward_table(mdp, fixed_r_action, r), config.beta,
                                         config.soft_tol);
    double ll = demonstration_log_likelihood(stats, sv.policy);
    if (trace) {
        trace->log_likelihoods.push_back(ll);
        trace->policy_tv.push_back(mean_tv(emp, sv.policy));
    }
    double lr = config.learning_rate;
    int epoch = 0;
    bool converged = false;
    for (; epoch < config.max_epochs; ++epoch) {
        const Vector g = maxent_gradient(mdp, stats, sv.policy, config.beta, config.horizon);
        double step = lr;
        bool improved = false;
        Vector candidate;
        SoftValues csv;
        double cll = ll;
        while (step >= 1e-12) {
            candidate = r + step * g;
            csv = soft_value_iteration(mdp, reward_table(mdp, fixed_r_action, candidate),
                                       config.beta, config.soft_tol, 1'000'000, &sv.v);
            cll = demonstration_log_likelihood(stats, csv.policy);
            if (std::isfinite(cll) && cll >= ll) {
                improved = true;
                break;
            }
            step *= 0.5;
        }
        if (!improved) {
            converged = true;
            break;
        }
        const double gain = cll - ll;
        r = std::move(candidate);
        sv = std::move(csv);
        ll = cll;
        lr = 2.0 * step;
        if (trace) {
            trace->log_likelihoods.push_back(ll);
            trace->policy_tv.push_back(mean_tv(emp, sv.policy));
        }
        if (gain <= config.convergence_tol * std::abs(ll)) {
            converged = true;
            ++epoch;
            break;
        }
    }

    IrlSolution out;
    out.raw.r_action = fixed_r_action;
    out.raw.r_state = r;
    out.r_state_canonical = r;
    IrlDiagnostics& d = out.diagnostics;
    d.method = "maxent";
    d.objective = ll;
    d.iterations = epoch;
    d.converged = converged;
    if (!converged) d.warnings.push_back("maxent did not converge within max_epochs");
    for (int s = 0; s < ns; ++s)
        if (!mdp.is_terminal(s) && !emp.visited[s]) d.unvisited_states.push_back(s);
    d.extra["beta"] = config.beta;
    d.extra["horizon"] = config.horizon;
    d.extra["log_likelihood"] = ll;
    d.extra["final_learning_rate"] = lr;
    return out;
}

}  // namespace cirl
