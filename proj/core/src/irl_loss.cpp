#include "cirl/irl_loss.hpp"

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

/// Index of the largest Q(s, a') over a' != a, lowest index on ties.
int best_alternative(const Vector& q, int s, int a, int ns, int na) {
    int best = -1;
    for (int b = 0; b < na; ++b) {
        if (b == a) continue;
        if (best < 0 || q(vec_index(s, b, ns)) > q(vec_index(s, best, ns))) best = b;
    }
    return best;
}

Vector project(const Vector& r, const Mdp& mdp, double r_max) {
    Vector out = r.cwiseMax(-r_max).cwiseMin(r_max);
    for (int t : mdp.terminal_states()) out(t) = 0.0;
    return out;
}

/// Accumulates inequality rows a'x <= b for a LinearProgram.
class RowSet {
public:
    explicit RowSet(int n_var) : n_var_(n_var) {}

    Eigen::Index add(const Vector& coeffs, double rhs) {
        rows_.push_back(coeffs);
        rhs_.push_back(rhs);
        return static_cast<Eigen::Index>(rows_.size()) - 1;
    }

    Vector blank() const { return Vector::Zero(n_var_); }

    void apply(LinearProgram& lp) const {
        lp.a_ub.resize(static_cast<Eigen::Index>(rows_.size()), n_var_);
        lp.b_ub.resize(static_cast<Eigen::Index>(rows_.size()));
        for (std::size_t i = 0; i < rows_.size(); ++i) {
            lp.a_ub.row(static_cast<Eigen::Index>(i)) = rows_[i].transpose();
            lp.b_ub(static_cast<Eigen::Index>(i)) = rhs_[i];
        }
    }

private:
    int n_var_;
    std::vector<Vector> rows_;
    std::vector<double> rhs_;
};

/// w-variable bookkeeping shared by both polish stages.
struct SupportTerms {
    struct Term {
        int state_slot;
        int state;
        int action;
        double prob;
    };
    std::vector<Term> terms;
};

SupportTerms support_terms(const LossModel& model) {
    SupportTerms out;
    for (std::size_t i = 0; i < model.states.size(); ++i) {
        const int s = model.states[i];
        for (int a = 0; a < model.n_actions; ++a)
            if (model.pi(s, a) > 0.0)
                out.terms.push_back({static_cast<int>(i), s, a, model.pi(s, a)});
    }
    return out;
}

/// Adds the row Q(s, alt) - Q(s, a) - w <= 0 for term `k`.
void add_gap_row(RowSet& rows, const LossModel& model, const SupportTerms::Term& term, int alt,
                 int w_col) {
    const int ns = model.n_states;
    const auto ka = vec_index(term.state, term.action, ns);
    const auto kb = vec_index(term.state, alt, ns);
    Vector row = rows.blank();
    row.head(ns) = (model.q_map.row(kb) - model.q_map.row(ka)).transpose();
    row(w_col) = -1.0;
    rows.add(row, -(model.q_offset(kb) - model.q_offset(ka)));
}

double q_bound(const LossModel& model, double r_max) {
    double bound = 0.0;
    for (Eigen::Index k = 0; k < model.q_map.rows(); ++k)
        bound = std::max(bound, r_max * model.q_map.row(k).lpNorm<1>() + std::abs(model.q_offset(k)));
    return bound;
}

struct PolishResult {
    Vector r_state;
    double lower_bound = 0.0;
    int rounds = 0;
    bool ok = false;
};

/// Finds the global minimum value of the loss by cutting planes, then the
/// point closest (L1) to `start` whose per-state terms stay within `slack`
/// of the optimum.
PolishResult exact_polish(const Mdp& mdp, const LossModel& model, const Vector& start,
                          double start_loss, const LossIrlConfig& cfg) {
    const int ns = model.n_states;
    const int nv = static_cast<int>(model.states.size());
    const SupportTerms sup = support_terms(model);
    const int nw = static_cast<int>(sup.terms.size());
    const double w_big = 2.0 * q_bound(model, cfg.r_max) + 1.0;
    const double z_big = std::log(std::max(start_loss, 1.0)) + 1.0;
    const double e_big = start_loss + 1.0;
    const double tol = 1e-9;
    PolishResult out;

    // Stage 1 layout: r | w | z | e.
    const int c_w = ns;
    const int c_z = ns + nw;
    const int c_e = ns + nw + nv;
    const int n1 = ns + nw + 2 * nv;
    LinearProgram lp1 = LinearProgram::with_variables(n1);
    for (int s = 0; s < ns; ++s) {
        const bool fixed = mdp.is_terminal(s);
        lp1.lower(s) = fixed ? 0.0 : -cfg.r_max;
        lp1.upper(s) = fixed ? 0.0 : cfg.r_max;
    }
    for (int k = 0; k < nw; ++k) {
        lp1.lower(c_w + k) = -w_big;
        lp1.upper(c_w + k) = w_big;
    }
    for (int i = 0; i < nv; ++i) {
        lp1.upper(c_z + i) = z_big;
        lp1.lower(c_e + i) = 1.0;
        lp1.upper(c_e + i) = e_big;
        lp1.c(c_e + i) = 1.0;
    }

    RowSet rows1(n1);
    std::vector<std::vector<int>> gap_rows(nw);  // alternative actions already present
    auto ensure_gap = [&](RowSet& rows, std::vector<std::vector<int>>& present, int k, int alt,
                          int w_col) {
        auto& list = present[k];
        if (std::find(list.begin(), list.end(), alt) != list.end()) return false;
        list.push_back(alt);
        add_gap_row(rows, model, sup.terms[k], alt, w_col);
        return true;
    };
    for (int i = 0; i < nv; ++i) {
        Vector row = rows1.blank();
        for (int k = 0; k < nw; ++k)
            if (sup.terms[k].state_slot == i) row(c_w + k) = sup.terms[k].prob;
        row(c_z + i) = -1.0;
        rows1.add(row, 0.0);
    }
    auto add_cut = [&](int i, double zbar) {
        const double ez = std::exp(zbar);
        Vector row = rows1.blank();
        row(c_z + i) = ez;
        row(c_e + i) = -1.0;
        rows1.add(row, -ez * (1.0 - zbar));
    };
    {
        const Vector q = model.q_map * start + model.q_offset;
        const Vector m = loss_margins(model, start);
        for (int k = 0; k < nw; ++k)
            ensure_gap(rows1, gap_rows, k,
                       best_alternative(q, sup.terms[k].state, sup.terms[k].action, ns, model.n_actions),
                       c_w + k);
        for (int i = 0; i < nv; ++i) {
            add_cut(i, 0.0);
            if (m(i) > 0.0) add_cut(i, std::min(m(i), z_big));
        }
    }

    Vector best_r = start;
    double best_loss = start_loss;
    double lower = -std::numeric_limits<double>::infinity();
    int stagnant = 0;
    for (int round = 0; round < 500; ++round) {
        out.rounds = round + 1;
        rows1.apply(lp1);
        const LpResult res = solve_lp(lp1, cfg.lp);
        if (res.status != LpStatus::optimal || !res.x.allFinite()) return out;
        bool progress = res.objective > lower + 1e-12 * std::abs(lower);
        lower = std::max(lower, res.objective);
        const Vector r = res.x.head(ns);
        const double l = loss(model, r);
        if (l < best_loss * (1.0 - 1e-12)) progress = true;
        if (l < best_loss) {
            best_loss = l;
            best_r = r;
        }
        stagnant = progress ? 0 : stagnant + 1;
        if (stagnant >= 20) break;
        if (best_loss - lower <= 1e-8 * best_loss) break;

        const Vector q = model.q_map * r + model.q_offset;
        int added = 0;
        for (int k = 0; k < nw; ++k) {
            const auto& t = sup.terms[k];
            const int alt = best_alternative(q, t.state, t.action, ns, model.n_actions);
            const double gap = q(vec_index(t.state, alt, ns)) - q(vec_index(t.state, t.action, ns));
            if (gap > res.x(c_w + k) + tol && ensure_gap(rows1, gap_rows, k, alt, c_w + k)) ++added;
        }
        for (int i = 0; i < nv; ++i) {
            const double zi = res.x(c_z + i);
            if (res.x(c_e + i) < std::exp(zi) * (1.0 - 1e-12) - tol) {
                add_cut(i, zi);
                ++added;
            }
        }
        if (added == 0) break;
    }
    out.lower_bound = lower;

    // Stage 2 layout: r | v | w | z. Per-state terms may not exceed those of
    // the stage 1 minimiser by more than `slack`.
    const double slack = 1e-7;
    const Vector z_star = loss_margins(model, best_r).cwiseMax(0.0);
    const int d_v = ns;
    const int d_w = 2 * ns;
    const int d_z = 2 * ns + nw;
    const int n2 = 2 * ns + nw + nv;
    LinearProgram lp2 = LinearProgram::with_variables(n2);
    for (int s = 0; s < ns; ++s) {
        const bool fixed = mdp.is_terminal(s);
        lp2.lower(s) = fixed ? 0.0 : -cfg.r_max;
        lp2.upper(s) = fixed ? 0.0 : cfg.r_max;
        lp2.upper(d_v + s) = 2.0 * cfg.r_max;
        lp2.c(d_v + s) = 1.0;
    }
    for (int k = 0; k < nw; ++k) {
        lp2.lower(d_w + k) = -w_big;
        lp2.upper(d_w + k) = w_big;
    }
    for (int i = 0; i < nv; ++i) lp2.upper(d_z + i) = z_star(i) + slack;

    RowSet rows2(n2);
    std::vector<std::vector<int>> gap_rows2(nw);
    for (int s = 0; s < ns; ++s) {
        Vector row = rows2.blank();
        row(s) = 1.0;
        row(d_v + s) = -1.0;
        rows2.add(row, start(s));
        row(s) = -1.0;
        rows2.add(row, -start(s));
    }
    for (int i = 0; i < nv; ++i) {
        Vector row = rows2.blank();
        for (int k = 0; k < nw; ++k)
            if (sup.terms[k].state_slot == i) row(d_w + k) = sup.terms[k].prob;
        row(d_z + i) = -1.0;
        rows2.add(row, 0.0);
    }
    for (int k = 0; k < nw; ++k)
        for (int alt : gap_rows[k]) ensure_gap(rows2, gap_rows2, k, alt, d_w + k);

    for (int round = 0; round < 500; ++round) {
        rows2.apply(lp2);
        const LpResult res = solve_lp(lp2, cfg.lp);
        if (res.status != LpStatus::optimal || !res.x.allFinite()) break;
        const Vector r = res.x.head(ns);
        const Vector q = model.q_map * r + model.q_offset;
        int added = 0;
        for (int k = 0; k < nw; ++k) {
            const auto& t = sup.terms[k];
            const int alt = best_alternative(q, t.state, t.action, ns, model.n_actions);
            const double gap = q(vec_index(t.state, alt, ns)) - q(vec_index(t.state, t.action, ns));
            if (gap > res.x(d_w + k) + tol && ensure_gap(rows2, gap_rows2, k, alt, d_w + k)) ++added;
        }
        if (added == 0) {
            if (loss(model, r) <= best_loss * (1.0 + 1e-6)) best_r = r;
            break;
        }
    }
    out.r_state = best_r;
    out.ok = true;
    return out;
}

}  // namespace

LossModel build_loss_model(const Mdp& mdp, const StochasticPolicy& pi,
                           const std::vector<bool>& visited, const Vector& fixed_r_action) {
    const int ns = mdp.n_states();
    const int na = mdp.n_actions();
    require(fixed_r_action.size() == na, "fixed R_A length does not match N_A");
    require(static_cast<int>(visited.size()) == ns, "visited mask length does not match N_S");
    LossModel model;
    model.n_states = ns;
    model.n_actions = na;
    model.pi = pi.probs;
    const Matrix op = q_operator(mdp, pi);
    model.q_map = op * state_broadcast(ns, na, mdp.terminal_mask());
    model.q_offset = op * action_reward_vec(fixed_r_action, ns, mdp.terminal_mask());
    for (int s = 0; s < ns; ++s)
        if (visited[s] && !mdp.is_terminal(s)) model.states.push_back(s);
    return model;
}

Vector loss_margins(const LossModel& model, const Vector& r_state) {
    const int ns = model.n_states;
    const Vector q = model.q_map * r_state + model.q_offset;
    Vector out(static_cast<Eigen::Index>(model.states.size()));
    for (std::size_t i = 0; i < model.states.size(); ++i) {
        const int s = model.states[i];
        double m = 0.0;
        for (int a = 0; a < model.n_actions; ++a) {
            const double p = model.pi(s, a);
            if (p == 0.0) continue;
            const int alt = best_alternative(q, s, a, ns, model.n_actions);
            if (alt < 0) continue;
            m += p * (q(vec_index(s, alt, ns)) - q(vec_index(s, a, ns)));
        }
        out(static_cast<Eigen::Index>(i)) = m;
    }
    return out;
}

double loss(const LossModel& model, const Vector& r_state) {
    const Vector m = loss_margins(model, r_state);
    double total = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) total += std::exp(std::max(0.0, m(i)));
    return total;
}

double loss_and_gradient(const LossModel& model, const Vector& r_state, Vector& gradient) {
    const int ns = model.n_states;
    const Vector q = model.q_map * r_state + model.q_offset;
    gradient = Vector::Zero(ns);
    double total = 0.0;
    Vector d(ns);
    for (const int s : model.states) {
        double m = 0.0;
        d.setZero();
        for (int a = 0; a < model.n_actions; ++a) {
            const double p = model.pi(s, a);
            if (p == 0.0) continue;
            const int alt = best_alternative(q, s, a, ns, model.n_actions);
            if (alt < 0) continue;
            const auto ka = vec_index(s, a, ns);
            const auto kb = vec_index(s, alt, ns);
            m += p * (q(kb) - q(ka));
            d += p * (model.q_map.row(kb) - model.q_map.row(ka)).transpose();
        }
        if (m > 0.0) {
            const double e = std::exp(m);
            total += e;
            gradient += e * d;
        } else {
            total += 1.0;
        }
    }
    return total;
}

Vector loss_gradient(const LossModel& model, const Vector& r_state) {
    Vector g;
    loss_and_gradient(model, r_state, g);
    return g;
}

double kink_distance(const LossModel& model, const Vector& r_state) {
    const int ns = model.n_states;
    const int na = model.n_actions;
    const Vector q = model.q_map * r_state + model.q_offset;
    const Vector m = loss_margins(model, r_state);
    double dist = m.size() > 0 ? m.cwiseAbs().minCoeff() : std::numeric_limits<double>::infinity();
    std::vector<int> cls(static_cast<std::size_t>(na));
    for (const int s : model.states) {
        // Actions with identical Q maps (e.g. two moves into the same wall)
        // tie everywhere, which is not a kink.
        for (int b = 0; b < na; ++b) {
            cls[b] = b;
            const auto kb = vec_index(s, b, ns);
            for (int c = 0; c < b; ++c) {
                const auto kc = vec_index(s, c, ns);
                if (cls[c] == c && model.q_offset(kb) == model.q_offset(kc) &&
                    (model.q_map.row(kb) - model.q_map.row(kc)).cwiseAbs().maxCoeff() == 0.0) {
                    cls[b] = c;
                    break;
                }
            }
        }
        for (int a = 0; a < na; ++a) {
            if (model.pi(s, a) == 0.0) continue;
            double first = -std::numeric_limits<double>::infinity();
            double second = first;
            int first_cls = -1;
            for (int b = 0; b < na; ++b) {
                if (b == a) continue;
                const double v = q(vec_index(s, b, ns));
                if (cls[b] == first_cls) continue;
                if (v > first) {
                    second = first;
                    first = v;
                    first_cls = cls[b];
                } else if (v > second) {
                    second = v;
                }
            }
            if (std::isfinite(second)) dist = std::min(dist, first - second);
        }
    }
    return dist;
}

IrlSolution minimize_loss(const Mdp& mdp, const EmpiricalPolicies& empirical,
                          const Vector& fixed_r_action, const LossIrlConfig& config,
                          LossTrace* trace) {
    require(config.step_size > 0.0, "step_size must be positive");
    require(std::isfinite(config.r_max) && config.r_max > 0.0, "r_max must be positive and finite");
    require(config.max_iters >= 0, "max_iters must be non-negative");
    require(empirical.n_visited() > 0, "rollouts visit no state");
    const int ns = mdp.n_states();
    const LossModel model =
        build_loss_model(mdp, empirical.completed(), empirical.visited, fixed_r_action);
    const double floor_value = static_cast<double>(model.states.size());

    LpIrlConfig lp_cfg;
    lp_cfg.r_max = config.r_max;
    lp_cfg.fixed_r_action = fixed_r_action;
    lp_cfg.lp = config.lp;
    const DeterministicPolicy modal = empirical.completed_modal();

    Vector r = Vector::Zero(ns);
    if (config.init == LossInit::lp_warm_start)
        r = solve_lp_irl(mdp, modal, empirical.visited, lp_cfg).raw.r_state;
    r = project(r, mdp, config.r_max);

    Vector g;
    double l = loss_and_gradient(model, r, g);
    if (!std::isfinite(l)) throw SolverError("loss is not finite at the initial point");
    if (trace) {
        trace->losses.push_back(l);
        trace->iterates.push_back(r);
    }
    int iters = 0;
    std::string stop = "max_iters";
    while (true) {
        if (l <= floor_value * (1.0 + 1e-15)) {
            stop = "global_minimum";
            break;
        }
        if (g.lpNorm<Eigen::Infinity>() <= config.grad_tol) {
            stop = "grad_tol";
            break;
        }
        if (iters >= config.max_iters) break;
        double step = config.step_size;
        bool moved = false;
        while (step >= config.min_step) {
            const Vector candidate = project(r - step * g, mdp, config.r_max);
            Vector g2;
            const double l2 = loss_and_gradient(model, candidate, g2);
            if (std::isfinite(l2) && l2 < l) {
                r = candidate;
                l = l2;
                g = std::move(g2);
                moved = true;
                break;
            }
            step *= 0.5;
        }
        if (!moved) {
            stop = "stalled";
            break;
        }
        ++iters;
        if (trace) {
            trace->losses.push_back(l);
            trace->iterates.push_back(r);
        }
    }
    const double descent_loss = l;

    bool polished = false;
    double lower_bound = floor_value;
    int polish_rounds = 0;
    if (config.exact_polish && l > floor_value * (1.0 + 1e-9)) {
        const PolishResult p = exact_polish(mdp, model, r, l, config);
        polish_rounds = p.rounds;
        if (p.ok && p.r_state.allFinite()) {
            lower_bound = std::max(lower_bound, p.lower_bound);
            const double lp = loss(model, p.r_state);
            if (lp <= l) {
                polished = lp < l;
                r = p.r_state;
                l = lp;
            }
        }
    }
    if (config.lp_refinement) {
        const IrlSolution refined = solve_lp_irl(mdp, modal, empirical.visited, lp_cfg);
        const double lr = loss(model, refined.raw.r_state);
        if (lr <= l) {
            r = refined.raw.r_state;
            l = lr;
        }
    }

    IrlSolution out;
    out.raw.r_action = fixed_r_action;
    out.raw.r_state = r;
    out.r_state_canonical = r;
    IrlDiagnostics& d = out.diagnostics;
    d.method = "loss";
    d.objective = l;
    d.iterations = iters;
    d.converged = stop != "max_iters";
    if (!d.converged) d.warnings.push_back("descent reached max_iters");
    for (int s = 0; s < ns; ++s)
        if (!mdp.is_terminal(s) && !empirical.visited[s]) d.unvisited_states.push_back(s);
    d.extra["stop_reason"] = stop;
    d.extra["descent_loss"] = descent_loss;
    d.extra["visited_states"] = model.states.size();
    d.extra["polished"] = polished;
    d.extra["polish_rounds"] = polish_rounds;
    d.extra["loss_lower_bound"] = lower_bound;
    return out;
}

}  // namespace cirl
