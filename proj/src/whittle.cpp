#include "rmabirl/whittle.hpp"

#include <cmath>
#include <iostream>
#include <limits>

#include "rmabirl/error.hpp"

namespace rmabirl {

namespace {

Eigen::MatrixXd bellman_q(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, double subsidy,
                          double gamma, const Eigen::VectorXd& v) {
    const int m = arm.n_states();
    Eigen::MatrixXd q(m, 2);
    q.col(kPassive) = (rewards.array() + subsidy).matrix() + gamma * (arm.p[kPassive] * v);
    q.col(kActive) = rewards + gamma * (arm.p[kActive] * v);
    return q;
}

double tie_tolerance(double a, double b) { return 1e-12 * (1.0 + std::abs(a) + std::abs(b)); }

void check_arm(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards) {
    if (rewards.size() != arm.n_states()) {
        throw ParameterError("reward vector has " + std::to_string(rewards.size()) + " entries for an arm with " +
                             std::to_string(arm.n_states()) + " states");
    }
}

}  // namespace

SubsidyQ q_values(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, double subsidy,
                  double gamma, double tol, int max_iterations) {
    check_arm(arm, rewards);
    if (!(gamma >= 0.0 && gamma <= 1.0)) throw ParameterError("discount must be in [0, 1]");
    if (!(tol > 0.0)) throw ParameterError("value-iteration tolerance must be positive");
    Eigen::VectorXd v = Eigen::VectorXd::Zero(arm.n_states());
    for (int it = 0; it < max_iterations; ++it) {
        const Eigen::MatrixXd q = bellman_q(arm, rewards, subsidy, gamma, v);
        const Eigen::VectorXd next = q.rowwise().maxCoeff();
        const double change = (next - v).cwiseAbs().maxCoeff();
        if (!std::isfinite(change)) break;
        v = next;
        if (change < tol) return {bellman_q(arm, rewards, subsidy, gamma, v), v, subsidy};
    }
    throw DivergenceError("value iteration did not converge (discount " + std::to_string(gamma) + ")");
}

SubsidyQ solve_subsidy(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, double subsidy,
                       double gamma) {
    check_arm(arm, rewards);
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("policy iteration needs a discount in [0, 1)");
    const int m = arm.n_states();
    std::vector<int> policy(m, kPassive);
    Eigen::MatrixXd p_pi(m, m);
    Eigen::VectorXd r_pi(m);
    for (int it = 0; it < 10 * m + 100; ++it) {
        for (int s = 0; s < m; ++s) {
            p_pi.row(s) = arm.p[policy[s]].row(s);
            r_pi[s] = rewards[s] + (policy[s] == kPassive ? subsidy : 0.0);
        }
        const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m) - gamma * p_pi;
        const Eigen::VectorXd v = a.partialPivLu().solve(r_pi);
        const Eigen::MatrixXd q = bellman_q(arm, rewards, subsidy, gamma, v);
        bool stable = true;
        for (int s = 0; s < m; ++s) {
            const double q0 = q(s, kPassive);
            const double q1 = q(s, kActive);
            const double tol = tie_tolerance(q0, q1);
            int next = policy[s];
            if (q1 > q0 + tol) next = kActive;
            else if (q0 > q1 + tol) next = kPassive;
            if (next != policy[s]) {
                policy[s] = next;
                stable = false;
            }
        }
        if (stable) return {q, q.rowwise().maxCoeff(), subsidy};
    }
    throw SolverError("policy iteration did not stabilise");
}

namespace {

double q_gap(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, int state, double gamma,
             double subsidy) {
    const SubsidyQ sol = solve_subsidy(arm, rewards, subsidy, gamma);
    return sol.q(state, kPassive) - sol.q(state, kActive);
}

// d gap / d m with the optimal policy at `sol` held fixed. On each piece
// where that policy stays optimal the gap is affine in m with this slope.
double gap_slope(const ArmTransitions& arm, const SubsidyQ& sol, int state, double gamma) {
    const int n = arm.n_states();
    Eigen::MatrixXd a = Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd passive(n);
    for (int s = 0; s < n; ++s) {
        const int act = sol.q(s, kActive) > sol.q(s, kPassive) ? kActive : kPassive;
        a.row(s) -= gamma * arm.p[act].row(s);
        passive[s] = act == kPassive ? 1.0 : 0.0;
    }
    const Eigen::VectorXd dv = a.partialPivLu().solve(passive);
    return 1.0 + gamma * (arm.p[kPassive].row(state) - arm.p[kActive].row(state)).dot(dv);
}

std::pair<double, double> default_bracket(const Eigen::Ref<const Eigen::VectorXd>& rewards, double gamma) {
    double span = rewards.size() > 0 ? rewards.cwiseAbs().maxCoeff() : 0.0;
    if (span == 0.0) span = 1.0;
    const double half = span / (1.0 - gamma);
    return {-half, half};
}

}  // namespace

double whittle_index(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, int state,
                     double gamma, const WhittleSearch& search) {
    check_arm(arm, rewards);
    if (state < 0 || state >= arm.n_states()) throw ParameterError("state out of range");
    if (!(search.bisect_tol > 0.0)) throw ParameterError("bisection tolerance must be positive");
    if (!(gamma >= 0.0 && gamma < 1.0)) throw ParameterError("Whittle indices need a discount in [0, 1)");
    // The gap is exactly m when the future is ignored.
    if (gamma == 0.0) return 0.0;

    auto [lo, hi] = default_bracket(rewards, gamma);
    if (search.lo) lo = *search.lo;
    if (search.hi) hi = *search.hi;
    if (!(lo < hi)) throw BracketingError("empty bracket for the Whittle search");

    auto gap = [&](double m) { return q_gap(arm, rewards, state, gamma, m); };
    double g_lo = gap(lo);
    double g_hi = gap(hi);
    for (int k = 0; k < search.max_widenings && !(g_lo <= 0.0 && g_hi >= 0.0); ++k) {
        const double centre = 0.5 * (lo + hi);
        const double half = hi - lo;
        lo = centre - half;
        hi = centre + half;
        g_lo = gap(lo);
        g_hi = gap(hi);
    }
    if (!(g_lo <= 0.0 && g_hi >= 0.0)) {
        throw BracketingError("no sign change of Q(u,0) - Q(u,1) in [" + std::to_string(lo) + ", " +
                              std::to_string(hi) + "] for state " + std::to_string(state));
    }
    if (g_lo == 0.0) return lo;
    if (g_hi == 0.0) return hi;

    while (hi - lo > search.bisect_tol) {
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        const double g = gap(mid);
        if (g < 0.0) {
            lo = mid;
            g_lo = g;
        } else {
            hi = mid;
            g_hi = g;
        }
    }
    // The gap is piecewise linear in m: a secant step, then Newton steps on
    // the current piece, land on the root once the piece is the right one.
    double best = std::abs(g_lo) < std::abs(g_hi) ? lo : hi;
    double best_gap = std::min(std::abs(g_lo), std::abs(g_hi));
    double m = lo - g_lo * (hi - lo) / (g_hi - g_lo);
    if (!(m >= lo && m <= hi)) m = 0.5 * (lo + hi);
    for (int k = 0; k < 8; ++k) {
        const SubsidyQ sol = solve_subsidy(arm, rewards, m, gamma);
        const double g = sol.q(state, kPassive) - sol.q(state, kActive);
        if (std::abs(g) < best_gap || (std::abs(g) == best_gap && k == 0)) {
            best = m;
            best_gap = std::abs(g);
        }
        if (g == 0.0) break;
        const double slope = gap_slope(arm, sol, state, gamma);
        if (!(slope > 0.0)) break;
        const double next = m - g / slope;
        if (!(next >= lo && next <= hi) || next == m) break;
        m = next;
    }
    return best;
}

Eigen::VectorXd whittle_gradient(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards,
                                 int state, double gamma, std::optional<double> index) {
    check_arm(arm, rewards);
    const int m = arm.n_states();
    if (state < 0 || state >= m) throw ParameterError("state out of range");
    if (gamma == 0.0) return Eigen::VectorXd::Zero(m);
    if (!(gamma > 0.0 && gamma < 1.0)) throw SolverError("Whittle gradient needs a discount in (0, 1)");

    const double w = index ? *index : whittle_index(arm, rewards, state, gamma);
    const SubsidyQ sol = solve_subsidy(arm, rewards, w, gamma);

    // Optimal policy at subsidy w, with `state` itself taken passive.
    Eigen::MatrixXd p_pi(m, m);
    Eigen::VectorXd passive(m);
    for (int s = 0; s < m; ++s) {
        const double q0 = sol.q(s, kPassive);
        const double q1 = sol.q(s, kActive);
        const int a = (s != state && q1 > q0 + 1e-9 * (1.0 + std::abs(q0) + std::abs(q1))) ? kActive : kPassive;
        p_pi.row(s) = arm.p[a].row(s);
        passive[s] = a == kPassive ? 1.0 : 0.0;
    }
    const Eigen::MatrixXd a = Eigen::MatrixXd::Identity(m, m) - gamma * p_pi;
    const Eigen::FullPivLU<Eigen::MatrixXd> lu(a);
    if (!lu.isInvertible()) throw SolverError("singular policy-evaluation system in Whittle gradient");

    // Q(u,0) - Q(u,1) = m + gamma c^T A^{-1} (R + m d) = 0 with c = P(u,0,.) - P(u,1,.)
    const Eigen::VectorXd c = (arm.p[kPassive].row(state) - arm.p[kActive].row(state)).transpose();
    const Eigen::VectorXd y = a.transpose().fullPivLu().solve(c);  // y = A^{-T} c
    const double denom = 1.0 + gamma * y.dot(passive);
    if (std::abs(denom) < 1e-14) throw SolverError("degenerate indifference condition in Whittle gradient");
    return -gamma * y / denom;
}

WhittleTable whittle_table(const RmabInstance& instance, const RewardMatrix& rewards, double gamma) {
    if (rewards.n_arms() != instance.n_arms || rewards.n_states() != instance.n_states) {
        throw ParameterError("reward matrix shape does not match the instance");
    }
    WhittleTable t{Eigen::MatrixXd(instance.n_arms, instance.n_states)};
    for (int i = 0; i < instance.n_arms; ++i) {
        const Eigen::VectorXd r = rewards.values.row(i).transpose();
        for (int s = 0; s < instance.n_states; ++s) t.w(i, s) = whittle_index(instance.transitions[i], r, s, gamma);
    }
    return t;
}

WhittleTableWithGradient whittle_table_with_gradient(const RmabInstance& instance, const RewardMatrix& rewards,
                                                     double gamma) {
    WhittleTableWithGradient out{whittle_table(instance, rewards, gamma), {}};
    out.grads.resize(instance.n_arms);
    for (int i = 0; i < instance.n_arms; ++i) {
        const Eigen::VectorXd r = rewards.values.row(i).transpose();
        auto& g = out.grads[i];
        g.resize(instance.n_states, instance.n_states);
        for (int s = 0; s < instance.n_states; ++s) {
            g.row(s) = whittle_gradient(instance.transitions[i], r, s, gamma, out.table.w(i, s)).transpose();
        }
    }
    return out;
}

double indifference_residual(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, int state,
                             double gamma, double index) {
    return std::abs(q_gap(arm, rewards, state, gamma, index));
}

bool gap_is_monotone(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, int state,
                     double gamma, int grid_points) {
    const auto [lo, hi] = default_bracket(rewards, gamma);
    double prev = -std::numeric_limits<double>::infinity();
    bool monotone = true;
    for (int k = 0; k < grid_points; ++k) {
        const double m = lo + (hi - lo) * k / (grid_points - 1);
        const double g = q_gap(arm, rewards, state, gamma, m);
        if (g < prev - 1e-9 * (1.0 + std::abs(prev))) monotone = false;
        prev = g;
    }
    if (!monotone) std::cerr << "warning: Q-gap is not monotone in the subsidy (arm may not be indexable)\n";
    return monotone;
}

}  // namespace rmabirl
