#pragma once

#include <optional>

#include <Eigen/Dense>

#include "rmabirl/rmab.hpp"

namespace rmabirl {

/// Q- and V-values of one arm when not pulling earns an extra subsidy m.
struct SubsidyQ {
    Eigen::MatrixXd q;  // q(s, a)
    Eigen::VectorXd v;  // v(s) = max_a q(s, a)
    double subsidy = 0.0;
};

/// Value iteration on
///   Q(s, a) = m 1{a = 0} + R(s) + gamma sum_s' P(s, a, s') V(s'),  V = max_a Q,
/// until the sup-norm change drops below `tol`. Throws DivergenceError when
/// `max_iterations` is exhausted.
SubsidyQ q_values(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, double subsidy,
                  double gamma, double tol = 1e-10, int max_iterations = 1'000'000);

/// Exact solution of the same equations by policy iteration (gamma < 1).
/// Ties in policy improvement keep the passive action.
SubsidyQ solve_subsidy(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, double subsidy,
                       double gamma);

struct WhittleSearch {
    /// Explicit bracket; when absent it is +-max|R| / (1 - gamma).
    std::optional<double> lo;
    std::optional<double> hi;
    double bisect_tol = 1e-8;
    /// Number of times the bracket is doubled before giving up.
    int max_widenings = 5;
};

/// Passive subsidy at which pulling and not pulling `state` are equally good.
/// Assumes indexability; throws BracketingError when no sign change is found.
double whittle_index(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, int state,
                     double gamma, const WhittleSearch& search = {});

/// d W(state) / d R, obtained by writing the indifference condition at the
/// optimal policy as an affine function of R. `index` is W(state) if already
/// known. Throws SolverError on a singular system.
Eigen::VectorXd whittle_gradient(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, int state,
                                 double gamma, std::optional<double> index = std::nullopt);

/// W[i][s] for every arm and state.
struct WhittleTable {
    Eigen::MatrixXd w;

    double operator()(int arm, int state) const { return w(arm, state); }
};

WhittleTable whittle_table(const RmabInstance& instance, const RewardMatrix& rewards, double gamma);

/// Whittle indices together with dW[i][s] / dR[i][.] (row s of grads[i]).
struct WhittleTableWithGradient {
    WhittleTable table;
    std::vector<Eigen::MatrixXd> grads;
};

WhittleTableWithGradient whittle_table_with_gradient(const RmabInstance& instance, const RewardMatrix& rewards,
                                                     double gamma);

/// |Q^W(u, 0) - Q^W(u, 1)| at the computed index.
double indifference_residual(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, int state,
                             double gamma, double index);

/// Debug check: samples the Q-gap at `state` on a grid of subsidies over the
/// default bracket and reports whether it is non-decreasing.
bool gap_is_monotone(const ArmTransitions& arm, const Eigen::Ref<const Eigen::VectorXd>& rewards, int state,
                     double gamma, int grid_points = 101);

}  // namespace rmabirl
