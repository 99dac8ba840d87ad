#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "rmabirl/rmab.hpp"

namespace rmabirl {

/// The RMAB flattened into one MDP over M^N joint states whose actions are
/// the exact-K subsets of arms. Transition rows are generated on demand from
/// the per-arm kernels.
class JointMdp {
public:
    JointMdp(std::vector<ArmTransitions> arms, int n_states, int budget);

    int n_arms() const { return static_cast<int>(arms_.size()); }
    int n_states() const { return n_states_; }
    long n_joint_states() const { return n_joint_states_; }
    std::size_t n_actions() const { return actions_.size(); }
    /// Bitmask of the arms pulled by joint action `a`.
    std::uint64_t action_mask(std::size_t a) const { return actions_[a]; }
    std::size_t action_index(std::uint64_t mask) const;

    /// Arm 0 is the least-significant digit.
    long encode(std::span<const int> states) const;
    std::vector<int> decode(long joint) const;

    /// P(. | S, A) as a dense vector of length M^N.
    Eigen::VectorXd transition_row(long joint, std::size_t action) const;
    double transition(long joint, std::size_t action, long next) const;

private:
    std::vector<ArmTransitions> arms_;
    int n_states_;
    long n_joint_states_;
    std::vector<std::uint64_t> actions_;
};

/// Throws SizeError unless M^N < cap.
JointMdp build_joint_mdp(const RmabInstance& instance, long cap = 4096);

/// Finite-horizon soft-optimal policy, pi[h](S, A).
struct SoftPolicy {
    std::vector<Eigen::MatrixXd> pi;
};

SoftPolicy soft_value_iteration(const JointMdp& mdp, const Eigen::VectorXd& rewards, int horizon);

/// Sum over timesteps of the joint-state distribution.
Eigen::VectorXd expected_visitation(const JointMdp& mdp, const SoftPolicy& policy, const Eigen::VectorXd& initial,
                                    int horizon);

/// Joint-state visit counts averaged over trajectories.
Eigen::VectorXd empirical_visitation(const JointMdp& mdp, const TrajectorySet& trajs);
Eigen::VectorXd initial_distribution(const JointMdp& mdp, const TrajectorySet& trajs);

/// Empirical minus expected visitation under `rewards` (one-hot state features).
Eigen::VectorXd maxent_gradient(const JointMdp& mdp, const Eigen::VectorXd& rewards, const Eigen::VectorXd& empirical,
                                const Eigen::VectorXd& initial, int horizon);

struct MaxEntConfig {
    int iterations = 200;
    double learning_rate = 0.1;
    double tolerance = 1e-4;
};

struct MaxEntResult {
    Eigen::VectorXd rewards;  // one per joint state
    double grad_norm = 0.0;
    int iterations = 0;
    bool converged = false;
};

/// Gradient ascent on the MaxEnt log-likelihood. On non-convergence the
/// iterate with the smallest gradient norm is returned and a warning logged.
MaxEntResult maxent_irl(const JointMdp& mdp, const TrajectorySet& expert, const MaxEntConfig& cfg = {});
MaxEntResult maxent_irl_from_visitation(const JointMdp& mdp, const Eigen::VectorXd& empirical,
                                        const Eigen::VectorXd& initial, int horizon, const MaxEntConfig& cfg = {});

/// Per-arm pull probability at joint state S under the soft policy at step h.
Eigen::VectorXd pull_marginals(const JointMdp& mdp, const SoftPolicy& policy, int h, long joint);

struct TimingRow {
    std::string method;
    int n = 0;
    double seconds_per_step = 0.0;  // NaN when infeasible
    std::string status;             // "ok" or "infeasible"
};

/// Wall-clock seconds per gradient step for the Whittle learner and the
/// joint-MDP baseline on synthetic instances of each size.
std::vector<TimingRow> runtime_probe(const std::vector<int>& n_values, int m, int k, std::uint64_t seed,
                                     long cap = 4096, int repeats = 3);

}  // namespace rmabirl
