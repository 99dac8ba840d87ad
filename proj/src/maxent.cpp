#include "rmabirl/maxent.hpp"

#include <bit>
#include <chrono>
#include <cmath>
#include <iostream>
#include <limits>

#include "rmabirl/error.hpp"
#include "rmabirl/irl.hpp"
#include "rmabirl/simulator.hpp"

namespace rmabirl {

JointMdp::JointMdp(std::vector<ArmTransitions> arms, int n_states, int budget)
    : arms_(std::move(arms)), n_states_(n_states), n_joint_states_(1) {
    const int n = static_cast<int>(arms_.size());
    if (n < 1 || n > 40) throw SizeError("joint MDP supports 1..40 arms");
    if (budget < 1 || budget > n) throw ParameterError("budget must satisfy 0 < K <= N");
    for (int i = 0; i < n; ++i) {
        if (n_joint_states_ > std::numeric_limits<long>::max() / n_states) throw SizeError("joint state space overflows");
        n_joint_states_ *= n_states;
    }
    for (std::uint64_t mask = 0; mask < (std::uint64_t{1} << n); ++mask) {
        if (std::popcount(mask) == budget) actions_.push_back(mask);
    }
}

std::size_t JointMdp::action_index(std::uint64_t mask) const {
    const auto it = std::lower_bound(actions_.begin(), actions_.end(), mask);
    if (it == actions_.end() || *it != mask) throw ParameterError("joint action is not an exact-K subset");
    return static_cast<std::size_t>(it - actions_.begin());
}

long JointMdp::encode(std::span<const int> states) const {
    long code = 0;
    for (int i = n_arms() - 1; i >= 0; --i) code = code * n_states_ + states[i];
    return code;
}

std::vector<int> JointMdp::decode(long joint) const {
    std::vector<int> states(n_arms());
    for (int i = 0; i < n_arms(); ++i) {
        states[i] = static_cast<int>(joint % n_states_);
        joint /= n_states_;
    }
    return states;
}

Eigen::VectorXd JointMdp::transition_row(long joint, std::size_t action) const {
    const auto states = decode(joint);
    const std::uint64_t mask = actions_[action];
    Eigen::VectorXd row = Eigen::VectorXd::Ones(1);
    // Kronecker product from the most significant arm down to arm 0.
    for (int i = n_arms() - 1; i >= 0; --i) {
        const int a = (mask >> i) & 1U;
        const Eigen::VectorXd arm_row = arms_[i].p[a].row(states[i]).transpose();
        Eigen::VectorXd next(row.size() * n_states_);
        for (Eigen::Index j = 0; j < row.size(); ++j) next.segment(j * n_states_, n_states_) = row[j] * arm_row;
        row = std::move(next);
    }
    return row;
}

double JointMdp::transition(long joint, std::size_t action, long next) const {
    const auto from = decode(joint);
    const auto to = decode(next);
    const std::uint64_t mask = actions_[action];
    double p = 1.0;
    for (int i = 0; i < n_arms(); ++i) p *= arms_[i](from[i], (mask >> i) & 1U, to[i]);
    return p;
}

JointMdp build_joint_mdp(const RmabInstance& instance, long cap) {
    long size = 1;
    for (int i = 0; i < instance.n_arms; ++i) {
        size *= instance.n_states;
        if (size >= cap) {
            throw SizeError("joint MDP with " + std::to_string(instance.n_arms) + " arms and " +
                            std::to_string(instance.n_states) + " states reaches the cap of " + std::to_string(cap) +
                            " joint states");
        }
    }
    return JointMdp(instance.transitions, instance.n_states, instance.budget);
}

SoftPolicy soft_value_iteration(const JointMdp& mdp, const Eigen::VectorXd& rewards, int horizon) {
    const long n_s = mdp.n_joint_states();
    const auto n_a = static_cast<Eigen::Index>(mdp.n_actions());
    SoftPolicy policy;
    policy.pi.resize(horizon);
    Eigen::VectorXd v_next = Eigen::VectorXd::Zero(n_s);
    for (int h = horizon - 1; h >= 0; --h) {
        Eigen::MatrixXd q(n_s, n_a);
        for (long s = 0; s < n_s; ++s)
            for (Eigen::Index a = 0; a < n_a; ++a) q(s, a) = rewards[s] + mdp.transition_row(s, a).dot(v_next);
        const Eigen::VectorXd qmax = q.rowwise().maxCoeff();
        const Eigen::VectorXd lse =
            qmax.array() + (q.colwise() - qmax).array().exp().rowwise().sum().log();
        policy.pi[h] = (q.colwise() - lse).array().exp().matrix();
        v_next = lse;
    }
    return policy;
}

Eigen::VectorXd expected_visitation(const JointMdp& mdp, const SoftPolicy& policy, const Eigen::VectorXd& initial,
                                    int horizon) {
    const long n_s = mdp.n_joint_states();
    Eigen::VectorXd d = initial;
    Eigen::VectorXd total = d;
    for (int h = 0; h + 1 < horizon; ++h) {
        Eigen::VectorXd next = Eigen::VectorXd::Zero(n_s);
        for (long s = 0; s < n_s; ++s) {
            if (d[s] == 0.0) continue;
            for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
                const double w = d[s] * policy.pi[h](s, static_cast<Eigen::Index>(a));
                if (w != 0.0) next += w * mdp.transition_row(s, a);
            }
        }
        d = std::move(next);
        total += d;
    }
    return total;
}

Eigen::VectorXd empirical_visitation(const JointMdp& mdp, const TrajectorySet& trajs) {
    Eigen::VectorXd counts = Eigen::VectorXd::Zero(mdp.n_joint_states());
    for (const auto& t : trajs)
        for (int h = 0; h < t.horizon(); ++h) counts[mdp.encode(t.states_at(h))] += 1.0;
    if (!trajs.empty()) counts /= static_cast<double>(trajs.size());
    return counts;
}

Eigen::VectorXd initial_distribution(const JointMdp& mdp, const TrajectorySet& trajs) {
    Eigen::VectorXd d = Eigen::VectorXd::Zero(mdp.n_joint_states());
    for (const auto& t : trajs) d[mdp.encode(t.states_at(0))] += 1.0;
    if (!trajs.empty()) d /= static_cast<double>(trajs.size());
    return d;
}

Eigen::VectorXd maxent_gradient(const JointMdp& mdp, const Eigen::VectorXd& rewards, const Eigen::VectorXd& empirical,
                                const Eigen::VectorXd& initial, int horizon) {
    const SoftPolicy policy = soft_value_iteration(mdp, rewards, horizon);
    return empirical - expected_visitation(mdp, policy, initial, horizon);
}

MaxEntResult maxent_irl_from_visitation(const JointMdp& mdp, const Eigen::VectorXd& empirical,
                                        const Eigen::VectorXd& initial, int horizon, const MaxEntConfig& cfg) {
    Eigen::VectorXd r = Eigen::VectorXd::Zero(mdp.n_joint_states());
    MaxEntResult best{r, std::numeric_limits<double>::infinity(), 0, false};
    for (int it = 0; it < cfg.iterations; ++it) {
        const Eigen::VectorXd grad = maxent_gradient(mdp, r, empirical, initial, horizon);
        const double norm = grad.norm();
        if (norm < best.grad_norm) best = {r, norm, it, false};
        if (norm < cfg.tolerance) {
            best.converged = true;
            return best;
        }
        r += cfg.learning_rate * grad;
    }
    std::cerr << "warning: MaxEnt IRL did not converge in " << cfg.iterations
              << " iterations (best gradient norm " << best.grad_norm << ")\n";
    return best;
}

MaxEntResult maxent_irl(const JointMdp& mdp, const TrajectorySet& expert, const MaxEntConfig& cfg) {
    if (expert.empty()) throw ParameterError("expert set is empty");
    for (const auto& t : expert) {
        if (t.n_arms() != mdp.n_arms()) throw ParameterError("trajectory arm count does not match the joint MDP");
        validate(t, mdp.n_states(), mdp.n_arms());
    }
    return maxent_irl_from_visitation(mdp, empirical_visitation(mdp, expert), initial_distribution(mdp, expert),
                                      expert.front().horizon(), cfg);
}

Eigen::VectorXd pull_marginals(const JointMdp& mdp, const SoftPolicy& policy, int h, long joint) {
    Eigen::VectorXd p = Eigen::VectorXd::Zero(mdp.n_arms());
    for (std::size_t a = 0; a < mdp.n_actions(); ++a) {
        const double w = policy.pi[h](joint, static_cast<Eigen::Index>(a));
        for (int i = 0; i < mdp.n_arms(); ++i)
            if ((mdp.action_mask(a) >> i) & 1U) p[i] += w;
    }
    return p;
}

std::vector<TimingRow> runtime_probe(const std::vector<int>& n_values, int m, int k, std::uint64_t seed, long cap,
                                     int repeats) {
    using clock = std::chrono::steady_clock;
    constexpr int kHorizon = 3;
    std::vector<TimingRow> whirl, baseline;
    for (int n : n_values) {
        const int kk = std::min(k, n);
        const auto instance = synth_instance(n, m, kk, kHorizon, 0.99, seed + static_cast<std::uint64_t>(n));
        const auto truth = random_rewards(n, m, seed + 1000 + static_cast<std::uint64_t>(n));
        RolloutConfig rc;
        rc.horizon = kHorizon;
        rc.runs = 3;
        rc.seed = seed;
        const auto expert = simulate(instance, truth, rc);

        RewardMatrix r = RewardMatrix::zeros(n, m);
        AdamAscent adam(n, m, 0.01);
        auto start = clock::now();
        for (int rep = 0; rep < repeats; ++rep) {
            const auto eg = eval_with_gradient(instance, r, expert, 0.01);
            adam.step(r.values, eg.gradient);
        }
        std::chrono::duration<double> elapsed = clock::now() - start;
        whirl.push_back({"whirl", n, elapsed.count() / repeats, "ok"});

        try {
            const JointMdp mdp = build_joint_mdp(instance, cap);
            const Eigen::VectorXd empirical = empirical_visitation(mdp, expert);
            const Eigen::VectorXd initial = initial_distribution(mdp, expert);
            Eigen::VectorXd jr = Eigen::VectorXd::Zero(mdp.n_joint_states());
            start = clock::now();
            for (int rep = 0; rep < repeats; ++rep) jr += 0.1 * maxent_gradient(mdp, jr, empirical, initial, kHorizon);
            elapsed = clock::now() - start;
            baseline.push_back({"maxent", n, elapsed.count() / repeats, "ok"});
        } catch (const SizeError&) {
            baseline.push_back({"maxent", n, std::numeric_limits<double>::quiet_NaN(), "infeasible"});
        }
    }
    whirl.insert(whirl.end(), baseline.begin(), baseline.end());
    return whirl;
}

}  // namespace rmabirl
