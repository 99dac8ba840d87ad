#include "rmabirl/irl.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>

#include "rmabirl/error.hpp"
#include "rmabirl/soft_topk.hpp"

namespace rmabirl {

namespace {

double resolve_gamma(const RmabInstance& instance, std::optional<double> gamma) {
    return gamma ? *gamma : instance.discount;
}

void check_expert(const RmabInstance& instance, const TrajectorySet& expert) {
    for (const auto& t : expert) {
        if (t.n_arms() != instance.n_arms) throw ParameterError("expert trajectory arm count does not match the instance");
        validate(t, instance.n_states, instance.budget);
    }
}

Eigen::VectorXd indices_at(const WhittleTable& table, const Trajectory& traj, int h) {
    const auto states = traj.states_at(h);
    Eigen::VectorXd w(traj.n_arms());
    for (int i = 0; i < traj.n_arms(); ++i) w[i] = table(i, states[i]);
    return w;
}

double clamp_prob(double p) { return std::clamp(p, kProbFloor, 1.0 - kProbFloor); }

double log_likelihood_step(const Eigen::VectorXd& p, std::span<const std::uint8_t> actions) {
    double total = 0.0;
    for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double pc = clamp_prob(p[i]);
        total += actions[i] ? std::log(pc) : std::log(1.0 - pc);
    }
    return total;
}

}  // namespace

double eval_likelihood(const WhittleTable& table, const RmabInstance& instance, const TrajectorySet& expert,
                       double epsilon) {
    double total = 0.0;
    for (const auto& traj : expert) {
        for (int h = 0; h < traj.horizon(); ++h) {
            const auto probs = soft_top_k(indices_at(table, traj, h), instance.budget, epsilon);
            total += log_likelihood_step(probs.p, traj.actions_at(h));
        }
    }
    return total;
}

double eval_likelihood(const RmabInstance& instance, const RewardMatrix& rewards, const TrajectorySet& expert,
                       double epsilon, std::optional<double> gamma) {
    check_expert(instance, expert);
    return eval_likelihood(whittle_table(instance, rewards, resolve_gamma(instance, gamma)), instance, expert, epsilon);
}

EvalWithGradient eval_with_gradient(const RmabInstance& instance, const RewardMatrix& rewards,
                                    const TrajectorySet& expert, double epsilon, std::optional<double> gamma) {
    check_expert(instance, expert);
    const int n = instance.n_arms;
    const int m = instance.n_states;
    const auto tables = whittle_table_with_gradient(instance, rewards, resolve_gamma(instance, gamma));

    // d Eval / d W[i][s], accumulated over every (trajectory, timestep).
    Eigen::MatrixXd dw = Eigen::MatrixXd::Zero(n, m);
    double value = 0.0;
    Eigen::VectorXd u(n);
    for (const auto& traj : expert) {
        for (int h = 0; h < traj.horizon(); ++h) {
            const auto probs = soft_top_k(indices_at(tables.table, traj, h), instance.budget, epsilon);
            const auto actions = traj.actions_at(h);
            value += log_likelihood_step(probs.p, actions);
            for (int i = 0; i < n; ++i) {
                const double p = probs.p[i];
                // The clamp makes log(p) flat outside (floor, 1 - floor).
                if (p <= kProbFloor || p >= 1.0 - kProbFloor) u[i] = 0.0;
                else u[i] = actions[i] ? 1.0 / p : -1.0 / (1.0 - p);
            }
            const Eigen::VectorXd v = soft_top_k_vjp(probs, u, epsilon);
            const auto states = traj.states_at(h);
            for (int i = 0; i < n; ++i) dw(i, states[i]) += v[i];
        }
    }

    Eigen::MatrixXd grad(n, m);
    for (int i = 0; i < n; ++i) grad.row(i) = dw.row(i) * tables.grads[i];
    return {value, grad};
}

AdamAscent::AdamAscent(Eigen::Index rows, Eigen::Index cols, double learning_rate, double beta1, double beta2,
                       double eps)
    : m_(Eigen::MatrixXd::Zero(rows, cols)), v_(Eigen::MatrixXd::Zero(rows, cols)), lr_(learning_rate),
      beta1_(beta1), beta2_(beta2), eps_(eps) {}

void AdamAscent::step(Eigen::MatrixXd& params, const Eigen::MatrixXd& grad) {
    ++t_;
    m_ = beta1_ * m_ + (1.0 - beta1_) * grad;
    v_ = beta2_ * v_ + (1.0 - beta2_) * grad.cwiseProduct(grad);
    const double c1 = 1.0 - std::pow(beta1_, t_);
    const double c2 = 1.0 - std::pow(beta2_, t_);
    params.array() += lr_ * (m_.array() / c1) / ((v_.array() / c2).sqrt() + eps_);
}

TrainResult train_whirl(const RmabInstance& instance, const TrajectorySet& expert, const TrainConfig& cfg,
                        const std::function<void(const TraceEntry&)>& on_epoch) {
    if (cfg.epochs < 0) throw ParameterError("epochs must be >= 0");
    if (!(cfg.learning_rate > 0.0)) throw ParameterError("learning rate must be positive");
    if (!(cfg.epsilon > 0.0)) throw ParameterError("epsilon must be positive");
    if (expert.empty()) throw ParameterError("expert set is empty");
    check_expert(instance, expert);

    TrainResult result{RewardMatrix::zeros(instance.n_arms, instance.n_states), {}};
    AdamAscent adam(instance.n_arms, instance.n_states, cfg.learning_rate, cfg.beta1, cfg.beta2, cfg.adam_epsilon);
    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        const auto start = std::chrono::steady_clock::now();
        EvalWithGradient eg;
        try {
            eg = eval_with_gradient(instance, result.rewards, expert, cfg.epsilon, cfg.discount);
        } catch (const Error& e) {
            throw TrainingError("epoch " + std::to_string(epoch) + ": " + e.what());
        }
        if (!std::isfinite(eg.value) || !eg.gradient.allFinite()) {
            throw TrainingError("epoch " + std::to_string(epoch) + ": non-finite Eval or gradient");
        }
        adam.step(result.rewards.values, eg.gradient);
        const std::chrono::duration<double> elapsed = std::chrono::steady_clock::now() - start;
        result.trace.push_back({epoch, eg.value, eg.gradient.norm(), elapsed.count()});
        if (on_epoch) on_epoch(result.trace.back());
    }
    return result;
}

RewardMatrix center_rewards(const RewardMatrix& rewards) {
    RewardMatrix out = rewards;
    for (Eigen::Index i = 0; i < out.values.rows(); ++i) out.values.row(i).array() -= out.values.row(i).mean();
    return out;
}

}  // namespace rmabirl
