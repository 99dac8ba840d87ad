#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include <Eigen/Dense>

#include "rmabirl/rmab.hpp"
#include "rmabirl/whittle.hpp"

namespace rmabirl {

struct TrainConfig {
    int epochs = 30;
    double learning_rate = 0.01;
    double epsilon = 0.01;
    /// Discount used for the Whittle indices; the instance's when empty.
    std::optional<double> discount = 0.99;
    // Adam moment decay rates and denominator offset.
    double beta1 = 0.9;
    double beta2 = 0.999;
    double adam_epsilon = 1e-8;
    /// Recorded for reproducibility bundles; full-batch training draws no random numbers.
    std::uint64_t seed = 0;
};

struct TraceEntry {
    int epoch = 0;
    double eval = 0.0;
    double grad_norm = 0.0;
    double step_seconds = 0.0;
};

using TrainTrace = std::vector<TraceEntry>;

struct TrainResult {
    RewardMatrix rewards;
    TrainTrace trace;
};

/// Log-likelihood of the expert actions under the soft top-k Whittle policy:
///   sum_{tau, h, i} a log p_i + (1 - a) log(1 - p_i).
double eval_likelihood(const RmabInstance& instance, const RewardMatrix& rewards, const TrajectorySet& expert,
                       double epsilon, std::optional<double> gamma = std::nullopt);

/// Same objective evaluated from precomputed Whittle indices.
double eval_likelihood(const WhittleTable& table, const RmabInstance& instance, const TrajectorySet& expert,
                       double epsilon);

struct EvalWithGradient {
    double value = 0.0;
    Eigen::MatrixXd gradient;  // N x M, d Eval / d R
};

/// Eval and dEval/dR = dEval/dp * dp/dW * dW/dR. dW_i/dR_j vanishes for
/// i != j, so the reward gradient is accumulated arm by arm.
EvalWithGradient eval_with_gradient(const RmabInstance& instance, const RewardMatrix& rewards,
                                    const TrajectorySet& expert, double epsilon,
                                    std::optional<double> gamma = std::nullopt);

inline Eigen::MatrixXd eval_gradient(const RmabInstance& instance, const RewardMatrix& rewards,
                                     const TrajectorySet& expert, double epsilon,
                                     std::optional<double> gamma = std::nullopt) {
    return eval_with_gradient(instance, rewards, expert, epsilon, gamma).gradient;
}

/// Adam-style moment estimates for gradient ascent.
class AdamAscent {
public:
    AdamAscent(Eigen::Index rows, Eigen::Index cols, double learning_rate, double beta1 = 0.9, double beta2 = 0.999,
               double eps = 1e-8);
    void step(Eigen::MatrixXd& params, const Eigen::MatrixXd& grad);

private:
    Eigen::MatrixXd m_, v_;
    double lr_, beta1_, beta2_, eps_;
    int t_ = 0;
};

/// Fits rewards to the expert set by gradient ascent starting from zero.
/// Throws TrainingError when Eval or its gradient becomes non-finite.
TrainResult train_whirl(const RmabInstance& instance, const TrajectorySet& expert, const TrainConfig& cfg,
                        const std::function<void(const TraceEntry&)>& on_epoch = {});

/// Subtracts each arm's mean reward. The objective is invariant to per-arm
/// shifts, so this only changes how rewards are displayed.
RewardMatrix center_rewards(const RewardMatrix& rewards);

}  // namespace rmabirl
