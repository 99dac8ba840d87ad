#pragma once

#include <Eigen/Dense>

namespace rmabirl {

struct SoftTopKConfig {
    double epsilon = 0.01;  // logistic temperature
    int k = 1;
};

/// p_i = sigma((w_i - theta) / epsilon), with theta chosen so that sum p = k.
struct PullProbabilities {
    Eigen::VectorXd p;
    double threshold = 0.0;
};

/// Budget-preserving logistic relaxation of top-k selection. The threshold is
/// found by bisection on theta followed by Newton polishing.
PullProbabilities soft_top_k(const Eigen::Ref<const Eigen::VectorXd>& w, int k, double epsilon);

inline PullProbabilities soft_top_k(const Eigen::Ref<const Eigen::VectorXd>& w, const SoftTopKConfig& cfg) {
    return soft_top_k(w, cfg.k, cfg.epsilon);
}

/// dp/dw by implicit differentiation of sum_i sigma((w_i - theta) / eps) = k:
/// with g_i = sigma'_i / eps, dp_i/dw_j = delta_ij g_i - g_i g_j / sum g.
/// Throws DegeneracyError when every probability is saturated.
Eigen::MatrixXd soft_top_k_jacobian(const Eigen::Ref<const Eigen::VectorXd>& w, int k, double epsilon);

/// u^T dp/dw without forming the matrix. Returns zero when all
/// probabilities are saturated (the limit of the Jacobian there).
Eigen::VectorXd soft_top_k_vjp(const PullProbabilities& probs, const Eigen::Ref<const Eigen::VectorXd>& u,
                               double epsilon);

/// Probabilities are clamped to [kProbFloor, 1 - kProbFloor] before taking logs.
inline constexpr double kProbFloor = 1e-12;

}  // namespace rmabirl
