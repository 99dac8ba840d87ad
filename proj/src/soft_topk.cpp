#include "rmabirl/soft_topk.hpp"

#include <cmath>
#include <limits>

#include "rmabirl/error.hpp"

namespace rmabirl {

namespace {

double sigmoid(double x) {
    if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

void check(const Eigen::Ref<const Eigen::VectorXd>& w, int k, double epsilon) {
    if (w.size() == 0) throw ParameterError("soft top-k needs at least one arm");
    if (k < 1 || k > w.size()) throw ParameterError("soft top-k needs 0 < k <= N");
    if (!(epsilon > 0.0) || !std::isfinite(epsilon)) throw ParameterError("epsilon must be positive");
    if (!w.allFinite()) throw ParameterError("soft top-k needs finite scores");
}

Eigen::VectorXd gradient_weights(const Eigen::VectorXd& p, double epsilon) {
    return (p.array() * (1.0 - p.array()) / epsilon).matrix();
}

}  // namespace

PullProbabilities soft_top_k(const Eigen::Ref<const Eigen::VectorXd>& w, int k, double epsilon) {
    check(w, k, epsilon);
    const auto n = w.size();
    Eigen::VectorXd p(n);
    auto fill = [&](double theta) {
        double sum = 0;
        for (Eigen::Index i = 0; i < n; ++i) {
            p[i] = sigmoid((w[i] - theta) / epsilon);
            sum += p[i];
        }
        return sum - k;
    };
    if (k == n) {
        p.setOnes();
        return {p, -std::numeric_limits<double>::infinity()};
    }

    // sigma saturates beyond ~40 logits, so the root lies in this bracket.
    double lo = w.minCoeff() - 40.0 * epsilon;
    double hi = w.maxCoeff() + 40.0 * epsilon;
    double theta = 0.5 * (lo + hi);
    double f = fill(theta);
    for (int it = 0; it < 400 && std::abs(f) > 1e-12; ++it) {
        if (f > 0) lo = theta;
        else hi = theta;
        const double mid = 0.5 * (lo + hi);
        if (mid <= lo || mid >= hi) break;
        theta = mid;
        f = fill(theta);
    }
    // Newton polish: d(sum p)/d theta = -sum g.
    for (int it = 0; it < 4 && std::abs(f) > 1e-14; ++it) {
        const double slope = gradient_weights(p, epsilon).sum();
        if (!(slope > 0)) break;
        const double next = theta + f / slope;
        if (!(next > lo && next < hi)) break;
        const double saved = theta;
        const Eigen::VectorXd saved_p = p;
        const double f_next = fill(next);
        if (std::abs(f_next) >= std::abs(f)) {
            theta = saved;
            p = saved_p;
            break;
        }
        theta = next;
        f = f_next;
    }
    return {p, theta};
}

Eigen::MatrixXd soft_top_k_jacobian(const Eigen::Ref<const Eigen::VectorXd>& w, int k, double epsilon) {
    const PullProbabilities probs = soft_top_k(w, k, epsilon);
    const Eigen::VectorXd g = gradient_weights(probs.p, epsilon);
    const double total = g.sum();
    if (!(total > 1e-300)) throw DegeneracyError("soft top-k Jacobian is degenerate: all probabilities saturated");
    Eigen::MatrixXd jac = -(g * g.transpose()) / total;
    jac.diagonal() += g;
    return jac;
}

Eigen::VectorXd soft_top_k_vjp(const PullProbabilities& probs, const Eigen::Ref<const Eigen::VectorXd>& u,
                               double epsilon) {
    const Eigen::VectorXd g = gradient_weights(probs.p, epsilon);
    const double total = g.sum();
    if (!(total > 0.0)) return Eigen::VectorXd::Zero(u.size());
    const double ug = u.dot(g);
    return (g.array() * (u.array() - ug / total)).matrix();
}

}  // namespace rmabirl
