#pragma once

// Reference computations used only by tests. They deliberately avoid the
// library's solvers: plain loops, no Eigen decompositions.

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <vector>

namespace oracle {

using Matrix = std::vector<std::vector<double>>;  // row-major, m x m

/// Q(s, a) for the subsidy Bellman equation by plain value iteration.
inline std::vector<std::array<double, 2>> subsidy_q(const Matrix& p0, const Matrix& p1, const std::vector<double>& r,
                                                    double m, double gamma, double tol = 1e-13) {
    const std::size_t n = r.size();
    std::vector<double> v(n, 0.0), next(n);
    std::vector<std::array<double, 2>> q(n);
    for (int it = 0; it < 2'000'000; ++it) {
        double change = 0.0;
        for (std::size_t s = 0; s < n; ++s) {
            double e0 = 0.0, e1 = 0.0;
            for (std::size_t t = 0; t < n; ++t) {
                e0 += p0[s][t] * v[t];
                e1 += p1[s][t] * v[t];
            }
            q[s] = {m + r[s] + gamma * e0, r[s] + gamma * e1};
            next[s] = std::max(q[s][0], q[s][1]);
            change = std::max(change, std::abs(next[s] - v[s]));
        }
        v.swap(next);
        if (change < tol) break;
    }
    return q;
}

/// Whittle index by successively finer grid searches for the first subsidy
/// at which passive is at least as good as active.
inline double whittle_grid(const Matrix& p0, const Matrix& p1, const std::vector<double>& r, int state, double gamma,
                           double lo, double hi, double resolution = 1e-7) {
    auto passive_ok = [&](double m) {
        const auto q = subsidy_q(p0, p1, r, m, gamma);
        return q[state][0] >= q[state][1];
    };
    double step = (hi - lo) / 20.0;
    while (true) {
        double found = hi;
        for (double m = lo; m <= hi + 1e-15; m += step) {
            if (passive_ok(m)) {
                found = m;
                break;
            }
        }
        lo = std::max(lo, found - step);
        hi = found;
        if (step <= resolution) return 0.5 * (lo + hi);
        step /= 20.0;
    }
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

/// Soft top-k by long bisection on the threshold.
inline std::vector<double> soft_top_k(const std::vector<double>& w, int k, double eps) {
    double lo = *std::min_element(w.begin(), w.end()) - 60 * eps;
    double hi = *std::max_element(w.begin(), w.end()) + 60 * eps;
    auto total = [&](double theta) {
        double t = 0.0;
        for (double x : w) t += sigmoid((x - theta) / eps);
        return t;
    };
    for (int it = 0; it < 400; ++it) {
        const double mid = 0.5 * (lo + hi);
        if (total(mid) > k) lo = mid;
        else hi = mid;
    }
    const double theta = 0.5 * (lo + hi);
    std::vector<double> p;
    for (double x : w) p.push_back(sigmoid((x - theta) / eps));
    return p;
}

/// Central differences of a scalar function of a vector.
inline std::vector<double> central_diff(const std::function<double(const std::vector<double>&)>& f,
                                        std::vector<double> x, double h) {
    std::vector<double> g(x.size());
    for (std::size_t k = 0; k < x.size(); ++k) {
        const double x0 = x[k];
        x[k] = x0 + h;
        const double fp = f(x);
        x[k] = x0 - h;
        const double fm = f(x);
        x[k] = x0;
        g[k] = (fp - fm) / (2 * h);
    }
    return g;
}

}  // namespace oracle
