#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <random>

#include "oracles.hpp"
#include "rmabirl/error.hpp"
#include "rmabirl/soft_topk.hpp"

using namespace rmabirl;

TEST_CASE("soft_top_k: worked examples") {
    auto p = soft_top_k(Eigen::Vector2d(1, 1), 1, 0.3).p;
    CHECK(p[0] == doctest::Approx(0.5));
    CHECK(p[1] == doctest::Approx(0.5));

    p = soft_top_k(Eigen::Vector2d(2, 1), 1, 1e-6).p;
    CHECK(std::abs(p[0] - 1.0) <= 1e-6);
    CHECK(std::abs(p[1]) <= 1e-6);

    const auto r = soft_top_k(Eigen::Vector2d(1, 0), 1, 1.0);
    const auto ref = oracle::soft_top_k({1, 0}, 1, 1.0);
    CHECK(r.threshold == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(r.p[0] == doctest::Approx(ref[0]).epsilon(1e-12));
    CHECK(r.p[1] == doctest::Approx(ref[1]).epsilon(1e-12));
    CHECK(r.p[0] == doctest::Approx(0.62246).epsilon(1e-5));
    CHECK(r.p[1] == doctest::Approx(0.37754).epsilon(1e-5));
}

TEST_CASE("soft_top_k: budget, monotonicity, shift and permutation") {
    std::mt19937_64 eng(1);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int trial = 0; trial < 500; ++trial) {
        const int n = 2 + trial % 30;
        const int k = 1 + trial % n;
        const double eps = std::pow(10.0, -3.0 + 3.0 * (trial % 7) / 6.0);
        Eigen::VectorXd w(n);
        for (int i = 0; i < n; ++i) w[i] = nd(eng);
        const auto p = soft_top_k(w, k, eps).p;
        CHECK(std::abs(p.sum() - k) <= 1e-9);
        for (int i = 0; i < n; ++i)
            for (int j = 0; j < n; ++j)
                if (w[i] > w[j]) CHECK(p[i] >= p[j]);
        const auto q = soft_top_k((w.array() + 5.0).matrix(), k, eps).p;
        CHECK((p - q).cwiseAbs().maxCoeff() <= 1e-9);
        Eigen::VectorXd wr = w.reverse();
        const auto pr = soft_top_k(wr, k, eps).p;
        CHECK((pr.reverse() - p).cwiseAbs().maxCoeff() <= 1e-12);
        const auto ref = oracle::soft_top_k(std::vector<double>(w.data(), w.data() + n), k, eps);
        for (int i = 0; i < n; ++i) CHECK(std::abs(p[i] - ref[i]) <= 1e-9);
    }
}

TEST_CASE("soft_top_k: k = N gives all ones") {
    const auto p = soft_top_k(Eigen::Vector3d(0.1, -4, 2), 3, 0.01).p;
    CHECK(p.isOnes());
}

TEST_CASE("soft_top_k_jacobian: structure and finite differences") {
    const Eigen::Matrix2d j11 = soft_top_k_jacobian(Eigen::Vector2d(1, 1), 1, 1.0);
    CHECK(j11(0, 0) == doctest::Approx(j11(1, 1)));
    CHECK(j11(0, 1) == doctest::Approx(j11(1, 0)));

    std::mt19937_64 eng(2);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int trial = 0; trial < 50; ++trial) {
        const int n = 2 + trial % 6;
        const int k = 1 + trial % (n - 1);
        const double eps = trial == 0 ? 1.0 : 0.2 + (trial % 5) * 0.3;
        Eigen::VectorXd w(n);
        if (trial == 0) w = Eigen::Vector2d(1, 0);
        else for (int i = 0; i < n; ++i) w[i] = nd(eng);
        const Eigen::MatrixXd jac = soft_top_k_jacobian(w, k, eps);
        CHECK(jac.rowwise().sum().cwiseAbs().maxCoeff() <= 1e-12);
        CHECK((jac - jac.transpose()).cwiseAbs().maxCoeff() <= 1e-14);
        for (int j = 0; j < n; ++j) {
            Eigen::VectorXd wp = w, wm = w;
            wp[j] += 1e-6;
            wm[j] -= 1e-6;
            const Eigen::VectorXd fd = (soft_top_k(wp, k, eps).p - soft_top_k(wm, k, eps).p) / 2e-6;
            CHECK((fd - jac.col(j)).cwiseAbs().maxCoeff() <= 1e-6);
        }
        const Eigen::VectorXd u = Eigen::VectorXd::Random(n);
        const auto probs = soft_top_k(w, k, eps);
        CHECK((soft_top_k_vjp(probs, u, eps) - jac.transpose() * u).cwiseAbs().maxCoeff() <= 1e-12);
    }
}

TEST_CASE("soft_top_k_jacobian: saturation is degenerate") {
    CHECK_THROWS_AS(soft_top_k_jacobian(Eigen::Vector2d(1e6, -1e6), 1, 1e-3), DegeneracyError);
    const auto probs = soft_top_k(Eigen::Vector2d(1e6, -1e6), 1, 1e-3);
    CHECK(soft_top_k_vjp(probs, Eigen::Vector2d(1, 2), 1e-3).isZero());
}

TEST_CASE("soft_top_k: the small-temperature limit is hard top-k") {
    std::mt19937_64 eng(3);
    std::normal_distribution<double> nd(0.0, 1.0);
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 3 + trial % 10;
        const int k = 1 + trial % (n - 1);
        Eigen::VectorXd w(n);
        for (int i = 0; i < n; ++i) w[i] = nd(eng);
        std::vector<int> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](int a, int b) { return w[a] > w[b]; });
        if (w[order[k - 1]] - w[order[k]] < 1e-6) continue;
        const auto p = soft_top_k(w, k, 1e-8).p;
        for (int r = 0; r < n; ++r) {
            if (r < k) CHECK(p[order[r]] > 1 - 1e-6);
            else CHECK(p[order[r]] < 1e-6);
        }
    }
}
