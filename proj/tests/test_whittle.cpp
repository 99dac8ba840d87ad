#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <array>
#include <random>

#include "oracles.hpp"
#include "rmabirl/error.hpp"
#include "rmabirl/whittle.hpp"

using namespace rmabirl;

namespace {

ArmTransitions deterministic_arm() {
    ArmTransitions arm;
    arm.p[0] = Eigen::MatrixXd(2, 2);
    arm.p[1] = Eigen::MatrixXd(2, 2);
    arm.p[0] << 1, 0, 0, 1;
    arm.p[1] << 0, 1, 0, 1;
    return arm;
}

ArmTransitions random_arm(std::mt19937_64& eng, int m) {
    std::gamma_distribution<double> g(1.0, 1.0);
    ArmTransitions arm;
    for (auto& p : arm.p) {
        p.resize(m, m);
        for (int s = 0; s < m; ++s) {
            for (int t = 0; t < m; ++t) p(s, t) = g(eng) + 1e-3;
            p.row(s) /= p.row(s).sum();
        }
    }
    return arm;
}

Eigen::VectorXd random_rewards(std::mt19937_64& eng, int m) {
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    Eigen::VectorXd r(m);
    for (int s = 0; s < m; ++s) r[s] = u(eng);
    return r;
}

oracle::Matrix to_rows(const Eigen::MatrixXd& p) {
    oracle::Matrix out(p.rows(), std::vector<double>(p.cols()));
    for (Eigen::Index s = 0; s < p.rows(); ++s)
        for (Eigen::Index t = 0; t < p.cols(); ++t) out[s][t] = p(s, t);
    return out;
}

std::vector<double> to_vec(const Eigen::VectorXd& v) { return {v.data(), v.data() + v.size()}; }

}  // namespace

TEST_CASE("q_values: myopic case and action symmetry") {
    const auto arm = deterministic_arm();
    const Eigen::Vector2d r(0, 1);
    const auto q = q_values(arm, r, 0.5, 0.0);
    CHECK(q.q(0, 0) == doctest::Approx(0.5));
    CHECK(q.q(1, 0) == doctest::Approx(1.5));
    CHECK(q.q(0, 1) == doctest::Approx(0.0));
    CHECK(q.q(1, 1) == doctest::Approx(1.0));

    std::mt19937_64 eng(1);
    auto sym = random_arm(eng, 3);
    sym.p[1] = sym.p[0];
    const auto qs = q_values(sym, random_rewards(eng, 3), 0.0, 0.9);
    for (int s = 0; s < 3; ++s) CHECK(qs.q(s, 0) == doctest::Approx(qs.q(s, 1)).epsilon(1e-12));
}

TEST_CASE("q_values: deterministic arm is indifferent at m = 1") {
    const auto q = q_values(deterministic_arm(), Eigen::Vector2d(0, 1), 1.0, 0.5);
    CHECK(std::abs(q.q(0, 0) - q.q(0, 1)) < 1e-9);
}

TEST_CASE("q_values agrees with policy iteration and the plain oracle") {
    std::mt19937_64 eng(2);
    for (int trial = 0; trial < 20; ++trial) {
        const int m = 2 + trial % 3;
        const auto arm = random_arm(eng, m);
        const auto r = random_rewards(eng, m);
        const double sub = std::uniform_real_distribution<double>(-2, 2)(eng);
        const auto vi = q_values(arm, r, sub, 0.9);
        const auto pi = solve_subsidy(arm, r, sub, 0.9);
        const auto ref = oracle::subsidy_q(to_rows(arm.p[0]), to_rows(arm.p[1]), to_vec(r), sub, 0.9);
        for (int s = 0; s < m; ++s)
            for (int a = 0; a < 2; ++a) {
                CHECK(vi.q(s, a) == doctest::Approx(ref[s][a]).epsilon(1e-8));
                CHECK(pi.q(s, a) == doctest::Approx(ref[s][a]).epsilon(1e-8));
            }
    }
}

TEST_CASE("whittle_index: deterministic arm matches the grid-search oracle") {
    const auto arm = deterministic_arm();
    const Eigen::Vector2d r(0, 1);
    const auto p0 = to_rows(arm.p[0]), p1 = to_rows(arm.p[1]);
    const double w0 = whittle_index(arm, r, 0, 0.5);
    const double w1 = whittle_index(arm, r, 1, 0.5);
    CHECK(std::abs(w0 - oracle::whittle_grid(p0, p1, {0, 1}, 0, 0.5, -4, 4, 1e-6)) <= 1e-6);
    CHECK(std::abs(w1 - oracle::whittle_grid(p0, p1, {0, 1}, 1, 0.5, -4, 4, 1e-6)) <= 1e-6);
    CHECK(std::abs(w0 - 1.0) <= 1e-6);
    CHECK(std::abs(w1 - 0.0) <= 1e-6);
}

TEST_CASE("whittle_index: trivial cases") {
    std::mt19937_64 eng(3);
    auto arm = random_arm(eng, 3);
    const auto r = random_rewards(eng, 3);
    for (int s = 0; s < 3; ++s) CHECK(whittle_index(arm, r, s, 0.0) == 0.0);
    arm.p[1] = arm.p[0];
    for (int s = 0; s < 3; ++s) CHECK(std::abs(whittle_index(arm, r, s, 0.9)) < 1e-7);
}

TEST_CASE("whittle_index: random arms match the grid oracle and have tiny residuals") {
    std::mt19937_64 eng(4);
    for (int trial = 0; trial < 12; ++trial) {
        const int m = 2 + trial % 2;
        const auto arm = random_arm(eng, m);
        const auto r = random_rewards(eng, m);
        for (int s = 0; s < m; ++s) {
            const double w = whittle_index(arm, r, s, 0.9);
            CHECK(indifference_residual(arm, r, s, 0.9, w) <= 1e-6);
            const double ref = oracle::whittle_grid(to_rows(arm.p[0]), to_rows(arm.p[1]), to_vec(r), s, 0.9, -25, 25, 1e-6);
            CHECK(std::abs(w - ref) <= 2e-6);
        }
    }
}

TEST_CASE("whittle_index: shift invariance and positive homogeneity") {
    std::mt19937_64 eng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const auto arm = random_arm(eng, 3);
        const auto r = random_rewards(eng, 3);
        for (int s = 0; s < 3; ++s) {
            const double w = whittle_index(arm, r, s, 0.9);
            const Eigen::VectorXd shifted = (r.array() + 3.7).matrix();
            CHECK(std::abs(whittle_index(arm, shifted, s, 0.9) - w) <= 1e-6);
            CHECK(std::abs(whittle_index(arm, 2.5 * r, s, 0.9) - 2.5 * w) <= 1e-6);
        }
    }
}

TEST_CASE("whittle_index: bracket failure is reported") {
    WhittleSearch search;
    search.lo = 5.0;
    search.hi = 6.0;
    search.max_widenings = 0;
    CHECK_THROWS_AS(whittle_index(deterministic_arm(), Eigen::Vector2d(0, 1), 0, 0.5, search), BracketingError);
}

TEST_CASE("whittle_gradient: deterministic arm gives [-1, +1]") {
    const auto g = whittle_gradient(deterministic_arm(), Eigen::Vector2d(0, 1), 0, 0.5);
    CHECK(g[0] == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(g[1] == doctest::Approx(1.0).epsilon(1e-9));
    const auto fd = oracle::central_diff(
        [&](const std::vector<double>& x) {
            return whittle_index(deterministic_arm(), Eigen::Vector2d(x[0], x[1]), 0, 0.5);
        },
        {0.0, 1.0}, 1e-5);
    CHECK(std::abs(fd[0] - g[0]) <= 1e-4);
    CHECK(std::abs(fd[1] - g[1]) <= 1e-4);
}

TEST_CASE("whittle_gradient: gamma = 0 gives zero") {
    std::mt19937_64 eng(6);
    const auto arm = random_arm(eng, 3);
    CHECK(whittle_gradient(arm, random_rewards(eng, 3), 1, 0.0).isZero());
}

TEST_CASE("whittle_gradient: central differences on random arms") {
    std::mt19937_64 eng(7);
    int checked = 0;
    for (int trial = 0; trial < 30; ++trial) {
        const int m = 2 + trial % 2;
        const auto arm = random_arm(eng, m);
        const auto r = random_rewards(eng, m);
        for (int s = 0; s < m; ++s) {
            const auto g = whittle_gradient(arm, r, s, 0.9);
            const auto fd = oracle::central_diff(
                [&](const std::vector<double>& x) {
                    return whittle_index(arm, Eigen::Map<const Eigen::VectorXd>(x.data(), m), s, 0.9);
                },
                to_vec(r), 1e-5);
            for (int j = 0; j < m; ++j) {
                CHECK(std::abs(fd[j] - g[j]) <= 1e-4 * std::max(1.0, std::abs(g[j])));
                ++checked;
            }
            // Euler's relation: the affine map has zero intercept.
            CHECK(g.dot(r) == doctest::Approx(whittle_index(arm, r, s, 0.9)).epsilon(1e-6));
        }
    }
    CHECK(checked > 100);
}

TEST_CASE("whittle table with gradients is arm-block sparse") {
    const auto inst = synth_instance(4, 3, 1, 2, 0.9, 8);
    RewardMatrix r = random_rewards(4, 3, 9);
    const auto t = whittle_table_with_gradient(inst, r, 0.9);
    REQUIRE(t.grads.size() == 4);
    RewardMatrix bumped = r;
    bumped.values(2, 1) += 0.3;
    const auto t2 = whittle_table(inst, bumped, 0.9);
    for (int i = 0; i < 4; ++i)
        for (int s = 0; s < 3; ++s) {
            if (i != 2) CHECK(t2(i, s) == t.table(i, s));
            CHECK(t.table(i, s) == whittle_index(inst.transitions[i], r.values.row(i).transpose(), s, 0.9));
        }
}

TEST_CASE("gap monotonicity check on a synthetic arm") {
    const auto inst = synth_instance(2, 3, 1, 2, 0.9, 10);
    CHECK(gap_is_monotone(inst.transitions[0], Eigen::Vector3d(0.1, 0.5, 0.9), 1, 0.9));
}
