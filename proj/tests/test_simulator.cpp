#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "rmabirl/error.hpp"
#include "rmabirl/io.hpp"
#include "rmabirl/simulator.hpp"

using namespace rmabirl;
using nlohmann::json;
namespace fs = std::filesystem;

static const fs::path kFixtures = RMABIRL_FIXTURES;

namespace {

RmabInstance deterministic_instance(int n, int budget) {
    RmabInstance inst = synth_instance(n, 2, budget, 4, 0.9, 1);
    for (auto& arm : inst.transitions) {
        arm.p[0] << 1, 0, 1, 0;  // passive: fall to 0
        arm.p[1] << 0, 1, 0, 1;  // active: move to 1
    }
    return inst;
}

RolloutConfig hard(int horizon, int runs, std::uint64_t seed = 0) {
    RolloutConfig cfg;
    cfg.horizon = horizon;
    cfg.runs = runs;
    cfg.mode = PolicyMode::HardTopK;
    cfg.seed = seed;
    return cfg;
}

}  // namespace

TEST_CASE("simulate: budget is exact and K = N pulls everything") {
    const auto inst = synth_instance(6, 3, 2, 5, 0.9, 2);
    RolloutConfig cfg;
    cfg.horizon = 7;
    cfg.runs = 20;
    cfg.epsilon = 0.3;
    for (const auto& t : simulate(inst, random_rewards(6, 3, 3), cfg)) {
        CHECK(t.horizon() == 7);
        for (int h = 0; h < 7; ++h) CHECK(t.pulls_at(h) == 2);
    }
    auto full = synth_instance(4, 2, 4, 3, 0.9, 4);
    for (const auto& t : simulate(full, random_rewards(4, 2, 5), cfg))
        for (int h = 0; h < 7; ++h) CHECK(t.pulls_at(h) == 4);
}

TEST_CASE("simulate: deterministic dynamics give identical runs") {
    const auto inst = deterministic_instance(5, 2);
    auto cfg = hard(6, 8, 3);
    cfg.initial_states = {0, 1, 0, 1, 0};
    const auto trajs = simulate(inst, random_rewards(5, 2, 6), cfg);
    for (const auto& t : trajs) CHECK(t == trajs.front());
}

TEST_CASE("simulate: a dominating arm is always pulled") {
    const auto inst = synth_instance(2, 2, 1, 5, 0.9, 7);
    RewardMatrix r = RewardMatrix::zeros(2, 2);
    r.values(1, 1) = 1.0;
    const auto table = whittle_table(inst, r, 0.9);
    REQUIRE(table.w.row(1).minCoeff() > table.w.row(0).maxCoeff());
    for (const auto& t : simulate(inst, r, hard(10, 10)))
        for (int h = 0; h < 10; ++h) CHECK(t.action(h, 1) == 1);
}

TEST_CASE("simulate: seeds and common random numbers") {
    const auto inst = synth_instance(8, 2, 2, 5, 0.9, 8);
    const auto r = random_rewards(8, 2, 9);
    RolloutConfig cfg;
    cfg.runs = 5;
    cfg.seed = 17;
    CHECK(simulate(inst, r, cfg) == simulate(inst, r, cfg));
    // Arms whose actions agree see the same transition draws.
    auto c1 = hard(1, 5, 4);
    c1.initial_states.assign(8, 0);
    const auto a = simulate(inst, r, c1);
    const auto b = simulate(inst, random_rewards(8, 2, 10), c1);
    for (std::size_t run = 0; run < a.size(); ++run) CHECK(a[run].states_at(0)[0] == b[run].states_at(0)[0]);
    CHECK(final_states(a[0]).size() == 8);
}

TEST_CASE("soft_k_l1: identity, scaling, opposition and bounds") {
    const auto inst = synth_instance(6, 3, 2, 4, 0.9, 11);
    RolloutConfig cfg;
    cfg.horizon = 4;
    cfg.runs = 4;
    const auto r = random_rewards(6, 3, 12);
    const auto trajs = simulate(inst, r, cfg);
    CHECK(soft_k_l1(inst, r, r, trajs, 0.01) == 0.0);
    const RewardMatrix scaled{3.0 * r.values};
    CHECK(soft_k_l1(inst, r, scaled, trajs, 1e-8) <= 1e-6);

    const auto two = synth_instance(2, 2, 1, 1, 0.9, 13);
    WhittleTable e, l;
    e.w = Eigen::MatrixXd::Zero(2, 2);
    l.w = Eigen::MatrixXd::Zero(2, 2);
    e.w.col(0) << 1, 0;
    l.w.col(0) << 0, 1;
    Trajectory t(1, 2);
    CHECK(soft_k_l1(two, e, l, {t}, 1e-8) == doctest::Approx(1.0).epsilon(1e-9));

    for (std::uint64_t s = 0; s < 10; ++s) {
        const double v = soft_k_l1(inst, r, random_rewards(6, 3, 100 + s), trajs, 0.05);
        CHECK(v >= 0.0);
        CHECK(v <= 2.0 * 2 / 6 + 1e-12);
    }
}

TEST_CASE("groupby parsing and categorizers") {
    CHECK(GroupBy::parse(std::string("risk")).kind == GroupBy::Kind::Risk);
    CHECK(GroupBy::parse(std::string("state")).kind == GroupBy::Kind::State);
    const auto lang = GroupBy::parse(std::string("feature:language"));
    CHECK(lang.kind == GroupBy::Kind::Feature);
    CHECK(lang.feature == "language");
    const auto inst = io::load_instance(kFixtures / "three_arm");
    CHECK(Categorizer(lang, inst).names() == std::vector<std::string>{"Hindi", "Marathi", "Other"});
    CHECK(Categorizer(GroupBy::parse(std::string("income")), inst).names() == std::vector<std::string>{"2", "6"});
    CHECK_THROWS_AS(Categorizer(GroupBy::parse(std::string("caste")), inst), ReportError);

    const json overlapping = {{"predicates",
                               {{{"name", "all"}, {"predicate", {{"state_in", {0, 1}}}}},
                                {{"name", "zero"}, {"predicate", {{"state_in", {0}}}}}}}};
    const Categorizer bad(GroupBy::parse(overlapping), inst);
    Trajectory t(1, 3);
    CHECK_THROWS_AS(bad.category(0, 0, t), ReportError);
    const json gap = {{"predicates", {{{"name", "one"}, {"predicate", {{"state_in", {1}}}}}}}};
    CHECK_THROWS_AS(Categorizer(GroupBy::parse(gap), inst).category(0, 0, t), ReportError);
}

TEST_CASE("stats_json: three-arm fixture by risk has a single action bar") {
    const auto inst = io::load_instance(kFixtures / "three_arm");
    const auto trajs = io::load_trajectories(kFixtures / "three_arm" / "trajectory.csv", 3);
    const auto stats = stats_json(inst, trajs, GroupBy::parse(std::string("risk")));
    int nonzero = 0;
    for (const auto& c : stats["categories"]) {
        if (c["actions"].get<double>() != 0.0) {
            ++nonzero;
            CHECK(c["name"] == "0");
            CHECK(c["actions"] == 1.0);
        }
    }
    CHECK(nonzero == 1);
    CHECK(stats["categories"][3]["occupancy"] == 1.0);
    CHECK(stats["categories"][1]["visits"] == 1.0);  // arm 2 sits in state 1
}

TEST_CASE("whatif_report: identical rewards give zero deltas and counts are conserved") {
    MchConfig mc;
    mc.n_arms = 40;
    mc.budget = 4;
    mc.horizon = 5;
    mc.seed = 14;
    const auto inst = synth_mch_instance(mc);
    const auto r = RewardMatrix::listening(40, inst.n_states);
    RolloutConfig cfg;
    cfg.horizon = 6;
    cfg.runs = 12;
    cfg.seed = 3;
    const auto rep = whatif_report(inst, r, r, GroupBy::parse(std::string("risk")), cfg);
    long total = 0;
    for (const auto& c : rep.categories) {
        CHECK(c.baseline.actions == c.candidate.actions);
        CHECK(c.baseline.listening == c.candidate.listening);
        total += c.baseline.actions;
    }
    CHECK(total == 4L * 6 * 12);
    const auto j = to_json(rep);
    for (const auto& c : j["categories"]) CHECK(c["actions_delta"] == 0.0);
    long hist_total = 0;
    for (const auto& b : j["ever_called_histogram"]) hist_total += b["baseline"].get<long>();
    CHECK(hist_total == 40);
    for (double p : rep.ever_called_candidate) {
        CHECK(p >= 0.0);
        CHECK(p <= 1.0);
    }

    const auto other = whatif_report(inst, r, random_rewards(40, inst.n_states, 5), GroupBy::parse(std::string("state")), cfg);
    long b = 0, c = 0;
    for (const auto& cat : other.categories) {
        b += cat.baseline.actions;
        c += cat.candidate.actions;
    }
    CHECK(b == 4L * 6 * 12);
    CHECK(c == 4L * 6 * 12);
    CHECK_FALSE(to_json(other)["categories"][0].contains("never_called_baseline"));
}

TEST_CASE("Monte Carlo means are stable when runs double") {
    const auto inst = synth_instance(30, 2, 3, 5, 0.9, 15);
    const auto r = random_rewards(30, 2, 16);
    const Categorizer cat(GroupBy::parse(std::string("state")), inst);
    auto per_run_actions = [&](int runs) {
        RolloutConfig cfg;
        cfg.horizon = 10;
        cfg.runs = runs;
        cfg.seed = 21;
        std::vector<double> v;
        for (const auto& t : simulate(inst, r, cfg)) v.push_back(category_counts(inst, {t}, cat)[1].actions);
        return v;
    };
    const auto a = per_run_actions(60);
    const auto b = per_run_actions(120);
    auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
    double var = 0.0;
    for (double x : a) var += (x - mean(a)) * (x - mean(a));
    const double se = std::sqrt(var / (a.size() - 1) / a.size());
    CHECK(std::abs(mean(a) - mean(b)) < 2 * se);
}

TEST_CASE("histogram bins") {
    CHECK(histogram({0.0, 0.05, 0.1, 0.99, 1.0}, 10) == std::vector<long>{2, 1, 0, 0, 0, 0, 0, 0, 0, 2});
}
