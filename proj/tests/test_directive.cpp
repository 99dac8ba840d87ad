#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <map>

#include "rmabirl/directive.hpp"
#include "rmabirl/error.hpp"
#include "rmabirl/io.hpp"

using namespace rmabirl;
namespace fs = std::filesystem;
using nlohmann::json;

static const fs::path kFixtures = RMABIRL_FIXTURES;

namespace {

RmabInstance three_arm() { return io::load_instance(kFixtures / "three_arm"); }

Trajectory three_arm_trajectory() {
    return io::load_trajectories(kFixtures / "three_arm" / "trajectory.csv", 3).at(0);
}

Directive three_arm_directive() { return parse_directive(io::read_json(kFixtures / "three_arm" / "directive.json")); }

// N arms with a string feature "g", budget K, single timestep.
RmabInstance grouped(const std::vector<std::string>& groups, int budget) {
    auto inst = synth_instance(static_cast<int>(groups.size()), 2, budget, 1, 0.9, 1);
    std::vector<std::vector<FeatureValue>> rows;
    for (const auto& g : groups) rows.push_back({g});
    inst.features = FeatureTable({"g"}, rows);
    return inst;
}

Directive g_directive(const std::string& from, const std::string& to, std::optional<int> cap = std::nullopt) {
    json j = {{"source", {{"feature", "g"}, {"op", "eq"}, {"value", from}}},
              {"target", {{"feature", "g"}, {"op", "eq"}, {"value", to}}},
              {"cap", cap ? json(*cap) : json(nullptr)}};
    return parse_directive(j);
}

std::string actions_key(const Trajectory& t) {
    std::string s;
    for (int h = 0; h < t.horizon(); ++h)
        for (int i = 0; i < t.n_arms(); ++i) s += char('0' + t.action(h, i));
    return s;
}

}  // namespace

TEST_CASE("eval_predicate: atoms and combinators") {
    const auto inst = three_arm();
    const auto traj = three_arm_trajectory();
    auto eval = [&](const json& j, int arm, int h = 0) {
        return eval_predicate(bind(parse_predicate(j), inst), arm, h, traj, inst);
    };
    CHECK(eval({{"state_in", {0}}}, 0));
    CHECK_FALSE(eval({{"state_in", {0}}}, 2));
    CHECK(eval({{"derived", "risk_score"}, {"op", "ge"}, {"value", 2}}, 1));
    CHECK_FALSE(eval({{"derived", "risk_score"}, {"op", "ge"}, {"value", 2}}, 0));
    CHECK(eval({{"time_in", {0, 0}}}, 0));
    CHECK_FALSE(eval({{"time_in", {1, 3}}}, 0));

    const json lang = {{"and", {{{"state_in", {1}}}, {{"not", {{"feature", "language"}, {"op", "eq"}, {"value", "Marathi"}}}}}}};
    CHECK_FALSE(eval(lang, 0));  // Marathi, state 0
    CHECK_FALSE(eval(lang, 1));  // Hindi, state 0
    CHECK(eval(lang, 2));        // Other, state 1

    CHECK(eval({{"or", {{{"feature", "income"}, {"op", "lt"}, {"value", 3}}, {{"state_in", {1}}}}}}, 1));
    CHECK(eval({{"feature", "language"}, {"op", "in"}, {"value", {"Hindi", "Other"}}}, 2));
    CHECK(eval({{"feature", "phone_ownership"}, {"op", "eq"}, {"value", false}}, 1));
    // gap = P(0,1,1) - P(0,0,1) = 0.6 - 0.3 for every arm
    CHECK(eval({{"derived", "transition_gap"}, {"op", "gt"}, {"value", 0.29}}, 0));
    CHECK_FALSE(eval({{"derived", "transition_gap"}, {"op", "gt"}, {"value", 0.31}}, 0));
}

TEST_CASE("bind: unknown features and out-of-range states") {
    const auto inst = three_arm();
    CHECK_THROWS_AS(bind(parse_predicate({{"feature", "caste"}, {"op", "eq"}, {"value", 1}}), inst), PredicateError);
    CHECK_THROWS_AS(bind(parse_predicate({{"state_in", {5}}}), inst), PredicateError);
    auto no_features = inst;
    no_features.features.reset();
    CHECK_THROWS_AS(bind(parse_predicate({{"derived", "risk_score"}, {"op", "ge"}, {"value", 2}}), no_features),
                    PredicateError);
}

TEST_CASE("parse_predicate: errors carry the JSON path") {
    try {
        parse_directive(json{{"source", {{"and", {{{"state_in", {0}}}, {{"feature", "x"}, {"op", "approx"}, {"value", 1}}}}}},
                             {"target", {{"state_in", {0}}}}});
        FAIL("expected a ValidationError");
    } catch (const ValidationError& e) {
        CHECK(e.path() == "source.and[1].op");
    }
    CHECK_THROWS_AS(parse_directive(json{{"source", {{"state_in", {0}}}}, {"target", {{"state_in", {1}}}}, {"cap", 0}}),
                    ValidationError);
    CHECK_THROWS_AS(parse_predicate(json{{"time_in", {3, 1}}}), ValidationError);
    CHECK_THROWS_AS(parse_predicate(json{{"bogus", 1}}), ValidationError);
}

TEST_CASE("directive JSON round trip, including binary state strings") {
    const auto d = parse_directive(io::read_json(kFixtures / "history_directive.json"));
    const auto j = to_json(d);
    CHECK(j["source"]["state_in"] == json({7, 5, 6, 3, 1}));
    CHECK(to_json(parse_directive(j)) == j);
    const auto lang = parse_directive(io::read_json(kFixtures / "language_directive.json"));
    CHECK(lang.max_moves_per_timestep == 30);
    CHECK(to_json(parse_directive(to_json(lang))) == to_json(lang));
}

TEST_CASE("median thresholds are resolved by bind") {
    auto inst = grouped({"a", "b", "c", "d"}, 1);
    const auto p = parse_predicate({{"derived", "transition_gap"}, {"op", "ge"}, {"value", "median"}});
    Trajectory t(1, 4);
    CHECK_THROWS_AS(eval_predicate(p, 0, 0, t, inst), PredicateError);
    const auto bound = bind(p, inst);
    int above = 0;
    for (int i = 0; i < 4; ++i) above += eval_predicate(bound, i, 0, t, inst);
    CHECK(above >= 2);
    CHECK(above < 4);
}

TEST_CASE("apply_directive: the three-arm example") {
    const auto inst = three_arm();
    const auto traj = three_arm_trajectory();
    const auto d = bind(three_arm_directive(), inst);
    std::map<std::string, int> seen;
    for (std::uint64_t r = 0; r < 200; ++r) seen[actions_key(apply_directive(traj, d, inst, {7, 0, r}))]++;
    CHECK(seen.size() == 2);
    CHECK(seen.count("010") == 1);
    CHECK(seen.count("001") == 1);
}

TEST_CASE("apply_directive: empty source leaves the trajectory alone") {
    const auto inst = three_arm();
    const auto traj = three_arm_trajectory();
    const auto d = bind(parse_directive(json{{"source", {{"state_in", {1}}}}, {"target", {{"state_in", {0}}}}}), inst);
    CHECK(apply_directive(traj, d, inst, {1, 0, 0}) == traj);
    const auto set = generate_expert_set({traj}, d, inst, 1, 3);
    REQUIRE(set.size() == 1);
    CHECK(set[0] == traj);
}

TEST_CASE("apply_directive: min rule, cap, budget and non-interference") {
    // 5 acted donors, 3 idle recipients, 2 bystanders (one acted, one idle)
    const auto inst = grouped({"d", "d", "d", "d", "d", "r", "r", "r", "x", "x"}, 6);
    Trajectory t(1, 10);
    for (int i : {0, 1, 2, 3, 4, 8}) t.set_action(0, i, 1);
    for (std::uint64_t rep = 0; rep < 50; ++rep) {
        const auto out = apply_directive(t, bind(g_directive("d", "r"), inst), inst, {2, 0, rep});
        CHECK(out.pulls_at(0) == 6);
        CHECK(count_moves(t, out) == 3);
        for (int i : {5, 6, 7}) CHECK(out.action(0, i) == 1);
        CHECK(out.action(0, 8) == 1);
        CHECK(out.action(0, 9) == 0);

        const auto capped = apply_directive(t, bind(g_directive("d", "r", 2), inst), inst, {2, 0, rep});
        CHECK(count_moves(t, capped) == 2);
        CHECK(capped.pulls_at(0) == 6);
        CHECK(capped.action(0, 8) == 1);
    }
}

TEST_CASE("apply_directive: all matchings are equally likely") {
    // two donors, two recipients, cap 1: four matchings
    const auto inst = grouped({"d", "d", "r", "r"}, 2);
    Trajectory t(1, 4);
    t.set_action(0, 0, 1);
    t.set_action(0, 1, 1);
    const auto d = bind(g_directive("d", "r", 1), inst);
    std::map<std::string, int> seen;
    const int n = 20000;
    for (int r = 0; r < n; ++r) seen[actions_key(apply_directive(t, d, inst, {11, 0, static_cast<std::uint64_t>(r)}))]++;
    REQUIRE(seen.size() == 4);
    const double sigma = std::sqrt(0.25 * 0.75 / n);
    for (const auto& [key, count] : seen) CHECK(std::abs(count / double(n) - 0.25) <= 4 * sigma);
}

TEST_CASE("generate_expert_set: replicas, determinism and independence") {
    const auto inst = three_arm();
    const auto traj = three_arm_trajectory();
    const auto d = three_arm_directive();
    const auto a = generate_expert_set({traj}, d, inst, 5, 42);
    const auto b = generate_expert_set({traj}, d, inst, 5, 42);
    REQUIRE(a.size() == 5);
    CHECK(a == b);
    for (const auto& t : a) {
        const auto k = actions_key(t);
        CHECK((k == "010" || k == "001"));
    }
    CHECK_THROWS_AS(generate_expert_set({traj}, d, inst, 0, 1), ParameterError);

    const auto big = generate_expert_set({traj}, d, inst, 10000, 5);
    int first = 0;
    for (const auto& t : big) first += t.action(0, 1);
    CHECK(std::abs(first / 10000.0 - 0.5) <= 0.015);
}

TEST_CASE("generate_expert_set: multi-step trajectories keep the budget at every step") {
    MchConfig cfg;
    cfg.n_arms = 60;
    cfg.budget = 6;
    cfg.horizon = 5;
    cfg.seed = 9;
    const auto inst = synth_mch_instance(cfg);
    Trajectory t(5, 60);
    for (int h = 0; h < 5; ++h)
        for (int i = 0; i < 60; ++i) {
            t.set_state(h, i, (i + h) % inst.n_states);
            if ((i + h) % 10 == 0) t.set_action(h, i, 1);
        }
    const auto d = parse_directive(io::read_json(kFixtures / "risk_directive.json"));
    const auto set = generate_expert_set({t, t}, d, inst, 3, 1);
    REQUIRE(set.size() == 6);
    for (const auto& e : set) {
        for (int h = 0; h < 5; ++h) CHECK(e.pulls_at(h) == t.pulls_at(h));
        for (int h = 0; h < 5; ++h)
            for (int i = 0; i < 60; ++i) CHECK(e.state(h, i) == t.state(h, i));
    }
}
