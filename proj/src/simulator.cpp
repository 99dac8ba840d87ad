#include "rmabirl/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>

#include "rmabirl/error.hpp"
#include "rmabirl/rng.hpp"
#include "rmabirl/soft_topk.hpp"

namespace rmabirl {

using nlohmann::json;

namespace {

enum StreamTag : std::uint64_t { kInit = 1, kPolicy = 2, kTie = 3, kTransition = 4 };

int sample_next(const ArmTransitions& arm, int s, int a, double u) {
    const auto& p = arm.p[a];
    double cum = 0.0;
    const int m = arm.n_states();
    for (int s2 = 0; s2 < m; ++s2) {
        cum += p(s, s2);
        if (u < cum) return s2;
    }
    // Rounding left u above the cumulative sum: take the last reachable state.
    for (int s2 = m - 1; s2 >= 0; --s2)
        if (p(s, s2) > 0.0) return s2;
    return m - 1;
}

}  // namespace

TrajectorySet simulate(const RmabInstance& instance, const WhittleTable& table, const RolloutConfig& cfg) {
    if (cfg.runs < 1) throw ParameterError("runs must be >= 1");
    if (cfg.horizon < 1) throw ParameterError("horizon must be >= 1");
    if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) throw ParameterError("rollout epsilon must be in [0, 1]");
    const int n = instance.n_arms;
    const int k = instance.budget;
    if (!cfg.initial_states.empty()) {
        if (static_cast<int>(cfg.initial_states.size()) != n) throw ParameterError("initial_states must have one entry per arm");
        for (int s : cfg.initial_states)
            if (s < 0 || s >= instance.n_states) throw ParameterError("initial state out of range");
    }

    TrajectorySet out;
    out.reserve(cfg.runs);
    std::vector<int> order(n), states(n);
    std::vector<double> tie(n);
    std::vector<int> all(n);
    std::iota(all.begin(), all.end(), 0);
    for (int run = 0; run < cfg.runs; ++run) {
        const auto r = static_cast<std::uint64_t>(run);
        if (cfg.initial_states.empty()) {
            auto eng = rng::stream(cfg.seed, {kInit, r});
            for (int i = 0; i < n; ++i) states[i] = static_cast<int>(rng::below(eng, instance.n_states));
        } else {
            states = cfg.initial_states;
        }
        auto policy_eng = rng::stream(cfg.seed, {kPolicy, r});
        Trajectory traj(cfg.horizon, n);
        for (int h = 0; h < cfg.horizon; ++h) {
            const auto hh = static_cast<std::uint64_t>(h);
            for (int i = 0; i < n; ++i) traj.set_state(h, i, states[i]);

            const bool perturb = cfg.mode == PolicyMode::EpsilonPerturbedTopK && rng::unit(policy_eng) < cfg.epsilon;
            if (perturb) {
                for (int i : rng::sample_without_replacement(policy_eng, all, k)) traj.set_action(h, i, 1);
            } else {
                std::iota(order.begin(), order.end(), 0);
                for (int i = 0; i < n; ++i) tie[i] = rng::uniform_at(cfg.seed, {kTie, hh, static_cast<std::uint64_t>(i)});
                std::partial_sort(order.begin(), order.begin() + k, order.end(), [&](int a, int b) {
                    const double wa = table(a, states[a]);
                    const double wb = table(b, states[b]);
                    if (wa != wb) return wa > wb;
                    return tie[a] < tie[b];
                });
                for (int j = 0; j < k; ++j) traj.set_action(h, order[j], 1);
            }

            for (int i = 0; i < n; ++i) {
                const double u = rng::uniform_at(cfg.seed, {kTransition, r, hh, static_cast<std::uint64_t>(i)});
                states[i] = sample_next(instance.transitions[i], states[i], traj.action(h, i), u);
            }
        }
        out.push_back(std::move(traj));
    }
    return out;
}

TrajectorySet simulate(const RmabInstance& instance, const RewardMatrix& rewards, const RolloutConfig& cfg) {
    const double gamma = cfg.discount ? *cfg.discount : instance.discount;
    return simulate(instance, whittle_table(instance, rewards, gamma), cfg);
}

std::vector<int> final_states(const Trajectory& traj) {
    const auto s = traj.states_at(traj.horizon() - 1);
    return {s.begin(), s.end()};
}

double soft_k_l1(const RmabInstance& instance, const WhittleTable& expert, const WhittleTable& learned,
                 const TrajectorySet& trajs, double epsilon) {
    if (trajs.empty()) return 0.0;
    const int n = instance.n_arms;
    double total = 0.0;
    long steps = 0;
    Eigen::VectorXd we(n), wl(n);
    for (const auto& traj : trajs) {
        for (int h = 0; h < traj.horizon(); ++h) {
            const auto states = traj.states_at(h);
            for (int i = 0; i < n; ++i) {
                we[i] = expert(i, states[i]);
                wl[i] = learned(i, states[i]);
            }
            const auto pe = soft_top_k(we, instance.budget, epsilon);
            const auto pl = soft_top_k(wl, instance.budget, epsilon);
            total += (pe.p - pl.p).cwiseAbs().sum();
            ++steps;
        }
    }
    return total / (static_cast<double>(n) * steps);
}

double soft_k_l1(const RmabInstance& instance, const RewardMatrix& r_expert, const RewardMatrix& r_learned,
                 const TrajectorySet& trajs, double epsilon) {
    return soft_k_l1(instance, whittle_table(instance, r_expert, instance.discount),
                     whittle_table(instance, r_learned, instance.discount), trajs, epsilon);
}

// ---------------------------------------------------------------------------

GroupBy GroupBy::parse(const std::string& spec) {
    GroupBy g;
    if (spec == "risk") {
        g.kind = Kind::Risk;
    } else if (spec == "state") {
        g.kind = Kind::State;
    } else {
        g.kind = Kind::Feature;
        g.feature = spec.rfind("feature:", 0) == 0 ? spec.substr(8) : spec;
        if (g.feature.empty()) throw ValidationError("empty feature name in groupby", "groupby");
    }
    return g;
}

GroupBy GroupBy::parse(const json& j) {
    if (j.is_string()) return parse(j.get<std::string>());
    if (!j.is_object() || !j.contains("predicates") || !j.at("predicates").is_array()) {
        throw ValidationError("groupby must be a string or {\"predicates\": [...]}", "groupby");
    }
    GroupBy g;
    g.kind = Kind::Predicates;
    const auto& arr = j.at("predicates");
    for (std::size_t k = 0; k < arr.size(); ++k) {
        const std::string path = "groupby.predicates[" + std::to_string(k) + "]";
        if (!arr[k].is_object() || !arr[k].contains("name") || !arr[k].contains("predicate")) {
            throw ValidationError("needs 'name' and 'predicate'", path);
        }
        g.predicates.emplace_back(arr[k].at("name").get<std::string>(),
                                  parse_predicate(arr[k].at("predicate"), path + ".predicate"));
    }
    if (g.predicates.empty()) throw ValidationError("no categories", "groupby.predicates");
    return g;
}

std::string GroupBy::label() const {
    switch (kind) {
        case Kind::Risk: return "risk";
        case Kind::State: return "state";
        case Kind::Feature: return feature;
        case Kind::Predicates: return "predicates";
    }
    return {};
}

Categorizer::Categorizer(const GroupBy& groupby, const RmabInstance& instance)
    : groupby_(groupby), instance_(&instance) {
    switch (groupby.kind) {
        case GroupBy::Kind::Risk: {
            if (!instance.features) throw ReportError("grouping by risk needs a feature table");
            names_ = {"0", "1", "2", "3"};
            static_category_.resize(instance.n_arms);
            for (int i = 0; i < instance.n_arms; ++i) {
                try {
                    static_category_[i] = risk_score(*instance.features, i, instance.risk_thresholds);
                } catch (const FeatureError& e) {
                    throw ReportError(std::string("cannot group by risk: ") + e.what());
                }
            }
            break;
        }
        case GroupBy::Kind::State:
            for (int s = 0; s < instance.n_states; ++s) names_.push_back(std::to_string(s));
            break;
        case GroupBy::Kind::Feature: {
            if (!instance.features || !instance.features->has(groupby.feature)) {
                throw ReportError("unknown feature '" + groupby.feature + "'");
            }
            const int col = *instance.features->column(groupby.feature);
            // Order numeric values numerically, others lexicographically.
            std::vector<std::pair<std::pair<int, double>, std::string>> keys;
            for (int i = 0; i < instance.n_arms; ++i) {
                const auto& v = instance.features->at(i, col);
                const bool numeric = !std::holds_alternative<std::string>(v);
                keys.push_back({{numeric ? 0 : 1, numeric ? as_number(v) : 0.0}, to_string(v)});
            }
            auto sorted = keys;
            std::sort(sorted.begin(), sorted.end());
            sorted.erase(std::unique(sorted.begin(), sorted.end()), sorted.end());
            std::map<std::string, int> index;
            for (const auto& [key, name] : sorted) {
                if (index.emplace(name, static_cast<int>(names_.size())).second) names_.push_back(name);
            }
            static_category_.resize(instance.n_arms);
            for (int i = 0; i < instance.n_arms; ++i) static_category_[i] = index.at(keys[i].second);
            break;
        }
        case GroupBy::Kind::Predicates:
            for (auto& [name, pred] : groupby_.predicates) {
                names_.push_back(name);
                pred = bind(pred, instance);
            }
            break;
    }
}

int Categorizer::category(int arm, int h, const Trajectory& traj) const {
    switch (groupby_.kind) {
        case GroupBy::Kind::Risk:
        case GroupBy::Kind::Feature: return static_category_[arm];
        case GroupBy::Kind::State: return traj.state(h, arm);
        case GroupBy::Kind::Predicates: {
            int found = -1;
            for (std::size_t c = 0; c < groupby_.predicates.size(); ++c) {
                if (eval_predicate(groupby_.predicates[c].second, arm, h, traj, *instance_)) {
                    if (found >= 0) {
                        throw ReportError("categories '" + names_[found] + "' and '" + names_[c] + "' overlap at arm " +
                                          std::to_string(arm) + ", timestep " + std::to_string(h));
                    }
                    found = static_cast<int>(c);
                }
            }
            if (found < 0) {
                throw ReportError("arm " + std::to_string(arm) + " at timestep " + std::to_string(h) +
                                  " belongs to no category");
            }
            return found;
        }
    }
    return 0;
}

std::vector<CategoryCounts> category_counts(const RmabInstance& instance, const TrajectorySet& trajs,
                                            const Categorizer& categorizer) {
    std::vector<CategoryCounts> out;
    for (const auto& name : categorizer.names()) {
        out.push_back({name, 0, 0, 0, std::vector<long>(instance.n_states, 0)});
    }
    for (const auto& traj : trajs) {
        for (int h = 0; h < traj.horizon(); ++h) {
            for (int i = 0; i < traj.n_arms(); ++i) {
                auto& c = out[categorizer.category(i, h, traj)];
                const int s = traj.state(h, i);
                c.actions += traj.action(h, i);
                c.occupancy += 1;
                c.listening += is_listening_state(s) ? 1 : 0;
                c.state_visits[s] += 1;
            }
        }
    }
    return out;
}

json stats_json(const RmabInstance& instance, const TrajectorySet& trajs, const GroupBy& groupby) {
    const Categorizer categorizer(groupby, instance);
    const auto counts = category_counts(instance, trajs, categorizer);
    const int j = static_cast<int>(trajs.size());
    json cats = json::array();
    for (const auto& c : counts) {
        json visits = json::array();
        for (long v : c.state_visits) visits.push_back(per_run(v, j));
        cats.push_back({{"name", c.name},
                        {"actions", per_run(c.actions, j)},
                        {"visits", per_run(c.listening, j)},
                        {"occupancy", per_run(c.occupancy, j)},
                        {"state_visits", visits}});
    }
    return {{"groupby", groupby.label()}, {"trajectories", j}, {"categories", cats}};
}

// ---------------------------------------------------------------------------

namespace {

std::vector<double> ever_called(const TrajectorySet& trajs, int n_arms) {
    std::vector<double> prob(n_arms, 0.0);
    for (const auto& traj : trajs) {
        for (int i = 0; i < n_arms; ++i) {
            for (int h = 0; h < traj.horizon(); ++h) {
                if (traj.action(h, i)) {
                    prob[i] += 1.0;
                    break;
                }
            }
        }
    }
    for (auto& p : prob) p /= static_cast<double>(trajs.size());
    return prob;
}

}  // namespace

WhatIfReport whatif_report(const RmabInstance& instance, const RewardMatrix& r_baseline,
                           const RewardMatrix& r_candidate, const GroupBy& groupby, const RolloutConfig& cfg) {
    const Categorizer categorizer(groupby, instance);
    const auto base = simulate(instance, r_baseline, cfg);
    const auto cand = simulate(instance, r_candidate, cfg);
    const auto cb = category_counts(instance, base, categorizer);
    const auto cc = category_counts(instance, cand, categorizer);

    WhatIfReport report;
    report.groupby = groupby.label();
    report.static_groups = groupby.is_static();
    report.runs = cfg.runs;
    report.horizon = cfg.horizon;
    report.ever_called_baseline = ever_called(base, instance.n_arms);
    report.ever_called_candidate = ever_called(cand, instance.n_arms);
    for (std::size_t c = 0; c < cb.size(); ++c) report.categories.push_back({cb[c].name, cb[c], cc[c], 0, 0});
    if (report.static_groups) {
        for (int i = 0; i < instance.n_arms; ++i) {
            auto& cat = report.categories[categorizer.category(i, 0, base.front())];
            if (report.ever_called_baseline[i] == 0.0) ++cat.never_called_baseline;
            if (report.ever_called_candidate[i] == 0.0) ++cat.never_called_candidate;
        }
    }
    return report;
}

std::vector<long> histogram(const std::vector<double>& probs, int bins) {
    std::vector<long> h(bins, 0);
    for (double p : probs) {
        const int b = std::min(bins - 1, static_cast<int>(std::floor(p * bins)));
        ++h[std::max(0, b)];
    }
    return h;
}

json to_json(const WhatIfReport& r) {
    json cats = json::array();
    for (const auto& c : r.categories) {
        const double ab = per_run(c.baseline.actions, r.runs);
        const double ac = per_run(c.candidate.actions, r.runs);
        const double vb = per_run(c.baseline.listening, r.runs);
        const double vc = per_run(c.candidate.listening, r.runs);
        json sb = json::array(), sc = json::array();
        for (long v : c.baseline.state_visits) sb.push_back(per_run(v, r.runs));
        for (long v : c.candidate.state_visits) sc.push_back(per_run(v, r.runs));
        json entry = {{"name", c.name},
                      {"actions_baseline", ab},
                      {"actions_candidate", ac},
                      {"actions_delta", ac - ab},
                      {"visits_baseline", vb},
                      {"visits_candidate", vc},
                      {"visits_delta", vc - vb},
                      {"listen_rate_baseline", c.baseline.occupancy ? static_cast<double>(c.baseline.listening) / c.baseline.occupancy : 0.0},
                      {"listen_rate_candidate", c.candidate.occupancy ? static_cast<double>(c.candidate.listening) / c.candidate.occupancy : 0.0},
                      {"state_visits_baseline", sb},
                      {"state_visits_candidate", sc}};
        if (r.static_groups) {
            entry["never_called_baseline"] = c.never_called_baseline;
            entry["never_called_candidate"] = c.never_called_candidate;
        }
        cats.push_back(entry);
    }
    const int bins = 10;
    const auto hb = histogram(r.ever_called_baseline, bins);
    const auto hc = histogram(r.ever_called_candidate, bins);
    json hist = json::array();
    for (int b = 0; b < bins; ++b) {
        hist.push_back({{"lo", static_cast<double>(b) / bins},
                        {"hi", static_cast<double>(b + 1) / bins},
                        {"baseline", hb[b]},
                        {"candidate", hc[b]}});
    }
    const auto zeros = [](const std::vector<double>& v) { return std::count(v.begin(), v.end(), 0.0); };
    return {{"groupby", r.groupby},
            {"runs", r.runs},
            {"horizon", r.horizon},
            {"categories", cats},
            {"ever_called_histogram", hist},
            {"never_called", {{"baseline", zeros(r.ever_called_baseline)}, {"candidate", zeros(r.ever_called_candidate)}}},
            {"ever_called_baseline", r.ever_called_baseline},
            {"ever_called_candidate", r.ever_called_candidate}};
}

}  // namespace rmabirl
