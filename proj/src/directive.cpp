#include "rmabirl/directive.hpp"

#include <algorithm>
#include <cmath>

#include "rmabirl/error.hpp"
#include "rmabirl/rng.hpp"

namespace rmabirl {

using nlohmann::json;

namespace {

CompareOp parse_op(const json& j, const std::string& path) {
    if (!j.is_string()) throw ValidationError("operator must be a string", path);
    const auto s = j.get<std::string>();
    if (s == "lt") return CompareOp::Lt;
    if (s == "le") return CompareOp::Le;
    if (s == "eq") return CompareOp::Eq;
    if (s == "ne") return CompareOp::Ne;
    if (s == "ge") return CompareOp::Ge;
    if (s == "gt") return CompareOp::Gt;
    if (s == "in") return CompareOp::In;
    throw ValidationError("unknown operator '" + s + "'", path);
}

const char* op_name(CompareOp op) {
    switch (op) {
        case CompareOp::Lt: return "lt";
        case CompareOp::Le: return "le";
        case CompareOp::Eq: return "eq";
        case CompareOp::Ne: return "ne";
        case CompareOp::Ge: return "ge";
        case CompareOp::Gt: return "gt";
        case CompareOp::In: return "in";
    }
    return "?";
}

FeatureValue parse_value(const json& j, const std::string& path) {
    if (j.is_boolean()) return j.get<bool>();
    if (j.is_number_integer()) return j.get<std::int64_t>();
    if (j.is_number_float()) return j.get<double>();
    if (j.is_string()) return j.get<std::string>();
    throw ValidationError("value must be a boolean, number or string", path);
}

json value_to_json(const FeatureValue& v) {
    return std::visit([](const auto& x) { return json(x); }, v);
}

std::vector<FeatureValue> parse_values(const json& j, CompareOp op, const std::string& path) {
    std::vector<FeatureValue> out;
    if (op == CompareOp::In) {
        if (!j.is_array() || j.empty()) throw ValidationError("'in' needs a non-empty array", path);
        for (std::size_t k = 0; k < j.size(); ++k) out.push_back(parse_value(j[k], path + "[" + std::to_string(k) + "]"));
    } else {
        out.push_back(parse_value(j, path));
    }
    return out;
}

// States may be given as integers or as binary history strings ("011").
int parse_state(const json& j, const std::string& path) {
    if (j.is_number_integer()) return j.get<int>();
    if (j.is_string()) {
        const auto s = j.get<std::string>();
        if (s.empty() || s.size() > 30 || s.find_first_not_of("01") != std::string::npos) {
            throw ValidationError("state string must be binary", path);
        }
        return std::stoi(s, nullptr, 2);
    }
    throw ValidationError("state must be an integer or a binary string", path);
}

const json& require(const json& j, const char* key, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end()) throw ValidationError(std::string("missing '") + key + "'", path);
    return *it;
}

bool compare(double x, CompareOp op, const std::vector<double>& values) {
    switch (op) {
        case CompareOp::Lt: return x < values.front();
        case CompareOp::Le: return x <= values.front();
        case CompareOp::Eq: return x == values.front();
        case CompareOp::Ne: return x != values.front();
        case CompareOp::Ge: return x >= values.front();
        case CompareOp::Gt: return x > values.front();
        case CompareOp::In: return std::find(values.begin(), values.end(), x) != values.end();
    }
    return false;
}

bool equal(const FeatureValue& a, const FeatureValue& b) {
    const bool a_str = std::holds_alternative<std::string>(a);
    const bool b_str = std::holds_alternative<std::string>(b);
    if (a_str || b_str) return a_str && b_str && std::get<std::string>(a) == std::get<std::string>(b);
    return as_number(a) == as_number(b);
}

bool eval_feature(const FeatureAtom& atom, const FeatureValue& v) {
    switch (atom.op) {
        case CompareOp::Eq: return equal(v, atom.values.front());
        case CompareOp::Ne: return !equal(v, atom.values.front());
        case CompareOp::In:
            return std::any_of(atom.values.begin(), atom.values.end(), [&](const auto& x) { return equal(v, x); });
        default: break;
    }
    try {
        return compare(as_number(v), atom.op, {as_number(atom.values.front())});
    } catch (const FeatureError& e) {
        throw PredicateError("feature '" + atom.feature + "': " + e.what());
    }
}

double derived_value(DerivedQuantity q, int arm, const RmabInstance& instance) {
    if (q == DerivedQuantity::TransitionGap) return transition_gap(instance.transitions.at(arm));
    if (!instance.features) throw PredicateError("risk_score needs a feature table");
    try {
        return risk_score(*instance.features, arm, instance.risk_thresholds);
    } catch (const FeatureError& e) {
        throw PredicateError(std::string("risk_score: ") + e.what());
    }
}

double median(std::vector<double> v) {
    std::sort(v.begin(), v.end());
    const std::size_t n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Predicate parse_predicate(const json& j, const std::string& path) {
    if (!j.is_object()) throw ValidationError("predicate must be an object", path);
    auto parse_list = [&](const char* key) {
        const auto& arr = j.at(key);
        const std::string p = path + "." + key;
        if (!arr.is_array() || arr.empty()) throw ValidationError("needs a non-empty array", p);
        std::vector<Predicate> terms;
        for (std::size_t k = 0; k < arr.size(); ++k) terms.push_back(parse_predicate(arr[k], p + "[" + std::to_string(k) + "]"));
        return terms;
    };
    if (j.contains("and")) return {AllOf{parse_list("and")}};
    if (j.contains("or")) return {AnyOf{parse_list("or")}};
    if (j.contains("not")) {
        return {Negation{std::make_shared<const Predicate>(parse_predicate(j.at("not"), path + ".not"))}};
    }
    if (j.contains("feature")) {
        const auto& name = j.at("feature");
        if (!name.is_string()) throw ValidationError("feature name must be a string", path + ".feature");
        FeatureAtom atom;
        atom.feature = name.get<std::string>();
        atom.op = parse_op(require(j, "op", path), path + ".op");
        atom.values = parse_values(require(j, "value", path), atom.op, path + ".value");
        return {atom};
    }
    if (j.contains("state_in")) {
        const auto& arr = j.at("state_in");
        if (!arr.is_array()) throw ValidationError("state_in must be an array", path + ".state_in");
        StateIn atom;
        for (std::size_t k = 0; k < arr.size(); ++k) {
            atom.states.push_back(parse_state(arr[k], path + ".state_in[" + std::to_string(k) + "]"));
        }
        return {atom};
    }
    if (j.contains("time_in")) {
        const auto& arr = j.at("time_in");
        if (!arr.is_array() || arr.size() != 2 || !arr[0].is_number_integer() || !arr[1].is_number_integer()) {
            throw ValidationError("time_in must be [first, last]", path + ".time_in");
        }
        TimeIn atom{arr[0].get<int>(), arr[1].get<int>()};
        if (atom.first > atom.last) throw ValidationError("time_in range is empty", path + ".time_in");
        return {atom};
    }
    if (j.contains("derived")) {
        const auto& q = j.at("derived");
        DerivedAtom atom;
        if (q == "risk_score") atom.quantity = DerivedQuantity::RiskScore;
        else if (q == "transition_gap") atom.quantity = DerivedQuantity::TransitionGap;
        else throw ValidationError("unknown derived quantity", path + ".derived");
        atom.op = parse_op(require(j, "op", path), path + ".op");
        const auto& v = require(j, "value", path);
        if (v == "median") {
            if (atom.op == CompareOp::In) throw ValidationError("'median' cannot be used with 'in'", path + ".value");
            atom.median = true;
        } else {
            for (const auto& x : parse_values(v, atom.op, path + ".value")) {
                if (std::holds_alternative<std::string>(x)) throw ValidationError("derived values must be numeric", path + ".value");
                atom.values.push_back(as_number(x));
            }
        }
        return {atom};
    }
    throw ValidationError("unrecognised predicate node", path);
}

json to_json(const Predicate& p) {
    return std::visit(
        [](const auto& n) -> json {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, AllOf> || std::is_same_v<T, AnyOf>) {
                json arr = json::array();
                for (const auto& t : n.terms) arr.push_back(to_json(t));
                return {{std::is_same_v<T, AllOf> ? "and" : "or", arr}};
            } else if constexpr (std::is_same_v<T, Negation>) {
                return {{"not", to_json(*n.term)}};
            } else if constexpr (std::is_same_v<T, FeatureAtom>) {
                json value;
                if (n.op == CompareOp::In) {
                    value = json::array();
                    for (const auto& v : n.values) value.push_back(value_to_json(v));
                } else {
                    value = value_to_json(n.values.front());
                }
                return {{"feature", n.feature}, {"op", op_name(n.op)}, {"value", value}};
            } else if constexpr (std::is_same_v<T, StateIn>) {
                return {{"state_in", n.states}};
            } else if constexpr (std::is_same_v<T, TimeIn>) {
                return {{"time_in", {n.first, n.last}}};
            } else {
                json value;
                if (n.median) value = "median";
                else if (n.op == CompareOp::In) value = n.values;
                else value = n.values.front();
                return {{"derived", n.quantity == DerivedQuantity::RiskScore ? "risk_score" : "transition_gap"},
                        {"op", op_name(n.op)},
                        {"value", value}};
            }
        },
        p.node);
}

Directive parse_directive(const json& j) {
    if (!j.is_object()) throw ValidationError("directive must be an object", "directive");
    Directive d;
    d.source = parse_predicate(require(j, "source", "directive"), "source");
    d.target = parse_predicate(require(j, "target", "directive"), "target");
    if (const auto it = j.find("cap"); it != j.end() && !it->is_null()) {
        if (!it->is_number_integer() || it->get<int>() < 1) throw ValidationError("cap must be a positive integer or null", "cap");
        d.max_moves_per_timestep = it->get<int>();
    }
    return d;
}

json to_json(const Directive& d) {
    return {{"source", to_json(d.source)},
            {"target", to_json(d.target)},
            {"cap", d.max_moves_per_timestep ? json(*d.max_moves_per_timestep) : json(nullptr)}};
}

Predicate bind(const Predicate& p, const RmabInstance& instance) {
    return std::visit(
        [&](const auto& n) -> Predicate {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, AllOf> || std::is_same_v<T, AnyOf>) {
                T out;
                for (const auto& t : n.terms) out.terms.push_back(bind(t, instance));
                return {out};
            } else if constexpr (std::is_same_v<T, Negation>) {
                return {Negation{std::make_shared<const Predicate>(bind(*n.term, instance))}};
            } else if constexpr (std::is_same_v<T, FeatureAtom>) {
                if (!instance.features || !instance.features->has(n.feature)) {
                    throw PredicateError("unknown feature '" + n.feature + "'");
                }
                return {n};
            } else if constexpr (std::is_same_v<T, StateIn>) {
                for (int s : n.states) {
                    if (s < 0 || s >= instance.n_states) throw PredicateError("state " + std::to_string(s) + " out of range");
                }
                return {n};
            } else if constexpr (std::is_same_v<T, TimeIn>) {
                return {n};
            } else {
                DerivedAtom out = n;
                std::vector<double> population(instance.n_arms);
                for (int i = 0; i < instance.n_arms; ++i) population[i] = derived_value(n.quantity, i, instance);
                if (n.median) {
                    out.values = {median(population)};
                    out.median = false;
                }
                return {out};
            }
        },
        p.node);
}

Directive bind(const Directive& d, const RmabInstance& instance) {
    return {bind(d.source, instance), bind(d.target, instance), d.max_moves_per_timestep};
}

bool eval_predicate(const Predicate& pred, int arm, int h, const Trajectory& traj, const RmabInstance& instance) {
    return std::visit(
        [&](const auto& n) -> bool {
            using T = std::decay_t<decltype(n)>;
            if constexpr (std::is_same_v<T, AllOf>) {
                return std::all_of(n.terms.begin(), n.terms.end(),
                                   [&](const Predicate& t) { return eval_predicate(t, arm, h, traj, instance); });
            } else if constexpr (std::is_same_v<T, AnyOf>) {
                return std::any_of(n.terms.begin(), n.terms.end(),
                                   [&](const Predicate& t) { return eval_predicate(t, arm, h, traj, instance); });
            } else if constexpr (std::is_same_v<T, Negation>) {
                return !eval_predicate(*n.term, arm, h, traj, instance);
            } else if constexpr (std::is_same_v<T, FeatureAtom>) {
                if (!instance.features || !instance.features->has(n.feature)) {
                    throw PredicateError("unknown feature '" + n.feature + "'");
                }
                return eval_feature(n, instance.features->at(arm, n.feature));
            } else if constexpr (std::is_same_v<T, StateIn>) {
                const int s = traj.state(h, arm);
                return std::find(n.states.begin(), n.states.end(), s) != n.states.end();
            } else if constexpr (std::is_same_v<T, TimeIn>) {
                return h >= n.first && h <= n.last;
            } else {
                if (n.median) throw PredicateError("median threshold not resolved; bind the directive first");
                return compare(derived_value(n.quantity, arm, instance), n.op, n.values);
            }
        },
        pred.node);
}

Trajectory apply_directive(const Trajectory& traj, const Directive& d, const RmabInstance& instance,
                           const EditStream& stream) {
    Trajectory out = traj;
    std::vector<int> donors, recipients;
    for (int h = 0; h < traj.horizon(); ++h) {
        donors.clear();
        recipients.clear();
        for (int i = 0; i < traj.n_arms(); ++i) {
            if (traj.action(h, i) == 1) {
                if (eval_predicate(d.source, i, h, traj, instance)) donors.push_back(i);
            } else if (eval_predicate(d.target, i, h, traj, instance)) {
                recipients.push_back(i);
            }
        }
        std::size_t n_move = std::min(donors.size(), recipients.size());
        if (d.max_moves_per_timestep) n_move = std::min<std::size_t>(n_move, *d.max_moves_per_timestep);
        if (n_move == 0) continue;
        auto eng = rng::stream(stream.seed, {stream.trajectory, stream.replica, static_cast<std::uint64_t>(h)});
        for (int i : rng::sample_without_replacement(eng, donors, n_move)) out.set_action(h, i, 0);
        for (int i : rng::sample_without_replacement(eng, recipients, n_move)) out.set_action(h, i, 1);
    }
    return out;
}

TrajectorySet generate_expert_set(const TrajectorySet& trajs, const Directive& d, const RmabInstance& instance,
                                  int replicas, std::uint64_t seed) {
    if (replicas < 1) throw ParameterError("replicas must be >= 1");
    const Directive bound = bind(d, instance);
    TrajectorySet out;
    out.reserve(trajs.size() * replicas);
    for (std::size_t t = 0; t < trajs.size(); ++t) {
        for (int r = 0; r < replicas; ++r) {
            out.push_back(apply_directive(trajs[t], bound, instance, {seed, t, static_cast<std::uint64_t>(r)}));
        }
    }
    return out;
}

int count_moves(const Trajectory& before, const Trajectory& after) {
    int moves = 0;
    for (int h = 0; h < before.horizon(); ++h)
        for (int i = 0; i < before.n_arms(); ++i)
            if (before.action(h, i) == 1 && after.action(h, i) == 0) ++moves;
    return moves;
}

}  // namespace rmabirl
