#include "rmabirl/workflow.hpp"

#include <set>

#include "rmabirl/error.hpp"

namespace rmabirl::workflow {

using nlohmann::json;

namespace {

void check_keys(const json& j, const std::set<std::string>& allowed, const std::string& path) {
    if (!j.is_object()) throw ValidationError("must be an object", path);
    for (const auto& [key, _] : j.items()) {
        if (!allowed.count(key)) throw ValidationError("unknown key '" + key + "'", path);
    }
}

template <class T>
void read(const json& j, const char* key, T& out, const std::string& path) {
    const auto it = j.find(key);
    if (it == j.end() || it->is_null()) return;
    try {
        out = it->get<T>();
    } catch (const json::exception&) {
        throw ValidationError("bad value", path + "." + key);
    }
}

}  // namespace

TrainConfig train_config_from_json(const json& j) {
    TrainConfig cfg;
    if (j.is_null()) return cfg;
    const std::string path = "config";
    check_keys(j, {"epochs", "learning_rate", "epsilon", "discount", "beta1", "beta2", "adam_epsilon", "seed"}, path);
    read(j, "epochs", cfg.epochs, path);
    read(j, "learning_rate", cfg.learning_rate, path);
    read(j, "epsilon", cfg.epsilon, path);
    if (j.contains("discount")) {
        if (j["discount"].is_null()) cfg.discount.reset();
        else cfg.discount = j["discount"].get<double>();
    }
    read(j, "beta1", cfg.beta1, path);
    read(j, "beta2", cfg.beta2, path);
    read(j, "adam_epsilon", cfg.adam_epsilon, path);
    read(j, "seed", cfg.seed, path);
    if (cfg.epochs < 0) throw ValidationError("must be >= 0", path + ".epochs");
    if (!(cfg.learning_rate > 0.0)) throw ValidationError("must be positive", path + ".learning_rate");
    if (!(cfg.epsilon > 0.0)) throw ValidationError("must be positive", path + ".epsilon");
    if (cfg.discount && !(*cfg.discount >= 0.0 && *cfg.discount < 1.0))
        throw ValidationError("must be in [0, 1)", path + ".discount");
    return cfg;
}

json to_json(const TrainConfig& cfg) {
    return {{"epochs", cfg.epochs},
            {"learning_rate", cfg.learning_rate},
            {"epsilon", cfg.epsilon},
            {"discount", cfg.discount ? json(*cfg.discount) : json(nullptr)},
            {"beta1", cfg.beta1},
            {"beta2", cfg.beta2},
            {"adam_epsilon", cfg.adam_epsilon},
            {"seed", cfg.seed}};
}

RolloutConfig rollout_config_from_json(const json& j) {
    RolloutConfig cfg;
    if (j.is_null()) return cfg;
    const std::string path = "rollout";
    check_keys(j, {"horizon", "runs", "mode", "epsilon", "seed", "initial_states", "discount"}, path);
    read(j, "horizon", cfg.horizon, path);
    read(j, "runs", cfg.runs, path);
    read(j, "epsilon", cfg.epsilon, path);
    read(j, "seed", cfg.seed, path);
    read(j, "initial_states", cfg.initial_states, path);
    if (j.contains("discount") && !j["discount"].is_null()) cfg.discount = j["discount"].get<double>();
    if (j.contains("mode")) {
        const auto mode = j["mode"].is_string() ? j["mode"].get<std::string>() : std::string();
        if (mode == "hard") cfg.mode = PolicyMode::HardTopK;
        else if (mode == "epsilon_perturbed") cfg.mode = PolicyMode::EpsilonPerturbedTopK;
        else throw ValidationError("expected \"hard\" or \"epsilon_perturbed\"", path + ".mode");
    }
    if (cfg.runs < 1) throw ValidationError("must be >= 1", path + ".runs");
    if (cfg.horizon < 1) throw ValidationError("must be >= 1", path + ".horizon");
    if (!(cfg.epsilon >= 0.0 && cfg.epsilon <= 1.0)) throw ValidationError("must be in [0, 1]", path + ".epsilon");
    return cfg;
}

GroupBy default_groupby(const RmabInstance& instance) {
    const auto& f = instance.features;
    if (f && f->has("education_level") && f->has("income") && f->has("phone_ownership")) return GroupBy::parse(std::string("risk"));
    return GroupBy::parse(std::string("state"));
}

RewardMatrix default_baseline(const RmabInstance& instance) {
    return RewardMatrix::listening(instance.n_arms, instance.n_states);
}

std::vector<int> final_observed_states(const TrajectorySet& observed) {
    if (observed.empty()) return {};
    return final_states(observed.back());
}

ExpertSet make_expert_set(const RmabInstance& instance, const TrajectorySet& observed, const json& directive,
                          int replicas, std::uint64_t seed, const GroupBy& groupby) {
    if (replicas < 1) throw ValidationError("must be >= 1", "replicas");
    if (observed.empty()) throw ParameterError("no observed trajectories to edit");
    const Directive d = bind(parse_directive(directive), instance);
    ExpertSet out;
    out.trajectories = generate_expert_set(observed, d, instance, replicas, seed);
    out.preview = directive_preview(instance, observed, out.trajectories, replicas, groupby);
    return out;
}

json directive_preview(const RmabInstance& instance, const TrajectorySet& observed, const TrajectorySet& expert,
                       int replicas, const GroupBy& groupby) {
    const Categorizer cat(groupby, instance);
    const auto n_cat = cat.names().size();
    std::vector<long> before(n_cat, 0), after(n_cat, 0), moved_out(n_cat, 0), moved_in(n_cat, 0);
    long moved = 0;
    for (std::size_t k = 0; k < expert.size(); ++k) {
        const Trajectory& orig = observed[k / replicas];
        const Trajectory& edit = expert[k];
        moved += count_moves(orig, edit);
        for (int h = 0; h < orig.horizon(); ++h)
            for (int i = 0; i < orig.n_arms(); ++i) {
                const int c = cat.category(i, h, orig);
                const int a0 = orig.action(h, i), a1 = edit.action(h, i);
                before[c] += a0;
                after[c] += a1;
                if (a0 == 1 && a1 == 0) ++moved_out[c];
                if (a0 == 0 && a1 == 1) ++moved_in[c];
            }
    }
    const double denom = expert.empty() ? 1.0 : static_cast<double>(expert.size());
    json cats = json::array();
    for (std::size_t c = 0; c < n_cat; ++c) {
        cats.push_back({{"name", cat.names()[c]},
                        {"actions_before", before[c] / denom},
                        {"actions_after", after[c] / denom},
                        {"moved_out", moved_out[c] / denom},
                        {"moved_in", moved_in[c] / denom}});
    }
    return {{"groupby", groupby.label()},
            {"trajectories", expert.size()},
            {"replicas", replicas},
            {"moved", moved / denom},
            {"moved_total", moved},
            {"categories", cats}};
}

json whatif(const RmabInstance& instance, const TrajectorySet& observed, const RewardMatrix& baseline,
            const RewardMatrix& candidate, const GroupBy& groupby, const json& rollout) {
    RolloutConfig cfg = rollout_config_from_json(rollout);
    if (cfg.initial_states.empty()) cfg.initial_states = final_observed_states(observed);
    return to_json(whatif_report(instance, baseline, candidate, groupby, cfg));
}

}  // namespace rmabirl::workflow
