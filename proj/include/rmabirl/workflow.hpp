#pragma once

#include <cstdint>
#include <string>

#include <nlohmann/json.hpp>

#include "rmabirl/directive.hpp"
#include "rmabirl/irl.hpp"
#include "rmabirl/rmab.hpp"
#include "rmabirl/simulator.hpp"

// Steps shared by the CLI and the HTTP service. Both surfaces translate
// their inputs into the JSON accepted here, so identical inputs give
// identical outputs.
namespace rmabirl::workflow {

/// Keys: epochs, learning_rate, epsilon, discount, beta1, beta2, adam_epsilon, seed.
/// Unknown keys are rejected with a ValidationError.
TrainConfig train_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& cfg);

/// Keys: horizon, runs, mode ("epsilon_perturbed" | "hard"), epsilon, seed, initial_states, discount.
RolloutConfig rollout_config_from_json(const nlohmann::json& j);

/// "risk" when the instance carries the features the risk score needs, else "state".
GroupBy default_groupby(const RmabInstance& instance);

/// Baseline rewards for what-if comparisons when none are supplied.
RewardMatrix default_baseline(const RmabInstance& instance);

/// Final observed state of every arm (from the last trajectory), the
/// starting point of what-if rollouts.
std::vector<int> final_observed_states(const TrajectorySet& observed);

struct ExpertSet {
    TrajectorySet trajectories;
    nlohmann::json preview;
};

/// Parses and binds the directive, edits every observed trajectory
/// `replicas` times and summarizes the moved actions per category.
ExpertSet make_expert_set(const RmabInstance& instance, const TrajectorySet& observed,
                          const nlohmann::json& directive, int replicas, std::uint64_t seed,
                          const GroupBy& groupby);

/// Mean per-trajectory moved actions overall and per category.
nlohmann::json directive_preview(const RmabInstance& instance, const TrajectorySet& observed,
                                 const TrajectorySet& expert, int replicas, const GroupBy& groupby);

/// What-if rollouts starting from the final observed states unless the
/// rollout JSON names initial states.
nlohmann::json whatif(const RmabInstance& instance, const TrajectorySet& observed, const RewardMatrix& baseline,
                      const RewardMatrix& candidate, const GroupBy& groupby, const nlohmann::json& rollout);

}  // namespace rmabirl::workflow
