#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmabirl/rmab.hpp"

namespace rmabirl {

enum class CompareOp { Lt, Le, Eq, Ne, Ge, Gt, In };
enum class DerivedQuantity { RiskScore, TransitionGap };

struct Predicate;

struct AllOf {
    std::vector<Predicate> terms;
};
struct AnyOf {
    std::vector<Predicate> terms;
};
struct Negation {
    std::shared_ptr<const Predicate> term;
};
/// feature op value; `values` holds one entry except for CompareOp::In.
struct FeatureAtom {
    std::string feature;
    CompareOp op = CompareOp::Eq;
    std::vector<FeatureValue> values;
};
struct StateIn {
    std::vector<int> states;
};
/// Inclusive range of 0-based timesteps.
struct TimeIn {
    int first = 0;
    int last = 0;
};
struct DerivedAtom {
    DerivedQuantity quantity = DerivedQuantity::RiskScore;
    CompareOp op = CompareOp::Ge;
    std::vector<double> values;
    /// Threshold is the population median, filled in by bind().
    bool median = false;
};

struct Predicate {
    std::variant<AllOf, AnyOf, Negation, FeatureAtom, StateIn, TimeIn, DerivedAtom> node;
};

/// Move interventions from arms matching `source` to arms matching `target`.
struct Directive {
    Predicate source;
    Predicate target;
    std::optional<int> max_moves_per_timestep;
};

/// Parses a predicate tree. Errors are ValidationErrors carrying the JSON
/// path of the offending node (e.g. "source.and[1].op").
Predicate parse_predicate(const nlohmann::json& j, const std::string& path = "predicate");
nlohmann::json to_json(const Predicate& p);

Directive parse_directive(const nlohmann::json& j);
nlohmann::json to_json(const Directive& d);

/// Checks feature names and state sets against the instance and resolves
/// median thresholds. Throws PredicateError.
Directive bind(const Directive& d, const RmabInstance& instance);
Predicate bind(const Predicate& p, const RmabInstance& instance);

/// Evaluates `pred` for `arm` at timestep `h` of `traj`.
bool eval_predicate(const Predicate& pred, int arm, int h, const Trajectory& traj, const RmabInstance& instance);

/// Identifies the random stream of one edit.
struct EditStream {
    std::uint64_t seed = 0;
    std::uint64_t trajectory = 0;
    std::uint64_t replica = 0;
};

/// Reassigns actions at every timestep: min(|C_A|, |C_B|, cap) donors drawn
/// uniformly from the acted-on source arms lose their action, and as many
/// recipients drawn uniformly from the idle target arms gain one.
Trajectory apply_directive(const Trajectory& traj, const Directive& d, const RmabInstance& instance,
                           const EditStream& stream);

/// Each input trajectory edited `replicas` times with independent streams;
/// output is ordered trajectory-major.
TrajectorySet generate_expert_set(const TrajectorySet& trajs, const Directive& d, const RmabInstance& instance,
                                  int replicas, std::uint64_t seed);

/// Number of actions that moved between two versions of a trajectory.
int count_moves(const Trajectory& before, const Trajectory& after);

}  // namespace rmabirl
