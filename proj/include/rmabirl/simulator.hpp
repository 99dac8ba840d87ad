#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmabirl/directive.hpp"
#include "rmabirl/rmab.hpp"
#include "rmabirl/whittle.hpp"

namespace rmabirl {

enum class PolicyMode { HardTopK, EpsilonPerturbedTopK };

struct RolloutConfig {
    int horizon = 10;
    int runs = 60;
    PolicyMode mode = PolicyMode::EpsilonPerturbedTopK;
    /// Probability of replacing the top-k selection by a uniform K-subset.
    double epsilon = 0.01;
    std::uint64_t seed = 0;
    /// Starting state of every arm; drawn uniformly per run when empty.
    std::vector<int> initial_states;
    /// Discount for the Whittle indices; the instance's when empty.
    std::optional<double> discount;
};

/// One rollout per run. Each step pulls exactly K arms, chosen by Whittle
/// index (ties broken by a fixed per-(timestep, arm) key), then samples
/// next states. Transition draws are keyed by (run, timestep, arm), so two
/// reward matrices simulated with the same seed share random numbers.
TrajectorySet simulate(const RmabInstance& instance, const RewardMatrix& rewards, const RolloutConfig& cfg);
TrajectorySet simulate(const RmabInstance& instance, const WhittleTable& table, const RolloutConfig& cfg);

/// Final state of every arm in a trajectory.
std::vector<int> final_states(const Trajectory& traj);

/// sum_{tau, h} || p(W(expert), s_h) - p(W(learned), s_h) ||_1 / (N J H).
double soft_k_l1(const RmabInstance& instance, const RewardMatrix& r_expert, const RewardMatrix& r_learned,
                 const TrajectorySet& trajs, double epsilon);
double soft_k_l1(const RmabInstance& instance, const WhittleTable& expert, const WhittleTable& learned,
                 const TrajectorySet& trajs, double epsilon);

// ---------------------------------------------------------------------------
// Categories

/// How arms are grouped in statistics and what-if reports.
struct GroupBy {
    enum class Kind { Feature, Risk, State, Predicates };
    Kind kind = Kind::Risk;
    std::string feature;
    std::vector<std::pair<std::string, Predicate>> predicates;

    /// "risk", "state", a feature name, or "feature:<name>".
    static GroupBy parse(const std::string& spec);
    /// A string as above, or {"predicates": [{"name": ..., "predicate": {...}}, ...]}.
    static GroupBy parse(const nlohmann::json& j);
    std::string label() const;
    /// Static groupings assign each arm one category for the whole horizon.
    bool is_static() const { return kind == Kind::Feature || kind == Kind::Risk; }
};

class Categorizer {
public:
    Categorizer(const GroupBy& groupby, const RmabInstance& instance);

    const std::vector<std::string>& names() const { return names_; }
    /// Category of `arm` at timestep h. Throws ReportError when the groupby
    /// does not assign exactly one category.
    int category(int arm, int h, const Trajectory& traj) const;

private:
    GroupBy groupby_;
    const RmabInstance* instance_;
    std::vector<std::string> names_;
    std::vector<int> static_category_;
};

struct CategoryCounts {
    std::string name;
    long actions = 0;
    long occupancy = 0;      // arm-timesteps spent in the category
    long listening = 0;      // arm-timesteps in a listening state
    std::vector<long> state_visits;
};

/// Per-category totals over a trajectory set.
std::vector<CategoryCounts> category_counts(const RmabInstance& instance, const TrajectorySet& trajs,
                                            const Categorizer& categorizer);

/// Observed-behaviour statistics (mean per trajectory).
nlohmann::json stats_json(const RmabInstance& instance, const TrajectorySet& trajs, const GroupBy& groupby);

// ---------------------------------------------------------------------------
// What-if analysis

struct WhatIfCategory {
    std::string name;
    CategoryCounts baseline;
    CategoryCounts candidate;
    /// Arms of this category (static groupings only) never pulled in any run.
    long never_called_baseline = 0;
    long never_called_candidate = 0;
};

struct WhatIfReport {
    std::string groupby;
    bool static_groups = false;
    int runs = 0;
    int horizon = 0;
    std::vector<WhatIfCategory> categories;
    /// Fraction of runs in which each arm was pulled at least once.
    std::vector<double> ever_called_baseline;
    std::vector<double> ever_called_candidate;
};

WhatIfReport whatif_report(const RmabInstance& instance, const RewardMatrix& r_baseline,
                           const RewardMatrix& r_candidate, const GroupBy& groupby, const RolloutConfig& cfg);

/// Mean per run.
inline double per_run(long total, int runs) { return runs > 0 ? static_cast<double>(total) / runs : 0.0; }

/// Number of arms with P(ever called) in each of `bins` equal-width bins of [0, 1].
std::vector<long> histogram(const std::vector<double>& probs, int bins = 10);

nlohmann::json to_json(const WhatIfReport& report);

}  // namespace rmabirl
