#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include <Eigen/Dense>

namespace rmabirl {

inline constexpr int kPassive = 0;
inline constexpr int kActive = 1;

/// Transition kernel of a single arm, p[a](s, s').
struct ArmTransitions {
    std::array<Eigen::MatrixXd, 2> p;

    int n_states() const { return static_cast<int>(p[0].rows()); }
    double operator()(int s, int a, int s_next) const { return p[a](s, s_next); }

    static ArmTransitions uniform(int n_states);
};

using FeatureValue = std::variant<bool, std::int64_t, double, std::string>;
using FeatureRecord = std::map<std::string, FeatureValue, std::less<>>;

std::string to_string(const FeatureValue& v);
/// Numeric view of a feature (bools map to 0/1). Throws FeatureError for strings.
double as_number(const FeatureValue& v);

/// Static per-arm features, one row per arm.
class FeatureTable {
public:
    FeatureTable() = default;
    FeatureTable(std::vector<std::string> names, std::vector<std::vector<FeatureValue>> rows);

    int n_arms() const { return static_cast<int>(rows_.size()); }
    const std::vector<std::string>& names() const { return names_; }
    std::optional<int> column(std::string_view name) const;
    bool has(std::string_view name) const { return column(name).has_value(); }

    const FeatureValue& at(int arm, int column) const { return rows_.at(arm).at(column); }
    /// Throws FeatureError when the feature is not declared.
    const FeatureValue& at(int arm, std::string_view name) const;
    FeatureRecord record(int arm) const;

private:
    std::vector<std::string> names_;
    std::vector<std::vector<FeatureValue>> rows_;
};

struct RiskThresholds {
    double education = 4.0;
    double income = 4.0;
};

struct RmabInstance {
    int n_arms = 0;
    int n_states = 0;
    int budget = 0;
    int horizon = 1;
    double discount = 0.99;
    std::vector<ArmTransitions> transitions;
    std::optional<FeatureTable> features;
    RiskThresholds risk_thresholds;
    std::optional<std::uint64_t> seed;
};

/// Checks dimensions, budget, discount and row-stochasticity within `tol`.
/// Throws ValidationError naming the offending arm/state/action.
void validate(const RmabInstance& instance, double tol = 1e-9);

/// Rescales every transition row to sum to exactly one.
void normalize_rows(std::vector<ArmTransitions>& transitions);

/// Learnable per-arm, per-state rewards.
struct RewardMatrix {
    Eigen::MatrixXd values;

    int n_arms() const { return static_cast<int>(values.rows()); }
    int n_states() const { return static_cast<int>(values.cols()); }
    double operator()(int arm, int state) const { return values(arm, state); }

    static RewardMatrix zeros(int n_arms, int n_states);
    /// The naive engagement reward: 1 in states whose most recent bit is "listened".
    static RewardMatrix listening(int n_arms, int n_states);
};

/// Joint states and actions of all arms over a horizon, stored row-major by timestep.
class Trajectory {
public:
    Trajectory() = default;
    Trajectory(int horizon, int n_arms)
        : horizon_(horizon), n_arms_(n_arms),
          states_(static_cast<std::size_t>(horizon) * n_arms, 0),
          actions_(static_cast<std::size_t>(horizon) * n_arms, 0) {}

    int horizon() const { return horizon_; }
    int n_arms() const { return n_arms_; }

    int state(int h, int arm) const { return states_[index(h, arm)]; }
    void set_state(int h, int arm, int s) { states_[index(h, arm)] = s; }
    int action(int h, int arm) const { return actions_[index(h, arm)]; }
    void set_action(int h, int arm, int a) { actions_[index(h, arm)] = static_cast<std::uint8_t>(a); }

    std::span<const int> states_at(int h) const {
        return {states_.data() + index(h, 0), static_cast<std::size_t>(n_arms_)};
    }
    std::span<const std::uint8_t> actions_at(int h) const {
        return {actions_.data() + index(h, 0), static_cast<std::size_t>(n_arms_)};
    }
    int pulls_at(int h) const;

    bool operator==(const Trajectory&) const = default;

private:
    std::size_t index(int h, int arm) const { return static_cast<std::size_t>(h) * n_arms_ + arm; }

    int horizon_ = 0;
    int n_arms_ = 0;
    std::vector<int> states_;
    std::vector<std::uint8_t> actions_;
};

using TrajectorySet = std::vector<Trajectory>;

/// Throws ValidationError if a state is out of range or a timestep exceeds the budget.
void validate(const Trajectory& traj, int n_states, int budget);

// ---------------------------------------------------------------------------
// Synthetic generation

/// Random instance in which pulling stochastically dominates not pulling:
/// the active next-state CDF lies below the passive one at every state,
/// strictly somewhere (higher state index = better).
RmabInstance synth_instance(int n, int m, int k, int h, double gamma, std::uint64_t seed);

/// Uniform [0, 1) rewards per arm and state.
RewardMatrix random_rewards(int n_arms, int n_states, std::uint64_t seed);

struct FeatureMarginals {
    int income_levels = 8;        // income drawn uniformly from 1..income_levels
    int education_levels = 7;     // education_level drawn uniformly from 1..education_levels
    double phone_ownership = 0.6; // P(owns phone)
    std::vector<std::string> languages = {"Marathi", "Hindi", "Other"};
    std::vector<double> language_weights = {0.5, 0.35, 0.15};
    int min_gestational_age = 5;
    int max_gestational_age = 35;
};

/// Independent draws of income, education_level, phone_ownership, language, gestational_age.
FeatureTable synth_features(int n_arms, std::uint64_t seed, const FeatureMarginals& marginals = {});

struct MchConfig {
    int n_arms = 500;
    int budget = 17;
    int horizon = 10;
    double discount = 0.99;
    /// Listening history length T; the instance has 2^T states and the
    /// least-significant bit is the most recent week.
    int history_weeks = 1;
    std::uint64_t seed = 0;
    FeatureMarginals marginals;
    RiskThresholds thresholds;
};

/// Maternal-health-like instance: sticky listening dynamics, service calls
/// raise the chance of listening next week, synthetic beneficiary features.
RmabInstance synth_mch_instance(const MchConfig& cfg);

// ---------------------------------------------------------------------------
// Ingestion

struct LogEntry {
    int arm = 0;
    int timestep = 0;
    int state = 0;
    int action = 0;
};
using ListeningLog = std::vector<LogEntry>;

ListeningLog to_log(const Trajectory& traj);

/// Per-arm empirical transition counts with additive smoothing. Unobserved
/// (s, a) pairs with zero smoothing fall back to the uniform row.
/// Throws IngestionError when an arm's timesteps are not consecutive.
std::vector<ArmTransitions> estimate_transitions(const ListeningLog& log, int n_arms, int n_states,
                                                 double smoothing = 1.0);

/// Arms whose fraction of timesteps spent in listening states is below
/// `max_listen_rate`. Arms absent from the log are kept.
std::vector<int> eligible_arms(const ListeningLog& log, int n_arms, double max_listen_rate);

/// True when the most recent week of the encoded history is "listened".
inline bool is_listening_state(int s) { return (s & 1) != 0; }

// ---------------------------------------------------------------------------
// Derived features

/// 1{education < thr} + 1{income < thr} + 1{phone_ownership == false}.
int risk_score(const FeatureRecord& record, const RiskThresholds& thresholds);
int risk_score(const FeatureTable& table, int arm, const RiskThresholds& thresholds);

/// P(0 -> 1 | pull) - P(0 -> 1 | no pull).
double transition_gap(const ArmTransitions& arm);

}  // namespace rmabirl
