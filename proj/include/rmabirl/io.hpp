#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "rmabirl/irl.hpp"
#include "rmabirl/maxent.hpp"
#include "rmabirl/rmab.hpp"

namespace rmabirl::io {

namespace fs = std::filesystem;

/// Splits CSV text into rows of fields. Double-quoted fields may contain
/// commas and doubled quotes; blank lines are skipped.
std::vector<std::vector<std::string>> parse_csv(std::string_view text);

/// Shortest decimal string that parses back to the same double.
std::string format_double(double x);

std::string read_text(const fs::path& path);
void write_text(const fs::path& path, std::string_view text);
nlohmann::json read_json(const fs::path& path);

// ---------------------------------------------------------------------------
// Instances

/// Builds an instance from the contents of instance.json, transitions.csv
/// and (optionally) features.csv. Rows summing to 1 within 1e-6 are
/// renormalized; anything worse is a ValidationError naming arm/state/action.
RmabInstance parse_instance(const nlohmann::json& config, std::string_view transitions_csv,
                            const std::optional<std::string>& features_csv = std::nullopt);

/// Reads instance.json, transitions.csv and features.csv (if present) from `dir`.
RmabInstance load_instance(const fs::path& dir);
RmabInstance load_instance(const fs::path& config, const fs::path& transitions,
                           const std::optional<fs::path>& features);

nlohmann::json instance_config(const RmabInstance& instance);
std::string transitions_csv(const RmabInstance& instance);
std::string features_csv(const FeatureTable& features);
/// Writes instance.json, transitions.csv and, when present, features.csv.
void save_instance(const RmabInstance& instance, const fs::path& dir);

/// Column-wise type inference: true/false, then integers, then reals, else strings.
FeatureTable parse_features(std::string_view csv, int n_arms);

// ---------------------------------------------------------------------------
// Trajectories: arm_id,timestep,state,action with an optional leading traj_id.

TrajectorySet parse_trajectories(std::string_view csv, int n_arms);
TrajectorySet load_trajectories(const fs::path& path, int n_arms);
std::string trajectories_csv(const TrajectorySet& trajs);

/// Rows of a single-trajectory file as a log, for transition estimation.
ListeningLog parse_log(std::string_view csv);

// ---------------------------------------------------------------------------
// Rewards, traces, timings

std::string rewards_csv(const RewardMatrix& rewards);
RewardMatrix parse_rewards(std::string_view csv, int n_arms, int n_states);
RewardMatrix load_rewards(const fs::path& path, int n_arms, int n_states);

std::string trace_csv(const TrainTrace& trace);
std::string timings_csv(const std::vector<TimingRow>& rows);

}  // namespace rmabirl::io
