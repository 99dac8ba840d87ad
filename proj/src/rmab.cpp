#include "rmabirl/rmab.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "rmabirl/error.hpp"
#include "rmabirl/rng.hpp"

namespace rmabirl {

ArmTransitions ArmTransitions::uniform(int n_states) {
    ArmTransitions t;
    for (auto& p : t.p) p = Eigen::MatrixXd::Constant(n_states, n_states, 1.0 / n_states);
    return t;
}

std::string to_string(const FeatureValue& v) {
    return std::visit(
        [](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, bool>) {
                return x ? "true" : "false";
            } else if constexpr (std::is_same_v<T, std::string>) {
                return x;
            } else {
                std::ostringstream os;
                os.precision(17);
                os << x;
                return os.str();
            }
        },
        v);
}

double as_number(const FeatureValue& v) {
    if (const auto* b = std::get_if<bool>(&v)) return *b ? 1.0 : 0.0;
    if (const auto* i = std::get_if<std::int64_t>(&v)) return static_cast<double>(*i);
    if (const auto* d = std::get_if<double>(&v)) return *d;
    throw FeatureError("feature value '" + std::get<std::string>(v) + "' is not numeric");
}

FeatureTable::FeatureTable(std::vector<std::string> names, std::vector<std::vector<FeatureValue>> rows)
    : names_(std::move(names)), rows_(std::move(rows)) {
    std::set<std::string> seen;
    for (const auto& n : names_) {
        if (!seen.insert(n).second) throw ValidationError("duplicate feature name '" + n + "'");
    }
    for (std::size_t i = 0; i < rows_.size(); ++i) {
        if (rows_[i].size() != names_.size()) {
            throw ValidationError("feature row " + std::to_string(i) + " has " + std::to_string(rows_[i].size()) +
                                  " values, expected " + std::to_string(names_.size()));
        }
    }
}

std::optional<int> FeatureTable::column(std::string_view name) const {
    const auto it = std::find(names_.begin(), names_.end(), name);
    if (it == names_.end()) return std::nullopt;
    return static_cast<int>(it - names_.begin());
}

const FeatureValue& FeatureTable::at(int arm, std::string_view name) const {
    const auto c = column(name);
    if (!c) throw FeatureError("unknown feature '" + std::string(name) + "'");
    return rows_.at(arm).at(*c);
}

FeatureRecord FeatureTable::record(int arm) const {
    FeatureRecord r;
    for (std::size_t c = 0; c < names_.size(); ++c) r.emplace(names_[c], rows_.at(arm)[c]);
    return r;
}

void validate(const RmabInstance& instance, double tol) {
    if (instance.n_arms < 1) throw ValidationError("n_arms must be positive");
    if (instance.n_states < 1) throw ValidationError("n_states must be positive");
    if (instance.budget < 1 || instance.budget > instance.n_arms) {
        throw ValidationError("budget must satisfy 0 < K <= N (K=" + std::to_string(instance.budget) + ")");
    }
    if (instance.horizon < 1) throw ValidationError("horizon must be >= 1");
    if (!(instance.discount > 0.0 && instance.discount <= 1.0)) throw ValidationError("discount must be in (0, 1]");
    if (static_cast<int>(instance.transitions.size()) != instance.n_arms) {
        throw ValidationError("expected transitions for " + std::to_string(instance.n_arms) + " arms, got " +
                              std::to_string(instance.transitions.size()));
    }
    const int m = instance.n_states;
    for (int i = 0; i < instance.n_arms; ++i) {
        for (int a = 0; a < 2; ++a) {
            const auto& p = instance.transitions[i].p[a];
            if (p.rows() != m || p.cols() != m) {
                throw ValidationError("arm " + std::to_string(i) + " action " + std::to_string(a) +
                                      ": transition matrix is not " + std::to_string(m) + "x" + std::to_string(m));
            }
            for (int s = 0; s < m; ++s) {
                const std::string where =
                    "arm " + std::to_string(i) + " state " + std::to_string(s) + " action " + std::to_string(a);
                for (int s2 = 0; s2 < m; ++s2) {
                    const double v = p(s, s2);
                    if (!std::isfinite(v) || v < -tol || v > 1.0 + tol) {
                        throw ValidationError(where + ": probability out of [0, 1]");
                    }
                }
                const double sum = p.row(s).sum();
                if (std::abs(sum - 1.0) > tol) {
                    std::ostringstream os;
                    os.precision(12);
                    os << where << ": row sums to " << sum;
                    throw ValidationError(os.str());
                }
            }
        }
    }
    if (instance.features && instance.features->n_arms() != instance.n_arms) {
        throw ValidationError("features file has " + std::to_string(instance.features->n_arms()) + " rows for " +
                              std::to_string(instance.n_arms) + " arms");
    }
}

void normalize_rows(std::vector<ArmTransitions>& transitions) {
    for (auto& arm : transitions) {
        for (auto& p : arm.p) {
            p = p.cwiseMax(0.0);
            for (Eigen::Index s = 0; s < p.rows(); ++s) {
                const double sum = p.row(s).sum();
                if (sum > 0) p.row(s) /= sum;
            }
        }
    }
}

RewardMatrix RewardMatrix::zeros(int n_arms, int n_states) {
    return {Eigen::MatrixXd::Zero(n_arms, n_states)};
}

RewardMatrix RewardMatrix::listening(int n_arms, int n_states) {
    RewardMatrix r = zeros(n_arms, n_states);
    for (int s = 0; s < n_states; ++s) {
        if (is_listening_state(s)) r.values.col(s).setOnes();
    }
    return r;
}

int Trajectory::pulls_at(int h) const {
    int n = 0;
    for (auto a : actions_at(h)) n += a;
    return n;
}

void validate(const Trajectory& traj, int n_states, int budget) {
    for (int h = 0; h < traj.horizon(); ++h) {
        for (int i = 0; i < traj.n_arms(); ++i) {
            const int s = traj.state(h, i);
            if (s < 0 || s >= n_states) {
                throw ValidationError("state " + std::to_string(s) + " of arm " + std::to_string(i) + " at timestep " +
                                      std::to_string(h) + " is out of range");
            }
            const int a = traj.action(h, i);
            if (a != 0 && a != 1) throw ValidationError("action must be 0 or 1");
        }
        if (traj.pulls_at(h) > budget) {
            throw ValidationError("timestep " + std::to_string(h) + " uses " + std::to_string(traj.pulls_at(h)) +
                                  " pulls with budget " + std::to_string(budget));
        }
    }
}

// ---------------------------------------------------------------------------

namespace {

Eigen::VectorXd dirichlet_row(rng::Engine& eng, int m) {
    Eigen::VectorXd row(m);
    for (int j = 0; j < m; ++j) row[j] = -std::log1p(-rng::unit(eng)) + 1e-12;
    return row / row.sum();
}

// Moves a fraction `lambda` of the mass at each state one step up.
Eigen::VectorXd shift_up(const Eigen::VectorXd& row, double lambda) {
    const auto m = row.size();
    Eigen::VectorXd out = row;
    for (Eigen::Index j = 0; j + 1 < m; ++j) {
        const double moved = lambda * row[j];
        out[j] -= moved;
        out[j + 1] += moved;
    }
    return out;
}

void check_dims(int n, int m, int k, int h, double gamma) {
    if (n < 2) throw ParameterError("need at least 2 arms");
    if (m < 2) throw ParameterError("need at least 2 states");
    if (k < 1 || k > n) throw ParameterError("budget must satisfy 0 < k <= n");
    if (h < 1) throw ParameterError("horizon must be >= 1");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ParameterError("discount must be in (0, 1]");
}

}  // namespace

RmabInstance synth_instance(int n, int m, int k, int h, double gamma, std::uint64_t seed) {
    check_dims(n, m, k, h, gamma);
    RmabInstance inst;
    inst.n_arms = n;
    inst.n_states = m;
    inst.budget = k;
    inst.horizon = h;
    inst.discount = gamma;
    inst.seed = seed;
    inst.transitions.resize(n);
    for (int i = 0; i < n; ++i) {
        auto eng = rng::stream(seed, {0x7472616eULL, static_cast<std::uint64_t>(i)});
        auto& arm = inst.transitions[i];
        arm.p[kPassive].resize(m, m);
        arm.p[kActive].resize(m, m);
        for (int s = 0; s < m; ++s) {
            const Eigen::VectorXd passive = dirichlet_row(eng, m);
            const double lambda = 0.1 + 0.8 * rng::unit(eng);
            arm.p[kPassive].row(s) = passive.transpose();
            arm.p[kActive].row(s) = shift_up(passive, lambda).transpose();
        }
    }
    normalize_rows(inst.transitions);
    return inst;
}

RewardMatrix random_rewards(int n_arms, int n_states, std::uint64_t seed) {
    RewardMatrix r = RewardMatrix::zeros(n_arms, n_states);
    auto eng = rng::stream(seed, {0x72657761ULL});
    for (int i = 0; i < n_arms; ++i)
        for (int s = 0; s < n_states; ++s) r.values(i, s) = rng::unit(eng);
    return r;
}

FeatureTable synth_features(int n_arms, std::uint64_t seed, const FeatureMarginals& mg) {
    if (mg.languages.empty() || mg.languages.size() != mg.language_weights.size()) {
        throw ParameterError("language marginals must be non-empty and match their weights");
    }
    std::vector<std::string> names = {"income", "education_level", "phone_ownership", "language", "gestational_age"};
    std::vector<std::vector<FeatureValue>> rows;
    rows.reserve(n_arms);
    double wsum = 0;
    for (double w : mg.language_weights) wsum += w;
    for (int i = 0; i < n_arms; ++i) {
        auto eng = rng::stream(seed, {0x66656174ULL, static_cast<std::uint64_t>(i)});
        const auto income = static_cast<std::int64_t>(1 + rng::below(eng, mg.income_levels));
        const auto education = static_cast<std::int64_t>(1 + rng::below(eng, mg.education_levels));
        const bool phone = rng::unit(eng) < mg.phone_ownership;
        double u = rng::unit(eng) * wsum;
        std::size_t lang = 0;
        while (lang + 1 < mg.languages.size() && u >= mg.language_weights[lang]) u -= mg.language_weights[lang++];
        const auto ga = static_cast<std::int64_t>(
            mg.min_gestational_age + rng::below(eng, mg.max_gestational_age - mg.min_gestational_age + 1));
        rows.push_back({income, education, phone, mg.languages[lang], ga});
    }
    return FeatureTable(std::move(names), std::move(rows));
}

RmabInstance synth_mch_instance(const MchConfig& cfg) {
    if (cfg.history_weeks < 1 || cfg.history_weeks > 10) throw ParameterError("history_weeks must be in 1..10");
    const int m = 1 << cfg.history_weeks;
    check_dims(cfg.n_arms, m, cfg.budget, cfg.horizon, cfg.discount);
    RmabInstance inst;
    inst.n_arms = cfg.n_arms;
    inst.n_states = m;
    inst.budget = cfg.budget;
    inst.horizon = cfg.horizon;
    inst.discount = cfg.discount;
    inst.seed = cfg.seed;
    inst.risk_thresholds = cfg.thresholds;
    inst.features = synth_features(cfg.n_arms, cfg.seed, cfg.marginals);
    inst.transitions.resize(cfg.n_arms);
    for (int i = 0; i < cfg.n_arms; ++i) {
        auto eng = rng::stream(cfg.seed, {0x6d6368ULL, static_cast<std::uint64_t>(i)});
        // P(listen next week | last week's bit), passive
        const std::array<double, 2> passive = {0.05 + 0.35 * rng::unit(eng), 0.5 + 0.45 * rng::unit(eng)};
        const double gain = 0.1 + 0.5 * rng::unit(eng);
        auto& arm = inst.transitions[i];
        for (int a = 0; a < 2; ++a) arm.p[a] = Eigen::MatrixXd::Zero(m, m);
        for (int s = 0; s < m; ++s) {
            const double q0 = passive[s & 1];
            const double q1 = q0 + gain * (1.0 - q0);
            const int shifted = (s << 1) & (m - 1);
            arm.p[kPassive](s, shifted) = 1.0 - q0;
            arm.p[kPassive](s, shifted | 1) = q0;
            arm.p[kActive](s, shifted) = 1.0 - q1;
            arm.p[kActive](s, shifted | 1) = q1;
        }
    }
    return inst;
}

// ---------------------------------------------------------------------------

ListeningLog to_log(const Trajectory& traj) {
    ListeningLog log;
    log.reserve(static_cast<std::size_t>(traj.horizon()) * traj.n_arms());
    for (int i = 0; i < traj.n_arms(); ++i)
        for (int h = 0; h < traj.horizon(); ++h) log.push_back({i, h, traj.state(h, i), traj.action(h, i)});
    return log;
}

namespace {

std::vector<std::vector<LogEntry>> group_by_arm(const ListeningLog& log, int n_arms, int n_states) {
    std::vector<std::vector<LogEntry>> per_arm(n_arms);
    for (const auto& e : log) {
        if (e.arm < 0 || e.arm >= n_arms) throw IngestionError("arm id " + std::to_string(e.arm) + " out of range");
        if (e.state < 0 || e.state >= n_states) {
            throw IngestionError("state " + std::to_string(e.state) + " out of range for arm " + std::to_string(e.arm));
        }
        if (e.action != 0 && e.action != 1) throw IngestionError("action must be 0 or 1");
        per_arm[e.arm].push_back(e);
    }
    for (auto& entries : per_arm) {
        std::sort(entries.begin(), entries.end(),
                  [](const LogEntry& a, const LogEntry& b) { return a.timestep < b.timestep; });
        for (std::size_t k = 1; k < entries.size(); ++k) {
            if (entries[k].timestep != entries[k - 1].timestep + 1) {
                throw IngestionError("arm " + std::to_string(entries[k].arm) + ": timestep " +
                                     std::to_string(entries[k].timestep) + " does not follow " +
                                     std::to_string(entries[k - 1].timestep));
            }
        }
    }
    return per_arm;
}

}  // namespace

std::vector<ArmTransitions> estimate_transitions(const ListeningLog& log, int n_arms, int n_states,
                                                 double smoothing) {
    if (n_arms < 1 || n_states < 1) throw ParameterError("n_arms and n_states must be positive");
    if (!(smoothing >= 0.0)) throw ParameterError("smoothing must be >= 0");
    const auto per_arm = group_by_arm(log, n_arms, n_states);
    std::vector<ArmTransitions> out(n_arms);
    for (int i = 0; i < n_arms; ++i) {
        std::array<Eigen::MatrixXd, 2> counts = {Eigen::MatrixXd::Zero(n_states, n_states),
                                                 Eigen::MatrixXd::Zero(n_states, n_states)};
        const auto& entries = per_arm[i];
        for (std::size_t k = 0; k + 1 < entries.size(); ++k) {
            counts[entries[k].action](entries[k].state, entries[k + 1].state) += 1.0;
        }
        for (int a = 0; a < 2; ++a) {
            auto& p = out[i].p[a];
            p.resize(n_states, n_states);
            for (int s = 0; s < n_states; ++s) {
                const double total = counts[a].row(s).sum();
                if (total == 0.0 && smoothing == 0.0) {
                    p.row(s).setConstant(1.0 / n_states);
                } else {
                    p.row(s) = (counts[a].row(s).array() + smoothing) / (total + n_states * smoothing);
                }
            }
        }
    }
    return out;
}

std::vector<int> eligible_arms(const ListeningLog& log, int n_arms, double max_listen_rate) {
    std::vector<int> listened(n_arms, 0), seen(n_arms, 0);
    for (const auto& e : log) {
        if (e.arm < 0 || e.arm >= n_arms) throw IngestionError("arm id " + std::to_string(e.arm) + " out of range");
        ++seen[e.arm];
        if (is_listening_state(e.state)) ++listened[e.arm];
    }
    std::vector<int> keep;
    for (int i = 0; i < n_arms; ++i) {
        if (seen[i] == 0 || static_cast<double>(listened[i]) / seen[i] < max_listen_rate) keep.push_back(i);
    }
    return keep;
}

// ---------------------------------------------------------------------------

int risk_score(const FeatureRecord& record, const RiskThresholds& thresholds) {
    auto get = [&](std::string_view name) -> const FeatureValue& {
        const auto it = record.find(name);
        if (it == record.end()) throw FeatureError("missing feature '" + std::string(name) + "'");
        return it->second;
    };
    int score = 0;
    if (as_number(get("education_level")) < thresholds.education) ++score;
    if (as_number(get("income")) < thresholds.income) ++score;
    if (as_number(get("phone_ownership")) == 0.0) ++score;
    return score;
}

int risk_score(const FeatureTable& table, int arm, const RiskThresholds& thresholds) {
    int score = 0;
    if (as_number(table.at(arm, "education_level")) < thresholds.education) ++score;
    if (as_number(table.at(arm, "income")) < thresholds.income) ++score;
    if (as_number(table.at(arm, "phone_ownership")) == 0.0) ++score;
    return score;
}

double transition_gap(const ArmTransitions& arm) {
    if (arm.n_states() < 2) throw ParameterError("transition gap needs at least 2 states");
    return arm(0, kActive, 1) - arm(0, kPassive, 1);
}

}  // namespace rmabirl
