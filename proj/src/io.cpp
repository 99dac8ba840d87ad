#include "rmabirl/io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <tuple>

#include "rmabirl/error.hpp"

namespace rmabirl::io {

using nlohmann::json;

std::vector<std::vector<std::string>> parse_csv(std::string_view text) {
    std::vector<std::vector<std::string>> rows;
    std::vector<std::string> row;
    std::string field;
    bool quoted = false;
    bool any = false;
    auto end_row = [&] {
        if (any || !field.empty() || !row.empty()) {
            row.push_back(std::move(field));
            rows.push_back(std::move(row));
        }
        row.clear();
        field.clear();
        any = false;
    };
    for (std::size_t k = 0; k < text.size(); ++k) {
        const char c = text[k];
        if (quoted) {
            if (c == '"') {
                if (k + 1 < text.size() && text[k + 1] == '"') {
                    field += '"';
                    ++k;
                } else {
                    quoted = false;
                }
            } else {
                field += c;
            }
        } else if (c == '"') {
            quoted = true;
            any = true;
        } else if (c == ',') {
            row.push_back(std::move(field));
            field.clear();
            any = true;
        } else if (c == '\n') {
            end_row();
        } else if (c != '\r') {
            field += c;
        }
    }
    end_row();
    return rows;
}

std::string format_double(double x) {
    if (std::isnan(x)) return "nan";
    if (std::isinf(x)) return x > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, x);
    return std::string(buf, res.ptr);
}

std::string read_text(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParameterError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text(const fs::path& path, std::string_view text) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ParameterError("cannot write " + path.string());
        out << text;
        if (!out) throw ParameterError("write failed for " + path.string());
    }
    fs::rename(tmp, path);
}

json read_json(const fs::path& path) {
    try {
        return json::parse(read_text(path));
    } catch (const json::parse_error& e) {
        throw ValidationError(std::string("invalid JSON: ") + e.what(), path.filename().string());
    }
}

namespace {

std::string trim(std::string s) {
    const auto b = s.find_first_not_of(" \t");
    if (b == std::string::npos) return {};
    const auto e = s.find_last_not_of(" \t");
    return s.substr(b, e - b + 1);
}

std::optional<long long> to_int(const std::string& s) {
    long long v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

std::optional<double> to_real(const std::string& s) {
    double v = 0;
    const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
    if (res.ec != std::errc() || res.ptr != s.data() + s.size() || s.empty()) return std::nullopt;
    return v;
}

/// Maps header names to column indices and checks required columns.
struct Header {
    std::map<std::string, std::size_t> index;

    Header(const std::vector<std::string>& names, const std::string& file) {
        for (std::size_t k = 0; k < names.size(); ++k) {
            if (!index.emplace(trim(names[k]), k).second)
                throw ValidationError("duplicate column '" + trim(names[k]) + "'", file);
        }
    }
    bool has(const std::string& name) const { return index.count(name) > 0; }
    std::size_t at(const std::string& name, const std::string& file) const {
        const auto it = index.find(name);
        if (it == index.end()) throw ValidationError("missing column '" + name + "'", file);
        return it->second;
    }
};

long long int_field(const std::vector<std::string>& row, std::size_t col, const std::string& file, std::size_t line) {
    const auto v = col < row.size() ? to_int(trim(row[col])) : std::nullopt;
    if (!v) throw ValidationError("expected an integer in column " + std::to_string(col + 1), file + ":" + std::to_string(line));
    return *v;
}

double real_field(const std::vector<std::string>& row, std::size_t col, const std::string& file, std::size_t line) {
    const auto v = col < row.size() ? to_real(trim(row[col])) : std::nullopt;
    if (!v) throw ValidationError("expected a number in column " + std::to_string(col + 1), file + ":" + std::to_string(line));
    return *v;
}

template <class T>
T get_field(const json& config, const char* key) {
    const auto it = config.find(key);
    if (it == config.end()) throw ValidationError(std::string("missing '") + key + "'", "instance.json");
    try {
        return it->get<T>();
    } catch (const json::exception&) {
        throw ValidationError(std::string("bad value for '") + key + "'", std::string("instance.json.") + key);
    }
}

}  // namespace

// ---------------------------------------------------------------------------

FeatureTable parse_features(std::string_view csv, int n_arms) {
    const std::string file = "features.csv";
    const auto rows = parse_csv(csv);
    if (rows.empty()) throw ValidationError("empty file", file);
    const Header header(rows[0], file);
    const std::size_t arm_col = header.at("arm_id", file);
    std::vector<std::string> names;
    std::vector<std::size_t> cols;
    for (std::size_t k = 0; k < rows[0].size(); ++k) {
        if (k == arm_col) continue;
        names.push_back(trim(rows[0][k]));
        cols.push_back(k);
    }
    const auto n_rows = static_cast<int>(rows.size()) - 1;
    if (n_rows != n_arms) {
        throw ValidationError("has " + std::to_string(n_rows) + " rows for " + std::to_string(n_arms) + " arms", file);
    }
    std::vector<std::vector<std::string>> raw(n_arms);
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto arm = int_field(rows[r], arm_col, file, r + 1);
        if (arm < 0 || arm >= n_arms) throw ValidationError("arm_id out of range", file + ":" + std::to_string(r + 1));
        if (!raw[arm].empty()) throw ValidationError("duplicate arm_id " + std::to_string(arm), file);
        if (rows[r].size() != rows[0].size())
            throw ValidationError("row has " + std::to_string(rows[r].size()) + " fields", file + ":" + std::to_string(r + 1));
        for (auto c : cols) raw[arm].push_back(trim(rows[r][c]));
    }
    std::vector<std::vector<FeatureValue>> values(n_arms, std::vector<FeatureValue>(names.size()));
    for (std::size_t c = 0; c < names.size(); ++c) {
        bool all_bool = true, all_int = true, all_real = true;
        for (int i = 0; i < n_arms; ++i) {
            const auto& s = raw[i][c];
            all_bool &= s == "true" || s == "false";
            all_int &= to_int(s).has_value();
            all_real &= to_real(s).has_value();
        }
        for (int i = 0; i < n_arms; ++i) {
            const auto& s = raw[i][c];
            if (all_bool) values[i][c] = s == "true";
            else if (all_int) values[i][c] = static_cast<std::int64_t>(*to_int(s));
            else if (all_real) values[i][c] = *to_real(s);
            else values[i][c] = s;
        }
    }
    return FeatureTable(std::move(names), std::move(values));
}

RmabInstance parse_instance(const json& config, std::string_view transitions, const std::optional<std::string>& features) {
    if (!config.is_object()) throw ValidationError("must be a JSON object", "instance.json");
    RmabInstance inst;
    inst.n_arms = get_field<int>(config, "n_arms");
    inst.n_states = get_field<int>(config, "n_states");
    inst.budget = get_field<int>(config, "budget");
    inst.horizon = get_field<int>(config, "horizon");
    inst.discount = get_field<double>(config, "discount");
    if (config.contains("seed") && !config["seed"].is_null()) inst.seed = get_field<std::uint64_t>(config, "seed");
    if (config.contains("risk_thresholds")) {
        const auto& t = config["risk_thresholds"];
        inst.risk_thresholds.education = t.value("education", inst.risk_thresholds.education);
        inst.risk_thresholds.income = t.value("income", inst.risk_thresholds.income);
    }
    if (inst.n_arms < 1 || inst.n_states < 1) throw ValidationError("n_arms and n_states must be positive", "instance.json");

    const std::string file = "transitions.csv";
    const int n = inst.n_arms, m = inst.n_states;
    inst.transitions.assign(n, ArmTransitions{{Eigen::MatrixXd::Zero(m, m), Eigen::MatrixXd::Zero(m, m)}});
    const auto rows = parse_csv(transitions);
    if (rows.empty()) throw ValidationError("empty file", file);
    const Header h(rows[0], file);
    const auto c_arm = h.at("arm_id", file), c_s = h.at("s", file), c_a = h.at("a", file),
               c_next = h.at("s_next", file), c_p = h.at("prob", file);
    std::set<std::tuple<long long, long long, long long, long long>> seen;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto arm = int_field(rows[r], c_arm, file, r + 1);
        const auto s = int_field(rows[r], c_s, file, r + 1);
        const auto a = int_field(rows[r], c_a, file, r + 1);
        const auto s2 = int_field(rows[r], c_next, file, r + 1);
        const double p = real_field(rows[r], c_p, file, r + 1);
        const std::string where = file + ":" + std::to_string(r + 1);
        if (arm < 0 || arm >= n || s < 0 || s >= m || s2 < 0 || s2 >= m || (a != 0 && a != 1))
            throw ValidationError("index out of range", where);
        if (!(p >= 0.0 && p <= 1.0)) throw ValidationError("probability outside [0, 1]", where);
        if (!seen.emplace(arm, s, a, s2).second) throw ValidationError("duplicate entry", where);
        inst.transitions[arm].p[a](s, s2) = p;
    }
    validate(inst, 1e-6);
    normalize_rows(inst.transitions);
    if (features) inst.features = parse_features(*features, n);
    validate(inst);
    return inst;
}

RmabInstance load_instance(const fs::path& config, const fs::path& transitions, const std::optional<fs::path>& features) {
    std::optional<std::string> feat;
    if (features) feat = read_text(*features);
    return parse_instance(read_json(config), read_text(transitions), feat);
}

RmabInstance load_instance(const fs::path& dir) {
    const fs::path features = dir / "features.csv";
    return load_instance(dir / "instance.json", dir / "transitions.csv",
                         fs::exists(features) ? std::optional<fs::path>(features) : std::nullopt);
}

json instance_config(const RmabInstance& inst) {
    json j = {{"n_arms", inst.n_arms},
              {"n_states", inst.n_states},
              {"budget", inst.budget},
              {"horizon", inst.horizon},
              {"discount", inst.discount},
              {"risk_thresholds",
               {{"education", inst.risk_thresholds.education}, {"income", inst.risk_thresholds.income}}}};
    if (inst.seed) j["seed"] = *inst.seed;
    return j;
}

std::string transitions_csv(const RmabInstance& inst) {
    std::string out = "arm_id,s,a,s_next,prob\n";
    for (int i = 0; i < inst.n_arms; ++i)
        for (int s = 0; s < inst.n_states; ++s)
            for (int a = 0; a < 2; ++a)
                for (int s2 = 0; s2 < inst.n_states; ++s2) {
                    out += std::to_string(i) + ',' + std::to_string(s) + ',' + std::to_string(a) + ',' +
                           std::to_string(s2) + ',' + format_double(inst.transitions[i](s, a, s2)) + '\n';
                }
    return out;
}

namespace {

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string q = "\"";
    for (char c : s) q += c == '"' ? std::string("\"\"") : std::string(1, c);
    return q + '"';
}

}  // namespace

std::string features_csv(const FeatureTable& features) {
    std::string out = "arm_id";
    for (const auto& n : features.names()) out += ',' + csv_field(n);
    out += '\n';
    for (int i = 0; i < features.n_arms(); ++i) {
        out += std::to_string(i);
        for (std::size_t c = 0; c < features.names().size(); ++c) {
            const auto& v = features.at(i, static_cast<int>(c));
            out += ',';
            if (const auto* d = std::get_if<double>(&v)) out += format_double(*d);
            else out += csv_field(to_string(v));
        }
        out += '\n';
    }
    return out;
}

void save_instance(const RmabInstance& instance, const fs::path& dir) {
    write_text(dir / "instance.json", instance_config(instance).dump(2) + "\n");
    write_text(dir / "transitions.csv", transitions_csv(instance));
    if (instance.features) write_text(dir / "features.csv", features_csv(*instance.features));
}

// ---------------------------------------------------------------------------

TrajectorySet parse_trajectories(std::string_view csv, int n_arms) {
    const std::string file = "trajectory.csv";
    const auto rows = parse_csv(csv);
    if (rows.empty()) throw ValidationError("empty file", file);
    const Header h(rows[0], file);
    const bool has_traj = h.has("traj_id");
    const auto c_arm = h.at("arm_id", file), c_t = h.at("timestep", file), c_s = h.at("state", file),
               c_a = h.at("action", file);
    const std::size_t c_traj = has_traj ? h.at("traj_id", file) : 0;

    struct Cell { long long traj, t, arm, s, a; };
    std::vector<Cell> cells;
    std::map<long long, long long> horizon;  // traj -> max timestep + 1
    for (std::size_t r = 1; r < rows.size(); ++r) {
        Cell c{has_traj ? int_field(rows[r], c_traj, file, r + 1) : 0, int_field(rows[r], c_t, file, r + 1),
               int_field(rows[r], c_arm, file, r + 1), int_field(rows[r], c_s, file, r + 1),
               int_field(rows[r], c_a, file, r + 1)};
        const std::string where = file + ":" + std::to_string(r + 1);
        if (c.arm < 0 || c.arm >= n_arms) throw ValidationError("arm_id out of range", where);
        if (c.t < 0) throw ValidationError("negative timestep", where);
        if (c.a != 0 && c.a != 1) throw ValidationError("action must be 0 or 1", where);
        if (c.s < 0) throw ValidationError("negative state", where);
        horizon[c.traj] = std::max(horizon[c.traj], c.t + 1);
        cells.push_back(c);
    }
    std::map<long long, std::size_t> slot;
    TrajectorySet out;
    for (const auto& [id, len] : horizon) {
        slot[id] = out.size();
        out.emplace_back(static_cast<int>(len), n_arms);
    }
    std::vector<std::vector<char>> filled(out.size());
    for (std::size_t k = 0; k < out.size(); ++k)
        filled[k].assign(static_cast<std::size_t>(out[k].horizon()) * n_arms, 0);
    for (const auto& c : cells) {
        const auto k = slot[c.traj];
        auto& f = filled[k][static_cast<std::size_t>(c.t) * n_arms + c.arm];
        if (f) throw IngestionError("duplicate row for trajectory " + std::to_string(c.traj) + ", timestep " +
                                    std::to_string(c.t) + ", arm " + std::to_string(c.arm));
        f = 1;
        out[k].set_state(static_cast<int>(c.t), static_cast<int>(c.arm), static_cast<int>(c.s));
        out[k].set_action(static_cast<int>(c.t), static_cast<int>(c.arm), static_cast<int>(c.a));
    }
    for (std::size_t k = 0; k < out.size(); ++k) {
        const auto it = std::find(filled[k].begin(), filled[k].end(), 0);
        if (it != filled[k].end()) {
            const auto pos = static_cast<int>(it - filled[k].begin());
            throw IngestionError("trajectory " + std::to_string(k) + " lacks timestep " + std::to_string(pos / n_arms) +
                                 " of arm " + std::to_string(pos % n_arms));
        }
    }
    return out;
}

TrajectorySet load_trajectories(const fs::path& path, int n_arms) { return parse_trajectories(read_text(path), n_arms); }

std::string trajectories_csv(const TrajectorySet& trajs) {
    std::string out = "traj_id,arm_id,timestep,state,action\n";
    for (std::size_t k = 0; k < trajs.size(); ++k)
        for (int h = 0; h < trajs[k].horizon(); ++h)
            for (int i = 0; i < trajs[k].n_arms(); ++i) {
                out += std::to_string(k) + ',' + std::to_string(i) + ',' + std::to_string(h) + ',' +
                       std::to_string(trajs[k].state(h, i)) + ',' + std::to_string(trajs[k].action(h, i)) + '\n';
            }
    return out;
}

ListeningLog parse_log(std::string_view csv) {
    const std::string file = "trajectory.csv";
    const auto rows = parse_csv(csv);
    if (rows.empty()) throw ValidationError("empty file", file);
    const Header h(rows[0], file);
    const auto c_arm = h.at("arm_id", file), c_t = h.at("timestep", file), c_s = h.at("state", file),
               c_a = h.at("action", file);
    std::optional<long long> traj;
    ListeningLog log;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        if (h.has("traj_id")) {
            const auto t = int_field(rows[r], h.at("traj_id", file), file, r + 1);
            if (traj && *traj != t) throw IngestionError("transition estimation expects a single trajectory");
            traj = t;
        }
        log.push_back({static_cast<int>(int_field(rows[r], c_arm, file, r + 1)),
                       static_cast<int>(int_field(rows[r], c_t, file, r + 1)),
                       static_cast<int>(int_field(rows[r], c_s, file, r + 1)),
                       static_cast<int>(int_field(rows[r], c_a, file, r + 1))});
    }
    return log;
}

// ---------------------------------------------------------------------------

std::string rewards_csv(const RewardMatrix& rewards) {
    std::string out = "arm_id,state,reward\n";
    for (int i = 0; i < rewards.n_arms(); ++i)
        for (int s = 0; s < rewards.n_states(); ++s)
            out += std::to_string(i) + ',' + std::to_string(s) + ',' + format_double(rewards(i, s)) + '\n';
    return out;
}

RewardMatrix parse_rewards(std::string_view csv, int n_arms, int n_states) {
    const std::string file = "rewards.csv";
    const auto rows = parse_csv(csv);
    if (rows.empty()) throw ValidationError("empty file", file);
    const Header h(rows[0], file);
    const auto c_arm = h.at("arm_id", file), c_s = h.at("state", file), c_r = h.at("reward", file);
    RewardMatrix r = RewardMatrix::zeros(n_arms, n_states);
    Eigen::MatrixXi seen = Eigen::MatrixXi::Zero(n_arms, n_states);
    for (std::size_t k = 1; k < rows.size(); ++k) {
        const auto arm = int_field(rows[k], c_arm, file, k + 1);
        const auto s = int_field(rows[k], c_s, file, k + 1);
        const double v = real_field(rows[k], c_r, file, k + 1);
        const std::string where = file + ":" + std::to_string(k + 1);
        if (arm < 0 || arm >= n_arms || s < 0 || s >= n_states) throw ValidationError("index out of range", where);
        if (!std::isfinite(v)) throw ValidationError("reward must be finite", where);
        if (seen(arm, s)++) throw ValidationError("duplicate entry", where);
        r.values(arm, s) = v;
    }
    if (seen.minCoeff() == 0) throw ValidationError("missing entries (expected every arm and state)", file);
    return r;
}

RewardMatrix load_rewards(const fs::path& path, int n_arms, int n_states) {
    return parse_rewards(read_text(path), n_arms, n_states);
}

std::string trace_csv(const TrainTrace& trace) {
    std::string out = "epoch,eval,grad_norm,step_seconds\n";
    for (const auto& e : trace) {
        out += std::to_string(e.epoch) + ',' + format_double(e.eval) + ',' + format_double(e.grad_norm) + ',' +
               format_double(e.step_seconds) + '\n';
    }
    return out;
}

std::string timings_csv(const std::vector<TimingRow>& rows) {
    std::string out = "method,n,seconds_per_step,status\n";
    for (const auto& r : rows)
        out += r.method + ',' + std::to_string(r.n) + ',' + format_double(r.seconds_per_step) + ',' + r.status + '\n';
    return out;
}

}  // namespace rmabirl::io
