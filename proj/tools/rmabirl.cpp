// Command-line front end. Every subcommand reads and writes the same file
// formats the service persists.

#include <csignal>
#include <iostream>
#include <optional>
#include <sstream>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "rmabirl/error.hpp"
#include "rmabirl/io.hpp"
#include "rmabirl/maxent.hpp"
#include "rmabirl/service.hpp"
#include "rmabirl/simulator.hpp"
#include "rmabirl/workflow.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace rmabirl;

namespace {

void emit(const std::string& text, const std::string& out) {
    if (out.empty() || out == "-") std::cout << text;
    else io::write_text(out, text);
}

TrajectorySet load_observed(const RmabInstance& inst, const std::string& path) {
    TrajectorySet trajs = io::load_trajectories(path, inst.n_arms);
    for (const auto& t : trajs) validate(t, inst.n_states, inst.budget);
    return trajs;
}

GroupBy groupby_or_default(const std::string& spec, const RmabInstance& inst) {
    if (spec.empty()) return workflow::default_groupby(inst);
    if (!spec.empty() && spec.front() == '{') return GroupBy::parse(json::parse(spec));
    return GroupBy::parse(spec);
}

std::vector<int> parse_int_list(const std::string& s) {
    std::vector<int> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ',')) {
        if (item.empty()) continue;
        try {
            out.push_back(std::stoi(item));
        } catch (const std::exception&) {
            throw ParameterError("not an integer list: " + s);
        }
    }
    return out;
}

service::Service* g_service = nullptr;

void on_signal(int) {
    if (g_service) g_service->stop();
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Reward learning for restless bandits from aggregate directives"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "Generate a synthetic instance and observed trajectories");
    int s_n = 2, s_m = 2, s_k = 1, s_h = 3, s_runs = 5, s_weeks = 1;
    double s_gamma = 0.99, s_eps = 0.01;
    std::uint64_t s_seed = 0;
    bool s_mch = false;
    std::string s_out = "instance";
    // --h is the horizon here, so help is long-form only.
    synth->set_help_flag("--help", "Print this help message and exit");
    synth->add_option("--n", s_n, "Number of arms");
    synth->add_option("--m", s_m, "Number of states (ignored with --mch)");
    synth->add_option("--k", s_k, "Budget");
    synth->add_option("--h", s_h, "Horizon");
    synth->add_option("--gamma", s_gamma, "Discount");
    synth->add_option("--runs", s_runs, "Observed trajectories to simulate");
    synth->add_option("--epsilon", s_eps, "Exploration rate of the simulated policy");
    synth->add_flag("--mch", s_mch, "Maternal-health-like instance with beneficiary features");
    synth->add_option("--weeks", s_weeks, "Listening history length for --mch (2^weeks states)");
    synth->add_option("--seed", s_seed, "Random seed");
    synth->add_option("--out", s_out, "Output directory");

    // ingest
    auto* ingest = app.add_subcommand("ingest", "Estimate transitions from a listening log");
    std::string i_traj, i_features, i_out = "instance";
    int i_states = 2, i_budget = 1, i_horizon = 10;
    double i_discount = 0.99, i_smoothing = 1.0;
    std::optional<double> i_max_listen;
    ingest->add_option("--trajectory", i_traj, "trajectory.csv log")->required();
    ingest->add_option("--features", i_features, "features.csv");
    ingest->add_option("--n-states", i_states, "Number of states");
    ingest->add_option("--budget", i_budget, "Budget K");
    ingest->add_option("--horizon", i_horizon, "Planning horizon");
    ingest->add_option("--discount", i_discount, "Discount");
    ingest->add_option("--smoothing", i_smoothing, "Additive smoothing of transition counts");
    ingest->add_option("--max-listen-rate", i_max_listen, "Write eligible.csv with arms listening less often than this");
    ingest->add_option("--out", i_out, "Output directory");

    // stats
    auto* stats = app.add_subcommand("stats", "Aggregate action and state statistics of observed trajectories");
    std::string st_inst, st_traj, st_group, st_out;
    stats->add_option("--instance", st_inst, "Instance directory")->required();
    stats->add_option("--trajectory", st_traj, "trajectory.csv")->required();
    stats->add_option("--groupby", st_group, "risk, state, a feature name, or predicate JSON");
    stats->add_option("--out", st_out, "Output file (default stdout)");

    // edit
    auto* edit = app.add_subcommand("edit", "Turn a directive into expert trajectories");
    std::string e_inst, e_traj, e_dir, e_out = "expert.csv", e_preview, e_group;
    int e_replicas = 1;
    std::uint64_t e_seed = 0;
    edit->add_option("--instance", e_inst, "Instance directory")->required();
    edit->add_option("--trajectory", e_traj, "Observed trajectory.csv")->required();
    edit->add_option("--directive", e_dir, "directive.json")->required();
    edit->add_option("--replicas", e_replicas, "Edits per observed trajectory");
    edit->add_option("--seed", e_seed, "Random seed");
    edit->add_option("--groupby", e_group, "Grouping of the preview");
    edit->add_option("--out", e_out, "Expert trajectory CSV");
    edit->add_option("--preview", e_preview, "Preview JSON (default stdout)");

    // train
    auto* train = app.add_subcommand("train", "Fit rewards to expert trajectories");
    std::string t_inst, t_expert, t_out = "rewards.csv", t_trace;
    std::optional<int> t_epochs;
    std::optional<double> t_lr, t_eps, t_gamma;
    std::optional<std::uint64_t> t_seed;
    train->add_option("--instance", t_inst, "Instance directory")->required();
    train->add_option("--expert", t_expert, "Expert trajectory CSV")->required();
    train->add_option("--epochs", t_epochs, "Epochs (default 30)");
    train->add_option("--lr", t_lr, "Learning rate (default 0.01)");
    train->add_option("--epsilon", t_eps, "Soft top-k temperature (default 0.01)");
    train->add_option("--gamma", t_gamma, "Discount (default 0.99)");
    train->add_option("--seed", t_seed, "Random seed");
    train->add_option("--out", t_out, "rewards.csv");
    train->add_option("--trace", t_trace, "trace.csv");

    // metric
    auto* metric = app.add_subcommand("metric", "Soft-k L1 distance between the policies of two reward files");
    std::string m_inst, m_expert, m_learned, m_traj;
    double m_eps = 0.01;
    int m_runs = 5;
    std::uint64_t m_seed = 0;
    metric->add_option("--instance", m_inst, "Instance directory")->required();
    metric->add_option("--expert-rewards", m_expert, "Reference rewards.csv")->required();
    metric->add_option("--learned-rewards", m_learned, "Learned rewards.csv")->required();
    metric->add_option("--trajectory", m_traj, "States to evaluate at (simulated under the reference when absent)");
    metric->add_option("--epsilon", m_eps, "Soft top-k temperature");
    metric->add_option("--runs", m_runs, "Simulated trajectories when --trajectory is absent");
    metric->add_option("--seed", m_seed, "Random seed");

    // whatif
    auto* whatif = app.add_subcommand("whatif", "Simulate baseline and candidate rewards side by side");
    std::string w_inst, w_traj, w_base, w_cand, w_group, w_out, w_csv, w_mode;
    std::optional<int> w_runs, w_horizon;
    std::optional<double> w_eps;
    std::optional<std::uint64_t> w_seed;
    whatif->add_option("--instance", w_inst, "Instance directory")->required();
    whatif->add_option("--trajectory", w_traj, "Observed trajectory.csv (rollouts start at its final states)");
    whatif->add_option("--baseline", w_base, "Baseline rewards.csv (default: listening reward)");
    whatif->add_option("--candidate", w_cand, "Candidate rewards.csv")->required();
    whatif->add_option("--groupby", w_group, "risk, state, a feature name, or predicate JSON");
    whatif->add_option("--runs", w_runs, "Rollouts (default 60)");
    whatif->add_option("--horizon", w_horizon, "Rollout length (default 10)");
    whatif->add_option("--epsilon", w_eps, "Probability of a uniformly random K-subset (default 0.01)");
    whatif->add_option("--mode", w_mode, "epsilon_perturbed or hard");
    whatif->add_option("--seed", w_seed, "Random seed");
    whatif->add_option("--out", w_out, "report.json (default stdout)");
    whatif->add_option("--csv-dir", w_csv, "Directory for plot-data CSVs");

    // bench
    auto* bench = app.add_subcommand("bench", "Per-gradient-step timings of the learner and the joint-MDP baseline");
    std::string b_n = "2,4,6", b_out = "timings.csv";
    int b_m = 2, b_k = 1, b_repeats = 3;
    long b_cap = 4096;
    std::uint64_t b_seed = 0;
    bench->add_option("--n", b_n, "Comma-separated arm counts");
    bench->add_option("--m", b_m, "States per arm");
    bench->add_option("--k", b_k, "Budget");
    bench->add_option("--cap", b_cap, "Joint-state cap of the baseline");
    bench->add_option("--repeats", b_repeats, "Steps averaged per timing");
    bench->add_option("--seed", b_seed, "Random seed");
    bench->add_option("--out", b_out, "timings.csv");

    // serve
    auto* serve = app.add_subcommand("serve", "Run the HTTP service");
    auto env = service::config_from_env();
    serve->add_option("--port", env.port, "Port (RMABIRL_PORT)");
    serve->add_option("--data-dir", env.data_dir, "Session store (RMABIRL_DATA_DIR)");
    serve->add_option("--host", env.host, "Bind address");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) {
            RmabInstance inst;
            RewardMatrix truth;
            if (s_mch) {
                MchConfig cfg;
                cfg.n_arms = s_n;
                cfg.budget = s_k;
                cfg.horizon = s_h;
                cfg.discount = s_gamma;
                cfg.history_weeks = s_weeks;
                cfg.seed = s_seed;
                inst = synth_mch_instance(cfg);
                truth = RewardMatrix::listening(inst.n_arms, inst.n_states);
            } else {
                inst = synth_instance(s_n, s_m, s_k, s_h, s_gamma, s_seed);
                truth = random_rewards(s_n, s_m, s_seed + 1);
            }
            RolloutConfig rc;
            rc.horizon = s_h;
            rc.runs = s_runs;
            rc.epsilon = s_eps;
            rc.seed = s_seed + 2;
            const auto trajs = simulate(inst, truth, rc);
            io::save_instance(inst, s_out);
            io::write_text(fs::path(s_out) / "true_rewards.csv", io::rewards_csv(truth));
            io::write_text(fs::path(s_out) / "trajectory.csv", io::trajectories_csv(trajs));
            std::cout << "wrote " << s_out << " (" << inst.n_arms << " arms, " << inst.n_states << " states, "
                      << trajs.size() << " trajectories)\n";
        } else if (*ingest) {
            const auto log = io::parse_log(io::read_text(i_traj));
            int n_arms = 0;
            for (const auto& e : log) n_arms = std::max(n_arms, e.arm + 1);
            RmabInstance inst;
            inst.n_arms = n_arms;
            inst.n_states = i_states;
            inst.budget = i_budget;
            inst.horizon = i_horizon;
            inst.discount = i_discount;
            inst.transitions = estimate_transitions(log, n_arms, i_states, i_smoothing);
            if (!i_features.empty()) inst.features = io::parse_features(io::read_text(i_features), n_arms);
            validate(inst);
            io::save_instance(inst, i_out);
            const auto trajs = io::parse_trajectories(io::read_text(i_traj), n_arms);
            io::write_text(fs::path(i_out) / "trajectory.csv", io::trajectories_csv(trajs));
            if (i_max_listen) {
                std::string csv = "arm_id\n";
                for (int a : eligible_arms(log, n_arms, *i_max_listen)) csv += std::to_string(a) + "\n";
                io::write_text(fs::path(i_out) / "eligible.csv", csv);
            }
            std::cout << "wrote " << i_out << " (" << n_arms << " arms)\n";
        } else if (*stats) {
            const auto inst = io::load_instance(st_inst);
            const auto trajs = load_observed(inst, st_traj);
            emit(stats_json(inst, trajs, groupby_or_default(st_group, inst)).dump(2) + "\n", st_out);
        } else if (*edit) {
            const auto inst = io::load_instance(e_inst);
            const auto trajs = load_observed(inst, e_traj);
            const auto expert = workflow::make_expert_set(inst, trajs, io::read_json(e_dir), e_replicas, e_seed,
                                                          groupby_or_default(e_group, inst));
            io::write_text(e_out, io::trajectories_csv(expert.trajectories));
            emit(expert.preview.dump(2) + "\n", e_preview);
        } else if (*train) {
            const auto inst = io::load_instance(t_inst);
            const auto expert = load_observed(inst, t_expert);
            json cfg = json::object();
            if (t_epochs) cfg["epochs"] = *t_epochs;
            if (t_lr) cfg["learning_rate"] = *t_lr;
            if (t_eps) cfg["epsilon"] = *t_eps;
            if (t_gamma) cfg["discount"] = *t_gamma;
            if (t_seed) cfg["seed"] = *t_seed;
            const auto result = train_whirl(inst, expert, workflow::train_config_from_json(cfg), [](const TraceEntry& e) {
                std::cerr << "epoch " << e.epoch << " eval " << e.eval << " |grad| " << e.grad_norm << "\n";
            });
            io::write_text(t_out, io::rewards_csv(result.rewards));
            if (!t_trace.empty()) io::write_text(t_trace, io::trace_csv(result.trace));
        } else if (*metric) {
            const auto inst = io::load_instance(m_inst);
            const auto r_e = io::load_rewards(m_expert, inst.n_arms, inst.n_states);
            const auto r_l = io::load_rewards(m_learned, inst.n_arms, inst.n_states);
            TrajectorySet trajs;
            if (!m_traj.empty()) {
                trajs = load_observed(inst, m_traj);
            } else {
                RolloutConfig rc;
                rc.horizon = inst.horizon;
                rc.runs = m_runs;
                rc.seed = m_seed;
                trajs = simulate(inst, r_e, rc);
            }
            std::cout << io::format_double(soft_k_l1(inst, r_e, r_l, trajs, m_eps)) << "\n";
        } else if (*whatif) {
            const auto inst = io::load_instance(w_inst);
            TrajectorySet observed;
            if (!w_traj.empty()) observed = load_observed(inst, w_traj);
            const auto base = w_base.empty() ? workflow::default_baseline(inst)
                                             : io::load_rewards(w_base, inst.n_arms, inst.n_states);
            const auto cand = io::load_rewards(w_cand, inst.n_arms, inst.n_states);
            json rollout = json::object();
            if (w_runs) rollout["runs"] = *w_runs;
            if (w_horizon) rollout["horizon"] = *w_horizon;
            if (w_eps) rollout["epsilon"] = *w_eps;
            if (w_seed) rollout["seed"] = *w_seed;
            if (!w_mode.empty()) rollout["mode"] = w_mode;
            const json report =
                workflow::whatif(inst, observed, base, cand, groupby_or_default(w_group, inst), rollout);
            emit(report.dump(2) + "\n", w_out);
            if (!w_csv.empty()) {
                std::string cats = "name,actions_baseline,actions_candidate,visits_baseline,visits_candidate,"
                                   "listen_rate_baseline,listen_rate_candidate\n";
                for (const auto& c : report["categories"]) {
                    cats += c["name"].get<std::string>();
                    for (const char* key : {"actions_baseline", "actions_candidate", "visits_baseline",
                                            "visits_candidate", "listen_rate_baseline", "listen_rate_candidate"})
                        cats += "," + io::format_double(c[key].get<double>());
                    cats += "\n";
                }
                io::write_text(fs::path(w_csv) / "categories.csv", cats);
                std::string hist = "lo,hi,baseline,candidate\n";
                for (const auto& b : report["ever_called_histogram"]) {
                    hist += io::format_double(b["lo"].get<double>()) + "," + io::format_double(b["hi"].get<double>()) +
                            "," + std::to_string(b["baseline"].get<long>()) + "," +
                            std::to_string(b["candidate"].get<long>()) + "\n";
                }
                io::write_text(fs::path(w_csv) / "ever_called_histogram.csv", hist);
                std::string arms = "arm_id,baseline,candidate\n";
                const auto& eb = report["ever_called_baseline"];
                const auto& ec = report["ever_called_candidate"];
                for (std::size_t i = 0; i < eb.size(); ++i) {
                    arms += std::to_string(i) + "," + io::format_double(eb[i].get<double>()) + "," +
                            io::format_double(ec[i].get<double>()) + "\n";
                }
                io::write_text(fs::path(w_csv) / "ever_called.csv", arms);
            }
        } else if (*bench) {
            const auto rows = runtime_probe(parse_int_list(b_n), b_m, b_k, b_seed, b_cap, b_repeats);
            io::write_text(b_out, io::timings_csv(rows));
            std::cout << io::timings_csv(rows);
        } else if (*serve) {
            service::Service svc(env.data_dir);
            const int port = svc.bind(env.host, env.port);
            g_service = &svc;
            std::signal(SIGINT, on_signal);
            std::signal(SIGTERM, on_signal);
            std::cerr << "listening on http://" << env.host << ":" << port << " (data in " << env.data_dir << ")\n";
            svc.listen();
            g_service = nullptr;
        }
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
