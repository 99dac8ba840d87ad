#include "rmabirl/service.hpp"

#include <cstdlib>
#include <iostream>
#include <optional>
#include <shared_mutex>

#include "rmabirl/error.hpp"
#include "rmabirl/io.hpp"
#include "rmabirl/workflow.hpp"

// After Eigen: resolv.h, pulled in by httplib, defines a macro named _res.
#include <httplib.h>

namespace rmabirl::service {

using nlohmann::json;

ServiceConfig config_from_env() {
    ServiceConfig cfg;
    if (const char* p = std::getenv("RMABIRL_PORT")) {
        try {
            cfg.port = std::stoi(p);
        } catch (const std::exception&) {
            throw ParameterError(std::string("RMABIRL_PORT is not a port number: ") + p);
        }
    }
    if (const char* d = std::getenv("RMABIRL_DATA_DIR")) cfg.data_dir = d;
    return cfg;
}

struct Job {
    std::string id;
    std::string expert_set;
    std::string status = "queued";  // queued | running | done | failed
    json config;
    TrainTrace trace;
    std::string error;
    std::optional<std::string> candidate;
};

struct Session {
    std::string id;
    fs::path dir;
    RmabInstance instance;
    TrajectorySet observed;
    RewardMatrix baseline;
    std::map<std::string, TrajectorySet> expert_sets;
    std::map<std::string, json> expert_meta;
    std::map<std::string, Job> jobs;
    std::map<std::string, RewardMatrix> candidates;
    std::optional<std::string> approved;
    int next_expert = 1;
    int next_job = 1;
    int next_candidate = 1;
    bool training = false;
    // Single writer, concurrent readers.
    std::shared_mutex mu;
};

namespace {

json job_json(const Job& job) {
    json trace = json::array();
    for (const auto& e : job.trace)
        trace.push_back({{"epoch", e.epoch}, {"eval", e.eval}, {"grad_norm", e.grad_norm}, {"step_seconds", e.step_seconds}});
    json j = {{"job_id", job.id},
              {"expert_set_id", job.expert_set},
              {"status", job.status},
              {"config", job.config},
              {"trace", trace},
              {"candidate_id", job.candidate ? json(*job.candidate) : json(nullptr)}};
    if (!job.error.empty()) j["error"] = job.error;
    return j;
}

Job job_from_json(const json& j) {
    Job job;
    job.id = j.at("job_id").get<std::string>();
    job.expert_set = j.at("expert_set_id").get<std::string>();
    job.status = j.at("status").get<std::string>();
    job.config = j.value("config", json::object());
    for (const auto& e : j.at("trace"))
        job.trace.push_back({e.at("epoch").get<int>(), e.at("eval").get<double>(), e.at("grad_norm").get<double>(),
                             e.at("step_seconds").get<double>()});
    job.error = j.value("error", "");
    if (j.contains("candidate_id") && !j["candidate_id"].is_null()) job.candidate = j["candidate_id"].get<std::string>();
    return job;
}

// Callers hold the session lock.
void save_manifest(const Session& s) {
    const json m = {{"session_id", s.id},
                    {"approved", s.approved ? json(*s.approved) : json(nullptr)},
                    {"next_expert", s.next_expert},
                    {"next_job", s.next_job},
                    {"next_candidate", s.next_candidate}};
    io::write_text(s.dir / "manifest.json", m.dump(2) + "\n");
}

void save_job(const Session& s, const Job& job) {
    io::write_text(s.dir / "jobs" / (job.id + ".json"), job_json(job).dump(2) + "\n");
}

int id_number(const std::string& id) {
    try {
        return std::stoi(id.substr(1));
    } catch (const std::exception&) {
        return 0;
    }
}

std::string body_string(const json& body, const char* key) {
    const auto it = body.find(key);
    if (it == body.end() || !it->is_string()) throw ValidationError("expected a string", key);
    return it->get<std::string>();
}

GroupBy groupby_from(const json& j, const RmabInstance& instance) {
    if (j.is_null()) return workflow::default_groupby(instance);
    try {
        return GroupBy::parse(j);
    } catch (const ValidationError&) {
        throw;
    } catch (const Error& e) {
        throw ValidationError(e.what(), "groupby");
    }
}

}  // namespace

Service::Service(fs::path data_dir) : data_dir_(std::move(data_dir)), server_(std::make_unique<httplib::Server>()) {
    fs::create_directories(data_dir_);
    load_sessions();
    routes();
}

Service::~Service() {
    stop();
    stopping_ = true;
    for (auto& t : workers_)
        if (t.joinable()) t.join();
}

void Service::load_sessions() {
    for (const auto& entry : fs::directory_iterator(data_dir_)) {
        const fs::path dir = entry.path();
        if (!entry.is_directory() || !fs::exists(dir / "manifest.json")) continue;
        try {
            auto s = std::make_shared<Session>();
            const json m = io::read_json(dir / "manifest.json");
            s->id = m.at("session_id").get<std::string>();
            s->dir = dir;
            s->instance = io::load_instance(dir);
            if (fs::exists(dir / "trajectory.csv")) s->observed = io::load_trajectories(dir / "trajectory.csv", s->instance.n_arms);
            s->baseline = io::load_rewards(dir / "baseline_rewards.csv", s->instance.n_arms, s->instance.n_states);
            s->next_expert = m.value("next_expert", 1);
            s->next_job = m.value("next_job", 1);
            s->next_candidate = m.value("next_candidate", 1);
            if (!m["approved"].is_null()) s->approved = m["approved"].get<std::string>();
            if (fs::exists(dir / "expert_sets")) {
                for (const auto& f : fs::directory_iterator(dir / "expert_sets")) {
                    if (f.path().extension() != ".csv") continue;
                    const std::string eid = f.path().stem().string();
                    s->expert_sets[eid] = io::load_trajectories(f.path(), s->instance.n_arms);
                    const fs::path meta = dir / "expert_sets" / (eid + ".json");
                    s->expert_meta[eid] = fs::exists(meta) ? io::read_json(meta) : json::object();
                }
            }
            if (fs::exists(dir / "candidates")) {
                for (const auto& f : fs::directory_iterator(dir / "candidates")) {
                    if (f.path().extension() != ".csv") continue;
                    s->candidates[f.path().stem().string()] =
                        io::load_rewards(f.path(), s->instance.n_arms, s->instance.n_states);
                }
            }
            if (fs::exists(dir / "jobs")) {
                for (const auto& f : fs::directory_iterator(dir / "jobs")) {
                    if (f.path().extension() != ".json") continue;
                    Job job = job_from_json(io::read_json(f.path()));
                    if (job.status == "queued" || job.status == "running") {
                        job.status = "failed";
                        job.error = "interrupted by a service restart";
                        save_job(*s, job);
                    }
                    s->jobs[job.id] = std::move(job);
                }
            }
            next_session_ = std::max(next_session_, id_number(s->id) + 1);
            sessions_[s->id] = std::move(s);
        } catch (const std::exception& e) {
            std::cerr << "warning: skipping session directory " << dir << ": " << e.what() << "\n";
        }
    }
}

std::shared_ptr<Session> Service::find(const std::string& id) {
    std::lock_guard lock(mu_);
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) throw NotFoundError("unknown session '" + id + "'");
    return it->second;
}

json Service::create_session(const json& body) {
    if (!body.is_object()) throw ValidationError("request body must be a JSON object");
    if (!body.contains("instance")) throw ValidationError("missing 'instance'", "instance");
    std::optional<std::string> features;
    if (body.contains("features_csv") && !body["features_csv"].is_null()) features = body_string(body, "features_csv");
    auto s = std::make_shared<Session>();
    s->instance = io::parse_instance(body["instance"], body_string(body, "transitions_csv"), features);
    if (body.contains("trajectory_csv") && !body["trajectory_csv"].is_null()) {
        s->observed = io::parse_trajectories(body_string(body, "trajectory_csv"), s->instance.n_arms);
        for (const auto& t : s->observed) validate(t, s->instance.n_states, s->instance.budget);
    }
    if (body.contains("baseline_rewards_csv") && !body["baseline_rewards_csv"].is_null()) {
        s->baseline = io::parse_rewards(body_string(body, "baseline_rewards_csv"), s->instance.n_arms, s->instance.n_states);
    } else {
        s->baseline = workflow::default_baseline(s->instance);
    }
    {
        std::lock_guard lock(mu_);
        s->id = "s" + std::to_string(next_session_++);
        s->dir = data_dir_ / s->id;
        sessions_[s->id] = s;
    }
    std::unique_lock lock(s->mu);
    io::save_instance(s->instance, s->dir);
    if (!s->observed.empty()) io::write_text(s->dir / "trajectory.csv", io::trajectories_csv(s->observed));
    io::write_text(s->dir / "baseline_rewards.csv", io::rewards_csv(s->baseline));
    save_manifest(*s);
    return {{"session_id", s->id},
            {"n_arms", s->instance.n_arms},
            {"n_states", s->instance.n_states},
            {"budget", s->instance.budget},
            {"trajectories", s->observed.size()}};
}

json Service::session_info(const std::string& id) {
    auto s = find(id);
    std::shared_lock lock(s->mu);
    json experts = json::array(), jobs = json::array(), candidates = json::array();
    for (const auto& [eid, _] : s->expert_sets) experts.push_back(eid);
    for (const auto& [jid, job] : s->jobs) jobs.push_back({{"job_id", jid}, {"status", job.status}});
    for (const auto& [cid, _] : s->candidates) candidates.push_back(cid);
    json config = io::instance_config(s->instance);
    return {{"session_id", s->id},
            {"instance", config},
            {"features", s->instance.features ? json(s->instance.features->names()) : json::array()},
            {"trajectories", s->observed.size()},
            {"expert_sets", experts},
            {"jobs", jobs},
            {"candidates", candidates},
            {"approved", s->approved ? json(*s->approved) : json(nullptr)}};
}

json Service::stats(const std::string& id, const std::string& groupby) {
    auto s = find(id);
    std::shared_lock lock(s->mu);
    const GroupBy g = groupby.empty() ? workflow::default_groupby(s->instance) : groupby_from(json(groupby), s->instance);
    return stats_json(s->instance, s->observed, g);
}

json Service::add_directive(const std::string& id, const json& body) {
    auto s = find(id);
    if (!body.is_object()) throw ValidationError("request body must be a JSON object");
    if (!body.contains("directive")) throw ValidationError("missing 'directive'", "directive");
    const int replicas = body.value("replicas", 1);
    const auto seed = body.value("seed", std::uint64_t{0});
    workflow::ExpertSet expert;
    {
        std::shared_lock lock(s->mu);
        const GroupBy g = groupby_from(body.value("groupby", json()), s->instance);
        expert = workflow::make_expert_set(s->instance, s->observed, body["directive"], replicas, seed, g);
    }
    std::unique_lock lock(s->mu);
    const std::string eid = "e" + std::to_string(s->next_expert++);
    const json meta = {{"directive", to_json(parse_directive(body["directive"]))},
                       {"replicas", replicas},
                       {"seed", seed},
                       {"preview", expert.preview}};
    io::write_text(s->dir / "expert_sets" / (eid + ".csv"), io::trajectories_csv(expert.trajectories));
    io::write_text(s->dir / "expert_sets" / (eid + ".json"), meta.dump(2) + "\n");
    s->expert_sets[eid] = std::move(expert.trajectories);
    s->expert_meta[eid] = meta;
    save_manifest(*s);
    return {{"expert_set_id", eid}, {"preview", expert.preview}};
}

json Service::start_training(const std::string& id, const json& body) {
    auto s = find(id);
    if (!body.is_object()) throw ValidationError("request body must be a JSON object");
    const std::string eid = body_string(body, "expert_set_id");
    const TrainConfig cfg = workflow::train_config_from_json(body.value("config", json()));
    std::string jid;
    {
        std::unique_lock lock(s->mu);
        if (!s->expert_sets.count(eid)) throw NotFoundError("unknown expert set '" + eid + "'");
        if (s->training) throw ConflictError("a training job is already running for session " + s->id);
        s->training = true;
        Job job;
        job.id = jid = "j" + std::to_string(s->next_job++);
        job.expert_set = eid;
        job.config = workflow::to_json(cfg);
        save_job(*s, job);
        s->jobs[jid] = std::move(job);
        save_manifest(*s);
    }
    {
        std::lock_guard lock(mu_);
        ++active_jobs_;
        workers_.emplace_back([this, s, jid] { run_job(s, jid); });
    }
    return {{"job_id", jid}, {"status", "queued"}};
}

void Service::run_job(std::shared_ptr<Session> s, std::string jid) {
    struct Cancelled {};
    RmabInstance instance;
    TrajectorySet expert;
    TrainConfig cfg;
    {
        std::unique_lock lock(s->mu);
        Job& job = s->jobs.at(jid);
        instance = s->instance;
        expert = s->expert_sets.at(job.expert_set);
        cfg = workflow::train_config_from_json(job.config);
        job.status = "running";
        save_job(*s, job);
    }
    std::string status = "done";
    std::string error;
    std::optional<RewardMatrix> rewards;
    try {
        auto result = train_whirl(instance, expert, cfg, [&](const TraceEntry& e) {
            if (stopping_) throw Cancelled{};
            std::unique_lock lock(s->mu);
            Job& job = s->jobs.at(jid);
            job.trace.push_back(e);
            save_job(*s, job);
        });
        rewards = std::move(result.rewards);
    } catch (const Cancelled&) {
        status = "failed";
        error = "service stopped";
    } catch (const std::exception& e) {
        status = "failed";
        error = e.what();
    }
    {
        std::unique_lock lock(s->mu);
        Job& job = s->jobs.at(jid);
        if (rewards) {
            const std::string cid = "c" + std::to_string(s->next_candidate++);
            io::write_text(s->dir / "candidates" / (cid + ".csv"), io::rewards_csv(*rewards));
            s->candidates[cid] = std::move(*rewards);
            job.candidate = cid;
        }
        job.status = status;
        job.error = error;
        s->training = false;
        save_job(*s, job);
        save_manifest(*s);
    }
    {
        std::lock_guard lock(mu_);
        --active_jobs_;
    }
    jobs_cv_.notify_all();
}

void Service::wait_for_jobs() {
    std::unique_lock lock(mu_);
    jobs_cv_.wait(lock, [&] { return active_jobs_ == 0; });
}

json Service::job(const std::string& id, const std::string& job_id) {
    auto s = find(id);
    std::shared_lock lock(s->mu);
    const auto it = s->jobs.find(job_id);
    if (it == s->jobs.end()) throw NotFoundError("unknown job '" + job_id + "'");
    return job_json(it->second);
}

json Service::whatif(const std::string& id, const json& body) {
    auto s = find(id);
    if (!body.is_object()) throw ValidationError("request body must be a JSON object");
    const std::string cid = body_string(body, "candidate_id");
    json report;
    {
        std::shared_lock lock(s->mu);
        const auto cand = s->candidates.find(cid);
        if (cand == s->candidates.end()) throw NotFoundError("unknown candidate '" + cid + "'");
        const RewardMatrix* baseline = &s->baseline;
        if (body.contains("baseline_id") && !body["baseline_id"].is_null()) {
            const std::string bid = body_string(body, "baseline_id");
            const auto b = s->candidates.find(bid);
            if (b == s->candidates.end()) throw NotFoundError("unknown candidate '" + bid + "'");
            baseline = &b->second;
        }
        const GroupBy g = groupby_from(body.value("groupby", json()), s->instance);
        report = workflow::whatif(s->instance, s->observed, *baseline, cand->second, g, body.value("rollout", json()));
    }
    std::unique_lock lock(s->mu);
    io::write_text(s->dir / "reports" / (cid + ".json"), report.dump(2) + "\n");
    return report;
}

json Service::approve(const std::string& id, const json& body) {
    auto s = find(id);
    if (!body.is_object()) throw ValidationError("request body must be a JSON object");
    const std::string cid = body_string(body, "candidate_id");
    std::unique_lock lock(s->mu);
    if (!s->candidates.count(cid)) throw NotFoundError("unknown candidate '" + cid + "'");
    s->approved = cid;
    save_manifest(*s);
    return {{"approved", cid}};
}

std::string Service::rewards_csv(const std::string& id) {
    auto s = find(id);
    std::shared_lock lock(s->mu);
    if (!s->approved) throw NotFoundError("session " + id + " has no approved rewards");
    return io::rewards_csv(s->candidates.at(*s->approved));
}

std::string Service::candidate_csv(const std::string& id, const std::string& candidate) {
    auto s = find(id);
    std::shared_lock lock(s->mu);
    const auto it = s->candidates.find(candidate);
    if (it == s->candidates.end()) throw NotFoundError("unknown candidate '" + candidate + "'");
    return io::rewards_csv(it->second);
}

std::string Service::expert_set_csv(const std::string& id, const std::string& expert_set) {
    auto s = find(id);
    std::shared_lock lock(s->mu);
    const auto it = s->expert_sets.find(expert_set);
    if (it == s->expert_sets.end()) throw NotFoundError("unknown expert set '" + expert_set + "'");
    return io::trajectories_csv(it->second);
}

// ---------------------------------------------------------------------------
// HTTP

namespace {

void send_json(httplib::Response& res, const json& j, int status = 200) {
    res.status = status;
    res.set_content(j.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& message, const std::string& path = {}) {
    json j = {{"error", message}};
    if (!path.empty()) j["path"] = path;
    send_json(res, j, status);
}

template <class F>
void guarded(httplib::Response& res, F&& f) {
    try {
        f();
    } catch (const ValidationError& e) {
        send_error(res, 400, e.what(), e.path());
    } catch (const NotFoundError& e) {
        send_error(res, 404, e.what());
    } catch (const ConflictError& e) {
        send_error(res, 409, e.what());
    } catch (const json::exception& e) {
        send_error(res, 400, std::string("malformed JSON: ") + e.what());
    } catch (const Error& e) {
        send_error(res, 422, e.what());
    } catch (const std::exception& e) {
        send_error(res, 500, e.what());
    }
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) return json::object();
    return json::parse(req.body);
}

}  // namespace

void Service::routes() {
    auto& svr = *server_;
    svr.Post("/sessions", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, create_session(parse_body(req)), 201); });
    });
    svr.Get(R"(/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, session_info(req.matches[1])); });
    });
    svr.Get(R"(/sessions/([^/]+)/stats)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] {
            send_json(res, stats(req.matches[1], req.has_param("groupby") ? req.get_param_value("groupby") : ""));
        });
    });
    svr.Post(R"(/sessions/([^/]+)/directives)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, add_directive(req.matches[1], parse_body(req)), 201); });
    });
    svr.Get(R"(/sessions/([^/]+)/expert_sets/([^/]+)\.csv)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { res.set_content(expert_set_csv(req.matches[1], req.matches[2]), "text/csv"); });
    });
    svr.Post(R"(/sessions/([^/]+)/train)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, start_training(req.matches[1], parse_body(req)), 202); });
    });
    svr.Get(R"(/sessions/([^/]+)/jobs/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, job(req.matches[1], req.matches[2])); });
    });
    svr.Get(R"(/sessions/([^/]+)/candidates/([^/]+)\.csv)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { res.set_content(candidate_csv(req.matches[1], req.matches[2]), "text/csv"); });
    });
    svr.Post(R"(/sessions/([^/]+)/whatif)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, whatif(req.matches[1], parse_body(req))); });
    });
    svr.Post(R"(/sessions/([^/]+)/approve)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { send_json(res, approve(req.matches[1], parse_body(req))); });
    });
    svr.Get(R"(/sessions/([^/]+)/rewards\.csv)", [this](const httplib::Request& req, httplib::Response& res) {
        guarded(res, [&] { res.set_content(rewards_csv(req.matches[1]), "text/csv"); });
    });
}

int Service::bind(const std::string& host, int port) {
    if (port == 0) return server_->bind_to_any_port(host);
    if (!server_->bind_to_port(host, port)) throw ParameterError("cannot bind " + host + ":" + std::to_string(port));
    return port;
}

void Service::listen() { server_->listen_after_bind(); }

void Service::stop() {
    if (server_ && server_->is_running()) server_->stop();
}

}  // namespace rmabirl::service
