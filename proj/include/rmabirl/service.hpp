#pragma once

#include <atomic>
#include <condition_variable>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

namespace httplib {
class Server;
}

namespace rmabirl::service {

namespace fs = std::filesystem;

struct ServiceConfig {
    fs::path data_dir = "rmabirl-data";
    std::string host = "127.0.0.1";
    int port = 8080;
};

/// Reads RMABIRL_PORT and RMABIRL_DATA_DIR over the defaults.
ServiceConfig config_from_env();

struct Session;

/// Session store plus the HTTP routes over it. Every session lives in its
/// own directory under the data directory and is reloaded on construction.
///
///   POST /sessions                            create from instance files
///   GET  /sessions/{id}                       summary
///   GET  /sessions/{id}/stats?groupby=...     observed statistics
///   POST /sessions/{id}/directives            expert set + preview
///   GET  /sessions/{id}/expert_sets/{e}.csv
///   POST /sessions/{id}/train                 asynchronous training job
///   GET  /sessions/{id}/jobs/{job}            status + trace
///   GET  /sessions/{id}/candidates/{c}.csv
///   POST /sessions/{id}/whatif                what-if report
///   POST /sessions/{id}/approve
///   GET  /sessions/{id}/rewards.csv           approved rewards
class Service {
public:
    explicit Service(fs::path data_dir);
    ~Service();
    Service(const Service&) = delete;
    Service& operator=(const Service&) = delete;

    // Handlers, callable without HTTP. They throw the library's error types.
    nlohmann::json create_session(const nlohmann::json& body);
    nlohmann::json session_info(const std::string& id);
    nlohmann::json stats(const std::string& id, const std::string& groupby);
    nlohmann::json add_directive(const std::string& id, const nlohmann::json& body);
    nlohmann::json start_training(const std::string& id, const nlohmann::json& body);
    nlohmann::json job(const std::string& id, const std::string& job_id);
    nlohmann::json whatif(const std::string& id, const nlohmann::json& body);
    nlohmann::json approve(const std::string& id, const nlohmann::json& body);
    std::string rewards_csv(const std::string& id);
    std::string candidate_csv(const std::string& id, const std::string& candidate);
    std::string expert_set_csv(const std::string& id, const std::string& expert_set);

    /// Blocks until no training job is queued or running.
    void wait_for_jobs();

    /// Binds to `host` (port 0 picks a free port) and returns the port.
    int bind(const std::string& host, int port);
    /// Serves until stop() is called.
    void listen();
    void stop();
    httplib::Server& server() { return *server_; }

private:
    std::shared_ptr<Session> find(const std::string& id);
    void load_sessions();
    void run_job(std::shared_ptr<Session> session, std::string job_id);
    void routes();

    fs::path data_dir_;
    std::mutex mu_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    int next_session_ = 1;
    std::vector<std::thread> workers_;
    std::condition_variable jobs_cv_;
    int active_jobs_ = 0;
    std::atomic<bool> stopping_{false};
    std::unique_ptr<httplib::Server> server_;
};

}  // namespace rmabirl::service
