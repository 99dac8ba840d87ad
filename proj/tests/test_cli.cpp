#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>

#include "rmabirl/io.hpp"
#include "rmabirl/service.hpp"

using namespace rmabirl;
using nlohmann::json;
namespace fs = std::filesystem;

static const fs::path kFixtures = RMABIRL_FIXTURES;
static const std::string kCli = RMABIRL_CLI;

namespace {

fs::path fresh_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("rmabirl_cli_" + name);
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

int run(const std::string& args, const fs::path& stdout_file = {}) {
    std::string cmd = kCli + " " + args;
    cmd += stdout_file.empty() ? " > /dev/null" : " > " + stdout_file.string();
    cmd += " 2> /dev/null";
    const int status = std::system(cmd.c_str());
    return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

std::string q(const fs::path& p) { return "'" + p.string() + "'"; }

}  // namespace

TEST_CASE("synth then train produces rewards and a trace") {
    const auto dir = fresh_dir("pipeline");
    REQUIRE(run("synth --n 2 --m 2 --k 1 --h 3 --seed 7 --out " + q(dir / "inst")) == 0);
    CHECK(fs::exists(dir / "inst" / "instance.json"));
    CHECK(fs::exists(dir / "inst" / "transitions.csv"));
    CHECK(fs::exists(dir / "inst" / "trajectory.csv"));
    REQUIRE(run("train --instance " + q(dir / "inst") + " --expert " + q(dir / "inst" / "trajectory.csv") +
                " --epochs 5 --out " + q(dir / "rewards.csv") + " --trace " + q(dir / "trace.csv")) == 0);
    const auto r = io::load_rewards(dir / "rewards.csv", 2, 2);
    CHECK(r.values.allFinite());
    CHECK(io::parse_csv(io::read_text(dir / "trace.csv")).size() == 6);
}

TEST_CASE("metric on identical reward files prints 0") {
    const auto dir = fresh_dir("metric");
    REQUIRE(run("synth --n 3 --m 2 --k 1 --h 3 --seed 2 --out " + q(dir / "inst")) == 0);
    REQUIRE(run("metric --instance " + q(dir / "inst") + " --expert-rewards " + q(dir / "inst" / "true_rewards.csv") +
                    " --learned-rewards " + q(dir / "inst" / "true_rewards.csv") + " --trajectory " +
                    q(dir / "inst" / "trajectory.csv"),
                dir / "out.txt") == 0);
    CHECK(std::stod(io::read_text(dir / "out.txt")) == 0.0);
}

TEST_CASE("bench writes two methods times three sizes") {
    const auto dir = fresh_dir("bench");
    REQUIRE(run("bench --n 2,4,6 --repeats 1 --out " + q(dir / "timings.csv")) == 0);
    const auto rows = io::parse_csv(io::read_text(dir / "timings.csv"));
    REQUIRE(rows.size() == 7);
    CHECK(rows[0] == std::vector<std::string>{"method", "n", "seconds_per_step", "status"});
    int whirl = 0, maxent = 0;
    for (std::size_t i = 1; i < rows.size(); ++i) {
        whirl += rows[i][0] == "whirl";
        maxent += rows[i][0] == "maxent";
    }
    CHECK(whirl == 3);
    CHECK(maxent == 3);
}

TEST_CASE("errors give a nonzero exit status") {
    const auto dir = fresh_dir("errors");
    CHECK(run("train --instance " + q(dir / "missing") + " --expert " + q(dir / "missing.csv")) != 0);
    CHECK(run("stats --instance " + q(kFixtures / "bad") + " --trajectory " +
              q(kFixtures / "three_arm" / "trajectory.csv")) == 2);
    CHECK(run("frobnicate") != 0);
}

TEST_CASE("ingest estimates transitions from a listening log") {
    const auto dir = fresh_dir("ingest");
    io::write_text(dir / "log.csv",
                   "arm_id,timestep,state,action\n"
                   "0,0,0,1\n0,1,1,0\n0,2,1,0\n0,3,0,0\n"
                   "1,0,1,0\n1,1,1,0\n1,2,1,1\n1,3,1,0\n");
    REQUIRE(run("ingest --trajectory " + q(dir / "log.csv") + " --features " + q(kFixtures / "three_arm" / "features.csv") +
                " --n-states 2 --budget 1 --horizon 4 --max-listen-rate 0.9 --out " + q(dir / "inst")) != 0);
    io::write_text(dir / "features.csv", "arm_id,language\n0,Hindi\n1,Marathi\n");
    REQUIRE(run("ingest --trajectory " + q(dir / "log.csv") + " --features " + q(dir / "features.csv") +
                " --n-states 2 --budget 1 --horizon 4 --max-listen-rate 0.9 --out " + q(dir / "inst")) == 0);
    const auto inst = io::load_instance(dir / "inst");
    CHECK(inst.n_arms == 2);
    CHECK(inst.transitions[0](0, 1, 1) > 0.5);
    const auto eligible = io::parse_csv(io::read_text(dir / "inst" / "eligible.csv"));
    CHECK(eligible.size() == 2);  // header + arm 0; arm 1 always listens
}

TEST_CASE("CLI and service agree on a seeded end-to-end run") {
    const auto dir = fresh_dir("parity");
    REQUIRE(run("synth --mch --n 60 --k 6 --h 5 --weeks 2 --seed 4 --out " + q(dir / "inst")) == 0);
    const auto directive = kFixtures / "risk_directive.json";
    REQUIRE(run("edit --instance " + q(dir / "inst") + " --trajectory " + q(dir / "inst" / "trajectory.csv") +
                " --directive " + q(directive) + " --replicas 3 --seed 11 --out " + q(dir / "expert.csv") +
                " --preview " + q(dir / "preview.json")) == 0);
    REQUIRE(run("train --instance " + q(dir / "inst") + " --expert " + q(dir / "expert.csv") +
                " --epochs 4 --lr 0.05 --out " + q(dir / "rewards.csv")) == 0);
    REQUIRE(run("whatif --instance " + q(dir / "inst") + " --trajectory " + q(dir / "inst" / "trajectory.csv") +
                " --candidate " + q(dir / "rewards.csv") + " --groupby risk --runs 8 --horizon 4 --seed 3 --out " +
                q(dir / "report.json") + " --csv-dir " + q(dir / "plots")) == 0);
    CHECK(fs::exists(dir / "plots" / "categories.csv"));
    CHECK(fs::exists(dir / "plots" / "ever_called_histogram.csv"));

    service::Service svc(dir / "store");
    const std::string sid = svc.create_session({{"instance", io::read_json(dir / "inst" / "instance.json")},
                                                {"transitions_csv", io::read_text(dir / "inst" / "transitions.csv")},
                                                {"features_csv", io::read_text(dir / "inst" / "features.csv")},
                                                {"trajectory_csv", io::read_text(dir / "inst" / "trajectory.csv")}})["session_id"];
    const auto d = svc.add_directive(sid, {{"directive", io::read_json(directive)}, {"replicas", 3}, {"seed", 11}});
    CHECK(svc.expert_set_csv(sid, d["expert_set_id"]) == io::read_text(dir / "expert.csv"));
    CHECK(d["preview"] == io::read_json(dir / "preview.json"));

    const auto j = svc.start_training(sid, {{"expert_set_id", d["expert_set_id"]},
                                            {"config", {{"epochs", 4}, {"learning_rate", 0.05}}}});
    svc.wait_for_jobs();
    const auto job = svc.job(sid, j["job_id"]);
    REQUIRE(job["status"] == "done");
    const std::string cid = job["candidate_id"];
    CHECK(svc.candidate_csv(sid, cid) == io::read_text(dir / "rewards.csv"));

    const auto report = svc.whatif(sid, {{"candidate_id", cid},
                                         {"groupby", "risk"},
                                         {"rollout", {{"runs", 8}, {"horizon", 4}, {"seed", 3}}}});
    CHECK(report == io::read_json(dir / "report.json"));
}
