#include <doctest.h>

#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "test_scenarios.hpp"

using namespace mfs;

namespace {

const std::string kBin = MULTIFID_BIN;

struct CmdResult {
    int exit_code = -1;
    std::string output;
};

CmdResult run_cmd(const std::string& args) {
    const std::string out_file = "/tmp/mfs_cli_out_" + std::to_string(::getpid());
    const int rc = std::system((kBin + " " + args + " > " + out_file + " 2>&1").c_str());
    CmdResult r;
    r.exit_code = WEXITSTATUS(rc);
    std::ifstream in(out_file);
    std::stringstream ss;
    ss << in.rdbuf();
    r.output = ss.str();
    std::remove(out_file.c_str());
    return r;
}

std::string tmp_dir() {
    const std::string d = "/tmp/mfs_cli_" + std::to_string(::getpid());
    if (std::system(("mkdir -p " + d).c_str()) != 0) throw std::runtime_error("mkdir failed");
    return d;
}

}  // namespace

TEST_SUITE("cli") {

TEST_CASE("validate accepts the shipped default scenario") {
    const CmdResult r =
        run_cmd("validate " + std::string(MULTIFID_SOURCE_DIR) + "/data/three_bus.json");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("ok") != std::string::npos);
}

TEST_CASE("validate reports semantic errors with exit code 1") {
    const std::string dir = tmp_dir();
    Scenario sc = default_three_bus_scenario();
    sc.events[0].time = 99.0;  // outside (0, t_end)
    save_scenario(sc, dir + "/late_event.json");
    const CmdResult late = run_cmd("validate " + dir + "/late_event.json");
    CHECK(late.exit_code == 1);
    CHECK(late.output.find("inside (0, t_end)") != std::string::npos);

    Scenario qsp_full = default_three_bus_scenario();
    qsp_full.formulation = Formulation::Qsp;
    save_scenario(qsp_full, dir + "/qsp_full.json");
    const CmdResult qf = run_cmd("validate " + dir + "/qsp_full.json");
    CHECK(qf.exit_code == 1);
    CHECK(qf.output.find("QSP requires the reduced filter") != std::string::npos);
}

TEST_CASE("validate rejects parse garbage") {
    const std::string dir = tmp_dir();
    std::ofstream(dir + "/broken.json") << "{ not json";
    const CmdResult r = run_cmd("validate " + dir + "/broken.json");
    CHECK(r.exit_code == 1);
}

TEST_CASE("run produces csv, sidecar, and honest step counts") {
    const std::string dir = tmp_dir();
    Scenario sc = default_three_bus_scenario();
    sc.t_end = 0.5;
    save_scenario(sc, dir + "/short.json");
    const CmdResult r =
        run_cmd("run " + dir + "/short.json --formulation qsp --out " + dir + "/out");
    CHECK(r.exit_code == 0);
    std::ifstream csv(dir + "/out/three-bus-ring_qsp.csv");
    CHECK(csv.good());
    std::ifstream sj(dir + "/out/three-bus-ring_qsp.stats.json");
    REQUIRE(sj.good());
    nlohmann::json j;
    sj >> j;
    CHECK(j["formulation"] == "qsp");
    CHECK(j["completed"] == true);
    CHECK(j["stats"]["accepted_steps"].get<long>() <= 1000);
}

TEST_CASE("abc run at fixed dt reports the exact arithmetic step count") {
    const std::string dir = tmp_dir();
    Scenario sc = default_three_bus_scenario();
    sc.t_end = 0.1;
    sc.events.clear();
    save_scenario(sc, dir + "/abc_short.json");
    const CmdResult r = run_cmd("run " + dir + "/abc_short.json --formulation abc --dt 5e-6 --out " +
                                dir + "/out");
    CHECK(r.exit_code == 0);
    std::ifstream sj(dir + "/out/three-bus-ring_abc.stats.json");
    REQUIRE(sj.good());
    nlohmann::json j;
    sj >> j;
    CHECK(j["stats"]["accepted_steps"].get<long>() == 20000);  // 0.1 s / 5 us
}

TEST_CASE("solver failure exits with code 2") {
    const std::string dir = tmp_dir();
    Scenario sc = default_three_bus_scenario();
    sc.t_end = 1.0;
    sc.solver.abstol = 1e-13;
    sc.solver.reltol = 1e-13;
    sc.solver.dt_min = 1e-4;
    save_scenario(sc, dir + "/stuck.json");
    const CmdResult r = run_cmd("run " + dir + "/stuck.json --out " + dir + "/out");
    CHECK(r.exit_code == 2);
}

TEST_CASE("io failure exits with code 3") {
    const std::string dir = tmp_dir();
    Scenario sc = default_three_bus_scenario();
    sc.t_end = 0.01;
    sc.events.clear();
    save_scenario(sc, dir + "/ok.json");
    const CmdResult r = run_cmd("run " + dir + "/ok.json --out /dev/null/nope");
    CHECK(r.exit_code == 3);
}

TEST_CASE("compare runs members, writes the long-format csv, reports errors") {
    const std::string dir = tmp_dir();
    Scenario sc = default_three_bus_scenario();
    sc.t_end = 0.5;
    save_scenario(sc, dir + "/cmp.json");
    const CmdResult r =
        run_cmd("compare " + dir + "/cmp.json --formulations qsp,dq --out " + dir + "/cmp_out");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("qsp vs dq") != std::string::npos);
    CHECK(r.output.find("max|err|") != std::string::npos);
    std::ifstream lf(dir + "/cmp_out/three-bus-ring_compare_long.csv");
    REQUIRE(lf.good());
    std::string header;
    std::getline(lf, header);
    CHECK(header == "time_s,signal,formulation,value");
}

TEST_CASE("single-formulation compare degenerates to zero comparisons") {
    const std::string dir = tmp_dir();
    Scenario sc = default_three_bus_scenario();
    sc.t_end = 0.2;
    sc.events.clear();
    save_scenario(sc, dir + "/single.json");
    const CmdResult r =
        run_cmd("compare " + dir + "/single.json --formulations qsp --out " + dir + "/single_out");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find(" vs ") == std::string::npos);
}

TEST_CASE("analysis flag appends sigma values") {
    const std::string dir = tmp_dir();
    Scenario sc = default_three_bus_scenario();
    sc.t_end = 0.05;
    sc.events.clear();
    save_scenario(sc, dir + "/an.json");
    const CmdResult r =
        run_cmd("run " + dir + "/an.json --formulation qsp --analysis --out " + dir + "/an_out");
    CHECK(r.exit_code == 0);
    CHECK(r.output.find("sigma(qsp)") != std::string::npos);
}

}  // TEST_SUITE
