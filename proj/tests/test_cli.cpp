#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "test_support.hpp"

#include "matkit/cli/runner.hpp"

using namespace matkit;
using namespace testkit;

namespace fs = std::filesystem;

namespace {

std::string fresh_dir(const std::string& name) {
    fs::path p = fs::path("/tmp/matkit_cli_tests") / name;
    fs::remove_all(p);
    fs::create_directories(p);
    return p.string();
}

}  // namespace

TEST_CASE("cmd_run exit codes and artifacts") {
    SUBCASE("happy suite exits 0 and writes the nominal table") {
        cli::ExperimentSpec spec;
        spec.scenario_ids = {"tooluse_happy", "pii_constrained"};
        spec.seeds = {1, 2};
        spec.out_dir = fresh_dir("run_happy");
        CHECK(cli::cmd_run(spec) == 0);
        CHECK(fs::exists(fs::path(spec.out_dir) / "matrix.json"));
        CHECK(fs::exists(fs::path(spec.out_dir) / "nominal_table.json"));
        CHECK(fs::exists(fs::path(spec.out_dir) / "violation_profile.json"));
        CHECK(fs::exists(fs::path(spec.out_dir) / "traces" / "tooluse_happy" /
                         "NoGovernance" / "seed1" / "trace.mat"));
    }

    SUBCASE("suite containing the loop scenario exits 1 with localization") {
        cli::ExperimentSpec spec;
        spec.scenario_ids = {"tooluse_happy", "loop_delegation"};
        spec.seeds = {1};
        spec.out_dir = fresh_dir("run_loop");
        CHECK(cli::cmd_run(spec) == 1);
        Json profile = Json::parse(
            std::ifstream(fs::path(spec.out_dir) / "violation_profile.json"));
        CHECK(profile.at("t_star_histogram").contains("7"));
    }

    SUBCASE("unknown scenario id raises the usage error") {
        cli::ExperimentSpec spec;
        spec.scenario_ids = {"nope"};
        spec.out_dir = fresh_dir("run_bad");
        CHECK_THROWS_AS(cli::cmd_run(spec), ConfigError);
    }

    SUBCASE("exit code is a function of the written matrix") {
        cli::ExperimentSpec spec;
        spec.scenario_ids = {"loop_delegation"};
        spec.seeds = {1};
        spec.out_dir = fresh_dir("run_recheck");
        int code = cli::cmd_run(spec);
        std::string matrix = (fs::path(spec.out_dir) / "matrix.json").string();
        CHECK(cli::exit_code_for_matrix(matrix) == code);
        CHECK(cli::cmd_report(matrix, fresh_dir("run_recheck_reports")) == code);
    }

    SUBCASE("parallel execution produces the same matrix") {
        cli::ExperimentSpec serial;
        serial.scenario_ids = {"tooluse_happy", "misuse_exfil", "fault_timeout"};
        serial.seeds = {1, 2};
        serial.out_dir = fresh_dir("run_serial");
        cli::ExperimentSpec parallel = serial;
        parallel.out_dir = fresh_dir("run_parallel");
        parallel.parallelism = 4;
        CHECK(cli::cmd_run(serial) == cli::cmd_run(parallel));
        Json a = Json::parse(std::ifstream(fs::path(serial.out_dir) / "matrix.json"));
        Json b = Json::parse(std::ifstream(fs::path(parallel.out_dir) / "matrix.json"));
        CHECK(a == b);
    }
}

TEST_CASE("cmd_run fault condition emits the fault table") {
    cli::ExperimentSpec spec;
    spec.scenario_ids = {"fault_timeout", "fault_stale", "fault_unhandled"};
    spec.seeds = {1};
    spec.condition = cli::Condition::Fault;
    spec.out_dir = fresh_dir("inject");
    int code = cli::cmd_run(spec);
    CHECK(code == 1);  // fault_unhandled violates containment
    Json table = Json::parse(std::ifstream(fs::path(spec.out_dir) / "fault_table.json"));
    CHECK(table.at("faults_injected").get<int>() == 3);
    CHECK(table.at("containment_rate").get<double>() == doctest::Approx(2.0 / 3.0));
}

TEST_CASE("cmd_stress writes bundles that replay cleanly") {
    cli::ExperimentSpec spec;
    spec.scenario_ids = {"memory_injection_search"};
    spec.seeds = {1};
    spec.out_dir = fresh_dir("stress");
    spec.search_kind = "exhaustive";
    CHECK(cli::cmd_stress(spec) == 0);
    Json report = Json::parse(std::ifstream(fs::path(spec.out_dir) / "stress_report.json"));
    REQUIRE(report.size() == 1);
    REQUIRE(report[0].at("found").get<bool>());
    std::string bundle = report[0].at("bundle").get<std::string>();
    CHECK(cli::cmd_replay(bundle) == 0);

    SUBCASE("hardened variant finds nothing") {
        cli::ExperimentSpec hard = spec;
        hard.variant = gov::Variant::ShieldCaps;
        hard.out_dir = fresh_dir("stress_hard");
        CHECK(cli::cmd_stress(hard) == 0);
        Json rep = Json::parse(std::ifstream(fs::path(hard.out_dir) / "stress_report.json"));
        CHECK_FALSE(rep[0].at("found").get<bool>());
    }

    SUBCASE("suite selection over the bundle directory") {
        std::string manifest = fresh_dir("suite") + "/suite_manifest.json";
        CHECK(cli::cmd_suite_select((fs::path(spec.out_dir) / "bundles").string(), manifest) ==
              0);
        Json suite = Json::parse(std::ifstream(manifest));
        CHECK(suite.at("chosen").size() == 1);
        CHECK(suite.at("nominals").size() >= 3);
    }

    SUBCASE("regress reports the injection fix as resolved") {
        cli::ExperimentSpec reg = spec;
        reg.scenario_ids = {"tooluse_happy", "memory_injection"};
        reg.out_dir = fresh_dir("regress");
        CHECK(cli::cmd_regress(reg, gov::Variant::NoGovernance, gov::Variant::ShieldCaps,
                               (fs::path(spec.out_dir) / "bundles").string()) == 0);
        Json rep = Json::parse(
            std::ifstream(fs::path(reg.out_dir) / "regression_report.json"));
        REQUIRE(rep.contains("replays"));
        CHECK(rep["replays"][0].at("resolved").get<bool>());
    }
}

TEST_CASE("cmd_run adversarial emits a robustness curve") {
    cli::ExperimentSpec spec;
    spec.scenario_ids = {"fault_unhandled"};
    spec.seeds = {1, 2};
    spec.condition = cli::Condition::Adversarial;
    spec.budget_grid = {0.0, 10.0};
    spec.out_dir = fresh_dir("adv");
    int code = cli::cmd_run(spec);
    CHECK(code == 1);  // the chosen schedule forces the containment failure
    Json curve = Json::parse(
        std::ifstream(fs::path(spec.out_dir) / "robustness_curve.json"));
    REQUIRE(curve.at("points").size() == 2);
    CHECK(curve["points"][0].at("success").get<double>() == 1.0);
    CHECK(curve["points"][1].at("success").get<double>() == 0.0);
}

TEST_CASE("report files carry their documented keys") {
    cli::ExperimentSpec spec;
    spec.scenario_ids = {"fault_timeout", "misuse_exfil"};
    spec.seeds = {1, 2};
    spec.condition = cli::Condition::Fault;
    spec.variant = gov::Variant::Shield;
    spec.out_dir = fresh_dir("schemas");
    cli::cmd_run(spec);
    Json nominal = Json::parse(std::ifstream(fs::path(spec.out_dir) / "nominal_table.json"));
    for (const char* key : {"condition", "success", "success_ci", "success_at_k", "ntr",
                            "contract_fail", "tool_calls_per_run", "steps_per_run",
                            "mtbf_steps", "mtbf_ci", "success_by_category"})
        CHECK_MESSAGE(nominal.contains(key), key);
    Json fault = Json::parse(std::ifstream(fs::path(spec.out_dir) / "fault_table.json"));
    for (const char* key : {"containment_rate", "faults_injected", "by_kind",
                            "residual_harm", "mediation", "blocked_high_impact"})
        CHECK_MESSAGE(fault.contains(key), key);
    Json profile =
        Json::parse(std::ifstream(fs::path(spec.out_dir) / "violation_profile.json"));
    for (const char* key : {"hard", "soft", "t_star_histogram", "t_star_agents",
                            "unsafe_action_rate", "excessive_agency"})
        CHECK_MESSAGE(profile.contains(key), key);
    Json echo = Json::parse(std::ifstream(fs::path(spec.out_dir) / "spec_used.json"));
    CHECK(echo.at("root_seed") == 1);
    CHECK(echo.at("variant") == "Shield");
}

TEST_CASE("spec files parse with defaults and validation") {
    Json j;
    j["scenarios"] = Json::array({"tooluse_happy"});
    j["variant"] = "ShieldCaps";
    j["seeds"] = Json::array({4, 5});
    j["condition"] = {{"type", "fault"}};
    cli::ExperimentSpec spec = cli::spec_from_json(j);
    CHECK(spec.variant == gov::Variant::ShieldCaps);
    CHECK(spec.condition == cli::Condition::Fault);
    CHECK(spec.seeds == std::vector<std::uint64_t>{4, 5});

    Json bad = j;
    bad["condition"] = {{"type", "weird"}};
    CHECK_THROWS_AS(cli::spec_from_json(bad), ConfigError);
    Json noseeds = j;
    noseeds["seeds"] = Json::array();
    CHECK_THROWS_AS(cli::spec_from_json(noseeds), ConfigError);
}

#ifdef MATKIT_CLI_BIN
TEST_CASE("binary round trip: run exits by scenario health") {
    std::string bin = MATKIT_CLI_BIN;
    std::string out = fresh_dir("bin_run");
    std::string cmd = bin + " run --scenarios tooluse_happy --out " + out + " >/dev/null 2>&1";
    CHECK(std::system(cmd.c_str()) == 0);
    std::string bad = bin + " run --scenarios nosuch --out " + out + " >/dev/null 2>&1";
    int rc = std::system(bad.c_str());
    CHECK(WEXITSTATUS(rc) == 2);
}
#endif
