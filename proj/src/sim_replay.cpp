#include "matkit/sim/replay.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "matkit/trace/serialize.hpp"

namespace matkit::sim {

namespace fs = std::filesystem;

ReplayRecord build_replay(const Scenario& scenario, const Config& config,
                          const RunResult& run) {
    ReplayRecord rr;
    rr.run_key = run.trace.run_key;
    rr.config_snapshot = config.snapshot();
    rr.task_snapshot = to_json(scenario.task);
    rr.seed = run.trace.run_key.seed;
    rr.schedule = run.schedule;
    rr.stub_cache = run.stub_cache;
    rr.trace_bytes = trace::serialize_trace(run.trace);
    EvalBundle eval = make_eval(config, scenario.task);
    auto fv = contracts::first_violation(run.trace, config.registry, eval.ctx);
    if (fv) rr.first_violation = FirstViolationRef{fv->t, fv->agent, fv->all_ids()};
    return rr;
}

trace::Trace replay(const ReplayRecord& rr) {
    if (!has_scenario(rr.run_key.task_id))
        throw ConfigMismatch("scenario not registered: " + rr.run_key.task_id);
    const Scenario& scenario = find_scenario(rr.run_key.task_id);
    if (digest(to_json(scenario.task)) != digest(rr.task_snapshot))
        throw ConfigMismatch("task definition changed since recording: " +
                             rr.run_key.task_id);
    Config config = config_from_snapshot(rr.config_snapshot);
    FixedScheduler scheduler(rr.schedule);
    RunResult run = exec_with(scenario, config, rr.seed, scheduler, &rr.stub_cache);
    return run.trace;
}

RunResult replay_under(const ReplayRecord& rr, const Config& config) {
    if (!has_scenario(rr.run_key.task_id))
        throw ConfigMismatch("scenario not registered: " + rr.run_key.task_id);
    const Scenario& scenario = find_scenario(rr.run_key.task_id);
    return exec(scenario, config, rr.seed, rr.schedule);
}

namespace {

void write_file(const fs::path& p, const std::string& content) {
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << content;
}

std::string read_file(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigMismatch("bundle file missing: " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

}  // namespace

void write_bundle(const ReplayRecord& rr, const std::string& dir) {
    fs::create_directories(dir);
    fs::path base(dir);
    write_file(base / "config.json", rr.config_snapshot.dump(2) + "\n");
    write_file(base / "task.json", rr.task_snapshot.dump(2) + "\n");
    write_file(base / "schedule.json", perturb::to_json(rr.schedule).dump(2) + "\n");
    Json stubs = Json::object();
    for (const auto& [k, v] : rr.stub_cache) stubs[k] = v;
    write_file(base / "stubs.json", stubs.dump(2) + "\n");
    write_file(base / "trace.mat", rr.trace_bytes);
    Json manifest;
    manifest["schema"] = "bundle/1";
    manifest["run_key"] = trace::to_json(rr.run_key);
    manifest["seed"] = rr.seed;
    manifest["task_digest"] = digest(rr.task_snapshot);
    if (rr.first_violation) {
        Json fv;
        fv["t"] = rr.first_violation->t;
        fv["agent"] = rr.first_violation->agent;
        fv["contract_ids"] = rr.first_violation->contract_ids;
        manifest["first_violation"] = fv;
    }
    write_file(base / "manifest.json", manifest.dump(2) + "\n");
}

ReplayRecord read_bundle(const std::string& dir) {
    fs::path base(dir);
    ReplayRecord rr;
    Json manifest = Json::parse(read_file(base / "manifest.json"));
    if (manifest.value("schema", "") != "bundle/1")
        throw ConfigMismatch("unknown bundle schema in " + dir);
    rr.run_key = trace::run_key_from_json(manifest.at("run_key"));
    rr.seed = manifest.at("seed").get<std::uint64_t>();
    if (manifest.contains("first_violation")) {
        const Json& fv = manifest["first_violation"];
        rr.first_violation =
            FirstViolationRef{fv.at("t").get<int>(), fv.at("agent").get<std::string>(),
                              fv.at("contract_ids").get<std::vector<std::string>>()};
    }
    rr.config_snapshot = Json::parse(read_file(base / "config.json"));
    rr.task_snapshot = Json::parse(read_file(base / "task.json"));
    rr.schedule = perturb::schedule_from_json(Json::parse(read_file(base / "schedule.json")));
    Json stubs = Json::parse(read_file(base / "stubs.json"));
    for (auto it = stubs.begin(); it != stubs.end(); ++it) rr.stub_cache[it.key()] = it.value();
    rr.trace_bytes = read_file(base / "trace.mat");
    return rr;
}

}  // namespace matkit::sim
