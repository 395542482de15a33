#pragma once

#include <optional>
#include <string>

#include "matkit/sim/exec.hpp"

namespace matkit::sim {

struct FirstViolationRef {
    int t = 0;
    trace::AgentId agent;
    std::vector<std::string> contract_ids;
};

/// Everything needed to reproduce a run bit-exactly: config snapshot, seed,
/// schedule, recorded boundary responses, and the original serialized trace.
struct ReplayRecord {
    trace::RunKey run_key;
    Json config_snapshot;
    Json task_snapshot;
    std::uint64_t seed = 0;
    perturb::Schedule schedule;
    StubCache stub_cache;
    std::optional<FirstViolationRef> first_violation;
    std::string trace_bytes;
};

ReplayRecord build_replay(const Scenario& scenario, const Config& config,
                          const RunResult& run);

/// Re-executes from the bundle against the registered scenario catalog.
/// Throws ConfigMismatch when the recorded task no longer matches the
/// catalog, MissingStub when a recorded response is absent.
trace::Trace replay(const ReplayRecord& rr);

/// Replay under a different configuration (regression testing after fixes).
RunResult replay_under(const ReplayRecord& rr, const Config& config);

/// Directory bundle: config.json, task.json, schedule.json, stubs.json,
/// trace.mat, manifest.json.
void write_bundle(const ReplayRecord& rr, const std::string& dir);
ReplayRecord read_bundle(const std::string& dir);

}  // namespace matkit::sim
