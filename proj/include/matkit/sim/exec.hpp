#pragma once

#include <map>
#include <string>
#include <vector>

#include "matkit/contracts/eval.hpp"
#include "matkit/perturb/operators.hpp"
#include "matkit/sim/scenario.hpp"

namespace matkit::sim {

/// Filtered per-step summary exposed to an adaptive adversary: action type,
/// called tool, and the step pass flag. No payload content.
struct AdversaryObs {
    trace::ActionType action_type = trace::ActionType::Message;
    std::string tool;
    bool step_pass = true;
};

class StepScheduler {
public:
    virtual ~StepScheduler() = default;
    /// Operators to apply at step t; prev is the previous step's filtered
    /// observation (null at t=0).
    virtual std::vector<perturb::Operator> ops_for(int t, const AdversaryObs* prev) = 0;
};

class FixedScheduler : public StepScheduler {
public:
    explicit FixedScheduler(perturb::Schedule schedule) : schedule_(std::move(schedule)) {}
    std::vector<perturb::Operator> ops_for(int t, const AdversaryObs*) override {
        auto it = schedule_.ops.find(t);
        return it == schedule_.ops.end() ? std::vector<perturb::Operator>{} : it->second;
    }
    const perturb::Schedule& schedule() const { return schedule_; }

private:
    perturb::Schedule schedule_;
};

/// Recorded boundary responses, keyed "tool|endpoint|param-digest|ordinal".
using StubCache = std::map<std::string, Json>;

struct RunResult {
    trace::Trace trace;
    RunOutcome outcome;
    perturb::Schedule schedule;  // realized schedule (what the scheduler asked for)
    StubCache stub_cache;
    std::vector<EffectLogEntry> effects;
};

/// Keeps the role map alive next to an EvalContext that points into it.
struct EvalBundle {
    std::map<AgentId, contracts::RoleContract> roles;
    contracts::EvalContext ctx;
};

EvalBundle make_eval(const Config& config, const TaskInstance& task);

/// Deterministic execution of one run. Throws ConfigError on unresolvable
/// references; running past the horizon is not an error and yields a
/// NotTerminated outcome.
RunResult exec(const Scenario& scenario, const Config& config, std::uint64_t seed,
               const perturb::Schedule& schedule);

/// Execution with a step-wise scheduler (adaptive adversaries) and optional
/// recorded boundary responses (replay). Throws MissingStub when a needed
/// recorded response is absent in replay mode.
RunResult exec_with(const Scenario& scenario, const Config& config, std::uint64_t seed,
                    StepScheduler& scheduler, const StubCache* replay_stubs = nullptr);

}  // namespace matkit::sim
