#pragma once

#include <string>
#include <vector>

#include "matkit/contracts/eval.hpp"
#include "matkit/sim/exec.hpp"
#include "matkit/sim/replay.hpp"
#include "matkit/trace/serialize.hpp"

namespace testkit {

using namespace matkit;

inline trace::MatRecord make_record(int t, const std::string& agent = "a1",
                                    trace::ActionType type = trace::ActionType::Message) {
    trace::MatRecord r;
    r.t = t;
    r.agent = agent;
    r.role = "Role";
    r.action.kind.type = type;
    if (type == trace::ActionType::Terminate)
        r.action.kind.status = trace::TerminalStatus::Completed;
    r.observation.channel = trace::Channel::User;
    return r;
}

/// Trace whose per-step potential equals the given unresolved-subtask counts.
inline trace::Trace phi_trace(const std::vector<int>& phis, bool terminated,
                              int horizon = 50) {
    trace::Trace tr;
    tr.horizon = horizon;
    for (std::size_t i = 0; i < phis.size(); ++i) {
        bool last = i + 1 == phis.size();
        trace::MatRecord r = make_record(static_cast<int>(i), "a1",
                                         terminated && last ? trace::ActionType::Terminate
                                                            : trace::ActionType::Message);
        r.state.unresolved_subtasks = phis[i];
        trace::append_record(tr, r);
    }
    return tr;
}

/// Trace carrying fault/detect/mitigate markers at the given steps.
inline trace::Trace marker_trace(int length, const std::vector<int>& faults,
                                 const std::vector<int>& detects,
                                 const std::vector<int>& mitigates, bool terminated = true) {
    trace::Trace tr;
    tr.horizon = length + 5;
    for (int t = 0; t < length; ++t) {
        bool last = t + 1 == length;
        trace::MatRecord r = make_record(t, "a1",
                                         terminated && last ? trace::ActionType::Terminate
                                                            : trace::ActionType::Message);
        for (int f : faults)
            if (f == t) r.annotations.push_back("fault:test");
        for (int d : detects)
            if (d == t) r.annotations.push_back("detect");
        for (int m : mitigates)
            if (m == t) r.annotations.push_back("mitigate");
        trace::append_record(tr, r);
    }
    return tr;
}

inline const sim::Scenario& scenario(const std::string& id) { return sim::find_scenario(id); }

inline sim::Config config_for(const std::string& id,
                              gov::Variant v = gov::Variant::NoGovernance) {
    return sim::make_config(scenario(id), v);
}

inline sim::RunResult run(const std::string& id, gov::Variant v, std::uint64_t seed,
                          const perturb::Schedule& sched = {}) {
    return sim::exec(scenario(id), config_for(id, v), seed, sched);
}

}  // namespace testkit
