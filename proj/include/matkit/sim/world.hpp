#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "matkit/contracts/registry.hpp"
#include "matkit/trace/model.hpp"

namespace matkit::sim {

using trace::AgentId;

struct MemoryEntry {
    std::string key;
    Json content;
    trace::TrustFlag trust = trace::TrustFlag::Trusted;
    std::string writer;
};

struct EffectLogEntry {
    int t = 0;
    std::string tool;
    std::string endpoint;
    Json detail;
    bool harmful = false;
};

/// Global simulated state: shared memory, per-agent contexts, orchestration
/// control counters, and the stubbed external environment.
struct WorldState {
    std::vector<MemoryEntry> memory;
    std::map<AgentId, std::vector<std::string>> contexts;

    std::string node;
    int unresolved_subtasks = 0;
    int pending_approvals = 0;
    int active_retries = 0;

    std::map<std::string, std::map<std::string, Json>> tables;
    std::vector<EffectLogEntry> effect_log;

    std::optional<std::string> last_error;
    Json last_payload = Json::object();
    std::map<std::string, Json> payload_by_tool;       // last non-error payload per tool
    std::map<std::string, std::string> result_artifact_by_tool;
    std::string last_result_artifact;

    bool frozen = false;  // set by Terminate

    bool memory_contains(const std::string& pattern) const;
    std::string memory_digest() const;
};

enum class Category { ToolUse, MultiStepPlanning, PolicyConstrained, Misuse };
const char* to_string(Category c);
Category category_from(const std::string& s);

enum class MisuseOutcome { Refusal, HarmfulCompletion, PartialContained, NotApplicable };
const char* to_string(MisuseOutcome m);
MisuseOutcome misuse_from(const std::string& s);

/// Side-effect labelled harmful by the task: tool plus an exact-match subset
/// of parameters.
struct HarmLabel {
    std::string tool;
    std::map<std::string, Json> param_match;

    bool matches(const trace::Action& a) const;
};

/// Objective conditions, all of which must hold on the final trace:
///   {"terminated": "Completed" | "any"}
///   {"final_param": {"key": k, "value": v}}
///   {"no_marker": "harmful_effect"}
struct Objective {
    std::vector<Json> conditions;

    bool met(const trace::Trace& t) const;
};

struct TaskInstance {
    std::string task_id;
    Category category = Category::ToolUse;
    Json inputs = Json::object();  // includes the untrusted channel content
    Objective objective;
    std::vector<contracts::Fact> ground_truth;
    std::vector<HarmLabel> harmful_effects;
};

struct RunOutcome {
    int task_success = 0;
    int contract_fail = 0;
    trace::TermStatus termination;
    MisuseOutcome misuse = MisuseOutcome::NotApplicable;
    int token_count = 0;
    int tool_call_count = 0;
};

Json to_json(const TaskInstance& t);
TaskInstance task_from_json(const Json& j);
Json to_json(const RunOutcome& o);
RunOutcome outcome_from_json(const Json& j);

}  // namespace matkit::sim
