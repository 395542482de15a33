#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "matkit/common.hpp"

namespace matkit::trace {

using AgentId = std::string;
using ContractIdStr = std::string;
using ClaimId = std::string;
using ArtifactId = std::string;  // "<kind>:<step>:<ordinal>", e.g. "claim:9:0"
using ParamMap = std::map<std::string, Json>;

enum class ActionType { Message, ToolCall, MemoryRead, MemoryWrite, Delegate, Terminate };
enum class TerminalStatus { Completed, SafeAbort, ExplicitFailure };
enum class RiskLabel { HighImpact, LowImpact };
enum class Channel { Tool, Retrieval, Memory, User };
enum class TrustFlag { Trusted, Untrusted };
enum class Severity { None, Soft, Hard };
enum class Mitigation { None, Retry, Replan, Sandbox, Escalate, Block };
enum class ProvRel { supports, returns, derived_from };

const char* to_string(ActionType v);
const char* to_string(TerminalStatus v);
const char* to_string(RiskLabel v);
const char* to_string(Channel v);
const char* to_string(TrustFlag v);
const char* to_string(Severity v);
const char* to_string(Mitigation v);
const char* to_string(ProvRel v);

ActionType action_type_from(const std::string& s);
TerminalStatus terminal_status_from(const std::string& s);
RiskLabel risk_from(const std::string& s);
Channel channel_from(const std::string& s);
TrustFlag trust_from(const std::string& s);
Severity severity_from(const std::string& s);
Mitigation mitigation_from(const std::string& s);
ProvRel prov_rel_from(const std::string& s);

struct ActionKind {
    ActionType type = ActionType::Message;
    std::string tool;                                          // ToolCall only
    std::string endpoint;                                      // ToolCall only
    std::optional<TerminalStatus> status;                      // Terminate only

    bool operator==(const ActionKind&) const = default;
};

struct Action {
    ActionKind kind;
    ParamMap params;
    RiskLabel risk = RiskLabel::LowImpact;
    std::vector<ClaimId> claim_refs;

    bool operator==(const Action&) const = default;
};

struct Observation {
    ParamMap payload;
    Channel channel = Channel::User;
    std::optional<std::string> error_code;  // present iff the step hit a boundary fault
    TrustFlag trust = TrustFlag::Trusted;

    bool operator==(const Observation&) const = default;
};

struct StateProjection {
    std::string memory_digest;
    int unresolved_subtasks = 0;
    int pending_approvals = 0;
    int active_retries = 0;
    std::map<std::string, std::string> redacted_params;

    bool operator==(const StateProjection&) const = default;
};

struct ProvenanceLink {
    ArtifactId src;
    ProvRel rel = ProvRel::supports;
    ArtifactId dst;

    bool operator==(const ProvenanceLink&) const = default;
};

struct Verdict {
    bool pass = true;
    std::vector<ContractIdStr> violations;  // sorted, unique
    Severity severity = Severity::None;
    Mitigation mitigation = Mitigation::None;

    bool operator==(const Verdict&) const = default;
};

struct MatRecord {
    int t = 0;
    AgentId agent;
    std::string role;
    StateProjection state;
    Action action;
    Observation observation;
    std::vector<ProvenanceLink> provenance;
    std::vector<ContractIdStr> checked_contracts;
    Verdict verdict;
    std::vector<std::string> annotations;  // markers: "fault:<kind>", "detect",
                                           // "mitigate", "mediation:<outcome>",
                                           // "effect:<tool>", "harmful_effect", ...

    bool has_annotation(const std::string& a) const;
    bool has_annotation_prefix(const std::string& prefix) const;

    bool operator==(const MatRecord&) const = default;
};

struct RunKey {
    std::string task_id;
    std::string config_id;
    std::uint64_t seed = 0;
    std::string schedule_id;

    bool operator==(const RunKey&) const = default;
};

struct Trace {
    std::vector<MatRecord> records;
    int horizon = 0;  // max step index T; length <= horizon + 1
    RunKey run_key;

    bool operator==(const Trace&) const = default;
};

struct TermStatus {
    bool terminated = false;
    TerminalStatus status = TerminalStatus::Completed;  // meaningful iff terminated
};

// -- trace_core operations ---------------------------------------------------

/// Appends in place. Throws StepIndexGap / AppendAfterTerminate.
void append_record(Trace& trace, MatRecord record);

TermStatus term_status(const Trace& trace);

/// Artifact ids a record defines, in emission order.
std::vector<ArtifactId> record_artifacts(const MatRecord& r);

/// True iff every provenance link endpoint resolves to an artifact emitted at
/// or before its own step.
bool provenance_intact(const Trace& trace);

/// Potential value from a recorded state projection, given weights
/// (unresolved_subtasks, pending_approvals, active_retries).
double phi_of(const StateProjection& s, double w_subtasks, double w_approvals, double w_retries);

}  // namespace matkit::trace
