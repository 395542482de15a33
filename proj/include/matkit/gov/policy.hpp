#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "matkit/trace/model.hpp"

namespace matkit::gov {

using trace::Action;
using trace::AgentId;

/// Tool adapter description. `channel` decides which boundary the call hits
/// and which operator families may perturb it.
struct ToolDef {
    std::string name;
    std::vector<std::string> endpoints;
    trace::Channel channel = trace::Channel::Tool;
    bool side_effect = false;
    bool verifier = false;
};

struct ParamRange {
    std::optional<double> min;
    std::optional<double> max;
    std::vector<std::string> allowed;  // string allowlist, empty = any
};

/// Per-agent least-privilege allowlist.
struct CapabilitySet {
    std::vector<std::string> tools;  // "tool" or "tool:endpoint" patterns
    std::map<std::string, std::map<std::string, ParamRange>> param_ranges;  // tool -> param
    std::map<std::string, int> rate_limits;  // tool -> max proposals per run
};

/// Bounded correction applied by the shield instead of blocking.
struct ClampRule {
    std::string tool;
    std::string param;
    double min = 0.0;
    double max = 0.0;
};

enum class ApproverDecision { Approve, Deny };

struct GovernancePolicy {
    std::map<AgentId, CapabilitySet> capabilities;
    std::map<AgentId, CapabilitySet> shrunk_capabilities;  // used when routing shrinks caps
    std::vector<ClampRule> clamp_rules;
    std::vector<std::string> sensitive_values;  // redaction list, part of config snapshot
    std::vector<std::string> high_impact_tools;
    std::map<std::string, ApproverDecision> approver;  // tool -> decision
    double trust_rho = 0.2;
    double trust_threshold = 0.5;

    bool is_high_impact(const std::string& tool) const;
    ApproverDecision approver_decision(const std::string& tool) const;  // default Deny
};

/// Tool/endpoint/range check only; rate limits are runtime state and live in
/// the Governor. Used both for enforcement and for monitoring-side contracts.
bool capability_permits(const CapabilitySet& caps, const Action& action);

bool tool_pattern_match(const std::string& pattern, const std::string& tool,
                        const std::string& endpoint);

Json to_json(const GovernancePolicy& p);
GovernancePolicy policy_from_json(const Json& j);

Json to_json(const ToolDef& t);
ToolDef tool_from_json(const Json& j);

}  // namespace matkit::gov
