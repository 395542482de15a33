#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "matkit/gov/policy.hpp"
#include "matkit/trace/model.hpp"

namespace matkit::contracts {

using trace::AgentId;
using trace::ContractIdStr;
using trace::Severity;

enum class ContractKind { Step, Trace };

/// A contract is either a named built-in (parameterized) or a declarative
/// predicate tree over record fields.
struct ContractDef {
    std::string id;
    ContractKind kind = ContractKind::Step;
    Severity severity = Severity::Soft;
    double weight = 1.0;  // violation-score weight, >= 0
    bool policy_relevant = false;
    bool monotone = true;  // trace contracts only: violation persists over prefixes
    std::string builtin;   // empty when tree-defined
    Json params = Json::object();
    Json tree;  // predicate tree, null when builtin-defined
};

struct ContractRegistry {
    std::string id = "default";
    std::vector<ContractDef> step_contracts;
    std::vector<ContractDef> trace_contracts;
    // ActionType name -> step contract ids checked for that action type.
    std::map<std::string, std::vector<ContractIdStr>> selection_rules;

    const ContractDef* find(const ContractIdStr& cid) const;
    double weight_of(const ContractIdStr& cid) const;
    Severity severity_of(const ContractIdStr& cid) const;
    bool policy_relevant(const ContractIdStr& cid) const;

    /// Ids unique, selection targets registered. Throws ConfigError.
    void validate() const;
};

Json to_json(const ContractRegistry& r);
ContractRegistry registry_from_json(const Json& j);

/// Weighted potential over the observable orchestration counters.
struct PotentialSpec {
    double w_subtasks = 1.0;
    double w_approvals = 1.0;
    double w_retries = 1.0;
};

/// Per-agent role contract: allowed action patterns plus obligations.
struct RoleContract {
    AgentId agent;
    std::vector<std::string> allowed_actions;  // "Message", "ToolCall:db_lookup", "ToolCall:*"
    std::vector<ContractIdStr> obligations;
};

/// True iff the action matches one of the role's allowed patterns.
bool action_allowed(const trace::Action& action, const RoleContract& rc);

struct Fact {
    std::string subject;
    std::string predicate;
    std::string value;

    bool operator==(const Fact&) const = default;
};

struct Claim {
    trace::ClaimId id;
    std::string subject;
    std::string predicate;
    std::string value;
};

struct ClaimSet {
    std::vector<Claim> claims;
    std::map<trace::ClaimId, std::vector<trace::ProvenanceLink>> evidence;
};

/// Everything contract predicates may look at besides the record itself.
struct EvalContext {
    const gov::GovernancePolicy* policy = nullptr;
    const std::map<AgentId, RoleContract>* roles = nullptr;
    const std::map<std::string, gov::ToolDef>* tools = nullptr;
    const std::vector<Fact>* ground_truth = nullptr;
    PotentialSpec phi;
};

}  // namespace matkit::contracts
