#pragma once

#include <optional>
#include <string>
#include <vector>

#include "matkit/gov/governor.hpp"
#include "matkit/perturb/operators.hpp"
#include "matkit/sim/world.hpp"

namespace matkit::sim {

/// Parameter values support two substitutions at emission time:
///   "$tool:<name>:<field>"  -> field of the tool's last non-error payload
///   "$last_payload:<field>" -> field of the most recent non-error payload
/// Claim evidence refs: "last_toolresult", "toolresult_of:<tool>", or a
/// literal artifact id.
struct ClaimTemplate {
    std::string label;  // scenario-local handle for claim_refs
    std::string subject;
    std::string predicate;
    std::string value;
    std::vector<std::string> evidence;
};

struct ActionTemplate {
    trace::ActionType type = trace::ActionType::Message;
    std::string tool;
    std::string endpoint;
    trace::TerminalStatus term_status = trace::TerminalStatus::Completed;
    trace::ParamMap params;
    std::vector<ClaimTemplate> claims;
    std::vector<std::string> claim_refs;  // labels of earlier claims
    std::vector<std::string> markers;     // extra annotations: "detect", "mitigate", ...

    int complete_subtasks = 0;
    int add_subtasks = 0;
    int add_approvals = 0;
    int resolve_approvals = 0;
    bool inc_retry = false;

    std::string next_node;
    std::string on_block_next;  // defaults to next_node
};

/// Conditions (all must hold): memory_contains, context_contains, last_error
/// (bool), last_payload_has (field name), retries_lt, retries_ge.
struct DecisionRule {
    std::string node;
    AgentId agent;
    Json when = Json::object();
    std::vector<std::pair<double, ActionTemplate>> branches;  // weight, template
};

struct StubEntry {
    std::string tool;
    std::string endpoint;
    Json match_params = Json::object();  // subset match; empty matches any call
    Json response = Json::object();
    Json stale_response;  // served under a stale fault; null = response + stale flag
};

struct Scenario {
    TaskInstance task;
    std::vector<DecisionRule> rules;
    std::vector<StubEntry> stubs;
    std::vector<MemoryEntry> memory_preload;
    std::map<std::string, gov::ApproverDecision> approver_overrides;
    std::string registry_id = "default";  // "default" or "fault"
    perturb::Schedule default_fault_schedule;
    Json expected = Json::object();  // expected signature metadata, used by tests

    const std::string& id() const { return task.task_id; }
};

struct AgentSpec {
    AgentId id;
    std::string role;
    contracts::RoleContract role_contract;
};

struct Config {
    std::string config_id;
    std::vector<AgentSpec> roster;
    std::map<std::string, gov::ToolDef> tools;
    gov::GovernancePolicy policy;
    contracts::ContractRegistry registry;
    gov::Variant variant = gov::Variant::NoGovernance;
    int horizon = 20;
    contracts::PotentialSpec phi;
    std::string start_node = "n0";

    const AgentSpec* find_agent(const AgentId& id) const;
    std::map<AgentId, contracts::RoleContract> role_map() const;

    /// Stable snapshot for replay bundles; covers everything exec reads.
    Json snapshot() const;
};

Config config_from_snapshot(const Json& j);

/// Standard contract registries.
contracts::ContractRegistry default_registry();
contracts::ContractRegistry fault_registry();  // default + containment

/// Standard roster/tools/policy under the given governance variant; the
/// registry is picked by the scenario's registry_id and the approver table is
/// merged from the scenario.
Config make_config(const Scenario& scenario, gov::Variant variant);

/// The shipped scenario catalog (>= 8 scenarios spanning the failure classes
/// and the fault families).
const std::vector<Scenario>& scenario_catalog();

/// Scenario files (*.json) loaded from a directory extend the lookup below;
/// ids shadowing built-ins are rejected. Returns the number loaded.
int load_catalog_dir(const std::string& dir);
void clear_extra_scenarios();

/// Lookup across built-ins plus any loaded catalog directories.
const Scenario& find_scenario(const std::string& task_id);
bool has_scenario(const std::string& task_id);

Json to_json(const Scenario& s);
Scenario scenario_from_json(const Json& j);

}  // namespace matkit::sim
