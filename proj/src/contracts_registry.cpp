#include "matkit/contracts/registry.hpp"

#include <algorithm>
#include <set>

namespace matkit::contracts {

const ContractDef* ContractRegistry::find(const ContractIdStr& cid) const {
    for (const auto& c : step_contracts)
        if (c.id == cid) return &c;
    for (const auto& c : trace_contracts)
        if (c.id == cid) return &c;
    return nullptr;
}

double ContractRegistry::weight_of(const ContractIdStr& cid) const {
    const ContractDef* c = find(cid);
    return c ? c->weight : 0.0;
}

Severity ContractRegistry::severity_of(const ContractIdStr& cid) const {
    const ContractDef* c = find(cid);
    return c ? c->severity : Severity::Hard;
}

bool ContractRegistry::policy_relevant(const ContractIdStr& cid) const {
    const ContractDef* c = find(cid);
    return c && c->policy_relevant;
}

void ContractRegistry::validate() const {
    std::set<std::string> ids;
    for (const auto& c : step_contracts) {
        if (!ids.insert(c.id).second) throw ConfigError("duplicate contract id: " + c.id);
        if (!(c.weight >= 0.0)) throw ConfigError("negative weight on " + c.id);
    }
    for (const auto& c : trace_contracts) {
        if (!ids.insert(c.id).second) throw ConfigError("duplicate contract id: " + c.id);
        if (!(c.weight >= 0.0)) throw ConfigError("negative weight on " + c.id);
    }
    for (const auto& [action, targets] : selection_rules) {
        for (const auto& cid : targets) {
            bool is_step = std::any_of(step_contracts.begin(), step_contracts.end(),
                                       [&](const ContractDef& c) { return c.id == cid; });
            if (!is_step)
                throw ConfigError("selection rule for " + action +
                                  " targets unknown step contract: " + cid);
        }
    }
}

namespace {

Json def_to_json(const ContractDef& c) {
    Json j;
    j["id"] = c.id;
    j["kind"] = c.kind == ContractKind::Step ? "Step" : "Trace";
    j["severity"] = trace::to_string(c.severity);
    j["weight"] = c.weight;
    j["policy"] = c.policy_relevant;
    j["monotone"] = c.monotone;
    if (!c.builtin.empty()) j["builtin"] = c.builtin;
    if (!c.params.empty()) j["params"] = c.params;
    if (!c.tree.is_null()) j["tree"] = c.tree;
    return j;
}

ContractDef def_from_json(const Json& j) {
    ContractDef c;
    c.id = j.at("id").get<std::string>();
    c.kind = j.at("kind").get<std::string>() == "Step" ? ContractKind::Step : ContractKind::Trace;
    c.severity = trace::severity_from(j.at("severity").get<std::string>());
    c.weight = j.at("weight").get<double>();
    c.policy_relevant = j.value("policy", false);
    c.monotone = j.value("monotone", true);
    if (j.contains("builtin")) c.builtin = j["builtin"].get<std::string>();
    if (j.contains("params")) c.params = j["params"];
    if (j.contains("tree")) c.tree = j["tree"];
    return c;
}

}  // namespace

Json to_json(const ContractRegistry& r) {
    Json j;
    j["id"] = r.id;
    Json steps = Json::array();
    for (const auto& c : r.step_contracts) steps.push_back(def_to_json(c));
    j["step_contracts"] = steps;
    Json traces = Json::array();
    for (const auto& c : r.trace_contracts) traces.push_back(def_to_json(c));
    j["trace_contracts"] = traces;
    j["selection"] = r.selection_rules;
    return j;
}

ContractRegistry registry_from_json(const Json& j) {
    ContractRegistry r;
    r.id = j.at("id").get<std::string>();
    for (const auto& c : j.at("step_contracts")) r.step_contracts.push_back(def_from_json(c));
    for (const auto& c : j.at("trace_contracts")) r.trace_contracts.push_back(def_from_json(c));
    r.selection_rules =
        j.at("selection").get<std::map<std::string, std::vector<std::string>>>();
    r.validate();
    return r;
}

bool action_allowed(const trace::Action& action, const RoleContract& rc) {
    const std::string type = trace::to_string(action.kind.type);
    for (const auto& pattern : rc.allowed_actions) {
        auto colon = pattern.find(':');
        if (colon == std::string::npos) {
            if (pattern == type) return true;
            continue;
        }
        if (pattern.substr(0, colon) != type) continue;
        if (action.kind.type != trace::ActionType::ToolCall) continue;
        std::string ptool = pattern.substr(colon + 1);
        if (ptool == "*" || ptool == action.kind.tool) return true;
    }
    return false;
}

}  // namespace matkit::contracts
