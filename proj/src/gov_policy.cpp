#include "matkit/gov/policy.hpp"

#include <algorithm>

namespace matkit::gov {

bool GovernancePolicy::is_high_impact(const std::string& tool) const {
    return std::find(high_impact_tools.begin(), high_impact_tools.end(), tool) !=
           high_impact_tools.end();
}

ApproverDecision GovernancePolicy::approver_decision(const std::string& tool) const {
    auto it = approver.find(tool);
    return it == approver.end() ? ApproverDecision::Deny : it->second;
}

bool tool_pattern_match(const std::string& pattern, const std::string& tool,
                        const std::string& endpoint) {
    auto colon = pattern.find(':');
    if (colon == std::string::npos) return pattern == tool || pattern == "*";
    std::string ptool = pattern.substr(0, colon);
    std::string pend = pattern.substr(colon + 1);
    if (ptool != tool && ptool != "*") return false;
    return pend == "*" || pend == endpoint;
}

bool capability_permits(const CapabilitySet& caps, const Action& action) {
    if (action.kind.type != trace::ActionType::ToolCall) return true;
    bool tool_ok = false;
    for (const auto& p : caps.tools) {
        if (tool_pattern_match(p, action.kind.tool, action.kind.endpoint)) {
            tool_ok = true;
            break;
        }
    }
    if (!tool_ok) return false;
    auto tr = caps.param_ranges.find(action.kind.tool);
    if (tr != caps.param_ranges.end()) {
        for (const auto& [param, range] : tr->second) {
            auto it = action.params.find(param);
            if (it == action.params.end()) continue;
            if (it->second.is_number()) {
                double v = it->second.get<double>();
                if (range.min && v < *range.min) return false;
                if (range.max && v > *range.max) return false;
            } else if (it->second.is_string() && !range.allowed.empty()) {
                const auto& s = it->second.get_ref<const std::string&>();
                if (std::find(range.allowed.begin(), range.allowed.end(), s) ==
                    range.allowed.end())
                    return false;
            }
        }
    }
    return true;
}

namespace {

Json range_to_json(const ParamRange& r) {
    Json j = Json::object();
    if (r.min) j["min"] = *r.min;
    if (r.max) j["max"] = *r.max;
    if (!r.allowed.empty()) j["allowed"] = r.allowed;
    return j;
}

ParamRange range_from_json(const Json& j) {
    ParamRange r;
    if (j.contains("min")) r.min = j["min"].get<double>();
    if (j.contains("max")) r.max = j["max"].get<double>();
    if (j.contains("allowed")) r.allowed = j["allowed"].get<std::vector<std::string>>();
    return r;
}

Json caps_to_json(const CapabilitySet& c) {
    Json j;
    j["tools"] = c.tools;
    Json ranges = Json::object();
    for (const auto& [tool, params] : c.param_ranges) {
        Json per = Json::object();
        for (const auto& [p, r] : params) per[p] = range_to_json(r);
        ranges[tool] = per;
    }
    j["param_ranges"] = ranges;
    j["rate_limits"] = c.rate_limits;
    return j;
}

CapabilitySet caps_from_json(const Json& j) {
    CapabilitySet c;
    c.tools = j.at("tools").get<std::vector<std::string>>();
    for (auto it = j.at("param_ranges").begin(); it != j.at("param_ranges").end(); ++it) {
        std::map<std::string, ParamRange> per;
        for (auto pit = it.value().begin(); pit != it.value().end(); ++pit)
            per[pit.key()] = range_from_json(pit.value());
        c.param_ranges[it.key()] = per;
    }
    c.rate_limits = j.at("rate_limits").get<std::map<std::string, int>>();
    return c;
}

}  // namespace

Json to_json(const GovernancePolicy& p) {
    Json j;
    Json caps = Json::object();
    for (const auto& [agent, c] : p.capabilities) caps[agent] = caps_to_json(c);
    j["capabilities"] = caps;
    Json shrunk = Json::object();
    for (const auto& [agent, c] : p.shrunk_capabilities) shrunk[agent] = caps_to_json(c);
    j["shrunk_capabilities"] = shrunk;
    Json clamps = Json::array();
    for (const auto& r : p.clamp_rules) {
        Json c;
        c["tool"] = r.tool;
        c["param"] = r.param;
        c["min"] = r.min;
        c["max"] = r.max;
        clamps.push_back(c);
    }
    j["clamp_rules"] = clamps;
    j["sensitive_values"] = p.sensitive_values;
    j["high_impact_tools"] = p.high_impact_tools;
    Json app = Json::object();
    for (const auto& [tool, d] : p.approver)
        app[tool] = d == ApproverDecision::Approve ? "approve" : "deny";
    j["approver"] = app;
    j["trust_rho"] = p.trust_rho;
    j["trust_threshold"] = p.trust_threshold;
    return j;
}

GovernancePolicy policy_from_json(const Json& j) {
    GovernancePolicy p;
    for (auto it = j.at("capabilities").begin(); it != j.at("capabilities").end(); ++it)
        p.capabilities[it.key()] = caps_from_json(it.value());
    for (auto it = j.at("shrunk_capabilities").begin(); it != j.at("shrunk_capabilities").end();
         ++it)
        p.shrunk_capabilities[it.key()] = caps_from_json(it.value());
    for (const auto& c : j.at("clamp_rules")) {
        p.clamp_rules.push_back({c.at("tool").get<std::string>(),
                                 c.at("param").get<std::string>(), c.at("min").get<double>(),
                                 c.at("max").get<double>()});
    }
    p.sensitive_values = j.at("sensitive_values").get<std::vector<std::string>>();
    p.high_impact_tools = j.at("high_impact_tools").get<std::vector<std::string>>();
    for (auto it = j.at("approver").begin(); it != j.at("approver").end(); ++it)
        p.approver[it.key()] = it.value().get<std::string>() == "approve"
                                   ? ApproverDecision::Approve
                                   : ApproverDecision::Deny;
    p.trust_rho = j.at("trust_rho").get<double>();
    p.trust_threshold = j.at("trust_threshold").get<double>();
    return p;
}

Json to_json(const ToolDef& t) {
    Json j;
    j["name"] = t.name;
    j["endpoints"] = t.endpoints;
    j["channel"] = trace::to_string(t.channel);
    j["side_effect"] = t.side_effect;
    j["verifier"] = t.verifier;
    return j;
}

ToolDef tool_from_json(const Json& j) {
    ToolDef t;
    t.name = j.at("name").get<std::string>();
    t.endpoints = j.at("endpoints").get<std::vector<std::string>>();
    t.channel = trace::channel_from(j.at("channel").get<std::string>());
    t.side_effect = j.at("side_effect").get<bool>();
    t.verifier = j.at("verifier").get<bool>();
    return t;
}

}  // namespace matkit::gov
