#include "matkit/gov/governor.hpp"

#include <algorithm>

namespace matkit::gov {

using trace::ActionType;
using trace::RiskLabel;

const char* to_string(Variant v) {
    switch (v) {
        case Variant::NoGovernance: return "NoGovernance";
        case Variant::Shield: return "Shield";
        case Variant::ShieldCaps: return "ShieldCaps";
        case Variant::ShieldRouting: return "ShieldRouting";
    }
    return "?";
}

Variant variant_from(const std::string& s) {
    if (s == "NoGovernance") return Variant::NoGovernance;
    if (s == "Shield") return Variant::Shield;
    if (s == "ShieldCaps") return Variant::ShieldCaps;
    if (s == "ShieldRouting") return Variant::ShieldRouting;
    throw ConfigError("unknown governance variant: " + s);
}

const char* to_string(Route r) {
    switch (r) {
        case Route::Normal: return "Normal";
        case Route::ShrinkCaps: return "ShrinkCaps";
        case Route::VerifierDetour: return "VerifierDetour";
        case Route::StrictMediation: return "StrictMediation";
    }
    return "?";
}

Governor::Governor(const GovernancePolicy& policy, Variant variant)
    : policy_(policy), variant_(variant) {}

double Governor::trust_step(double current, bool passed, double rho) {
    return (1.0 - rho) * current + rho * (passed ? 1.0 : 0.0);
}

void Governor::update_trust(const AgentId& agent, bool step_passed, int t) {
    TrustScore& s = trust_[agent];
    s.value = trust_step(s.value, step_passed, policy_.trust_rho);
    s.last_update = t;
}

TrustScore Governor::trust(const AgentId& agent) const {
    auto it = trust_.find(agent);
    return it == trust_.end() ? TrustScore{} : it->second;
}

void Governor::set_trust(const AgentId& agent, double value) { trust_[agent].value = value; }

Route Governor::route(const AgentId& agent, const trace::Action& action) const {
    if (variant_ != Variant::ShieldRouting) return Route::Normal;
    double t = trust(agent).value;
    double thr = policy_.trust_threshold;
    if (t >= thr) return Route::Normal;
    if (action.risk == RiskLabel::HighImpact) return Route::StrictMediation;
    if (t >= thr / 2.0) return Route::ShrinkCaps;
    return Route::VerifierDetour;
}

namespace {

const CapabilitySet* caps_for(const GovernancePolicy& policy, const AgentId& agent,
                              bool shrunk) {
    if (shrunk) {
        auto it = policy.shrunk_capabilities.find(agent);
        if (it != policy.shrunk_capabilities.end()) return &it->second;
    }
    auto it = policy.capabilities.find(agent);
    return it == policy.capabilities.end() ? nullptr : &it->second;
}

/// Recursively redacts occurrences of sensitive values inside a JSON value.
bool redact_json(Json& value, const std::vector<std::string>& sensitive) {
    bool changed = false;
    if (value.is_string()) {
        std::string s = value.get<std::string>();
        for (const auto& needle : sensitive) {
            if (needle.empty()) continue;
            std::size_t pos;
            while ((pos = s.find(needle)) != std::string::npos) {
                s.replace(pos, needle.size(), redaction_marker(needle));
                changed = true;
            }
        }
        if (changed) value = s;
        return changed;
    }
    if (value.is_object() || value.is_array()) {
        for (auto& child : value) changed |= redact_json(child, sensitive);
    }
    return changed;
}

}  // namespace

struct Governor::Decision {
    MediationKind kind = MediationKind::Allow;
    trace::Action action;
    std::string reason;
    bool approval_conversion = false;
};

Governor::Decision Governor::decide(const trace::Action& action, const AgentId& agent) const {
    Decision d;
    d.action = action;

    Route r = route(agent, action);
    bool enforce_caps = variant_ == Variant::ShieldCaps || variant_ == Variant::ShieldRouting;

    if (enforce_caps && action.kind.type == ActionType::ToolCall) {
        const CapabilitySet* caps = caps_for(policy_, agent, r == Route::ShrinkCaps);
        if (!caps) throw UnknownAgent(agent);
        if (!capability_permits(*caps, action)) {
            d.kind = MediationKind::Block;
            d.reason = "capability";
            return d;
        }
        auto lim = caps->rate_limits.find(action.kind.tool);
        if (lim != caps->rate_limits.end()) {
            auto used_it = rate_used_.find(agent);
            int used = 0;
            if (used_it != rate_used_.end()) {
                auto t = used_it->second.find(action.kind.tool);
                if (t != used_it->second.end()) used = t->second;
            }
            if (used > lim->second) {
                d.kind = MediationKind::Block;
                d.reason = "rate limit";
                return d;
            }
        }
    }

    bool rewritten = false;

    if (r == Route::VerifierDetour && action.kind.type == ActionType::ToolCall) {
        trace::Action detour;
        detour.kind.type = ActionType::Delegate;
        detour.params["target"] = "verifier";
        detour.params["reason"] = "trust below threshold";
        detour.params["deferred_tool"] = action.kind.tool;
        d.action = detour;
        d.kind = MediationKind::Rewrite;
        d.reason = "verifier detour";
        return d;
    }

    if (action.kind.type == ActionType::ToolCall) {
        for (const auto& rule : policy_.clamp_rules) {
            if (rule.tool != action.kind.tool) continue;
            auto it = d.action.params.find(rule.param);
            if (it == d.action.params.end() || !it->second.is_number()) continue;
            double v = it->second.get<double>();
            double clamped = std::min(std::max(v, rule.min), rule.max);
            if (clamped != v) {
                it->second = clamped;
                rewritten = true;
            }
        }
    }

    for (auto& [k, v] : d.action.params) {
        if (redact_json(v, policy_.sensitive_values)) rewritten = true;
    }

    if (action.kind.type == ActionType::ToolCall && action.risk == RiskLabel::HighImpact) {
        auto appr = d.action.params.find("approved");
        bool approved = appr != d.action.params.end() && appr->second.is_boolean() &&
                        appr->second.get<bool>();
        if (!approved) {
            if (r == Route::StrictMediation) {
                d.kind = MediationKind::Block;
                d.reason = "strict mediation";
                return d;
            }
            // Converted to an approval request, resolved by the approver stub.
            if (policy_.approver_decision(action.kind.tool) == ApproverDecision::Deny) {
                d.kind = MediationKind::Block;
                d.reason = "approval denied";
                return d;
            }
            d.action.params["approved"] = true;
            d.approval_conversion = true;
            rewritten = true;
        }
    }

    if (rewritten) {
        d.kind = MediationKind::Rewrite;
        if (d.reason.empty()) d.reason = "bounded correction";
    }
    return d;
}

bool Governor::allow(const trace::Action& action, const AgentId& agent) {
    auto caps_it = policy_.capabilities.find(agent);
    if (caps_it == policy_.capabilities.end()) throw UnknownAgent(agent);
    if (action.kind.type != ActionType::ToolCall) return true;
    int used = ++rate_used_[agent][action.kind.tool];
    if (!capability_permits(caps_it->second, action)) return false;
    auto lim = caps_it->second.rate_limits.find(action.kind.tool);
    if (lim != caps_it->second.rate_limits.end() && used > lim->second) return false;
    return true;
}

MediationOutcome Governor::mediate(const trace::Action& action,
                                   const trace::StateProjection& /*state*/,
                                   const AgentId& agent, int /*t*/) {
    if (action.kind.type == ActionType::ToolCall) ++rate_used_[agent][action.kind.tool];
    Decision d = decide(action, agent);
    if (d.kind == MediationKind::Rewrite) {
        // a rewrite must satisfy the checks that triggered it; fail closed
        Decision again = decide(d.action, agent);
        if (again.kind != MediationKind::Allow) {
            d.kind = MediationKind::Block;
            d.reason = "rewrite not clean";
        }
    }
    MediationOutcome out;
    out.kind = d.kind;
    out.action = d.kind == MediationKind::Block ? action : d.action;
    out.reason = d.reason;
    out.approval_conversion = d.approval_conversion;
    return out;
}

MediationKind Governor::recheck(const trace::Action& action, const AgentId& agent) const {
    return decide(action, agent).kind;
}

}  // namespace matkit::gov
