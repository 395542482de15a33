#include "matkit/trace/model.hpp"

#include <algorithm>

namespace matkit::trace {

const char* to_string(ActionType v) {
    switch (v) {
        case ActionType::Message: return "Message";
        case ActionType::ToolCall: return "ToolCall";
        case ActionType::MemoryRead: return "MemoryRead";
        case ActionType::MemoryWrite: return "MemoryWrite";
        case ActionType::Delegate: return "Delegate";
        case ActionType::Terminate: return "Terminate";
    }
    return "?";
}
const char* to_string(TerminalStatus v) {
    switch (v) {
        case TerminalStatus::Completed: return "Completed";
        case TerminalStatus::SafeAbort: return "SafeAbort";
        case TerminalStatus::ExplicitFailure: return "ExplicitFailure";
    }
    return "?";
}
const char* to_string(RiskLabel v) {
    return v == RiskLabel::HighImpact ? "HighImpact" : "LowImpact";
}
const char* to_string(Channel v) {
    switch (v) {
        case Channel::Tool: return "Tool";
        case Channel::Retrieval: return "Retrieval";
        case Channel::Memory: return "Memory";
        case Channel::User: return "User";
    }
    return "?";
}
const char* to_string(TrustFlag v) { return v == TrustFlag::Trusted ? "Trusted" : "Untrusted"; }
const char* to_string(Severity v) {
    switch (v) {
        case Severity::None: return "None";
        case Severity::Soft: return "Soft";
        case Severity::Hard: return "Hard";
    }
    return "?";
}
const char* to_string(Mitigation v) {
    switch (v) {
        case Mitigation::None: return "None";
        case Mitigation::Retry: return "Retry";
        case Mitigation::Replan: return "Replan";
        case Mitigation::Sandbox: return "Sandbox";
        case Mitigation::Escalate: return "Escalate";
        case Mitigation::Block: return "Block";
    }
    return "?";
}
const char* to_string(ProvRel v) {
    switch (v) {
        case ProvRel::supports: return "supports";
        case ProvRel::returns: return "returns";
        case ProvRel::derived_from: return "derived_from";
    }
    return "?";
}

namespace {
[[noreturn]] void bad_enum(const std::string& what, const std::string& s) {
    throw Error("bad " + what + " value: " + s);
}
}  // namespace

ActionType action_type_from(const std::string& s) {
    if (s == "Message") return ActionType::Message;
    if (s == "ToolCall") return ActionType::ToolCall;
    if (s == "MemoryRead") return ActionType::MemoryRead;
    if (s == "MemoryWrite") return ActionType::MemoryWrite;
    if (s == "Delegate") return ActionType::Delegate;
    if (s == "Terminate") return ActionType::Terminate;
    bad_enum("ActionType", s);
}
TerminalStatus terminal_status_from(const std::string& s) {
    if (s == "Completed") return TerminalStatus::Completed;
    if (s == "SafeAbort") return TerminalStatus::SafeAbort;
    if (s == "ExplicitFailure") return TerminalStatus::ExplicitFailure;
    bad_enum("TerminalStatus", s);
}
RiskLabel risk_from(const std::string& s) {
    if (s == "HighImpact") return RiskLabel::HighImpact;
    if (s == "LowImpact") return RiskLabel::LowImpact;
    bad_enum("RiskLabel", s);
}
Channel channel_from(const std::string& s) {
    if (s == "Tool") return Channel::Tool;
    if (s == "Retrieval") return Channel::Retrieval;
    if (s == "Memory") return Channel::Memory;
    if (s == "User") return Channel::User;
    bad_enum("Channel", s);
}
TrustFlag trust_from(const std::string& s) {
    if (s == "Trusted") return TrustFlag::Trusted;
    if (s == "Untrusted") return TrustFlag::Untrusted;
    bad_enum("TrustFlag", s);
}
Severity severity_from(const std::string& s) {
    if (s == "None") return Severity::None;
    if (s == "Soft") return Severity::Soft;
    if (s == "Hard") return Severity::Hard;
    bad_enum("Severity", s);
}
Mitigation mitigation_from(const std::string& s) {
    if (s == "None") return Mitigation::None;
    if (s == "Retry") return Mitigation::Retry;
    if (s == "Replan") return Mitigation::Replan;
    if (s == "Sandbox") return Mitigation::Sandbox;
    if (s == "Escalate") return Mitigation::Escalate;
    if (s == "Block") return Mitigation::Block;
    bad_enum("Mitigation", s);
}
ProvRel prov_rel_from(const std::string& s) {
    if (s == "supports") return ProvRel::supports;
    if (s == "returns") return ProvRel::returns;
    if (s == "derived_from") return ProvRel::derived_from;
    bad_enum("ProvRel", s);
}

bool MatRecord::has_annotation(const std::string& a) const {
    return std::find(annotations.begin(), annotations.end(), a) != annotations.end();
}

bool MatRecord::has_annotation_prefix(const std::string& prefix) const {
    for (const auto& a : annotations)
        if (a.rfind(prefix, 0) == 0) return true;
    return false;
}

void append_record(Trace& trace, MatRecord record) {
    if (!trace.records.empty() &&
        trace.records.back().action.kind.type == ActionType::Terminate) {
        throw AppendAfterTerminate("trace already terminated at t=" +
                                   std::to_string(trace.records.back().t));
    }
    int expected = trace.records.empty() ? 0 : trace.records.back().t + 1;
    if (record.t != expected) {
        throw StepIndexGap("expected t=" + std::to_string(expected) + ", got t=" +
                           std::to_string(record.t));
    }
    trace.records.push_back(std::move(record));
}

TermStatus term_status(const Trace& trace) {
    for (const auto& r : trace.records) {
        if (r.action.kind.type == ActionType::Terminate && r.t <= trace.horizon) {
            return {true, r.action.kind.status.value_or(TerminalStatus::Completed)};
        }
    }
    return {};
}

std::vector<ArtifactId> record_artifacts(const MatRecord& r) {
    std::vector<ArtifactId> out;
    const std::string ts = std::to_string(r.t);
    switch (r.action.kind.type) {
        case ActionType::Message: out.push_back("msg:" + ts + ":0"); break;
        case ActionType::ToolCall:
            out.push_back("toolcall:" + ts + ":0");
            if (!r.observation.error_code && !r.observation.payload.empty())
                out.push_back("toolresult:" + ts + ":0");
            break;
        case ActionType::MemoryRead: out.push_back("memread:" + ts + ":0"); break;
        case ActionType::MemoryWrite: out.push_back("memwrite:" + ts + ":0"); break;
        case ActionType::Delegate: out.push_back("delegate:" + ts + ":0"); break;
        case ActionType::Terminate: out.push_back("term:" + ts + ":0"); break;
    }
    // Retrieval items are individually addressable as passages.
    if (r.observation.channel == Channel::Retrieval) {
        auto it = r.observation.payload.find("items");
        if (it != r.observation.payload.end() && it->second.is_array()) {
            for (std::size_t k = 0; k < it->second.size(); ++k)
                out.push_back("passage:" + ts + ":" + std::to_string(k));
        }
    }
    auto it = r.action.params.find("claims");
    if (it != r.action.params.end() && it->second.is_array()) {
        for (const auto& c : it->second)
            if (c.contains("id")) out.push_back(c["id"].get<std::string>());
    }
    return out;
}

bool provenance_intact(const Trace& trace) {
    std::vector<ArtifactId> seen;
    auto known = [&seen](const ArtifactId& id) {
        return std::find(seen.begin(), seen.end(), id) != seen.end();
    };
    for (const auto& r : trace.records) {
        for (const auto& a : record_artifacts(r)) seen.push_back(a);
        for (const auto& link : r.provenance) {
            if (link.src == link.dst) return false;
            if (!known(link.src) || !known(link.dst)) return false;
        }
    }
    return true;
}

double phi_of(const StateProjection& s, double w_subtasks, double w_approvals, double w_retries) {
    return w_subtasks * s.unresolved_subtasks + w_approvals * s.pending_approvals +
           w_retries * s.active_retries;
}

}  // namespace matkit::trace
