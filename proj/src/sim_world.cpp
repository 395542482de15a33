#include "matkit/sim/world.hpp"

#include <sstream>

namespace matkit::sim {

bool WorldState::memory_contains(const std::string& pattern) const {
    for (const auto& e : memory) {
        std::string dumped = e.content.is_string() ? e.content.get<std::string>()
                                                   : e.content.dump();
        if (dumped.find(pattern) != std::string::npos) return true;
    }
    return false;
}

std::string WorldState::memory_digest() const {
    std::ostringstream all;
    for (const auto& e : memory)
        all << e.key << '\x1f' << e.content.dump() << '\x1f' << trace::to_string(e.trust)
            << '\x1f' << e.writer << '\x1e';
    return hash8(all.str());
}

const char* to_string(Category c) {
    switch (c) {
        case Category::ToolUse: return "ToolUse";
        case Category::MultiStepPlanning: return "MultiStepPlanning";
        case Category::PolicyConstrained: return "PolicyConstrained";
        case Category::Misuse: return "Misuse";
    }
    return "?";
}

Category category_from(const std::string& s) {
    if (s == "ToolUse") return Category::ToolUse;
    if (s == "MultiStepPlanning") return Category::MultiStepPlanning;
    if (s == "PolicyConstrained") return Category::PolicyConstrained;
    if (s == "Misuse") return Category::Misuse;
    throw ConfigError("unknown task category: " + s);
}

const char* to_string(MisuseOutcome m) {
    switch (m) {
        case MisuseOutcome::Refusal: return "Refusal";
        case MisuseOutcome::HarmfulCompletion: return "HarmfulCompletion";
        case MisuseOutcome::PartialContained: return "PartialContained";
        case MisuseOutcome::NotApplicable: return "NotApplicable";
    }
    return "?";
}

MisuseOutcome misuse_from(const std::string& s) {
    if (s == "Refusal") return MisuseOutcome::Refusal;
    if (s == "HarmfulCompletion") return MisuseOutcome::HarmfulCompletion;
    if (s == "PartialContained") return MisuseOutcome::PartialContained;
    if (s == "NotApplicable") return MisuseOutcome::NotApplicable;
    throw ConfigError("unknown misuse outcome: " + s);
}

bool HarmLabel::matches(const trace::Action& a) const {
    if (a.kind.type != trace::ActionType::ToolCall || a.kind.tool != tool) return false;
    for (const auto& [k, v] : param_match) {
        auto it = a.params.find(k);
        if (it == a.params.end() || it->second != v) return false;
    }
    return true;
}

bool Objective::met(const trace::Trace& t) const {
    trace::TermStatus ts = trace::term_status(t);
    for (const auto& cond : conditions) {
        if (cond.contains("terminated")) {
            const std::string want = cond["terminated"].get<std::string>();
            if (!ts.terminated) return false;
            if (want != "any" && std::string(trace::to_string(ts.status)) != want) return false;
        } else if (cond.contains("final_param")) {
            if (!ts.terminated || t.records.empty()) return false;
            const auto& fp = cond["final_param"];
            const auto& params = t.records.back().action.params;
            auto it = params.find(fp.at("key").get<std::string>());
            if (it == params.end() || it->second != fp.at("value")) return false;
        } else if (cond.contains("no_marker")) {
            const std::string marker = cond["no_marker"].get<std::string>();
            for (const auto& r : t.records)
                if (r.has_annotation(marker)) return false;
        } else {
            throw ConfigError("unknown objective condition: " + cond.dump());
        }
    }
    return true;
}

Json to_json(const TaskInstance& t) {
    Json j;
    j["task_id"] = t.task_id;
    j["category"] = to_string(t.category);
    j["inputs"] = t.inputs;
    j["objective"] = t.objective.conditions;
    Json gt = Json::array();
    for (const auto& f : t.ground_truth) {
        Json fj;
        fj["subject"] = f.subject;
        fj["predicate"] = f.predicate;
        fj["value"] = f.value;
        gt.push_back(fj);
    }
    j["ground_truth"] = gt;
    Json harm = Json::array();
    for (const auto& h : t.harmful_effects) {
        Json hj;
        hj["tool"] = h.tool;
        hj["param_match"] = h.param_match;
        harm.push_back(hj);
    }
    j["harmful_effects"] = harm;
    return j;
}

TaskInstance task_from_json(const Json& j) {
    TaskInstance t;
    t.task_id = j.at("task_id").get<std::string>();
    t.category = category_from(j.at("category").get<std::string>());
    t.inputs = j.at("inputs");
    for (const auto& c : j.at("objective")) t.objective.conditions.push_back(c);
    for (const auto& f : j.at("ground_truth"))
        t.ground_truth.push_back({f.at("subject").get<std::string>(),
                                  f.at("predicate").get<std::string>(),
                                  f.at("value").get<std::string>()});
    for (const auto& h : j.at("harmful_effects")) {
        HarmLabel hl;
        hl.tool = h.at("tool").get<std::string>();
        hl.param_match = h.at("param_match").get<std::map<std::string, Json>>();
        t.harmful_effects.push_back(hl);
    }
    return t;
}

Json to_json(const RunOutcome& o) {
    Json j;
    j["task_success"] = o.task_success;
    j["contract_fail"] = o.contract_fail;
    j["terminated"] = o.termination.terminated;
    if (o.termination.terminated) j["term_status"] = trace::to_string(o.termination.status);
    j["misuse"] = to_string(o.misuse);
    j["token_count"] = o.token_count;
    j["tool_call_count"] = o.tool_call_count;
    return j;
}

RunOutcome outcome_from_json(const Json& j) {
    RunOutcome o;
    o.task_success = j.at("task_success").get<int>();
    o.contract_fail = j.at("contract_fail").get<int>();
    o.termination.terminated = j.at("terminated").get<bool>();
    if (o.termination.terminated)
        o.termination.status = trace::terminal_status_from(j.at("term_status").get<std::string>());
    o.misuse = misuse_from(j.at("misuse").get<std::string>());
    o.token_count = j.at("token_count").get<int>();
    o.tool_call_count = j.at("tool_call_count").get<int>();
    return o;
}

}  // namespace matkit::sim
