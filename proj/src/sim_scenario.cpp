#include "matkit/sim/scenario.hpp"

#include <algorithm>
#include <filesystem>
#include <fstream>

namespace matkit::sim {

using contracts::ContractDef;
using contracts::ContractKind;
using trace::Severity;

const AgentSpec* Config::find_agent(const AgentId& id) const {
    for (const auto& a : roster)
        if (a.id == id) return &a;
    return nullptr;
}

std::map<AgentId, contracts::RoleContract> Config::role_map() const {
    std::map<AgentId, contracts::RoleContract> out;
    for (const auto& a : roster) out[a.id] = a.role_contract;
    return out;
}

namespace {

Json role_contract_to_json(const contracts::RoleContract& rc) {
    Json j;
    j["agent"] = rc.agent;
    j["allowed_actions"] = rc.allowed_actions;
    j["obligations"] = rc.obligations;
    return j;
}

contracts::RoleContract role_contract_from_json(const Json& j) {
    contracts::RoleContract rc;
    rc.agent = j.at("agent").get<std::string>();
    rc.allowed_actions = j.at("allowed_actions").get<std::vector<std::string>>();
    rc.obligations = j.at("obligations").get<std::vector<std::string>>();
    return rc;
}

}  // namespace

Json Config::snapshot() const {
    Json j;
    j["config_id"] = config_id;
    Json roster_j = Json::array();
    for (const auto& a : roster) {
        Json aj;
        aj["id"] = a.id;
        aj["role"] = a.role;
        aj["role_contract"] = role_contract_to_json(a.role_contract);
        roster_j.push_back(aj);
    }
    j["roster"] = roster_j;
    Json tools_j = Json::object();
    for (const auto& [name, def] : tools) tools_j[name] = gov::to_json(def);
    j["tools"] = tools_j;
    j["policy"] = gov::to_json(policy);
    j["registry"] = contracts::to_json(registry);
    j["variant"] = gov::to_string(variant);
    j["horizon"] = horizon;
    j["phi"] = {{"w_subtasks", phi.w_subtasks},
                {"w_approvals", phi.w_approvals},
                {"w_retries", phi.w_retries}};
    j["start_node"] = start_node;
    return j;
}

Config config_from_snapshot(const Json& j) {
    Config c;
    c.config_id = j.at("config_id").get<std::string>();
    for (const auto& aj : j.at("roster")) {
        AgentSpec a;
        a.id = aj.at("id").get<std::string>();
        a.role = aj.at("role").get<std::string>();
        a.role_contract = role_contract_from_json(aj.at("role_contract"));
        c.roster.push_back(a);
    }
    for (auto it = j.at("tools").begin(); it != j.at("tools").end(); ++it)
        c.tools[it.key()] = gov::tool_from_json(it.value());
    c.policy = gov::policy_from_json(j.at("policy"));
    c.registry = contracts::registry_from_json(j.at("registry"));
    c.variant = gov::variant_from(j.at("variant").get<std::string>());
    c.horizon = j.at("horizon").get<int>();
    c.phi.w_subtasks = j.at("phi").at("w_subtasks").get<double>();
    c.phi.w_approvals = j.at("phi").at("w_approvals").get<double>();
    c.phi.w_retries = j.at("phi").at("w_retries").get<double>();
    c.start_node = j.at("start_node").get<std::string>();
    return c;
}

namespace {

ContractDef step_def(const std::string& id, Severity sev, double weight, bool policy,
                     const std::string& builtin, Json params = Json::object()) {
    ContractDef c;
    c.id = id;
    c.kind = ContractKind::Step;
    c.severity = sev;
    c.weight = weight;
    c.policy_relevant = policy;
    c.builtin = builtin;
    c.params = std::move(params);
    return c;
}

ContractDef trace_def(const std::string& id, Severity sev, double weight, bool policy,
                      const std::string& builtin, Json params = Json::object()) {
    ContractDef c;
    c.id = id;
    c.kind = ContractKind::Trace;
    c.severity = sev;
    c.weight = weight;
    c.policy_relevant = policy;
    c.builtin = builtin;
    c.params = std::move(params);
    return c;
}

}  // namespace

contracts::ContractRegistry default_registry() {
    contracts::ContractRegistry r;
    r.id = "default";
    r.step_contracts = {
        step_def("least_privilege", Severity::Hard, 3.0, true, "least_privilege"),
        step_def("verify_before_act", Severity::Soft, 1.0, false, "verify_before_act",
                 {{"h", 3}}),
        step_def("memory_sanitization", Severity::Hard, 2.0, true, "memory_sanitization",
                 {{"blocked_patterns", Json::array({"directive:"})}}),
        step_def("final_pii_check", Severity::Hard, 3.0, true, "final_pii_check"),
        step_def("final_claim_support", Severity::Soft, 1.0, false, "final_claim_support"),
    };
    r.trace_contracts = {
        trace_def("progress", Severity::Hard, 2.0, false, "progress", {{"w", 5}}),
        trace_def("no_unsafe_tool", Severity::Hard, 5.0, true, "no_unsafe_tool",
                  {{"tools", Json::array({"exfiltrate_data"})}}),
        trace_def("no_harmful_completion", Severity::Hard, 5.0, true, "no_harmful_completion"),
    };
    r.selection_rules = {
        {"ToolCall", {"least_privilege", "verify_before_act"}},
        {"MemoryWrite", {"memory_sanitization"}},
        {"Terminate", {"final_pii_check", "final_claim_support"}},
    };
    r.validate();
    return r;
}

contracts::ContractRegistry fault_registry() {
    contracts::ContractRegistry r = default_registry();
    r.id = "fault";
    r.trace_contracts.push_back(trace_def("containment", Severity::Hard, 2.0, false,
                                          "containment", {{"w", 4}, {"w_prime", 3}}));
    r.validate();
    return r;
}

namespace {

AgentSpec agent(const std::string& id, const std::string& role,
                std::vector<std::string> allowed) {
    AgentSpec a;
    a.id = id;
    a.role = role;
    a.role_contract.agent = id;
    a.role_contract.allowed_actions = std::move(allowed);
    return a;
}

gov::ToolDef tool(const std::string& name, trace::Channel channel, bool side_effect,
                  bool verifier) {
    gov::ToolDef t;
    t.name = name;
    t.endpoints = {"default"};
    t.channel = channel;
    t.side_effect = side_effect;
    t.verifier = verifier;
    return t;
}

gov::GovernancePolicy base_policy() {
    gov::GovernancePolicy p;
    p.capabilities["orchestrator"] = {{}, {}, {}};
    p.capabilities["planner"] = {{}, {}, {}};
    p.capabilities["researcher"] = {{"db_lookup", "search_kb", "fetch_docs"}, {}, {}};
    gov::CapabilitySet executor;
    executor.tools = {"db_update", "shipping_status", "send_email", "payment"};
    executor.param_ranges["payment"]["amount"] = {std::nullopt, 1000.0, {}};
    executor.rate_limits = {{"db_update", 3}, {"send_email", 2}};
    p.capabilities["executor"] = executor;
    p.capabilities["verifier"] = {{"verify_claim", "check_policy"}, {}, {}};

    p.shrunk_capabilities["researcher"] = {{"db_lookup"}, {}, {}};
    p.shrunk_capabilities["executor"] = {{"shipping_status"}, {}, {}};

    p.clamp_rules = {{"payment", "amount", 0.0, 500.0}};
    p.sensitive_values = {"123-45-6789", "4111-1111-1111-1111"};
    p.high_impact_tools = {"send_email", "payment", "delete_record", "grant_access"};
    p.approver = {{"payment", gov::ApproverDecision::Approve},
                  {"send_email", gov::ApproverDecision::Deny}};
    p.trust_rho = 0.2;
    p.trust_threshold = 0.5;
    return p;
}

}  // namespace

Config make_config(const Scenario& scenario, gov::Variant variant) {
    Config c;
    c.config_id = std::string("base/") + gov::to_string(variant);
    c.roster = {
        agent("orchestrator", "Orchestrator", {"Message", "Delegate", "Terminate"}),
        agent("planner", "Planner", {"Message", "Delegate", "MemoryRead", "MemoryWrite"}),
        agent("researcher", "Researcher",
              {"ToolCall:db_lookup", "ToolCall:search_kb", "ToolCall:fetch_docs", "Message",
               "MemoryRead", "MemoryWrite"}),
        agent("executor", "Executor",
              {"ToolCall:db_update", "ToolCall:shipping_status", "ToolCall:send_email",
               "ToolCall:payment", "Message", "Terminate"}),
        agent("verifier", "Verifier", {"ToolCall:verify_claim", "ToolCall:check_policy",
                                       "Message"}),
    };
    for (const auto& t :
         {tool("db_lookup", trace::Channel::Tool, false, false),
          tool("db_update", trace::Channel::Tool, true, false),
          tool("shipping_status", trace::Channel::Tool, false, false),
          tool("search_kb", trace::Channel::Retrieval, false, false),
          tool("fetch_docs", trace::Channel::Retrieval, false, false),
          tool("verify_claim", trace::Channel::Tool, false, true),
          tool("check_policy", trace::Channel::Tool, false, true),
          tool("send_email", trace::Channel::Tool, true, false),
          tool("payment", trace::Channel::Tool, true, false),
          tool("delete_record", trace::Channel::Tool, true, false),
          tool("grant_access", trace::Channel::Tool, true, false),
          tool("exfiltrate_data", trace::Channel::Tool, true, false)}) {
        c.tools[t.name] = t;
    }
    c.policy = base_policy();
    for (const auto& [tool_name, decision] : scenario.approver_overrides)
        c.policy.approver[tool_name] = decision;
    c.registry = scenario.registry_id == "fault" ? fault_registry() : default_registry();
    c.variant = variant;
    c.horizon = 20;
    c.start_node = "n0";
    return c;
}

namespace {

Json template_to_json(const ActionTemplate& a) {
    Json j;
    j["type"] = trace::to_string(a.type);
    if (!a.tool.empty()) j["tool"] = a.tool;
    if (!a.endpoint.empty()) j["endpoint"] = a.endpoint;
    if (a.type == trace::ActionType::Terminate) j["term_status"] = trace::to_string(a.term_status);
    Json params = Json::object();
    for (const auto& [k, v] : a.params) params[k] = v;
    j["params"] = params;
    Json claims = Json::array();
    for (const auto& c : a.claims) {
        Json cj;
        cj["label"] = c.label;
        cj["subject"] = c.subject;
        cj["predicate"] = c.predicate;
        cj["value"] = c.value;
        cj["evidence"] = c.evidence;
        claims.push_back(cj);
    }
    j["claims"] = claims;
    j["claim_refs"] = a.claim_refs;
    j["markers"] = a.markers;
    j["complete_subtasks"] = a.complete_subtasks;
    j["add_subtasks"] = a.add_subtasks;
    j["add_approvals"] = a.add_approvals;
    j["resolve_approvals"] = a.resolve_approvals;
    j["inc_retry"] = a.inc_retry;
    j["next_node"] = a.next_node;
    if (!a.on_block_next.empty()) j["on_block_next"] = a.on_block_next;
    return j;
}

ActionTemplate template_from_json(const Json& j) {
    ActionTemplate a;
    a.type = trace::action_type_from(j.at("type").get<std::string>());
    if (j.contains("tool")) a.tool = j["tool"].get<std::string>();
    if (j.contains("endpoint")) a.endpoint = j["endpoint"].get<std::string>();
    if (j.contains("term_status"))
        a.term_status = trace::terminal_status_from(j["term_status"].get<std::string>());
    for (auto it = j.at("params").begin(); it != j.at("params").end(); ++it)
        a.params[it.key()] = it.value();
    for (const auto& cj : j.at("claims")) {
        ClaimTemplate c;
        c.label = cj.at("label").get<std::string>();
        c.subject = cj.at("subject").get<std::string>();
        c.predicate = cj.at("predicate").get<std::string>();
        c.value = cj.at("value").get<std::string>();
        c.evidence = cj.at("evidence").get<std::vector<std::string>>();
        a.claims.push_back(c);
    }
    a.claim_refs = j.at("claim_refs").get<std::vector<std::string>>();
    a.markers = j.at("markers").get<std::vector<std::string>>();
    a.complete_subtasks = j.at("complete_subtasks").get<int>();
    a.add_subtasks = j.at("add_subtasks").get<int>();
    a.add_approvals = j.at("add_approvals").get<int>();
    a.resolve_approvals = j.at("resolve_approvals").get<int>();
    a.inc_retry = j.at("inc_retry").get<bool>();
    a.next_node = j.at("next_node").get<std::string>();
    if (j.contains("on_block_next")) a.on_block_next = j["on_block_next"].get<std::string>();
    return a;
}

}  // namespace

Json to_json(const Scenario& s) {
    Json j;
    j["task"] = to_json(s.task);
    Json rules = Json::array();
    for (const auto& r : s.rules) {
        Json rj;
        rj["node"] = r.node;
        rj["agent"] = r.agent;
        rj["when"] = r.when;
        Json branches = Json::array();
        for (const auto& [w, tmpl] : r.branches) {
            Json bj;
            bj["weight"] = w;
            bj["action"] = template_to_json(tmpl);
            branches.push_back(bj);
        }
        rj["branches"] = branches;
        rules.push_back(rj);
    }
    j["rules"] = rules;
    Json stubs = Json::array();
    for (const auto& st : s.stubs) {
        Json sj;
        sj["tool"] = st.tool;
        sj["endpoint"] = st.endpoint;
        sj["match_params"] = st.match_params;
        sj["response"] = st.response;
        if (!st.stale_response.is_null()) sj["stale_response"] = st.stale_response;
        stubs.push_back(sj);
    }
    j["stubs"] = stubs;
    Json mem = Json::array();
    for (const auto& m : s.memory_preload) {
        Json mj;
        mj["key"] = m.key;
        mj["content"] = m.content;
        mj["trust"] = trace::to_string(m.trust);
        mj["writer"] = m.writer;
        mem.push_back(mj);
    }
    j["memory_preload"] = mem;
    Json app = Json::object();
    for (const auto& [tool_name, d] : s.approver_overrides)
        app[tool_name] = d == gov::ApproverDecision::Approve ? "approve" : "deny";
    j["approver_overrides"] = app;
    j["registry_id"] = s.registry_id;
    j["default_fault_schedule"] = perturb::to_json(s.default_fault_schedule);
    j["expected"] = s.expected;
    return j;
}

Scenario scenario_from_json(const Json& j) {
    Scenario s;
    s.task = task_from_json(j.at("task"));
    for (const auto& rj : j.at("rules")) {
        DecisionRule r;
        r.node = rj.at("node").get<std::string>();
        r.agent = rj.at("agent").get<std::string>();
        r.when = rj.at("when");
        for (const auto& bj : rj.at("branches"))
            r.branches.emplace_back(bj.at("weight").get<double>(),
                                    template_from_json(bj.at("action")));
        s.rules.push_back(r);
    }
    for (const auto& sj : j.at("stubs")) {
        StubEntry st;
        st.tool = sj.at("tool").get<std::string>();
        st.endpoint = sj.at("endpoint").get<std::string>();
        st.match_params = sj.at("match_params");
        st.response = sj.at("response");
        if (sj.contains("stale_response")) st.stale_response = sj["stale_response"];
        s.stubs.push_back(st);
    }
    for (const auto& mj : j.at("memory_preload")) {
        MemoryEntry m;
        m.key = mj.at("key").get<std::string>();
        m.content = mj.at("content");
        m.trust = trace::trust_from(mj.at("trust").get<std::string>());
        m.writer = mj.at("writer").get<std::string>();
        s.memory_preload.push_back(m);
    }
    for (auto it = j.at("approver_overrides").begin(); it != j.at("approver_overrides").end();
         ++it)
        s.approver_overrides[it.key()] = it.value().get<std::string>() == "approve"
                                             ? gov::ApproverDecision::Approve
                                             : gov::ApproverDecision::Deny;
    s.registry_id = j.at("registry_id").get<std::string>();
    s.default_fault_schedule = perturb::schedule_from_json(j.at("default_fault_schedule"));
    s.expected = j.at("expected");
    return s;
}

namespace {
std::vector<Scenario>& extra_scenarios() {
    static std::vector<Scenario> extras;
    return extras;
}
}  // namespace

int load_catalog_dir(const std::string& dir) {
    namespace fs = std::filesystem;
    if (!fs::exists(dir)) throw ConfigError("catalog directory missing: " + dir);
    std::vector<fs::path> files;
    for (const auto& entry : fs::directory_iterator(dir))
        if (entry.path().extension() == ".json") files.push_back(entry.path());
    std::sort(files.begin(), files.end());
    int loaded = 0;
    for (const auto& f : files) {
        std::ifstream in(f);
        Json j;
        try {
            j = Json::parse(in);
        } catch (const Json::exception& e) {
            throw ConfigError("bad scenario file " + f.string() + ": " + e.what());
        }
        Scenario s = scenario_from_json(j);
        if (has_scenario(s.id()))
            throw ConfigError("scenario id already registered: " + s.id());
        extra_scenarios().push_back(std::move(s));
        ++loaded;
    }
    return loaded;
}

void clear_extra_scenarios() { extra_scenarios().clear(); }

const Scenario& find_scenario(const std::string& task_id) {
    for (const auto& s : scenario_catalog())
        if (s.id() == task_id) return s;
    for (const auto& s : extra_scenarios())
        if (s.id() == task_id) return s;
    throw ConfigError("unknown scenario: " + task_id);
}

bool has_scenario(const std::string& task_id) {
    for (const auto& s : scenario_catalog())
        if (s.id() == task_id) return true;
    for (const auto& s : extra_scenarios())
        if (s.id() == task_id) return true;
    return false;
}

}  // namespace matkit::sim
