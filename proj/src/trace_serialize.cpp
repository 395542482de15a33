#include "matkit/trace/serialize.hpp"

#include <sstream>

namespace matkit::trace {

namespace {

Json params_to_json(const ParamMap& m) {
    Json j = Json::object();
    for (const auto& [k, v] : m) j[k] = v;
    return j;
}

ParamMap params_from_json(const Json& j) {
    ParamMap m;
    for (auto it = j.begin(); it != j.end(); ++it) m[it.key()] = it.value();
    return m;
}

}  // namespace

Json to_json(const StateProjection& s) {
    Json j;
    j["memory_digest"] = s.memory_digest;
    j["unresolved_subtasks"] = s.unresolved_subtasks;
    j["pending_approvals"] = s.pending_approvals;
    j["active_retries"] = s.active_retries;
    j["redacted_params"] = s.redacted_params;
    return j;
}

StateProjection state_from_json(const Json& j) {
    StateProjection s;
    s.memory_digest = j.at("memory_digest").get<std::string>();
    s.unresolved_subtasks = j.at("unresolved_subtasks").get<int>();
    s.pending_approvals = j.at("pending_approvals").get<int>();
    s.active_retries = j.at("active_retries").get<int>();
    s.redacted_params = j.at("redacted_params").get<std::map<std::string, std::string>>();
    return s;
}

Json to_json(const Action& a) {
    Json k;
    k["type"] = to_string(a.kind.type);
    if (a.kind.type == ActionType::ToolCall) {
        k["tool"] = a.kind.tool;
        k["endpoint"] = a.kind.endpoint;
    }
    if (a.kind.type == ActionType::Terminate && a.kind.status)
        k["status"] = to_string(*a.kind.status);
    Json j;
    j["kind"] = k;
    j["params"] = params_to_json(a.params);
    j["risk"] = to_string(a.risk);
    j["claim_refs"] = a.claim_refs;
    return j;
}

Action action_from_json(const Json& j) {
    Action a;
    const Json& k = j.at("kind");
    a.kind.type = action_type_from(k.at("type").get<std::string>());
    if (k.contains("tool")) a.kind.tool = k["tool"].get<std::string>();
    if (k.contains("endpoint")) a.kind.endpoint = k["endpoint"].get<std::string>();
    if (k.contains("status")) a.kind.status = terminal_status_from(k["status"].get<std::string>());
    a.params = params_from_json(j.at("params"));
    a.risk = risk_from(j.at("risk").get<std::string>());
    a.claim_refs = j.at("claim_refs").get<std::vector<std::string>>();
    return a;
}

Json to_json(const Observation& o) {
    Json j;
    j["payload"] = params_to_json(o.payload);
    j["channel"] = to_string(o.channel);
    if (o.error_code) j["error_code"] = *o.error_code;
    j["trust"] = to_string(o.trust);
    return j;
}

Observation observation_from_json(const Json& j) {
    Observation o;
    o.payload = params_from_json(j.at("payload"));
    o.channel = channel_from(j.at("channel").get<std::string>());
    if (j.contains("error_code")) o.error_code = j["error_code"].get<std::string>();
    o.trust = trust_from(j.at("trust").get<std::string>());
    return o;
}

Json to_json(const Verdict& v) {
    Json j;
    j["pass"] = v.pass;
    j["violations"] = v.violations;
    j["severity"] = to_string(v.severity);
    j["mitigation"] = to_string(v.mitigation);
    return j;
}

Verdict verdict_from_json(const Json& j) {
    Verdict v;
    v.pass = j.at("pass").get<bool>();
    v.violations = j.at("violations").get<std::vector<std::string>>();
    v.severity = severity_from(j.at("severity").get<std::string>());
    v.mitigation = mitigation_from(j.at("mitigation").get<std::string>());
    return v;
}

Json to_json(const MatRecord& r) {
    Json j;
    j["t"] = r.t;
    j["agent"] = r.agent;
    j["role"] = r.role;
    j["state"] = to_json(r.state);
    j["action"] = to_json(r.action);
    j["observation"] = to_json(r.observation);
    Json prov = Json::array();
    for (const auto& p : r.provenance) {
        Json link;
        link["src"] = p.src;
        link["rel"] = to_string(p.rel);
        link["dst"] = p.dst;
        prov.push_back(link);
    }
    j["provenance"] = prov;
    j["checked"] = r.checked_contracts;
    j["verdict"] = to_json(r.verdict);
    j["annotations"] = r.annotations;
    return j;
}

MatRecord record_from_json(const Json& j) {
    MatRecord r;
    r.t = j.at("t").get<int>();
    r.agent = j.at("agent").get<std::string>();
    r.role = j.at("role").get<std::string>();
    r.state = state_from_json(j.at("state"));
    r.action = action_from_json(j.at("action"));
    r.observation = observation_from_json(j.at("observation"));
    for (const auto& p : j.at("provenance")) {
        r.provenance.push_back({p.at("src").get<std::string>(),
                                prov_rel_from(p.at("rel").get<std::string>()),
                                p.at("dst").get<std::string>()});
    }
    r.checked_contracts = j.at("checked").get<std::vector<std::string>>();
    r.verdict = verdict_from_json(j.at("verdict"));
    r.annotations = j.at("annotations").get<std::vector<std::string>>();
    return r;
}

Json to_json(const RunKey& k) {
    Json j;
    j["task_id"] = k.task_id;
    j["config_id"] = k.config_id;
    j["seed"] = k.seed;
    j["schedule_id"] = k.schedule_id;
    return j;
}

RunKey run_key_from_json(const Json& j) {
    RunKey k;
    k.task_id = j.at("task_id").get<std::string>();
    k.config_id = j.at("config_id").get<std::string>();
    k.seed = j.at("seed").get<std::uint64_t>();
    k.schedule_id = j.at("schedule_id").get<std::string>();
    return k;
}

std::string serialize_trace(const Trace& trace) {
    std::ostringstream out;
    Json header;
    header["schema"] = kTraceSchema;
    header["run_key"] = to_json(trace.run_key);
    header["horizon"] = trace.horizon;
    out << header.dump() << '\n';
    for (const auto& r : trace.records) out << to_json(r).dump() << '\n';
    return out.str();
}

Trace deserialize_trace(const std::string& bytes) {
    Trace trace;
    std::istringstream in(bytes);
    std::string line;
    int line_no = 0;
    bool header_seen = false;
    bool ended = bytes.empty() || bytes.back() == '\n';
    int total_lines = 0;
    for (char c : bytes)
        if (c == '\n') ++total_lines;
    if (!ended) throw MalformedRecord(total_lines + 1, "truncated final line");
    while (std::getline(in, line)) {
        ++line_no;
        if (line.empty()) throw MalformedRecord(line_no, "empty line");
        Json j;
        try {
            j = Json::parse(line);
        } catch (const Json::exception& e) {
            throw MalformedRecord(line_no, e.what());
        }
        try {
            if (!header_seen) {
                if (j.at("schema").get<std::string>() != kTraceSchema)
                    throw Error("unknown schema");
                trace.run_key = run_key_from_json(j.at("run_key"));
                trace.horizon = j.at("horizon").get<int>();
                header_seen = true;
            } else {
                trace.records.push_back(record_from_json(j));
            }
        } catch (const MalformedRecord&) {
            throw;
        } catch (const std::exception& e) {
            throw MalformedRecord(line_no, e.what());
        }
    }
    if (!header_seen) throw MalformedRecord(1, "missing header line");
    return trace;
}

}  // namespace matkit::trace
