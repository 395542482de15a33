#include "matkit/metrics/suite.hpp"

#include <algorithm>
#include <set>

#include "matkit/trace/serialize.hpp"

namespace matkit::metrics {

namespace {

std::string interface_of(trace::Channel c) {
    switch (c) {
        case trace::Channel::Retrieval: return "Retrieval";
        case trace::Channel::Memory: return "Memory";
        case trace::Channel::Tool:
        case trace::Channel::User: return "Service";
    }
    return "Service";
}

}  // namespace

FailureSignature signature(const sim::ReplayRecord& rr) {
    FailureSignature sig;
    trace::Trace tr = trace::deserialize_trace(rr.trace_bytes);
    contracts::ContractRegistry registry =
        contracts::registry_from_json(rr.config_snapshot.at("registry"));
    if (!rr.first_violation || rr.first_violation->contract_ids.empty())
        throw Error("replay record carries no first violation");
    int t_star = rr.first_violation->t;
    sig.contract_id = rr.first_violation->contract_ids.front();
    sig.severity = registry.severity_of(sig.contract_id);
    for (const auto& r : tr.records) {
        if (r.t != t_star) continue;
        sig.action = r.action.kind.type;
        sig.risk = r.action.risk;
        sig.interface_class = interface_of(r.observation.channel);
    }
    sig.op_family = "None";
    for (const auto& [t, ops] : rr.schedule.ops) {
        if (t > t_star || ops.empty()) continue;
        sig.op_family = perturb::to_string(ops.back().family);
    }
    return sig;
}

std::vector<std::string> coverage_units(const sim::ReplayRecord& rr) {
    std::set<std::string> units;
    if (rr.first_violation) {
        contracts::ContractRegistry registry =
            contracts::registry_from_json(rr.config_snapshot.at("registry"));
        for (const auto& id : rr.first_violation->contract_ids)
            if (registry.severity_of(id) == trace::Severity::Hard)
                units.insert("contract:" + id);
    }
    FailureSignature sig = signature(rr);
    units.insert("iface:" + sig.interface_class + "/" + trace::to_string(sig.action));
    return {units.begin(), units.end()};
}

SuiteSelection select_suite(const std::vector<ReplayUnits>& replays,
                            const std::vector<std::string>& nominal_ids) {
    SuiteSelection out;
    out.nominals = nominal_ids;
    std::set<std::string> universe;
    for (const auto& r : replays)
        for (const auto& u : r.units) universe.insert(u);
    out.covered.assign(universe.begin(), universe.end());

    std::set<std::string> uncovered = universe;
    std::set<std::string> used;
    while (!uncovered.empty()) {
        std::string best_id;
        int best_gain = 0;
        for (const auto& r : replays) {
            if (used.count(r.id)) continue;
            int gain = 0;
            for (const auto& u : r.units)
                if (uncovered.count(u)) ++gain;
            if (gain > best_gain || (gain == best_gain && gain > 0 && r.id < best_id)) {
                best_gain = gain;
                best_id = r.id;
            }
        }
        if (best_gain == 0) break;  // nothing else coverable
        used.insert(best_id);
        out.chosen.push_back(best_id);
        for (const auto& r : replays) {
            if (r.id != best_id) continue;
            for (const auto& u : r.units) uncovered.erase(u);
        }
    }
    return out;
}

Json to_json(const FailureSignature& s) {
    Json j;
    j["contract_id"] = s.contract_id;
    j["severity"] = trace::to_string(s.severity);
    j["action"] = trace::to_string(s.action);
    j["interface"] = s.interface_class;
    j["risk"] = trace::to_string(s.risk);
    j["op_family"] = s.op_family;
    return j;
}

Json to_json(const SuiteSelection& s) {
    Json j;
    j["chosen"] = s.chosen;
    j["covered_units"] = s.covered;
    j["nominals"] = s.nominals;
    return j;
}

}  // namespace matkit::metrics
