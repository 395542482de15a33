#pragma once

#include "matkit/metrics/matrix.hpp"
#include "matkit/sim/replay.hpp"

namespace matkit::metrics {

/// Coverage index of one stored counterexample, derived purely from the
/// replay bundle and its trace.
struct FailureSignature {
    std::string contract_id;  // first violated contract
    trace::Severity severity = trace::Severity::Soft;
    trace::ActionType action = trace::ActionType::Message;
    std::string interface_class;  // "Service" | "Retrieval" | "Memory"
    trace::RiskLabel risk = trace::RiskLabel::LowImpact;
    std::string op_family;  // operator family of the schedule at/ before t*, or "None"
};

FailureSignature signature(const sim::ReplayRecord& rr);

/// Coverage units: every violated hard contract, plus the representative
/// (interface, action kind) pair.
std::vector<std::string> coverage_units(const sim::ReplayRecord& rr);

struct ReplayUnits {
    std::string id;
    std::vector<std::string> units;
};

struct SuiteSelection {
    std::vector<std::string> chosen;   // replay ids, greedy order
    std::vector<std::string> covered;  // all coverable units, sorted
    std::vector<std::string> nominals;
};

/// Greedy set cover over the replay units; ties broken by replay id. Nominal
/// entries ride along unconditionally.
SuiteSelection select_suite(const std::vector<ReplayUnits>& replays,
                            const std::vector<std::string>& nominal_ids);

Json to_json(const FailureSignature& s);
Json to_json(const SuiteSelection& s);

}  // namespace matkit::metrics
