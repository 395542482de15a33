#pragma once

#include <optional>

#include "matkit/contracts/registry.hpp"
#include "matkit/trace/model.hpp"

namespace matkit::contracts {

using trace::MatRecord;
using trace::Trace;
using trace::Verdict;

/// Step contracts checked for a record, per the registry's selection rules.
/// A deterministic function of the action type.
std::vector<ContractIdStr> select_step_contracts(const MatRecord& record,
                                                 const ContractRegistry& registry);

/// Evaluates the selected step contracts on a record. `prefix` is the trace up
/// to and including the record (window templates look backwards through it).
/// A contract whose predicate throws counts as a Hard violation of itself.
Verdict eval_step(const MatRecord& record, const Trace& prefix,
                  const std::vector<ContractIdStr>& selected, const ContractRegistry& registry,
                  const EvalContext& ctx);

struct TraceFail {
    bool fail = false;
    std::vector<ContractIdStr> violated;  // sorted
};

/// Fail(τ) over the trace contracts. Non-monotone contracts are only
/// evaluated once the prefix has terminated.
TraceFail eval_trace_fail(const Trace& prefix, const ContractRegistry& registry,
                          const EvalContext& ctx);

/// Smallest k such that the potential never decreases across records
/// [k, k+w] and the run had not terminated by the end of that window.
std::optional<int> progress_violation(const Trace& trace, const PotentialSpec& phi, int w);

struct FirstViolation {
    int t = 0;
    AgentId agent;
    std::vector<ContractIdStr> step_ids;   // from the record's verdict
    std::vector<ContractIdStr> trace_ids;  // newly violated trace contracts at t
    std::vector<ContractIdStr> all_ids() const;
};

/// Earliest step whose verdict fails or whose prefix violates a trace
/// contract; step violations listed before trace violations at equal t.
std::optional<FirstViolation> first_violation(const Trace& trace,
                                              const ContractRegistry& registry,
                                              const EvalContext& ctx);

/// Fraction of the agent's acting steps outside its allowed action set.
/// Throws NoStepsForAgent when the agent never acted.
double drift_score(const Trace& trace, const RoleContract& rc);

struct FaultCase {
    int fault_t = 0;
    std::string kind;
    bool contained = false;
    std::optional<int> detect_t;
    std::optional<int> mitigate_t;
};

/// One case per "fault:<kind>" marker: detected within w steps and mitigated
/// within w' more. detect_t/mitigate_t report the earliest satisfying pair.
std::vector<FaultCase> containment_check(const Trace& trace, int w, int w_prime);

struct ContainmentReport {
    std::vector<FaultCase> cases;
    bool final_contracts_pass = true;
};

ContainmentReport containment_report(const Trace& trace, int w, int w_prime,
                                     const ContractRegistry& registry, const EvalContext& ctx);

struct ClaimFlags {
    trace::ClaimId id;
    bool supported = false;
    bool used = false;
};

struct ClaimSupportResult {
    std::optional<double> h_rate;  // absent on an empty claim set
    std::optional<double> h_prop;
    std::vector<ClaimFlags> per_claim;
    bool empty() const { return !h_rate.has_value(); }
};

/// Exact-triple support against ground truth: a claim is supported iff it has
/// at least one resolvable evidence link and its triple appears in the facts.
ClaimSupportResult claim_support(const ClaimSet& claims, const std::vector<Fact>& ground_truth,
                                 const Trace& trace);

/// Collects structured claims and their supports-links out of a trace.
ClaimSet extract_claims(const Trace& trace);

}  // namespace matkit::contracts
