#pragma once

#include <map>
#include <string>

#include "matkit/gov/policy.hpp"
#include "matkit/trace/model.hpp"

namespace matkit::gov {

enum class Variant { NoGovernance, Shield, ShieldCaps, ShieldRouting };

const char* to_string(Variant v);
Variant variant_from(const std::string& s);

enum class MediationKind { Allow, Rewrite, Block };

struct MediationOutcome {
    MediationKind kind = MediationKind::Allow;
    trace::Action action;  // governed action: original on Allow, rewritten on Rewrite
    std::string reason;
    bool approval_conversion = false;  // Rewrite that routed through the approver
};

struct TrustScore {
    double value = 1.0;
    int last_update = -1;
};

enum class Route { Normal, ShrinkCaps, VerifierDetour, StrictMediation };

const char* to_string(Route r);

/// Per-run mediation state: rate counters and trust scores. Single-writer,
/// owned by the run that created it.
class Governor {
public:
    Governor(const GovernancePolicy& policy, Variant variant);

    /// Capability + rate-limit authorization. Consumes one rate-limit unit for
    /// the proposal. Throws UnknownAgent.
    bool allow(const trace::Action& action, const AgentId& agent);

    /// Total mediation of a proposed action. Decision order: capability
    /// failure blocks; bounded corrections (clamp, redact, approval
    /// conversion) rewrite; otherwise allow. Consumes one rate-limit unit.
    MediationOutcome mediate(const trace::Action& action, const trace::StateProjection& state,
                             const AgentId& agent, int t);

    /// Re-runs capability/content checks without consuming quota; used to
    /// audit that rewrite outputs are fixed points of mediation.
    MediationKind recheck(const trace::Action& action, const AgentId& agent) const;

    /// EMA over step verdicts: T <- (1-rho)*T + rho*(passed ? 1 : 0).
    void update_trust(const AgentId& agent, bool step_passed, int t);
    TrustScore trust(const AgentId& agent) const;
    void set_trust(const AgentId& agent, double value);  // scenario/test setup

    /// Escalation ladder under ShieldRouting; Normal elsewhere.
    Route route(const AgentId& agent, const trace::Action& action) const;

    Variant variant() const { return variant_; }
    const GovernancePolicy& policy() const { return policy_; }

    /// Stateless trust update rule (exposed for property tests).
    static double trust_step(double current, bool passed, double rho);

private:
    struct Decision;
    Decision decide(const trace::Action& action, const AgentId& agent) const;

    const GovernancePolicy& policy_;
    Variant variant_;
    std::map<AgentId, std::map<std::string, int>> rate_used_;
    std::map<AgentId, TrustScore> trust_;
};

}  // namespace matkit::gov
