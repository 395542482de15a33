#pragma once

#include <optional>

#include "matkit/contracts/eval.hpp"
#include "matkit/perturb/operators.hpp"
#include "matkit/sim/exec.hpp"

namespace matkit::perturb {

/// Enumerable search space: atomic (step, operator) options combined into
/// schedules of up to max_combo entries.
struct CandidateSpace {
    std::vector<std::pair<int, Operator>> options;
    int max_combo = 2;
    long long enumeration_cap = 100000;
};

struct Counterexample {
    Schedule schedule;
    double cost = 0.0;
    sim::RunResult run;  // confirmed failing execution
    std::optional<contracts::FirstViolation> first_violation;
};

struct SearchResult {
    std::optional<Counterexample> best;
    long long evaluated = 0;
    std::vector<double> episode_scores;  // adaptive search only
};

/// Weighted violation score of one record over its checked step contracts.
double vio_score(const trace::MatRecord& record, const contracts::ContractRegistry& registry);

/// Throws FamilyChannelMismatch if the schedule contains non-fault-family
/// (PromptContext) operators; fault injection is restricted to the service,
/// retrieval, and memory boundaries.
void validate_fault_schedule(const Schedule& schedule);

/// Fraction of replica pairs that disagree on the run-fail verdict under
/// distinct seeds. Requires >= 2 seeds.
double instab(const sim::Scenario& scenario, const sim::Config& config,
              const Schedule& schedule, const std::vector<std::uint64_t>& seeds);

/// Greedy delta-debugging: drops schedule entries one at a time while the
/// trace-contract failure persists.
Schedule minimize_schedule(const sim::Scenario& scenario, const sim::Config& config,
                           std::uint64_t seed, const Schedule& failing);

/// Full enumeration; returns the cost-minimal in-budget counterexample, ties
/// broken by (cost, schedule id). Throws SpaceTooLarge past enumeration_cap.
SearchResult search_exhaustive(const sim::Scenario& scenario, const sim::Config& config,
                               std::uint64_t seed, const CandidateSpace& space,
                               const CostModel& model);

/// Seeded random sampling of in-budget schedules.
SearchResult search_random(const sim::Scenario& scenario, const sim::Config& config,
                           std::uint64_t seed, const CandidateSpace& space,
                           const CostModel& model, int trials, std::uint64_t search_seed);

struct AdaptiveParams {
    double gamma = 0.95;
    double beta = 0.01;
    double lambda = 1.0;
    int episodes = 30;
    double epsilon = 0.3;
    int instab_replicas = 3;
};

/// Discounted per-step adversary return for one executed run:
/// sum_t gamma^t * (vio(r_t) - beta * cost(delta_t)).
double adaptive_return(const sim::RunResult& run, const contracts::ContractRegistry& registry,
                       const CostModel& model, double gamma, double beta);

/// Epsilon-greedy bandit over (observation bucket, operator) choices; hard
/// budget enforced during the episode; instability penalizes flaky schedules.
SearchResult search_adaptive(const sim::Scenario& scenario, const sim::Config& config,
                             std::uint64_t seed, const CandidateSpace& space,
                             const CostModel& model, const AdaptiveParams& params,
                             std::uint64_t search_seed);

}  // namespace matkit::perturb
