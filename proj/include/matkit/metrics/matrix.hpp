#pragma once

#include <map>
#include <optional>
#include <string>
#include <vector>

#include "matkit/sim/exec.hpp"

namespace matkit::metrics {

struct MediationTally {
    int allow = 0;
    int rewrite = 0;
    int block = 0;
    int hi_allow = 0;
    int hi_rewrite = 0;
    int hi_block = 0;
    int approval_rewrites = 0;

    int proposals() const { return allow + rewrite + block; }
    int hi_proposals() const { return hi_allow + hi_rewrite + hi_block; }
};

struct FaultDetail {
    int fault_t = 0;
    std::string kind;
    bool contained = false;
};

/// Per-run digest the estimators aggregate over; derivable from the serialized
/// trace plus the scenario/config it ran under.
struct TraceSummary {
    std::vector<std::string> violated;       // all violated contract ids, sorted unique
    std::vector<std::string> hard_violated;  // Hard subset
    std::optional<int> t_star;
    std::string t_star_agent;
    std::optional<double> h_rate;
    std::optional<double> h_prop;
    std::vector<FaultDetail> faults;
    bool final_contracts_pass = true;
    bool final_policy_step_violation = false;
    MediationTally mediation;
    std::vector<std::pair<std::string, std::string>> tool_mediations;  // (tool, outcome)
    int steps = 0;
    sim::Category category = sim::Category::ToolUse;
};

struct RunEntry {
    std::string task_id;
    std::uint64_t seed = 0;
    sim::RunOutcome outcome;
    TraceSummary summary;
};

/// Complete grid of outcomes over tasks x seeds for one operating condition.
struct RunMatrix {
    std::vector<std::string> task_ids;
    std::vector<std::uint64_t> seeds;
    std::string condition = "nominal";
    std::vector<RunEntry> entries;  // task-major order

    int n_tasks() const { return static_cast<int>(task_ids.size()); }
    int n_seeds() const { return static_cast<int>(seeds.size()); }
    int n_runs() const { return static_cast<int>(entries.size()); }
    const RunEntry& at(int task, int seed) const;

    /// Grid completeness. Throws EmptyMatrix / ConfigError.
    void validate() const;
};

TraceSummary summarize(const sim::RunResult& run, const sim::Scenario& scenario,
                       const sim::Config& config);

/// Same digest computed from a deserialized trace (replay/report paths).
TraceSummary summarize_trace(const trace::Trace& tr, const sim::Scenario& scenario,
                             const sim::Config& config);

Json to_json(const RunMatrix& m);
RunMatrix matrix_from_json(const Json& j);

}  // namespace matkit::metrics
