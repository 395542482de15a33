#pragma once

#include <string>
#include <vector>

#include "matkit/metrics/estimators.hpp"
#include "matkit/metrics/suite.hpp"
#include "matkit/perturb/search.hpp"

namespace matkit::cli {

enum class Condition { Nominal, Fault, Adversarial };

struct ExperimentSpec {
    std::vector<std::string> scenario_ids;  // empty = whole catalog
    gov::Variant variant = gov::Variant::NoGovernance;
    std::vector<std::uint64_t> seeds = {1, 2, 3};
    Condition condition = Condition::Nominal;
    perturb::Schedule fault_schedule;   // empty = per-scenario default
    std::string search_kind = "exhaustive";  // "random" | "adaptive"
    double budget = 50.0;
    std::vector<double> budget_grid = {0.0, 10.0, 25.0, 50.0};
    std::string out_dir = "out";
    std::uint64_t root_seed = 1;
    int parallelism = 1;
};

ExperimentSpec spec_from_json(const Json& j);
ExperimentSpec load_spec(const std::string& path);

/// Standard enumerable operator space for a scenario: its default fault
/// operators offered at every early step.
perturb::CandidateSpace standard_space(const sim::Scenario& scenario, int max_step = 5);

/// Executes a task x seed grid under one condition and summarizes it.
metrics::RunMatrix run_grid(const ExperimentSpec& spec, const perturb::Schedule& schedule,
                            const std::string& condition_label,
                            const std::string& trace_dir = "");

/// Exit codes: 0 no hard trace-contract failures, 1 some, 2 usage/config
/// error (thrown as ConfigError and mapped by the caller).
int cmd_run(const ExperimentSpec& spec);
int cmd_stress(const ExperimentSpec& spec);
int cmd_replay(const std::string& bundle_dir);
int cmd_regress(const ExperimentSpec& spec, gov::Variant old_variant, gov::Variant new_variant,
                const std::string& replay_dir = "");
int cmd_suite_select(const std::string& replay_dir, const std::string& out_file);
int cmd_report(const std::string& matrix_file, const std::string& out_dir);

/// Exit code recomputed purely from a written matrix artifact.
int exit_code_for_matrix(const std::string& matrix_file);

}  // namespace matkit::cli
