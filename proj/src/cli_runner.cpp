#include "matkit/cli/runner.hpp"

#include <atomic>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <thread>

#include "matkit/sim/replay.hpp"
#include "matkit/trace/serialize.hpp"

namespace matkit::cli {

namespace fs = std::filesystem;

namespace {

void write_text(const fs::path& p, const std::string& content) {
    if (!p.parent_path().empty()) fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary);
    if (!out) throw Error("cannot write " + p.string());
    out << content;
}

std::string read_text(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw ConfigError("cannot read " + p.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return buf.str();
}

std::vector<std::string> resolve_scenarios(const ExperimentSpec& spec) {
    std::vector<std::string> ids = spec.scenario_ids;
    if (ids.empty())
        for (const auto& s : sim::scenario_catalog()) ids.push_back(s.id());
    for (const auto& id : ids)
        if (!sim::has_scenario(id)) throw ConfigError("unknown scenario id: " + id);
    return ids;
}

Json ci_json(const std::optional<metrics::ConfidenceInterval>& ci) {
    if (!ci) return Json();
    Json j;
    j["lower"] = ci->lower;
    j["upper"] = ci->upper;
    j["method"] = ci->method;
    j["level"] = ci->level;
    return j;
}

}  // namespace

ExperimentSpec spec_from_json(const Json& j) {
    ExperimentSpec spec;
    if (j.contains("scenarios")) {
        if (j["scenarios"].is_string() && j["scenarios"] == "all")
            spec.scenario_ids.clear();
        else
            spec.scenario_ids = j["scenarios"].get<std::vector<std::string>>();
    }
    if (j.contains("variant")) spec.variant = gov::variant_from(j["variant"].get<std::string>());
    if (j.contains("seeds")) spec.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (spec.seeds.empty()) throw ConfigError("spec needs at least one seed");
    if (j.contains("condition")) {
        const Json& c = j["condition"];
        std::string type = c.value("type", "nominal");
        if (type == "nominal")
            spec.condition = Condition::Nominal;
        else if (type == "fault")
            spec.condition = Condition::Fault;
        else if (type == "adversarial")
            spec.condition = Condition::Adversarial;
        else
            throw ConfigError("unknown condition type: " + type);
        if (c.contains("schedule"))
            spec.fault_schedule = perturb::schedule_from_json(c["schedule"]);
        if (c.contains("search")) spec.search_kind = c["search"].get<std::string>();
        if (c.contains("budget")) spec.budget = c["budget"].get<double>();
        if (c.contains("budget_grid"))
            spec.budget_grid = c["budget_grid"].get<std::vector<double>>();
    }
    if (j.contains("out_dir")) spec.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("root_seed")) spec.root_seed = j["root_seed"].get<std::uint64_t>();
    if (j.contains("parallelism")) spec.parallelism = j["parallelism"].get<int>();
    return spec;
}

ExperimentSpec load_spec(const std::string& path) {
    Json j;
    try {
        j = Json::parse(read_text(path));
    } catch (const Json::exception& e) {
        throw ConfigError("bad spec file " + path + ": " + e.what());
    }
    return spec_from_json(j);
}

perturb::CandidateSpace standard_space(const sim::Scenario& scenario, int max_step) {
    perturb::CandidateSpace space;
    std::vector<perturb::Operator> kinds;
    for (const auto& [t, ops] : scenario.default_fault_schedule.ops)
        for (const auto& op : ops) {
            bool seen = false;
            for (const auto& k : kinds)
                if (k.kind == op.kind && k.target == op.target) seen = true;
            if (!seen) kinds.push_back(op);
        }
    for (int t = 0; t <= max_step; ++t)
        for (const auto& op : kinds) space.options.emplace_back(t, op);
    space.max_combo = 2;
    return space;
}

metrics::RunMatrix run_grid(const ExperimentSpec& spec, const perturb::Schedule& schedule,
                            const std::string& condition_label, const std::string& trace_dir) {
    std::vector<std::string> ids = resolve_scenarios(spec);
    metrics::RunMatrix matrix;
    matrix.task_ids = ids;
    matrix.seeds = spec.seeds;
    matrix.condition = condition_label;
    matrix.entries.resize(ids.size() * spec.seeds.size());

    struct Cell {
        int task;
        int seed;
    };
    std::vector<Cell> cells;
    for (std::size_t i = 0; i < ids.size(); ++i)
        for (std::size_t s = 0; s < spec.seeds.size(); ++s)
            cells.push_back({static_cast<int>(i), static_cast<int>(s)});

    auto run_cell = [&](const Cell& cell) {
        const sim::Scenario& scenario = sim::find_scenario(ids[static_cast<std::size_t>(cell.task)]);
        sim::Config config = sim::make_config(scenario, spec.variant);
        perturb::Schedule sched = schedule;
        if (spec.condition == Condition::Fault && schedule.empty())
            sched = scenario.default_fault_schedule;
        std::uint64_t seed = spec.seeds[static_cast<std::size_t>(cell.seed)];
        sim::RunResult run = sim::exec(scenario, config, seed, sched);
        metrics::RunEntry entry;
        entry.task_id = scenario.id();
        entry.seed = seed;
        entry.outcome = run.outcome;
        entry.summary = metrics::summarize(run, scenario, config);
        matrix.entries[static_cast<std::size_t>(cell.task) * spec.seeds.size() +
                       static_cast<std::size_t>(cell.seed)] = entry;
        if (!trace_dir.empty()) {
            fs::path p = fs::path(trace_dir) / scenario.id() /
                         gov::to_string(spec.variant) /
                         ("seed" + std::to_string(seed)) / "trace.mat";
            write_text(p, trace::serialize_trace(run.trace));
        }
    };

    if (spec.parallelism <= 1) {
        for (const auto& cell : cells) run_cell(cell);
    } else {
        std::atomic<std::size_t> next{0};
        auto worker = [&]() {
            while (true) {
                std::size_t i = next.fetch_add(1);
                if (i >= cells.size()) return;
                run_cell(cells[i]);
            }
        };
        std::vector<std::thread> pool;
        for (int i = 0; i < spec.parallelism; ++i) pool.emplace_back(worker);
        for (auto& th : pool) th.join();
    }
    matrix.validate();
    return matrix;
}

namespace {

Json nominal_table(const metrics::RunMatrix& m) {
    Json j;
    j["condition"] = m.condition;
    metrics::Estimate succ = metrics::success_rate(m);
    j["success"] = succ.value;
    j["success_ci"] = ci_json(succ.ci);
    j["success_at_k"] = metrics::success_at_k(m, m.n_seeds());
    metrics::Estimate n = metrics::ntr(m);
    j["ntr"] = n.value;
    j["ntr_ci"] = ci_json(n.ci);
    metrics::Estimate f = metrics::fail_rate(m);
    j["contract_fail"] = f.value;
    j["contract_fail_ci"] = ci_json(f.ci);
    long long tool_calls = 0, steps = 0;
    for (const auto& e : m.entries) {
        tool_calls += e.outcome.tool_call_count;
        steps += e.summary.steps;
    }
    j["tool_calls_per_run"] = static_cast<double>(tool_calls) / m.n_runs();
    j["steps_per_run"] = static_cast<double>(steps) / m.n_runs();
    try {
        metrics::TokenEfficiency te = metrics::token_efficiency(m);
        j["tokens_per_success"] = te.value;
        j["tokens_per_success_ci"] = ci_json(te.ci);
    } catch (const NoSuccesses&) {
        j["tokens_per_success"] = Json();
    }
    metrics::FactualityAggregate h = metrics::factuality_aggregate(m);
    if (h.h_rate) {
        j["h_rate"] = *h.h_rate;
        j["h_prop"] = *h.h_prop;
    }
    j["h_excluded_runs"] = h.excluded;
    auto episodes = metrics::episodes_from_matrix(m);
    metrics::MtbfEstimate mt = metrics::mtbf(episodes);
    j["mtbf_steps"] = mt.value;
    j["mtbf_censored_episodes"] = mt.censored;
    j["mtbf_lower_bound"] = mt.lower_bound;
    std::vector<double> lengths;
    for (const auto& ep : episodes) lengths.push_back(ep.steps_to_failure);
    auto mtbf_ci = metrics::bootstrap_ci(
        lengths,
        [](const std::vector<double>& v) -> std::optional<double> {
            double s = 0;
            for (double x : v) s += x;
            return s / static_cast<double>(v.size());
        },
        1000, 17);
    j["mtbf_ci"] = ci_json(mtbf_ci);
    std::map<std::string, std::pair<int, int>> per_cat;
    for (const auto& e : m.entries) {
        auto& cell = per_cat[sim::to_string(e.summary.category)];
        cell.second += 1;
        cell.first += e.outcome.task_success;
    }
    Json cats = Json::object();
    for (const auto& [cat, kv] : per_cat)
        cats[cat] = static_cast<double>(kv.first) / kv.second;
    j["success_by_category"] = cats;
    return j;
}

Json fault_table(const metrics::RunMatrix& m) {
    Json j;
    j["condition"] = m.condition;
    try {
        metrics::ContainmentStats cr = metrics::containment_rate(m);
        j["containment_rate"] = cr.rate;
        j["faults_injected"] = cr.injected;
        j["faults_contained"] = cr.contained;
        Json by_kind = Json::object();
        for (const auto& [kind, kv] : cr.by_kind)
            by_kind[kind] = {{"contained", kv.first}, {"injected", kv.second}};
        j["by_kind"] = by_kind;
        j["residual_harm"] = metrics::residual_harm(m);
    } catch (const NoFaultsInjected&) {
        j["containment_rate"] = Json();
        j["faults_injected"] = 0;
    }
    metrics::MediationStats med = metrics::mediation_stats(m);
    j["mediation"] = {{"allow", med.p_allow},
                      {"rewrite", med.p_rewrite},
                      {"block", med.p_block},
                      {"proposals", med.proposals}};
    j["blocked_high_impact"] = metrics::blocked_high_impact(m);
    metrics::MisuseRates mis = metrics::misuse_outcomes(m);
    if (mis.runs > 0)
        j["misuse"] = {{"refusal", mis.refusal},
                       {"harmful_completion", mis.harmful},
                       {"partial_contained", mis.partial},
                       {"runs", mis.runs}};
    return j;
}

Json violation_profile(const metrics::RunMatrix& m) {
    // Profile is ranked against the union registry (default + containment).
    contracts::ContractRegistry registry = sim::fault_registry();
    metrics::ContractProfile profile = metrics::per_contract_profile(m, registry);
    Json j;
    auto rows = [](const std::vector<metrics::ContractProfileRow>& v) {
        Json arr = Json::array();
        for (const auto& r : v)
            arr.push_back({{"id", r.id}, {"rate", r.rate}, {"count", r.count}});
        return arr;
    };
    j["hard"] = rows(profile.hard);
    j["soft"] = rows(profile.soft);
    metrics::FirstViolationStats fv = metrics::first_violation_stats(m);
    Json hist = Json::object();
    for (const auto& [t, c] : fv.t_histogram) hist[std::to_string(t)] = c;
    j["t_star_histogram"] = hist;
    j["t_star_agents"] = fv.agent_counts;
    metrics::ExcessiveAgency ea = metrics::excessive_agency(m);
    j["unsafe_action_rate"] = ea.rate;
    j["unsafe_action_epsilon"] = ea.epsilon;
    j["excessive_agency"] = ea.exceeds;
    return j;
}

Json spec_echo(const ExperimentSpec& spec, const std::string& condition) {
    Json j;
    j["scenarios"] = spec.scenario_ids.empty() ? Json("all") : Json(spec.scenario_ids);
    j["variant"] = gov::to_string(spec.variant);
    j["seeds"] = spec.seeds;
    j["condition"] = condition;
    j["root_seed"] = spec.root_seed;
    j["budget"] = spec.budget;
    return j;
}

bool matrix_has_hard_trace_failure(const metrics::RunMatrix& m) {
    for (const auto& e : m.entries)
        if (e.outcome.contract_fail == 1) return true;
    return false;
}

}  // namespace

int exit_code_for_matrix(const std::string& matrix_file) {
    metrics::RunMatrix m = metrics::matrix_from_json(Json::parse(read_text(matrix_file)));
    return matrix_has_hard_trace_failure(m) ? 1 : 0;
}

int cmd_run(const ExperimentSpec& spec) {
    fs::path out(spec.out_dir);
    fs::create_directories(out);
    const char* cond_label = spec.condition == Condition::Adversarial ? "adversarial"
                             : spec.condition == Condition::Fault     ? "fault"
                                                                      : "nominal";
    write_text(out / "spec_used.json", spec_echo(spec, cond_label).dump(2) + "\n");

    if (spec.condition == Condition::Adversarial) {
        // One matrix per budget; the adversarial schedule is chosen per task.
        std::vector<metrics::RunMatrix> matrices;
        std::vector<std::string> ids = resolve_scenarios(spec);
        for (double budget : spec.budget_grid) {
            metrics::RunMatrix m;
            m.task_ids = ids;
            m.seeds = spec.seeds;
            m.condition = "adversarial/B=" + std::to_string(budget);
            perturb::CostModel model;
            model.budget = budget;
            for (const auto& id : ids) {
                const sim::Scenario& scenario = sim::find_scenario(id);
                sim::Config config = sim::make_config(scenario, spec.variant);
                perturb::CandidateSpace space = standard_space(scenario);
                perturb::Schedule chosen;  // empty unless a counterexample exists
                if (budget > 0.0) {
                    perturb::SearchResult sr;
                    try {
                        sr = perturb::search_exhaustive(scenario, config, spec.root_seed,
                                                        space, model);
                    } catch (const SpaceTooLarge&) {
                        sr = perturb::search_adaptive(scenario, config, spec.root_seed, space,
                                                      model, {}, spec.root_seed);
                    }
                    if (sr.best) chosen = sr.best->schedule;
                }
                for (auto seed : spec.seeds) {
                    sim::RunResult run = sim::exec(scenario, config, seed, chosen);
                    metrics::RunEntry e;
                    e.task_id = id;
                    e.seed = seed;
                    e.outcome = run.outcome;
                    e.summary = metrics::summarize(run, scenario, config);
                    m.entries.push_back(e);
                }
            }
            m.validate();
            matrices.push_back(std::move(m));
        }
        std::vector<std::pair<double, const metrics::RunMatrix*>> grid;
        for (std::size_t i = 0; i < matrices.size(); ++i)
            grid.emplace_back(spec.budget_grid[i], &matrices[i]);
        metrics::RobustnessCurve curve = metrics::robustness_curve(grid);
        Json cj;
        Json points = Json::array();
        for (const auto& p : curve.points)
            points.push_back({{"budget", p.budget}, {"success", p.success}});
        cj["points"] = points;
        cj["area"] = curve.area;
        write_text(out / "robustness_curve.json", cj.dump(2) + "\n");
        const metrics::RunMatrix& last = matrices.back();
        write_text(out / "matrix.json", metrics::to_json(last).dump(2) + "\n");
        write_text(out / "violation_profile.json", violation_profile(last).dump(2) + "\n");
        return exit_code_for_matrix((out / "matrix.json").string());
    }

    std::string label = spec.condition == Condition::Fault ? "fault" : "nominal";
    if (spec.condition == Condition::Fault && !spec.fault_schedule.empty())
        perturb::validate_fault_schedule(spec.fault_schedule);
    metrics::RunMatrix m =
        run_grid(spec, spec.fault_schedule, label, (out / "traces").string());
    write_text(out / "matrix.json", metrics::to_json(m).dump(2) + "\n");
    write_text(out / "nominal_table.json", nominal_table(m).dump(2) + "\n");
    if (spec.condition == Condition::Fault)
        write_text(out / "fault_table.json", fault_table(m).dump(2) + "\n");
    write_text(out / "violation_profile.json", violation_profile(m).dump(2) + "\n");
    return exit_code_for_matrix((out / "matrix.json").string());
}

int cmd_stress(const ExperimentSpec& spec) {
    fs::path out(spec.out_dir);
    fs::create_directories(out);
    write_text(out / "spec_used.json", spec_echo(spec, "adversarial").dump(2) + "\n");
    perturb::CostModel model;
    model.budget = spec.budget;
    Json report = Json::array();
    for (const auto& id : resolve_scenarios(spec)) {
        const sim::Scenario& scenario = sim::find_scenario(id);
        sim::Config config = sim::make_config(scenario, spec.variant);
        perturb::CandidateSpace space = standard_space(scenario);
        perturb::SearchResult sr;
        if (spec.search_kind == "exhaustive")
            sr = perturb::search_exhaustive(scenario, config, spec.root_seed, space, model);
        else if (spec.search_kind == "random")
            sr = perturb::search_random(scenario, config, spec.root_seed, space, model, 64,
                                        spec.root_seed);
        else if (spec.search_kind == "adaptive")
            sr = perturb::search_adaptive(scenario, config, spec.root_seed, space, model, {},
                                          spec.root_seed);
        else
            throw ConfigError("unknown search kind: " + spec.search_kind);
        Json entry;
        entry["scenario"] = id;
        entry["evaluated"] = sr.evaluated;
        if (sr.best) {
            sim::ReplayRecord rr = sim::build_replay(scenario, config, sr.best->run);
            std::string bundle = (out / "bundles" / (id + "_" + hash8(sr.best->schedule.id())))
                                     .string();
            sim::write_bundle(rr, bundle);
            entry["found"] = true;
            entry["cost"] = sr.best->cost;
            entry["schedule"] = sr.best->schedule.id();
            entry["bundle"] = bundle;
            if (sr.best->first_violation) {
                entry["first_violation_t"] = sr.best->first_violation->t;
                entry["first_violation_ids"] = sr.best->first_violation->all_ids();
                std::cout << id << ": counterexample cost " << sr.best->cost << ", first "
                          << sr.best->first_violation->all_ids().front() << " at t="
                          << sr.best->first_violation->t << "\n";
            }
        } else {
            entry["found"] = false;
            std::cout << id << ": no counterexample within budget " << spec.budget << "\n";
        }
        report.push_back(entry);
    }
    write_text(out / "stress_report.json", report.dump(2) + "\n");
    return 0;
}

int cmd_replay(const std::string& bundle_dir) {
    sim::ReplayRecord rr = sim::read_bundle(bundle_dir);
    trace::Trace replayed = sim::replay(rr);
    std::string bytes = trace::serialize_trace(replayed);
    bool identical = bytes == rr.trace_bytes;
    const sim::Scenario& scenario = sim::find_scenario(rr.run_key.task_id);
    sim::Config config = sim::config_from_snapshot(rr.config_snapshot);
    sim::EvalBundle eval = sim::make_eval(config, scenario.task);
    auto fv = contracts::first_violation(replayed, config.registry, eval.ctx);
    bool fv_match;
    if (rr.first_violation.has_value() != fv.has_value())
        fv_match = false;
    else if (!fv)
        fv_match = true;
    else
        fv_match = fv->t == rr.first_violation->t &&
                   fv->all_ids() == rr.first_violation->contract_ids;
    std::cout << "trace " << (identical ? "identical" : "DIFFERS") << ", first_violation "
              << (fv_match ? "matches" : "DIFFERS") << "\n";
    return identical && fv_match ? 0 : 1;
}

int cmd_regress(const ExperimentSpec& spec, gov::Variant old_variant, gov::Variant new_variant,
                const std::string& replay_dir) {
    fs::path out(spec.out_dir);
    fs::create_directories(out);
    ExperimentSpec old_spec = spec;
    old_spec.variant = old_variant;
    ExperimentSpec new_spec = spec;
    new_spec.variant = new_variant;
    metrics::RunMatrix old_m = run_grid(old_spec, {}, "regress/old");
    metrics::RunMatrix new_m = run_grid(new_spec, {}, "regress/new");
    metrics::RegressionReport rep = metrics::regression_rate(old_m, new_m);
    Json j;
    j["old_variant"] = gov::to_string(old_variant);
    j["new_variant"] = gov::to_string(new_variant);
    j["overall"] = rep.overall;
    j["task"] = rep.task_rate;
    j["contract"] = rep.contract_rate;
    j["governance"] = rep.governance_rate;
    j["baseline_passes"] = rep.baseline_passes;
    if (!replay_dir.empty()) {
        Json replays = Json::array();
        std::vector<fs::path> bundles;
        for (const auto& entry : fs::directory_iterator(replay_dir))
            if (entry.is_directory()) bundles.push_back(entry.path());
        std::sort(bundles.begin(), bundles.end());
        for (const auto& b : bundles) {
            sim::ReplayRecord rr = sim::read_bundle(b.string());
            const sim::Scenario& scenario = sim::find_scenario(rr.run_key.task_id);
            sim::Config new_config = sim::make_config(scenario, new_variant);
            sim::RunResult rerun = sim::replay_under(rr, new_config);
            Json e;
            e["bundle"] = b.string();
            e["was_failing"] = rr.first_violation.has_value();
            e["now_failing"] = rerun.outcome.contract_fail == 1;
            e["resolved"] =
                rr.first_violation.has_value() && rerun.outcome.contract_fail == 0;
            replays.push_back(e);
        }
        j["replays"] = replays;
    }
    write_text(out / "regression_report.json", j.dump(2) + "\n");
    std::cout << "regression overall=" << rep.overall << " task=" << rep.task_rate
              << " contract=" << rep.contract_rate << " governance=" << rep.governance_rate
              << "\n";
    return 0;
}

int cmd_suite_select(const std::string& replay_dir, const std::string& out_file) {
    std::vector<metrics::ReplayUnits> replays;
    if (fs::exists(replay_dir)) {
        std::vector<fs::path> bundles;
        for (const auto& entry : fs::directory_iterator(replay_dir))
            if (entry.is_directory()) bundles.push_back(entry.path());
        std::sort(bundles.begin(), bundles.end());
        for (const auto& b : bundles) {
            sim::ReplayRecord rr = sim::read_bundle(b.string());
            replays.push_back({b.filename().string(), metrics::coverage_units(rr)});
        }
    }
    // One cleanly passing task per workload category keeps quality coverage.
    // Policy-constrained tasks may need the shield to pass cleanly, so fall
    // back from bare execution to the Shield variant.
    std::map<std::string, std::string> nominal_by_cat;
    for (const auto& s : sim::scenario_catalog()) {
        std::string cat = sim::to_string(s.task.category);
        if (nominal_by_cat.count(cat)) continue;
        for (auto variant : {gov::Variant::NoGovernance, gov::Variant::Shield}) {
            sim::Config config = sim::make_config(s, variant);
            sim::RunResult run = sim::exec(s, config, 1, {});
            metrics::TraceSummary summary = metrics::summarize(run, s, config);
            if (run.outcome.task_success == 1 && run.outcome.contract_fail == 0 &&
                summary.hard_violated.empty()) {
                nominal_by_cat[cat] = s.id();
                break;
            }
        }
    }
    std::vector<std::string> nominals;
    for (const auto& [cat, id] : nominal_by_cat) nominals.push_back(id);
    metrics::SuiteSelection suite = metrics::select_suite(replays, nominals);
    Json j = metrics::to_json(suite);
    write_text(out_file, j.dump(2) + "\n");
    std::cout << "suite: " << suite.chosen.size() << " replays + " << suite.nominals.size()
              << " nominal tasks\n";
    return 0;
}

int cmd_report(const std::string& matrix_file, const std::string& out_dir) {
    metrics::RunMatrix m = metrics::matrix_from_json(Json::parse(read_text(matrix_file)));
    fs::path out(out_dir);
    fs::create_directories(out);
    write_text(out / "nominal_table.json", nominal_table(m).dump(2) + "\n");
    bool any_faults = false;
    for (const auto& e : m.entries)
        if (!e.summary.faults.empty()) any_faults = true;
    if (any_faults) write_text(out / "fault_table.json", fault_table(m).dump(2) + "\n");
    write_text(out / "violation_profile.json", violation_profile(m).dump(2) + "\n");
    return matrix_has_hard_trace_failure(m) ? 1 : 0;
}

}  // namespace matkit::cli
