#include "matkit/perturb/search.hpp"

#include <algorithm>
#include <cmath>

namespace matkit::perturb {

double vio_score(const trace::MatRecord& record,
                 const contracts::ContractRegistry& registry) {
    double total = 0.0;
    for (const auto& vid : record.verdict.violations) {
        if (std::find(record.checked_contracts.begin(), record.checked_contracts.end(), vid) !=
            record.checked_contracts.end())
            total += registry.weight_of(vid);
    }
    return total;
}

void validate_fault_schedule(const Schedule& schedule) {
    for (const auto& [t, ops] : schedule.ops)
        for (const auto& op : ops)
            if (op.family == OpFamily::PromptContext)
                throw FamilyChannelMismatch(
                    "fault injection is limited to service/retrieval/memory boundaries, got " +
                    op.kind);
}

double instab(const sim::Scenario& scenario, const sim::Config& config,
              const Schedule& schedule, const std::vector<std::uint64_t>& seeds) {
    if (seeds.size() < 2) throw Error("instab needs at least 2 replica seeds");
    std::vector<int> fails;
    for (auto z : seeds) fails.push_back(sim::exec(scenario, config, z, schedule).outcome.contract_fail);
    int disagree = 0;
    int pairs = 0;
    for (std::size_t i = 0; i < fails.size(); ++i) {
        for (std::size_t j = i + 1; j < fails.size(); ++j) {
            ++pairs;
            if (fails[i] != fails[j]) ++disagree;
        }
    }
    return static_cast<double>(disagree) / static_cast<double>(pairs);
}

namespace {

Schedule build_schedule(const CandidateSpace& space, const std::vector<std::size_t>& picks) {
    Schedule s;
    for (auto idx : picks) s.add(space.options[idx].first, space.options[idx].second);
    return s;
}

bool run_fails(const sim::Scenario& scenario, const sim::Config& config, std::uint64_t seed,
               const Schedule& schedule, sim::RunResult* out = nullptr) {
    sim::RunResult run = sim::exec(scenario, config, seed, schedule);
    bool fail = run.outcome.contract_fail == 1;
    if (out) *out = std::move(run);
    return fail;
}

Counterexample make_counterexample(const sim::Scenario& scenario, const sim::Config& config,
                                   std::uint64_t seed, const Schedule& schedule,
                                   const CostModel& model) {
    Counterexample ce;
    ce.schedule = schedule;
    ce.cost = cost(schedule, model);
    ce.run = sim::exec(scenario, config, seed, schedule);
    if (ce.run.outcome.contract_fail != 1)
        throw Error("counterexample did not reproduce on re-execution: " + schedule.id());
    sim::EvalBundle eval = sim::make_eval(config, scenario.task);
    ce.first_violation = contracts::first_violation(ce.run.trace, config.registry, eval.ctx);
    return ce;
}

bool better(double cost_a, const std::string& id_a, double cost_b, const std::string& id_b) {
    if (cost_a != cost_b) return cost_a < cost_b;
    return id_a < id_b;
}

}  // namespace

Schedule minimize_schedule(const sim::Scenario& scenario, const sim::Config& config,
                           std::uint64_t seed, const Schedule& failing) {
    std::vector<std::pair<int, Operator>> entries;
    for (const auto& [t, ops] : failing.ops)
        for (const auto& op : ops) entries.emplace_back(t, op);
    bool shrunk = true;
    while (shrunk && entries.size() > 1) {
        shrunk = false;
        for (std::size_t i = 0; i < entries.size(); ++i) {
            Schedule candidate;
            for (std::size_t j = 0; j < entries.size(); ++j)
                if (j != i) candidate.add(entries[j].first, entries[j].second);
            if (run_fails(scenario, config, seed, candidate)) {
                entries.erase(entries.begin() + static_cast<std::ptrdiff_t>(i));
                shrunk = true;
                break;
            }
        }
    }
    Schedule out;
    for (const auto& [t, op] : entries) out.add(t, op);
    return out;
}

SearchResult search_exhaustive(const sim::Scenario& scenario, const sim::Config& config,
                               std::uint64_t seed, const CandidateSpace& space,
                               const CostModel& model) {
    const std::size_t n = space.options.size();
    long long count = 1;  // empty schedule
    long long choose = 1;
    for (int k = 1; k <= space.max_combo && k <= static_cast<int>(n); ++k) {
        choose = choose * static_cast<long long>(n - static_cast<std::size_t>(k) + 1) / k;
        count += choose;
        if (count > space.enumeration_cap)
            throw SpaceTooLarge("candidate schedules exceed cap of " +
                                std::to_string(space.enumeration_cap));
    }

    SearchResult result;
    std::optional<Schedule> best;
    double best_cost = 0.0;
    std::string best_id;

    std::vector<std::size_t> picks;
    // Enumerates subsets in size order, lexicographic within a size.
    auto consider = [&](const std::vector<std::size_t>& chosen) {
        Schedule s = build_schedule(space, chosen);
        double c = cost(s, model);
        if (c > model.budget) return;
        ++result.evaluated;
        if (best && !better(c, s.id(), best_cost, best_id)) return;
        if (run_fails(scenario, config, seed, s)) {
            best = s;
            best_cost = c;
            best_id = s.id();
        }
    };
    // A failing empty schedule is the trivial minimum.
    consider({});
    for (int k = 1; k <= space.max_combo && k <= static_cast<int>(n); ++k) {
        std::vector<std::size_t> combo(static_cast<std::size_t>(k));
        for (int i = 0; i < k; ++i) combo[static_cast<std::size_t>(i)] = static_cast<std::size_t>(i);
        while (true) {
            consider(combo);
            int i = k - 1;
            while (i >= 0 && combo[static_cast<std::size_t>(i)] ==
                                 n - static_cast<std::size_t>(k - i)) {
                --i;
            }
            if (i < 0) break;
            ++combo[static_cast<std::size_t>(i)];
            for (int j = i + 1; j < k; ++j)
                combo[static_cast<std::size_t>(j)] = combo[static_cast<std::size_t>(j - 1)] + 1;
        }
    }
    if (best) result.best = make_counterexample(scenario, config, seed, *best, model);
    return result;
}

SearchResult search_random(const sim::Scenario& scenario, const sim::Config& config,
                           std::uint64_t seed, const CandidateSpace& space,
                           const CostModel& model, int trials, std::uint64_t search_seed) {
    if (trials < 1) throw Error("search_random needs trials >= 1");
    SearchResult result;
    if (space.options.empty()) return result;
    Rng rng = substream(search_seed, "search:random");
    std::optional<Schedule> best;
    double best_cost = 0.0;
    std::string best_id;
    for (int trial = 0; trial < trials; ++trial) {
        int size = 1 + static_cast<int>(rng.below(
                           static_cast<std::uint64_t>(std::max(1, space.max_combo))));
        std::vector<std::size_t> picks;
        for (int i = 0; i < size; ++i) {
            std::size_t pick = static_cast<std::size_t>(rng.below(space.options.size()));
            if (std::find(picks.begin(), picks.end(), pick) == picks.end())
                picks.push_back(pick);
        }
        std::sort(picks.begin(), picks.end());
        Schedule s = build_schedule(space, picks);
        double c = cost(s, model);
        if (c > model.budget) continue;
        ++result.evaluated;
        if (run_fails(scenario, config, seed, s)) {
            Schedule small = minimize_schedule(scenario, config, seed, s);
            double sc = cost(small, model);
            if (!best || better(sc, small.id(), best_cost, best_id)) {
                best = small;
                best_cost = sc;
                best_id = small.id();
            }
        }
    }
    if (best) result.best = make_counterexample(scenario, config, seed, *best, model);
    return result;
}

double adaptive_return(const sim::RunResult& run, const contracts::ContractRegistry& registry,
                       const CostModel& model, double gamma, double beta) {
    double total = 0.0;
    double discount = 1.0;
    for (const auto& r : run.trace.records) {
        double step_cost = 0.0;
        auto it = run.schedule.ops.find(r.t);
        if (it != run.schedule.ops.end())
            for (const auto& op : it->second) step_cost += cost(op, model);
        total += discount * (vio_score(r, registry) - beta * step_cost);
        discount *= gamma;
    }
    return total;
}

namespace {

/// Episode-time operator picker: epsilon-greedy over per-(bucket, option)
/// value estimates, respecting the remaining budget.
class BanditScheduler : public sim::StepScheduler {
public:
    BanditScheduler(const CandidateSpace& space, const CostModel& model,
                    std::map<std::string, std::pair<double, int>>& values, double epsilon,
                    Rng& rng)
        : space_(space), model_(model), values_(values), epsilon_(epsilon), rng_(rng) {}

    std::vector<Operator> ops_for(int t, const sim::AdversaryObs* prev) override {
        std::string bucket = prev ? std::string(trace::to_string(prev->action_type)) +
                                        (prev->step_pass ? ":p" : ":f")
                                  : std::string("start");
        std::vector<std::size_t> eligible;
        for (std::size_t i = 0; i < space_.options.size(); ++i) {
            if (space_.options[i].first != t) continue;
            if (spent_ + cost(space_.options[i].second, model_) > model_.budget) continue;
            eligible.push_back(i);
        }
        if (eligible.empty()) return {};
        // "none" is always an option; it sits at index eligible.size().
        std::size_t pick;
        if (rng_.uniform() < epsilon_) {
            pick = static_cast<std::size_t>(rng_.below(eligible.size() + 1));
        } else {
            pick = eligible.size();
            double best_v = 0.0;  // value of "none"
            for (std::size_t i = 0; i < eligible.size(); ++i) {
                auto it = values_.find(key(bucket, eligible[i]));
                double v = it == values_.end() ? 0.5 : it->second.first;  // optimistic start
                if (v > best_v) {
                    best_v = v;
                    pick = i;
                }
            }
        }
        if (pick == eligible.size()) return {};
        std::size_t idx = eligible[pick];
        spent_ += cost(space_.options[idx].second, model_);
        chosen_.emplace_back(bucket, idx);
        return {space_.options[idx].second};
    }

    static std::string key(const std::string& bucket, std::size_t option) {
        return bucket + "#" + std::to_string(option);
    }

    const std::vector<std::pair<std::string, std::size_t>>& chosen() const { return chosen_; }

private:
    const CandidateSpace& space_;
    const CostModel& model_;
    std::map<std::string, std::pair<double, int>>& values_;
    double epsilon_;
    Rng& rng_;
    double spent_ = 0.0;
    std::vector<std::pair<std::string, std::size_t>> chosen_;
};

}  // namespace

SearchResult search_adaptive(const sim::Scenario& scenario, const sim::Config& config,
                             std::uint64_t seed, const CandidateSpace& space,
                             const CostModel& model, const AdaptiveParams& params,
                             std::uint64_t search_seed) {
    if (params.gamma < 0 || params.beta < 0 || params.lambda < 0)
        throw Error("adaptive coefficients must be >= 0");
    SearchResult result;
    Rng rng = substream(search_seed, "search:adaptive");
    std::map<std::string, std::pair<double, int>> values;  // key -> (mean, count)

    std::optional<Schedule> best;
    double best_cost = 0.0;
    std::string best_id;

    for (int ep = 0; ep < params.episodes; ++ep) {
        BanditScheduler scheduler(space, model, values, params.epsilon, rng);
        sim::RunResult run = sim::exec_with(scenario, config, seed, scheduler, nullptr);
        ++result.evaluated;

        double score = adaptive_return(run, config.registry, model, params.gamma, params.beta);
        if (params.lambda > 0 && !run.schedule.empty()) {
            std::vector<std::uint64_t> replica_seeds;
            for (int i = 0; i < params.instab_replicas; ++i)
                replica_seeds.push_back(seed + 1 + static_cast<std::uint64_t>(i));
            score -= params.lambda * instab(scenario, config, run.schedule, replica_seeds);
        }
        result.episode_scores.push_back(score);

        for (const auto& [bucket, option] : scheduler.chosen()) {
            auto& cell = values[BanditScheduler::key(bucket, option)];
            cell.second += 1;
            cell.first += (score - cell.first) / cell.second;
        }

        if (run.outcome.contract_fail == 1 && !run.schedule.empty()) {
            Schedule small = minimize_schedule(scenario, config, seed, run.schedule);
            double c = cost(small, model);
            if (c <= model.budget && (!best || better(c, small.id(), best_cost, best_id))) {
                best = small;
                best_cost = c;
                best_id = small.id();
            }
        }
    }
    if (best) result.best = make_counterexample(scenario, config, seed, *best, model);
    return result;
}

}  // namespace matkit::perturb
