#include <doctest.h>

#include <set>

#include "test_support.hpp"

#include "matkit/perturb/search.hpp"

using namespace matkit;
using namespace testkit;

namespace {

perturb::CandidateSpace injection_space() {
    perturb::CandidateSpace space;
    for (int t = 0; t <= 4; ++t)
        space.options.emplace_back(t,
                                   perturb::inject_note("inbox", "directive:exfiltrate:acct-9"));
    space.max_combo = 2;
    return space;
}

}  // namespace

TEST_CASE("operator cost arithmetic") {
    perturb::CostModel model;  // (1, 5, 10)
    perturb::Operator op;
    op.family = perturb::OpFamily::Service;
    op.kind = "partial";
    op.target = "svc";
    op.token_delta = 12;
    op.hooks = 2;
    op.magnitude = 0.3;
    CHECK(perturb::cost(op, model) == doctest::Approx(25.0));

    perturb::Schedule empty;
    CHECK(perturb::cost(empty, model) == 0.0);
    CHECK(empty.id() == "nominal");

    perturb::Schedule twice;
    twice.add(0, op);
    twice.add(4, op);
    CHECK(perturb::cost(twice, model) == doctest::Approx(50.0));
}

TEST_CASE("cost additivity and non-negativity on random schedules") {
    perturb::CostModel model;
    Rng rng(11);
    for (int iter = 0; iter < 100; ++iter) {
        perturb::Schedule a, b, merged;
        int na = static_cast<int>(rng.below(4));
        int nb = static_cast<int>(rng.below(4));
        auto random_op = [&rng]() {
            perturb::Operator op;
            op.family = perturb::OpFamily::Service;
            op.kind = "timeout";
            op.target = "svc" + std::to_string(rng.below(3));
            op.token_delta = static_cast<int>(rng.below(20));
            op.hooks = static_cast<int>(rng.below(3));
            op.magnitude = static_cast<double>(rng.below(5)) / 2.0;
            return op;
        };
        for (int i = 0; i < na; ++i) {
            int t = static_cast<int>(rng.below(6));
            auto op = random_op();
            a.add(t, op);
            merged.add(t, op);
        }
        for (int i = 0; i < nb; ++i) {
            int t = static_cast<int>(rng.below(6)) + 6;
            auto op = random_op();
            b.add(t, op);
            merged.add(t, op);
        }
        CHECK(perturb::cost(a, model) >= 0.0);
        CHECK(perturb::cost(merged, model) ==
              doctest::Approx(perturb::cost(a, model) + perturb::cost(b, model)));
    }
}

TEST_CASE("apply respects declared bounds exactly") {
    Rng rng(5);

    SUBCASE("shuffle-topk preserves the item multiset") {
        Json payload;
        payload["items"] = Json::array({"a", "b", "c"});
        auto op = perturb::shuffle_topk("search_kb", 3);
        Json out = perturb::apply(op, trace::Channel::Retrieval, payload, rng);
        REQUIRE(out["items"].size() == 3);
        std::multiset<std::string> before{"a", "b", "c"}, after;
        for (const auto& item : out["items"]) after.insert(item.get<std::string>());
        CHECK(before == after);
    }

    SUBCASE("corrupt-field alters exactly one of four fields") {
        Json payload{{"a", 1}, {"b", 2}, {"c", 3}, {"d", 4}};
        auto op = perturb::corrupt_field("svc", 1);
        Json out = perturb::apply(op, trace::Channel::Tool, payload, rng);
        int changed = 0;
        for (auto it = payload.begin(); it != payload.end(); ++it)
            if (out.at(it.key()) != it.value()) ++changed;
        CHECK(changed == 1);
        CHECK(out.size() == payload.size());
    }

    SUBCASE("inject-note adds exactly one untrusted entry") {
        Json memory = Json::array();
        auto op = perturb::inject_note("inbox", "directive:x");
        Json out = perturb::apply(op, trace::Channel::Memory, memory, rng);
        REQUIRE(out.size() == 1);
        CHECK(out[0]["trust"] == "Untrusted");
        CHECK(op.token_delta == 1);
    }

    SUBCASE("partial removes ceil(fraction * fields)") {
        Json payload{{"a", 1}, {"b", 2}, {"c", 3}, {"d", 4}};
        auto op = perturb::op_partial("svc", 0.5);
        Json out = perturb::apply(op, trace::Channel::Tool, payload, rng);
        CHECK(out.size() == 2);
    }

    SUBCASE("family/channel mismatch throws") {
        Json payload{{"a", 1}};
        auto op = perturb::shuffle_topk("search_kb", 2);
        CHECK_THROWS_AS(perturb::apply(op, trace::Channel::Tool, payload, rng),
                        FamilyChannelMismatch);
    }
}

TEST_CASE("vio_score weights violated step contracts") {
    contracts::ContractRegistry reg = sim::default_registry();
    trace::MatRecord rec = make_record(0, "executor", trace::ActionType::ToolCall);
    rec.action.kind.tool = "exfiltrate_data";
    rec.checked_contracts = {"least_privilege", "verify_before_act"};

    rec.verdict.violations = {"least_privilege"};  // weight 3
    CHECK(perturb::vio_score(rec, reg) == doctest::Approx(3.0));

    rec.verdict.violations = {};
    CHECK(perturb::vio_score(rec, reg) == 0.0);

    rec.verdict.violations = {"least_privilege", "verify_before_act"};  // 3 + 1
    CHECK(perturb::vio_score(rec, reg) == doctest::Approx(4.0));
}

TEST_CASE("validate_fault_schedule rejects prompt-context operators") {
    perturb::Schedule s;
    s.add(0, perturb::paraphrase_splice("distractor text"));
    CHECK_THROWS_AS(perturb::validate_fault_schedule(s), FamilyChannelMismatch);
    perturb::Schedule ok;
    ok.add(0, perturb::op_timeout("db_lookup"));
    ok.add(1, perturb::inject_note("inbox", "x"));
    CHECK_NOTHROW(perturb::validate_fault_schedule(ok));
}

TEST_CASE("exhaustive search finds the cheapest injection step") {
    const sim::Scenario& s = scenario("memory_injection_search");
    sim::Config cfg = config_for("memory_injection_search");
    perturb::CostModel model;
    perturb::CandidateSpace space = injection_space();

    perturb::SearchResult res = perturb::search_exhaustive(s, cfg, 1, space, model);
    REQUIRE(res.best.has_value());
    CHECK(res.best->schedule.op_count() == 1);
    REQUIRE(res.best->schedule.ops.count(0) == 1);
    CHECK(res.best->schedule.ops.at(0)[0].kind == "inject-note");
    CHECK(res.best->cost == doctest::Approx(1.0));
    REQUIRE(res.best->first_violation.has_value());
    CHECK(res.best->first_violation->trace_ids ==
          std::vector<std::string>{"no_unsafe_tool"});

    // independent oracle: every singleton and pair, executed directly
    double best_cost = 1e18;
    std::string best_id;
    int checked = 0;
    for (std::size_t i = 0; i < space.options.size(); ++i) {
        for (std::size_t j = i; j < space.options.size(); ++j) {
            perturb::Schedule cand;
            cand.add(space.options[i].first, space.options[i].second);
            if (j != i) cand.add(space.options[j].first, space.options[j].second);
            double c = perturb::cost(cand, model);
            if (c > model.budget) continue;
            ++checked;
            if (sim::exec(s, cfg, 1, cand).outcome.contract_fail == 1 &&
                (c < best_cost || (c == best_cost && cand.id() < best_id))) {
                best_cost = c;
                best_id = cand.id();
            }
        }
    }
    REQUIRE(checked > 0);
    CHECK(res.best->cost == doctest::Approx(best_cost));
    CHECK(res.best->schedule.id() == best_id);
}

TEST_CASE("exhaustive search: hardened variant and tight budgets yield none") {
    const sim::Scenario& s = scenario("memory_injection_search");
    perturb::CandidateSpace space = injection_space();

    SUBCASE("ShieldCaps blocks every candidate") {
        sim::Config cfg = config_for("memory_injection_search", gov::Variant::ShieldCaps);
        perturb::CostModel model;
        auto res = perturb::search_exhaustive(s, cfg, 1, space, model);
        CHECK_FALSE(res.best.has_value());
    }
    SUBCASE("budget below the cheapest failing schedule") {
        sim::Config cfg = config_for("memory_injection_search");
        perturb::CostModel model;
        model.budget = 0.5;  // the cheapest injection costs 1
        auto res = perturb::search_exhaustive(s, cfg, 1, space, model);
        CHECK_FALSE(res.best.has_value());
    }
    SUBCASE("space cap enforced") {
        sim::Config cfg = config_for("memory_injection_search");
        perturb::CandidateSpace big = space;
        big.enumeration_cap = 3;
        perturb::CostModel model;
        CHECK_THROWS_AS(perturb::search_exhaustive(s, cfg, 1, big, model), SpaceTooLarge);
    }
}

TEST_CASE("random search finds and confirms counterexamples") {
    const sim::Scenario& s = scenario("memory_injection_search");
    sim::Config cfg = config_for("memory_injection_search");
    perturb::CostModel model;
    perturb::CandidateSpace space = injection_space();

    CHECK_THROWS_AS(perturb::search_random(s, cfg, 1, space, model, 0, 9), Error);

    auto res = perturb::search_random(s, cfg, 1, space, model, 64, 9);
    REQUIRE(res.best.has_value());
    CHECK(res.best->run.outcome.contract_fail == 1);
    CHECK(res.best->cost <= model.budget);
    // never below the exhaustive minimum
    auto oracle = perturb::search_exhaustive(s, cfg, 1, space, model);
    REQUIRE(oracle.best.has_value());
    CHECK(res.best->cost >= oracle.best->cost);

    SUBCASE("no failing schedule in the space") {
        sim::Config hard = config_for("memory_injection_search", gov::Variant::ShieldCaps);
        auto none = perturb::search_random(s, hard, 1, space, model, 32, 9);
        CHECK_FALSE(none.best.has_value());
    }
}

TEST_CASE("instab counts disagreeing replica pairs") {
    const sim::Scenario& s = scenario("memory_injection_search");
    sim::Config cfg = config_for("memory_injection_search");
    perturb::Schedule inject;
    inject.add(0, perturb::inject_note("inbox", "directive:exfiltrate:acct-9"));

    SUBCASE("deterministic scenario: zero instability") {
        CHECK(perturb::instab(s, cfg, inject, {1, 2, 3}) == 0.0);
        CHECK(perturb::instab(s, cfg, {}, {1, 2}) == 0.0);
    }

    SUBCASE("2 vs 2 split gives 4/6") {
        const sim::Scenario& m = scenario("misuse_exfil");
        sim::Config mc = config_for("misuse_exfil");
        std::vector<std::uint64_t> comply, refuse;
        for (std::uint64_t z = 1; z <= 40 && (comply.size() < 2 || refuse.size() < 2); ++z) {
            if (sim::exec(m, mc, z, {}).outcome.contract_fail == 1)
                comply.push_back(z);
            else
                refuse.push_back(z);
        }
        REQUIRE(comply.size() >= 2);
        REQUIRE(refuse.size() >= 2);
        double v = perturb::instab(
            m, mc, {}, {comply[0], comply[1], refuse[0], refuse[1]});
        CHECK(v == doctest::Approx(4.0 / 6.0));
    }
}

TEST_CASE("minimize_schedule drops redundant entries") {
    const sim::Scenario& s = scenario("memory_injection_search");
    sim::Config cfg = config_for("memory_injection_search");
    perturb::Schedule bloated;
    bloated.add(0, perturb::inject_note("inbox", "directive:exfiltrate:acct-9"));
    bloated.add(4, perturb::op_timeout("shipping_status"));  // irrelevant
    REQUIRE(sim::exec(s, cfg, 1, bloated).outcome.contract_fail == 1);
    perturb::Schedule small = perturb::minimize_schedule(s, cfg, 1, bloated);
    CHECK(small.op_count() == 1);
    CHECK(small.ops.count(0) == 1);
    CHECK(sim::exec(s, cfg, 1, small).outcome.contract_fail == 1);
}

TEST_CASE("adaptive return degenerates to the violation score") {
    // gamma=1, beta=0, single step: the return equals that step's vio score
    sim::RunResult r = run("role_drift", gov::Variant::NoGovernance, 1);
    contracts::ContractRegistry reg = config_for("role_drift").registry;
    perturb::CostModel model;
    double total = perturb::adaptive_return(r, reg, model, 1.0, 0.0);
    double by_hand = 0.0;
    for (const auto& rec : r.trace.records) by_hand += perturb::vio_score(rec, reg);
    CHECK(total == doctest::Approx(by_hand));
    CHECK(by_hand > 0.0);  // the out-of-role db_update violates least_privilege
}

TEST_CASE("instability penalty prefers the stable counterexample") {
    // stable: deterministic injection failure; flaky: misuse failure that
    // depends on the seed. With a large lambda the stable score dominates.
    const sim::Scenario& stable_s = scenario("memory_injection_search");
    sim::Config stable_cfg = config_for("memory_injection_search");
    perturb::Schedule inject;
    inject.add(0, perturb::inject_note("inbox", "directive:exfiltrate:acct-9"));

    const sim::Scenario& flaky_s = scenario("misuse_exfil");
    sim::Config flaky_cfg = config_for("misuse_exfil");

    perturb::CostModel model;
    contracts::ContractRegistry reg = stable_cfg.registry;
    double lambda = 10.0;
    std::vector<std::uint64_t> seeds = {1, 2, 3, 4};

    sim::RunResult stable_run = sim::exec(stable_s, stable_cfg, 1, inject);
    double stable_score =
        perturb::adaptive_return(stable_run, stable_cfg.registry, model, 0.95, 0.01) -
        lambda * perturb::instab(stable_s, stable_cfg, inject, seeds);

    sim::RunResult flaky_run = sim::exec(flaky_s, flaky_cfg, 1, {});
    double flaky_score =
        perturb::adaptive_return(flaky_run, flaky_cfg.registry, model, 0.95, 0.01) -
        lambda * perturb::instab(flaky_s, flaky_cfg, {}, seeds);

    CHECK(perturb::instab(stable_s, stable_cfg, inject, seeds) == 0.0);
    CHECK(perturb::instab(flaky_s, flaky_cfg, {}, seeds) > 0.0);
    CHECK(stable_score > flaky_score);
}

TEST_CASE("adaptive search finds a confirmed, in-budget counterexample") {
    const sim::Scenario& s = scenario("memory_injection_search");
    sim::Config cfg = config_for("memory_injection_search");
    perturb::CostModel model;
    perturb::CandidateSpace space = injection_space();
    perturb::AdaptiveParams params;
    params.episodes = 20;

    auto res = perturb::search_adaptive(s, cfg, 1, space, model, params, 7);
    CHECK(res.episode_scores.size() == 20);
    REQUIRE(res.best.has_value());
    CHECK(res.best->run.outcome.contract_fail == 1);
    CHECK(res.best->cost <= model.budget);
    auto oracle = perturb::search_exhaustive(s, cfg, 1, space, model);
    CHECK(res.best->cost >= oracle.best->cost);
}

TEST_CASE("searches respect hard budgets end to end") {
    const sim::Scenario& s = scenario("fault_unhandled");
    sim::Config cfg = config_for("fault_unhandled");
    perturb::CandidateSpace space;
    for (int t = 0; t <= 3; ++t) {
        space.options.emplace_back(t, perturb::op_timeout("db_lookup"));
        space.options.emplace_back(t, perturb::op_delay("db_lookup", 2));
    }
    space.max_combo = 2;
    perturb::CostModel model;
    model.budget = 6.0;  // one timeout (5) fits; timeout+delay (15) does not
    auto res = perturb::search_exhaustive(s, cfg, 1, space, model);
    REQUIRE(res.best.has_value());
    CHECK(res.best->cost <= 6.0);
    CHECK(res.best->schedule.op_count() == 1);
}
