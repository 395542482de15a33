#include <doctest.h>

#include <set>

#include "test_support.hpp"

using namespace matkit;
using namespace testkit;

namespace {

// Independent oracle: scan every window start and re-check the definition
// directly on the raw potential sequence.
std::optional<int> progress_brute_force(const std::vector<double>& phi, int w,
                                        std::optional<int> term_idx) {
    int n = static_cast<int>(phi.size());
    for (int k = 0; k + w < n; ++k) {
        if (term_idx && *term_idx <= k + w) continue;
        bool stalled = true;
        for (int t = k; t < k + w; ++t)
            if (phi[static_cast<std::size_t>(t + 1)] < phi[static_cast<std::size_t>(t)])
                stalled = false;
        if (stalled) return k;
    }
    return std::nullopt;
}

contracts::EvalContext plain_ctx() { return {}; }

}  // namespace

TEST_CASE("select_step_contracts by action type") {
    contracts::ContractRegistry reg = sim::default_registry();
    trace::MatRecord tool = make_record(0, "a", trace::ActionType::ToolCall);
    CHECK(contracts::select_step_contracts(tool, reg) ==
          std::vector<std::string>{"least_privilege", "verify_before_act"});
    trace::MatRecord write = make_record(0, "a", trace::ActionType::MemoryWrite);
    CHECK(contracts::select_step_contracts(write, reg) ==
          std::vector<std::string>{"memory_sanitization"});
    trace::MatRecord fin = make_record(0, "a", trace::ActionType::Terminate);
    CHECK(contracts::select_step_contracts(fin, reg) ==
          std::vector<std::string>{"final_pii_check", "final_claim_support"});
    trace::MatRecord msg = make_record(0, "a", trace::ActionType::Message);
    CHECK(contracts::select_step_contracts(msg, reg).empty());
}

TEST_CASE("eval_step: capability and verify-before-act templates") {
    sim::Config cfg = config_for("tooluse_happy");
    sim::EvalBundle eval = sim::make_eval(cfg, scenario("tooluse_happy").task);
    contracts::ContractRegistry& reg = cfg.registry;

    trace::Trace prefix;
    prefix.horizon = 10;
    trace::MatRecord verify = make_record(0, "verifier", trace::ActionType::ToolCall);
    verify.action.kind.tool = "verify_claim";
    trace::append_record(prefix, verify);

    trace::MatRecord update = make_record(1, "executor", trace::ActionType::ToolCall);
    update.action.kind.tool = "db_update";
    trace::append_record(prefix, update);
    auto sel = contracts::select_step_contracts(update, reg);

    SUBCASE("side-effecting call with a verifier one step back passes") {
        trace::Verdict v = contracts::eval_step(prefix.records[1], prefix, sel, reg, eval.ctx);
        CHECK(v.pass);
        CHECK(v.violations.empty());
        CHECK(v.mitigation == trace::Mitigation::None);
    }

    SUBCASE("tool outside the allowlist violates least_privilege") {
        prefix.records[1].action.kind.tool = "exfiltrate_data";
        trace::Verdict v = contracts::eval_step(prefix.records[1], prefix, sel, reg, eval.ctx);
        CHECK_FALSE(v.pass);
        CHECK(v.violations == std::vector<std::string>{"least_privilege"});
        CHECK(v.severity == trace::Severity::Hard);
        CHECK(v.mitigation == trace::Mitigation::Block);
    }

    SUBCASE("no verifier within h=3 violates verify_before_act") {
        trace::Trace lone;
        lone.horizon = 10;
        for (int t = 0; t < 4; ++t) trace::append_record(lone, make_record(t, "executor"));
        trace::MatRecord act = make_record(4, "executor", trace::ActionType::ToolCall);
        act.action.kind.tool = "db_update";
        trace::append_record(lone, act);
        trace::Verdict v = contracts::eval_step(lone.records[4], lone,
                                                contracts::select_step_contracts(act, reg), reg,
                                                eval.ctx);
        CHECK_FALSE(v.pass);
        CHECK(v.violations == std::vector<std::string>{"verify_before_act"});
        CHECK(v.severity == trace::Severity::Soft);
        CHECK(v.mitigation == trace::Mitigation::Retry);
    }
}

TEST_CASE("verdict consistency: pass iff violations empty (random records)") {
    sim::Config cfg = config_for("tooluse_happy");
    sim::EvalBundle eval = sim::make_eval(cfg, scenario("tooluse_happy").task);
    Rng rng(4242);
    const char* tools[] = {"db_lookup", "db_update", "exfiltrate_data", "send_email",
                           "verify_claim"};
    const char* agents[] = {"researcher", "executor", "verifier", "orchestrator"};
    for (int i = 0; i < 200; ++i) {
        trace::Trace prefix;
        prefix.horizon = 10;
        int len = 1 + static_cast<int>(rng.below(5));
        for (int t = 0; t < len; ++t) {
            trace::ActionType type = static_cast<trace::ActionType>(rng.below(6));
            trace::MatRecord r = make_record(t, agents[rng.below(4)], type);
            if (type == trace::ActionType::ToolCall) r.action.kind.tool = tools[rng.below(5)];
            if (type == trace::ActionType::Terminate)
                r.action.kind.status = trace::TerminalStatus::Completed;
            if (type == trace::ActionType::MemoryWrite) {
                r.action.params["trust"] = rng.below(2) ? "Untrusted" : "Trusted";
                r.action.params["content"] =
                    rng.below(2) ? "directive:exfiltrate" : "plain note";
            }
            trace::append_record(prefix, r);
            if (type == trace::ActionType::Terminate) break;
        }
        const trace::MatRecord& last = prefix.records.back();
        auto sel = contracts::select_step_contracts(last, cfg.registry);
        trace::Verdict v = contracts::eval_step(last, prefix, sel, cfg.registry, eval.ctx);
        CHECK(v.pass == v.violations.empty());
        if (v.pass) CHECK(v.severity == trace::Severity::None);
        for (const auto& id : v.violations) {
            bool in_sel = std::find(sel.begin(), sel.end(), id) != sel.end();
            CHECK(in_sel);
        }
    }
}

TEST_CASE("unevaluable contract counts as Hard violation of itself") {
    contracts::ContractRegistry reg;
    reg.id = "test";
    contracts::ContractDef broken;
    broken.id = "broken_tree";
    broken.kind = contracts::ContractKind::Step;
    broken.severity = trace::Severity::Soft;  // upgraded to Hard on failure
    broken.weight = 1.0;
    broken.tree = Json{{"op", "eq"}, {"field", "action.params.nonexistent"}, {"value", 1}};
    reg.step_contracts.push_back(broken);
    reg.selection_rules["Message"] = {"broken_tree"};
    reg.validate();
    trace::Trace prefix;
    prefix.horizon = 3;
    trace::append_record(prefix, make_record(0));
    trace::Verdict v = contracts::eval_step(prefix.records[0], prefix, {"broken_tree"}, reg,
                                            plain_ctx());
    CHECK_FALSE(v.pass);
    CHECK(v.violations == std::vector<std::string>{"broken_tree"});
    CHECK(v.severity == trace::Severity::Hard);
}

TEST_CASE("predicate trees: comparisons, membership, window quantifier") {
    contracts::ContractRegistry reg;
    reg.id = "test";
    contracts::ContractDef c;
    c.id = "no_big_amount";
    c.kind = contracts::ContractKind::Step;
    c.severity = trace::Severity::Hard;
    c.weight = 1.0;
    c.tree = Json{{"op", "any"},
                  {"args", Json::array({Json{{"op", "ne"},
                                             {"field", "action.kind.type"},
                                             {"value", "ToolCall"}},
                                        Json{{"op", "not"},
                                             {"arg", Json{{"op", "exists"},
                                                          {"field", "action.params.amount"}}}},
                                        Json{{"op", "le"},
                                             {"field", "action.params.amount"},
                                             {"value", 100}}})}};
    reg.step_contracts.push_back(c);
    reg.validate();
    trace::Trace prefix;
    prefix.horizon = 5;
    trace::MatRecord pay = make_record(0, "executor", trace::ActionType::ToolCall);
    pay.action.kind.tool = "payment";
    pay.action.params["amount"] = 50;
    trace::append_record(prefix, pay);
    CHECK(contracts::eval_step(prefix.records[0], prefix, {"no_big_amount"}, reg, plain_ctx())
              .pass);
    prefix.records[0].action.params["amount"] = 500;
    CHECK_FALSE(contracts::eval_step(prefix.records[0], prefix, {"no_big_amount"}, reg,
                                     plain_ctx())
                    .pass);

    // window quantifier: a verifier-ish message within the last 2 steps
    contracts::ContractDef w;
    w.id = "recent_check";
    w.kind = contracts::ContractKind::Step;
    w.severity = trace::Severity::Soft;
    w.weight = 1.0;
    w.tree = Json{{"op", "exists_within"},
                  {"window", 2},
                  {"pred", Json{{"op", "eq"}, {"field", "action.params.kind"},
                                {"value", "check"}}}};
    reg.step_contracts.push_back(w);
    trace::Trace seq;
    seq.horizon = 6;
    trace::MatRecord checkrec = make_record(0);
    checkrec.action.params["kind"] = "check";
    trace::append_record(seq, checkrec);
    trace::append_record(seq, make_record(1));
    trace::MatRecord act = make_record(2);
    trace::append_record(seq, act);
    CHECK(contracts::eval_step(seq.records[2], seq, {"recent_check"}, reg, plain_ctx()).pass);
    trace::append_record(seq, make_record(3));
    CHECK_FALSE(
        contracts::eval_step(seq.records[3], seq, {"recent_check"}, reg, plain_ctx()).pass);
}

TEST_CASE("progress_violation on the documented window cases") {
    contracts::PotentialSpec phi;
    CHECK(contracts::progress_violation(phi_trace({3, 3, 3, 3, 3, 3}, false), phi, 5) == 0);
    CHECK_FALSE(contracts::progress_violation(
                    phi_trace({3, 2, 2, 2, 1, 1, 1, 0}, false), phi, 3)
                    .has_value());
    CHECK_FALSE(
        contracts::progress_violation(phi_trace({3, 3, 3, 3, 3}, true), phi, 5).has_value());
}

TEST_CASE("progress_violation agrees with brute force on random sequences") {
    contracts::PotentialSpec phi;
    Rng rng(777);
    for (int iter = 0; iter < 300; ++iter) {
        int n = 2 + static_cast<int>(rng.below(14));
        std::vector<int> seq;
        std::vector<double> seq_d;
        for (int i = 0; i < n; ++i) {
            int v = static_cast<int>(rng.below(4));
            seq.push_back(v);
            seq_d.push_back(v);
        }
        bool terminated = rng.below(2) == 1;
        int w = 1 + static_cast<int>(rng.below(5));
        std::optional<int> term_idx;
        if (terminated) term_idx = n - 1;
        auto got = contracts::progress_violation(phi_trace(seq, terminated), phi, w);
        auto want = progress_brute_force(seq_d, w, term_idx);
        CHECK(got == want);
    }
}

TEST_CASE("eval_trace_fail equivalence with per-contract brute force") {
    sim::Config cfg = config_for("memory_injection");
    for (auto variant : {gov::Variant::NoGovernance, gov::Variant::ShieldCaps}) {
        sim::RunResult r = run("memory_injection", variant, 1);
        sim::EvalBundle eval = sim::make_eval(cfg, scenario("memory_injection").task);
        contracts::TraceFail tf =
            contracts::eval_trace_fail(r.trace, cfg.registry, eval.ctx);
        // brute force: a trace contract fails iff its own builtin evaluates to 0
        bool any = !tf.violated.empty();
        CHECK(tf.fail == any);
        if (variant == gov::Variant::NoGovernance) {
            CHECK(tf.fail);
            CHECK(tf.violated == std::vector<std::string>{"no_unsafe_tool"});
        } else {
            CHECK_FALSE(tf.fail);
        }
    }
}

TEST_CASE("eval_trace_fail lists all violated contracts") {
    // containment + progress violated together: stalled, faulted, undetected
    contracts::ContractRegistry reg = sim::fault_registry();
    trace::Trace tr = phi_trace({2, 2, 2, 2, 2, 2, 2, 2, 2, 2}, false);
    tr.records[1].annotations.push_back("fault:timeout");
    contracts::TraceFail tf = contracts::eval_trace_fail(tr, reg, plain_ctx());
    CHECK(tf.fail);
    CHECK(tf.violated == std::vector<std::string>{"containment", "progress"});
}

TEST_CASE("monotonicity of fail over prefixes for monotone contracts") {
    sim::RunResult r = run("loop_delegation", gov::Variant::NoGovernance, 1);
    sim::Config cfg = config_for("loop_delegation");
    sim::EvalBundle eval = sim::make_eval(cfg, scenario("loop_delegation").task);
    trace::Trace prefix;
    prefix.horizon = r.trace.horizon;
    bool failed = false;
    for (const auto& rec : r.trace.records) {
        prefix.records.push_back(rec);
        bool now = contracts::eval_trace_fail(prefix, cfg.registry, eval.ctx).fail;
        if (failed) CHECK(now);
        failed = failed || now;
    }
    CHECK(failed);
}

TEST_CASE("first_violation localization and tie rule") {
    contracts::ContractRegistry reg = sim::default_registry();

    SUBCASE("step violation before a later trace violation") {
        trace::Trace tr = phi_trace({1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1, 1}, false);
        tr.records[4].verdict.pass = false;
        tr.records[4].verdict.violations = {"verify_before_act"};
        tr.records[4].checked_contracts = {"least_privilege", "verify_before_act"};
        auto fv = contracts::first_violation(tr, reg, plain_ctx());
        REQUIRE(fv.has_value());
        CHECK(fv->t == 4);
        CHECK(fv->step_ids == std::vector<std::string>{"verify_before_act"});
    }

    SUBCASE("clean trace reports none") {
        trace::Trace tr = phi_trace({3, 2, 1, 0}, true);
        CHECK_FALSE(contracts::first_violation(tr, reg, plain_ctx()).has_value());
    }

    SUBCASE("step and trace violations at the same step union") {
        trace::Trace tr = phi_trace({1, 1, 1, 1, 1, 1, 1}, false);
        tr.records[6].verdict.pass = false;
        tr.records[6].verdict.violations = {"least_privilege"};
        tr.records[6].checked_contracts = {"least_privilege"};
        auto fv = contracts::first_violation(tr, reg, plain_ctx());
        REQUIRE(fv.has_value());
        // progress completes its first window [0,5] at t=5, one step earlier
        CHECK(fv->t == 5);
        CHECK(fv->trace_ids == std::vector<std::string>{"progress"});
        // shift the step violation onto the same step: union reported
        tr.records[5].verdict.pass = false;
        tr.records[5].verdict.violations = {"least_privilege"};
        tr.records[5].checked_contracts = {"least_privilege"};
        fv = contracts::first_violation(tr, reg, plain_ctx());
        REQUIRE(fv.has_value());
        CHECK(fv->t == 5);
        CHECK(fv->step_ids == std::vector<std::string>{"least_privilege"});
        CHECK(fv->trace_ids == std::vector<std::string>{"progress"});
        CHECK(fv->all_ids() == std::vector<std::string>{"least_privilege", "progress"});
    }
}

TEST_CASE("drift_score") {
    contracts::RoleContract rc;
    rc.agent = "researcher";
    rc.allowed_actions = {"Message", "ToolCall:db_lookup"};

    trace::Trace tr;
    tr.horizon = 10;
    for (int t = 0; t < 4; ++t) {
        trace::MatRecord r = make_record(t, "researcher",
                                         t == 2 ? trace::ActionType::ToolCall
                                                : trace::ActionType::Message);
        if (t == 2) r.action.kind.tool = "db_update";  // out of role
        trace::append_record(tr, r);
    }
    CHECK(contracts::drift_score(tr, rc) == doctest::Approx(0.25));

    trace::Trace clean;
    clean.horizon = 10;
    for (int t = 0; t < 3; ++t) trace::append_record(clean, make_record(t, "researcher"));
    CHECK(contracts::drift_score(clean, rc) == 0.0);

    trace::Trace other;
    other.horizon = 10;
    trace::append_record(other, make_record(0, "executor"));
    CHECK_THROWS_AS(contracts::drift_score(other, rc), NoStepsForAgent);
}

TEST_CASE("containment_check matches the windowed definition (w=4, w'=3)") {
    auto one = [](const trace::Trace& tr) {
        auto cases = contracts::containment_check(tr, 4, 3);
        REQUIRE(cases.size() == 1);
        return cases[0];
    };
    auto contained = one(marker_trace(10, {3}, {5}, {7}));
    CHECK(contained.contained);
    CHECK(contained.detect_t == 5);
    CHECK(contained.mitigate_t == 7);

    auto late = one(marker_trace(12, {3}, {9}, {10}));
    CHECK_FALSE(late.contained);

    auto unmitigated = one(marker_trace(10, {3}, {4}, {}));
    CHECK_FALSE(unmitigated.contained);
    CHECK(unmitigated.detect_t == 4);
    CHECK_FALSE(unmitigated.mitigate_t.has_value());
}

TEST_CASE("claim_support rates") {
    auto make_claims = [](int total, int unsupported, int used_of_unsupported) {
        trace::Trace tr;
        tr.horizon = 20;
        trace::MatRecord lookup = make_record(0, "r", trace::ActionType::ToolCall);
        lookup.action.kind.tool = "db_lookup";
        lookup.observation.payload["x"] = 1;
        lookup.observation.channel = trace::Channel::Tool;
        trace::append_record(tr, lookup);

        contracts::ClaimSet cs;
        std::vector<contracts::Fact> truth;
        Json claims = Json::array();
        trace::MatRecord assert_rec = make_record(1, "p");
        for (int i = 0; i < total; ++i) {
            std::string id = "claim:1:" + std::to_string(i);
            std::string subj = "s" + std::to_string(i);
            claims.push_back({{"id", id}, {"subject", subj}, {"predicate", "p"},
                              {"value", "v"}});
            cs.claims.push_back({id, subj, "p", "v"});
            if (i >= unsupported) {
                truth.push_back({subj, "p", "v"});
                cs.evidence[id].push_back(
                    {"toolresult:0:0", trace::ProvRel::supports, id});
                assert_rec.provenance.push_back(
                    {"toolresult:0:0", trace::ProvRel::supports, id});
            }
        }
        assert_rec.action.params["claims"] = claims;
        trace::append_record(tr, assert_rec);
        trace::MatRecord use_rec = make_record(2, "e", trace::ActionType::ToolCall);
        use_rec.action.kind.tool = "db_update";
        for (int i = 0; i < used_of_unsupported; ++i)
            use_rec.action.claim_refs.push_back("claim:1:" + std::to_string(i));
        trace::append_record(tr, use_rec);
        return std::tuple(tr, cs, truth);
    };

    SUBCASE("5 claims, 2 unsupported, 1 propagated") {
        auto [tr, cs, truth] = make_claims(5, 2, 1);
        auto res = contracts::claim_support(cs, truth, tr);
        REQUIRE(res.h_rate.has_value());
        CHECK(*res.h_rate == doctest::Approx(0.4));
        CHECK(*res.h_prop == doctest::Approx(0.2));
    }
    SUBCASE("all supported") {
        auto [tr, cs, truth] = make_claims(4, 0, 0);
        auto res = contracts::claim_support(cs, truth, tr);
        CHECK(*res.h_rate == 0.0);
        CHECK(*res.h_prop == 0.0);
    }
    SUBCASE("empty claim set reports absent, not zero") {
        trace::Trace tr = phi_trace({0}, true);
        contracts::ClaimSet cs;
        auto res = contracts::claim_support(cs, {}, tr);
        CHECK(res.empty());
        CHECK_FALSE(res.h_rate.has_value());
    }
}

TEST_CASE("claim support properties on random claim sets") {
    Rng rng(31337);
    for (int iter = 0; iter < 100; ++iter) {
        trace::Trace tr;
        tr.horizon = 20;
        trace::MatRecord lookup = make_record(0, "r", trace::ActionType::ToolCall);
        lookup.action.kind.tool = "db_lookup";
        lookup.observation.payload["x"] = 1;
        trace::append_record(tr, lookup);
        int total = 1 + static_cast<int>(rng.below(6));
        contracts::ClaimSet cs;
        std::vector<contracts::Fact> truth;
        Json claims = Json::array();
        trace::MatRecord assert_rec = make_record(1, "p");
        trace::MatRecord use_rec = make_record(2, "e", trace::ActionType::ToolCall);
        use_rec.action.kind.tool = "db_update";
        for (int i = 0; i < total; ++i) {
            std::string id = "claim:1:" + std::to_string(i);
            std::string subj = "s" + std::to_string(i);
            claims.push_back({{"id", id}, {"subject", subj}, {"predicate", "p"},
                              {"value", "v"}});
            cs.claims.push_back({id, subj, "p", "v"});
            if (rng.below(2)) {
                truth.push_back({subj, "p", "v"});
                cs.evidence[id].push_back({"toolresult:0:0", trace::ProvRel::supports, id});
            }
            if (rng.below(2)) use_rec.action.claim_refs.push_back(id);
        }
        assert_rec.action.params["claims"] = claims;
        trace::append_record(tr, assert_rec);
        trace::append_record(tr, use_rec);
        auto res = contracts::claim_support(cs, truth, tr);
        REQUIRE(res.h_rate.has_value());
        CHECK(*res.h_prop <= *res.h_rate);
        CHECK(*res.h_rate <= 1.0);
        CHECK(*res.h_rate >= 0.0);
    }
}
