#include <doctest.h>

#include "test_support.hpp"

using namespace matkit;
using namespace testkit;

TEST_CASE("append_record enforces dense step indices") {
    trace::Trace tr;
    tr.horizon = 10;
    trace::append_record(tr, make_record(0));
    CHECK(tr.records.size() == 1);

    trace::Trace gap;
    gap.horizon = 10;
    for (int t = 0; t <= 4; ++t) trace::append_record(gap, make_record(t));
    CHECK_THROWS_AS(trace::append_record(gap, make_record(6)), StepIndexGap);

    trace::Trace done;
    done.horizon = 10;
    trace::append_record(done, make_record(0, "a1", trace::ActionType::Terminate));
    CHECK_THROWS_AS(trace::append_record(done, make_record(1)), AppendAfterTerminate);
}

TEST_CASE("append_record property: random gap injection always rejected") {
    Rng rng(99);
    for (int iter = 0; iter < 100; ++iter) {
        trace::Trace tr;
        tr.horizon = 100;
        int len = 1 + static_cast<int>(rng.below(10));
        for (int t = 0; t < len; ++t) trace::append_record(tr, make_record(t));
        int offset = static_cast<int>(rng.below(5)) + 2;  // skips at least one index
        CHECK_THROWS_AS(trace::append_record(tr, make_record(len - 1 + offset)), StepIndexGap);
        CHECK(tr.records.size() == static_cast<std::size_t>(len));
    }
}

TEST_CASE("term_status") {
    trace::Trace tr;
    tr.horizon = 20;
    for (int t = 0; t < 7; ++t) trace::append_record(tr, make_record(t));
    trace::MatRecord fin = make_record(7, "a1", trace::ActionType::Terminate);
    trace::append_record(tr, fin);
    auto ts = trace::term_status(tr);
    CHECK(ts.terminated);
    CHECK(ts.status == trace::TerminalStatus::Completed);

    trace::Trace open;
    open.horizon = 20;
    for (int t = 0; t <= 20; ++t) trace::append_record(open, make_record(t));
    CHECK_FALSE(trace::term_status(open).terminated);

    trace::Trace abort_tr;
    abort_tr.horizon = 20;
    trace::MatRecord ab = make_record(0, "a1", trace::ActionType::Terminate);
    ab.action.kind.status = trace::TerminalStatus::SafeAbort;
    trace::append_record(abort_tr, ab);
    CHECK(trace::term_status(abort_tr).status == trace::TerminalStatus::SafeAbort);
}

TEST_CASE("serialize round-trip identity") {
    trace::Trace tr;
    tr.horizon = 9;
    tr.run_key = {"task", "cfg", 42, "nominal"};
    trace::MatRecord r = make_record(0, "researcher", trace::ActionType::ToolCall);
    r.action.kind.tool = "db_lookup";
    r.action.kind.endpoint = "default";
    r.action.params["key"] = "order-7421";
    r.action.params["amount"] = 12.5;
    r.action.params["claims"] =
        Json::array({{{"id", "claim:0:0"}, {"subject", "s"}, {"predicate", "p"}, {"value", "v"}}});
    r.observation.payload["value"] = "V42";
    r.observation.channel = trace::Channel::Tool;
    r.provenance.push_back({"toolcall:0:0", trace::ProvRel::returns, "toolresult:0:0"});
    r.checked_contracts = {"least_privilege"};
    r.verdict.pass = false;
    r.verdict.violations = {"least_privilege"};
    r.verdict.severity = trace::Severity::Hard;
    r.verdict.mitigation = trace::Mitigation::Block;
    r.annotations = {"mediation:allow"};
    trace::append_record(tr, r);
    trace::MatRecord err = make_record(1, "executor", trace::ActionType::ToolCall);
    err.action.kind.tool = "db_update";
    err.observation.error_code = "Timeout";
    err.annotations = {"fault:timeout"};
    trace::append_record(tr, err);

    std::string bytes = trace::serialize_trace(tr);
    trace::Trace back = trace::deserialize_trace(bytes);
    CHECK(back == tr);
    CHECK(trace::serialize_trace(back) == bytes);
}

TEST_CASE("deserialize rejects malformed streams") {
    trace::Trace tr;
    tr.horizon = 5;
    trace::append_record(tr, make_record(0));
    std::string bytes = trace::serialize_trace(tr);

    std::string truncated = bytes.substr(0, bytes.size() - 10);
    CHECK_THROWS_AS(trace::deserialize_trace(truncated), MalformedRecord);

    std::string garbled = bytes;
    garbled.insert(garbled.find('\n') + 1, "not json\n");
    CHECK_THROWS_AS(trace::deserialize_trace(garbled), MalformedRecord);

    try {
        trace::deserialize_trace(garbled);
    } catch (const MalformedRecord& e) {
        CHECK(e.line == 2);
    }

    trace::Trace empty;
    empty.horizon = 3;
    empty.run_key = {"t", "c", 1, "nominal"};
    trace::Trace back = trace::deserialize_trace(trace::serialize_trace(empty));
    CHECK(back.records.empty());
    CHECK(back == empty);
}

TEST_CASE("provenance referential integrity") {
    trace::Trace tr;
    tr.horizon = 5;
    trace::MatRecord call = make_record(0, "r", trace::ActionType::ToolCall);
    call.action.kind.tool = "db_lookup";
    call.observation.payload["value"] = "V42";
    call.observation.channel = trace::Channel::Tool;
    call.provenance.push_back({"toolcall:0:0", trace::ProvRel::returns, "toolresult:0:0"});
    trace::append_record(tr, call);
    trace::MatRecord claim = make_record(1, "p", trace::ActionType::Message);
    claim.action.params["claims"] = Json::array(
        {{{"id", "claim:1:0"}, {"subject", "s"}, {"predicate", "p"}, {"value", "v"}}});
    claim.provenance.push_back({"toolresult:0:0", trace::ProvRel::supports, "claim:1:0"});
    trace::append_record(tr, claim);
    CHECK(trace::provenance_intact(tr));

    trace::Trace forward = tr;
    forward.records[0].provenance.push_back(
        {"toolresult:0:0", trace::ProvRel::supports, "claim:1:0"});  // not yet recorded
    CHECK_FALSE(trace::provenance_intact(forward));

    trace::Trace self_link = tr;
    self_link.records[1].provenance.push_back(
        {"claim:1:0", trace::ProvRel::derived_from, "claim:1:0"});
    CHECK_FALSE(trace::provenance_intact(self_link));
}

TEST_CASE("catalog traces keep provenance intact") {
    for (const auto& s : sim::scenario_catalog()) {
        sim::RunResult r = run(s.id(), gov::Variant::NoGovernance, 1);
        CHECK_MESSAGE(trace::provenance_intact(r.trace), s.id());
    }
}

TEST_CASE("redaction: state projections never leak sensitive values") {
    for (const auto& s : sim::scenario_catalog()) {
        sim::Config cfg = config_for(s.id());
        sim::RunResult r = run(s.id(), gov::Variant::NoGovernance, 1);
        for (const auto& rec : r.trace.records) {
            std::string state_json = trace::to_json(rec.state).dump();
            for (const auto& secret : cfg.policy.sensitive_values)
                CHECK(state_json.find(secret) == std::string::npos);
        }
    }
}

TEST_CASE("redaction markers appear when memory holds sensitive content") {
    sim::Scenario s = scenario("memory_injection");
    s.memory_preload.push_back({"cust-note", Json("customer ssn is 123-45-6789"),
                                trace::TrustFlag::Trusted, "crm_import"});
    sim::Config cfg = sim::make_config(s, gov::Variant::NoGovernance);
    sim::RunResult r = sim::exec(s, cfg, 1, {});
    bool marker_seen = false;
    for (const auto& rec : r.trace.records) {
        std::string state_json = trace::to_json(rec.state).dump();
        CHECK(state_json.find("123-45-6789") == std::string::npos);
        auto it = rec.state.redacted_params.find("cust-note");
        if (it != rec.state.redacted_params.end()) {
            CHECK(it->second == redaction_marker("123-45-6789"));
            marker_seen = true;
        }
    }
    CHECK(marker_seen);
    CHECK(redaction_marker("123-45-6789").find("⟨redacted:") == 0);
}

TEST_CASE("phi_of weighted sums") {
    trace::StateProjection s;
    s.unresolved_subtasks = 2;
    s.pending_approvals = 1;
    s.active_retries = 0;
    CHECK(trace::phi_of(s, 1, 1, 1) == 3.0);
    trace::StateProjection zero;
    CHECK(trace::phi_of(zero, 1, 1, 1) == 0.0);
    trace::StateProjection w;
    w.unresolved_subtasks = 1;
    w.pending_approvals = 1;
    w.active_retries = 1;
    CHECK(trace::phi_of(w, 2, 1, 1) == 4.0);
}

TEST_CASE("replay bundle round trip and stub cache guards") {
    const sim::Scenario& s = scenario("tooluse_happy");
    sim::Config cfg = config_for("tooluse_happy");
    sim::RunResult r = sim::exec(s, cfg, 42, {});
    sim::ReplayRecord rr = sim::build_replay(s, cfg, r);

    trace::Trace replayed = sim::replay(rr);
    CHECK(trace::serialize_trace(replayed) == rr.trace_bytes);

    SUBCASE("bundle IO") {
        std::string dir = "/tmp/matkit_test_bundle";
        sim::write_bundle(rr, dir);
        sim::ReplayRecord back = sim::read_bundle(dir);
        CHECK(back.trace_bytes == rr.trace_bytes);
        CHECK(back.stub_cache == rr.stub_cache);
        CHECK(trace::serialize_trace(sim::replay(back)) == rr.trace_bytes);
    }

    SUBCASE("deleting a stub entry fails replay") {
        sim::ReplayRecord broken = rr;
        REQUIRE(!broken.stub_cache.empty());
        broken.stub_cache.erase(broken.stub_cache.begin());
        CHECK_THROWS_AS(sim::replay(broken), MissingStub);
    }

    SUBCASE("tampered task snapshot is a config mismatch") {
        sim::ReplayRecord tampered = rr;
        tampered.task_snapshot["inputs"]["request"] = "something else";
        CHECK_THROWS_AS(sim::replay(tampered), ConfigMismatch);
    }

    SUBCASE("unknown scenario is a config mismatch") {
        sim::ReplayRecord lost = rr;
        lost.run_key.task_id = "gone";
        CHECK_THROWS_AS(sim::replay(lost), ConfigMismatch);
    }
}

TEST_CASE("replay reproduces fault schedules and verdicts") {
    const sim::Scenario& s = scenario("fault_timeout");
    sim::Config cfg = config_for("fault_timeout");
    sim::RunResult r = sim::exec(s, cfg, 7, s.default_fault_schedule);
    // the default schedule times out the first lookup at t=1
    bool fault_seen = false;
    for (const auto& rec : r.trace.records)
        if (rec.has_annotation("fault:timeout")) fault_seen = true;
    REQUIRE(fault_seen);
    sim::ReplayRecord rr = sim::build_replay(s, cfg, r);
    trace::Trace replayed = sim::replay(rr);
    CHECK(trace::serialize_trace(replayed) == trace::serialize_trace(r.trace));
    for (std::size_t i = 0; i < replayed.records.size(); ++i)
        CHECK(replayed.records[i].verdict == r.trace.records[i].verdict);
}
