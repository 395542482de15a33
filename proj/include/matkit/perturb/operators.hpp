#pragma once

#include <map>
#include <string>
#include <vector>

#include "matkit/common.hpp"
#include "matkit/trace/model.hpp"

namespace matkit::perturb {

enum class OpFamily { PromptContext, Service, Retrieval, Memory };

const char* to_string(OpFamily f);
OpFamily family_from(const std::string& s);

/// One bounded transformation. Cost inputs are explicit on the operator:
/// token_delta counts token changes, hooks counts activated boundary hooks
/// (a multi-step delay carries one hook per affected step), and magnitude is
/// the per-kind size knob:
///   partial            -> payload-removal fraction
///   corrupt-field      -> number of fields altered
///   schema-mismatch    -> 1
///   shuffle-topk       -> k items permuted
///   near-duplicate-distractor -> items added (1)
///   truncate-evidence  -> items removed
///   reorder / collision -> 1
struct Operator {
    OpFamily family = OpFamily::Service;
    std::string kind;
    std::string target;  // tool name, memory key, or channel label
    int token_delta = 0;
    int hooks = 0;
    double magnitude = 0.0;
    Json params = Json::object();

    bool operator==(const Operator&) const = default;
};

struct Schedule {
    std::map<int, std::vector<Operator>> ops;  // step -> operators, applied in order

    bool empty() const { return ops.empty(); }
    int op_count() const;
    void add(int t, Operator op) { ops[t].push_back(std::move(op)); }

    /// Deterministic identifier ("nominal" for the empty schedule); doubles
    /// as the lexicographic tie-break key in searches.
    std::string id() const;

    bool operator==(const Schedule&) const = default;
};

struct CostModel {
    double c_tok = 1.0;
    double c_hook = 5.0;
    double c_mag = 10.0;
    double budget = 50.0;
};

double cost(const Operator& op, const CostModel& model);
double cost(const Schedule& schedule, const CostModel& model);

/// Payload transform for content-type operators. `channel` must match the
/// operator family; throws FamilyChannelMismatch otherwise. Deterministic
/// given the substream.
Json apply(const Operator& op, trace::Channel channel, const Json& payload, Rng& rng);

trace::Channel family_channel(OpFamily f);

// Factory helpers pinning the per-kind cost conventions.
Operator inject_note(const std::string& key, const std::string& content);
Operator paraphrase_splice(const std::string& text);
Operator op_timeout(const std::string& tool);
Operator op_delay(const std::string& tool, int steps);
Operator op_drop(const std::string& tool);
Operator op_partial(const std::string& tool, double fraction);
Operator corrupt_field(const std::string& tool, int fields);
Operator schema_mismatch(const std::string& tool);
Operator op_stale(const std::string& tool);
Operator shuffle_topk(const std::string& tool, int k);
Operator near_duplicate_distractor(const std::string& tool);
Operator truncate_evidence(const std::string& tool, int items);
Operator memory_reorder();
Operator memory_collision(const std::string& key);

Json to_json(const Operator& op);
Operator operator_from_json(const Json& j);
Json to_json(const Schedule& s);
Schedule schedule_from_json(const Json& j);

}  // namespace matkit::perturb
