#include "matkit/perturb/operators.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace matkit::perturb {

const char* to_string(OpFamily f) {
    switch (f) {
        case OpFamily::PromptContext: return "PromptContext";
        case OpFamily::Service: return "Service";
        case OpFamily::Retrieval: return "Retrieval";
        case OpFamily::Memory: return "Memory";
    }
    return "?";
}

OpFamily family_from(const std::string& s) {
    if (s == "PromptContext") return OpFamily::PromptContext;
    if (s == "Service") return OpFamily::Service;
    if (s == "Retrieval") return OpFamily::Retrieval;
    if (s == "Memory") return OpFamily::Memory;
    throw Error("unknown operator family: " + s);
}

trace::Channel family_channel(OpFamily f) {
    switch (f) {
        case OpFamily::PromptContext: return trace::Channel::User;
        case OpFamily::Service: return trace::Channel::Tool;
        case OpFamily::Retrieval: return trace::Channel::Retrieval;
        case OpFamily::Memory: return trace::Channel::Memory;
    }
    return trace::Channel::User;
}

int Schedule::op_count() const {
    int n = 0;
    for (const auto& [t, v] : ops) n += static_cast<int>(v.size());
    return n;
}

std::string Schedule::id() const {
    if (ops.empty()) return "nominal";
    std::ostringstream out;
    bool first = true;
    for (const auto& [t, v] : ops) {
        for (const auto& op : v) {
            if (!first) out << '+';
            first = false;
            out << 't' << t << '=' << op.kind << '@' << op.target;
        }
    }
    return out.str();
}

double cost(const Operator& op, const CostModel& model) {
    return model.c_tok * std::abs(op.token_delta) + model.c_hook * op.hooks +
           model.c_mag * op.magnitude;
}

double cost(const Schedule& schedule, const CostModel& model) {
    double total = 0.0;
    for (const auto& [t, v] : schedule.ops)
        for (const auto& op : v) total += cost(op, model);
    return total;
}

namespace {

Json apply_field_ops(const Operator& op, const Json& payload, Rng& rng) {
    Json out = payload;
    std::vector<std::string> keys;
    for (auto it = out.begin(); it != out.end(); ++it) keys.push_back(it.key());
    if (op.kind == "partial") {
        double frac = op.params.value("fraction", op.magnitude);
        auto remove = static_cast<std::size_t>(
            std::ceil(frac * static_cast<double>(keys.size())));
        remove = std::min(remove, keys.size());
        for (std::size_t i = 0; i < remove; ++i) out.erase(keys[keys.size() - 1 - i]);
        return out;
    }
    if (op.kind == "corrupt-field") {
        int n = op.params.value("fields", static_cast<int>(op.magnitude));
        n = std::min<int>(n, static_cast<int>(keys.size()));
        std::vector<std::string> pool = keys;
        for (int i = 0; i < n; ++i) {
            std::size_t pick = static_cast<std::size_t>(rng.below(pool.size()));
            out[pool[pick]] = "~corrupted~";
            pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(pick));
        }
        return out;
    }
    if (op.kind == "schema-mismatch") {
        if (!keys.empty()) out.erase(keys.front());
        out["unexpected_field"] = true;
        return out;
    }
    throw FamilyChannelMismatch("no payload transform for service op " + op.kind);
}

Json apply_item_ops(const Operator& op, const Json& payload, Rng& rng) {
    Json out = payload;
    if (!out.contains("items") || !out["items"].is_array())
        throw FamilyChannelMismatch("retrieval payload has no items array");
    Json& items = out["items"];
    if (op.kind == "shuffle-topk") {
        int k = std::min<int>(op.params.value("k", static_cast<int>(op.magnitude)),
                              static_cast<int>(items.size()));
        for (int i = k - 1; i > 0; --i) {
            auto j = static_cast<int>(rng.below(static_cast<std::uint64_t>(i) + 1));
            std::swap(items[static_cast<std::size_t>(i)], items[static_cast<std::size_t>(j)]);
        }
        return out;
    }
    if (op.kind == "near-duplicate-distractor") {
        if (!items.empty()) {
            Json dup = items[0];
            if (dup.is_string()) dup = dup.get<std::string>() + " (dup)";
            items.insert(items.begin() + 1, dup);
        }
        return out;
    }
    if (op.kind == "truncate-evidence") {
        int m = std::min<int>(op.params.value("items", static_cast<int>(op.magnitude)),
                              static_cast<int>(items.size()));
        for (int i = 0; i < m; ++i) items.erase(items.size() - 1);
        return out;
    }
    throw FamilyChannelMismatch("no payload transform for retrieval op " + op.kind);
}

}  // namespace

Json apply(const Operator& op, trace::Channel channel, const Json& payload, Rng& rng) {
    if (family_channel(op.family) != channel)
        throw FamilyChannelMismatch(std::string(to_string(op.family)) +
                                    " operator applied to wrong channel");
    switch (op.family) {
        case OpFamily::Service: return apply_field_ops(op, payload, rng);
        case OpFamily::Retrieval: return apply_item_ops(op, payload, rng);
        case OpFamily::Memory: {
            if (op.kind == "inject-note") {
                Json out = payload;
                Json note;
                note["key"] = op.params.value("key", op.target);
                note["content"] = op.params.value("content", "");
                note["trust"] = "Untrusted";
                note["writer"] = "injected";
                out.push_back(note);
                return out;
            }
            throw FamilyChannelMismatch("no payload transform for memory op " + op.kind);
        }
        case OpFamily::PromptContext: {
            Json out = payload;
            if (op.kind == "paraphrase-splice") {
                std::string text = out.value("text", "");
                out["text"] = text.empty() ? op.params.value("text", "")
                                           : text + " " + op.params.value("text", "");
                return out;
            }
            throw FamilyChannelMismatch("no payload transform for context op " + op.kind);
        }
    }
    throw FamilyChannelMismatch("unhandled operator family");
}

Operator inject_note(const std::string& key, const std::string& content) {
    Operator op;
    op.family = OpFamily::Memory;
    op.kind = "inject-note";
    op.target = key;
    op.token_delta = token_count(content);
    op.params["key"] = key;
    op.params["content"] = content;
    return op;
}

Operator paraphrase_splice(const std::string& text) {
    Operator op;
    op.family = OpFamily::PromptContext;
    op.kind = "paraphrase-splice";
    op.target = "context";
    op.token_delta = token_count(text);
    op.params["text"] = text;
    return op;
}

namespace {
Operator service_op(const std::string& kind, const std::string& tool, int hooks,
                    double magnitude) {
    Operator op;
    op.family = OpFamily::Service;
    op.kind = kind;
    op.target = tool;
    op.hooks = hooks;
    op.magnitude = magnitude;
    return op;
}
Operator retrieval_op(const std::string& kind, const std::string& tool, double magnitude) {
    Operator op;
    op.family = OpFamily::Retrieval;
    op.kind = kind;
    op.target = tool;
    op.hooks = 1;
    op.magnitude = magnitude;
    return op;
}
}  // namespace

Operator op_timeout(const std::string& tool) { return service_op("timeout", tool, 1, 0.0); }

Operator op_delay(const std::string& tool, int steps) {
    Operator op = service_op("delay", tool, steps, 0.0);
    op.params["steps"] = steps;
    return op;
}

Operator op_drop(const std::string& tool) { return service_op("drop", tool, 1, 0.0); }

Operator op_partial(const std::string& tool, double fraction) {
    Operator op = service_op("partial", tool, 1, fraction);
    op.params["fraction"] = fraction;
    return op;
}

Operator corrupt_field(const std::string& tool, int fields) {
    Operator op = service_op("corrupt-field", tool, 1, fields);
    op.params["fields"] = fields;
    return op;
}

Operator schema_mismatch(const std::string& tool) {
    return service_op("schema-mismatch", tool, 1, 1.0);
}

Operator op_stale(const std::string& tool) { return service_op("stale", tool, 1, 0.0); }

Operator shuffle_topk(const std::string& tool, int k) {
    Operator op = retrieval_op("shuffle-topk", tool, k);
    op.params["k"] = k;
    return op;
}

Operator near_duplicate_distractor(const std::string& tool) {
    return retrieval_op("near-duplicate-distractor", tool, 1.0);
}

Operator truncate_evidence(const std::string& tool, int items) {
    Operator op = retrieval_op("truncate-evidence", tool, items);
    op.params["items"] = items;
    return op;
}

Operator memory_reorder() {
    Operator op;
    op.family = OpFamily::Memory;
    op.kind = "reorder";
    op.target = "memory";
    op.hooks = 1;
    op.magnitude = 1.0;
    return op;
}

Operator memory_collision(const std::string& key) {
    Operator op;
    op.family = OpFamily::Memory;
    op.kind = "collision";
    op.target = key;
    op.hooks = 1;
    op.magnitude = 1.0;
    op.params["key"] = key;
    return op;
}

Json to_json(const Operator& op) {
    Json j;
    j["family"] = to_string(op.family);
    j["kind"] = op.kind;
    j["target"] = op.target;
    j["token_delta"] = op.token_delta;
    j["hooks"] = op.hooks;
    j["magnitude"] = op.magnitude;
    j["params"] = op.params;
    return j;
}

Operator operator_from_json(const Json& j) {
    Operator op;
    op.family = family_from(j.at("family").get<std::string>());
    op.kind = j.at("kind").get<std::string>();
    op.target = j.at("target").get<std::string>();
    op.token_delta = j.at("token_delta").get<int>();
    op.hooks = j.at("hooks").get<int>();
    op.magnitude = j.at("magnitude").get<double>();
    op.params = j.at("params");
    return op;
}

Json to_json(const Schedule& s) {
    Json j = Json::object();
    for (const auto& [t, v] : s.ops) {
        Json arr = Json::array();
        for (const auto& op : v) arr.push_back(to_json(op));
        j[std::to_string(t)] = arr;
    }
    return j;
}

Schedule schedule_from_json(const Json& j) {
    Schedule s;
    for (auto it = j.begin(); it != j.end(); ++it) {
        int t = std::stoi(it.key());
        for (const auto& opj : it.value()) s.ops[t].push_back(operator_from_json(opj));
    }
    return s;
}

}  // namespace matkit::perturb
