#pragma once

#include <string>

#include "matkit/trace/model.hpp"

namespace matkit::trace {

inline constexpr const char* kTraceSchema = "mat/1";

Json to_json(const StateProjection& s);
Json to_json(const Action& a);
Json to_json(const Observation& o);
Json to_json(const Verdict& v);
Json to_json(const MatRecord& r);
Json to_json(const RunKey& k);

StateProjection state_from_json(const Json& j);
Action action_from_json(const Json& j);
Observation observation_from_json(const Json& j);
Verdict verdict_from_json(const Json& j);
MatRecord record_from_json(const Json& j);
RunKey run_key_from_json(const Json& j);

/// One header line, then one record per line. Keys are emitted in a fixed
/// (lexicographic) order, so equal traces serialize byte-identically.
std::string serialize_trace(const Trace& trace);

/// Throws MalformedRecord with the offending 1-based line number.
Trace deserialize_trace(const std::string& bytes);

}  // namespace matkit::trace
