#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

namespace matkit {

using Json = nlohmann::json;

// ---------------------------------------------------------------------------
// Errors
// ---------------------------------------------------------------------------

struct Error : std::runtime_error {
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

struct StepIndexGap : Error {
    explicit StepIndexGap(const std::string& w) : Error(w) {}
};
struct AppendAfterTerminate : Error {
    explicit AppendAfterTerminate(const std::string& w) : Error(w) {}
};
struct MalformedRecord : Error {
    int line;
    MalformedRecord(int line_no, const std::string& w)
        : Error("line " + std::to_string(line_no) + ": " + w), line(line_no) {}
};
struct MissingStub : Error {
    explicit MissingStub(const std::string& sig) : Error("missing stub: " + sig) {}
};
struct ConfigMismatch : Error {
    explicit ConfigMismatch(const std::string& w) : Error(w) {}
};
struct ConfigError : Error {
    explicit ConfigError(const std::string& w) : Error(w) {}
};
struct NoStepsForAgent : Error {
    explicit NoStepsForAgent(const std::string& agent) : Error("agent never acted: " + agent) {}
};
struct ContractEvaluationError : Error {
    std::string contract_id;
    ContractEvaluationError(const std::string& id, const std::string& w)
        : Error("contract " + id + ": " + w), contract_id(id) {}
};
struct UnknownAgent : Error {
    explicit UnknownAgent(const std::string& agent) : Error("unknown agent: " + agent) {}
};
struct FamilyChannelMismatch : Error {
    explicit FamilyChannelMismatch(const std::string& w) : Error(w) {}
};
struct SpaceTooLarge : Error {
    explicit SpaceTooLarge(const std::string& w) : Error(w) {}
};
struct EmptyMatrix : Error {
    explicit EmptyMatrix(const std::string& w) : Error(w) {}
};
struct KExceedsSeeds : Error {
    explicit KExceedsSeeds(const std::string& w) : Error(w) {}
};
struct NoFaultsInjected : Error {
    explicit NoFaultsInjected(const std::string& w) : Error(w) {}
};
struct NoSuccesses : Error {
    explicit NoSuccesses(const std::string& w) : Error(w) {}
};
struct NoBaselinePasses : Error {
    explicit NoBaselinePasses(const std::string& w) : Error(w) {}
};
struct InvalidCounts : Error {
    explicit InvalidCounts(const std::string& w) : Error(w) {}
};

// ---------------------------------------------------------------------------
// Hashing (FNV-1a, fixed across platforms)
// ---------------------------------------------------------------------------

constexpr std::uint64_t kFnvOffset = 1469598103934665603ULL;
constexpr std::uint64_t kFnvPrime = 1099511628211ULL;

inline std::uint64_t fnv1a(std::string_view s, std::uint64_t h = kFnvOffset) {
    for (unsigned char c : s) {
        h ^= c;
        h *= kFnvPrime;
    }
    return h;
}

std::string hex64(std::uint64_t v);

/// First 8 hex digits of fnv1a; used for redaction markers and digests.
std::string hash8(std::string_view s);

/// Stable content digest of a JSON value (dump is key-ordered).
std::string digest(const Json& j);

// ---------------------------------------------------------------------------
// Deterministic RNG
//
// SplitMix64 with counter-based substreams. std:: distributions are
// implementation-defined, which would break bit-identical replay, so all
// randomness in the toolkit goes through this.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    /// Uniform in [0, 1).
    double uniform() { return static_cast<double>(next() >> 11) * 0x1.0p-53; }

    /// Uniform integer in [0, n). n must be > 0.
    std::uint64_t below(std::uint64_t n) { return next() % n; }

    /// Index drawn proportionally to non-negative weights (sum > 0).
    std::size_t weighted(const std::vector<double>& weights);

private:
    std::uint64_t state_;
};

/// Independent substream for (root seed, label); same inputs, same stream.
Rng substream(std::uint64_t root, std::string_view label);

// ---------------------------------------------------------------------------
// Misc
// ---------------------------------------------------------------------------

/// Whitespace-delimited token count; the token proxy for efficiency metrics.
int token_count(std::string_view text);

/// "⟨redacted:xxxxxxxx⟩" marker for a sensitive value.
std::string redaction_marker(std::string_view value);

}  // namespace matkit
