#include "matkit/common.hpp"

#include <array>

namespace matkit {

std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i) {
        out[static_cast<std::size_t>(i)] = digits[v & 0xF];
        v >>= 4;
    }
    return out;
}

std::string hash8(std::string_view s) { return hex64(fnv1a(s)).substr(0, 8); }

std::string digest(const Json& j) { return hash8(j.dump()); }

std::size_t Rng::weighted(const std::vector<double>& weights) {
    double total = 0.0;
    for (double w : weights) total += w;
    double draw = uniform() * total;
    double acc = 0.0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        acc += weights[i];
        if (draw < acc) return i;
    }
    return weights.size() - 1;
}

Rng substream(std::uint64_t root, std::string_view label) {
    return Rng(fnv1a(label, root ^ kFnvOffset) ^ root);
}

int token_count(std::string_view text) {
    int n = 0;
    bool in_token = false;
    for (char c : text) {
        bool ws = c == ' ' || c == '\t' || c == '\n' || c == '\r';
        if (!ws && !in_token) ++n;
        in_token = !ws;
    }
    return n;
}

std::string redaction_marker(std::string_view value) {
    return "⟨redacted:" + hash8(value) + "⟩";
}

}  // namespace matkit
