#pragma once

#include <string>
#include <string_view>
#include <vector>

namespace canoe {

// Normalization applied before exact-match comparisons. The pipeline keeps
// normalization in one place so training rewards and evaluation metrics
// cannot drift apart.
struct MatchPolicy {
    bool case_fold = true;          // ASCII lower-casing
    bool strip_punct_edges = true;  // strip punctuation at token edges
    bool whitespace_collapse = true;
    bool article_strip = true;      // drop a/an/the tokens

    static MatchPolicy exact() { return {false, false, false, false}; }
};

// Canonical form of `text` under `policy`. Idempotent:
// normalize(normalize(x)) == normalize(x) for any policy.
std::string normalize(std::string_view text, const MatchPolicy& policy = {});

// normalize(a) == normalize(b)
bool match_equal(std::string_view a, std::string_view b, const MatchPolicy& policy = {});

// Normalized tokens of `text` (the intermediate of normalize()).
std::vector<std::string> normalize_tokens(std::string_view text, const MatchPolicy& policy = {});

}  // namespace canoe
