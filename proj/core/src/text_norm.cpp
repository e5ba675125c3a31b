#include "canoe/text_norm.hpp"

#include <cctype>

namespace canoe {
namespace {

bool is_space(char c) { return std::isspace(static_cast<unsigned char>(c)) != 0; }
bool is_punct(char c) { return std::ispunct(static_cast<unsigned char>(c)) != 0; }

std::string fold_case(std::string_view s) {
    std::string out(s);
    for (char& c : out) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return out;
}

std::string strip_token_edges(std::string_view token) {
    size_t b = 0, e = token.size();
    while (b < e && is_punct(token[b])) ++b;
    while (e > b && is_punct(token[e - 1])) --e;
    return std::string(token.substr(b, e - b));
}

bool is_article(std::string_view token) {
    std::string low = fold_case(token);
    return low == "a" || low == "an" || low == "the";
}

struct Segment {
    std::string token;
    std::string ws_after;
};

// Leading whitespace plus the token/whitespace run structure of `text`.
std::pair<std::string, std::vector<Segment>> segment(std::string_view text) {
    std::string leading;
    size_t i = 0;
    while (i < text.size() && is_space(text[i])) leading.push_back(text[i++]);
    std::vector<Segment> segs;
    while (i < text.size()) {
        Segment s;
        while (i < text.size() && !is_space(text[i])) s.token.push_back(text[i++]);
        while (i < text.size() && is_space(text[i])) s.ws_after.push_back(text[i++]);
        segs.push_back(std::move(s));
    }
    return {std::move(leading), std::move(segs)};
}

std::vector<Segment> transform(std::string_view text, const MatchPolicy& policy,
                               std::string* leading_out) {
    std::string working = policy.case_fold ? fold_case(text) : std::string(text);
    auto [leading, segs] = segment(working);
    std::vector<Segment> kept;
    for (auto& s : segs) {
        if (policy.strip_punct_edges) s.token = strip_token_edges(s.token);
        if (policy.article_strip && is_article(s.token)) continue;  // drops its trailing ws too
        kept.push_back(std::move(s));
    }
    if (leading_out) *leading_out = std::move(leading);
    return kept;
}

}  // namespace

std::vector<std::string> normalize_tokens(std::string_view text, const MatchPolicy& policy) {
    std::vector<std::string> tokens;
    for (auto& s : transform(text, policy, nullptr)) {
        if (!s.token.empty()) tokens.push_back(std::move(s.token));
    }
    return tokens;
}

std::string normalize(std::string_view text, const MatchPolicy& policy) {
    if (!policy.case_fold && !policy.strip_punct_edges && !policy.whitespace_collapse &&
        !policy.article_strip) {
        return std::string(text);
    }
    std::string leading;
    std::vector<Segment> segs = transform(text, policy, &leading);
    std::string out;
    if (policy.whitespace_collapse) {
        for (const auto& s : segs) {
            if (s.token.empty()) continue;
            if (!out.empty()) out.push_back(' ');
            out += s.token;
        }
    } else {
        out = leading;
        for (const auto& s : segs) {
            out += s.token;
            out += s.ws_after;
        }
    }
    return out;
}

bool match_equal(std::string_view a, std::string_view b, const MatchPolicy& policy) {
    return normalize(a, policy) == normalize(b, policy);
}

}  // namespace canoe
