#include "canoe/mock_client.hpp"

#include <cmath>
#include <cstdio>
#include <optional>
#include <vector>

#include "canoe/text_norm.hpp"
#include "canoe/util.hpp"

namespace canoe::llm {

namespace {

constexpr const char* kConversationMarker = "A conversation between User and Assistant.";

struct Fact {
    std::string head;
    std::string relation;
    std::string tail;
};

std::string fact_sentence(const Fact& f) {
    return f.head + "'s " + f.relation + " is " + f.tail + ".";
}

std::optional<Fact> parse_fact(std::string s) {
    s = trim(s);
    if (!s.empty() && s.back() == '.') s.pop_back();
    const auto apos = s.find("'s ");
    if (apos == std::string::npos || apos == 0) return std::nullopt;
    const auto is_pos = s.rfind(" is ");
    if (is_pos == std::string::npos || is_pos < apos + 3) return std::nullopt;
    Fact f;
    f.head = trim(s.substr(0, apos));
    f.relation = trim(s.substr(apos + 3, is_pos - apos - 3));
    f.tail = trim(s.substr(is_pos + 4));
    if (f.head.empty() || f.relation.empty() || f.tail.empty()) return std::nullopt;
    return f;
}

std::vector<Fact> facts_in(const std::string& text) {
    std::vector<Fact> out;
    std::string current;
    for (const char c : text) {
        if (c == '.') {
            if (auto f = parse_fact(current)) out.push_back(std::move(*f));
            current.clear();
        } else {
            current += c;
        }
    }
    if (auto f = parse_fact(current)) out.push_back(std::move(*f));
    return out;
}

bool label_eq(const std::string& a, const std::string& b) {
    return match_equal(a, b, MatchPolicy{});
}

std::optional<std::string> between(const std::string& s, const std::string& open,
                                   const std::string& close) {
    const auto i = s.find(open);
    if (i == std::string::npos) return std::nullopt;
    const auto start = i + open.size();
    const auto j = s.find(close, start);
    if (j == std::string::npos) return std::nullopt;
    return s.substr(start, j - start);
}

std::vector<std::string> split_by(const std::string& s, const std::string& sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (true) {
        const auto next = s.find(sep, pos);
        if (next == std::string::npos) {
            out.push_back(s.substr(pos));
            return out;
        }
        out.push_back(s.substr(pos, next - pos));
        pos = next + sep.size();
    }
}

std::optional<Fact> parse_triple_text(std::string s) {
    s = trim(s);
    if (s.size() < 2 || s.front() != '(' || s.back() != ')') return std::nullopt;
    s = s.substr(1, s.size() - 2);
    const auto c1 = s.find(", ");
    const auto c2 = s.rfind(", ");
    if (c1 == std::string::npos || c2 == c1) return std::nullopt;
    Fact f;
    f.head = trim(s.substr(0, c1));
    f.relation = trim(s.substr(c1 + 2, c2 - c1 - 2));
    f.tail = trim(s.substr(c2 + 2));
    if (f.head.empty() || f.relation.empty() || f.tail.empty()) return std::nullopt;
    return f;
}

std::vector<Fact> parse_chain_text(std::string s) {
    s = trim(s);
    if (s.size() < 2 || s.front() != '[' || s.back() != ']') return {};
    s = s.substr(1, s.size() - 2);
    auto items = split_by(s, "), (");
    if (items.size() > 1) {
        items.front() += ")";
        items.back() = "(" + items.back();
        for (std::size_t i = 1; i + 1 < items.size(); ++i) items[i] = "(" + items[i] + ")";
    }
    std::vector<Fact> out;
    for (const auto& item : items) {
        if (auto f = parse_triple_text(item)) out.push_back(std::move(*f));
    }
    return out;
}

struct Resolution {
    bool ok = false;
    std::string answer = "unknown";
    std::vector<Fact> used;
};

// Answers composed questions of the form "What is H's r1's r2...?" by walking
// the fact sentences found in the passage.
Resolution resolve_chain(const std::string& question, const std::vector<Fact>& facts) {
    Resolution res;
    std::string q = trim(question);
    if (!q.empty() && q.back() == '?') q.pop_back();
    constexpr const char* kPrefix = "What is ";
    if (!q.starts_with(kPrefix)) return res;
    q = q.substr(std::string(kPrefix).size());
    const auto parts = split_by(q, "'s ");
    if (parts.size() < 2) return res;

    std::string current = trim(parts[0]);
    for (std::size_t i = 1; i < parts.size(); ++i) {
        const std::string relation = trim(parts[i]);
        bool found = false;
        for (const Fact& f : facts) {
            if (label_eq(f.head, current) && label_eq(f.relation, relation)) {
                res.used.push_back(f);
                current = f.tail;
                found = true;
                break;
            }
        }
        if (!found) return Resolution{};
    }
    res.ok = true;
    res.answer = current;
    return res;
}

std::string context_text(const std::vector<Fact>& facts, std::size_t target_words) {
    std::string out;
    for (const Fact& f : facts) {
        out += fact_sentence(f);
        out += ' ';
    }
    constexpr const char* kFiller =
        "Further archival notes describe the surrounding circumstances in measured detail. ";
    while (word_count(out) < target_words) out += kFiller;
    return trim(out);
}

std::string first_sentence(const std::string& text) {
    const auto dot = text.find('.');
    if (dot != std::string::npos) return trim(text.substr(0, dot + 1));
    return trim(text);
}

struct Option {
    char letter;
    std::string text;
};

std::vector<Option> parse_options(const std::string& block) {
    std::vector<Option> out;
    for (const auto& line : split(block, '\n')) {
        const std::string t = trim(line);
        if (t.size() >= 3 && t[1] == '.' && t[0] >= 'A' && t[0] <= 'Z') {
            out.push_back({t[0], trim(t.substr(2))});
        }
    }
    return out;
}

void check_request(const GenerationRequest& req) {
    if (req.max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    if (!std::isfinite(req.temperature) || req.temperature < 0.0) {
        throw ConfigError("temperature must be finite and >= 0");
    }
}

ScoredSequence uniform_score(const std::string& continuation, int vocab) {
    if (continuation.empty()) throw ConfigError("score: continuation must be non-empty");
    if (vocab < 2) throw ConfigError("mock vocab must be >= 2");
    const std::size_t tokens = word_count(continuation);
    const std::size_t n = tokens == 0 ? 1 : tokens;  // whitespace-only still costs one token
    ScoredSequence out;
    out.text = continuation;
    const double lp = -std::log(static_cast<double>(vocab));
    out.token_logprobs.assign(n, lp);
    out.total_logprob = lp * static_cast<double>(n);
    out.validate();
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// EchoMockClient

EchoMockClient::EchoMockClient(MockConfig config) : config_(config) {}

Generation EchoMockClient::generate(const GenerationRequest& req) {
    check_request(req);
    const std::uint64_t h =
        fnv1a64(req.user_message, derive_seed(config_.seed, "echo", req.seed.value_or(0)));
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return Generation{std::string("echo ") + buf, 0};
}

ScoredSequence EchoMockClient::score(const std::string&, const std::string& continuation) {
    return uniform_score(continuation, config_.vocab);
}

std::string EchoMockClient::identity() const {
    return "mock:echo:vocab=" + std::to_string(config_.vocab) +
           ":seed=" + std::to_string(config_.seed);
}

// ---------------------------------------------------------------------------
// FaithfulMockClient

FaithfulMockClient::FaithfulMockClient(MockConfig config) : config_(config) {
    if (config_.flaw_rate < 0.0 || config_.flaw_rate > 1.0) {
        throw ConfigError("flaw_rate must lie in [0,1]");
    }
}

namespace {

Generation tagged_answer(const MockConfig& config, const GenerationRequest& req) {
    const std::string& user = req.user_message;
    std::string context;
    std::string question;
    const auto open = user.find("<context>");
    const auto close = user.find("</context>");
    if (open != std::string::npos && close != std::string::npos && close > open) {
        context = user.substr(open + 9, close - open - 9);
        question = trim(user.substr(close + 10));
    } else {
        question = trim(user);
    }
    // Instructions may append option lists or answer cues below the question.
    question = trim(split_by(question, "\n").front());

    const auto facts = facts_in(context);
    const auto res = resolve_chain(question, facts);

    std::string think = "I traced the requested relation chain through the passage.";
    std::string long_answer;
    if (res.ok) {
        for (const Fact& f : res.used) {
            if (!long_answer.empty()) long_answer += ' ';
            long_answer += fact_sentence(f);
        }
    } else {
        long_answer = "The context does not state the requested fact.";
    }
    std::string short_answer = res.ok ? res.answer : "unknown";

    // Deliberate flaws, sampled-by-hash, only for stochastic decoding so that
    // greedy re-asks (temperature 0) stay clean.
    bool drop_short_close = false;
    if (req.temperature > 0.0 && config.flaw_rate > 0.0) {
        const std::uint64_t h =
            fnv1a64(user, derive_seed(config.seed, "flaw", req.seed.value_or(0)));
        const double u = static_cast<double>(h >> 11) * 0x1.0p-53;
        if (u < config.flaw_rate) {
            switch ((h >> 3) % 3) {
                case 0: short_answer = "certainly not " + short_answer; break;
                case 1: long_answer = "The answer is clear from the context."; break;
                default: drop_short_close = true; break;
            }
        }
    }

    std::string text = "<think> " + think + " </think> <long_answer> " + long_answer +
                       " </long_answer> <short_answer> " + short_answer;
    if (!drop_short_close) text += " </short_answer>";
    return Generation{std::move(text), 0};
}

Generation synthesis_answer(const GenerationRequest& req) {
    const std::string& user = req.user_message;
    const bool wants_question = user.find("question generator") != std::string::npos;

    if (auto triple_text = between(user, "Given a triple ", " collected from Wikidata")) {
        const auto f = parse_triple_text(*triple_text);
        if (!f) return Generation{"unparseable triple", 0};
        if (wants_question) {
            return Generation{"What is " + f->head + "'s " + f->relation + "?", 0};
        }
        return Generation{context_text({*f}, 150), 0};
    }

    if (auto chain_text = between(user, "Given a chain of triples ", " collected from Wikidata")) {
        const auto chain = parse_chain_text(*chain_text);
        if (chain.empty()) return Generation{"unparseable chain", 0};
        if (wants_question) {
            std::string q = "What is " + chain.front().head;
            for (const Fact& f : chain) q += "'s " + f.relation;
            q += "?";
            return Generation{std::move(q), 0};
        }
        return Generation{context_text(chain, 150 * chain.size()), 0};
    }

    return Generation{"unrecognised synthesis instruction", 0};
}

Generation judge_answer(const MockConfig& config, const GenerationRequest& req) {
    const std::uint64_t h =
        fnv1a64(req.user_message, derive_seed(config.seed, "judge", req.seed.value_or(0)));
    const int rating = 3 + static_cast<int>(h % 3);
    return Generation{"The response reads clearly overall. [[" + std::to_string(rating) + "]]", 0};
}

Generation fact_check_answer(const GenerationRequest& req) {
    const std::string& user = req.user_message;
    auto passage = between(user, "Passage: ", "\n\nStatement: ");
    auto statement = between(user, "Statement: ", "\n\nDoes the passage");
    if (!passage || !statement) return Generation{"NO", 0};
    const MatchPolicy policy;
    const std::string hay = normalize(*passage, policy);
    const std::string needle = normalize(trim(*statement), policy);
    const bool supported = !needle.empty() && hay.find(needle) != std::string::npos;
    return Generation{supported ? "YES" : "NO", 0};
}

Generation plain_short_answer(const GenerationRequest& req) {
    const std::string& user = req.user_message;
    const auto passages = between(user, "Passages: ", "\n\nRefer to the passages");
    const auto question = between(user, "Question: ", "\n\n");
    if (!passages || !question) return Generation{"unknown", 0};
    const auto res = resolve_chain(*question, facts_in(*passages));
    return Generation{res.answer, 0};
}

Generation plain_mc_answer(const MockConfig& config, const GenerationRequest& req) {
    const std::string& user = req.user_message;
    const auto passages = between(user, "Passages: ", "\n\nRefer to the passages");
    const auto question = between(user, "Question: ", "\n\n");
    const auto option_block = between(user, "Options: ", "\n\nAnswer:");
    if (!option_block) return Generation{"unknown", 0};
    const auto options = parse_options(*option_block);

    if (passages && question) {
        const auto res = resolve_chain(*question, facts_in(*passages));
        if (res.ok) {
            for (const Option& o : options) {
                if (label_eq(o.text, res.answer)) {
                    return Generation{std::string("The correct option is ") + o.letter + ".", 0};
                }
            }
            return Generation{res.answer, 0};
        }
    }
    if (options.empty()) return Generation{"unknown", 0};
    const std::uint64_t h =
        fnv1a64(user, derive_seed(config.seed, "mc", req.seed.value_or(0)));
    const Option& pick = options[h % options.size()];
    return Generation{std::string("The correct option is ") + pick.letter + ".", 0};
}

Generation condense_answer(const GenerationRequest& req, const char* stop) {
    const auto passage = between(req.user_message, "Passage: ", stop);
    if (!passage) return Generation{"No passage provided.", 0};
    const std::string s = first_sentence(*passage);
    return Generation{s.empty() ? "No passage provided." : s, 0};
}

Generation plain_long_answer(const GenerationRequest& req) {
    const std::string& user = req.user_message;
    const auto passage = between(user, "Passage: ", "\n\nRefer to the passages");
    const auto qpos = user.rfind("Question: ");
    if (!passage || qpos == std::string::npos) return Generation{"No passage provided.", 0};
    const std::string question = trim(user.substr(qpos + 10));
    const auto res = resolve_chain(question, facts_in(*passage));
    if (!res.ok) return Generation{"The passage does not state this directly.", 0};
    std::string out;
    for (const Fact& f : res.used) {
        if (!out.empty()) out += ' ';
        out += fact_sentence(f);
    }
    return Generation{std::move(out), 0};
}

}  // namespace

Generation FaithfulMockClient::generate(const GenerationRequest& req) {
    check_request(req);
    const std::string& user = req.user_message;

    if (req.system_prompt.find(kConversationMarker) != std::string::npos ||
        user.find("<context>") != std::string::npos) {
        return tagged_answer(config_, req);
    }
    if (user.starts_with("[Instructions]")) return synthesis_answer(req);
    if (user.starts_with("Generate me a noun for an entity")) {
        auto t = between(user, "similar to the ", " but different");
        return Generation{t ? "New " + trim(*t) : "Placeholder entity", 0};
    }
    if (user.starts_with("You are asked to evaluate")) return judge_answer(config_, req);
    if (user.find("Answer YES or NO") != std::string::npos) return fact_check_answer(req);
    if (user.starts_with("Passages: ")) {
        if (user.find("output the option letter") != std::string::npos) {
            return plain_mc_answer(config_, req);
        }
        return plain_short_answer(req);
    }
    if (user.starts_with("Question: ") &&
        user.find("output the option letter") != std::string::npos) {
        return plain_mc_answer(config_, req);
    }
    if (user.starts_with("Passage: ")) {
        if (user.find("provide a summary") != std::string::npos) {
            return condense_answer(req, "\n\nRefer to the passage");
        }
        if (user.find("simplify it to improve") != std::string::npos) {
            return condense_answer(req, "\n\nRefer to the passage");
        }
        if (user.find("answer the following question") != std::string::npos) {
            return plain_long_answer(req);
        }
    }

    // Unrecognised instruction: deterministic acknowledgement.
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%016llx",
                  static_cast<unsigned long long>(fnv1a64(user, config_.seed)));
    return Generation{std::string("ack ") + buf, 0};
}

ScoredSequence FaithfulMockClient::score(const std::string&, const std::string& continuation) {
    return uniform_score(continuation, config_.vocab);
}

std::string FaithfulMockClient::identity() const {
    return "mock:faithful:vocab=" + std::to_string(config_.vocab) +
           ":seed=" + std::to_string(config_.seed) + ":flaw=" + format_double(config_.flaw_rate);
}

}  // namespace canoe::llm
