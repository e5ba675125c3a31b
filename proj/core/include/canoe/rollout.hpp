#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "canoe/model_client.hpp"
#include "canoe/prompts.hpp"
#include "canoe/reward_types.hpp"
#include "canoe/sample.hpp"

namespace canoe::rollout {

inline constexpr const char* kThinkOpen = "<think>";
inline constexpr const char* kThinkClose = "</think>";
inline constexpr const char* kLongOpen = "<long_answer>";
inline constexpr const char* kLongClose = "</long_answer>";
inline constexpr const char* kShortOpen = "<short_answer>";
inline constexpr const char* kShortClose = "</short_answer>";
inline constexpr const char* kContextOpen = "<context>";
inline constexpr const char* kContextClose = "</context>";

struct ParsedResponse {
    std::string raw;
    std::optional<std::string> think;
    std::optional<std::string> long_answer;
    std::optional<std::string> short_answer;
    bool format_ok = false;
};

struct ParseOptions {
    // When true, arbitrary text before the first tag and after the final
    // closing tag is tolerated; the gaps between blocks stay whitespace-only.
    bool allow_text_outside = false;
};

// Strict grammar: exactly one occurrence of each tag, in the order
// think -> long_answer -> short_answer, properly closed, whitespace-only
// between blocks. Violations set format_ok = false and recover whatever
// segments have a matched open/close pair. Never throws.
ParsedResponse parse_response(const std::string& raw, const ParseOptions& options = {});

// Byte-exact conversation system prompt from the pinned resource file.
std::string render_system_prompt(const PromptLibrary& prompts);

// "<context>" + context + "</context>" + "\n\n" + instruction. Inputs must be
// non-empty and must not contain any of the wrapper or response tag literals.
std::string render_user_message(const std::string& context,
                                const std::string& question_or_instruction);

// True when the text contains none of the eight tag literals above.
bool tag_collision_free(const std::string& text);

struct RolloutConfig {
    int group_size = 7;
    double temperature = 0.9;
    int max_tokens = 1024;
    std::uint64_t seed = 0;
};

struct RolloutGroup {
    std::string sample_id;
    std::vector<ParsedResponse> responses;
    std::vector<double> logp_new;
    std::vector<double> logp_old;
    std::vector<double> logp_ref;
    std::vector<reward::RewardBreakdown> rewards;  // filled by the reward stage

    // False when the backend cannot score sequences; logp vectors then hold
    // zeros and the group must not be used for policy optimization.
    bool scoring_available = false;
    // False when a generation failed after retries; incomplete groups are
    // skipped by the trainer.
    bool complete = true;
};

// Samples cfg.group_size responses for one input (temperature cfg.temperature,
// per-index derived seeds), parses each, and scores logp_new under `policy`
// (logp_old = logp_new: the caller samples on-policy). logp_ref comes from
// `reference` when given, else equals logp_new. Transport failures mark the
// group incomplete; auth/capability/config errors propagate.
RolloutGroup rollout_group(llm::GenerationClient& policy, const synth::QASample& sample,
                           const RolloutConfig& cfg, const PromptLibrary& prompts,
                           llm::GenerationClient* reference = nullptr);

// One JSONL line per response: {sample_id, index, raw, think, long_answer,
// short_answer, format_ok, logp_new, logp_old, logp_ref} with null for
// missing segments / unavailable scores.
std::string rollout_log_lines(const RolloutGroup& group);

}  // namespace canoe::rollout
