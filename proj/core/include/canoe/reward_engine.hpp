#pragma once

#include <string>

#include "canoe/model_client.hpp"
#include "canoe/prompts.hpp"
#include "canoe/reward_types.hpp"
#include "canoe/rollout.hpp"
#include "canoe/text_norm.hpp"

namespace canoe::reward {

// 1 iff the short answer is present and equals the gold answer after
// normalization. gold must be non-empty.
int accuracy_reward(const rollout::ParsedResponse& parsed, const std::string& gold,
                    const MatchPolicy& policy = {});

// 1 iff the response satisfied the strict tag grammar.
int format_reward(const rollout::ParsedResponse& parsed);

enum class ProxyPromptMode {
    conversation,  // reuse the conversation system prompt (default)
    plain_qa,      // no system prompt
};

struct ProxyConfig {
    ProxyPromptMode mode = ProxyPromptMode::conversation;
    int max_tokens = 1024;
};

// Replaces the context with the rollout's long answer, re-asks the question
// greedily (temperature 0), and scores the re-inferred short answer against
// gold. Absent or empty long answer -> 0 with no client call. Client failures
// propagate so the caller can invalidate the group instead of recording a
// silent zero.
int proxy_reward(llm::GenerationClient& client, const rollout::ParsedResponse& parsed,
                 const std::string& question, const std::string& gold,
                 const PromptLibrary& prompts, const MatchPolicy& policy = {},
                 const ProxyConfig& config = {});

// Validates each component is 0 or 1 and fills in the sum.
RewardBreakdown composite(int acc, int proxy, int fmt);

// Scores every response of the group in place (rewards vector filled).
// Incomplete groups are left untouched.
void score_group(llm::GenerationClient& client, rollout::RolloutGroup& group,
                 const std::string& question, const std::string& gold,
                 const PromptLibrary& prompts, const MatchPolicy& policy = {},
                 const ProxyConfig& config = {});

// One JSONL line per response: {sample_id, index, r_acc, r_proxy, r_format,
// r_final}.
std::string reward_log_lines(const rollout::RolloutGroup& group);

}  // namespace canoe::reward
