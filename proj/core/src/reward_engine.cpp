#include "canoe/reward_engine.hpp"

#include <json.hpp>

#include "canoe/errors.hpp"
#include "canoe/util.hpp"

namespace canoe::reward {

int accuracy_reward(const rollout::ParsedResponse& parsed, const std::string& gold,
                    const MatchPolicy& policy) {
    if (gold.empty()) throw ConfigError("accuracy_reward: gold answer must be non-empty");
    if (!parsed.short_answer) return 0;
    return match_equal(*parsed.short_answer, gold, policy) ? 1 : 0;
}

int format_reward(const rollout::ParsedResponse& parsed) { return parsed.format_ok ? 1 : 0; }

int proxy_reward(llm::GenerationClient& client, const rollout::ParsedResponse& parsed,
                 const std::string& question, const std::string& gold,
                 const PromptLibrary& prompts, const MatchPolicy& policy,
                 const ProxyConfig& config) {
    if (question.empty() || gold.empty()) {
        throw ConfigError("proxy_reward: question and gold must be non-empty");
    }
    if (!parsed.long_answer || trim(*parsed.long_answer).empty()) return 0;

    // A long answer carrying tag literals cannot be substituted as a context;
    // it provides no usable evidence.
    if (!rollout::tag_collision_free(*parsed.long_answer)) return 0;

    llm::GenerationRequest req;
    req.system_prompt = config.mode == ProxyPromptMode::conversation
                            ? rollout::render_system_prompt(prompts)
                            : std::string();
    req.user_message = rollout::render_user_message(*parsed.long_answer, question);
    req.temperature = 0.0;  // greedy: the reward is a function of the long answer
    req.max_tokens = config.max_tokens;

    const llm::Generation re_inference = client.generate(req);
    const rollout::ParsedResponse re_parsed = rollout::parse_response(re_inference.text);
    return accuracy_reward(re_parsed, gold, policy);
}

RewardBreakdown composite(int acc, int proxy, int fmt) {
    for (const int v : {acc, proxy, fmt}) {
        if (v != 0 && v != 1) {
            throw ConfigError("composite: reward components must be 0 or 1, got " +
                              std::to_string(v));
        }
    }
    RewardBreakdown out;
    out.r_acc = acc;
    out.r_proxy = proxy;
    out.r_format = fmt;
    out.r_final = acc + proxy + fmt;
    return out;
}

void score_group(llm::GenerationClient& client, rollout::RolloutGroup& group,
                 const std::string& question, const std::string& gold,
                 const PromptLibrary& prompts, const MatchPolicy& policy,
                 const ProxyConfig& config) {
    if (!group.complete) return;
    group.rewards.clear();
    group.rewards.reserve(group.responses.size());
    for (const rollout::ParsedResponse& parsed : group.responses) {
        const int acc = accuracy_reward(parsed, gold, policy);
        const int fmt = format_reward(parsed);
        const int proxy = proxy_reward(client, parsed, question, gold, prompts, policy, config);
        group.rewards.push_back(composite(acc, proxy, fmt));
    }
}

std::string reward_log_lines(const rollout::RolloutGroup& group) {
    std::string out;
    for (std::size_t i = 0; i < group.rewards.size(); ++i) {
        const RewardBreakdown& r = group.rewards[i];
        nlohmann::ordered_json j;
        j["sample_id"] = group.sample_id;
        j["index"] = i;
        j["r_acc"] = r.r_acc;
        j["r_proxy"] = r.r_proxy;
        j["r_format"] = r.r_format;
        j["r_final"] = r.r_final;
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace canoe::reward
