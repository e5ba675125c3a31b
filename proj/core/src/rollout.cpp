#include "canoe/rollout.hpp"

#include <algorithm>
#include <array>
#include <cctype>

#include <json.hpp>

#include "canoe/errors.hpp"
#include "canoe/util.hpp"

namespace canoe::rollout {

namespace {

constexpr std::array<const char*, 8> kAllTags = {
    kThinkOpen, kThinkClose, kLongOpen, kLongClose,
    kShortOpen, kShortClose, kContextOpen, kContextClose,
};

bool whitespace_only(const std::string& s, std::size_t begin, std::size_t end) {
    for (std::size_t i = begin; i < end; ++i) {
        if (!std::isspace(static_cast<unsigned char>(s[i]))) return false;
    }
    return true;
}

std::optional<std::string> recover_segment(const std::string& raw, const std::string& open,
                                           const std::string& close) {
    const auto i = raw.find(open);
    if (i == std::string::npos) return std::nullopt;
    const auto j = raw.find(close, i + open.size());
    if (j == std::string::npos) return std::nullopt;
    return trim(raw.substr(i + open.size(), j - i - open.size()));
}

}  // namespace

ParsedResponse parse_response(const std::string& raw, const ParseOptions& options) {
    ParsedResponse out;
    out.raw = raw;
    // Recovered segments are reported whether or not the strict grammar holds.
    out.think = recover_segment(raw, kThinkOpen, kThinkClose);
    out.long_answer = recover_segment(raw, kLongOpen, kLongClose);
    out.short_answer = recover_segment(raw, kShortOpen, kShortClose);

    const struct {
        const char* open;
        const char* close;
    } blocks[3] = {
        {kThinkOpen, kThinkClose},
        {kLongOpen, kLongClose},
        {kShortOpen, kShortClose},
    };

    std::size_t positions[6];
    std::size_t lengths[6];
    for (int b = 0; b < 3; ++b) {
        for (int side = 0; side < 2; ++side) {
            const std::string tag = side == 0 ? blocks[b].open : blocks[b].close;
            if (count_occurrences(raw, tag) != 1) return out;  // format_ok stays false
            positions[2 * b + side] = raw.find(tag);
            lengths[2 * b + side] = tag.size();
        }
    }
    for (int k = 0; k + 1 < 6; ++k) {
        if (positions[k] + lengths[k] > positions[k + 1]) return out;  // misordered
    }
    // Gaps between blocks must be whitespace-only; the leading/trailing gaps
    // too unless text outside the blocks is explicitly allowed.
    if (!options.allow_text_outside && !whitespace_only(raw, 0, positions[0])) return out;
    if (!whitespace_only(raw, positions[1] + lengths[1], positions[2])) return out;
    if (!whitespace_only(raw, positions[3] + lengths[3], positions[4])) return out;
    if (!options.allow_text_outside &&
        !whitespace_only(raw, positions[5] + lengths[5], raw.size())) {
        return out;
    }

    out.format_ok = true;
    return out;
}

std::string render_system_prompt(const PromptLibrary& prompts) {
    return prompts.text("sys_prompt");
}

bool tag_collision_free(const std::string& text) {
    return std::none_of(kAllTags.begin(), kAllTags.end(), [&](const char* tag) {
        return text.find(tag) != std::string::npos;
    });
}

std::string render_user_message(const std::string& context,
                                const std::string& question_or_instruction) {
    if (context.empty() || question_or_instruction.empty()) {
        throw ConfigError("render_user_message: context and instruction must be non-empty");
    }
    if (!tag_collision_free(context) || !tag_collision_free(question_or_instruction)) {
        throw ConfigError("render_user_message: input contains a reserved tag literal");
    }
    return std::string(kContextOpen) + context + kContextClose + "\n\n" + question_or_instruction;
}

RolloutGroup rollout_group(llm::GenerationClient& policy, const synth::QASample& sample,
                           const RolloutConfig& cfg, const PromptLibrary& prompts,
                           llm::GenerationClient* reference) {
    if (cfg.group_size < 2) {
        throw ConfigError("rollout group size must be >= 2, got " +
                          std::to_string(cfg.group_size));
    }
    const std::string system_prompt = render_system_prompt(prompts);
    const std::string user = render_user_message(sample.context, sample.question);
    const std::string score_prefix = system_prompt + "\n\n" + user;

    RolloutGroup group;
    group.sample_id = sample.id;
    group.scoring_available = policy.supports_scoring() &&
                              (reference == nullptr || reference->supports_scoring());

    const std::uint64_t group_seed = derive_seed(cfg.seed, sample.id);
    for (int i = 0; i < cfg.group_size; ++i) {
        llm::GenerationRequest req;
        req.system_prompt = system_prompt;
        req.user_message = user;
        req.temperature = cfg.temperature;
        req.max_tokens = cfg.max_tokens;
        req.seed = derive_seed(group_seed, "rollout", static_cast<std::uint64_t>(i));
        std::string text;
        try {
            text = policy.generate(req).text;
        } catch (const llm::TransportError&) {
            group.complete = false;
            break;
        }
        group.responses.push_back(parse_response(text));

        double lp = 0.0;
        double lp_ref = 0.0;
        if (group.scoring_available && !text.empty()) {
            try {
                lp = policy.score(score_prefix, text).total_logprob;
                lp_ref = reference ? reference->score(score_prefix, text).total_logprob : lp;
            } catch (const llm::TransportError&) {
                group.complete = false;
                break;
            }
        } else if (text.empty()) {
            // An explicit empty completion cannot be scored; keep the parse
            // (format_ok = false) and mark the logps unavailable for the group.
            group.scoring_available = false;
        }
        group.logp_new.push_back(lp);
        group.logp_old.push_back(lp);  // on-policy sampling
        group.logp_ref.push_back(lp_ref);
    }
    if (group.responses.size() != static_cast<std::size_t>(cfg.group_size)) {
        group.complete = false;
    }
    return group;
}

std::string rollout_log_lines(const RolloutGroup& group) {
    std::string out;
    for (std::size_t i = 0; i < group.responses.size(); ++i) {
        const ParsedResponse& r = group.responses[i];
        nlohmann::ordered_json j;
        j["sample_id"] = group.sample_id;
        j["index"] = i;
        j["raw"] = r.raw;
        j["think"] = r.think ? nlohmann::json(*r.think) : nlohmann::json(nullptr);
        j["long_answer"] = r.long_answer ? nlohmann::json(*r.long_answer) : nlohmann::json(nullptr);
        j["short_answer"] =
            r.short_answer ? nlohmann::json(*r.short_answer) : nlohmann::json(nullptr);
        j["format_ok"] = r.format_ok;
        if (group.scoring_available && i < group.logp_new.size()) {
            j["logp_new"] = group.logp_new[i];
            j["logp_old"] = group.logp_old[i];
            j["logp_ref"] = group.logp_ref[i];
        } else {
            j["logp_new"] = nullptr;
            j["logp_old"] = nullptr;
            j["logp_ref"] = nullptr;
        }
        out += j.dump();
        out += '\n';
    }
    return out;
}

}  // namespace canoe::rollout
