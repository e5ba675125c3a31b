#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "canoe/errors.hpp"
#include "canoe/kg_store.hpp"
#include "canoe/model_client.hpp"
#include "canoe/prompts.hpp"
#include "canoe/sample.hpp"

namespace canoe::synth {

// A generated sample failed validation after the configured retries.
class SynthesisError : public Error {
public:
    using Error::Error;
};

struct MixRecipe {
    std::size_t straightforward = 2000;
    std::size_t reasoning = 2000;
    std::size_t inconsistent = 1000;
    std::size_t counterfactual = 5000;

    std::size_t total() const {
        return straightforward + reasoning + inconsistent + counterfactual;
    }
};

struct SynthConfig {
    double temperature = 0.7;  // decoding for synthesis requests
    int max_tokens = 1024;
    int max_retries = 3;      // generation+validation attempts per source item
    int cf_max_queries = 3;   // provider attempts to obtain a distinct entity
    int max_distractors = 2;  // inconsistent contexts merge up to three samples
    std::string id_prefix = "canoe";
    std::uint64_t seed = 0;
};

// Question from (h, r) asking for t; ~150-word context mentioning t and r;
// answer = tail label, validated to occur verbatim in the context.
QASample build_straightforward(const kg::Triple& triple, llm::GenerationClient& gen,
                               const PromptLibrary& prompts, const SynthConfig& config,
                               std::uint64_t seed);

// Multi-hop question about the path's final tail, phrased from the head
// without naming bridge entities; context of ~150*n words.
QASample build_reasoning(const kg::Path& path, llm::GenerationClient& gen,
                         const PromptLibrary& prompts, const SynthConfig& config,
                         std::uint64_t seed);

// Merges the anchor context with up to two distractor contexts in seeded
// random order (blank-line separated). The question/answer come from the
// anchor, which must be a reasoning sample; distractors whose answer matches
// the anchor's, or whose context contains the anchor's answer, are rejected.
QASample build_inconsistent(const QASample& anchor, const std::vector<QASample>& distractors,
                            std::uint64_t seed);

// Replaces the tail with a provider-supplied "similar but different" entity
// before prompting; the gold answer is the counterfactual label.
QASample build_counterfactual(const kg::Triple& base, llm::GenerationClient& gen,
                              kg::CounterfactualSource& cf_source, const PromptLibrary& prompts,
                              const SynthConfig& config, std::uint64_t seed);
QASample build_counterfactual(const kg::Path& base, llm::GenerationClient& gen,
                              kg::CounterfactualSource& cf_source, const PromptLibrary& prompts,
                              const SynthConfig& config, std::uint64_t seed);

// Builds the full mixed dataset: exact per-type counts, globally shuffled by
// seed, ids unique and sequential in final order. Counterfactual samples are
// split evenly between triple-based and path-based sources. Source exhaustion
// raises CapacityError naming the deficient task type.
std::vector<QASample> mix_dataset(const kg::TripleStore& store, llm::GenerationClient& gen,
                                  kg::CounterfactualSource& cf_source,
                                  const PromptLibrary& prompts, const MixRecipe& recipe,
                                  const SynthConfig& config);

// JSONL with one object per line: {id, task, context, question, answer,
// provenance}; key order fixed, so equal datasets serialize to equal bytes.
std::string dataset_to_jsonl(const std::vector<QASample>& samples);
std::vector<QASample> dataset_from_jsonl(const std::string& text);

struct TaskStats {
    std::size_t count = 0;
    double avg_len = 0;  // mean whitespace-token count of context + question
};

// Per-type and overall dataset statistics.
std::map<std::string, TaskStats> dataset_stats(const std::vector<QASample>& samples);

}  // namespace canoe::synth
