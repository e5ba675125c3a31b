#pragma once

#include <cstdint>
#include <string>

#include "canoe/model_client.hpp"

namespace canoe::llm {

struct MockConfig {
    std::uint64_t seed = 0;
    // Uniform vocabulary size used by score(): every whitespace token costs
    // -ln(vocab) nats.
    int vocab = 4;
    // Probability that FaithfulMockClient injects a deliberate flaw into a
    // tagged (conversation-style) response; keyed by content hash, so it is a
    // pure function of the request.
    double flaw_rate = 0.25;
};

// Minimal deterministic backend: generated text is a pure function of
// (user_message, seed); scoring treats every whitespace-separated token as
// uniformly likely over `vocab` alternatives.
class EchoMockClient : public GenerationClient {
public:
    explicit EchoMockClient(MockConfig config = {});

    Generation generate(const GenerationRequest& req) override;
    ScoredSequence score(const std::string& prefix, const std::string& continuation) override;
    bool supports_scoring() const override { return true; }
    std::string identity() const override;

private:
    MockConfig config_;
};

// Template-aware deterministic backend. It recognises the prompt families
// shipped with this library and produces internally consistent output:
//   - data-synthesis prompts yield questions/contexts built from a fixed
//     fact-sentence protocol ("<head>'s <relation> is <tail>.");
//   - conversation-style requests (passage within <context> tags) answer by
//     resolving the question's relation chain against the fact sentences in
//     the passage, emitting the tagged three-part response;
//   - judge and fact-check prompts yield deterministic verdicts.
// A configurable fraction of sampled (temperature > 0) tagged responses is
// deliberately flawed - wrong short answer, uninformative long answer, or a
// missing tag - so reward and training code paths see realistic variety.
class FaithfulMockClient : public GenerationClient {
public:
    explicit FaithfulMockClient(MockConfig config = {});

    Generation generate(const GenerationRequest& req) override;
    ScoredSequence score(const std::string& prefix, const std::string& continuation) override;
    bool supports_scoring() const override { return true; }
    std::string identity() const override;

private:
    MockConfig config_;
};

}  // namespace canoe::llm
