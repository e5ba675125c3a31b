#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "canoe/errors.hpp"

namespace canoe::llm {

// Non-retryable: the backend rejected our credentials.
class AuthError : public Error {
public:
    using Error::Error;
};

// Retryable transport-level failure (connection refused, 5xx, ...).
class TransportError : public Error {
public:
    using Error::Error;
};

// Retryable: the backend asked us to slow down (HTTP 429).
class RateLimitError : public TransportError {
public:
    using TransportError::TransportError;
};

// Retryable: the request did not complete in time.
class TimeoutError : public TransportError {
public:
    using TransportError::TransportError;
};

// The backend cannot perform the requested operation (e.g. no logprobs).
class CapabilityError : public Error {
public:
    using Error::Error;
};

struct GenerationRequest {
    std::string system_prompt;
    std::string user_message;
    double temperature = 0.7;
    int max_tokens = 1024;
    std::optional<std::uint64_t> seed;
};

struct Generation {
    std::string text;
    int retry_count = 0;  // transient failures absorbed before success
};

struct ScoredSequence {
    std::string text;
    std::vector<double> token_logprobs;  // natural log
    double total_logprob = 0.0;

    // Enforces: total = sum(token_logprobs) within 1e-9, every logprob <= 0,
    // at least one token. Throws NumericError.
    void validate() const;
};

// exp(-mean token logprob); >= 1 for any normalized model.
double perplexity(const ScoredSequence& seq);

class GenerationClient {
public:
    virtual ~GenerationClient() = default;

    virtual Generation generate(const GenerationRequest& req) = 0;

    // Per-token logprobs of `continuation` given `prefix`. Empty continuation
    // -> ConfigError; backend without logprob support -> CapabilityError.
    virtual ScoredSequence score(const std::string& prefix, const std::string& continuation) = 0;

    virtual bool supports_scoring() const = 0;

    // Stable description of the backend (model name, mock parameters, ...)
    // recorded in run manifests.
    virtual std::string identity() const = 0;
};

struct RetryPolicy {
    int max_retries = 3;
    int base_delay_ms = 100;  // doubled per retry; set 0 in tests
};

// Decorator that retries TransportError (incl. rate limits and timeouts) with
// exponential backoff and records the number of absorbed failures in
// Generation::retry_count. AuthError and CapabilityError pass through
// immediately.
class RetryingClient : public GenerationClient {
public:
    RetryingClient(std::shared_ptr<GenerationClient> inner, RetryPolicy policy = {});

    Generation generate(const GenerationRequest& req) override;
    ScoredSequence score(const std::string& prefix, const std::string& continuation) override;
    bool supports_scoring() const override { return inner_->supports_scoring(); }
    std::string identity() const override { return inner_->identity(); }

private:
    std::shared_ptr<GenerationClient> inner_;
    RetryPolicy policy_;
};

// Decorator that appends one line per call to an audit file:
// seq \t kind \t sha256(request) \t sha256(response). Content hashes only, no
// timestamps, so audit files of identical runs are byte-identical.
class AuditingClient : public GenerationClient {
public:
    AuditingClient(std::shared_ptr<GenerationClient> inner, std::string path);

    Generation generate(const GenerationRequest& req) override;
    ScoredSequence score(const std::string& prefix, const std::string& continuation) override;
    bool supports_scoring() const override { return inner_->supports_scoring(); }
    std::string identity() const override { return inner_->identity(); }

private:
    void append(const std::string& kind, const std::string& request_sha,
                const std::string& response_sha);

    std::shared_ptr<GenerationClient> inner_;
    std::string path_;
    std::uint64_t seq_ = 0;
    std::shared_ptr<void> mutex_;  // opaque to keep <mutex> out of the header
};

struct HttpClientConfig {
    std::string base_url;  // default: $CANOE_BASE_URL
    std::string api_key;   // default: $CANOE_API_KEY
    std::string model = "canoe-dev";
    int timeout_ms = 30000;
    int max_inflight = 8;       // concurrent request cap
    bool scoring_enabled = true;  // set false for chat-only endpoints
};

// OpenAI-compatible HTTP backend. generate() posts to /v1/chat/completions;
// score() posts to /v1/completions with echo+logprobs and keeps the tokens
// belonging to the continuation. Single-attempt; compose with RetryingClient
// for backoff.
class HttpClient : public GenerationClient {
public:
    explicit HttpClient(HttpClientConfig config);
    ~HttpClient() override;

    Generation generate(const GenerationRequest& req) override;
    ScoredSequence score(const std::string& prefix, const std::string& continuation) override;
    bool supports_scoring() const override;
    std::string identity() const override;

private:
    struct Impl;
    std::unique_ptr<Impl> impl_;
};

// HttpClient with retry policy applied, reading base URL / API key from the
// environment when the config leaves them empty.
std::shared_ptr<GenerationClient> make_http_client(HttpClientConfig config = {},
                                                   RetryPolicy retry = {});

}  // namespace canoe::llm
