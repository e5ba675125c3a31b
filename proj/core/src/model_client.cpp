#include "canoe/model_client.hpp"

#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <mutex>
#include <semaphore>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "canoe/util.hpp"

namespace canoe::llm {

void ScoredSequence::validate() const {
    if (token_logprobs.empty()) {
        throw NumericError("scored sequence must contain at least one token");
    }
    double sum = 0.0;
    for (const double lp : token_logprobs) {
        if (!std::isfinite(lp) || lp > 0.0) {
            throw NumericError("token logprob must be finite and <= 0, got " + format_double(lp));
        }
        sum += lp;
    }
    if (std::abs(sum - total_logprob) > 1e-9) {
        throw NumericError("total_logprob " + format_double(total_logprob) +
                           " does not match token sum " + format_double(sum));
    }
}

double perplexity(const ScoredSequence& seq) {
    if (seq.token_logprobs.empty()) {
        throw NumericError("perplexity needs at least one token");
    }
    const double mean =
        seq.total_logprob / static_cast<double>(seq.token_logprobs.size());
    return std::exp(-mean);
}

// ---------------------------------------------------------------------------
// RetryingClient

RetryingClient::RetryingClient(std::shared_ptr<GenerationClient> inner, RetryPolicy policy)
    : inner_(std::move(inner)), policy_(policy) {
    if (!inner_) throw ConfigError("RetryingClient requires an inner client");
    if (policy_.max_retries < 0) throw ConfigError("max_retries must be >= 0");
}

namespace {

template <typename Fn>
auto with_retries(const RetryPolicy& policy, int* retry_count, Fn&& fn) {
    int attempt = 0;
    for (;;) {
        try {
            return fn();
        } catch (const TransportError&) {
            if (attempt >= policy.max_retries) throw;
            const int delay = policy.base_delay_ms << attempt;
            if (delay > 0) std::this_thread::sleep_for(std::chrono::milliseconds(delay));
            ++attempt;
            if (retry_count) *retry_count = attempt;
        }
    }
}

}  // namespace

Generation RetryingClient::generate(const GenerationRequest& req) {
    int retries = 0;
    Generation g = with_retries(policy_, &retries, [&] { return inner_->generate(req); });
    g.retry_count = retries;
    return g;
}

ScoredSequence RetryingClient::score(const std::string& prefix, const std::string& continuation) {
    return with_retries(policy_, nullptr, [&] { return inner_->score(prefix, continuation); });
}

// ---------------------------------------------------------------------------
// AuditingClient

AuditingClient::AuditingClient(std::shared_ptr<GenerationClient> inner, std::string path)
    : inner_(std::move(inner)), path_(std::move(path)), mutex_(std::make_shared<std::mutex>()) {
    if (!inner_) throw ConfigError("AuditingClient requires an inner client");
    std::ofstream out(path_, std::ios::trunc);  // start a fresh audit trail
    if (!out) throw ConfigError("cannot open audit log " + path_);
}

void AuditingClient::append(const std::string& kind, const std::string& request_sha,
                            const std::string& response_sha) {
    std::lock_guard<std::mutex> lock(*static_cast<std::mutex*>(mutex_.get()));
    std::ofstream out(path_, std::ios::app);
    if (!out) throw ConfigError("cannot append to audit log " + path_);
    out << seq_++ << '\t' << kind << '\t' << request_sha << '\t' << response_sha << '\n';
}

Generation AuditingClient::generate(const GenerationRequest& req) {
    const std::string request_blob = req.system_prompt + '\x1f' + req.user_message + '\x1f' +
                                     format_double(req.temperature) + '\x1f' +
                                     std::to_string(req.max_tokens) + '\x1f' +
                                     (req.seed ? std::to_string(*req.seed) : "-");
    Generation g = inner_->generate(req);
    append("generate", sha256_hex(request_blob), sha256_hex(g.text));
    return g;
}

ScoredSequence AuditingClient::score(const std::string& prefix, const std::string& continuation) {
    ScoredSequence s = inner_->score(prefix, continuation);
    append("score", sha256_hex(prefix + '\x1f' + continuation), sha256_hex(format_double(s.total_logprob)));
    return s;
}

// ---------------------------------------------------------------------------
// HttpClient

struct HttpClient::Impl {
    HttpClientConfig config;
    std::unique_ptr<httplib::Client> http;
    std::counting_semaphore<> inflight;

    explicit Impl(HttpClientConfig cfg)
        : config(std::move(cfg)), inflight(config.max_inflight > 0 ? config.max_inflight : 1) {
        if (config.base_url.empty()) {
            throw ConfigError("no base URL configured; set CANOE_BASE_URL or HttpClientConfig::base_url");
        }
        http = std::make_unique<httplib::Client>(config.base_url);
        http->set_connection_timeout(0, config.timeout_ms * 1000L);
        http->set_read_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
        http->set_write_timeout(config.timeout_ms / 1000, (config.timeout_ms % 1000) * 1000);
        if (!config.api_key.empty()) {
            http->set_default_headers({{"Authorization", "Bearer " + config.api_key}});
        }
    }

    struct SemaphoreHold {
        std::counting_semaphore<>& sem;
        explicit SemaphoreHold(std::counting_semaphore<>& s) : sem(s) { sem.acquire(); }
        ~SemaphoreHold() { sem.release(); }
    };

    nlohmann::json post(const std::string& path, const nlohmann::json& body) {
        SemaphoreHold hold(inflight);
        auto res = http->Post(path, body.dump(), "application/json");
        if (!res) {
            const auto err = res.error();
            if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
                err == httplib::Error::Write) {
                throw TimeoutError("request to " + path + " timed out");
            }
            throw TransportError("request to " + path + " failed: " + httplib::to_string(err));
        }
        if (res->status == 401 || res->status == 403) {
            throw AuthError("backend rejected credentials (HTTP " + std::to_string(res->status) + ")");
        }
        if (res->status == 429) {
            throw RateLimitError("backend rate limit (HTTP 429)");
        }
        if (res->status == 408) {
            throw TimeoutError("backend timeout (HTTP 408)");
        }
        if (res->status >= 500) {
            throw TransportError("backend failure (HTTP " + std::to_string(res->status) + ")");
        }
        if (res->status != 200) {
            throw Error("unexpected HTTP status " + std::to_string(res->status) + " from " + path);
        }
        try {
            return nlohmann::json::parse(res->body);
        } catch (const nlohmann::json::exception& e) {
            throw TransportError(std::string("malformed JSON response: ") + e.what());
        }
    }
};

HttpClient::HttpClient(HttpClientConfig config) : impl_(std::make_unique<Impl>(std::move(config))) {}
HttpClient::~HttpClient() = default;

Generation HttpClient::generate(const GenerationRequest& req) {
    if (req.max_tokens < 1) throw ConfigError("max_tokens must be >= 1");
    if (!std::isfinite(req.temperature) || req.temperature < 0.0) {
        throw ConfigError("temperature must be finite and >= 0");
    }
    nlohmann::json body = {
        {"model", impl_->config.model},
        {"messages",
         {{{"role", "system"}, {"content", req.system_prompt}},
          {{"role", "user"}, {"content", req.user_message}}}},
        {"temperature", req.temperature},
        {"max_tokens", req.max_tokens},
    };
    if (req.seed) body["seed"] = *req.seed;

    const auto json = impl_->post("/v1/chat/completions", body);
    try {
        Generation g;
        g.text = json.at("choices").at(0).at("message").at("content").get<std::string>();
        return g;
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("chat completion response missing fields: ") + e.what());
    }
}

ScoredSequence HttpClient::score(const std::string& prefix, const std::string& continuation) {
    if (continuation.empty()) throw ConfigError("score: continuation must be non-empty");
    if (!impl_->config.scoring_enabled) {
        throw CapabilityError("backend configured without logprob support");
    }
    const nlohmann::json body = {
        {"model", impl_->config.model},
        {"prompt", prefix + continuation},
        {"max_tokens", 0},
        {"echo", true},
        {"logprobs", 0},
    };
    const auto json = impl_->post("/v1/completions", body);

    try {
        const auto& choice = json.at("choices").at(0);
        if (!choice.contains("logprobs") || choice.at("logprobs").is_null()) {
            throw CapabilityError("backend returned no logprobs for scoring request");
        }
        const auto& lp = choice.at("logprobs");
        const auto& tokens = lp.at("tokens");
        const auto& token_logprobs = lp.at("token_logprobs");
        const auto& offsets = lp.at("text_offset");

        ScoredSequence out;
        out.text = continuation;
        const std::size_t cut = prefix.size();
        for (std::size_t i = 0; i < token_logprobs.size(); ++i) {
            if (offsets.at(i).get<std::size_t>() < cut) continue;  // prompt-prefix token
            if (token_logprobs.at(i).is_null()) {
                throw CapabilityError("backend returned null logprob inside the continuation");
            }
            out.token_logprobs.push_back(token_logprobs.at(i).get<double>());
        }
        (void)tokens;
        if (out.token_logprobs.empty()) {
            throw CapabilityError("no continuation tokens in scoring response");
        }
        for (const double v : out.token_logprobs) out.total_logprob += v;
        out.validate();
        return out;
    } catch (const nlohmann::json::exception& e) {
        throw TransportError(std::string("completion response missing fields: ") + e.what());
    }
}

bool HttpClient::supports_scoring() const { return impl_->config.scoring_enabled; }

std::string HttpClient::identity() const {
    return "http:" + impl_->config.base_url + ":" + impl_->config.model;
}

std::shared_ptr<GenerationClient> make_http_client(HttpClientConfig config, RetryPolicy retry) {
    if (config.base_url.empty()) {
        if (const char* env = std::getenv("CANOE_BASE_URL")) config.base_url = env;
    }
    if (config.api_key.empty()) {
        if (const char* env = std::getenv("CANOE_API_KEY")) config.api_key = env;
    }
    auto http = std::make_shared<HttpClient>(std::move(config));
    return std::make_shared<RetryingClient>(std::move(http), retry);
}

}  // namespace canoe::llm
