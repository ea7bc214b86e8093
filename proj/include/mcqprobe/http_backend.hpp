#pragma once

#include <chrono>
#include <string>
#include <string_view>

#include "mcqprobe/backend.hpp"

namespace mcqprobe {

inline constexpr std::string_view kApiKeyEnvVar = "MCQ_PROBE_API_KEY";

/// Transient failures are retried `max_retries` times, waiting base, 2·base, 4·base...
struct RetryPolicy {
    int max_retries = 3;
    std::chrono::milliseconds base_delay{1000};
};

struct HttpBackendConfig {
    std::string endpoint;  // e.g. http://localhost:8000/v1/completions
    std::string model;
    std::string api_key;   // empty: no Authorization header
    RetryPolicy retry;
    std::chrono::seconds timeout{60};
};

/// Request body for a one-token completion with top-k log probabilities.
std::string build_completion_request(std::string_view model, std::string_view prompt, int top_k);

/// Extracts the first generated token's top candidates from a completion response
/// (legacy `logprobs.top_logprobs` or chat-style `logprobs.content[0].top_logprobs`).
/// Log probabilities are exponentiated. Throws LogprobsUnsupported when the response
/// has no probability fields and BackendError for anything malformed.
TokenDistribution parse_completion_logprobs(std::string_view body, int top_k);

/// Completion-style HTTP JSON client. Each call opens its own connection, so the
/// backend can be shared across probe workers.
class HttpCompletionBackend final : public FirstTokenBackend {
public:
    explicit HttpCompletionBackend(HttpBackendConfig config);

    TokenDistribution query_first_token(const RenderedPrompt& prompt, int top_k) override;
    BackendIdentity identity() const override;
    std::string probability_source() const override { return "api:top_logprobs"; }

private:
    TokenDistribution attempt(const std::string& body, int top_k) const;

    HttpBackendConfig config_;
    std::string scheme_host_port_;
    std::string path_;
};

}  // namespace mcqprobe
