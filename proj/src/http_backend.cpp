#include "mcqprobe/http_backend.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include <httplib.h>
#include <json.hpp>

#include "mcqprobe/errors.hpp"

namespace mcqprobe {

using nlohmann::json;

std::string build_completion_request(std::string_view model, std::string_view prompt, int top_k) {
    json body{
        {"model", model},
        {"prompt", prompt},
        {"max_tokens", 1},
        {"temperature", 0},
        // legacy completions take an integer `logprobs`; newer servers read `top_logprobs`
        {"logprobs", top_k},
        {"top_logprobs", top_k},
    };
    return body.dump();
}

namespace {

std::vector<TokenProb> entries_from_map(const json& tops) {
    std::vector<TokenProb> out;
    for (const auto& [token, lp] : tops.items()) {
        if (!lp.is_number()) throw BackendError("malformed response: non-numeric logprob", false);
        out.push_back({token, std::exp(lp.get<double>())});
    }
    return out;
}

std::vector<TokenProb> entries_from_list(const json& tops) {
    std::vector<TokenProb> out;
    for (const auto& item : tops) {
        if (!item.is_object() || !item.contains("token") || !item.contains("logprob")) {
            throw BackendError("malformed response: top_logprobs entry lacks token/logprob", false);
        }
        out.push_back({item["token"].get<std::string>(), std::exp(item["logprob"].get<double>())});
    }
    return out;
}

}  // namespace

TokenDistribution parse_completion_logprobs(std::string_view body, int top_k) {
    json j;
    try {
        j = json::parse(body);
    } catch (const json::parse_error& e) {
        throw BackendError(std::string("malformed response: ") + e.what(), false);
    }
    if (!j.is_object() || !j.contains("choices") || !j["choices"].is_array() ||
        j["choices"].empty()) {
        throw BackendError("malformed response: no choices", false);
    }
    const json& choice = j["choices"][0];
    if (!choice.contains("logprobs") || choice["logprobs"].is_null()) {
        throw LogprobsUnsupported("response carries no logprobs");
    }
    const json& lp = choice["logprobs"];
    std::vector<TokenProb> entries;
    try {
        if (lp.contains("top_logprobs") && lp["top_logprobs"].is_array()) {
            if (lp["top_logprobs"].empty() || lp["top_logprobs"][0].is_null()) {
                throw LogprobsUnsupported("empty top_logprobs");
            }
            const json& first = lp["top_logprobs"][0];
            entries = first.is_object() ? entries_from_map(first) : entries_from_list(first);
        } else if (lp.contains("content") && lp["content"].is_array()) {
            if (lp["content"].empty()) throw LogprobsUnsupported("empty logprobs content");
            const json& first = lp["content"][0];
            if (!first.contains("top_logprobs") || !first["top_logprobs"].is_array() ||
                first["top_logprobs"].empty()) {
                throw LogprobsUnsupported("no top_logprobs for the first token");
            }
            entries = entries_from_list(first["top_logprobs"]);
        } else {
            throw LogprobsUnsupported("logprobs object has no top_logprobs");
        }
    } catch (const json::exception& e) {
        throw BackendError(std::string("malformed response: ") + e.what(), false);
    }
    for (auto& e : entries) e.probability = std::clamp(e.probability, 0.0, 1.0);
    return TokenDistribution::from_entries(std::move(entries), top_k);
}

HttpCompletionBackend::HttpCompletionBackend(HttpBackendConfig config)
    : config_(std::move(config)) {
    if (config_.endpoint.empty()) throw ConfigError("http backend requires an endpoint");
    if (config_.model.empty()) throw ConfigError("http backend requires a model");
    const std::string& url = config_.endpoint;
    auto scheme_end = url.find("://");
    if (scheme_end == std::string::npos) {
        throw ConfigError("endpoint must start with http:// or https://: " + url);
    }
    std::string scheme = url.substr(0, scheme_end);
    if (scheme != "http" && scheme != "https") throw ConfigError("unsupported scheme: " + scheme);
#ifndef CPPHTTPLIB_OPENSSL_SUPPORT
    if (scheme == "https") throw ConfigError("https endpoints need a build with OpenSSL");
#endif
    auto path_start = url.find('/', scheme_end + 3);
    scheme_host_port_ = url.substr(0, path_start);
    path_ = path_start == std::string::npos ? "" : url.substr(path_start);
    if (path_.empty() || path_ == "/") path_ = "/v1/completions";
}

BackendIdentity HttpCompletionBackend::identity() const {
    return BackendIdentity{"http", config_.model, config_.endpoint, ""};
}

TokenDistribution HttpCompletionBackend::attempt(const std::string& body, int top_k) const {
    httplib::Client client(scheme_host_port_);
    client.set_connection_timeout(config_.timeout);
    client.set_read_timeout(config_.timeout);
    httplib::Headers headers;
    if (!config_.api_key.empty()) headers.emplace("Authorization", "Bearer " + config_.api_key);

    auto res = client.Post(path_, headers, body, "application/json");
    if (!res) {
        throw BackendError("request to " + config_.endpoint + " failed: " + httplib::to_string(res.error()),
                           true);
    }
    if (res->status == 429 || res->status >= 500) {
        throw BackendError("HTTP " + std::to_string(res->status) + " from " + config_.endpoint, true);
    }
    if (res->status != 200) {
        throw BackendError("HTTP " + std::to_string(res->status) + " from " + config_.endpoint +
                               ": " + res->body.substr(0, 200),
                           false);
    }
    return parse_completion_logprobs(res->body, top_k);
}

TokenDistribution HttpCompletionBackend::query_first_token(const RenderedPrompt& prompt, int top_k) {
    if (top_k < kMinTopK) throw std::invalid_argument("top_k must be at least 6");
    const std::string body = build_completion_request(config_.model, prompt.text, top_k);
    auto delay = config_.retry.base_delay;
    for (int attempt_no = 0;; ++attempt_no) {
        try {
            return attempt(body, top_k);
        } catch (const BackendError& e) {
            if (!e.transient() || attempt_no >= config_.retry.max_retries) {
                if (e.transient()) {
                    throw BackendError(std::string(e.what()) + " (after " +
                                           std::to_string(attempt_no + 1) + " attempts)",
                                       false);
                }
                throw;
            }
        }
        std::this_thread::sleep_for(delay);
        delay *= 2;
    }
}

}  // namespace mcqprobe
