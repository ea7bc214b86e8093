#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "mcqprobe/dataset.hpp"
#include "mcqprobe/prompting.hpp"

namespace mcqprobe {

/// Smallest top-k that still leaves room for upper/lower/space-prefixed letters.
inline constexpr int kMinTopK = 6;
inline constexpr int kDefaultTopK = 10;

struct TokenProb {
    std::string token;
    double probability = 0.0;

    bool operator==(const TokenProb&) const = default;
};

/// First-token candidates for one rendered prompt, most probable first.
struct TokenDistribution {
    std::vector<TokenProb> entries;
    int top_k = kDefaultTopK;

    /// Sorts descending (stable), merges duplicate tokens by max, truncates to top_k.
    static TokenDistribution from_entries(std::vector<TokenProb> entries, int top_k);
    /// Throws std::invalid_argument when an invariant is violated.
    void validate() const;
    double probability_of(std::string_view token) const;

    bool operator==(const TokenDistribution&) const = default;
};

/// Who produced a probe. The label style is part of the identity because first-token
/// probabilities depend on the surface form of the choice labels.
struct BackendIdentity {
    std::string kind;  // "http" or "mock"
    std::string model;
    std::string endpoint;
    std::string label_style = "A)";

    std::string key() const;
    auto operator<=>(const BackendIdentity&) const = default;
};

class FirstTokenBackend {
public:
    virtual ~FirstTokenBackend() = default;

    /// Must be safe to call concurrently.
    virtual TokenDistribution query_first_token(const RenderedPrompt& prompt, int top_k) = 0;
    /// Identity without the label style; the orchestrator fills that in.
    virtual BackendIdentity identity() const = 0;
    /// Describes how probabilities were obtained; stored with each probe.
    virtual std::string probability_source() const = 0;
};

// ---------------------------------------------------------------------------
// Mock

/// Latent per-question choice probabilities with a multiplicative positional bias
/// per label and optional Gaussian noise on the letter logits.
struct MockModelSpec {
    std::map<std::string, ChoiceTriple, std::less<>> latent;
    std::array<double, kChoiceCount> bias = {1.0, 1.0, 1.0};
    double noise = 0.0;
    std::uint64_t seed = 0;
    /// Probability mass placed on non-letter filler tokens.
    double non_letter_mass = 0.0;

    void validate() const;
    /// Stable one-line description used as the mock's endpoint string.
    std::string describe() const;
};

/// Fraction of each letter's mass assigned to the bare "L" token; the rest goes to " L".
inline constexpr double kMockBareLetterShare = 0.8;

/// Latents equal to the dataset's student rates. Questions without rates get a
/// seeded Dirichlet draw.
MockModelSpec mock_spec_from_dataset(const Dataset& ds, const std::array<double, 3>& bias,
                                     double noise, std::uint64_t seed);

MockModelSpec load_mock_spec(const std::filesystem::path& path);
void save_mock_spec(const MockModelSpec& spec, const std::filesystem::path& path);

/// letter mass at label L ∝ latent(choice at L) · bias_L, with seeded logit noise.
/// Throws std::out_of_range for a question the spec does not cover.
TokenDistribution mock_query(const MockModelSpec& spec, const RenderedPrompt& prompt,
                             int top_k = kDefaultTopK);

class MockBackend final : public FirstTokenBackend {
public:
    explicit MockBackend(MockModelSpec spec);

    TokenDistribution query_first_token(const RenderedPrompt& prompt, int top_k) override;
    BackendIdentity identity() const override;
    std::string probability_source() const override { return "mock:exact"; }

    const MockModelSpec& spec() const noexcept { return spec_; }

private:
    MockModelSpec spec_;
};

/// FNV-1a, stable across platforms.
std::uint64_t stable_hash(std::string_view data, std::uint64_t seed = 0);

}  // namespace mcqprobe
