#pragma once

#include <array>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcqprobe/backend.hpp"
#include "mcqprobe/dataset.hpp"
#include "mcqprobe/probe.hpp"
#include "mcqprobe/prompting.hpp"

namespace mcqprobe {

/// Below this total averaged letter mass a probe does not conform to the letter format.
inline constexpr double kDefaultConformEpsilon = 0.05;

/// Token spellings counted as a given answer letter. `{L}` expands to the uppercase
/// letter and `{l}` to the lowercase one.
class VariantSet {
public:
    VariantSet();  // {L}, " {L}", {l}, " {l}"
    explicit VariantSet(std::vector<std::string> templates);

    /// Comma-separated templates, e.g. "{L}, {L},{l}, {l}".
    static VariantSet parse(std::string_view spec);

    std::vector<std::string> tokens_for(char letter) const;
    const std::vector<std::string>& templates() const noexcept { return templates_; }
    std::string describe() const;

private:
    std::vector<std::string> templates_;
};

/// Highest probability among the letter's variant tokens; 0 when none is present.
double letter_probability(const TokenDistribution& dist, char letter, const VariantSet& variants);

struct ChoiceProbabilities {
    ChoiceTriple values{};    // normalized averages (raw averages when not conforming)
    ChoiceTriple raw_mean{};  // per-choice mean over the orderings before normalization
    double raw_sum = 0.0;
    bool conforming = false;
};

/// Maps each ordering's letter probabilities back to original choices, averages over
/// the six orderings and divides by the sum.
ChoiceProbabilities choice_probabilities(
    const ChoiceProbe& probe, const VariantSet& variants = {},
    double conform_epsilon = kDefaultConformEpsilon,
    std::span<const Permutation, kPermutationCount> perms = all_permutations());

struct OrderSensitivity {
    std::array<int, kChoiceCount> counts{};  // orderings in which each choice was selected
    ChoiceTriple frequencies{};              // counts / 6
    bool stable = false;
    int tied_orderings = 0;  // orderings where the winning letter was tied
};

/// Selected choice per ordering = argmax letter probability (ties to the earliest letter).
OrderSensitivity order_sensitivity(
    const ChoiceProbe& probe, const VariantSet& variants = {},
    std::span<const Permutation, kPermutationCount> perms = all_permutations());

/// Shannon entropy in nats with 0·ln 0 = 0. Throws std::invalid_argument for negative
/// entries or a sum more than 1e-6 away from 1.
double entropy(std::span<const double> probs);

/// Entropy of the student selection rates. Throws ValidationError without rates.
double student_entropy(const Question& q);

struct UncertaintyProfile {
    std::string question_id;
    int phrasing_id = 1;
    ChoiceProbabilities choice_probs;
    OrderSensitivity order_sens;
    double entropy_model = 0.0;
    int model_choice = 0;
    bool is_correct = false;
    bool excluded = false;
    std::string exclusion_reason;
};

inline constexpr std::string_view kReasonNonConforming = "non-conforming probe";
inline constexpr std::string_view kReasonMissingProbe = "missing probe";

/// Assembles every metric for one question. Non-conforming probes yield a profile
/// marked excluded.
UncertaintyProfile build_profile(const ChoiceProbe& probe, const Question& q,
                                 const VariantSet& variants = {},
                                 double conform_epsilon = kDefaultConformEpsilon);

/// Placeholder for a question that has no probe in the cache.
UncertaintyProfile missing_profile(const Question& q, int phrasing_id);

struct ProfileProvenance {
    BackendIdentity backend;
    int phrasing_id = 1;
    VariantSet variants;
    double conform_epsilon = kDefaultConformEpsilon;
};

std::string profile_to_json_line(const UncertaintyProfile& p, const ProfileProvenance& provenance);

}  // namespace mcqprobe
