#include "mcqprobe/uncertainty.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <stdexcept>

#include <json.hpp>

#include "mcqprobe/errors.hpp"

namespace mcqprobe {

VariantSet::VariantSet() : templates_{"{L}", " {L}", "{l}", " {l}"} {}

VariantSet::VariantSet(std::vector<std::string> templates) : templates_(std::move(templates)) {
    if (templates_.empty()) throw std::invalid_argument("variant set must not be empty");
    for (const auto& t : templates_) {
        if (t.find("{L}") == std::string::npos && t.find("{l}") == std::string::npos) {
            throw std::invalid_argument("variant template '" + t + "' has no {L} or {l}");
        }
    }
}

VariantSet VariantSet::parse(std::string_view spec) {
    std::vector<std::string> out;
    std::size_t start = 0;
    while (start <= spec.size()) {
        auto comma = spec.find(',', start);
        auto piece = spec.substr(start, comma == std::string_view::npos ? spec.npos : comma - start);
        if (!piece.empty()) out.emplace_back(piece);
        if (comma == std::string_view::npos) break;
        start = comma + 1;
    }
    return VariantSet(std::move(out));
}

std::vector<std::string> VariantSet::tokens_for(char letter) const {
    std::vector<std::string> out;
    const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(letter)));
    const char lower = static_cast<char>(std::tolower(static_cast<unsigned char>(letter)));
    for (const auto& t : templates_) {
        std::string token;
        for (std::size_t i = 0; i < t.size(); ++i) {
            if (t.compare(i, 3, "{L}") == 0) {
                token.push_back(upper);
                i += 2;
            } else if (t.compare(i, 3, "{l}") == 0) {
                token.push_back(lower);
                i += 2;
            } else {
                token.push_back(t[i]);
            }
        }
        if (std::find(out.begin(), out.end(), token) == out.end()) out.push_back(std::move(token));
    }
    return out;
}

std::string VariantSet::describe() const {
    std::string out;
    for (std::size_t i = 0; i < templates_.size(); ++i) {
        if (i) out += ",";
        out += templates_[i];
    }
    return out;
}

double letter_probability(const TokenDistribution& dist, char letter, const VariantSet& variants) {
    double best = 0.0;
    for (const auto& token : variants.tokens_for(letter)) {
        best = std::max(best, dist.probability_of(token));
    }
    return best;
}

namespace {

std::array<ChoiceTriple, kPermutationCount> letter_table(const ChoiceProbe& probe,
                                                         const VariantSet& variants) {
    std::array<ChoiceTriple, kPermutationCount> table{};
    for (int p = 0; p < kPermutationCount; ++p) {
        for (int l = 0; l < kChoiceCount; ++l) {
            table[p][l] = letter_probability(probe.distributions[p], kLetters[l], variants);
        }
    }
    return table;
}

int argmax(const ChoiceTriple& v) {
    return static_cast<int>(std::max_element(v.begin(), v.end()) - v.begin());
}

}  // namespace

ChoiceProbabilities choice_probabilities(const ChoiceProbe& probe, const VariantSet& variants,
                                         double conform_epsilon,
                                         std::span<const Permutation, kPermutationCount> perms) {
    auto table = letter_table(probe, variants);
    ChoiceProbabilities out;
    for (int p = 0; p < kPermutationCount; ++p) {
        for (int l = 0; l < kChoiceCount; ++l) out.raw_mean[perms[p].choice_at[l]] += table[p][l];
    }
    for (double& m : out.raw_mean) m /= kPermutationCount;
    out.raw_sum = out.raw_mean[0] + out.raw_mean[1] + out.raw_mean[2];
    out.conforming = out.raw_sum >= conform_epsilon;
    out.values = out.raw_mean;
    if (out.conforming) {
        for (double& v : out.values) v /= out.raw_sum;
    }
    return out;
}

OrderSensitivity order_sensitivity(const ChoiceProbe& probe, const VariantSet& variants,
                                   std::span<const Permutation, kPermutationCount> perms) {
    auto table = letter_table(probe, variants);
    OrderSensitivity out;
    for (int p = 0; p < kPermutationCount; ++p) {
        int winner = argmax(table[p]);
        int ties = static_cast<int>(std::count(table[p].begin(), table[p].end(), table[p][winner]));
        if (ties > 1) ++out.tied_orderings;
        ++out.counts[perms[p].choice_at[winner]];
    }
    for (int c = 0; c < kChoiceCount; ++c) {
        out.frequencies[c] = static_cast<double>(out.counts[c]) / kPermutationCount;
        if (out.counts[c] == kPermutationCount) out.stable = true;
    }
    return out;
}

double entropy(std::span<const double> probs) {
    double sum = 0.0;
    for (double p : probs) {
        if (!(p >= 0.0)) throw std::invalid_argument("entropy: negative or NaN probability");
        sum += p;
    }
    if (std::abs(sum - 1.0) > 1e-6) {
        throw std::invalid_argument("entropy: probabilities sum to " + std::to_string(sum));
    }
    double h = 0.0;
    for (double p : probs) {
        if (p > 0.0) h -= p * std::log(p);
    }
    return std::clamp(h, 0.0, std::log(3.0));
}

double student_entropy(const Question& q) {
    if (!q.student_rates) throw ValidationError(q.id, "missing student_rates");
    return entropy(*q.student_rates);
}

UncertaintyProfile build_profile(const ChoiceProbe& probe, const Question& q,
                                 const VariantSet& variants, double conform_epsilon) {
    UncertaintyProfile prof;
    prof.question_id = q.id;
    prof.phrasing_id = probe.phrasing_id;
    prof.choice_probs = choice_probabilities(probe, variants, conform_epsilon);
    prof.order_sens = order_sensitivity(probe, variants);
    prof.model_choice = argmax(prof.choice_probs.values);
    prof.is_correct = prof.model_choice == q.correct_index;
    if (!prof.choice_probs.conforming) {
        prof.excluded = true;
        prof.exclusion_reason = std::string(kReasonNonConforming);
        return prof;
    }
    prof.entropy_model = entropy(prof.choice_probs.values);
    return prof;
}

UncertaintyProfile missing_profile(const Question& q, int phrasing_id) {
    UncertaintyProfile prof;
    prof.question_id = q.id;
    prof.phrasing_id = phrasing_id;
    prof.excluded = true;
    prof.exclusion_reason = std::string(kReasonMissingProbe);
    return prof;
}

std::string profile_to_json_line(const UncertaintyProfile& p, const ProfileProvenance& provenance) {
    nlohmann::ordered_json j;
    j["question_id"] = p.question_id;
    j["phrasing_id"] = p.phrasing_id;
    j["excluded"] = p.excluded;
    if (p.excluded) j["exclusion_reason"] = p.exclusion_reason;
    j["choice_probs"] = p.choice_probs.values;
    j["raw_mean"] = p.choice_probs.raw_mean;
    j["conforming"] = p.choice_probs.conforming;
    j["order_counts"] = p.order_sens.counts;
    j["order_frequencies"] = p.order_sens.frequencies;
    j["stable"] = p.order_sens.stable;
    j["tied_orderings"] = p.order_sens.tied_orderings;
    j["entropy_model"] = p.entropy_model;
    j["model_choice"] = p.model_choice;
    j["is_correct"] = p.is_correct;
    j["provenance"] = {{"backend", provenance.backend.key()},
                       {"label_style", provenance.backend.label_style},
                       {"phrasing_id", provenance.phrasing_id},
                       {"variants", provenance.variants.describe()},
                       {"conform_epsilon", provenance.conform_epsilon}};
    return j.dump();
}

}  // namespace mcqprobe
