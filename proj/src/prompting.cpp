#include "mcqprobe/prompting.hpp"

#include <algorithm>
#include <stdexcept>

namespace mcqprobe {

namespace {

constexpr std::string_view kPhrasingOne =
    "Below is a multiple-choice question. Choose the letter which best answers the question. "
    "Keep your response as brief as possible; just state the letter corresponding to your "
    "answer with no explanation.";

constexpr std::string_view kPhrasingTwo =
    "You will be presented with a multiple-choice question. Select the option letter that you "
    "believe provides the best answer to the question. Keep your response concise by simply "
    "stating the letter of your chosen answer without providing any additional explanation.";

std::array<Permutation, kPermutationCount> make_permutations() {
    std::array<Permutation, kPermutationCount> out{};
    std::array<int, kChoiceCount> order = {0, 1, 2};
    std::size_t i = 0;
    do {
        out[i++].choice_at = order;
    } while (std::next_permutation(order.begin(), order.end()));
    return out;
}

}  // namespace

int Permutation::label_of(int choice) const {
    for (int l = 0; l < kChoiceCount; ++l) {
        if (choice_at[l] == choice) return l;
    }
    throw std::out_of_range("choice index not in permutation");
}

const std::array<Permutation, kPermutationCount>& all_permutations() {
    static const auto perms = make_permutations();
    return perms;
}

std::string_view instruction_text(Phrasing p) {
    return p == Phrasing::One ? kPhrasingOne : kPhrasingTwo;
}

Phrasing phrasing_from_int(int id) {
    if (id == 1) return Phrasing::One;
    if (id == 2) return Phrasing::Two;
    throw std::invalid_argument("phrasing must be 1 or 2, got " + std::to_string(id));
}

std::string_view to_string(LabelStyle s) {
    switch (s) {
        case LabelStyle::Paren: return "A)";
        case LabelStyle::Dot: return "A.";
        case LabelStyle::Wrapped: return "(A)";
    }
    return "A)";
}

LabelStyle label_style_from_string(std::string_view s) {
    if (s == "A)") return LabelStyle::Paren;
    if (s == "A.") return LabelStyle::Dot;
    if (s == "(A)") return LabelStyle::Wrapped;
    throw std::invalid_argument("unknown label style '" + std::string(s) +
                                "' (expected \"A)\", \"A.\" or \"(A)\")");
}

std::string format_label(LabelStyle s, char letter) {
    switch (s) {
        case LabelStyle::Paren: return std::string{letter, ')'};
        case LabelStyle::Dot: return std::string{letter, '.'};
        case LabelStyle::Wrapped: return std::string{'(', letter, ')'};
    }
    return std::string{letter};
}

RenderedPrompt render_prompt(const Question& q, int permutation_id, Phrasing phrasing,
                             LabelStyle style) {
    if (permutation_id < 0 || permutation_id >= kPermutationCount) {
        throw std::out_of_range("permutation id " + std::to_string(permutation_id));
    }
    if (q.choices.size() != kChoiceCount) {
        throw std::invalid_argument("question " + q.id + " does not have 3 choices");
    }
    const Permutation& perm = all_permutations()[permutation_id];

    std::string text;
    text.reserve(512 + q.stem.size());
    text += instruction_text(phrasing);
    text += "\n\nQuestion:\n";
    text += q.stem;
    text += '\n';
    for (int l = 0; l < kChoiceCount; ++l) {
        text += format_label(style, kLetters[l]);
        text += ' ';
        text += q.choices[perm.choice_at[l]];
        text += '\n';
    }
    text += "Response:";

    return RenderedPrompt{q.id, permutation_id, static_cast<int>(phrasing), std::move(text)};
}

}  // namespace mcqprobe
