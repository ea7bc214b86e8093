#pragma once

#include <array>
#include <string>
#include <string_view>
#include <vector>

#include "mcqprobe/dataset.hpp"

namespace mcqprobe {

inline constexpr int kPermutationCount = 6;
inline constexpr std::array<char, kChoiceCount> kLetters = {'A', 'B', 'C'};

/// Presentation order: choice_at[label] is the original choice index shown at that label.
struct Permutation {
    std::array<int, kChoiceCount> choice_at{};

    /// Label position (0 = A) at which original choice `choice` is shown.
    int label_of(int choice) const;

    bool operator==(const Permutation&) const = default;
};

/// The 6 orderings, lexicographic in (A-target, B-target); index 0 is the identity.
const std::array<Permutation, kPermutationCount>& all_permutations();

enum class Phrasing : int { One = 1, Two = 2 };

std::string_view instruction_text(Phrasing p);
Phrasing phrasing_from_int(int id);

enum class LabelStyle { Paren, Dot, Wrapped };  // "A)", "A.", "(A)"

std::string_view to_string(LabelStyle s);
/// Accepts "A)", "A.", "(A)". Throws std::invalid_argument otherwise.
LabelStyle label_style_from_string(std::string_view s);
std::string format_label(LabelStyle s, char letter);

struct RenderedPrompt {
    std::string question_id;
    int permutation_id = 0;
    int phrasing_id = 1;
    std::string text;
};

/// Instruction, blank line, "Question:", the stem, one labelled line per choice in
/// presentation order, then "Response:" with no trailing newline.
RenderedPrompt render_prompt(const Question& q, int permutation_id, Phrasing phrasing,
                             LabelStyle style = LabelStyle::Paren);

}  // namespace mcqprobe
