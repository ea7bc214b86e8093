#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace mcqprobe {

inline constexpr int kChoiceCount = 3;
inline constexpr int kDefaultExamineeCount = 268;
inline constexpr double kRateSumTolerance = 1e-6;

/// One probability (or proportion) per original choice index.
using ChoiceTriple = std::array<double, kChoiceCount>;

enum class QuestionType : int {
    FillGap = 1,
    FillTwoGaps = 2,
    WhQuestion = 3,
    SentenceCompletion = 4,
};

inline constexpr std::array<QuestionType, 4> kAllQuestionTypes = {
    QuestionType::FillGap, QuestionType::FillTwoGaps, QuestionType::WhQuestion,
    QuestionType::SentenceCompletion};

std::string_view to_string(QuestionType t);

struct Question {
    std::string id;
    std::string stem;
    std::vector<std::string> choices;
    int correct_index = 0;
    std::optional<QuestionType> qtype;
    std::optional<ChoiceTriple> student_rates;
    int examinee_count = kDefaultExamineeCount;

    bool operator==(const Question&) const = default;
};

struct DatasetMetadata {
    std::string source;
    std::string created;  // ISO-8601, may be empty when the file carries none

    bool operator==(const DatasetMetadata&) const = default;
};

struct Dataset {
    std::vector<Question> questions;
    DatasetMetadata metadata;

    const Question* find(std::string_view id) const;
    std::size_t size() const noexcept { return questions.size(); }

    bool operator==(const Dataset&) const = default;
};

enum class DatasetFormat { Jsonl, Csv };

/// Throws ValidationError naming the question and the violated invariant.
void validate_question(const Question& q);
/// Validates every question plus id uniqueness and non-emptiness.
void validate_dataset(const Dataset& ds);

/// Loads a dataset; questions keep file order. Throws ParseError or ValidationError.
Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format);
/// Format inferred from the extension (.csv, otherwise jsonl).
Dataset load_dataset(const std::filesystem::path& path);

Dataset parse_jsonl_dataset(std::string_view text, std::string source);
Dataset parse_csv_dataset(std::string_view text, std::string source);

std::string dataset_to_jsonl(const Dataset& ds);
std::string dataset_to_csv(const Dataset& ds);
void write_dataset(const Dataset& ds, const std::filesystem::path& path, DatasetFormat format);

struct TypeClassification {
    QuestionType type = QuestionType::SentenceCompletion;
    bool low_confidence = false;
};

/// Rule-based type heuristic. Gap markers are runs of "...", "…" or 3+ underscores.
///   two or more gaps            -> FillTwoGaps
///   one gap, not at the end     -> FillGap
///   stem ends with a gap        -> SentenceCompletion
///   ends with '?'               -> WhQuestion
///   otherwise                   -> SentenceCompletion, low confidence
TypeClassification classify_question_type(std::string_view stem);

/// Type from the file when present, otherwise the classifier's guess.
QuestionType effective_type(const Question& q);

enum class ChoiceRole : int { CorrectAnswer = 0, Distractor1 = 1, Distractor2 = 2 };

inline constexpr std::array<ChoiceRole, 3> kAllRoles = {
    ChoiceRole::CorrectAnswer, ChoiceRole::Distractor1, ChoiceRole::Distractor2};

std::string_view to_string(ChoiceRole r);

struct ChoiceRoles {
    std::array<ChoiceRole, kChoiceCount> role_of_choice{};
    std::array<int, kChoiceCount> choice_of_role{};  // indexed by ChoiceRole
};

/// Distractors ranked per question by student rate, ties to the lower choice index.
/// Throws ValidationError when the question has no student rates.
ChoiceRoles assign_choice_roles(const Question& q);

using TypeMix = std::array<double, 4>;

/// Reference type mix (types 1..4).
inline constexpr TypeMix kReferenceTypeMix = {0.149, 0.031, 0.503, 0.317};

/// Largest-remainder apportionment of n items over the mix.
std::array<int, 4> apportion_types(int n, const TypeMix& mix);

/// Deterministic synthetic stand-in for a real exam bank. Throws std::invalid_argument
/// on an invalid mix or n < 1.
Dataset synthesize_dataset(int n, const TypeMix& mix, std::uint64_t seed);

}  // namespace mcqprobe
