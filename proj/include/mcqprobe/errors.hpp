#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace mcqprobe {

/// Malformed input file. Carries the 1-based line where parsing failed.
class ParseError : public std::runtime_error {
public:
    ParseError(std::size_t line, const std::string& message)
        : std::runtime_error("line " + std::to_string(line) + ": " + message), line_(line) {}

    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// A question (or dataset) violates one of its invariants.
class ValidationError : public std::runtime_error {
public:
    ValidationError(const std::string& question_id, const std::string& message)
        : std::runtime_error("question '" + question_id + "': " + message),
          question_id_(question_id),
          detail_(message) {}

    const std::string& question_id() const noexcept { return question_id_; }
    const std::string& detail() const noexcept { return detail_; }

private:
    std::string question_id_;
    std::string detail_;
};

class BackendError : public std::runtime_error {
public:
    BackendError(const std::string& message, bool transient)
        : std::runtime_error(message), transient_(transient) {}

    bool transient() const noexcept { return transient_; }

private:
    bool transient_;
};

/// The endpoint answered but without per-token probabilities.
class LogprobsUnsupported : public BackendError {
public:
    explicit LogprobsUnsupported(const std::string& detail)
        : BackendError("logprobs unsupported: " + detail, false) {}
};

/// Statistic undefined for the given sample (zero variance, too few points...).
class StatsError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace mcqprobe
