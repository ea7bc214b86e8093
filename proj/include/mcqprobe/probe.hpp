#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <functional>
#include <map>
#include <string>
#include <tuple>
#include <vector>

#include "mcqprobe/backend.hpp"
#include "mcqprobe/dataset.hpp"
#include "mcqprobe/prompting.hpp"

namespace mcqprobe {

/// Raw record for one (question, phrasing, backend): one distribution per ordering.
struct ChoiceProbe {
    std::string question_id;
    int phrasing_id = 1;
    BackendIdentity backend;
    std::string probability_source;
    std::string timestamp;
    std::array<TokenDistribution, kPermutationCount> distributions;

    bool operator==(const ChoiceProbe&) const = default;
};

using ProbeKey = std::tuple<std::string, int, std::string>;  // question, phrasing, backend key

ProbeKey key_of(const ChoiceProbe& p);

std::string probe_to_json_line(const ChoiceProbe& p);
/// Throws ParseError(line) on malformed records.
ChoiceProbe probe_from_json_line(std::string_view line, std::size_t line_no);

/// Append-only, at most one record per key. Records keep file order.
class ProbeCache {
public:
    /// A missing file yields an empty cache. Corrupt or duplicate lines throw ParseError.
    static ProbeCache load(const std::filesystem::path& path);

    const ChoiceProbe* find(std::string_view question_id, int phrasing_id,
                            const BackendIdentity& backend) const;
    bool contains(const ProbeKey& key) const { return index_.count(key) != 0; }
    /// Throws std::invalid_argument if the key is already present.
    void insert(ChoiceProbe probe);

    const std::vector<ChoiceProbe>& records() const noexcept { return records_; }
    std::size_t size() const noexcept { return records_.size(); }

private:
    std::vector<ChoiceProbe> records_;
    std::map<ProbeKey, std::size_t> index_;
};

/// Appends one line per record and fsyncs it before returning.
class DurableLineWriter {
public:
    explicit DurableLineWriter(const std::filesystem::path& path);
    ~DurableLineWriter();
    DurableLineWriter(const DurableLineWriter&) = delete;
    DurableLineWriter& operator=(const DurableLineWriter&) = delete;

    void append(std::string_view line);

private:
    int fd_ = -1;
    std::filesystem::path path_;
};

/// Issues the six queries for one (question, phrasing) and assembles the probe.
ChoiceProbe probe_question(const Question& q, FirstTokenBackend& backend, Phrasing phrasing,
                           LabelStyle style, int top_k, const std::string& timestamp);

std::string utc_timestamp_now();

struct ProbeOptions {
    std::vector<Phrasing> phrasings = {Phrasing::One};
    LabelStyle label_style = LabelStyle::Paren;
    int top_k = kDefaultTopK;
    int concurrency = 4;
    std::filesystem::path cache_path;
    std::filesystem::path error_log_path;  // defaults to <cache>.errors.jsonl
    /// Timestamp source for records; the mock pipeline pins it for reproducibility.
    std::function<std::string()> clock = utc_timestamp_now;
    std::function<void(std::size_t done, std::size_t total, std::size_t failed)> progress;
};

struct ProbeFailure {
    std::string question_id;
    int phrasing_id = 1;
    int permutation_id = 0;
    std::string message;
};

struct ProbeSummary {
    std::size_t total_keys = 0;
    std::size_t skipped = 0;       // already cached
    std::size_t new_records = 0;
    std::size_t backend_calls = 0;
    std::vector<ProbeFailure> failures;

    bool complete() const noexcept { return failures.empty(); }
};

struct ProbeRun {
    ProbeCache cache;
    ProbeSummary summary;
};

/// One ChoiceProbe per (question, phrasing), skipping keys already in the cache file.
/// Up to `concurrency` keys are probed at once; records are appended in dataset order
/// through a single writer, so identical inputs give an identical cache file. A key
/// whose query fails is logged to the error log and left out.
ProbeRun run_probe(const Dataset& ds, FirstTokenBackend& backend, const ProbeOptions& options);

BackendIdentity probe_identity(const FirstTokenBackend& backend, LabelStyle style);

}  // namespace mcqprobe
