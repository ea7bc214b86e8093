#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "mcqprobe/backend.hpp"
#include "mcqprobe/dataset.hpp"

namespace mcqprobe {

inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitPartial = 2;

/// Timestamp written into mock-backed records so repeated runs produce identical caches.
inline constexpr std::string_view kMockTimestamp = "1970-01-01T00:00:00Z";

struct RunConfig {
    std::filesystem::path dataset;
    std::string backend = "mock";  // http | mock
    std::string endpoint;
    std::string model;
    std::string api_key_env = "MCQ_PROBE_API_KEY";
    std::vector<int> phrasings = {1, 2};
    std::string label_style = "A)";
    std::string variants = "{L}, {L},{l}, {l}";
    int concurrency = 4;
    int top_k = kDefaultTopK;
    std::filesystem::path cache = "probes.jsonl";
    std::filesystem::path error_log;  // empty: <cache>.errors.jsonl
    std::filesystem::path out = "out";
    double alpha = 0.05;
    double conform_epsilon = 0.05;
    bool allow_partial = false;

    // mock backend
    std::uint64_t seed = 0;
    std::filesystem::path mock_spec;  // empty: latents from the dataset's student rates
    std::array<double, 3> mock_bias = {1.0, 1.0, 1.0};
    double mock_noise = 0.0;

    // http backend
    int retries = 3;
    int retry_base_ms = 1000;
    int timeout_s = 60;

    /// Throws ConfigError describing the first problem found.
    void validate() const;
};

/// Identity the probe stage records for this configuration; analysis looks records up
/// by it. Building it never touches the network.
BackendIdentity configured_identity(const RunConfig& config, const Dataset& ds);

/// Directory name for a backend under reports/.
std::string backend_slug(const BackendIdentity& id);

/// Populates the cache. Exit 0 when every key is cached, 2 when some failed, 1 on
/// configuration or input errors.
int cmd_probe(const RunConfig& config, std::ostream& out, std::ostream& err);

/// Writes profiles and every report kind under <out>/reports/<backend>/.
int cmd_analyze(const RunConfig& config, std::ostream& out, std::ostream& err);

int cmd_synth(int n, const TypeMix& mix, std::uint64_t seed, const std::filesystem::path& out_path,
              std::ostream& out, std::ostream& err);

/// Report kinds cmd_analyze emits (phrasing_comparison needs phrasings 1 and 2).
const std::vector<std::string>& report_kinds();

}  // namespace mcqprobe
