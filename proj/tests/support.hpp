#pragma once

#include <unistd.h>

#include <atomic>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "mcqprobe/analysis.hpp"
#include "mcqprobe/backend.hpp"
#include "mcqprobe/dataset.hpp"
#include "mcqprobe/probe.hpp"
#include "mcqprobe/uncertainty.hpp"

namespace testing {

namespace fs = std::filesystem;

/// Fresh directory under the system temp dir, removed on destruction.
class TempDir {
public:
    explicit TempDir(const std::string& tag) {
        static std::atomic<int> counter{0};
        path_ = fs::temp_directory_path() /
                ("mcqprobe_" + tag + "_" + std::to_string(::getpid()) + "_" + std::to_string(counter++));
        fs::remove_all(path_);
        fs::create_directories(path_);
    }
    ~TempDir() {
        std::error_code ec;
        fs::remove_all(path_, ec);
    }
    const fs::path& path() const { return path_; }
    fs::path operator/(const std::string& name) const { return path_ / name; }

private:
    fs::path path_;
};

inline std::string slurp(const fs::path& p) {
    std::ifstream f(p, std::ios::binary);
    std::ostringstream ss;
    ss << f.rdbuf();
    return ss.str();
}

inline void spit(const fs::path& p, const std::string& text) {
    std::ofstream f(p, std::ios::binary | std::ios::trunc);
    f << text;
}

inline std::vector<std::string> lines_of(const std::string& text) {
    std::vector<std::string> out;
    std::istringstream in(text);
    for (std::string line; std::getline(in, line);) {
        if (!line.empty()) out.push_back(line);
    }
    return out;
}

inline mcqprobe::Question make_question(std::string id, mcqprobe::ChoiceTriple rates, int correct = 0,
                                        mcqprobe::QuestionType type = mcqprobe::QuestionType::WhQuestion) {
    mcqprobe::Question q;
    q.id = std::move(id);
    q.stem = "Which option fits " + q.id + "?";
    q.choices = {q.id + " first", q.id + " second", q.id + " third"};
    q.correct_index = correct;
    q.qtype = type;
    q.student_rates = rates;
    return q;
}

/// Profile straight from a mock with the given spec, σ and bias as set there.
inline mcqprobe::UncertaintyProfile mock_profile(const mcqprobe::MockModelSpec& spec,
                                                 const mcqprobe::Question& q, int phrasing = 1) {
    mcqprobe::MockBackend backend(spec);
    auto probe = mcqprobe::probe_question(q, backend, mcqprobe::phrasing_from_int(phrasing),
                                          mcqprobe::LabelStyle::Paren, mcqprobe::kDefaultTopK,
                                          "1970-01-01T00:00:00Z");
    return mcqprobe::build_profile(probe, q);
}

inline std::vector<mcqprobe::UncertaintyProfile> mock_profiles(const mcqprobe::MockModelSpec& spec,
                                                               const mcqprobe::Dataset& ds,
                                                               int phrasing = 1) {
    std::vector<mcqprobe::UncertaintyProfile> out;
    for (const auto& q : ds.questions) out.push_back(mock_profile(spec, q, phrasing));
    return out;
}

/// Profile whose averaged probabilities and order frequencies are set directly.
inline mcqprobe::UncertaintyProfile manual_profile(const mcqprobe::Question& q,
                                                   mcqprobe::ChoiceTriple probs,
                                                   mcqprobe::ChoiceTriple freqs) {
    mcqprobe::UncertaintyProfile p;
    p.question_id = q.id;
    p.choice_probs.values = probs;
    p.choice_probs.raw_mean = probs;
    p.choice_probs.raw_sum = probs[0] + probs[1] + probs[2];
    p.choice_probs.conforming = true;
    p.order_sens.frequencies = freqs;
    for (int c = 0; c < 3; ++c) p.order_sens.counts[c] = static_cast<int>(freqs[c] * 6.0 + 0.5);
    p.order_sens.stable = freqs[0] == 1.0 || freqs[1] == 1.0 || freqs[2] == 1.0;
    int best = 0;
    for (int c = 1; c < 3; ++c) {
        if (probs[c] > probs[best]) best = c;
    }
    p.model_choice = best;
    p.is_correct = best == q.correct_index;
    double h = 0.0;
    double sum = p.choice_probs.raw_sum;
    for (double v : probs) {
        if (v > 0) h -= (v / sum) * std::log(v / sum);
    }
    p.entropy_model = h;
    return p;
}

}  // namespace testing
