#include "mcqprobe/probe.hpp"

#include <atomic>
#include <cerrno>
#include <chrono>
#include <cstring>
#include <ctime>
#include <fstream>
#include <mutex>
#include <optional>
#include <sstream>
#include <thread>

#include <fcntl.h>
#include <unistd.h>

#include <json.hpp>

#include "mcqprobe/errors.hpp"

namespace mcqprobe {

using nlohmann::json;
using ordered_json = nlohmann::ordered_json;

ProbeKey key_of(const ChoiceProbe& p) {
    return {p.question_id, p.phrasing_id, p.backend.key()};
}

std::string probe_to_json_line(const ChoiceProbe& p) {
    ordered_json j;
    j["question_id"] = p.question_id;
    j["phrasing_id"] = p.phrasing_id;
    j["backend"] = {{"kind", p.backend.kind},
                    {"model", p.backend.model},
                    {"endpoint", p.backend.endpoint},
                    {"label_style", p.backend.label_style}};
    j["probability_source"] = p.probability_source;
    j["timestamp"] = p.timestamp;
    ordered_json dists = ordered_json::array();
    for (const auto& d : p.distributions) {
        ordered_json entries = ordered_json::array();
        for (const auto& e : d.entries) entries.push_back(ordered_json::array({e.token, e.probability}));
        dists.push_back({{"top_k", d.top_k}, {"entries", entries}});
    }
    j["distributions"] = dists;
    return j.dump();
}

ChoiceProbe probe_from_json_line(std::string_view line, std::size_t line_no) {
    ChoiceProbe p;
    try {
        json j = json::parse(line);
        p.question_id = j.at("question_id").get<std::string>();
        p.phrasing_id = j.at("phrasing_id").get<int>();
        const auto& b = j.at("backend");
        p.backend = BackendIdentity{b.at("kind").get<std::string>(), b.at("model").get<std::string>(),
                                    b.at("endpoint").get<std::string>(),
                                    b.at("label_style").get<std::string>()};
        p.probability_source = j.value("probability_source", std::string{});
        p.timestamp = j.value("timestamp", std::string{});
        const auto& dists = j.at("distributions");
        if (!dists.is_array() || dists.size() != kPermutationCount) {
            throw ParseError(line_no, "expected 6 distributions");
        }
        for (std::size_t i = 0; i < kPermutationCount; ++i) {
            TokenDistribution d;
            d.top_k = dists[i].at("top_k").get<int>();
            for (const auto& e : dists[i].at("entries")) {
                d.entries.push_back({e.at(0).get<std::string>(), e.at(1).get<double>()});
            }
            d.validate();
            p.distributions[i] = std::move(d);
        }
    } catch (const ParseError&) {
        throw;
    } catch (const std::exception& e) {
        throw ParseError(line_no, std::string("corrupt cache record: ") + e.what());
    }
    return p;
}

ProbeCache ProbeCache::load(const std::filesystem::path& path) {
    ProbeCache cache;
    std::ifstream in(path);
    if (!in) return cache;
    std::string line;
    std::size_t line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        ChoiceProbe p = probe_from_json_line(line, line_no);
        if (cache.contains(key_of(p))) {
            throw ParseError(line_no, "duplicate cache record for question '" + p.question_id + "'");
        }
        cache.insert(std::move(p));
    }
    return cache;
}

const ChoiceProbe* ProbeCache::find(std::string_view question_id, int phrasing_id,
                                    const BackendIdentity& backend) const {
    auto it = index_.find(ProbeKey{std::string(question_id), phrasing_id, backend.key()});
    return it == index_.end() ? nullptr : &records_[it->second];
}

void ProbeCache::insert(ChoiceProbe probe) {
    auto key = key_of(probe);
    if (index_.count(key)) {
        throw std::invalid_argument("cache already holds a record for '" + probe.question_id + "'");
    }
    index_.emplace(std::move(key), records_.size());
    records_.push_back(std::move(probe));
}

// ---------------------------------------------------------------------------

DurableLineWriter::DurableLineWriter(const std::filesystem::path& path) : path_(path) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    fd_ = ::open(path.c_str(), O_WRONLY | O_CREAT | O_APPEND | O_CLOEXEC, 0644);
    if (fd_ < 0) {
        throw std::runtime_error("cannot open " + path.string() + ": " + std::strerror(errno));
    }
}

DurableLineWriter::~DurableLineWriter() {
    if (fd_ >= 0) ::close(fd_);
}

void DurableLineWriter::append(std::string_view line) {
    std::string buf(line);
    buf.push_back('\n');
    std::size_t written = 0;
    while (written < buf.size()) {
        ssize_t n = ::write(fd_, buf.data() + written, buf.size() - written);
        if (n < 0) {
            if (errno == EINTR) continue;
            throw std::runtime_error("write to " + path_.string() + " failed: " + std::strerror(errno));
        }
        written += static_cast<std::size_t>(n);
    }
    if (::fsync(fd_) != 0) {
        throw std::runtime_error("fsync of " + path_.string() + " failed: " + std::strerror(errno));
    }
}

// ---------------------------------------------------------------------------

std::string utc_timestamp_now() {
    auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&now, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

BackendIdentity probe_identity(const FirstTokenBackend& backend, LabelStyle style) {
    BackendIdentity id = backend.identity();
    id.label_style = std::string(to_string(style));
    return id;
}

ChoiceProbe probe_question(const Question& q, FirstTokenBackend& backend, Phrasing phrasing,
                           LabelStyle style, int top_k, const std::string& timestamp) {
    ChoiceProbe p;
    p.question_id = q.id;
    p.phrasing_id = static_cast<int>(phrasing);
    p.backend = probe_identity(backend, style);
    p.probability_source = backend.probability_source();
    p.timestamp = timestamp;
    for (int perm = 0; perm < kPermutationCount; ++perm) {
        p.distributions[perm] = backend.query_first_token(render_prompt(q, perm, phrasing, style), top_k);
    }
    return p;
}

namespace {

struct TaskResult {
    std::optional<ChoiceProbe> probe;
    std::optional<ProbeFailure> failure;
    bool done = false;
};

}  // namespace

ProbeRun run_probe(const Dataset& ds, FirstTokenBackend& backend, const ProbeOptions& options) {
    if (options.cache_path.empty()) throw ConfigError("probe needs a cache path");
    if (options.phrasings.empty()) throw ConfigError("probe needs at least one phrasing");
    if (options.top_k < kMinTopK) throw ConfigError("top_k must be at least 6");

    ProbeRun run{ProbeCache::load(options.cache_path), {}};
    const BackendIdentity identity = probe_identity(backend, options.label_style);
    const auto error_path = options.error_log_path.empty()
                                ? std::filesystem::path(options.cache_path.string() + ".errors.jsonl")
                                : options.error_log_path;

    struct Task {
        const Question* question;
        Phrasing phrasing;
    };
    std::vector<Task> tasks;
    for (const auto& q : ds.questions) {
        for (Phrasing ph : options.phrasings) {
            ++run.summary.total_keys;
            if (run.cache.contains({q.id, static_cast<int>(ph), identity.key()})) {
                ++run.summary.skipped;
            } else {
                tasks.push_back({&q, ph});
            }
        }
    }
    if (tasks.empty()) {
        if (options.progress) options.progress(run.summary.total_keys, run.summary.total_keys, 0);
        return run;
    }

    DurableLineWriter cache_writer(options.cache_path);
    std::optional<DurableLineWriter> error_writer;

    std::vector<TaskResult> results(tasks.size());
    std::mutex mutex;
    std::size_t next_to_write = 0;
    std::atomic<std::size_t> next_task{0};
    std::atomic<std::size_t> calls{0};
    std::size_t finished = 0;
    std::exception_ptr write_error;

    // Emits completed results in task order; callers hold `mutex`.
    auto flush_ready = [&] {
        while (next_to_write < results.size() && results[next_to_write].done) {
            auto& r = results[next_to_write];
            if (r.probe) {
                cache_writer.append(probe_to_json_line(*r.probe));
                run.cache.insert(std::move(*r.probe));
                ++run.summary.new_records;
            } else if (r.failure) {
                if (!error_writer) error_writer.emplace(error_path);
                ordered_json e{{"question_id", r.failure->question_id},
                               {"phrasing_id", r.failure->phrasing_id},
                               {"permutation_id", r.failure->permutation_id},
                               {"backend", identity.key()},
                               {"error", r.failure->message},
                               {"timestamp", options.clock()}};
                error_writer->append(e.dump());
                run.summary.failures.push_back(std::move(*r.failure));
            }
            ++next_to_write;
        }
    };

    auto worker = [&] {
        for (;;) {
            std::size_t i = next_task.fetch_add(1);
            if (i >= tasks.size()) return;
            const Task& t = tasks[i];
            TaskResult r;
            ChoiceProbe p;
            p.question_id = t.question->id;
            p.phrasing_id = static_cast<int>(t.phrasing);
            p.backend = identity;
            p.probability_source = backend.probability_source();
            int perm = 0;
            try {
                for (; perm < kPermutationCount; ++perm) {
                    auto prompt = render_prompt(*t.question, perm, t.phrasing, options.label_style);
                    ++calls;
                    p.distributions[perm] = backend.query_first_token(prompt, options.top_k);
                }
                p.timestamp = options.clock();
                r.probe = std::move(p);
            } catch (const std::exception& e) {
                r.failure = ProbeFailure{t.question->id, static_cast<int>(t.phrasing), perm, e.what()};
            }
            r.done = true;

            std::lock_guard lock(mutex);
            results[i] = std::move(r);
            ++finished;
            if (write_error) continue;
            try {
                flush_ready();
            } catch (...) {
                write_error = std::current_exception();
                next_task = tasks.size();
            }
            if (options.progress) {
                options.progress(run.summary.skipped + finished, run.summary.total_keys,
                                 run.summary.failures.size());
            }
        }
    };

    const std::size_t n_workers =
        std::min<std::size_t>(std::max(1, options.concurrency), tasks.size());
    {
        std::vector<std::jthread> pool;
        pool.reserve(n_workers);
        for (std::size_t w = 0; w < n_workers; ++w) pool.emplace_back(worker);
    }
    if (write_error) std::rethrow_exception(write_error);
    run.summary.backend_calls = calls.load();
    return run;
}

}  // namespace mcqprobe
