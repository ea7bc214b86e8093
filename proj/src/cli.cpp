#include "mcqprobe/cli.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <memory>
#include <ostream>
#include <sstream>

#include "mcqprobe/analysis.hpp"
#include "mcqprobe/errors.hpp"
#include "mcqprobe/http_backend.hpp"
#include "mcqprobe/probe.hpp"
#include "mcqprobe/uncertainty.hpp"

namespace mcqprobe {

namespace fs = std::filesystem;

const std::vector<std::string>& report_kinds() {
    static const std::vector<std::string> kinds = {
        "accuracy_table",
        "entropy_correlation",
        "chi_squared_first_token",
        "chi_squared_order_sensitivity",
        "per_choice_correlation_all",
        "per_choice_correlation_correct",
        "metric_agreement",
        "order_stability",
        "phrasing_comparison",
    };
    return kinds;
}

void RunConfig::validate() const {
    if (dataset.empty()) throw ConfigError("--dataset is required");
    if (backend == "http") {
        if (endpoint.empty()) throw ConfigError("http backend requires --endpoint");
        if (model.empty()) throw ConfigError("http backend requires --model");
    } else if (backend != "mock") {
        throw ConfigError("unknown backend '" + backend + "' (expected http or mock)");
    }
    if (phrasings.empty()) throw ConfigError("at least one --phrasing is required");
    for (int p : phrasings) {
        if (p != 1 && p != 2) throw ConfigError("phrasing must be 1 or 2");
    }
    try {
        label_style_from_string(label_style);
        VariantSet::parse(variants);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(e.what());
    }
    if (concurrency < 1) throw ConfigError("--concurrency must be at least 1");
    if (top_k < kMinTopK) throw ConfigError("top-k must be at least 6");
    if (!(alpha > 0.0 && alpha < 1.0)) throw ConfigError("--alpha must be in (0,1)");
    if (cache.empty()) throw ConfigError("--cache is required");
    for (double b : mock_bias) {
        if (!(b > 0.0)) throw ConfigError("mock bias entries must be positive");
    }
    if (mock_noise < 0.0) throw ConfigError("mock noise must be non-negative");
    if (retries < 0 || retry_base_ms < 0) throw ConfigError("retry settings must be non-negative");
}

namespace {

std::vector<Phrasing> phrasings_of(const RunConfig& c) {
    std::vector<int> ids = c.phrasings;
    std::sort(ids.begin(), ids.end());
    ids.erase(std::unique(ids.begin(), ids.end()), ids.end());
    std::vector<Phrasing> out;
    for (int id : ids) out.push_back(phrasing_from_int(id));
    return out;
}

MockModelSpec build_mock_spec(const RunConfig& c, const Dataset& ds) {
    if (!c.mock_spec.empty()) return load_mock_spec(c.mock_spec);
    return mock_spec_from_dataset(ds, c.mock_bias, c.mock_noise, c.seed);
}

std::unique_ptr<FirstTokenBackend> build_backend(const RunConfig& c, const Dataset& ds) {
    if (c.backend == "mock") return std::make_unique<MockBackend>(build_mock_spec(c, ds));
    HttpBackendConfig hc;
    hc.endpoint = c.endpoint;
    hc.model = c.model;
    if (const char* key = std::getenv(c.api_key_env.c_str())) hc.api_key = key;
    hc.retry.max_retries = c.retries;
    hc.retry.base_delay = std::chrono::milliseconds(c.retry_base_ms);
    hc.timeout = std::chrono::seconds(c.timeout_s);
    return std::make_unique<HttpCompletionBackend>(std::move(hc));
}

void write_text(const fs::path& path, const std::string& text) {
    fs::create_directories(path.parent_path());
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    f << text;
    if (!f) throw std::runtime_error("cannot write " + path.string());
}

void write_report(const fs::path& dir, const AnalysisReport& r) {
    write_text(dir / (r.kind + ".json"), r.to_json());
    write_text(dir / (r.kind + ".csv"), r.strata_csv());
    write_text(dir / (r.figure + ".csv"), r.figure_csv());
    if (auto pts = r.points_csv(); !pts.empty()) write_text(dir / (r.figure + "_points.csv"), pts);
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

}  // namespace

BackendIdentity configured_identity(const RunConfig& config, const Dataset& ds) {
    BackendIdentity id;
    if (config.backend == "mock") {
        id = MockBackend(build_mock_spec(config, ds)).identity();
    } else {
        id = BackendIdentity{"http", config.model, config.endpoint, ""};
    }
    id.label_style = std::string(to_string(label_style_from_string(config.label_style)));
    return id;
}

std::string backend_slug(const BackendIdentity& id) {
    std::string slug;
    for (char c : id.model) {
        bool keep = std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_' || c == '.';
        slug.push_back(keep ? c : '_');
    }
    return slug.empty() ? "backend" : slug;
}

int cmd_probe(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        config.validate();
        Dataset ds = load_dataset(config.dataset);
        auto backend = build_backend(config, ds);

        ProbeOptions opts;
        opts.phrasings = phrasings_of(config);
        opts.label_style = label_style_from_string(config.label_style);
        opts.top_k = config.top_k;
        opts.concurrency = config.concurrency;
        opts.cache_path = config.cache;
        opts.error_log_path = config.error_log;
        if (config.backend == "mock") {
            opts.clock = [] { return std::string(kMockTimestamp); };
        }
        std::size_t last_reported = 0;
        opts.progress = [&](std::size_t done, std::size_t total, std::size_t failed) {
            // roughly every 5% plus the final line
            if (done == total || done - last_reported >= std::max<std::size_t>(1, total / 20)) {
                last_reported = done;
                out << "probed " << done << "/" << total << " keys, " << failed << " failed\n";
            }
        };

        ProbeRun run = run_probe(ds, *backend, opts);
        const auto& s = run.summary;
        out << s.new_records << " new probes, " << s.skipped << " cached, " << s.failures.size()
            << " failed (" << s.backend_calls << " backend calls)\n";
        if (!s.complete()) {
            fs::path log = config.error_log.empty() ? fs::path(config.cache.string() + ".errors.jsonl")
                                                    : config.error_log;
            err << "partial: " << s.failures.size() << " keys failed; see " << log.string() << "\n";
            for (const auto& f : s.failures) {
                err << "  " << f.question_id << " phrasing " << f.phrasing_id << ": " << f.message << "\n";
            }
            return kExitPartial;
        }
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

int cmd_analyze(const RunConfig& config, std::ostream& out, std::ostream& err) {
    try {
        config.validate();
        Dataset ds = load_dataset(config.dataset);
        ProbeCache cache = ProbeCache::load(config.cache);
        const BackendIdentity identity = configured_identity(config, ds);
        const VariantSet variants = VariantSet::parse(config.variants);
        const auto phrasings = phrasings_of(config);

        // profiles per phrasing, one per dataset question
        std::vector<std::vector<UncertaintyProfile>> profiles(phrasings.size());
        std::vector<std::string> missing;
        for (std::size_t i = 0; i < phrasings.size(); ++i) {
            int ph = static_cast<int>(phrasings[i]);
            for (const auto& q : ds.questions) {
                if (const auto* probe = cache.find(q.id, ph, identity)) {
                    profiles[i].push_back(build_profile(*probe, q, variants, config.conform_epsilon));
                } else {
                    profiles[i].push_back(missing_profile(q, ph));
                    missing.push_back(q.id + " (phrasing " + std::to_string(ph) + ")");
                }
            }
        }
        if (!missing.empty() && !config.allow_partial) {
            err << "error: cache is missing " << missing.size() << " probes:";
            for (const auto& m : missing) err << " " << m;
            err << "\n(re-run probe or pass --allow-partial)\n";
            return kExitError;
        }

        const fs::path root = config.out / "reports" / backend_slug(identity);
        std::ostringstream ledger;
        ledger << "report,phrasing,question_id,reason\n";
        auto emit = [&](const fs::path& dir, const AnalysisReport& r) {
            write_report(dir, r);
            for (const auto& e : r.ledger) {
                ledger << r.kind << "," << csv_escape(r.phrasing) << "," << csv_escape(e.question_id)
                       << "," << csv_escape(e.reason) << "\n";
            }
        };

        const std::array<ModelMetric, 2> metrics = {ModelMetric::FirstToken,
                                                    ModelMetric::OrderSensitivity};
        std::vector<AnalysisInput> inputs;
        for (std::size_t i = 0; i < phrasings.size(); ++i) {
            int ph = static_cast<int>(phrasings[i]);
            AnalysisInput in{ds, profiles[i], identity, ph, config.alpha, kAnalysisTieTolerance};
            inputs.push_back(in);
            const fs::path dir = root / ("phrasing" + std::to_string(ph));

            ProfileProvenance prov{identity, ph, variants, config.conform_epsilon};
            std::string lines;
            for (const auto& p : profiles[i]) lines += profile_to_json_line(p, prov) + "\n";
            write_text(dir / "profiles.jsonl", lines);

            emit(dir, accuracy_table(in));
            emit(dir, entropy_correlation(in));
            emit(dir, chi_squared_rates(in, ModelMetric::FirstToken));
            emit(dir, chi_squared_rates(in, ModelMetric::OrderSensitivity));
            emit(dir, per_choice_correlation(in, metrics, Subset::AllQuestions));
            emit(dir, per_choice_correlation(in, metrics, Subset::CorrectlyAnswered));
            emit(dir, metric_agreement(in));
            emit(dir, order_stability(in));
        }
        if (inputs.size() == 2) {
            emit(root / "comparison", phrasing_comparison(inputs[0], inputs[1]));
        } else {
            out << "phrasing comparison skipped (needs phrasings 1 and 2)\n";
        }
        write_text(root / "ledger.csv", ledger.str());
        out << "reports written to " << root.string() << "\n";
        if (!missing.empty()) out << missing.size() << " probes missing; noted in ledger\n";
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

int cmd_synth(int n, const TypeMix& mix, std::uint64_t seed, const fs::path& out_path,
              std::ostream& out, std::ostream& err) {
    try {
        Dataset ds = synthesize_dataset(n, mix, seed);
        if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
        write_dataset(ds, out_path, out_path.extension() == ".csv" ? DatasetFormat::Csv
                                                                   : DatasetFormat::Jsonl);
        out << "wrote " << ds.size() << " questions to " << out_path.string() << "\n";
        return kExitOk;
    } catch (const std::exception& e) {
        err << "error: " << e.what() << "\n";
        return kExitError;
    }
}

}  // namespace mcqprobe
