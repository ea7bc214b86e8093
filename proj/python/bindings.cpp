#include <sstream>

#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "mcqprobe/analysis.hpp"
#include "mcqprobe/cli.hpp"
#include "mcqprobe/errors.hpp"
#include "mcqprobe/probe.hpp"
#include "mcqprobe/stats.hpp"
#include "mcqprobe/uncertainty.hpp"

namespace py = pybind11;
using namespace mcqprobe;

#define STRINGIFY(x) #x
#define MACRO_STRINGIFY(x) STRINGIFY(x)

namespace {

RunConfig config_from(const py::dict& kw) {
    RunConfig c;
    for (auto [k, v] : kw) {
        auto key = k.cast<std::string>();
        if (key == "dataset") c.dataset = v.cast<std::string>();
        else if (key == "backend") c.backend = v.cast<std::string>();
        else if (key == "endpoint") c.endpoint = v.cast<std::string>();
        else if (key == "model") c.model = v.cast<std::string>();
        else if (key == "phrasings") c.phrasings = v.cast<std::vector<int>>();
        else if (key == "label_style") c.label_style = v.cast<std::string>();
        else if (key == "variants") c.variants = v.cast<std::string>();
        else if (key == "concurrency") c.concurrency = v.cast<int>();
        else if (key == "top_k") c.top_k = v.cast<int>();
        else if (key == "cache") c.cache = v.cast<std::string>();
        else if (key == "error_log") c.error_log = v.cast<std::string>();
        else if (key == "out") c.out = v.cast<std::string>();
        else if (key == "alpha") c.alpha = v.cast<double>();
        else if (key == "conform_epsilon") c.conform_epsilon = v.cast<double>();
        else if (key == "allow_partial") c.allow_partial = v.cast<bool>();
        else if (key == "seed") c.seed = v.cast<std::uint64_t>();
        else if (key == "mock_spec") c.mock_spec = v.cast<std::string>();
        else if (key == "mock_bias") c.mock_bias = v.cast<std::array<double, 3>>();
        else if (key == "mock_noise") c.mock_noise = v.cast<double>();
        else if (key == "retries") c.retries = v.cast<int>();
        else if (key == "retry_base_ms") c.retry_base_ms = v.cast<int>();
        else if (key == "timeout_s") c.timeout_s = v.cast<int>();
        else throw py::type_error("unknown option: " + key);
    }
    return c;
}

template <typename F>
py::tuple run_command(F&& f) {
    std::ostringstream out, err;
    int code;
    {
        py::gil_scoped_release release;
        code = f(out, err);
    }
    return py::make_tuple(code, out.str(), err.str());
}

std::vector<UncertaintyProfile> mock_profiles(const Dataset& ds, const MockModelSpec& spec, int phrasing) {
    MockBackend backend(spec);
    std::vector<UncertaintyProfile> out;
    out.reserve(ds.size());
    for (const auto& q : ds.questions) {
        auto probe = probe_question(q, backend, phrasing_from_int(phrasing), LabelStyle::Paren, kDefaultTopK,
                                    std::string(kMockTimestamp));
        out.push_back(build_profile(probe, q));
    }
    return out;
}

AnalysisInput analysis_input(const Dataset& ds, const std::vector<UncertaintyProfile>& ps, int phrasing,
                             double alpha) {
    return AnalysisInput{ds, ps, BackendIdentity{"python", "profiles", "", "A)"}, phrasing, alpha,
                         kAnalysisTieTolerance};
}

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "LLM choice uncertainty vs. student response distributions";

    py::register_exception<ParseError>(m, "ParseError", PyExc_ValueError);
    py::register_exception<ValidationError>(m, "ValidationError", PyExc_ValueError);
    py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);
    py::register_exception<StatsError>(m, "StatsError", PyExc_ValueError);
    py::register_exception<BackendError>(m, "BackendError", PyExc_RuntimeError);

    py::class_<Question>(m, "Question")
        .def_readonly("id", &Question::id)
        .def_readonly("stem", &Question::stem)
        .def_readonly("choices", &Question::choices)
        .def_readonly("correct_index", &Question::correct_index)
        .def_readonly("student_rates", &Question::student_rates)
        .def_readonly("examinee_count", &Question::examinee_count)
        .def_property_readonly("qtype", [](const Question& q) { return static_cast<int>(effective_type(q)); });

    py::class_<Dataset>(m, "Dataset")
        .def_readonly("questions", &Dataset::questions)
        .def("__len__", &Dataset::size)
        .def("to_jsonl", &dataset_to_jsonl)
        .def("to_csv", &dataset_to_csv);

    m.def("load_dataset", py::overload_cast<const std::filesystem::path&>(&load_dataset), py::arg("path"));
    m.def("synthesize_dataset", &synthesize_dataset, py::arg("n"), py::arg("mix") = kReferenceTypeMix,
          py::arg("seed") = 0);
    m.def("classify_question_type",
          [](std::string_view stem) { return static_cast<int>(classify_question_type(stem).type); });

    py::class_<CorrelationResult>(m, "CorrelationResult")
        .def_readonly("rho", &CorrelationResult::rho)
        .def_readonly("p_value", &CorrelationResult::p_value)
        .def_readonly("n", &CorrelationResult::n)
        .def_readonly("significant", &CorrelationResult::significant)
        .def_readonly("exact_p", &CorrelationResult::exact_p);

    py::class_<ChiSquaredResult>(m, "ChiSquaredResult")
        .def_readonly("statistic", &ChiSquaredResult::statistic)
        .def_readonly("df", &ChiSquaredResult::df)
        .def_readonly("p_value", &ChiSquaredResult::p_value)
        .def_readonly("significant", &ChiSquaredResult::significant)
        .def_readonly("clamped", &ChiSquaredResult::clamped);

    m.def("entropy", [](const std::vector<double>& p) { return entropy(p); }, py::arg("probs"));
    m.def(
        "spearman",
        [](const std::vector<double>& x, const std::vector<double>& y, double alpha, double tol) {
            return spearman(x, y, alpha, tol);
        },
        py::arg("x"), py::arg("y"), py::arg("alpha") = kDefaultAlpha, py::arg("tie_tolerance") = 0.0);
    m.def(
        "chi_squared_gof",
        [](const std::vector<long>& observed, const std::vector<double>& expected, double alpha) {
            return chi_squared_gof(observed, expected, alpha);
        },
        py::arg("observed"), py::arg("expected"), py::arg("alpha") = kDefaultAlpha);
    m.def("chi2_survival", &chi2_survival, py::arg("x"), py::arg("df") = 2);
    m.def(
        "counts_from_proportions",
        [](const std::vector<double>& p, long total) { return counts_from_proportions(p, total); },
        py::arg("proportions"), py::arg("total"));

    py::class_<MockModelSpec>(m, "MockModelSpec")
        .def_readwrite("bias", &MockModelSpec::bias)
        .def_readwrite("noise", &MockModelSpec::noise)
        .def_readwrite("non_letter_mass", &MockModelSpec::non_letter_mass)
        .def_property(
            "latent", [](const MockModelSpec& s) { return std::map<std::string, ChoiceTriple>(s.latent.begin(), s.latent.end()); },
            [](MockModelSpec& s, const std::map<std::string, ChoiceTriple>& v) {
                s.latent = {v.begin(), v.end()};
            });
    m.def("mock_spec_from_dataset", &mock_spec_from_dataset, py::arg("dataset"),
          py::arg("bias") = std::array<double, 3>{1, 1, 1}, py::arg("noise") = 0.0, py::arg("seed") = 0);

    py::class_<UncertaintyProfile>(m, "UncertaintyProfile")
        .def_readonly("question_id", &UncertaintyProfile::question_id)
        .def_readonly("phrasing_id", &UncertaintyProfile::phrasing_id)
        .def_property_readonly("choice_probs", [](const UncertaintyProfile& p) { return p.choice_probs.values; })
        .def_property_readonly("conforming", [](const UncertaintyProfile& p) { return p.choice_probs.conforming; })
        .def_property_readonly("order_frequencies",
                               [](const UncertaintyProfile& p) { return p.order_sens.frequencies; })
        .def_property_readonly("stable", [](const UncertaintyProfile& p) { return p.order_sens.stable; })
        .def_readonly("entropy", &UncertaintyProfile::entropy_model)
        .def_readonly("model_choice", &UncertaintyProfile::model_choice)
        .def_readonly("is_correct", &UncertaintyProfile::is_correct)
        .def_readonly("excluded", &UncertaintyProfile::excluded);

    m.def("mock_profiles", &mock_profiles, py::arg("dataset"), py::arg("spec"), py::arg("phrasing") = 1,
          "Probe every question with the mock model and build its uncertainty profile.");

    m.def(
        "analysis_reports",
        [](const Dataset& ds, const std::vector<UncertaintyProfile>& ps, int phrasing, double alpha) {
            auto in = analysis_input(ds, ps, phrasing, alpha);
            const std::array<ModelMetric, 2> both{ModelMetric::FirstToken, ModelMetric::OrderSensitivity};
            std::map<std::string, std::string> out;
            for (const auto& r : {accuracy_table(in), entropy_correlation(in),
                                  chi_squared_rates(in, ModelMetric::FirstToken),
                                  chi_squared_rates(in, ModelMetric::OrderSensitivity),
                                  per_choice_correlation(in, both, Subset::AllQuestions),
                                  per_choice_correlation(in, both, Subset::CorrectlyAnswered),
                                  metric_agreement(in), order_stability(in)}) {
                out[r.kind] = r.to_json();
            }
            return out;
        },
        py::arg("dataset"), py::arg("profiles"), py::arg("phrasing") = 1, py::arg("alpha") = kDefaultAlpha,
        "Single-phrasing reports as JSON text keyed by report kind.");
    m.def(
        "phrasing_comparison",
        [](const Dataset& ds, const std::vector<UncertaintyProfile>& p1, const std::vector<UncertaintyProfile>& p2,
           double alpha) {
            return phrasing_comparison(analysis_input(ds, p1, 1, alpha), analysis_input(ds, p2, 2, alpha)).to_json();
        },
        py::arg("dataset"), py::arg("phrasing1"), py::arg("phrasing2"), py::arg("alpha") = kDefaultAlpha);

    m.def(
        "synth",
        [](int n, const TypeMix& mix, std::uint64_t seed, const std::string& out) {
            return run_command([&](auto& o, auto& e) { return cmd_synth(n, mix, seed, out, o, e); });
        },
        py::arg("n"), py::arg("mix") = kReferenceTypeMix, py::arg("seed") = 0, py::arg("out"));
    m.def(
        "probe",
        [](const py::kwargs& kw) {
            auto cfg = config_from(kw);
            return run_command([&](auto& o, auto& e) { return cmd_probe(cfg, o, e); });
        },
        "Fill the probe cache; returns (exit_code, stdout, stderr).");
    m.def(
        "analyze",
        [](const py::kwargs& kw) {
            auto cfg = config_from(kw);
            return run_command([&](auto& o, auto& e) { return cmd_analyze(cfg, o, e); });
        },
        "Write profiles and reports; returns (exit_code, stdout, stderr).");
    m.def("report_kinds", &report_kinds);

#ifdef VERSION_INFO
    m.attr("__version__") = MACRO_STRINGIFY(VERSION_INFO);
#else
    m.attr("__version__") = "dev";
#endif
}
