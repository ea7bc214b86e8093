#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "mcqprobe/backend.hpp"
#include "mcqprobe/dataset.hpp"
#include "mcqprobe/stats.hpp"
#include "mcqprobe/uncertainty.hpp"

namespace mcqprobe {

enum class Subset { AllQuestions, CorrectlyAnswered, IncorrectlyAnswered };
enum class ModelMetric { FirstToken, OrderSensitivity };

std::string_view to_string(Subset s);
std::string_view to_string(ModelMetric m);

/// Values closer than this are treated as tied when ranking model-side metrics, so
/// rounding noise from averaging cannot break a tie that exists in the student data.
inline constexpr double kAnalysisTieTolerance = 1e-12;

/// Observed = student counts at N = examinee_count, expected = model distribution.
inline constexpr std::string_view kChiSquaredConvention =
    "observed: student counts reconstructed as round(rate * examinee_count) with "
    "largest-remainder correction; expected: model distribution";

struct LedgerEntry {
    std::string question_id;
    std::string reason;
};

struct StratumResult {
    std::string qtype = "All";  // "All" or "1".."4"
    Subset subset = Subset::AllQuestions;
    std::string metric;    // empty when the report has a single measure
    std::string role;      // CorrectAnswer / Distractor1 / Distractor2 for per-choice reports
    std::string phrasing;  // phrasing comparison only
    std::vector<std::string> question_ids;
    std::string status = "ok";  // ok | omitted | error
    std::string reason;

    std::optional<CorrelationResult> correlation;
    std::optional<double> mean_statistic;
    std::optional<double> fraction_significant;
    std::optional<double> rate;          // accuracy or stability
    std::optional<double> student_rate;  // mean student correct rate

    std::size_t n() const noexcept { return question_ids.size(); }
};

struct PlotPoint {
    std::string question_id;
    double x = 0.0;
    double y = 0.0;
    std::string stratum;
    bool significant = false;
};

struct QuestionRow {
    std::string question_id;
    std::vector<std::pair<std::string, double>> values;
};

struct AnalysisReport {
    std::string kind;
    std::string figure;  // name of the flat table mirroring the published figure/table
    BackendIdentity backend;
    std::string phrasing;
    double alpha = kDefaultAlpha;
    std::string convention;
    std::size_t dataset_size = 0;
    std::vector<std::string> included;
    std::vector<LedgerEntry> ledger;
    std::vector<StratumResult> strata;
    std::vector<QuestionRow> questions;
    std::vector<PlotPoint> points;

    const StratumResult* find(std::string_view qtype, Subset subset, std::string_view metric = {},
                              std::string_view role = {}, std::string_view phrasing = {}) const;
    bool partition_holds() const noexcept { return included.size() + ledger.size() == dataset_size; }

    std::string to_json() const;
    /// One row per stratum.
    std::string strata_csv() const;
    /// Columns chosen to mirror the published table or figure.
    std::string figure_csv() const;
    /// x, y, stratum, significance; empty when the report has no scatter data.
    std::string points_csv() const;
};

struct AnalysisInput {
    const Dataset& dataset;
    /// One profile per dataset question (excluded ones included).
    std::span<const UncertaintyProfile> profiles;
    BackendIdentity backend;
    int phrasing_id = 1;
    double alpha = kDefaultAlpha;
    double tie_tolerance = kAnalysisTieTolerance;
};

AnalysisReport accuracy_table(const AnalysisInput& in);
AnalysisReport entropy_correlation(const AnalysisInput& in);
AnalysisReport chi_squared_rates(const AnalysisInput& in, ModelMetric metric);
AnalysisReport per_choice_correlation(const AnalysisInput& in, std::span<const ModelMetric> metrics,
                                      Subset subset);
AnalysisReport metric_agreement(const AnalysisInput& in);
AnalysisReport order_stability(const AnalysisInput& in);
/// Throws std::invalid_argument naming every question missing from either side.
AnalysisReport phrasing_comparison(const AnalysisInput& phrasing1, const AnalysisInput& phrasing2);

/// Model-side value of `metric` for original choice `choice`.
double metric_value(const UncertaintyProfile& p, ModelMetric metric, int choice);

}  // namespace mcqprobe
