// Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any failure.
#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>

#include "mcqprobe/analysis.hpp"
#include "mcqprobe/cli.hpp"
#include "mcqprobe/stats.hpp"
#include "mcqprobe/uncertainty.hpp"
#include "support.hpp"

using namespace mcqprobe;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

const BackendIdentity kId{"mock", "mock", "acceptance", "A)"};
const std::array<ModelMetric, 2> kBothMetrics = {ModelMetric::FirstToken, ModelMetric::OrderSensitivity};
const std::array<ModelMetric, 1> kFirstToken = {ModelMetric::FirstToken};

AnalysisInput input(const Dataset& ds, const std::vector<UncertaintyProfile>& ps, int phrasing = 1) {
    return AnalysisInput{ds, ps, kId, phrasing, kDefaultAlpha, kAnalysisTieTolerance};
}

std::string fmt(double v) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.3g", v);
    return buf;
}

// independent oracles -------------------------------------------------------

std::vector<double> oracle_ranks(const std::vector<double>& v) {
    std::vector<double> r(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        double less = 0, equal = 0;
        for (double w : v) {
            if (w < v[i]) less += 1;
            else if (w == v[i]) equal += 1;
        }
        r[i] = less + (equal + 1) / 2;
    }
    return r;
}

double oracle_spearman(const std::vector<double>& x, const std::vector<double>& y) {
    auto rx = oracle_ranks(x), ry = oracle_ranks(y);
    double n = static_cast<double>(x.size());
    double mx = std::accumulate(rx.begin(), rx.end(), 0.0) / n;
    double my = std::accumulate(ry.begin(), ry.end(), 0.0) / n;
    double sxy = 0, sxx = 0, syy = 0;
    for (std::size_t i = 0; i < rx.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

double oracle_chi2(const std::vector<long>& obs, const std::vector<double>& expected_props) {
    double total = 0;
    for (long o : obs) total += static_cast<double>(o);
    double s = 0;
    for (std::size_t i = 0; i < obs.size(); ++i) {
        double e = total * expected_props[i];
        s += (obs[i] - e) * (obs[i] - e) / e;
    }
    return s;
}

double oracle_entropy(const std::vector<double>& p) {
    double h = 0;
    for (double v : p) {
        if (v > 0) h += v * std::log2(1.0 / v);
    }
    return h * std::log(2.0);
}

// criteria ------------------------------------------------------------------

Outcome permutation_symmetry() {
    auto t0 = Clock::now();
    auto ds = synthesize_dataset(200, kReferenceTypeMix, 11);
    auto spec = mock_spec_from_dataset(ds, {1, 1, 1}, 0.0, 0);
    double worst = 0;
    for (const auto& q : ds.questions) {
        auto p = testing::mock_profile(spec, q);
        const auto& lat = spec.latent.at(q.id);
        for (int c = 0; c < 3; ++c) worst = std::max(worst, std::abs(p.choice_probs.values[c] - lat[c]));
    }
    double secs = seconds_since(t0);
    return {worst < 1e-9 && secs < 5.0, "max deviation " + fmt(worst) + ", " + fmt(secs) + " s"};
}

Outcome bias_neutralization() {
    auto ds = synthesize_dataset(50, kReferenceTypeMix, 12);
    MockModelSpec spec;
    spec.bias = {3, 1, 1};
    for (const auto& q : ds.questions) spec.latent.emplace(q.id, ChoiceTriple{1.0 / 3, 1.0 / 3, 1.0 / 3});
    double worst = 0;
    for (const auto& q : ds.questions) {
        auto p = testing::mock_profile(spec, q);
        for (double v : p.choice_probs.values) worst = std::max(worst, std::abs(v - 1.0 / 3));
    }
    return {worst < 1e-9, "max deviation from 1/3 " + fmt(worst)};
}

Outcome bias_detection() {
    auto ds = synthesize_dataset(300, kReferenceTypeMix, 13);
    MockModelSpec spec;
    spec.bias = {2, 1, 1};
    for (std::size_t i = 0; i < ds.questions.size(); ++i) {
        const auto& q = ds.questions[i];
        ChoiceTriple lat{1.0 / 3, 1.0 / 3, 1.0 / 3};
        if (i % 2 == 0) {
            lat = {0.05, 0.05, 0.05};
            lat[q.correct_index] = 0.9;
        }
        spec.latent.emplace(q.id, lat);
    }
    auto r = order_stability(input(ds, testing::mock_profiles(spec, ds)));
    const auto* c = r.find("All", Subset::CorrectlyAnswered);
    const auto* w = r.find("All", Subset::IncorrectlyAnswered);
    if (!c || !w || !c->rate || !w->rate) return {false, "stability strata missing"};
    double gap = *c->rate - *w->rate;
    return {gap > 0.3, "stability correct " + fmt(*c->rate) + ", incorrect " + fmt(*w->rate) +
                           ", gap " + fmt(gap)};
}

Outcome statistics_oracles() {
    std::mt19937_64 rng(404);
    double worst_rho = 0, worst_chi = 0, worst_surv = 0;
    for (int t = 0; t < 100; ++t) {
        int n = std::uniform_int_distribution<int>(3, 50)(rng);
        std::uniform_int_distribution<int> coarse(0, 6);  // few levels so ties are common
        std::vector<double> x(n), y(n);
        for (int i = 0; i < n; ++i) {
            x[i] = coarse(rng) * 0.5;
            y[i] = coarse(rng) + 0.25 * coarse(rng);
        }
        bool constant = std::adjacent_find(x.begin(), x.end(), std::not_equal_to<>()) == x.end() ||
                        std::adjacent_find(y.begin(), y.end(), std::not_equal_to<>()) == y.end();
        if (constant) x[0] += 100;
        worst_rho = std::max(worst_rho, std::abs(spearman(x, y).rho - oracle_spearman(x, y)));
    }
    for (int t = 0; t < 100; ++t) {
        std::uniform_int_distribution<long> count(0, 200);
        std::uniform_real_distribution<double> w(0.05, 1.0);
        std::vector<long> obs{count(rng), count(rng), count(rng) + 1};
        std::vector<double> props{w(rng), w(rng), w(rng)};
        double s = props[0] + props[1] + props[2];
        for (auto& p : props) p /= s;
        double got = chi_squared_gof(obs, props).statistic;
        worst_chi = std::max(worst_chi, std::abs(got - oracle_chi2(obs, props)));
    }
    for (double x : {0.0, 1.0, 5.991, 20.0}) {
        worst_surv = std::max(worst_surv, std::abs(chi2_survival(x, 2) - std::exp(-x / 2)));
    }
    bool ok = worst_rho < 1e-9 && worst_chi < 1e-9 && worst_surv < 1e-12;
    return {ok, "spearman " + fmt(worst_rho) + ", chi2 " + fmt(worst_chi) + ", survival " + fmt(worst_surv)};
}

Outcome entropy_checks() {
    const double third = 1.0 / 3;
    std::vector<double> uniform{third, third, third};
    std::vector<double> one_hot{0, 1, 0};
    std::vector<double> rates{0.703, 0.209, 0.088};
    double du = std::abs(entropy(uniform) - std::log(3.0));
    double h1 = entropy(one_hot);
    double dr = std::abs(entropy(rates) - oracle_entropy(rates));
    return {du < 1e-12 && h1 == 0.0 && dr < 1e-9,
            "uniform " + fmt(du) + ", one-hot " + fmt(h1) + ", rates " + fmt(dr)};
}

double mean_first_token_rho(const AnalysisReport& r) {
    double sum = 0;
    int n = 0;
    for (const auto& s : r.strata) {
        if (s.qtype == "All" && s.metric == "FirstToken" && s.correlation) {
            sum += s.correlation->rho;
            ++n;
        }
    }
    return n ? sum / n : std::nan("");
}

Outcome correlation_recovery() {
    auto ds = synthesize_dataset(451, kReferenceTypeMix, 14);
    auto ps = testing::mock_profiles(mock_spec_from_dataset(ds, {1, 1, 1}, 0.0, 0), ds);
    auto in = input(ds, ps);
    double worst_rho = 0, worst_chi = 0;
    int strata = 0;
    for (auto subset : {Subset::AllQuestions, Subset::CorrectlyAnswered}) {
        for (const auto& s : per_choice_correlation(in, kFirstToken, subset).strata) {
            if (!s.correlation) continue;
            worst_rho = std::max(worst_rho, std::abs(s.correlation->rho - 1.0));
            ++strata;
        }
    }
    for (const auto& s : chi_squared_rates(in, ModelMetric::FirstToken).strata) {
        if (s.mean_statistic) worst_chi = std::max(worst_chi, *s.mean_statistic);
    }

    std::map<double, double> by_sigma;
    for (double sigma : {0.0, 0.1, 0.3}) {
        double total = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto d = synthesize_dataset(451, kReferenceTypeMix, 1000 + seed);
            auto p = testing::mock_profiles(mock_spec_from_dataset(d, {1, 1, 1}, sigma, seed), d);
            total += mean_first_token_rho(per_choice_correlation(input(d, p), kFirstToken, Subset::AllQuestions));
        }
        by_sigma[sigma] = total / 20;
    }
    bool ok = strata > 0 && worst_rho < 1e-12 && worst_chi < 1e-9 && by_sigma[0.3] > 0 &&
              by_sigma[0.0] > by_sigma[0.1] && by_sigma[0.1] > by_sigma[0.3];
    return {ok, std::to_string(strata) + " strata, max |rho-1| " + fmt(worst_rho) + ", max mean chi2 " +
                    fmt(worst_chi) + ", rho(0/0.1/0.3) " + fmt(by_sigma[0.0]) + "/" + fmt(by_sigma[0.1]) +
                    "/" + fmt(by_sigma[0.3])};
}

Outcome zero_rate_filtering() {
    auto ds = synthesize_dataset(451, kReferenceTypeMix, 15);
    auto spec = mock_spec_from_dataset(ds, {1, 1, 1}, 0.1, 3);
    std::size_t natural = 0;
    for (const auto& q : ds.questions) {
        const auto& r = *q.student_rates;
        if (r[0] == 0 || r[1] == 0 || r[2] == 0) ++natural;
    }
    std::vector<std::string> injected;
    for (std::size_t i = 0; i < 10; ++i) {
        auto& q = ds.questions[i * 40 + 3];
        ChoiceTriple rates{0, 0, 0};
        rates[q.correct_index] = 0.75;
        rates[(q.correct_index + 1) % 3] = 0.25;
        q.student_rates = rates;
        injected.push_back(q.id);
    }
    auto r = chi_squared_rates(input(ds, testing::mock_profiles(spec, ds)), ModelMetric::FirstToken);
    std::vector<std::string> listed;
    for (const auto& e : r.ledger) listed.push_back(e.question_id);
    std::sort(listed.begin(), listed.end());
    std::sort(injected.begin(), injected.end());
    bool ok = natural == 0 && r.included.size() == 441 && listed == injected;
    return {ok, "processed " + std::to_string(r.included.size()) + ", ledger " + std::to_string(listed.size()) +
                    (listed == injected ? " (the injected ids)" : " (ids differ)")};
}

Outcome report_completeness() {
    auto ds = synthesize_dataset(451, kReferenceTypeMix, 16);
    auto spec = mock_spec_from_dataset(ds, {1.5, 1, 0.8}, 0.2, 6);
    ds.questions[7].student_rates = ChoiceTriple{0.6, 0.4, 0.0};
    auto p1 = testing::mock_profiles(spec, ds, 1);
    auto p2 = testing::mock_profiles(spec, ds, 2);
    auto in1 = input(ds, p1, 1);
    auto in2 = input(ds, p2, 2);
    std::vector<AnalysisReport> reports{accuracy_table(in1),
                                        entropy_correlation(in1),
                                        chi_squared_rates(in1, ModelMetric::FirstToken),
                                        chi_squared_rates(in1, ModelMetric::OrderSensitivity),
                                        per_choice_correlation(in1, kBothMetrics, Subset::AllQuestions),
                                        per_choice_correlation(in1, kBothMetrics, Subset::CorrectlyAnswered),
                                        metric_agreement(in1),
                                        order_stability(in1),
                                        phrasing_comparison(in1, in2)};
    std::set<std::string> kinds;
    std::string broken;
    for (const auto& r : reports) {
        kinds.insert(r.kind);
        if (!r.partition_holds() || r.included.size() + r.ledger.size() != ds.size()) broken += " " + r.kind;
    }
    std::set<std::string> expected(report_kinds().begin(), report_kinds().end());
    bool ok = kinds == expected && broken.empty();
    return {ok, std::to_string(kinds.size()) + " report kinds" +
                    (broken.empty() ? ", partition holds for all" : ", partition broken:" + broken)};
}

std::map<std::string, std::string> tree_bytes(const fs::path& root) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), root).string()] = testing::slurp(e.path());
    }
    return out;
}

RunConfig pipeline_config(const testing::TempDir& dir) {
    RunConfig cfg;
    cfg.dataset = dir / "questions.jsonl";
    cfg.cache = dir / "probes.jsonl";
    cfg.out = dir / "out";
    cfg.seed = 42;
    cfg.mock_noise = 0.2;
    cfg.mock_bias = {1.5, 1, 1};
    return cfg;
}

// synth + probe + analyze in a fresh directory
bool full_pipeline(const testing::TempDir& dir, std::string& log) {
    std::ostringstream out, err;
    auto cfg = pipeline_config(dir);
    bool ok = cmd_synth(451, kReferenceTypeMix, 42, cfg.dataset, out, err) == kExitOk &&
              cmd_probe(cfg, out, err) == kExitOk && cmd_analyze(cfg, out, err) == kExitOk;
    log = out.str() + err.str();
    return ok;
}

Outcome reproducibility() {
    testing::TempDir a("accept_a"), b("accept_b");
    std::string log_a, log_b;
    if (!full_pipeline(a, log_a) || !full_pipeline(b, log_b)) return {false, "pipeline failed: " + log_a + log_b};
    bool same_cache = testing::slurp(a / "probes.jsonl") == testing::slurp(b / "probes.jsonl");
    auto reports_a = tree_bytes(a / "out");
    bool same_reports = reports_a == tree_bytes(b / "out");

    auto cfg = pipeline_config(a);
    std::ostringstream out, err;
    bool reprobe_ok = cmd_probe(cfg, out, err) == kExitOk;
    bool zero_calls = out.str().find("0 new probes, 902 cached, 0 failed (0 backend calls)") != std::string::npos;
    bool reanalyze_ok = cmd_analyze(cfg, out, err) == kExitOk;
    bool same_after = tree_bytes(a / "out") == reports_a;

    bool ok = same_cache && same_reports && reprobe_ok && zero_calls && reanalyze_ok && same_after &&
              reports_a.size() > 20;
    return {ok, std::string("caches ") + (same_cache ? "identical" : "differ") + ", " +
                    std::to_string(reports_a.size()) + " report files " + (same_reports ? "identical" : "differ") +
                    ", rerun " + (zero_calls ? "made 0 backend calls" : "made backend calls") + ", reports " +
                    (same_after ? "unchanged" : "changed")};
}

Outcome desk_runtime() {
    testing::TempDir dir("accept_time");
    auto t0 = Clock::now();
    std::string log;
    bool ok = full_pipeline(dir, log);
    double secs = seconds_since(t0);
    auto lines = testing::lines_of(testing::slurp(dir / "probes.jsonl"));
    ok = ok && lines.size() == 451 * 2 && secs < 30.0;
    return {ok, std::to_string(lines.size()) + " probes (451 x 6 x 2 prompts) in " + fmt(secs) + " s"};
}

}  // namespace

int main() {
    const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria = {
        {"permutation symmetry", permutation_symmetry},
        {"uniform-latent bias neutralization", bias_neutralization},
        {"bias detection", bias_detection},
        {"statistics oracle equivalence", statistics_oracles},
        {"entropy checks", entropy_checks},
        {"end-to-end correlation recovery", correlation_recovery},
        {"zero-rate filtering", zero_rate_filtering},
        {"report completeness", report_completeness},
        {"reproducibility", reproducibility},
        {"desk-scale runtime", desk_runtime},
    };
    int failures = 0;
    for (std::size_t i = 0; i < criteria.size(); ++i) {
        Outcome o;
        try {
            o = criteria[i].second();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        if (!o.pass) ++failures;
        std::printf("%s %2zu %s: %s\n", o.pass ? "PASS" : "FAIL", i + 1, criteria[i].first.c_str(), o.detail.c_str());
    }
    std::fflush(stdout);
    return failures == 0 ? 0 : 1;
}
