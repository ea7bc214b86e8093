#include <algorithm>
#include <cmath>
#include <map>
#include <random>
#include <set>

#include <doctest.h>

#include "mcqprobe/analysis.hpp"
#include "support.hpp"

using namespace mcqprobe;

namespace {

const std::array<ModelMetric, 2> kBothMetrics = {ModelMetric::FirstToken, ModelMetric::OrderSensitivity};
const BackendIdentity kId{"mock", "mock", "test", "A)"};

AnalysisInput input(const Dataset& ds, const std::vector<UncertaintyProfile>& ps, int phrasing = 1) {
    return AnalysisInput{ds, ps, kId, phrasing, kDefaultAlpha, kAnalysisTieTolerance};
}

// Profiles equal to the student rates: probabilities = rates, order frequencies = rates.
std::vector<UncertaintyProfile> rate_profiles(const Dataset& ds) {
    std::vector<UncertaintyProfile> out;
    for (const auto& q : ds.questions) out.push_back(testing::manual_profile(q, *q.student_rates, *q.student_rates));
    return out;
}

double mean_rho(const AnalysisReport& r, std::string_view metric) {
    double sum = 0;
    int n = 0;
    for (const auto& s : r.strata) {
        if (s.qtype == "All" && s.metric == metric && s.correlation) {
            sum += s.correlation->rho;
            ++n;
        }
    }
    return n ? sum / n : std::nan("");
}

std::vector<AnalysisReport> every_report(const AnalysisInput& in) {
    return {accuracy_table(in),
            entropy_correlation(in),
            chi_squared_rates(in, ModelMetric::FirstToken),
            chi_squared_rates(in, ModelMetric::OrderSensitivity),
            per_choice_correlation(in, kBothMetrics, Subset::AllQuestions),
            per_choice_correlation(in, kBothMetrics, Subset::CorrectlyAnswered),
            metric_agreement(in),
            order_stability(in)};
}

}  // namespace

TEST_CASE("accuracy table") {
    auto ds = synthesize_dataset(451, kReferenceTypeMix, 7);
    MockModelSpec onehot;
    for (const auto& q : ds.questions) {
        ChoiceTriple lat{0, 0, 0};
        lat[q.correct_index] = 1;
        onehot.latent.emplace(q.id, lat);
    }
    auto ps = testing::mock_profiles(onehot, ds);
    auto r = accuracy_table(input(ds, ps));
    for (const auto& s : r.strata) {
        REQUIRE(s.rate);
        CHECK(*s.rate == 1.0);
    }
    const auto* all = r.find("All", Subset::AllQuestions);
    REQUIRE(all);
    CHECK(all->n() == 451);
    CHECK(*all->student_rate == doctest::Approx(0.703).epsilon(0.03));
    CHECK(r.figure == "table2");

    // 10 questions, 7 answered correctly
    auto small = synthesize_dataset(10, kReferenceTypeMix, 2);
    std::vector<UncertaintyProfile> mixed;
    for (int i = 0; i < 10; ++i) {
        const auto& q = small.questions[i];
        ChoiceTriple p{0.1, 0.1, 0.1};
        p[i < 7 ? q.correct_index : (q.correct_index + 1) % 3] = 0.8;
        mixed.push_back(testing::manual_profile(q, p, p));
    }
    auto r10 = accuracy_table(input(small, mixed));
    CHECK(*r10.find("All", Subset::AllQuestions)->rate == doctest::Approx(0.7));

    // types absent from the data are reported as absent, not zero
    auto only_wh = synthesize_dataset(12, {0, 0, 1, 0}, 1);
    auto rw = accuracy_table(input(only_wh, rate_profiles(only_wh)));
    CHECK(rw.find("1", Subset::AllQuestions)->status == "omitted");
    CHECK_FALSE(rw.find("1", Subset::AllQuestions)->rate);
}

TEST_CASE("entropy correlation") {
    auto ds = synthesize_dataset(451, kReferenceTypeMix, 7);
    auto same = rate_profiles(ds);
    auto r = entropy_correlation(input(ds, same));
    for (const auto& s : r.strata) {
        if (s.status != "ok") continue;
        CHECK(s.correlation->rho == doctest::Approx(1.0).epsilon(1e-12));
    }
    CHECK(r.find("All", Subset::AllQuestions)->correlation->rho == doctest::Approx(1.0));

    // shuffled model entropies: no association
    auto wh = synthesize_dataset(227, {0, 0, 1, 0}, 3);
    double abs_sum = 0;
    int significant = 0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        auto ps = rate_profiles(wh);
        std::vector<double> ent;
        for (const auto& p : ps) ent.push_back(p.entropy_model);
        std::shuffle(ent.begin(), ent.end(), std::mt19937_64(seed));
        for (std::size_t i = 0; i < ps.size(); ++i) ps[i].entropy_model = ent[i];
        auto rs = entropy_correlation(input(wh, ps));
        const auto* all = rs.find("All", Subset::AllQuestions);
        REQUIRE(all->correlation);
        abs_sum += std::abs(all->correlation->rho);
        significant += all->correlation->significant;
    }
    CHECK(abs_sum / 20 < 0.2);
    CHECK(significant <= 5);

    // a two-question stratum is omitted
    auto tiny = synthesize_dataset(2, kReferenceTypeMix, 1);
    auto rt = entropy_correlation(input(tiny, rate_profiles(tiny)));
    CHECK(rt.find("All", Subset::AllQuestions)->status == "omitted");
    CHECK(rt.find("All", Subset::AllQuestions)->reason == "n < 3");
}

TEST_CASE("chi-squared rates") {
    auto ds = synthesize_dataset(120, kReferenceTypeMix, 9);
    auto r = chi_squared_rates(input(ds, rate_profiles(ds)), ModelMetric::FirstToken);
    CHECK(r.partition_holds());
    CHECK(r.ledger.empty());
    for (const auto& s : r.strata) {
        if (s.mean_statistic) CHECK(*s.mean_statistic < 1e-9);
    }
    CHECK(r.convention.find("observed") != std::string::npos);

    // a zero student rate is filtered into the ledger
    ds.questions[4].student_rates = ChoiceTriple{0.8, 0.2, 0.0};
    auto filtered = chi_squared_rates(input(ds, rate_profiles(ds)), ModelMetric::OrderSensitivity);
    REQUIRE(filtered.ledger.size() == 1);
    CHECK(filtered.ledger[0].question_id == ds.questions[4].id);
    CHECK(filtered.ledger[0].reason == "zero student rate");
    CHECK(filtered.included.size() == 119);
    CHECK(filtered.kind == "chi_squared_order_sensitivity");

    // N = 100, observed (70,20,10) against a uniform model
    Dataset one;
    one.questions = {testing::make_question("u", {0.7, 0.2, 0.1})};
    one.questions[0].examinee_count = 100;
    const double third = 1.0 / 3;
    std::vector<UncertaintyProfile> flat{testing::manual_profile(one.questions[0], {third, third, third},
                                                                  {third, third, third})};
    auto ru = chi_squared_rates(input(one, flat), ModelMetric::FirstToken);
    REQUIRE(ru.questions.size() == 1);
    CHECK(ru.questions[0].values[0].second == doctest::Approx(62.0).epsilon(1e-12));
}

TEST_CASE("per-choice correlation") {
    auto ds = synthesize_dataset(451, kReferenceTypeMix, 7);
    auto r = per_choice_correlation(input(ds, rate_profiles(ds)), kBothMetrics, Subset::AllQuestions);
    int checked = 0;
    for (const auto& s : r.strata) {
        REQUIRE(s.correlation);
        CHECK(s.correlation->rho == doctest::Approx(1.0).epsilon(1e-12));
        ++checked;
    }
    CHECK(checked == 2 * 3 * 5);
    CHECK(r.figure == "fig5");
    CHECK_FALSE(r.points.empty());

    // squaring keeps every role's ranking
    std::vector<UncertaintyProfile> squared;
    for (const auto& q : ds.questions) {
        ChoiceTriple sq;
        for (int c = 0; c < 3; ++c) sq[c] = (*q.student_rates)[c] * (*q.student_rates)[c];
        squared.push_back(testing::manual_profile(q, sq, sq));
    }
    auto rs = per_choice_correlation(input(ds, squared), kBothMetrics, Subset::AllQuestions);
    for (const auto& s : rs.strata) CHECK(s.correlation->rho == doctest::Approx(1.0).epsilon(1e-12));

    auto correct = per_choice_correlation(input(ds, rate_profiles(ds)), kBothMetrics, Subset::CorrectlyAnswered);
    CHECK(correct.figure == "fig6");
    CHECK(correct.partition_holds());
    for (const auto& e : correct.ledger) CHECK(e.reason == "outside subset");
}

TEST_CASE("per-choice correlation decreases with mock noise") {
    std::map<double, double> mean_by_sigma;
    for (double sigma : {0.0, 0.1, 0.3}) {
        double total = 0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            auto ds = synthesize_dataset(120, kReferenceTypeMix, 100 + seed);
            auto spec = mock_spec_from_dataset(ds, {1, 1, 1}, sigma, seed);
            auto ps = testing::mock_profiles(spec, ds);
            std::array<ModelMetric, 1> ft{ModelMetric::FirstToken};
            total += mean_rho(per_choice_correlation(input(ds, ps), ft, Subset::AllQuestions), "FirstToken");
        }
        mean_by_sigma[sigma] = total / 20;
    }
    CHECK(mean_by_sigma[0.0] == doctest::Approx(1.0));
    CHECK(mean_by_sigma[0.1] < mean_by_sigma[0.0]);
    CHECK(mean_by_sigma[0.3] < mean_by_sigma[0.1]);
    CHECK(mean_by_sigma[0.3] > 0.0);
}

TEST_CASE("metric agreement") {
    // identical underlying values: frequencies in sixths used as probabilities too
    auto ds = synthesize_dataset(60, kReferenceTypeMix, 12);
    std::vector<UncertaintyProfile> same;
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> split(0, 6);
    for (const auto& q : ds.questions) {
        int a = split(rng), b = split(rng);
        if (a > b) std::swap(a, b);
        ChoiceTriple f{a / 6.0, (b - a) / 6.0, (6 - b) / 6.0};
        same.push_back(testing::manual_profile(q, f, f));
    }
    auto r = metric_agreement(input(ds, same));
    for (ChoiceRole role : kAllRoles) {
        const auto* s = r.find("All", Subset::AllQuestions, "FirstToken~OrderSensitivity", to_string(role));
        REQUIRE(s);
        REQUIRE(s->correlation);
        CHECK(s->correlation->rho == doctest::Approx(1.0).epsilon(1e-12));
    }

    // constant order sensitivity: every question stable on its correct answer
    std::vector<UncertaintyProfile> constant;
    for (const auto& q : ds.questions) {
        ChoiceTriple f{0, 0, 0};
        f[q.correct_index] = 1;
        constant.push_back(testing::manual_profile(q, *q.student_rates, f));
    }
    auto rc = metric_agreement(input(ds, constant));
    const auto* zero = rc.find("All", Subset::AllQuestions, "FirstToken~OrderSensitivity", "CorrectAnswer");
    CHECK(zero->status == "error");
    CHECK(zero->reason.find("zero variance") != std::string::npos);

    // unbiased mock with small noise: strong positive agreement on the correct answer
    double total = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto d = synthesize_dataset(100, kReferenceTypeMix, seed);
        auto spec = mock_spec_from_dataset(d, {1, 1, 1}, 0.05, seed);
        std::mt19937_64 g(seed);
        std::gamma_distribution<double> gam(1.0);
        for (auto& [id, lat] : spec.latent) {
            lat = {gam(g), gam(g), gam(g)};
            double s = lat[0] + lat[1] + lat[2];
            for (auto& v : lat) v /= s;
        }
        auto rm = metric_agreement(input(d, testing::mock_profiles(spec, d)));
        const auto* s = rm.find("All", Subset::AllQuestions, "FirstToken~OrderSensitivity", "CorrectAnswer");
        REQUIRE(s->correlation);
        CHECK(s->correlation->significant);
        total += s->correlation->rho;
    }
    CHECK(total / 10 > 0.75);
}

TEST_CASE("order stability") {
    auto ds = synthesize_dataset(200, kReferenceTypeMix, 21);
    auto clean = mock_spec_from_dataset(ds, {1, 1, 1}, 0.0, 0);
    for (auto& [id, lat] : clean.latent) {
        // distinct offsets break exact ties so the argmax is unique
        lat = {(lat[0] + 0.003) / 1.006, (lat[1] + 0.002) / 1.006, (lat[2] + 0.001) / 1.006};
    }
    auto r = order_stability(input(ds, testing::mock_profiles(clean, ds)));
    for (const auto& s : r.strata) {
        if (s.rate) CHECK(*s.rate == 1.0);
    }

    MockModelSpec flat;
    flat.bias = {5, 1, 1};
    for (const auto& q : ds.questions) flat.latent.emplace(q.id, ChoiceTriple{0.34, 0.33, 0.33});
    auto rf = order_stability(input(ds, testing::mock_profiles(flat, ds)));
    CHECK(*rf.find("All", Subset::AllQuestions)->rate == 0.0);

    // peaked latents on the correct answer for half the questions, flat for the rest
    MockModelSpec mixed;
    mixed.bias = {2, 1, 1};
    for (std::size_t i = 0; i < ds.questions.size(); ++i) {
        const auto& q = ds.questions[i];
        ChoiceTriple lat{0.05, 0.05, 0.05};
        if (i % 2 == 0) lat[q.correct_index] = 0.9;
        else lat = {1.0 / 3, 1.0 / 3, 1.0 / 3};
        mixed.latent.emplace(q.id, lat);
    }
    auto rm = order_stability(input(ds, testing::mock_profiles(mixed, ds)));
    double correct = *rm.find("All", Subset::CorrectlyAnswered)->rate;
    double incorrect = *rm.find("All", Subset::IncorrectlyAnswered)->rate;
    CHECK(correct > incorrect);
    CHECK(rm.figure == "table6");
}

TEST_CASE("phrasing comparison") {
    auto ds = synthesize_dataset(150, kReferenceTypeMix, 8);
    auto spec = mock_spec_from_dataset(ds, {1, 1, 1}, 0.05, 4);
    auto p1 = testing::mock_profiles(spec, ds, 1);
    auto same = p1;
    for (auto& p : same) p.phrasing_id = 2;
    auto r = phrasing_comparison(input(ds, p1, 1), input(ds, same, 2));
    CHECK(r.partition_holds());
    for (const auto& row : r.questions) {
        for (const auto& [k, v] : row.values) CHECK(v == 0.0);
    }
    for (const auto& s : r.strata) {
        if (s.phrasing != "1") continue;
        const auto* o = r.find(s.qtype, s.subset, s.metric, s.role, "2");
        REQUIRE(o);
        CHECK(s.correlation.has_value() == o->correlation.has_value());
        if (s.correlation) CHECK(s.correlation->rho == o->correlation->rho);
    }

    // a noisier second phrasing correlates less on average
    double diff = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        auto d = synthesize_dataset(150, kReferenceTypeMix, 50 + seed);
        auto s1 = mock_spec_from_dataset(d, {1, 1, 1}, 0.05, seed);
        auto s2 = mock_spec_from_dataset(d, {1, 1, 1}, 0.4, seed);
        auto a = testing::mock_profiles(s1, d, 1);
        auto b = testing::mock_profiles(s2, d, 2);
        auto rc = phrasing_comparison(input(d, a, 1), input(d, b, 2));
        double one = 0, two = 0;
        for (const auto& s : rc.strata) {
            if (s.qtype != "All" || s.metric != "FirstToken" || !s.correlation) continue;
            (s.phrasing == "1" ? one : two) += s.correlation->rho;
        }
        diff += one - two;
    }
    CHECK(diff > 0);

    std::vector<UncertaintyProfile> partial(same.begin() + 3, same.end());
    try {
        phrasing_comparison(input(ds, p1, 1), input(ds, partial, 2));
        FAIL("expected invalid_argument");
    } catch (const std::invalid_argument& e) {
        std::string msg = e.what();
        CHECK(msg.find("missing 3") != std::string::npos);
        for (int i = 0; i < 3; ++i) CHECK(msg.find(ds.questions[i].id) != std::string::npos);
    }
}

TEST_CASE("partition and subset invariants hold for every report") {
    auto ds = synthesize_dataset(200, kReferenceTypeMix, 77);
    ds.questions[0].student_rates = ChoiceTriple{0.7, 0.3, 0.0};
    auto spec = mock_spec_from_dataset(ds, {2, 1, 0.7}, 0.3, 5);
    auto ps = testing::mock_profiles(spec, ds);
    ps[5] = missing_profile(ds.questions[5], 1);
    ps.erase(ps.begin() + 9);  // absent entirely
    auto in = input(ds, ps);

    for (const auto& r : every_report(in)) {
        INFO(r.kind);
        CHECK(r.partition_holds());
        std::set<std::string> seen(r.included.begin(), r.included.end());
        for (const auto& e : r.ledger) CHECK(seen.insert(e.question_id).second);
        CHECK(seen.size() == ds.size());

        for (const auto& s : r.strata) {
            if (s.subset != Subset::AllQuestions) continue;
            const auto* c = r.find(s.qtype, Subset::CorrectlyAnswered, s.metric, s.role, s.phrasing);
            const auto* w = r.find(s.qtype, Subset::IncorrectlyAnswered, s.metric, s.role, s.phrasing);
            if (!c || !w) continue;
            std::multiset<std::string> joined(c->question_ids.begin(), c->question_ids.end());
            joined.insert(w->question_ids.begin(), w->question_ids.end());
            CHECK(joined == std::multiset<std::string>(s.question_ids.begin(), s.question_ids.end()));
        }
    }
}

TEST_CASE("reports are deterministic") {
    auto ds = synthesize_dataset(100, kReferenceTypeMix, 3);
    auto spec = mock_spec_from_dataset(ds, {1.5, 1, 1}, 0.2, 9);
    auto a = every_report(input(ds, testing::mock_profiles(spec, ds)));
    auto b = every_report(input(ds, testing::mock_profiles(spec, ds)));
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].to_json() == b[i].to_json());
        CHECK(a[i].figure_csv() == b[i].figure_csv());
        CHECK(a[i].strata_csv() == b[i].strata_csv());
    }
}
