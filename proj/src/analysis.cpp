#include "mcqprobe/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "mcqprobe/errors.hpp"

namespace mcqprobe {

using ordered_json = nlohmann::ordered_json;

std::string_view to_string(Subset s) {
    switch (s) {
        case Subset::AllQuestions: return "AllQuestions";
        case Subset::CorrectlyAnswered: return "CorrectlyAnswered";
        case Subset::IncorrectlyAnswered: return "IncorrectlyAnswered";
    }
    return "?";
}

std::string_view to_string(ModelMetric m) {
    return m == ModelMetric::FirstToken ? "FirstToken" : "OrderSensitivity";
}

double metric_value(const UncertaintyProfile& p, ModelMetric metric, int choice) {
    return metric == ModelMetric::FirstToken ? p.choice_probs.values[choice]
                                             : p.order_sens.frequencies[choice];
}

namespace {

constexpr std::string_view kReasonMissingRates = "missing student rates";
constexpr std::string_view kReasonZeroRate = "zero student rate";
constexpr std::string_view kReasonOutsideSubset = "outside subset";

std::string qtype_label(QuestionType t) { return std::to_string(static_cast<int>(t)); }

const std::array<std::string, 5> kQtypeFilters = {"All", "1", "2", "3", "4"};

bool in_qtype(const Question& q, const std::string& filter) {
    return filter == "All" || qtype_label(effective_type(q)) == filter;
}

bool in_subset(const UncertaintyProfile& p, Subset s) {
    switch (s) {
        case Subset::AllQuestions: return true;
        case Subset::CorrectlyAnswered: return p.is_correct;
        case Subset::IncorrectlyAnswered: return !p.is_correct;
    }
    return false;
}

struct Item {
    const Question* q;
    const UncertaintyProfile* p;
};

/// Splits the dataset into analysable items and ledger entries. `extra` returns a
/// non-empty reason to exclude an otherwise usable question.
template <typename Extra>
std::vector<Item> partition(const AnalysisInput& in, AnalysisReport& report, Extra extra) {
    std::map<std::string_view, const UncertaintyProfile*> by_id;
    for (const auto& p : in.profiles) by_id.emplace(p.question_id, &p);
    report.dataset_size = in.dataset.size();
    std::vector<Item> items;
    for (const auto& q : in.dataset.questions) {
        auto it = by_id.find(q.id);
        std::string reason;
        if (it == by_id.end()) reason = std::string(kReasonMissingProbe);
        else if (it->second->excluded) reason = it->second->exclusion_reason;
        else reason = extra(q, *it->second);
        if (reason.empty()) {
            report.included.push_back(q.id);
            items.push_back({&q, it->second});
        } else {
            report.ledger.push_back({q.id, std::move(reason)});
        }
    }
    return items;
}

std::string no_extra(const Question&, const UncertaintyProfile&) { return {}; }

std::string needs_rates(const Question& q, const UncertaintyProfile&) {
    return q.student_rates ? std::string{} : std::string(kReasonMissingRates);
}

AnalysisReport make_report(const AnalysisInput& in, std::string kind, std::string figure) {
    AnalysisReport r;
    r.kind = std::move(kind);
    r.figure = std::move(figure);
    r.backend = in.backend;
    r.phrasing = std::to_string(in.phrasing_id);
    r.alpha = in.alpha;
    return r;
}

void correlate(StratumResult& s, const std::vector<double>& x, const std::vector<double>& y,
               double alpha, double tie_tolerance) {
    if (x.size() < 3) {
        s.status = "omitted";
        s.reason = "n < 3";
        return;
    }
    try {
        s.correlation = spearman(x, y, alpha, tie_tolerance);
    } catch (const StatsError& e) {
        s.status = "error";
        s.reason = e.what();
    } catch (const std::invalid_argument& e) {
        s.status = "error";
        s.reason = e.what();
    }
}

bool stratum_significant(const AnalysisReport& r, std::string_view qtype, Subset subset,
                         std::string_view metric = {}, std::string_view role = {},
                         std::string_view phrasing = {}) {
    const auto* s = r.find(qtype, subset, metric, role, phrasing);
    return s && s->correlation && s->correlation->significant;
}

// --- formatting ------------------------------------------------------------

std::string num(double v) {
    if (std::isnan(v)) return "";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", v);
    return buf;
}

std::string opt_num(const std::optional<double>& v) { return v ? num(*v) : std::string{}; }

std::string csv_cell(const std::string& s) {
    if (s.find_first_of(",\"\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    return out + "\"";
}

ordered_json json_num(double v) { return std::isfinite(v) ? ordered_json(v) : ordered_json(nullptr); }

ordered_json json_opt(const std::optional<double>& v) { return v ? json_num(*v) : ordered_json(nullptr); }

}  // namespace

const StratumResult* AnalysisReport::find(std::string_view qtype, Subset subset,
                                          std::string_view metric, std::string_view role,
                                          std::string_view phrasing) const {
    for (const auto& s : strata) {
        if (s.qtype == qtype && s.subset == subset && s.metric == metric && s.role == role &&
            s.phrasing == phrasing) {
            return &s;
        }
    }
    return nullptr;
}

std::string AnalysisReport::to_json() const {
    ordered_json j;
    j["kind"] = kind;
    j["backend"] = {{"kind", backend.kind},
                    {"model", backend.model},
                    {"endpoint", backend.endpoint},
                    {"label_style", backend.label_style}};
    j["phrasing"] = phrasing;
    j["alpha"] = alpha;
    if (!convention.empty()) j["convention"] = convention;
    j["dataset_size"] = dataset_size;
    j["included"] = included;
    ordered_json ledger_json = ordered_json::array();
    for (const auto& e : ledger) ledger_json.push_back({{"question_id", e.question_id}, {"reason", e.reason}});
    j["ledger"] = ledger_json;
    ordered_json strata_json = ordered_json::array();
    for (const auto& s : strata) {
        ordered_json sj;
        sj["qtype"] = s.qtype;
        sj["subset"] = to_string(s.subset);
        if (!s.metric.empty()) sj["metric"] = s.metric;
        if (!s.role.empty()) sj["role"] = s.role;
        if (!s.phrasing.empty()) sj["phrasing"] = s.phrasing;
        sj["n"] = s.n();
        sj["status"] = s.status;
        if (!s.reason.empty()) sj["reason"] = s.reason;
        if (s.correlation) {
            sj["rho"] = json_num(s.correlation->rho);
            sj["p_value"] = json_num(s.correlation->p_value);
            sj["significant"] = s.correlation->significant;
            sj["exact_p"] = s.correlation->exact_p;
        }
        if (s.mean_statistic) sj["mean_statistic"] = json_opt(s.mean_statistic);
        if (s.fraction_significant) sj["fraction_significant"] = json_opt(s.fraction_significant);
        if (s.rate) sj["rate"] = json_opt(s.rate);
        if (s.student_rate) sj["student_rate"] = json_opt(s.student_rate);
        sj["question_ids"] = s.question_ids;
        strata_json.push_back(std::move(sj));
    }
    j["strata"] = strata_json;
    ordered_json rows = ordered_json::array();
    for (const auto& row : questions) {
        ordered_json rj;
        rj["question_id"] = row.question_id;
        for (const auto& [k, v] : row.values) rj[k] = json_num(v);
        rows.push_back(std::move(rj));
    }
    j["questions"] = rows;
    return j.dump(2) + "\n";
}

std::string AnalysisReport::strata_csv() const {
    std::ostringstream out;
    out << "qtype,subset,metric,role,phrasing,n,status,reason,rho,p_value,significant,"
           "mean_statistic,fraction_significant,rate,student_rate\n";
    for (const auto& s : strata) {
        out << s.qtype << "," << to_string(s.subset) << "," << s.metric << "," << s.role << ","
            << s.phrasing << "," << s.n() << "," << s.status << "," << csv_cell(s.reason) << ",";
        if (s.correlation) {
            out << num(s.correlation->rho) << "," << num(s.correlation->p_value) << ","
                << (s.correlation->significant ? "true" : "false");
        } else {
            out << ",,";
        }
        out << "," << opt_num(s.mean_statistic) << "," << opt_num(s.fraction_significant) << ","
            << opt_num(s.rate) << "," << opt_num(s.student_rate) << "\n";
    }
    return out.str();
}

std::string AnalysisReport::figure_csv() const {
    std::ostringstream out;
    auto sig = [](const StratumResult& s) {
        return s.correlation ? (s.correlation->significant ? "*" : "") : "";
    };
    auto rho = [](const StratumResult& s) { return s.correlation ? num(s.correlation->rho) : ""; };
    auto pval = [](const StratumResult& s) { return s.correlation ? num(s.correlation->p_value) : ""; };
    if (kind == "accuracy_table") {
        out << "qtype,n,model_accuracy,student_correct_rate\n";
        for (const auto& s : strata) {
            out << s.qtype << "," << s.n() << "," << opt_num(s.rate) << "," << opt_num(s.student_rate) << "\n";
        }
    } else if (kind == "entropy_correlation") {
        out << "qtype,subset,n,rho,p_value,significance\n";
        for (const auto& s : strata) {
            out << s.qtype << "," << to_string(s.subset) << "," << s.n() << "," << rho(s) << ","
                << pval(s) << "," << sig(s) << "\n";
        }
    } else if (kind.rfind("chi_squared", 0) == 0) {
        out << "qtype,subset,n,mean_chi_squared,fraction_significant\n";
        for (const auto& s : strata) {
            out << s.qtype << "," << to_string(s.subset) << "," << s.n() << ","
                << opt_num(s.mean_statistic) << "," << opt_num(s.fraction_significant) << "\n";
        }
    } else if (kind.rfind("per_choice_correlation", 0) == 0 || kind == "metric_agreement") {
        out << "metric,role,qtype,n,rho,p_value,significance\n";
        for (const auto& s : strata) {
            out << s.metric << "," << s.role << "," << s.qtype << "," << s.n() << "," << rho(s)
                << "," << pval(s) << "," << sig(s) << "\n";
        }
    } else if (kind == "order_stability") {
        out << "qtype,subset,n,same_choice_probability\n";
        for (const auto& s : strata) {
            out << s.qtype << "," << to_string(s.subset) << "," << s.n() << "," << opt_num(s.rate) << "\n";
        }
    } else if (kind == "phrasing_comparison") {
        out << "metric,role,qtype,n,phrasing_1_rho,phrasing_1_significance,phrasing_2_rho,"
               "phrasing_2_significance\n";
        for (const auto& s : strata) {
            if (s.phrasing != "1") continue;
            const auto* other = find(s.qtype, s.subset, s.metric, s.role, "2");
            out << s.metric << "," << s.role << "," << s.qtype << "," << s.n() << "," << rho(s)
                << "," << sig(s) << "," << (other ? rho(*other) : "") << ","
                << (other ? sig(*other) : "") << "\n";
        }
    } else {
        return strata_csv();
    }
    return out.str();
}

std::string AnalysisReport::points_csv() const {
    if (points.empty()) return {};
    std::ostringstream out;
    out << "question_id,x,y,stratum,significance\n";
    for (const auto& p : points) {
        out << csv_cell(p.question_id) << "," << num(p.x) << "," << num(p.y) << ","
            << csv_cell(p.stratum) << "," << (p.significant ? "*" : "") << "\n";
    }
    return out.str();
}

// ---------------------------------------------------------------------------

AnalysisReport accuracy_table(const AnalysisInput& in) {
    AnalysisReport r = make_report(in, "accuracy_table", "table2");
    auto items = partition(in, r, no_extra);
    for (const auto& filter : kQtypeFilters) {
        StratumResult s;
        s.qtype = filter;
        std::size_t correct = 0, with_rates = 0;
        double student_sum = 0.0;
        for (const auto& it : items) {
            if (!in_qtype(*it.q, filter)) continue;
            s.question_ids.push_back(it.q->id);
            if (it.p->is_correct) ++correct;
            if (it.q->student_rates) {
                student_sum += (*it.q->student_rates)[it.q->correct_index];
                ++with_rates;
            }
        }
        if (s.question_ids.empty()) {
            s.status = "omitted";
            s.reason = "empty stratum";
        } else {
            s.rate = static_cast<double>(correct) / static_cast<double>(s.n());
            if (with_rates) s.student_rate = student_sum / static_cast<double>(with_rates);
        }
        r.strata.push_back(std::move(s));
    }
    for (const auto& it : items) {
        r.questions.push_back({it.q->id,
                               {{"qtype", static_cast<double>(effective_type(*it.q))},
                                {"model_choice", static_cast<double>(it.p->model_choice)},
                                {"is_correct", it.p->is_correct ? 1.0 : 0.0}}});
    }
    return r;
}

AnalysisReport entropy_correlation(const AnalysisInput& in) {
    AnalysisReport r = make_report(in, "entropy_correlation", "fig3");
    auto items = partition(in, r, needs_rates);
    for (const auto& filter : kQtypeFilters) {
        for (Subset subset : {Subset::AllQuestions, Subset::CorrectlyAnswered}) {
            StratumResult s;
            s.qtype = filter;
            s.subset = subset;
            std::vector<double> student, model;
            for (const auto& it : items) {
                if (!in_qtype(*it.q, filter) || !in_subset(*it.p, subset)) continue;
                s.question_ids.push_back(it.q->id);
                student.push_back(student_entropy(*it.q));
                model.push_back(it.p->entropy_model);
            }
            correlate(s, student, model, in.alpha, in.tie_tolerance);
            r.strata.push_back(std::move(s));
        }
    }
    for (const auto& it : items) {
        double hs = student_entropy(*it.q);
        r.questions.push_back({it.q->id,
                               {{"student_entropy", hs},
                                {"model_entropy", it.p->entropy_model},
                                {"is_correct", it.p->is_correct ? 1.0 : 0.0}}});
        std::string type = qtype_label(effective_type(*it.q));
        r.points.push_back({it.q->id, hs, it.p->entropy_model, "type " + type,
                            stratum_significant(r, type, Subset::AllQuestions)});
    }
    return r;
}

AnalysisReport chi_squared_rates(const AnalysisInput& in, ModelMetric metric) {
    std::string suffix = metric == ModelMetric::FirstToken ? "first_token" : "order_sensitivity";
    AnalysisReport r = make_report(in, "chi_squared_" + suffix, "fig4_" + suffix);
    r.convention = std::string(kChiSquaredConvention);
    auto items = partition(in, r, [](const Question& q, const UncertaintyProfile& p) {
        std::string reason = needs_rates(q, p);
        if (!reason.empty()) return reason;
        for (double rate : *q.student_rates) {
            if (rate <= 0.0) return std::string(kReasonZeroRate);
        }
        return std::string{};
    });

    std::vector<ChiSquaredResult> results;
    results.reserve(items.size());
    for (const auto& it : items) {
        auto observed = counts_from_proportions(*it.q->student_rates, it.q->examinee_count);
        ChoiceTriple expected{};
        for (int c = 0; c < kChoiceCount; ++c) expected[c] = metric_value(*it.p, metric, c);
        results.push_back(chi_squared_gof(observed, expected, in.alpha));
        const auto& res = results.back();
        r.questions.push_back({it.q->id,
                               {{"statistic", res.statistic},
                                {"p_value", res.p_value},
                                {"significant", res.significant ? 1.0 : 0.0},
                                {"clamped", res.clamped ? 1.0 : 0.0}}});
    }

    for (const auto& filter : kQtypeFilters) {
        for (Subset subset :
             {Subset::AllQuestions, Subset::CorrectlyAnswered, Subset::IncorrectlyAnswered}) {
            StratumResult s;
            s.qtype = filter;
            s.subset = subset;
            double sum = 0.0;
            std::size_t significant = 0;
            for (std::size_t i = 0; i < items.size(); ++i) {
                if (!in_qtype(*items[i].q, filter) || !in_subset(*items[i].p, subset)) continue;
                s.question_ids.push_back(items[i].q->id);
                sum += results[i].statistic;
                if (results[i].significant) ++significant;
            }
            if (s.question_ids.empty()) {
                s.status = "omitted";
                s.reason = "empty stratum";
            } else {
                s.mean_statistic = sum / static_cast<double>(s.n());
                s.fraction_significant = static_cast<double>(significant) / static_cast<double>(s.n());
            }
            r.strata.push_back(std::move(s));
        }
    }
    return r;
}

namespace {

void per_choice_strata(const AnalysisInput& in, const std::vector<Item>& items,
                       std::span<const ModelMetric> metrics, Subset subset,
                       const std::string& phrasing, AnalysisReport& r) {
    for (ModelMetric metric : metrics) {
        for (ChoiceRole role : kAllRoles) {
            for (const auto& filter : kQtypeFilters) {
                StratumResult s;
                s.qtype = filter;
                s.subset = subset;
                s.metric = std::string(to_string(metric));
                s.role = std::string(to_string(role));
                s.phrasing = phrasing;
                std::vector<double> student, model;
                for (const auto& it : items) {
                    if (!in_qtype(*it.q, filter) || !in_subset(*it.p, subset)) continue;
                    int choice = assign_choice_roles(*it.q).choice_of_role[static_cast<int>(role)];
                    s.question_ids.push_back(it.q->id);
                    student.push_back((*it.q->student_rates)[choice]);
                    model.push_back(metric_value(*it.p, metric, choice));
                }
                correlate(s, student, model, in.alpha, in.tie_tolerance);
                r.strata.push_back(std::move(s));
            }
        }
    }
}

}  // namespace

AnalysisReport per_choice_correlation(const AnalysisInput& in, std::span<const ModelMetric> metrics,
                                      Subset subset) {
    std::string suffix = subset == Subset::AllQuestions        ? "all"
                         : subset == Subset::CorrectlyAnswered ? "correct"
                                                               : "incorrect";
    AnalysisReport r = make_report(in, "per_choice_correlation_" + suffix,
                                   subset == Subset::AllQuestions        ? "fig5"
                                   : subset == Subset::CorrectlyAnswered ? "fig6"
                                                                         : "per_choice_incorrect");
    auto items = partition(in, r, [subset](const Question& q, const UncertaintyProfile& p) {
        std::string reason = needs_rates(q, p);
        if (reason.empty() && !in_subset(p, subset)) reason = std::string(kReasonOutsideSubset);
        return reason;
    });
    per_choice_strata(in, items, metrics, subset, {}, r);

    for (const auto& it : items) {
        auto roles = assign_choice_roles(*it.q);
        QuestionRow row{it.q->id, {}};
        for (ModelMetric metric : metrics) {
            for (ChoiceRole role : kAllRoles) {
                int choice = roles.choice_of_role[static_cast<int>(role)];
                std::string stratum = std::string(to_string(metric)) + "/" + std::string(to_string(role));
                double x = (*it.q->student_rates)[choice];
                double y = metric_value(*it.p, metric, choice);
                row.values.emplace_back(stratum, y);
                r.points.push_back({it.q->id, x, y, stratum,
                                    stratum_significant(r, "All", subset, to_string(metric),
                                                        to_string(role))});
            }
        }
        r.questions.push_back(std::move(row));
    }
    return r;
}

AnalysisReport metric_agreement(const AnalysisInput& in) {
    AnalysisReport r = make_report(in, "metric_agreement", "table3");
    auto items = partition(in, r, needs_rates);
    for (ChoiceRole role : kAllRoles) {
        for (const auto& filter : kQtypeFilters) {
            StratumResult s;
            s.qtype = filter;
            s.metric = "FirstToken~OrderSensitivity";
            s.role = std::string(to_string(role));
            std::vector<double> first_token, order;
            for (const auto& it : items) {
                if (!in_qtype(*it.q, filter)) continue;
                int choice = assign_choice_roles(*it.q).choice_of_role[static_cast<int>(role)];
                s.question_ids.push_back(it.q->id);
                first_token.push_back(metric_value(*it.p, ModelMetric::FirstToken, choice));
                order.push_back(metric_value(*it.p, ModelMetric::OrderSensitivity, choice));
            }
            correlate(s, first_token, order, in.alpha, in.tie_tolerance);
            r.strata.push_back(std::move(s));
        }
    }
    return r;
}

AnalysisReport order_stability(const AnalysisInput& in) {
    AnalysisReport r = make_report(in, "order_stability", "table6");
    auto items = partition(in, r, no_extra);
    for (const auto& filter : kQtypeFilters) {
        for (Subset subset :
             {Subset::AllQuestions, Subset::CorrectlyAnswered, Subset::IncorrectlyAnswered}) {
            StratumResult s;
            s.qtype = filter;
            s.subset = subset;
            std::size_t stable = 0;
            for (const auto& it : items) {
                if (!in_qtype(*it.q, filter) || !in_subset(*it.p, subset)) continue;
                s.question_ids.push_back(it.q->id);
                if (it.p->order_sens.stable) ++stable;
            }
            if (s.question_ids.empty()) {
                s.status = "omitted";
                s.reason = "empty stratum";
            } else {
                s.rate = static_cast<double>(stable) / static_cast<double>(s.n());
            }
            r.strata.push_back(std::move(s));
        }
    }
    for (const auto& it : items) {
        r.questions.push_back({it.q->id,
                               {{"stable", it.p->order_sens.stable ? 1.0 : 0.0},
                                {"is_correct", it.p->is_correct ? 1.0 : 0.0},
                                {"tied_orderings", static_cast<double>(it.p->order_sens.tied_orderings)}}});
    }
    return r;
}

AnalysisReport phrasing_comparison(const AnalysisInput& one, const AnalysisInput& two) {
    if (&one.dataset != &two.dataset && !(one.dataset == two.dataset)) {
        throw std::invalid_argument("phrasing comparison needs both phrasings on the same dataset");
    }
    std::set<std::string_view> have_one, have_two;
    for (const auto& p : one.profiles) have_one.insert(p.question_id);
    for (const auto& p : two.profiles) have_two.insert(p.question_id);
    std::vector<std::string> missing;
    for (const auto& q : one.dataset.questions) {
        if (!have_one.count(q.id) || !have_two.count(q.id)) missing.push_back(q.id);
    }
    if (!missing.empty()) {
        std::string msg = "phrasing coverage mismatch; missing " + std::to_string(missing.size()) + ":";
        for (const auto& id : missing) msg += " " + id;
        throw std::invalid_argument(msg);
    }

    AnalysisReport r = make_report(one, "phrasing_comparison", "table4");
    r.phrasing = "1 vs 2";
    std::map<std::string_view, const UncertaintyProfile*> second;
    for (const auto& p : two.profiles) second.emplace(p.question_id, &p);

    auto items = partition(one, r, [&](const Question& q, const UncertaintyProfile& p) {
        const auto* other = second.at(q.id);
        if (other->excluded) return other->exclusion_reason + " (phrasing 2)";
        return needs_rates(q, p);
    });
    std::vector<Item> items_two;
    items_two.reserve(items.size());
    for (const auto& it : items) items_two.push_back({it.q, second.at(it.q->id)});

    const std::array<ModelMetric, 2> metrics = {ModelMetric::FirstToken, ModelMetric::OrderSensitivity};
    per_choice_strata(one, items, metrics, Subset::AllQuestions, "1", r);
    per_choice_strata(two, items_two, metrics, Subset::AllQuestions, "2", r);

    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& p1 = *items[i].p;
        const auto& p2 = *items_two[i].p;
        QuestionRow row{items[i].q->id, {}};
        for (int c = 0; c < kChoiceCount; ++c) {
            std::string suffix = std::string(1, static_cast<char>('0' + c));
            row.values.emplace_back("delta_first_token_" + suffix,
                                    p2.choice_probs.values[c] - p1.choice_probs.values[c]);
            row.values.emplace_back("delta_order_" + suffix,
                                    p2.order_sens.frequencies[c] - p1.order_sens.frequencies[c]);
        }
        row.values.emplace_back("delta_entropy", p2.entropy_model - p1.entropy_model);
        r.questions.push_back(std::move(row));

        for (ModelMetric metric : metrics) {
            for (int c = 0; c < kChoiceCount; ++c) {
                r.points.push_back({items[i].q->id, metric_value(p1, metric, c),
                                    metric_value(p2, metric, c), std::string(to_string(metric)), false});
            }
        }
    }
    return r;
}

}  // namespace mcqprobe
