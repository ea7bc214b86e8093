#include "mcqprobe/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <numeric>
#include <random>
#include <set>
#include <sstream>

#include <json.hpp>

#include "mcqprobe/errors.hpp"
#include "mcqprobe/stats.hpp"

namespace mcqprobe {

using nlohmann::json;

std::string_view to_string(QuestionType t) {
    switch (t) {
        case QuestionType::FillGap: return "FillGap";
        case QuestionType::FillTwoGaps: return "FillTwoGaps";
        case QuestionType::WhQuestion: return "WhQuestion";
        case QuestionType::SentenceCompletion: return "SentenceCompletion";
    }
    return "?";
}

std::string_view to_string(ChoiceRole r) {
    switch (r) {
        case ChoiceRole::CorrectAnswer: return "CorrectAnswer";
        case ChoiceRole::Distractor1: return "Distractor1";
        case ChoiceRole::Distractor2: return "Distractor2";
    }
    return "?";
}

const Question* Dataset::find(std::string_view id) const {
    auto it = std::find_if(questions.begin(), questions.end(),
                           [&](const Question& q) { return q.id == id; });
    return it == questions.end() ? nullptr : &*it;
}

namespace {

std::string format_number(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

}  // namespace

void validate_question(const Question& q) {
    if (q.id.empty()) throw ValidationError(q.id, "empty id");
    if (q.stem.empty()) throw ValidationError(q.id, "empty stem");
    if (q.choices.size() != kChoiceCount) {
        throw ValidationError(q.id, "expected 3 choices, got " + std::to_string(q.choices.size()));
    }
    for (std::size_t i = 0; i < q.choices.size(); ++i) {
        if (q.choices[i].empty()) {
            throw ValidationError(q.id, "choice " + std::to_string(i) + " is empty");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (q.choices[i] == q.choices[j]) {
                throw ValidationError(q.id, "choices " + std::to_string(j) + " and " +
                                                std::to_string(i) + " are identical");
            }
        }
    }
    if (q.correct_index < 0 || q.correct_index >= kChoiceCount) {
        throw ValidationError(q.id,
                              "correct_index " + std::to_string(q.correct_index) + " out of range");
    }
    if (q.qtype) {
        int t = static_cast<int>(*q.qtype);
        if (t < 1 || t > 4) throw ValidationError(q.id, "qtype " + std::to_string(t) + " not in 1..4");
    }
    if (q.examinee_count <= 0) {
        throw ValidationError(q.id, "examinee_count must be positive");
    }
    if (q.student_rates) {
        double sum = 0.0;
        for (double r : *q.student_rates) {
            if (!(r >= 0.0 && r <= 1.0)) {
                throw ValidationError(q.id, "student rate " + format_number(r) + " outside [0,1]");
            }
            sum += r;
        }
        if (std::abs(sum - 1.0) > kRateSumTolerance) {
            throw ValidationError(q.id, "rates sum " + format_number(sum) + " ≠ 1");
        }
    }
}

void validate_dataset(const Dataset& ds) {
    if (ds.questions.empty()) throw ValidationError("", "dataset is empty");
    std::set<std::string_view> seen;
    for (const auto& q : ds.questions) {
        validate_question(q);
        if (!seen.insert(q.id).second) throw ValidationError(q.id, "duplicate question id");
    }
}

// ---------------------------------------------------------------------------
// JSONL

namespace {

json question_to_json(const Question& q) {
    json j;
    j["id"] = q.id;
    j["stem"] = q.stem;
    j["choices"] = q.choices;
    j["correct_index"] = q.correct_index;
    if (q.qtype) j["qtype"] = static_cast<int>(*q.qtype);
    if (q.student_rates) j["student_rates"] = *q.student_rates;
    j["examinee_count"] = q.examinee_count;
    return j;
}

Question question_from_json(const json& j, std::size_t line) {
    if (!j.is_object()) throw ParseError(line, "expected a JSON object");
    Question q;
    try {
        q.id = j.at("id").get<std::string>();
        q.stem = j.at("stem").get<std::string>();
        q.choices = j.at("choices").get<std::vector<std::string>>();
        q.correct_index = j.at("correct_index").get<int>();
        if (auto it = j.find("qtype"); it != j.end() && !it->is_null()) {
            q.qtype = static_cast<QuestionType>(it->get<int>());
        }
        if (auto it = j.find("student_rates"); it != j.end() && !it->is_null()) {
            auto rates = it->get<std::vector<double>>();
            if (rates.size() != kChoiceCount) {
                throw ValidationError(q.id, "expected 3 student rates, got " +
                                                std::to_string(rates.size()));
            }
            q.student_rates = ChoiceTriple{rates[0], rates[1], rates[2]};
        }
        if (auto it = j.find("examinee_count"); it != j.end() && !it->is_null()) {
            q.examinee_count = it->get<int>();
        }
    } catch (const json::exception& e) {
        throw ParseError(line, e.what());
    }
    return q;
}

}  // namespace

Dataset parse_jsonl_dataset(std::string_view text, std::string source) {
    Dataset ds;
    ds.metadata.source = std::move(source);
    std::istringstream in{std::string(text)};
    std::string line;
    std::size_t line_no = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::parse_error& e) {
            throw ParseError(line_no, e.what());
        }
        if (j.is_object() && j.contains("_meta")) {
            const auto& meta = j["_meta"];
            ds.metadata.source = meta.value("source", ds.metadata.source);
            ds.metadata.created = meta.value("created", std::string{});
            continue;
        }
        Question q = question_from_json(j, line_no);
        validate_question(q);
        if (!seen.insert(q.id).second) throw ValidationError(q.id, "duplicate question id");
        ds.questions.push_back(std::move(q));
    }
    validate_dataset(ds);
    return ds;
}

std::string dataset_to_jsonl(const Dataset& ds) {
    std::string out;
    json meta{{"_meta", {{"source", ds.metadata.source}, {"created", ds.metadata.created}}}};
    out += meta.dump() + "\n";
    for (const auto& q : ds.questions) out += question_to_json(q).dump() + "\n";
    return out;
}

// ---------------------------------------------------------------------------
// CSV

namespace {

const std::vector<std::string> kCsvColumns = {
    "id", "stem", "choice_a", "choice_b", "choice_c", "correct_index", "qtype",
    "rate_a", "rate_b", "rate_c", "examinee_count"};

struct CsvRecord {
    std::vector<std::string> cells;
    std::size_t line = 0;
};

// RFC 4180: quoted cells may contain commas, doubled quotes and newlines.
std::vector<CsvRecord> split_csv(std::string_view text) {
    std::vector<CsvRecord> records;
    CsvRecord current;
    std::string cell;
    bool in_quotes = false;
    bool row_has_content = false;
    std::size_t line = 1;
    current.line = 1;
    auto end_row = [&] {
        current.cells.push_back(std::move(cell));
        cell.clear();
        if (row_has_content) records.push_back(std::move(current));
        current = CsvRecord{};
        row_has_content = false;
    };
    for (std::size_t i = 0; i < text.size(); ++i) {
        char c = text[i];
        if (in_quotes) {
            if (c == '"') {
                if (i + 1 < text.size() && text[i + 1] == '"') {
                    cell.push_back('"');
                    ++i;
                } else {
                    in_quotes = false;
                }
            } else {
                if (c == '\n') ++line;
                cell.push_back(c);
            }
            continue;
        }
        if (c == '"') {
            in_quotes = true;
            row_has_content = true;
        } else if (c == ',') {
            current.cells.push_back(std::move(cell));
            cell.clear();
            row_has_content = true;
        } else if (c == '\r') {
            continue;
        } else if (c == '\n') {
            end_row();
            ++line;
            current.line = line;
        } else {
            cell.push_back(c);
            row_has_content = true;
        }
    }
    if (in_quotes) throw ParseError(current.line, "unterminated quoted field");
    if (row_has_content || !cell.empty()) end_row();
    return records;
}

std::string csv_escape(const std::string& s) {
    if (s.find_first_of(",\"\n\r") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += "\"\"";
        else out.push_back(c);
    }
    out += "\"";
    return out;
}

double parse_double(const std::string& s, std::size_t line, std::string_view column) {
    try {
        std::size_t used = 0;
        double v = std::stod(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, "column " + std::string(column) + ": not a number: '" + s + "'");
    }
}

int parse_int(const std::string& s, std::size_t line, std::string_view column) {
    try {
        std::size_t used = 0;
        int v = std::stoi(s, &used);
        if (used != s.size()) throw std::invalid_argument(s);
        return v;
    } catch (const std::exception&) {
        throw ParseError(line, "column " + std::string(column) + ": not an integer: '" + s + "'");
    }
}

std::string shortest_double(double v) {
    std::ostringstream os;
    os << std::setprecision(17) << v;
    // Prefer the short form when it round-trips.
    for (int p = 6; p < 17; ++p) {
        std::ostringstream shorter;
        shorter << std::setprecision(p) << v;
        if (std::stod(shorter.str()) == v) return shorter.str();
    }
    return os.str();
}

}  // namespace

Dataset parse_csv_dataset(std::string_view text, std::string source) {
    auto records = split_csv(text);
    if (records.empty()) throw ParseError(1, "missing CSV header");
    const auto& header = records.front();
    std::vector<int> column_of(kCsvColumns.size(), -1);
    for (std::size_t c = 0; c < header.cells.size(); ++c) {
        auto it = std::find(kCsvColumns.begin(), kCsvColumns.end(), header.cells[c]);
        if (it != kCsvColumns.end()) column_of[it - kCsvColumns.begin()] = static_cast<int>(c);
        else if (header.cells[c].rfind("choice_", 0) == 0) {
            // Extra choice_d... columns are accepted here and rejected by validation.
        } else {
            throw ParseError(header.line, "unknown column '" + header.cells[c] + "'");
        }
    }
    for (std::string_view required : {"id", "stem", "choice_a", "choice_b", "choice_c",
                                      "correct_index"}) {
        auto idx = std::find(kCsvColumns.begin(), kCsvColumns.end(), required) - kCsvColumns.begin();
        if (column_of[idx] < 0) {
            throw ParseError(header.line, "missing column '" + std::string(required) + "'");
        }
    }

    Dataset ds;
    ds.metadata.source = std::move(source);
    std::set<std::string> seen;
    for (std::size_t r = 1; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.cells.size() != header.cells.size()) {
            throw ParseError(rec.line, "expected " + std::to_string(header.cells.size()) +
                                           " cells, got " + std::to_string(rec.cells.size()));
        }
        auto cell = [&](std::string_view name) -> const std::string* {
            auto idx = std::find(kCsvColumns.begin(), kCsvColumns.end(), name) - kCsvColumns.begin();
            return column_of[idx] < 0 ? nullptr : &rec.cells[column_of[idx]];
        };
        Question q;
        q.id = *cell("id");
        q.stem = *cell("stem");
        for (std::size_t c = 0; c < header.cells.size(); ++c) {
            if (header.cells[c].rfind("choice_", 0) == 0 && !rec.cells[c].empty()) {
                q.choices.push_back(rec.cells[c]);
            }
        }
        q.correct_index = parse_int(*cell("correct_index"), rec.line, "correct_index");
        if (auto* t = cell("qtype"); t && !t->empty()) {
            q.qtype = static_cast<QuestionType>(parse_int(*t, rec.line, "qtype"));
        }
        const std::string* ra = cell("rate_a");
        const std::string* rb = cell("rate_b");
        const std::string* rc = cell("rate_c");
        if (ra && rb && rc && !(ra->empty() && rb->empty() && rc->empty())) {
            q.student_rates = ChoiceTriple{parse_double(*ra, rec.line, "rate_a"),
                                           parse_double(*rb, rec.line, "rate_b"),
                                           parse_double(*rc, rec.line, "rate_c")};
        }
        if (auto* n = cell("examinee_count"); n && !n->empty()) {
            q.examinee_count = parse_int(*n, rec.line, "examinee_count");
        }
        validate_question(q);
        if (!seen.insert(q.id).second) throw ValidationError(q.id, "duplicate question id");
        ds.questions.push_back(std::move(q));
    }
    validate_dataset(ds);
    return ds;
}

std::string dataset_to_csv(const Dataset& ds) {
    std::ostringstream out;
    for (std::size_t c = 0; c < kCsvColumns.size(); ++c) {
        out << (c ? "," : "") << kCsvColumns[c];
    }
    out << "\n";
    for (const auto& q : ds.questions) {
        out << csv_escape(q.id) << "," << csv_escape(q.stem);
        for (int c = 0; c < kChoiceCount; ++c) {
            out << "," << (c < static_cast<int>(q.choices.size()) ? csv_escape(q.choices[c]) : "");
        }
        out << "," << q.correct_index << ",";
        if (q.qtype) out << static_cast<int>(*q.qtype);
        for (int c = 0; c < kChoiceCount; ++c) {
            out << ",";
            if (q.student_rates) out << shortest_double((*q.student_rates)[c]);
        }
        out << "," << q.examinee_count << "\n";
    }
    return out.str();
}

namespace {

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

}  // namespace

Dataset load_dataset(const std::filesystem::path& path, DatasetFormat format) {
    std::string text = read_file(path);
    std::string source = path.filename().string();
    return format == DatasetFormat::Csv ? parse_csv_dataset(text, std::move(source))
                                        : parse_jsonl_dataset(text, std::move(source));
}

Dataset load_dataset(const std::filesystem::path& path) {
    return load_dataset(path, path.extension() == ".csv" ? DatasetFormat::Csv : DatasetFormat::Jsonl);
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path, DatasetFormat format) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << (format == DatasetFormat::Csv ? dataset_to_csv(ds) : dataset_to_jsonl(ds));
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

// ---------------------------------------------------------------------------
// Question types

namespace {

struct GapScan {
    int count = 0;
    bool ends_with_gap = false;
};

GapScan scan_gaps(std::string_view s) {
    static constexpr std::string_view kEllipsis = "\xE2\x80\xA6";  // U+2026
    GapScan scan;
    std::size_t last_gap_end = std::string_view::npos;
    std::size_t i = 0;
    while (i < s.size()) {
        std::size_t start = i;
        std::size_t dots = 0, underscores = 0, ellipses = 0;
        // A run mixing dots/ellipsis characters counts as one marker.
        while (i < s.size()) {
            if (s[i] == '.') {
                ++dots;
                ++i;
            } else if (s.substr(i, kEllipsis.size()) == kEllipsis) {
                ++ellipses;
                i += kEllipsis.size();
            } else {
                break;
            }
        }
        if (i == start) {
            while (i < s.size() && s[i] == '_') {
                ++underscores;
                ++i;
            }
        }
        if (i == start) {
            ++i;
            continue;
        }
        if (dots >= 3 || ellipses >= 1 || underscores >= 3) {
            ++scan.count;
            last_gap_end = i;
        }
    }
    if (last_gap_end != std::string_view::npos) {
        auto rest = s.substr(last_gap_end);
        scan.ends_with_gap = rest.find_first_not_of(" \t\r\n") == std::string_view::npos;
    }
    return scan;
}

}  // namespace

TypeClassification classify_question_type(std::string_view stem) {
    GapScan gaps = scan_gaps(stem);
    if (gaps.count >= 2) return {QuestionType::FillTwoGaps, false};
    if (gaps.count == 1 && !gaps.ends_with_gap) return {QuestionType::FillGap, false};
    if (gaps.ends_with_gap) return {QuestionType::SentenceCompletion, false};
    auto last = stem.find_last_not_of(" \t\r\n");
    if (last != std::string_view::npos && stem[last] == '?') return {QuestionType::WhQuestion, false};
    return {QuestionType::SentenceCompletion, true};
}

QuestionType effective_type(const Question& q) {
    return q.qtype ? *q.qtype : classify_question_type(q.stem).type;
}

ChoiceRoles assign_choice_roles(const Question& q) {
    if (!q.student_rates) throw ValidationError(q.id, "missing student_rates");
    const auto& rates = *q.student_rates;
    std::array<int, 2> distractors{};
    int k = 0;
    for (int c = 0; c < kChoiceCount; ++c) {
        if (c != q.correct_index) distractors[k++] = c;
    }
    // distractors are in ascending index order, so a tie keeps the lower index first
    if (rates[distractors[1]] > rates[distractors[0]]) std::swap(distractors[0], distractors[1]);

    ChoiceRoles roles;
    roles.role_of_choice[q.correct_index] = ChoiceRole::CorrectAnswer;
    roles.role_of_choice[distractors[0]] = ChoiceRole::Distractor1;
    roles.role_of_choice[distractors[1]] = ChoiceRole::Distractor2;
    roles.choice_of_role = {q.correct_index, distractors[0], distractors[1]};
    return roles;
}

// ---------------------------------------------------------------------------
// Synthesis

std::array<int, 4> apportion_types(int n, const TypeMix& mix) {
    auto counts = counts_from_proportions(std::span<const double>(mix), n);
    return {static_cast<int>(counts[0]), static_cast<int>(counts[1]), static_cast<int>(counts[2]),
            static_cast<int>(counts[3])};
}

namespace {

constexpr std::array<std::string_view, 24> kTopics = {
    "the hippocampus",     "the amygdala",       "myelin",
    "dopamine",            "serotonin",          "the cerebellum",
    "the thalamus",        "glial cells",        "the retina",
    "circadian rhythms",   "long-term potentiation", "the hypothalamus",
    "action potentials",   "synaptic vesicles",  "the basal ganglia",
    "melatonin",           "the frontal cortex", "cortisol",
    "the spinal cord",     "acetylcholine",      "the corpus callosum",
    "neurogenesis",        "the pituitary gland", "GABA receptors"};

constexpr std::array<std::string_view, 24> kTerms = {
    "retinex",        "trichromatic",   "opponent process", "constant",
    "variable",       "decreasing",     "excitatory",       "inhibitory",
    "sympathetic",    "parasympathetic", "afferent",        "efferent",
    "dorsal",         "ventral",        "ionotropic",       "metabotropic",
    "phasic",         "tonic",          "anterograde",      "retrograde",
    "lateral",        "medial",         "endocrine",        "paracrine"};

// Mean selection rates for the correct answer and the two ranked distractors.
constexpr ChoiceTriple kRoleMeans = {0.703, 0.209, 0.088};
constexpr double kDirichletConcentration = 8.0;

std::string stem_for(QuestionType type, int index, std::string_view topic) {
    std::string tag = "Item " + std::to_string(index + 1) + ": ";
    switch (type) {
        case QuestionType::FillGap:
            return tag + "In explaining " + std::string(topic) +
                   ", the ... account applies to what happens in the brain.";
        case QuestionType::FillTwoGaps:
            return tag + "With respect to " + std::string(topic) + ", short-term is to ... as long-term is to ...";
        case QuestionType::WhQuestion:
            return tag + "Which of these statements about " + std::string(topic) + " is correct?";
        case QuestionType::SentenceCompletion:
            return tag + "The main function of " + std::string(topic) + " is the ...";
    }
    return tag;
}

}  // namespace

Dataset synthesize_dataset(int n, const TypeMix& mix, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("n must be at least 1");
    double total = 0.0;
    for (double m : mix) {
        if (!(m >= 0.0)) throw std::invalid_argument("type mix entries must be non-negative");
        total += m;
    }
    if (std::abs(total - 1.0) > kRateSumTolerance) {
        throw std::invalid_argument("type mix sums to " + format_number(total) + ", expected 1");
    }

    std::mt19937_64 rng(seed);
    auto counts = apportion_types(n, mix);
    std::vector<QuestionType> types;
    types.reserve(n);
    for (int t = 0; t < 4; ++t) types.insert(types.end(), counts[t], kAllQuestionTypes[t]);
    std::shuffle(types.begin(), types.end(), rng);

    Dataset ds;
    ds.metadata.source = "synthetic(n=" + std::to_string(n) + ",seed=" + std::to_string(seed) + ")";
    ds.metadata.created = "1970-01-01T00:00:00Z";
    ds.questions.reserve(n);

    std::uniform_int_distribution<int> pick_index(0, kChoiceCount - 1);
    std::uniform_int_distribution<std::size_t> pick_topic(0, kTopics.size() - 1);
    std::normal_distribution<double> examinees(268.0, 185.0);
    std::array<std::gamma_distribution<double>, 3> role_draws = {
        std::gamma_distribution<double>(kDirichletConcentration * kRoleMeans[0]),
        std::gamma_distribution<double>(kDirichletConcentration * kRoleMeans[1]),
        std::gamma_distribution<double>(kDirichletConcentration * kRoleMeans[2])};

    for (int i = 0; i < n; ++i) {
        Question q;
        QuestionType type = types[i];
        q.id = "syn-" + std::to_string(i + 1);
        q.stem = stem_for(type, i, kTopics[pick_topic(rng)]);
        q.qtype = type;
        q.correct_index = pick_index(rng);

        // three distinct terms; two-gap items get paired terms
        std::vector<std::size_t> picks;
        std::uniform_int_distribution<std::size_t> pick_term(0, kTerms.size() - 1);
        while (picks.size() < (type == QuestionType::FillTwoGaps ? 6u : 3u)) {
            std::size_t t = pick_term(rng);
            if (std::find(picks.begin(), picks.end(), t) == picks.end()) picks.push_back(t);
        }
        for (int c = 0; c < kChoiceCount; ++c) {
            if (type == QuestionType::FillTwoGaps) {
                q.choices.push_back(std::string(kTerms[picks[2 * c]]) + "; " +
                                    std::string(kTerms[picks[2 * c + 1]]));
            } else {
                q.choices.emplace_back(kTerms[picks[c]]);
            }
        }

        q.examinee_count = std::clamp(static_cast<int>(std::lround(examinees(rng))), 30, 900);

        ChoiceTriple role_props{};
        double sum = 0.0;
        for (int r = 0; r < 3; ++r) {
            role_props[r] = role_draws[r](rng);
            sum += role_props[r];
        }
        for (double& p : role_props) p /= sum;

        // roles -> choice positions: correct at correct_index, distractors in random order
        std::array<int, 2> others{};
        int k = 0;
        for (int c = 0; c < kChoiceCount; ++c) {
            if (c != q.correct_index) others[k++] = c;
        }
        if (pick_index(rng) % 2 == 1) std::swap(others[0], others[1]);
        ChoiceTriple by_choice{};
        by_choice[q.correct_index] = role_props[0];
        by_choice[others[0]] = role_props[1];
        by_choice[others[1]] = role_props[2];

        // counts with every choice picked at least once, rates = counts / N
        auto choice_counts = counts_from_proportions(std::span<const double>(by_choice),
                                                     q.examinee_count);
        for (auto& c : choice_counts) {
            if (c == 0) {
                auto biggest = std::max_element(choice_counts.begin(), choice_counts.end());
                --*biggest;
                c = 1;
            }
        }
        ChoiceTriple rates{};
        for (int c = 0; c < kChoiceCount; ++c) {
            rates[c] = static_cast<double>(choice_counts[c]) / q.examinee_count;
        }
        q.student_rates = rates;
        ds.questions.push_back(std::move(q));
    }
    return ds;
}

}  // namespace mcqprobe
