#include "mcqprobe/backend.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <random>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace mcqprobe {

using nlohmann::json;

std::uint64_t stable_hash(std::string_view data, std::uint64_t seed) {
    std::uint64_t h = 14695981039346656037ull ^ (seed * 0x9E3779B97F4A7C15ull);
    for (unsigned char c : data) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// ---------------------------------------------------------------------------
// TokenDistribution

TokenDistribution TokenDistribution::from_entries(std::vector<TokenProb> entries, int top_k) {
    std::vector<TokenProb> merged;
    merged.reserve(entries.size());
    for (auto& e : entries) {
        auto it = std::find_if(merged.begin(), merged.end(),
                               [&](const TokenProb& m) { return m.token == e.token; });
        if (it == merged.end()) merged.push_back(std::move(e));
        else it->probability = std::max(it->probability, e.probability);
    }
    std::stable_sort(merged.begin(), merged.end(), [](const TokenProb& a, const TokenProb& b) {
        return a.probability > b.probability;
    });
    if (top_k >= 0 && merged.size() > static_cast<std::size_t>(top_k)) merged.resize(top_k);
    TokenDistribution d;
    d.entries = std::move(merged);
    d.top_k = top_k;
    return d;
}

void TokenDistribution::validate() const {
    for (std::size_t i = 0; i < entries.size(); ++i) {
        const auto& e = entries[i];
        if (!(e.probability >= 0.0 && e.probability <= 1.0)) {
            throw std::invalid_argument("token probability outside [0,1] for '" + e.token + "'");
        }
        if (i > 0 && entries[i - 1].probability < e.probability) {
            throw std::invalid_argument("token distribution not sorted descending");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (entries[j].token == e.token) {
                throw std::invalid_argument("duplicate token '" + e.token + "'");
            }
        }
    }
}

double TokenDistribution::probability_of(std::string_view token) const {
    for (const auto& e : entries) {
        if (e.token == token) return e.probability;
    }
    return 0.0;
}

std::string BackendIdentity::key() const {
    return kind + "|" + model + "|" + endpoint + "|" + label_style;
}

// ---------------------------------------------------------------------------
// Mock

namespace {

// Geometric filler vocabulary standing in for the non-letter tail of a real model.
constexpr std::array<std::string_view, 16> kFillerTokens = {
    "The", " The", "\n", "Answer", " answer", "I", " I", "Option",
    ":", "1", " The answer", "**", " option", "Based", " Correct", "Response"};

std::string number(double v) {
    std::ostringstream os;
    os << std::setprecision(12) << v;
    return os.str();
}

}  // namespace

void MockModelSpec::validate() const {
    for (const auto& [id, lat] : latent) {
        double sum = 0.0;
        for (double p : lat) {
            if (!(p >= 0.0 && p <= 1.0)) {
                throw std::invalid_argument("mock latent for '" + id + "' outside [0,1]");
            }
            sum += p;
        }
        if (std::abs(sum - 1.0) > 1e-9) {
            throw std::invalid_argument("mock latent for '" + id + "' sums to " + number(sum));
        }
    }
    for (double b : bias) {
        if (!(b > 0.0) || !std::isfinite(b)) {
            throw std::invalid_argument("mock bias must be strictly positive");
        }
    }
    if (!(noise >= 0.0)) throw std::invalid_argument("mock noise must be non-negative");
    if (!(non_letter_mass >= 0.0 && non_letter_mass < 1.0)) {
        throw std::invalid_argument("mock non-letter mass must be in [0,1)");
    }
}

std::string MockModelSpec::describe() const {
    std::string latent_fingerprint;
    for (const auto& [id, lat] : latent) {
        latent_fingerprint += id;
        for (double p : lat) latent_fingerprint += "," + number(p);
        latent_fingerprint += ";";
    }
    std::ostringstream os;
    os << "mock://seed=" << seed << ";bias=" << number(bias[0]) << "," << number(bias[1]) << ","
       << number(bias[2]) << ";noise=" << number(noise);
    if (non_letter_mass > 0.0) os << ";tail=" << number(non_letter_mass);
    os << ";latent=" << std::hex << std::setw(16) << std::setfill('0')
       << stable_hash(latent_fingerprint);
    return os.str();
}

MockModelSpec mock_spec_from_dataset(const Dataset& ds, const std::array<double, 3>& bias,
                                     double noise, std::uint64_t seed) {
    MockModelSpec spec;
    spec.bias = bias;
    spec.noise = noise;
    spec.seed = seed;
    for (const auto& q : ds.questions) {
        if (q.student_rates) {
            ChoiceTriple lat = *q.student_rates;
            double sum = lat[0] + lat[1] + lat[2];
            for (double& p : lat) p /= sum;
            spec.latent.emplace(q.id, lat);
        } else {
            std::mt19937_64 rng(stable_hash(q.id, seed));
            std::gamma_distribution<double> g(1.0);
            ChoiceTriple lat{g(rng), g(rng), g(rng)};
            double sum = lat[0] + lat[1] + lat[2];
            for (double& p : lat) p /= sum;
            spec.latent.emplace(q.id, lat);
        }
    }
    spec.validate();
    return spec;
}

MockModelSpec load_mock_spec(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open mock spec " + path.string());
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::runtime_error("mock spec " + path.string() + ": " + e.what());
    }
    MockModelSpec spec;
    for (const auto& [id, lat] : j.at("latent").items()) {
        auto v = lat.get<std::vector<double>>();
        if (v.size() != kChoiceCount) throw std::invalid_argument("mock latent needs 3 values");
        spec.latent.emplace(id, ChoiceTriple{v[0], v[1], v[2]});
    }
    if (j.contains("bias")) {
        auto b = j["bias"].get<std::vector<double>>();
        if (b.size() != kChoiceCount) throw std::invalid_argument("mock bias needs 3 values");
        spec.bias = {b[0], b[1], b[2]};
    }
    spec.noise = j.value("noise", 0.0);
    spec.seed = j.value("seed", std::uint64_t{0});
    spec.non_letter_mass = j.value("non_letter_mass", 0.0);
    spec.validate();
    return spec;
}

void save_mock_spec(const MockModelSpec& spec, const std::filesystem::path& path) {
    json j;
    j["latent"] = json::object();
    for (const auto& [id, lat] : spec.latent) j["latent"][id] = lat;
    j["bias"] = spec.bias;
    j["noise"] = spec.noise;
    j["seed"] = spec.seed;
    j["non_letter_mass"] = spec.non_letter_mass;
    std::ofstream out(path);
    out << j.dump(2) << "\n";
    if (!out) throw std::runtime_error("cannot write mock spec " + path.string());
}

TokenDistribution mock_query(const MockModelSpec& spec, const RenderedPrompt& prompt, int top_k) {
    auto it = spec.latent.find(prompt.question_id);
    if (it == spec.latent.end()) {
        throw std::out_of_range("mock spec has no latent for question '" + prompt.question_id + "'");
    }
    if (top_k < kMinTopK) throw std::invalid_argument("top_k must be at least 6");
    const ChoiceTriple& latent = it->second;
    const Permutation& perm = all_permutations().at(prompt.permutation_id);

    std::array<double, kChoiceCount> mass{};
    if (spec.noise > 0.0) {
        std::string key = prompt.question_id + "#" + std::to_string(prompt.permutation_id) + "#" +
                          std::to_string(prompt.phrasing_id);
        std::mt19937_64 rng(stable_hash(key, spec.seed));
        std::normal_distribution<double> z(0.0, spec.noise);
        std::array<double, kChoiceCount> logits{};
        double top = -std::numeric_limits<double>::infinity();
        for (int l = 0; l < kChoiceCount; ++l) {
            double base = latent[perm.choice_at[l]] * spec.bias[l];
            double eps = z(rng);  // always drawn so streams stay aligned across labels
            logits[l] = base > 0.0 ? std::log(base) + eps : -std::numeric_limits<double>::infinity();
            top = std::max(top, logits[l]);
        }
        for (int l = 0; l < kChoiceCount; ++l) mass[l] = std::exp(logits[l] - top);
    } else {
        for (int l = 0; l < kChoiceCount; ++l) mass[l] = latent[perm.choice_at[l]] * spec.bias[l];
    }
    double total = mass[0] + mass[1] + mass[2];
    const double letter_share = 1.0 - spec.non_letter_mass;

    std::vector<TokenProb> entries;
    entries.reserve(2 * kChoiceCount + kFillerTokens.size());
    for (int l = 0; l < kChoiceCount; ++l) {
        double m = mass[l] / total * letter_share;
        double bare = kMockBareLetterShare * m;
        // m - bare is exact (Sterbenz), so the two variants sum back to m
        entries.push_back({std::string(1, kLetters[l]), bare});
        entries.push_back({std::string(" ") + kLetters[l], m - bare});
    }
    double filler_weight = 0.0;
    for (std::size_t i = 0; i < kFillerTokens.size(); ++i) filler_weight += std::ldexp(1.0, -int(i));
    for (std::size_t i = 0; i < kFillerTokens.size(); ++i) {
        entries.push_back({std::string(kFillerTokens[i]),
                           spec.non_letter_mass * std::ldexp(1.0, -int(i)) / filler_weight});
    }
    return TokenDistribution::from_entries(std::move(entries), top_k);
}

MockBackend::MockBackend(MockModelSpec spec) : spec_(std::move(spec)) { spec_.validate(); }

TokenDistribution MockBackend::query_first_token(const RenderedPrompt& prompt, int top_k) {
    return mock_query(spec_, prompt, top_k);
}

BackendIdentity MockBackend::identity() const {
    return BackendIdentity{"mock", "mock", spec_.describe(), ""};
}

}  // namespace mcqprobe
