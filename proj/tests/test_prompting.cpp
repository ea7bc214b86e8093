#include <algorithm>
#include <set>
#include <sstream>
#include <vector>

#include <doctest.h>

#include "mcqprobe/prompting.hpp"
#include "support.hpp"

using namespace mcqprobe;

namespace {

std::vector<std::string> split_lines(const std::string& s) {
    std::vector<std::string> out;
    std::istringstream in(s);
    for (std::string line; std::getline(in, line);) out.push_back(line);
    return out;
}

}  // namespace

TEST_CASE("permutations") {
    const auto& perms = all_permutations();
    REQUIRE(perms.size() == 6);
    CHECK(perms[0].choice_at == std::array<int, 3>{0, 1, 2});
    std::set<std::array<int, 3>> distinct;
    for (const auto& p : perms) {
        distinct.insert(p.choice_at);
        auto sorted = p.choice_at;
        std::sort(sorted.begin(), sorted.end());
        CHECK(sorted == std::array<int, 3>{0, 1, 2});
        for (int c = 0; c < 3; ++c) CHECK(p.choice_at[p.label_of(c)] == c);
    }
    CHECK(distinct.size() == 6);
    for (std::size_t i = 1; i < perms.size(); ++i) CHECK(perms[i - 1].choice_at < perms[i].choice_at);
    CHECK(&all_permutations() == &perms);

    // each choice sits at each label exactly twice
    for (int c = 0; c < 3; ++c) {
        for (int l = 0; l < 3; ++l) {
            int n = 0;
            for (const auto& p : perms) n += p.choice_at[l] == c;
            CHECK(n == 2);
        }
    }
}

TEST_CASE("prompt layout") {
    auto q = testing::make_question("q7", {0.5, 0.3, 0.2});
    q.stem = "The central nervous system consists of the ...";
    q.choices = {"brain and spinal cord", "subcortical structures of the brain",
                 "the brainstem and cerebellum"};
    auto p = render_prompt(q, 0, Phrasing::One);
    CHECK(p.text.rfind("Below is a multiple-choice question.", 0) == 0);
    CHECK(p.question_id == "q7");
    CHECK(p.permutation_id == 0);
    CHECK(p.phrasing_id == 1);
    const std::string expected = std::string(instruction_text(Phrasing::One)) +
                                 "\n\nQuestion:\nThe central nervous system consists of the ...\n"
                                 "A) brain and spinal cord\n"
                                 "B) subcortical structures of the brain\n"
                                 "C) the brainstem and cerebellum\n"
                                 "Response:";
    CHECK(p.text == expected);

    auto two = render_prompt(q, 0, Phrasing::Two);
    CHECK(two.text.find("Select the option letter that you believe") != std::string::npos);
    CHECK(std::string(instruction_text(Phrasing::One)).find("Choose the letter which best answers") !=
          std::string::npos);

    CHECK(render_prompt(q, 3, Phrasing::Two).text == render_prompt(q, 3, Phrasing::Two).text);
    CHECK_THROWS_AS(render_prompt(q, 6, Phrasing::One), std::out_of_range);
    CHECK_THROWS_AS(phrasing_from_int(3), std::invalid_argument);
}

TEST_CASE("swapping A and B exchanges only those lines") {
    auto q = testing::make_question("s", {0.5, 0.3, 0.2});
    const auto& perms = all_permutations();
    auto swap_ab = std::find_if(perms.begin(), perms.end(), [](const Permutation& p) {
        return p.choice_at == std::array<int, 3>{1, 0, 2};
    });
    REQUIRE(swap_ab != perms.end());
    auto a = split_lines(render_prompt(q, 0, Phrasing::One).text);
    auto b = split_lines(render_prompt(q, int(swap_ab - perms.begin()), Phrasing::One).text);
    REQUIRE(a.size() == b.size());
    std::size_t n = a.size();
    // ... stem, A, B, C, Response:
    CHECK(a[n - 5] == b[n - 5]);
    CHECK(a[n - 4].substr(3) == b[n - 3].substr(3));
    CHECK(a[n - 3].substr(3) == b[n - 4].substr(3));
    CHECK(a[n - 2] == b[n - 2]);
}

TEST_CASE("prompts differ only in choice lines and are pairwise distinct") {
    auto ds = synthesize_dataset(40, kReferenceTypeMix, 5);
    for (const auto& q : ds.questions) {
        for (Phrasing ph : {Phrasing::One, Phrasing::Two}) {
            std::set<std::string> texts;
            auto base = split_lines(render_prompt(q, 0, ph).text);
            std::multiset<std::string> base_choices(base.end() - 4, base.end() - 1);
            for (int k = 0; k < 6; ++k) {
                auto text = render_prompt(q, k, ph).text;
                texts.insert(text);
                auto lines = split_lines(text);
                REQUIRE(lines.size() == base.size());
                for (std::size_t i = 0; i + 4 < lines.size(); ++i) CHECK(lines[i] == base[i]);
                CHECK(lines.back() == "Response:");
                std::multiset<std::string> texts_only, base_only;
                for (auto it = lines.end() - 4; it != lines.end() - 1; ++it) texts_only.insert(it->substr(3));
                for (const auto& l : base_choices) base_only.insert(l.substr(3));
                CHECK(texts_only == base_only);
            }
            CHECK(texts.size() == 6);
        }
    }
}

TEST_CASE("label styles") {
    CHECK(format_label(LabelStyle::Paren, 'B') == "B)");
    CHECK(format_label(LabelStyle::Dot, 'B') == "B.");
    CHECK(format_label(LabelStyle::Wrapped, 'B') == "(B)");
    for (auto s : {LabelStyle::Paren, LabelStyle::Dot, LabelStyle::Wrapped}) {
        CHECK(label_style_from_string(to_string(s)) == s);
    }
    CHECK_THROWS_AS(label_style_from_string("A:"), std::invalid_argument);
    auto q = testing::make_question("w", {0.5, 0.3, 0.2});
    CHECK(render_prompt(q, 0, Phrasing::One, LabelStyle::Wrapped).text.find("\n(C) w third\n") !=
          std::string::npos);
}
