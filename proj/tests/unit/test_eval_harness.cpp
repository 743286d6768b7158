#include <doctest.h>

#include <atomic>
#include <cmath>

#include "kgconv/eval_harness.h"
#include "kgconv/prompts.h"
#include "oracles.h"
#include "test_support.h"

using namespace kgconv;

namespace {

Conversation conversation(const std::string& id, std::vector<std::pair<std::string, std::string>> qa,
                          ConversationConfig config = {}) {
    Conversation c;
    c.id = id;
    c.config = config;
    for (std::size_t i = 0; i < qa.size(); ++i) {
        ConversationTurn t;
        t.index = i + 1;
        t.question = qa[i].first;
        t.objects = {qa[i].second};
        t.gold_answers = {qa[i].second};
        c.turns.push_back(t);
    }
    return c;
}

std::string ratings_text(std::size_t n, int value) {
    std::string s = "Ratings: [";
    for (std::size_t i = 0; i < n; ++i) s += (i ? ", " : "") + std::to_string(value);
    return s + "]";
}

std::size_t count_blocks(const std::string& user) {
    std::size_t n = 0;
    for (std::size_t p = 0; (p = user.find("Question: ", p)) != std::string::npos; ++p) ++n;
    return n;
}

}  // namespace

TEST_CASE("answer requests replay gold history") {
    const auto first = build_answer_request({}, "Who narrated the Penguins documentary?");
    CHECK(first.system == prompts::kAnswerSystem);
    CHECK(first.history.empty());
    CHECK(to_messages(first).size() == 2);

    const std::vector<GoldTurn> h{{"Who narrated the Penguins documentary?", {"Ed Helms"}}};
    const auto second = build_answer_request(h, "Ummm, who was, hmm, its director?");
    const auto msgs = to_messages(second);
    REQUIRE(msgs.size() == 4);
    CHECK(msgs[0].role == "system");
    CHECK(msgs[1].role == "user");
    CHECK(msgs[1].content == "Who narrated the Penguins documentary?");
    CHECK(msgs[2].role == "assistant");
    CHECK(msgs[2].content == "Ed Helms");
    CHECK(msgs[3].role == "user");
    CHECK(msgs[3].content == "Ummm, who was, hmm, its director?");

    const std::vector<GoldTurn> h2{{"a", {"x"}}, {"b", {"y", "z"}}};
    const auto third = build_answer_request(h2, "c");
    CHECK(third.history.size() == 2);
    CHECK(third.history[1].assistant == "[y, z]");
}

TEST_CASE("answer parsing") {
    auto a = parse_answer("Answer: Ed Helms");
    CHECK(a.kind == AnswerKind::single);
    CHECK(a.values == std::vector<std::string>{"Ed Helms"});
    CHECK_FALSE(a.nonconforming);

    CHECK(parse_answer("Answer: NA").is_na());
    CHECK(parse_answer("  Answer: NA  \n").is_na());
    CHECK_FALSE(parse_answer("Answer: NA, maybe").is_na());
    CHECK_FALSE(parse_answer("NA").is_na());

    a = parse_answer("Answer: ['a', 'b']");
    CHECK(a.kind == AnswerKind::list);
    CHECK(a.values == std::vector<std::string>{"a", "b"});
    CHECK(a.rendered() == "[a, b]");

    a = parse_answer("Let me think.\nAnswer: x\nAnswer: Roy Conli");
    CHECK(a.values == std::vector<std::string>{"Roy Conli"});

    a = parse_answer("Keith Scholey");
    CHECK(a.nonconforming);
    CHECK(a.values == std::vector<std::string>{"Keith Scholey"});

    a = parse_answer("Answer: [O'Brien, Smith]");
    CHECK(a.kind == AnswerKind::list);
    CHECK(a.values.size() == 2);

    CHECK_THROWS_AS(parse_answer("  \n "), ParseError);
}

TEST_CASE("judge request in the paper's layout") {
    std::vector<JudgeTurn> turns{
        {"Who narrated the Penguins documentary?", {"Ed Helms"}, parse_answer("Answer: Ed Helms")},
        {"Ummm, who was, hmm, its director?", {"Alastair Fothergill"}, parse_answer("Answer: NA")},
        {"Who produced the documentary?", {"Alastair Fothergill", "Keith Scholey", "Roy Conli"},
         parse_answer("Answer: Scholey")}};
    const auto r = build_judge_request(turns);
    CHECK(r.system == prompts::kJudgeSystem);
    CHECK(r.history.empty());
    CHECK(count_blocks(r.user) == 3);
    CHECK(r.user.find("Question: Who narrated the Penguins documentary?\nGold Answers: Ed Helms\nCandidates: Ed Helms") !=
          std::string::npos);
    CHECK(r.user.find("Gold Answers: Alastair Fothergill\nCandidates: NA") != std::string::npos);
    CHECK(r.user.find("Gold Answers: [Alastair Fothergill, Keith Scholey, Roy Conli]\nCandidates: Scholey") !=
          std::string::npos);
    // turns in order
    CHECK(r.user.find("Penguins") < r.user.find("director"));
    CHECK(r.user.find("director") < r.user.find("produced"));
    CHECK_THROWS_AS(build_judge_request({}), ContractViolation);
}

TEST_CASE("rating parsing") {
    CHECK(parse_ratings("Ratings: [1, 0, 1]", 3).ratings == std::vector<int>{1, 0, 1});
    CHECK(parse_ratings("[1, 0, 1]", 3).ratings == std::vector<int>{1, 0, 1});
    CHECK(parse_ratings("Thinking [9]. Ratings: [0,1]", 2).ratings == std::vector<int>{0, 1});
    CHECK_THROWS_AS(parse_ratings("Ratings: [1]", 3), JudgeParseError);
    CHECK_THROWS_AS(parse_ratings("Ratings: [2,0,1]", 3), JudgeParseError);
    CHECK_THROWS_AS(parse_ratings("no list here", 1), JudgeParseError);
    CHECK_THROWS_AS(parse_ratings("Ratings: [1]", 0), ContractViolation);
}

TEST_CASE("metrics by hand") {
    std::vector<ScoredConversation> s{{"a", "c", {1, 0}, {}}, {"b", "c", {1, 1, 1}, {}}};
    auto r = compute_metrics(s);
    CHECK(r.mean_turn == doctest::Approx(0.8).epsilon(1e-15));
    CHECK(r.mean_conv == doctest::Approx(0.75).epsilon(1e-15));
    CHECK(r.na_ratio == 0.0);

    std::vector<ScoredConversation> na{{"a", "c", {0, 0}, {true, true}}};
    r = compute_metrics(na);
    CHECK(r.mean_turn == 0.0);
    CHECK(r.na_ratio == 1.0);

    std::vector<ScoredConversation> one{{"a", "c", {1, 1}, {}}};
    r = compute_metrics(one);
    CHECK(r.mean_turn == 1.0);
    CHECK(r.mean_conv == 1.0);

    CHECK_THROWS_AS(compute_metrics({}), ContractViolation);
    std::vector<ScoredConversation> empty{{"a", "c", {}, {}}};
    CHECK_THROWS_AS(compute_metrics(empty), ContractViolation);
}

TEST_CASE("metrics match the fold oracle on random sets") {
    Rng rng(31);
    for (int set = 0; set < 50; ++set) {
        std::vector<ScoredConversation> s(1 + rng.below(40));
        for (auto& c : s) {
            const auto n = 1 + rng.below(8);
            for (std::size_t i = 0; i < n; ++i) {
                c.ratings.push_back(static_cast<int>(rng.below(2)));
                c.na.push_back(rng.below(5) == 0);
            }
        }
        const auto got = compute_metrics(s);
        const auto want = testing::oracle_metrics(s);
        CHECK(std::abs(got.mean_turn - want.mean_turn) <= 1e-12);
        CHECK(std::abs(got.mean_conv - want.mean_conv) <= 1e-12);
        CHECK(std::abs(got.na_ratio - want.na_ratio) <= 1e-12);
        CHECK(got.turns == want.turns);
        CHECK(got.na_turns == want.na_turns);
        CHECK(got.mean_turn >= 0.0);
        CHECK(got.mean_turn <= 1.0);
        if (s.size() == 1) CHECK(std::abs(got.mean_turn - got.mean_conv) <= 1e-12);
    }
}

TEST_CASE("evaluate with scripted models") {
    ConversationConfig text;
    text.interaction = Interaction::text;
    std::vector<Conversation> ds{
        conversation("c1", {{"q1", "A"}, {"q2", "B"}, {"q3", "C"}}),
        conversation("c2", {{"r1", "D"}, {"r2", "E"}}, text),
    };

    // the answerer gets the gold history, never its own answers
    testing::FnGateway answerer([&](const ChatRequest& r) -> std::string {
        for (const auto& ds_conv : ds)
            for (std::size_t k = 0; k < ds_conv.turns.size(); ++k)
                if (ds_conv.turns[k].question == r.user) {
                    CHECK(r.history.size() == k);
                    for (std::size_t j = 0; j < k; ++j) {
                        CHECK(r.history[j].user == ds_conv.turns[j].question);
                        CHECK(r.history[j].assistant == ds_conv.turns[j].objects[0]);
                    }
                }
        if (r.user == "q2") return "Answer: NA";
        return "Answer: wrong-on-purpose";
    });
    testing::FnGateway judge([](const ChatRequest& r) { return ratings_text(count_blocks(r.user), 1); });

    EvalOptions o;
    o.threads = 2;
    const auto res = evaluate_dataset(answerer, judge, ds, o);
    CHECK(res.unscored.empty());
    REQUIRE(res.conversations.size() == 2);
    REQUIRE(res.conversations[0].scored);
    // the NA turn is rated 0 whatever the judge said
    CHECK(res.conversations[0].scored->ratings == std::vector<int>{1, 0, 1});
    CHECK(res.conversations[0].scored->na == std::vector<bool>{false, true, false});
    CHECK(res.overall.turns == 5);
    CHECK(res.overall.na_turns == 1);
    CHECK(res.overall.mean_turn == doctest::Approx(0.8));
    CHECK(res.overall.mean_conv == doctest::Approx((2.0 / 3.0 + 1.0) / 2.0));
    CHECK(res.per_config.size() == 2);
    CHECK(res.per_config.at("text").mean_turn == 1.0);

    const auto j = to_json(res);
    CHECK(j["schema"] == kEvalSchema);
    CHECK(j["per_config"].size() == 2);
    CHECK(j["per_config"][0].contains("mean_turn"));
    CHECK(format_eval_table(res).find("voice") != std::string::npos);
}

TEST_CASE("judge retry then unscored") {
    std::vector<Conversation> ds{conversation("c1", {{"q1", "A"}, {"q2", "B"}})};
    testing::FnGateway answerer([](const ChatRequest&) { return std::string("Answer: A"); });

    std::atomic<int> calls{0};
    testing::FnGateway flaky([&](const ChatRequest&) {
        return ++calls == 1 ? std::string("Ratings: [1]") : std::string("Ratings: [1, 1]");
    });
    auto res = evaluate_dataset(answerer, flaky, ds);
    CHECK(calls == 2);
    REQUIRE(res.conversations[0].scored);
    CHECK(res.unscored.empty());

    calls = 0;
    testing::FnGateway broken([&](const ChatRequest&) {
        ++calls;
        return std::string("I cannot rate this");
    });
    res = evaluate_dataset(answerer, broken, ds);
    CHECK(calls == 2);
    CHECK_FALSE(res.conversations[0].scored);
    CHECK(res.unscored == std::vector<std::string>{"c1"});
    CHECK_FALSE(res.conversations[0].failure.empty());
    CHECK(res.overall.conversations == 0);
}

TEST_CASE("lists render bracketed") {
    const std::vector<std::string> one{"x"}, many{"x", "y"};
    CHECK(render_answer_list(one) == "x");
    CHECK(render_answer_list(many) == "[x, y]");
}
