#include <doctest.h>

#include <filesystem>
#include <set>

#include "kgconv/prompts.h"
#include "kgconv/template_engine.h"
#include "test_support.h"

using namespace kgconv;
using json = nlohmann::json;

namespace {

FactSignature cricketer(Interaction i = Interaction::voice, std::size_t turns = 2) {
    FactSignature s;
    s.subject_type_label = "cricketer";
    s.interaction = i;
    const std::pair<const char*, const char*> rows[] = {
        {"P1350", "number of matches played/races/starts"}, {"P569", "date of birth"}, {"P54", "member of sports team"},
        {"P27", "country of citizenship"}, {"P19", "place of birth"}, {"P413", "position played"}};
    for (std::size_t k = 0; k < turns; ++k) s.turns.push_back({PropertyId(rows[k].first), rows[k].second, {}, ""});
    return s;
}

FactSignature movie(Interaction i) {
    FactSignature s;
    s.subject_type_label = "movie";
    s.interaction = i;
    s.turns.push_back({PropertyId("P725"), "voice actor", PropertyId("P175"), "performer"});
    s.turns.push_back({PropertyId("P725"), "voice actor", PropertyId("P453"), "character role"});
    return s;
}

// A response that follows every rule, written out by hand per family.
json good_turn(const std::string& subject, Interaction i) {
    json t;
    t["original"] = {"Tell me the age of " + subject, "Age of " + subject + " please", "And " + subject + "'s age"};
    t["deixis"] = {"Tell me their age", "Age of that one please", "And his age"};
    if (i == Interaction::voice) {
        t["disfluencies"] = {"Tell me, um, the age of " + subject, "Age of, uh, " + subject, "And, er, " + subject + "'s age"};
        t["deixis_disfluencies"] = {"Tell me, um, their age", "Age of, uh, that one", "And, er, his age"};
    }
    return t;
}

json good_response(const FactSignature& s) {
    json r;
    for (std::size_t k = 1; k <= s.turns.size(); ++k) {
        r[std::to_string(k)] = good_turn(s.subject_placeholder(), s.interaction);
        r[std::to_string(k)]["answer"] = object_placeholder(k);
    }
    return r;
}

std::set<std::string> rules_of(const std::function<void()>& fn) {
    std::set<std::string> out;
    try {
        fn();
    } catch (const TemplateValidationError& ex) {
        for (const auto& v : ex.report()) out.insert(v.rule);
    }
    return out;
}

}  // namespace

TEST_CASE("voice prompt") {
    const auto sig = cricketer();
    const auto r = build_voice_prompt(sig);
    CHECK(r.system == prompts::kVoiceSystem);
    CHECK(r.user.find("Turn 1: ([cricketer], number of matches played/races/starts, [a])") != std::string::npos);
    CHECK(r.user.find("Turn 2: ([cricketer], date of birth, [b])") != std::string::npos);
    CHECK(r.history.size() == 2);
    CHECK(r.logit_penalties.empty());
    CHECK(build_template_prompt(sig) == r);

    const auto one = build_voice_prompt(cricketer(Interaction::voice, 1));
    CHECK(one.user.find("Turn 1:") != std::string::npos);
    CHECK(one.user.find("Turn 2:") == std::string::npos);

    CHECK_THROWS_AS(build_voice_prompt(cricketer(Interaction::voice, 6)), ContractViolation);
    CHECK_NOTHROW(build_voice_prompt(cricketer(Interaction::voice, 5)));
    CHECK_THROWS_AS(build_voice_prompt(cricketer(Interaction::text)), ContractViolation);
    FactSignature empty;
    empty.subject_type_label = "x";
    CHECK_THROWS_AS(build_voice_prompt(empty), ContractViolation);
}

TEST_CASE("text prompt carries wh-word penalties") {
    const auto r = build_text_prompt(cricketer(Interaction::text));
    CHECK(r.system == prompts::kTextSystem);
    CHECK(r.history.size() == 2);
    for (const char* w : {"who", "whom", "what", "when", "which", "how"}) {
        CHECK(r.logit_penalties.count(w) == 1);
        std::string cap = w;
        cap[0] = static_cast<char>(std::toupper(cap[0]));
        CHECK(r.logit_penalties.count(cap) == 1);
    }
    for (const auto& [k, v] : r.logit_penalties) CHECK(v < 0);
    CHECK_THROWS_AS(build_text_prompt(cricketer(Interaction::voice)), ContractViolation);
    // the same signature always serialises to the same bytes
    CHECK(to_json(r).dump() == to_json(build_text_prompt(cricketer(Interaction::text))).dump());
    CHECK(request_hash(r) == request_hash(build_text_prompt(cricketer(Interaction::text))));
}

TEST_CASE("qualified prompt") {
    const auto r = build_qualified_prompt(movie(Interaction::voice));
    CHECK(r.user.find("Turn 1: ([movie], voice actor, performer, [a])") != std::string::npos);
    CHECK(r.user.find("Turn 2: ([movie], voice actor, character role, [b])") != std::string::npos);
    CHECK(r.logit_penalties.empty());
    const auto t = build_qualified_prompt(movie(Interaction::text));
    CHECK(t.system == prompts::kQualifiedSystem);
    CHECK_FALSE(t.logit_penalties.empty());
    CHECK(build_template_prompt(movie(Interaction::text)) == t);
    CHECK_THROWS_AS(build_qualified_prompt(cricketer()), ContractViolation);
    CHECK_THROWS_AS(build_voice_prompt(movie(Interaction::voice)), ContractViolation);
}

TEST_CASE("well formed responses parse") {
    for (auto i : {Interaction::voice, Interaction::text}) {
        const auto sig = cricketer(i, 1);
        const auto set = parse_template_response(good_response(sig).dump(), sig);
        REQUIRE(set.turns.size() == 1);
        std::size_t strings = 0;
        for (const auto& [name, v] : set.turns.at(1).families) strings += v.size();
        CHECK(strings == (i == Interaction::voice ? 12u : 6u));
        CHECK(set.turns.at(1).answer == "[a]");
        CHECK(validate_template_set(set).empty());
    }
    // prose and fences around the object
    const auto sig = cricketer();
    const std::string chatty = "Sure! Here you go:\n```json\n" + good_response(sig).dump(2) + "\n```\nHope it helps {";
    CHECK(parse_template_response(chatty, sig).turns.size() == 2);
    CHECK_THROWS_AS(parse_template_response(chatty, sig, {true}), ParseError);
    CHECK_NOTHROW(parse_template_response(" " + good_response(sig).dump() + "\n", sig, {true}));
}

TEST_CASE("rule violations are named") {
    const auto sig = cricketer();
    auto r = good_response(sig);
    r["1"]["deixis"][1] = "When did he reach [a]?";
    CHECK(rules_of([&] { parse_template_response(r.dump(), sig); }) == std::set<std::string>{"object-in-question"});

    r = good_response(sig);
    r["2"]["original"].erase(2);
    CHECK(rules_of([&] { parse_template_response(r.dump(), sig); }) == std::set<std::string>{"variant-count"});

    r = good_response(sig);
    r["1"]["original"][0] = "Tell me the age of him";
    CHECK(rules_of([&] { parse_template_response(r.dump(), sig); }) == std::set<std::string>{"subject-missing"});

    r = good_response(sig);
    r["1"]["deixis"][0] = "Does [b] matter?";
    CHECK(rules_of([&] { parse_template_response(r.dump(), sig); }) == std::set<std::string>{"foreign-placeholder"});

    r = good_response(sig);
    r["2"]["answer"] = "[a]";
    CHECK(rules_of([&] { parse_template_response(r.dump(), sig); }) == std::set<std::string>{"answer-mismatch"});

    r = good_response(sig);
    r.erase("2");
    CHECK(rules_of([&] { parse_template_response(r.dump(), sig); }) == std::set<std::string>{"missing-turn"});

    r = good_response(sig);
    r["3"] = r["1"];
    CHECK(rules_of([&] { parse_template_response(r.dump(), sig); }) == std::set<std::string>{"unexpected-turn"});

    r = good_response(sig);
    r["1"].erase("disfluencies");
    CHECK(rules_of([&] { parse_template_response(r.dump(), sig); }) == std::set<std::string>{"missing-family"});

    r = good_response(sig);
    r["1"]["deixis"][2] = "  ";
    CHECK(rules_of([&] { parse_template_response(r.dump(), sig); }) == std::set<std::string>{"empty-question"});

    r = good_response(sig);
    r["1"]["original"] = "not a list";
    CHECK(rules_of([&] { parse_template_response(r.dump(), sig); }).count("schema") == 1);

    const auto text = cricketer(Interaction::text);
    r = good_response(text);
    r["1"]["deixis"][0] = "What is their age";
    CHECK(rules_of([&] { parse_template_response(r.dump(), text); }) == std::set<std::string>{"wh-initial"});
    r["1"]["deixis"][0] = "Whatever their age";
    CHECK_NOTHROW(parse_template_response(r.dump(), text));

    // every problem is listed, not just the first
    r = good_response(sig);
    r["1"]["deixis"][1] = "When did he reach [a]?";
    r["2"]["original"].erase(0);
    try {
        parse_template_response(r.dump(), sig);
        FAIL("expected a validation error");
    } catch (const TemplateValidationError& ex) {
        REQUIRE(ex.report().size() == 2);
        CHECK(ex.report()[0].turn == 1);
        CHECK(ex.report()[0].family == "deixis");
        CHECK(ex.report()[1].turn == 2);
        CHECK(ex.report()[1].family == "original");
    }
}

TEST_CASE("cross-turn object placeholders in qualified sets") {
    const auto sig = movie(Interaction::voice);
    auto r = good_response(sig);
    r["2"]["original"][0] = "voice of [a] in [movie]";
    CHECK_NOTHROW(parse_template_response(r.dump(), sig));
    // not for plain signatures
    const auto plain = cricketer();
    r = good_response(plain);
    r["2"]["original"][0] = "age of [a] in [cricketer]";
    CHECK(rules_of([&] { parse_template_response(r.dump(), plain); }) == std::set<std::string>{"foreign-placeholder"});
}

TEST_CASE("parser never throws anything but its two errors") {
    const auto sig = cricketer();
    Rng rng(21);
    const std::string alphabet = "{}[]\":,1 2abanswer\\original";
    const std::string base = good_response(sig).dump();
    for (int i = 0; i < 3000; ++i) {
        std::string s;
        if (i % 2) {
            s = base;
            for (int k = 0; k < 3; ++k) s[rng.below(s.size())] = alphabet[rng.below(alphabet.size())];
        } else {
            const auto n = rng.below(40);
            for (std::size_t k = 0; k < n; ++k) s += alphabet[rng.below(alphabet.size())];
        }
        try {
            parse_template_response(s, sig);
        } catch (const ParseError&) {
        } catch (const TemplateValidationError&) {
        } catch (const std::exception& ex) {
            FAIL("unexpected exception: " << ex.what() << " for " << s);
        }
    }
}

TEST_CASE("wh-word and placeholder helpers") {
    CHECK(starts_with_wh_word("Who is it"));
    CHECK(starts_with_wh_word("  how's that"));
    CHECK(starts_with_wh_word("WHICH"));
    CHECK_FALSE(starts_with_wh_word("Whoever"));
    CHECK_FALSE(starts_with_wh_word("showing"));
    CHECK(placeholders_in("[x] and [a] then [b") == std::vector<std::string>{"[x]", "[a]", "["});
}

TEST_CASE("shipped in-context examples validate") {
    const std::filesystem::path dir = std::filesystem::path(KGCONV_FIXTURE_DIR) / ".." / ".." / "data" / "in_context";
    int files = 0;
    for (const char* name : {"voice.json", "text.json", "qualified_voice.json", "qualified_text.json"}) {
        const auto j = json::parse(read_file((dir / name).string()));
        REQUIRE(j.at("examples").size() == 2);
        for (const auto& e : j["examples"]) {
            const auto sig = signature_from_json(e.at("signature"));
            CHECK_MESSAGE(validate_template_set(parse_template_response(e.at("response").dump(), sig)).empty(), name);
        }
        ++files;
    }
    CHECK(files == 4);
}

TEST_CASE("cache") {
    testing::TempDir dir;
    TemplateCache cache(dir.str());
    const auto sig = cricketer();
    CHECK_FALSE(cache.get(sig));
    const auto set = parse_template_response(good_response(sig).dump(), sig);
    cache.put(set, "raw");
    const auto before = read_file(cache.path_for(sig));
    cache.put(set, "raw");
    CHECK(read_file(cache.path_for(sig)) == before);
    REQUIRE(cache.get(sig));
    CHECK(*cache.get(sig) == set);
    CHECK(json::parse(before).at("raw_response") == "raw");

    write_file(cache.path_for(sig), "{ not json");
    CHECK_FALSE(cache.get(sig));

    CHECK_FALSE(cache.is_quarantined(sig));
    cache.quarantine(sig, {"bad"});
    CHECK(cache.is_quarantined(sig));
}

TEST_CASE("signature keys separate interactions") {
    const auto& w = testing::fixture_world();
    const Interaction both[] = {Interaction::voice, Interaction::text};
    const auto plan = plan_signatures(w.facts, both);
    std::set<std::string> keys;
    for (const auto& s : plan.signatures) keys.insert(signature_key(s));
    CHECK(keys.size() == plan.signatures.size());
    auto s = cricketer();
    auto t = s;
    t.interaction = Interaction::text;
    CHECK(signature_key(s) != signature_key(t));
    CHECK(signature_from_json(to_json(s)) == s);
    CHECK(signature_from_json(to_json(movie(Interaction::text))) == movie(Interaction::text));
}

TEST_CASE("plan covers every fact row in batches of at most five") {
    const auto& w = testing::fixture_world();
    const Interaction both[] = {Interaction::voice, Interaction::text};
    const auto plan = plan_signatures(w.facts, both);
    for (const auto& s : plan.signatures) {
        CHECK(s.turns.size() >= 1);
        CHECK(s.turns.size() <= kMaxTemplateTurns);
        const bool q = s.turns.front().qualifier.has_value();
        for (const auto& t : s.turns) CHECK(t.qualifier.has_value() == q);
    }
    for (const auto& f : w.facts)
        for (auto i : both) {
            const auto it = plan.slots.find(row_key(f, i));
            REQUIRE(it != plan.slots.end());
            const auto& sig = plan.signatures[it->second.first];
            const auto& turn = sig.turns.at(it->second.second - 1);
            CHECK(sig.interaction == i);
            CHECK(turn.predicate == f.fact.predicate);
            CHECK(turn.qualifier == f.fact.qualifier_predicate);
        }
    // every fixture row found a validated template
    for (const auto& f : w.facts) CHECK(w.index.find(row_key(f, Interaction::voice)));
}

TEST_CASE("retries then quarantine") {
    testing::TempDir dir;
    TemplateCache cache(dir.str());
    const auto sig = cricketer();

    testing::ScriptedGateway bad({"nope", "{}", "{\"1\": 3}"});
    const auto out = generate_templates(bad, sig, cache, {3});
    CHECK(out.quarantined);
    CHECK(out.attempts == 3);
    CHECK(out.failures.size() == 3);
    CHECK_FALSE(out.set);
    CHECK(cache.is_quarantined(sig));
    // no further requests for a quarantined signature
    const auto again = generate_templates(bad, sig, cache, {3});
    CHECK(again.quarantined);
    CHECK(bad.requests().size() == 3);

    const auto other = cricketer(Interaction::voice, 3);
    testing::ScriptedGateway late({"garbage", good_response(other).dump()});
    const auto ok = generate_templates(late, other, cache);
    REQUIRE(ok.set);
    CHECK(ok.attempts == 2);
    CHECK(late.requests().size() == 2);
    CHECK(late.requests()[0] == build_template_prompt(other));

    const auto hit = generate_templates(late, other, cache);
    CHECK(hit.cached);
    CHECK(hit.attempts == 0);
    CHECK(late.requests().size() == 2);
}

TEST_CASE("only an outermost object counts") {
    const auto sig = cricketer();
    const std::string good = good_response(sig).dump();
    CHECK_THROWS_AS(parse_template_response(good.substr(0, good.size() - 30), sig), ParseError);
    CHECK_THROWS_AS(parse_template_response("[" + good + "]", sig), ParseError);
    CHECK_THROWS_AS(parse_template_response(good.substr(0, good.size() - 1) + ",}", sig), ParseError);
    CHECK_NOTHROW(parse_template_response("{broken} " + good, sig));
}
