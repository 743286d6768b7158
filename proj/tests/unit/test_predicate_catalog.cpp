#include <doctest.h>

#include <set>

#include "kgconv/mock_models.h"
#include "kgconv/predicate_catalog.h"
#include "kgconv/prompts.h"
#include "test_support.h"

using namespace kgconv;
using nlohmann::json;

namespace {

// One entity of type T1 carrying n distinct predicates P1..Pn, P2 with a qualifier.
KgStore wide_store(int n) {
    KgStoreBuilder b;
    EntityRecord r;
    r.id = EntityId("Q1");
    r.label = "one";
    r.types = {EntityId("T1")};
    for (int i = 1; i <= n; ++i) {
        Statement s{PropertyId("P" + std::to_string(i)), TextValue{"v"}, {}, Rank::normal};
        if (i == 2) s.qualifiers.push_back({PropertyId("P580"), TextValue{"2001"}});
        r.statements.push_back(s);
    }
    b.add(r);
    b.add_label(EntityId("T1"), "Wide Thing");
    return std::move(b).build();
}

std::vector<PredicateRow> rows(std::initializer_list<std::pair<const char*, const char*>> ids) {
    std::vector<PredicateRow> out;
    for (auto [p, q] : ids) {
        PredicateRow r{PropertyId(p), std::string("label ") + p, std::nullopt, ""};
        if (q) {
            r.qualifier = PropertyId(q);
            r.qualifier_label = std::string("label ") + q;
        }
        out.push_back(r);
    }
    return out;
}

}  // namespace

TEST_CASE("predicate table equals a group-by over the members' statements") {
    const auto& store = testing::fixture_world().store;
    for (const char* type : {"Q5", "Q4830453", "Q11424", "Q6256", "Q177220"}) {
        std::set<std::pair<std::string, std::string>> expected;
        for (const auto& j : testing::fixture_lines()) {
            std::set<std::string> types;
            std::vector<std::pair<std::string, std::vector<std::string>>> claims;
            if (j.contains("labels")) {
                for (const auto& [p, sts] : j["claims"].items())
                    for (const auto& s : sts) {
                        std::vector<std::string> qs;
                        if (s.contains("qualifiers"))
                            for (const auto& [qp, _] : s["qualifiers"].items()) qs.push_back(qp);
                        claims.emplace_back(p, qs);
                        if (p == "P31" || p == "P106") types.insert(s["mainsnak"]["datavalue"]["value"]["id"].get<std::string>());
                    }
            } else {
                for (const auto& c : j["claims"]) {
                    std::vector<std::string> qs;
                    if (c.contains("qualifiers"))
                        for (const auto& q : c["qualifiers"]) qs.push_back(q["property"].get<std::string>());
                    claims.emplace_back(c["property"].get<std::string>(), qs);
                    if (c["property"] == "P31" || c["property"] == "P106") types.insert(c["value"]["id"].get<std::string>());
                }
            }
            if (!types.count(type)) continue;
            for (const auto& [p, qs] : claims) {
                expected.emplace(p, "");
                for (const auto& q : qs) expected.emplace(p, q);
            }
        }
        const auto table = extract_predicates(store, EntityId(type));
        std::set<std::pair<std::string, std::string>> got;
        for (const auto& r : table.predicates) got.emplace(r.property.value, r.qualifier ? r.qualifier->value : "");
        CHECK_MESSAGE(got == expected, type);
        CHECK(got.size() == table.predicates.size());
        CHECK(std::is_sorted(table.predicates.begin(), table.predicates.end(), row_less));
    }
    CHECK_THROWS_AS(extract_predicates(store, EntityId("Q123456")), NotFoundError);
}

TEST_CASE("unqualified row sorts before its qualified rows") {
    auto r = rows({{"P169", "P580"}, {"P106", nullptr}, {"P169", nullptr}, {"P169", "P582"}});
    std::sort(r.begin(), r.end(), row_less);
    CHECK(r[0].property == PropertyId("P106"));
    CHECK_FALSE(r[1].qualified());
    CHECK(r[2].qualifier == PropertyId("P580"));
    CHECK(r[3].qualifier == PropertyId("P582"));
}

TEST_CASE("selector prompt layout") {
    const auto batch = rows({{"P412", nullptr}, {"P169", "P580"}});
    const auto req = build_selector_prompt("singer", batch, "prof");
    CHECK(req.system == prompts::kSelectorSystem);
    CHECK(req.user ==
          "Type: singer\nPredicates: [('P412', 'label P412'), ('P169', 'label P169', 'P580', 'label P580')]");
    CHECK(req.model_profile == "prof");
    CHECK_THROWS_AS(build_selector_prompt("x", {}, ""), ContractViolation);
    std::vector<PredicateRow> big(51, batch[0]);
    CHECK_THROWS_AS(build_selector_prompt("x", big, ""), ContractViolation);
    CHECK_NOTHROW(build_selector_prompt("x", std::span(big).first(50), ""));
}

TEST_CASE("selector responses: ids, tuples, qualifiers and strays") {
    const auto batch = rows({{"P19", nullptr}, {"P169", nullptr}, {"P169", "P580"}, {"P169", "P582"}});
    auto all169 = parse_selector_response("['P169']", batch);
    CHECK(all169.selected.size() == 3);
    auto one = parse_selector_response("Here: [('P169', 'ceo', 'P580', 'start time'), P19, 'P77']", batch);
    REQUIRE(one.selected.size() == 2);
    CHECK(one.selected[0].qualifier == PropertyId("P580"));
    CHECK(one.selected[1].property == PropertyId("P19"));
    CHECK(one.dropped == std::vector<std::string>{"P77"});
    auto dup = parse_selector_response("['P19', ('P19', 'x'), 'P19']", batch);
    CHECK(dup.selected.size() == 1);
    CHECK(parse_selector_response("[]", batch).selected.empty());
    CHECK_THROWS_AS(parse_selector_response("none of them", batch), ParseError);
}

TEST_CASE("selection batches at most 50 rows") {
    const auto store = wide_store(123);
    const auto table = extract_predicates(store, EntityId("T1"));
    CHECK(table.predicates.size() == 124);
    CHECK(type_label(store, EntityId("T1")) == "wide thing");
    CHECK(type_label(store, EntityId("T404")) == "T404");
    mock::SelectAllSelector selector;
    const auto sel = select_predicates(selector, EntityId("T1"), "wide thing", table);
    CHECK(selector.request_sizes() == std::vector<std::size_t>{50, 50, 24});
    CHECK(sel.selected.size() == 124);
    CHECK(sel.request_ids.size() == 3);
}

TEST_CASE("parse retries and partial results") {
    const auto store = wide_store(60);
    const auto table = extract_predicates(store, EntityId("T1"));
    testing::ScriptedGateway retry({"I cannot", "['P1', 'P3']", "['P55']"});
    const auto ok = select_predicates(retry, EntityId("T1"), "t", table, {"", 1});
    CHECK(ok.selected.size() == 3);
    CHECK(retry.requests().size() == 3);

    testing::ScriptedGateway strict({"['P1']", "nope"});
    try {
        select_predicates(strict, EntityId("T1"), "t", table, {"", 0});
        FAIL("expected SelectionError");
    } catch (const SelectionError& e) {
        CHECK(e.completed_batches() == 1);
        CHECK(e.total_batches() == 2);
        CHECK(e.partial().selected.size() == 1);
    }
    testing::ScriptedGateway dead;
    CHECK_THROWS_AS(select_predicates(dead, EntityId("T1"), "t", table), SelectionError);
}

TEST_CASE("selections round trip through jsonl, labels refilled from the store") {
    testing::TempDir dir;
    const auto& w = testing::fixture_world();
    std::vector<SelectedPredicates> all;
    for (const auto& [_, s] : w.selections) all.push_back(s);
    write_selected_file(dir.str("p.jsonl"), all);
    const auto back = read_selected_file(dir.str("p.jsonl"), &w.store);
    REQUIRE(back.size() == all.size());
    for (std::size_t i = 0; i < all.size(); ++i) {
        CHECK(back[i].type == all[i].type);
        CHECK(back[i].selected == all[i].selected);
        CHECK(back[i].request_ids == all[i].request_ids);
    }
    CHECK_THROWS_AS(read_selected_file(dir.str("missing.jsonl")), IoError);
}
