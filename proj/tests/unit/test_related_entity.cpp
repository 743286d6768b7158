#include <doctest.h>

#include <sstream>

#include "kgconv/related_entity.h"
#include "test_support.h"

using namespace kgconv;

namespace {

long long numeric(const EntityId& id) { return std::stoll(id.value.substr(1)); }

// Exhaustive scan: best score, ties to the numerically smallest id.
std::optional<std::pair<EntityId, double>> scan(const std::vector<std::pair<EntityId, std::vector<double>>>& rows,
                                                const EntityId& anchor, const std::set<EntityId>& allowed) {
    std::vector<double> av;
    for (const auto& [id, v] : rows)
        if (id == anchor) av = v;
    double best = -1e300;
    for (const auto& [id, v] : rows) {
        if (id == anchor || !allowed.count(id)) continue;
        double s = 0;
        for (std::size_t i = 0; i < v.size(); ++i) s += av[i] * v[i];
        best = std::max(best, s);
    }
    std::optional<std::pair<EntityId, double>> out;
    for (const auto& [id, v] : rows) {
        if (id == anchor || !allowed.count(id)) continue;
        double s = 0;
        for (std::size_t i = 0; i < v.size(); ++i) s += av[i] * v[i];
        if (s == best && (!out || numeric(id) < numeric(out->first))) out = {{id, s}};
    }
    return out;
}

}  // namespace

TEST_CASE("most_similar equals an exhaustive scan, ties to the smallest id") {
    Rng rng(2024);
    for (int round = 0; round < 40; ++round) {
        const std::size_t n = 2 + rng.below(49);
        const std::size_t dim = 1 + rng.below(6);
        std::vector<std::pair<EntityId, std::vector<double>>> rows;
        EmbeddingIndex index(dim);
        for (std::size_t i = 0; i < n; ++i) {
            std::vector<double> v(dim);
            for (auto& x : v) x = static_cast<double>(rng.below(5)) - 2.0;  // small ints force ties
            EntityId id("Q" + std::to_string(1 + rng.below(500)));
            if (index.find(id)) continue;
            index.put(id, v);
            rows.emplace_back(id, v);
        }
        std::set<EntityId> allowed;
        for (const auto& [id, _] : rows)
            if (rng.below(3) != 0) allowed.insert(id);
        const EntityId anchor = rows[rng.below(rows.size())].first;
        const auto got = most_similar(index, anchor, [&](const EntityId& c) { return allowed.count(c) != 0; });
        const auto want = scan(rows, anchor, allowed);
        REQUIRE(got.has_value() == want.has_value());
        if (got) {
            CHECK(got->related == want->first);
            CHECK(got->score == want->second);
        }
    }
}

TEST_CASE("natural order decides ties") {
    EmbeddingIndex index(1);
    index.put(EntityId("Q1"), {1});
    index.put(EntityId("Q10"), {2});
    index.put(EntityId("Q9"), {2});
    const auto r = most_similar(index, EntityId("Q1"), nullptr);
    REQUIRE(r);
    CHECK(r->related == EntityId("Q9"));
    CHECK_THROWS_AS(most_similar(index, EntityId("Q2"), nullptr), NotFoundError);
    EmbeddingIndex lonely(1);
    lonely.put(EntityId("Q1"), {1});
    CHECK_FALSE(most_similar(lonely, EntityId("Q1"), nullptr));
}

TEST_CASE("embedding file format") {
    std::istringstream in("Q1\t1 2 3\nQ2\t-0.5 0 1e-3\n\nQ1\t4 5 6\n");
    const auto idx = load_embeddings(in);
    CHECK(idx.dimension() == 3);
    CHECK(idx.size() == 2);
    CHECK(*idx.find(EntityId("Q1")) == std::vector<double>{4, 5, 6});
    std::istringstream again(export_embeddings(idx));
    const auto idx2 = load_embeddings(again);
    CHECK(*idx2.find(EntityId("Q2")) == *idx.find(EntityId("Q2")));

    std::istringstream bad_dim("Q1\t1 2\nQ2\t1 2 3\n");
    try {
        load_embeddings(bad_dim);
        FAIL("expected ParseError");
    } catch (const ParseError& e) {
        CHECK(std::string(e.what()).find("row 2") != std::string::npos);
    }
    std::istringstream bad_num("Q1\t1 x\n");
    CHECK_THROWS_AS(load_embeddings(bad_num), ParseError);
    std::istringstream nan("Q1\tnan\n");
    CHECK_THROWS_AS(load_embeddings(nan), ParseError);
    EmbeddingIndex e(2);
    CHECK_THROWS_AS(e.put(EntityId("Q1"), {1}), ContractViolation);
}

TEST_CASE("popularity needs a person type and enough statements") {
    const auto& store = testing::fixture_world().store;
    CHECK(is_popular(store, EntityId("Q9301"), 10));
    CHECK_FALSE(is_popular(store, EntityId("Q9301"), 1000));
    CHECK_FALSE(is_popular(store, EntityId("Q9401"), 1));  // a business
}

TEST_CASE("related pairs over the fixture share a type and are most similar") {
    const auto& w = testing::fixture_world();
    const auto index = ontology_embeddings(w.store);
    CHECK(index.size() == w.store.size());
    std::size_t persons = 0;
    for (const auto& e : w.store.entities())
        if (is_popular(w.store, e.id, 10)) ++persons;
    CHECK(w.related.size() == persons);
    for (const auto& p : w.related) {
        const auto a = types_of(w.store, p.anchor);
        const auto b = types_of(w.store, p.related);
        bool shared = false;
        for (const auto& t : a) shared = shared || b.count(t);
        CHECK(shared);
        CHECK(p.anchor != p.related);
        // nobody sharing a type scores higher
        const auto& av = *index.find(p.anchor);
        for (const auto& e : w.store.entities()) {
            if (e.id == p.anchor) continue;
            const auto et = types_of(w.store, e.id);
            bool s = false;
            for (const auto& t : a) s = s || et.count(t);
            if (s) CHECK(inner_product(av, *index.find(e.id)) <= p.score);
        }
    }
}

TEST_CASE("related jsonl round trip") {
    testing::TempDir dir;
    const std::vector<RelatedPair> pairs{{EntityId("Q1"), EntityId("Q2"), 0.25}, {EntityId("Q3"), EntityId("Q4"), -1}};
    write_file(dir.str("r.jsonl"), related_to_jsonl(pairs));
    const auto back = read_related_file(dir.str("r.jsonl"));
    REQUIRE(back.size() == 2);
    CHECK(back[1].related == EntityId("Q4"));
    CHECK(back[0].score == 0.25);
}
