#include "kgconv/related_entity.h"

#include "kgconv/common.h"

#include <spdlog/spdlog.h>

#include <charconv>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

namespace kgconv {

const std::vector<double>* EmbeddingIndex::find(const EntityId& id) const {
    const auto it = vectors_.find(id);
    return it == vectors_.end() ? nullptr : &it->second;
}

bool EmbeddingIndex::put(const EntityId& id, std::vector<double> v) {
    if (v.size() != dimension_)
        throw ContractViolation("vector for " + id.value + " has dimension " + std::to_string(v.size()) +
                                ", index expects " + std::to_string(dimension_));
    for (double x : v)
        if (!std::isfinite(x)) throw ContractViolation("non-finite component in vector for " + id.value);
    auto [it, inserted] = vectors_.insert_or_assign(id, std::move(v));
    if (inserted) ids_.push_back(id);
    return inserted;
}

EmbeddingIndex load_embeddings(std::istream& in) {
    std::optional<EmbeddingIndex> index;
    std::string line;
    std::size_t row = 0;
    while (std::getline(in, line)) {
        ++row;
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (trim(line).empty()) continue;
        const auto tab = line.find('\t');
        if (tab == std::string::npos || tab == 0)
            throw ParseError("embedding row " + std::to_string(row) + ": expected '<id>\\t<values>'", line);
        EntityId id{line.substr(0, tab)};
        std::vector<double> v;
        const char* p = line.data() + tab + 1;
        const char* end = line.data() + line.size();
        while (p < end) {
            while (p < end && (*p == ' ' || *p == '\t')) ++p;
            if (p >= end) break;
            double x = 0;
            auto [next, ec] = std::from_chars(p, end, x);
            if (ec != std::errc())
                throw ParseError("embedding row " + std::to_string(row) + ": bad number", line);
            v.push_back(x);
            p = next;
        }
        if (!index) {
            if (v.empty()) throw ParseError("embedding row " + std::to_string(row) + ": empty vector", line);
            index.emplace(v.size());
        }
        if (v.size() != index->dimension())
            throw ParseError("embedding row " + std::to_string(row) + ": dimension " + std::to_string(v.size()) +
                                 " differs from " + std::to_string(index->dimension()),
                             line);
        try {
            if (!index->put(id, std::move(v)))
                spdlog::warn("embedding row {}: duplicate id {}, keeping the later vector", row, id.value);
        } catch (const ContractViolation& ex) {
            throw ParseError("embedding row " + std::to_string(row) + ": " + ex.what(), line);
        }
    }
    return index ? std::move(*index) : EmbeddingIndex{};
}

EmbeddingIndex load_embeddings_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open embeddings " + path);
    return load_embeddings(in);
}

std::string export_embeddings(const EmbeddingIndex& index) {
    std::string out;
    char buf[64];
    for (const auto& id : index.ids()) {
        out += id.value;
        out += '\t';
        const auto& v = *index.find(id);
        for (std::size_t i = 0; i < v.size(); ++i) {
            if (i) out += ' ';
            auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v[i]);
            out.append(buf, end);
        }
        out += '\n';
    }
    return out;
}

double inner_product(std::span<const double> a, std::span<const double> b) {
    double sum = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) sum += a[i] * b[i];
    return sum;
}

std::optional<RelatedPair> most_similar(const EmbeddingIndex& index, const EntityId& anchor,
                                        const CandidateFilter& candidates) {
    const auto* av = index.find(anchor);
    if (!av) throw NotFoundError("no embedding for anchor " + anchor.value);
    std::optional<RelatedPair> best;
    for (const auto& id : index.ids()) {
        if (id == anchor) continue;
        if (candidates && !candidates(id)) continue;
        const double score = inner_product(*av, *index.find(id));
        if (!best || score > best->score ||
            (score == best->score && natural_id_less(id.value, best->related.value)))
            best = RelatedPair{anchor, id, score};
    }
    return best;
}

bool is_popular(const KgStore& store, const EntityId& e, std::size_t threshold, const EntityId& person_type) {
    const auto& record = store.at(e);
    if (record.statements.size() < threshold) return false;
    const auto types = types_of(store, e);
    return types.count(person_type) != 0;
}

EmbeddingIndex ontology_embeddings(const KgStore& store) {
    std::map<std::string, std::size_t> vocab;
    for (const auto& e : store.entities()) {
        for (const auto& t : e.types) vocab.emplace("T:" + t.value, 0);
        for (const auto& s : e.statements) vocab.emplace("P:" + s.property.value, 0);
    }
    std::size_t next = 0;
    for (auto& [key, slot] : vocab) slot = next++;

    EmbeddingIndex index(vocab.size());
    if (vocab.empty()) return index;
    for (const auto& e : store.entities()) {
        std::vector<double> v(vocab.size(), 0.0);
        for (const auto& t : e.types) v[vocab.at("T:" + t.value)] = 1.0;
        for (const auto& s : e.statements) v[vocab.at("P:" + s.property.value)] = 1.0;
        index.put(e.id, std::move(v));
    }
    return index;
}

std::vector<RelatedPair> find_related(const KgStore& store, const EmbeddingIndex& index,
                                      const RelatedOptions& options) {
    std::vector<RelatedPair> out;
    for (const auto& e : store.entities()) {
        if (!is_popular(store, e.id, options.min_statements, options.person_type)) continue;
        if (!index.find(e.id)) continue;
        const std::set<EntityId> anchor_types(e.types.begin(), e.types.end());
        auto filter = [&](const EntityId& c) {
            const auto* record = store.find(c);
            if (!record) return false;
            if (!options.require_shared_type) return true;
            for (const auto& t : record->types)
                if (anchor_types.count(t)) return true;
            return false;
        };
        if (auto pair = most_similar(index, e.id, filter)) out.push_back(*pair);
    }
    return out;
}

std::string related_to_jsonl(std::span<const RelatedPair> pairs) {
    std::string out;
    for (const auto& p : pairs) {
        nlohmann::ordered_json j;
        j["anchor"] = p.anchor.value;
        j["related"] = p.related.value;
        j["score"] = p.score;
        out += j.dump() + "\n";
    }
    return out;
}

std::vector<RelatedPair> read_related_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<RelatedPair> out;
    std::string line;
    while (std::getline(in, line)) {
        if (trim(line).empty()) continue;
        const auto j = nlohmann::json::parse(line);
        out.push_back({EntityId{j.at("anchor").get<std::string>()}, EntityId{j.at("related").get<std::string>()},
                       j.value("score", 0.0)});
    }
    return out;
}

}  // namespace kgconv
