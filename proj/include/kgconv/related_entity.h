#pragma once

#include <functional>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "kgconv/kg_store.h"

namespace kgconv {

/// Dense entity vectors of one fixed dimension. Immutable once loaded.
class EmbeddingIndex {
public:
    explicit EmbeddingIndex(std::size_t dimension = 0) : dimension_(dimension) {}

    std::size_t dimension() const { return dimension_; }
    std::size_t size() const { return ids_.size(); }
    /// Ids in first-insertion order.
    const std::vector<EntityId>& ids() const { return ids_; }
    const std::vector<double>* find(const EntityId& id) const;

    /// Replaces an existing vector (returns false in that case).
    /// Throws ContractViolation on a dimension mismatch or non-finite component.
    bool put(const EntityId& id, std::vector<double> v);

private:
    std::size_t dimension_;
    std::vector<EntityId> ids_;
    std::unordered_map<EntityId, std::vector<double>> vectors_;
};

/// Reads "<id>\t<v1> <v2> ... <vd>" lines. Duplicate ids: last wins, with a
/// warning. Throws ParseError naming the row on a dimension mismatch.
EmbeddingIndex load_embeddings(std::istream& in);
EmbeddingIndex load_embeddings_file(const std::string& path);
/// Same line format, ids in index order, shortest round-trip float text.
std::string export_embeddings(const EmbeddingIndex& index);

double inner_product(std::span<const double> a, std::span<const double> b);

struct RelatedPair {
    EntityId anchor;
    EntityId related;
    double score = 0.0;
};

using CandidateFilter = std::function<bool(const EntityId&)>;

/// Argmax of <anchor, candidate> over the indexed candidates accepted by the
/// filter, anchor excluded; ties go to the smallest id
/// in natural order (Q9 before Q10). Throws NotFoundError
/// if the anchor has no vector.
std::optional<RelatedPair> most_similar(const EmbeddingIndex& index, const EntityId& anchor,
                                        const CandidateFilter& candidates);

inline const EntityId kPersonType{"Q5"};

/// Person-typed and carrying at least `threshold` statements.
bool is_popular(const KgStore& store, const EntityId& e, std::size_t threshold,
                const EntityId& person_type = kPersonType);

/// Fallback when no embedding file is supplied: one-hot bag of each entity's
/// type ids and predicate ids over the store vocabulary.
EmbeddingIndex ontology_embeddings(const KgStore& store);

struct RelatedOptions {
    std::size_t min_statements = 10;
    EntityId person_type = kPersonType;
    bool require_shared_type = true;
};

/// One related entity per popular Person anchor, in store order.
std::vector<RelatedPair> find_related(const KgStore& store, const EmbeddingIndex& index,
                                      const RelatedOptions& options = {});

std::string related_to_jsonl(std::span<const RelatedPair> pairs);
std::vector<RelatedPair> read_related_file(const std::string& path);

}  // namespace kgconv
