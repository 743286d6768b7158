#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgconv/kg_store.h"
#include "kgconv/predicate_catalog.h"

namespace kgconv {

enum class FactKind { simple, complex, qualified };

const char* to_string(FactKind k);
FactKind fact_kind_from_string(const std::string& s);

// simple: exactly one object, no qualifier
// complex: two or more objects of one predicate, dump order
// qualified: one object holding under (qualifier_predicate, qualifier_value)
struct Fact {
    EntityId subject;
    PropertyId predicate;
    std::vector<Value> objects;
    FactKind kind = FactKind::simple;
    std::optional<PropertyId> qualifier_predicate;
    std::optional<Value> qualifier_value;

    bool operator==(const Fact&) const = default;
};

struct ExtractOptions {
    /// Keep only the best-ranked statements of each predicate (preferred if
    /// any, else normal). Default keeps every rank.
    bool preferred_only = false;
};

/// Simple and complex facts for the unqualified rows of `selected`.
/// Throws NotFoundError for an unknown entity and ContractViolation when the
/// selection's type is not one of the entity's types.
std::vector<Fact> extract_facts(const KgStore& store, const EntityId& e, const SelectedPredicates& selected,
                                const ExtractOptions& options = {});

/// Qualified facts for the qualified rows of `selected`: one per (statement,
/// matching qualifier value). Statements carrying none of the selected
/// qualifiers of their predicate fall back to one simple/complex fact, unless
/// the unqualified row of that predicate is selected too.
std::vector<Fact> extract_qualified_facts(const KgStore& store, const EntityId& e, const SelectedPredicates& selected,
                                          const ExtractOptions& options = {});

/// Both of the above, in selection row order.
std::vector<Fact> extract_all_facts(const KgStore& store, const EntityId& e, const SelectedPredicates& selected,
                                    const ExtractOptions& options = {});

/// A fact with everything downstream stages need to phrase and answer it.
struct FactRecord {
    std::string id;
    Fact fact;
    std::string subject_label;
    EntityId subject_type;
    std::string subject_type_label;
    std::string predicate_label;
    std::string qualifier_label;
    std::vector<std::string> rendered_objects;
    std::optional<std::string> rendered_qualifier;
    std::size_t source_index = 0;  // position in the entity's extraction order
};

FactRecord make_fact_record(const KgStore& store, const Fact& fact, const SelectedPredicates& selection,
                            std::size_t source_index);

/// The selection used for an entity: the first of its types that has one.
const SelectedPredicates* selection_for(const EntityRecord& record,
                                        const std::map<EntityId, SelectedPredicates>& selections);

/// Facts of every entity whose type has a selection, in store order.
std::vector<FactRecord> extract_store_facts(const KgStore& store,
                                            const std::map<EntityId, SelectedPredicates>& selections,
                                            const ExtractOptions& options = {});

nlohmann::ordered_json to_json(const FactRecord& r);
FactRecord fact_record_from_json(const nlohmann::json& j);
void write_facts_file(const std::string& path, std::span<const FactRecord> facts);
std::vector<FactRecord> read_facts_file(const std::string& path);

}  // namespace kgconv
