#pragma once

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgconv/gateway.h"
#include "kgconv/kg_store.h"

namespace kgconv {

/// A predicate of a type, optionally paired with one qualifier predicate
/// (the "relationship predicate" of a qualified fact).
struct PredicateRow {
    PropertyId property;
    std::string label;
    std::optional<PropertyId> qualifier;
    std::string qualifier_label;

    bool qualified() const { return qualifier.has_value(); }
    bool same_key(const PredicateRow& o) const { return property == o.property && qualifier == o.qualifier; }
    bool operator==(const PredicateRow&) const = default;
};

/// Natural order on the predicate id; the unqualified row sorts before the
/// qualified rows of the same predicate.
bool row_less(const PredicateRow& a, const PredicateRow& b);

struct TypePredicateTable {
    EntityId type;
    std::vector<PredicateRow> predicates;  // sorted by row_less, unique
};

struct SelectedPredicates {
    EntityId type;
    std::string type_label;
    std::vector<PredicateRow> selected;
    std::string model;
    std::vector<std::string> request_ids;  // request hashes, one per batch
};

inline constexpr std::size_t kMaxSelectorBatch = 50;

/// Lowercased English label of a type entity, or its id if unlabelled.
std::string type_label(const KgStore& store, const EntityId& type);

/// Every predicate carried by at least one entity of `t`, plus one row per
/// distinct qualifier predicate seen on it. Throws NotFoundError for a type
/// without members.
TypePredicateTable extract_predicates(const KgStore& store, const EntityId& t);

/// Throws ContractViolation unless 1 <= batch.size() <= 50.
ChatRequest build_selector_prompt(std::string_view type_label, std::span<const PredicateRow> batch,
                                  std::string model_profile = {});

struct SelectorParse {
    std::vector<PredicateRow> selected;  // batch rows, first-mention order
    std::vector<std::string> dropped;    // ids the model returned that were not in the batch
};

/// Reads the bracketed list of ids or (id, name[, qualifier_id, qualifier_name])
/// tuples. A bare id selects every batch row of that predicate; a tuple naming
/// a qualifier selects just that row. Throws ParseError if no list is found.
SelectorParse parse_selector_response(std::string_view text, std::span<const PredicateRow> batch);

class SelectionError : public Error {
public:
    SelectionError(const std::string& what, SelectedPredicates partial, std::size_t completed, std::size_t total)
        : Error(what), partial_(std::move(partial)), completed_(completed), total_(total) {}
    const SelectedPredicates& partial() const { return partial_; }
    std::size_t completed_batches() const { return completed_; }
    std::size_t total_batches() const { return total_; }

private:
    SelectedPredicates partial_;
    std::size_t completed_;
    std::size_t total_;
};

struct SelectorOptions {
    std::string model_profile;
    int parse_retries = 1;
};

/// Splits the table into <=50-row batches (row_less order), one gateway call
/// each, and merges the picks keeping first occurrence.
SelectedPredicates select_predicates(ChatGateway& gateway, const EntityId& t, std::string_view type_label,
                                     const TypePredicateTable& table, const SelectorOptions& options = {});

nlohmann::ordered_json to_json(const SelectedPredicates& s);
SelectedPredicates selected_from_json(const nlohmann::json& j, const KgStore* store = nullptr);

void write_selected_file(const std::string& path, std::span<const SelectedPredicates> all);
/// Property labels are refilled from `store` when given.
std::vector<SelectedPredicates> read_selected_file(const std::string& path, const KgStore* store = nullptr);

}  // namespace kgconv
