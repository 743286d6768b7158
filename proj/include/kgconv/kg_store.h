#pragma once

#include <compare>
#include <cstddef>
#include <functional>
#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <unordered_map>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

namespace kgconv {

template <typename Tag>
struct StrongId {
    std::string value;

    StrongId() = default;
    explicit StrongId(std::string v) : value(std::move(v)) {}

    bool empty() const { return value.empty(); }
    const std::string& str() const { return value; }
    auto operator<=>(const StrongId&) const = default;
};

struct EntityTag {};
struct PropertyTag {};

/// Knowledge-graph item ("Q<digits>" in Wikidata, any non-empty token accepted).
using EntityId = StrongId<EntityTag>;
/// Predicate id ("P<digits>").
using PropertyId = StrongId<PropertyTag>;

/// Orders ids like "P31" < "P106" (numeric suffix) and falls back to
/// plain lexicographic order for anything else.
bool natural_id_less(const std::string& a, const std::string& b);

struct EntityRef {
    EntityId id;
    bool operator==(const EntityRef&) const = default;
};
struct TextValue {
    std::string text;
    bool operator==(const TextValue&) const = default;
};
struct Quantity {
    std::string amount;  // decimal as written in the dump, e.g. "+12.5"
    std::optional<EntityId> unit;
    bool operator==(const Quantity&) const = default;
};
struct Timestamp {
    std::string time;    // "+2015-03-01T00:00:00Z"
    int precision = 11;  // Wikidata precision code: 9 year, 10 month, 11 day
    bool operator==(const Timestamp&) const = default;
};
struct OtherValue {
    std::string raw;
    bool operator==(const OtherValue&) const = default;
};

using Value = std::variant<EntityRef, TextValue, Quantity, Timestamp, OtherValue>;

nlohmann::ordered_json value_to_json(const Value& v);
/// Throws ParseError on an unknown kind or missing field.
Value value_from_json(const nlohmann::json& j);

/// Truncates an ISO-8601 timestamp to its precision: "2015-03-01", "2015-03", "2015".
std::string render_timestamp(const Timestamp& t);

enum class Rank { deprecated, normal, preferred };

struct Qualifier {
    PropertyId property;
    Value value;
    bool operator==(const Qualifier&) const = default;
};

struct Statement {
    PropertyId property;
    Value value;
    std::vector<Qualifier> qualifiers;
    Rank rank = Rank::normal;
    bool operator==(const Statement&) const = default;
};

struct EntityRecord {
    EntityId id;
    std::string label;
    std::vector<std::string> aliases;
    std::vector<EntityId> types;  // InstanceOf and Occupation targets, first-seen order
    std::vector<Statement> statements;
};

struct DatasetStats {
    std::size_t entity_count = 0;
    std::size_t fact_count = 0;
    std::size_t unique_type_count = 0;
    std::size_t unique_predicate_count = 0;
    bool operator==(const DatasetStats&) const = default;
};

struct Provenance {
    std::string dump;
    std::string cutoff;
};

inline const PropertyId kInstanceOf{"P31"};
inline const PropertyId kOccupation{"P106"};

class KgStoreBuilder;

/// Immutable entity/fact store. Safe to share across reader threads.
class KgStore {
public:
    KgStore() = default;

    std::span<const EntityRecord> entities() const { return entities_; }
    std::size_t size() const { return entities_.size(); }

    const EntityRecord* find(const EntityId& id) const;
    /// Throws NotFoundError.
    const EntityRecord& at(const EntityId& id) const;

    /// Entities carrying type `t`, in ingest order. Empty if the type is unknown.
    std::span<const EntityId> entities_of_type(const EntityId& t) const;
    /// All type ids with at least one member, naturally ordered.
    std::vector<EntityId> type_ids() const;

    /// English label of any labelled entity seen during ingest, kept or not.
    std::optional<std::string> label_of(const EntityId& id) const;
    /// Property label, or the raw id when the dump carried none.
    std::string property_label(const PropertyId& p) const;
    const std::map<PropertyId, std::string>& property_labels() const { return property_labels_; }
    /// Labels of entities that were seen but not kept, sorted by id.
    std::vector<std::pair<std::string, std::string>> labels_sorted() const;

    /// Display text for a value. Total: unknown entities render as their id.
    std::string render(const Value& v) const;

    const Provenance& provenance() const { return provenance_; }

private:
    friend class KgStoreBuilder;

    std::vector<EntityRecord> entities_;
    std::unordered_map<std::string, std::size_t> index_;
    std::map<EntityId, std::vector<EntityId>> by_type_;
    std::unordered_map<std::string, std::string> labels_;
    std::map<PropertyId, std::string> property_labels_;
    Provenance provenance_;
};

/// Single-writer builder; `build()` freezes the store.
class KgStoreBuilder {
public:
    /// Returns false if the id is already present.
    bool add(EntityRecord record);
    void add_label(const EntityId& id, std::string label);
    void add_property_label(const PropertyId& p, std::string label);
    void set_provenance(Provenance p) { store_.provenance_ = std::move(p); }
    bool contains(const EntityId& id) const { return store_.index_.count(id.value) != 0; }
    KgStore build() &&;

private:
    KgStore store_;
};

/// Union of InstanceOf and Occupation targets. Throws NotFoundError.
std::set<EntityId> types_of(const KgStore& store, const EntityId& e);

DatasetStats stats(const KgStore& store);

struct IngestFilter {
    std::string language = "en";
    /// When set, entities must carry at least one of these types.
    std::optional<std::set<EntityId>> type_allowlist;
    /// Always kept; the id stands in for a missing label.
    std::set<EntityId> entity_allowlist;
};

struct Reject {
    std::size_t line = 0;  // 1-based
    std::string reason;
};

struct IngestResult {
    KgStore store;
    std::vector<Reject> rejects;
    std::size_t lines_read = 0;
    std::size_t dropped = 0;
};

/// Single pass over a line-oriented dump. Accepts raw Wikidata JSON dump lines
/// (with or without the enclosing "[" / "]" and trailing commas) and the
/// canonical entity JSONL, mixed freely. Malformed lines go to the reject log.
IngestResult ingest_dump(std::istream& source, const IngestFilter& filter, Provenance provenance = {});
/// Throws IoError when the file cannot be opened.
IngestResult ingest_dump_file(const std::string& path, const IngestFilter& filter, Provenance provenance = {});

/// Canonical JSONL line for one entity (no trailing newline).
std::string to_canonical_line(const KgStore& store, const EntityRecord& record);
std::string reject_log_tsv(std::span<const Reject> rejects);

/// Writes entities.jsonl, labels.jsonl, properties.jsonl, provenance.json.
void save_store(const KgStore& store, const std::string& dir);
KgStore load_store(const std::string& dir);

}  // namespace kgconv

template <typename Tag>
struct std::hash<kgconv::StrongId<Tag>> {
    std::size_t operator()(const kgconv::StrongId<Tag>& id) const noexcept {
        return std::hash<std::string>{}(id.value);
    }
};
