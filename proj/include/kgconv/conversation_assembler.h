#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgconv/fact_extractor.h"
#include "kgconv/related_entity.h"
#include "kgconv/template_engine.h"
#include "kgconv/typo_augment.h"

namespace kgconv {

struct ConversationConfig {
    Interaction interaction = Interaction::voice;
    bool deixis = false;
    bool disfluency = false;  // voice only
    bool typo = false;        // text only
    bool related = false;
    std::size_t turns = 5;
    std::uint64_t seed = 0;

    /// Throws ContractViolation on disfluency without voice, typo without
    /// text, or zero turns.
    void validate() const;
    /// Stable setting name, e.g. "voice+deixis+disfluency", "text+typo+related".
    std::string name() const;
    bool operator==(const ConversationConfig&) const = default;
};

nlohmann::ordered_json to_json(const ConversationConfig& c);
ConversationConfig config_from_json(const nlohmann::json& j);

/// The 16 settings: voice x {deixis} x {disfluency} and text x {deixis} x {typo},
/// each with and without related-entity follow-ups.
std::vector<ConversationConfig> all_configs(std::size_t turns = 5, std::uint64_t seed = 0);

/// Predicates that must sit next to each other when both are asked about.
struct GroupingRules {
    std::vector<std::vector<PropertyId>> groups;

    /// Throws ContractViolation when a predicate sits in two groups.
    void validate() const;
    /// {date of birth, place of birth}.
    static GroupingRules defaults();
    /// Index of the group holding p, if any.
    std::optional<std::size_t> group_of(const PropertyId& p) const;
};

GroupingRules grouping_from_json(const nlohmann::json& j);
nlohmann::ordered_json to_json(const GroupingRules& r);

struct FactSequence {
    std::vector<const FactRecord*> facts;
    std::size_t related_begin = 0;  // == facts.size() when there is no related block
    bool short_pool = false;        // fewer facts available than turns requested
};

/// Samples up to n facts without replacement. Grouped predicates and
/// same-predicate qualified facts come out as adjacent units (source order
/// inside a unit), units in random order. Related facts, when given, take a
/// contiguous suffix of min(|related|, n/2) turns. Throws ContractViolation on
/// an empty pool or n == 0.
FactSequence plan_fact_sequence(std::span<const FactRecord* const> facts,
                                std::span<const FactRecord* const> related_facts, const GroupingRules& rules,
                                std::size_t n, Rng& rng);

struct ConversationTurn {
    std::size_t index = 0;  // 1-based
    std::string question;
    std::string family;     // tag including derived families (typos, deixis_typos)
    std::size_t variant = 0;
    std::vector<std::string> objects;
    std::vector<std::string> gold_answers;  // objects followed by their aliases
    std::string fact_id;
    EntityId subject;
    EntityId subject_type;
    PropertyId predicate;
    std::optional<PropertyId> qualifier;
    FactKind kind = FactKind::simple;
    bool related = false;
    std::optional<TypoReport> typo;
};

struct Conversation {
    std::string id;
    EntityId primary_entity;
    std::optional<EntityId> related_entity;
    ConversationConfig config;
    bool short_pool = false;
    std::vector<ConversationTurn> turns;
};

class AssemblyError : public Error {
public:
    using Error::Error;
};

/// Template family for a turn under a config; the first turn of a block never
/// uses a deixis family.
std::string template_family(const ConversationConfig& config, bool first_in_block);

/// Replaces the subject placeholder by the subject label and other turns'
/// object placeholders by the fact's relationship value. Throws AssemblyError
/// for any placeholder left unresolved.
std::string fill_template(std::string_view tmpl, const FactSignature& sig, std::size_t turn, const FactRecord& fact);

/// Rendered objects followed by the aliases of entity-valued objects.
std::vector<std::string> gold_answers_for(const FactRecord& fact, const KgStore& store);

Conversation assemble(std::string id, const FactSequence& sequence, const TemplateIndex& templates,
                      const ConversationConfig& config, const KgStore& store, Rng& rng);

enum class Universe { general, related };

/// Extra questions per fact in the related universe: follow-up families x
/// variants x interactions.
struct RelatedFollowUpBudget {
    std::size_t families = 5;
    std::size_t variants = 3;
    std::size_t interactions = 2;
    std::size_t total() const { return families * variants * interactions; }
};

std::size_t questions_per_fact(Universe universe, const RelatedFollowUpBudget& budget = {});
/// Three variants per family.
std::size_t questions_per_fact(std::span<const std::string> families);

struct BankEntry {
    Interaction interaction = Interaction::voice;
    std::string family;
    std::size_t variant = 0;
    std::string question;
    std::optional<TypoReport> typo;
};

/// Every question one fact can be asked as: the four voice families and the
/// text original, deixis, typos and deixis_typos families, three variants each.
std::vector<BankEntry> enumerate_fact_questions(const FactRecord& fact, const TemplateIndex& templates, Rng& rng);

struct GenerateOptions {
    std::vector<ConversationConfig> configs;
    GroupingRules rules = GroupingRules::defaults();
    std::size_t conversations_per_entity = 1;
    unsigned threads = 1;
};

struct GenerateResult {
    std::vector<Conversation> conversations;
    std::vector<std::string> skipped;  // "<entity> <config>: reason"
};

/// One batch of conversations per (config, entity). Facts without template
/// coverage are left out of the pool; related settings only use anchors whose
/// related entity has covered facts. Each conversation draws from
/// derive_seed(config.seed, conversation id).
GenerateResult generate_dataset(const KgStore& store, std::span<const FactRecord> facts,
                                std::span<const RelatedPair> related, const TemplateIndex& templates,
                                const GenerateOptions& options);

inline constexpr const char* kDatasetSchema = "kgconv.dataset/1";

nlohmann::ordered_json to_json(const Conversation& c);
Conversation conversation_from_json(const nlohmann::json& j);
std::string dataset_to_jsonl(std::span<const Conversation> conversations);
std::vector<Conversation> read_dataset(std::istream& in);
std::vector<Conversation> read_dataset_file(const std::string& path);

}  // namespace kgconv
