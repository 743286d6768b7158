#pragma once

#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgconv/fact_extractor.h"
#include "kgconv/gateway.h"

namespace kgconv {

enum class Interaction { voice, text };

const char* to_string(Interaction i);
Interaction interaction_from_string(const std::string& s);

namespace family {
inline constexpr std::string_view original = "original";
inline constexpr std::string_view deixis = "deixis";
inline constexpr std::string_view disfluencies = "disfluencies";
inline constexpr std::string_view deixis_disfluencies = "deixis_disfluencies";
// text families derived by the typo augmenter, never requested from a model
inline constexpr std::string_view typos = "typos";
inline constexpr std::string_view deixis_typos = "deixis_typos";
}  // namespace family

/// Families a model must return for an interaction.
std::vector<std::string> requested_families(Interaction i);

inline constexpr std::size_t kMaxTemplateTurns = 5;
inline constexpr std::size_t kVariantsPerFamily = 3;

struct TurnSpec {
    PropertyId predicate;
    std::string predicate_label;
    std::optional<PropertyId> qualifier;
    std::string qualifier_label;
    bool operator==(const TurnSpec&) const = default;
};

struct FactSignature {
    std::string subject_type_label;  // lowercase, e.g. "actor"
    std::vector<TurnSpec> turns;
    Interaction interaction = Interaction::voice;

    bool qualified() const;
    std::string subject_placeholder() const { return "[" + subject_type_label + "]"; }
    bool operator==(const FactSignature&) const = default;
};

/// "[a]" for turn 1, "[b]" for turn 2, ...
std::string object_placeholder(std::size_t turn);

nlohmann::ordered_json to_json(const FactSignature& sig);
FactSignature signature_from_json(const nlohmann::json& j);
/// Content address of a signature: sha256 of its canonical JSON.
std::string signature_key(const FactSignature& sig);

struct TurnTemplates {
    std::map<std::string, std::vector<std::string>> families;
    std::string answer;
    bool operator==(const TurnTemplates&) const = default;
};

struct TemplateSet {
    FactSignature signature;
    std::map<std::size_t, TurnTemplates> turns;  // 1-based
    bool operator==(const TemplateSet&) const = default;
};

nlohmann::ordered_json to_json(const TemplateSet& set);
TemplateSet template_set_from_json(const nlohmann::json& j);

/// Rows of the user message: "Turn 1: ([cricketer], date of birth, [a])", or
/// the 4-tuple form when the turn carries a qualifier.
std::string render_turn_rows(const FactSignature& sig);

// Each builder throws ContractViolation for an empty or >5-turn signature,
// the wrong interaction, or rows of the wrong shape.
ChatRequest build_voice_prompt(const FactSignature& sig, std::string model_profile = {});
ChatRequest build_text_prompt(const FactSignature& sig, std::string model_profile = {});
/// Text signatures get the relationship-predicate system text and the wh-word
/// penalties; voice signatures keep the voice system text and no penalties.
ChatRequest build_qualified_prompt(const FactSignature& sig, std::string model_profile = {});
/// Picks one of the three builders from the signature.
ChatRequest build_template_prompt(const FactSignature& sig, std::string model_profile = {});

/// Surface forms penalised on text requests, mapped to their weight.
const std::map<std::string, double>& wh_word_penalties();

struct Violation {
    std::size_t turn = 0;  // 0 when not tied to a turn
    std::string family;
    std::string rule;  // missing-turn, unexpected-turn, schema, missing-family, variant-count,
                       // empty-question, subject-missing, object-in-question, foreign-placeholder,
                       // wh-initial, answer-mismatch
    std::string detail;
    bool operator==(const Violation&) const = default;
};

class TemplateValidationError : public Error {
public:
    explicit TemplateValidationError(std::vector<Violation> report);
    const std::vector<Violation>& report() const { return report_; }

private:
    std::vector<Violation> report_;
};

struct ParseOptions {
    /// Strict: the response must be exactly one JSON object. Otherwise prose
    /// and code fences around the outermost object are ignored.
    bool strict = false;
};

/// Throws ParseError when no JSON object can be read and
/// TemplateValidationError with the full report when any rule fails.
TemplateSet parse_template_response(std::string_view text, const FactSignature& sig, const ParseOptions& options = {});

/// The full list of rule violations, empty when valid.
std::vector<Violation> validate_template_set(const TemplateSet& set);

/// True when `question` opens with who/whom/what/when/which/how as a word.
bool starts_with_wh_word(std::string_view question);

/// Placeholder tokens "[...]" in order of appearance.
std::vector<std::string> placeholders_in(std::string_view text);

/// One JSON file per signature key: the signature, the raw model response and
/// the validated set. Readers may run concurrently; writes are serialised.
class TemplateCache {
public:
    explicit TemplateCache(std::string dir);

    const std::string& dir() const { return dir_; }
    std::string path_for(const FactSignature& sig) const;

    /// A corrupt or mismatching entry is a miss (with a warning).
    std::optional<TemplateSet> get(const FactSignature& sig) const;
    void put(const TemplateSet& set, std::string_view raw_response);

    /// Records a signature that failed every attempt.
    void quarantine(const FactSignature& sig, const std::vector<std::string>& reasons);
    bool is_quarantined(const FactSignature& sig) const;

private:
    std::string dir_;
    mutable std::mutex write_mu_;
};

struct TemplateOptions {
    int max_attempts = 3;
    ParseOptions parse;
    std::string model_profile;
};

struct TemplateOutcome {
    std::optional<TemplateSet> set;
    int attempts = 0;  // 0 on a cache hit
    bool cached = false;
    bool quarantined = false;
    std::vector<std::string> failures;
};

/// Cache first, then up to max_attempts requests; a signature that never
/// validates is quarantined.
TemplateOutcome generate_templates(ChatGateway& gateway, const FactSignature& sig, TemplateCache& cache,
                                   const TemplateOptions& options = {});

/// Identifies the template turn answering a fact.
struct RowKey {
    EntityId type;
    Interaction interaction = Interaction::voice;
    PropertyId predicate;
    std::optional<PropertyId> qualifier;
    auto operator<=>(const RowKey&) const = default;
};

RowKey row_key(const FactRecord& fact, Interaction interaction);

struct TemplatePlan {
    std::vector<FactSignature> signatures;
    std::map<RowKey, std::pair<std::size_t, std::size_t>> slots;  // → (signature index, turn)
};

/// Groups the distinct rows of the facts per (type, interaction, qualified or
/// not), sorts them and cuts them into signatures of at most five turns.
TemplatePlan plan_signatures(std::span<const FactRecord> facts, std::span<const Interaction> interactions);

/// Template turns available to assembly, by row.
class TemplateIndex {
public:
    void add(const RowKey& key, const TemplateSet& set, std::size_t turn);
    /// nullptr when no validated set covers the row.
    const TurnTemplates* find(const RowKey& key) const;
    const TemplateSet* set_for(const RowKey& key) const;
    /// The set and the 1-based turn answering the row.
    std::optional<std::pair<const TemplateSet*, std::size_t>> lookup(const RowKey& key) const;
    std::size_t size() const { return slots_.size(); }

private:
    std::vector<TemplateSet> sets_;
    std::map<std::string, std::size_t> by_key_;
    std::map<RowKey, std::pair<std::size_t, std::size_t>> slots_;
};

/// Loads every planned signature present in the cache.
TemplateIndex build_template_index(const TemplatePlan& plan, const TemplateCache& cache);

}  // namespace kgconv
