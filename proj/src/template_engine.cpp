#include "kgconv/template_engine.h"

#include "kgconv/prompts.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <set>

namespace kgconv {

namespace detail {
extern const std::string_view kVoiceExamplesJson;
extern const std::string_view kTextExamplesJson;
extern const std::string_view kQualifiedVoiceExamplesJson;
extern const std::string_view kQualifiedTextExamplesJson;
}  // namespace detail

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;
namespace fs = std::filesystem;

const char* to_string(Interaction i) { return i == Interaction::voice ? "voice" : "text"; }

Interaction interaction_from_string(const std::string& s) {
    if (s == "voice") return Interaction::voice;
    if (s == "text") return Interaction::text;
    throw ParseError("unknown interaction '" + s + "'", s);
}

std::vector<std::string> requested_families(Interaction i) {
    if (i == Interaction::voice)
        return {std::string(family::original), std::string(family::deixis), std::string(family::disfluencies),
                std::string(family::deixis_disfluencies)};
    return {std::string(family::original), std::string(family::deixis)};
}

bool FactSignature::qualified() const {
    return std::any_of(turns.begin(), turns.end(), [](const TurnSpec& t) { return t.qualifier.has_value(); });
}

std::string object_placeholder(std::size_t turn) {
    if (turn == 0 || turn > 26) throw ContractViolation("turn number out of range");
    return std::string("[") + static_cast<char>('a' + turn - 1) + "]";
}

ojson to_json(const FactSignature& sig) {
    ojson j;
    j["subject_type_label"] = sig.subject_type_label;
    j["interaction"] = to_string(sig.interaction);
    j["turns"] = ojson::array();
    for (const auto& t : sig.turns) {
        ojson row;
        row["predicate"] = t.predicate.value;
        row["predicate_label"] = t.predicate_label;
        if (t.qualifier) {
            row["qualifier"] = t.qualifier->value;
            row["qualifier_label"] = t.qualifier_label;
        }
        j["turns"].push_back(std::move(row));
    }
    return j;
}

FactSignature signature_from_json(const json& j) {
    FactSignature sig;
    sig.subject_type_label = j.at("subject_type_label").get<std::string>();
    sig.interaction = interaction_from_string(j.at("interaction").get<std::string>());
    for (const auto& row : j.at("turns")) {
        TurnSpec t;
        t.predicate = PropertyId{row.at("predicate").get<std::string>()};
        t.predicate_label = row.value("predicate_label", t.predicate.value);
        if (row.contains("qualifier")) {
            t.qualifier = PropertyId{row["qualifier"].get<std::string>()};
            t.qualifier_label = row.value("qualifier_label", t.qualifier->value);
        }
        sig.turns.push_back(std::move(t));
    }
    return sig;
}

std::string signature_key(const FactSignature& sig) { return sha256_hex(to_json(sig).dump()); }

ojson to_json(const TemplateSet& set) {
    ojson j;
    j["signature"] = to_json(set.signature);
    ojson turns = ojson::object();
    for (const auto& [n, t] : set.turns) {
        ojson turn;
        for (const auto& [name, variants] : t.families) turn[name] = variants;
        turn["answer"] = t.answer;
        turns[std::to_string(n)] = std::move(turn);
    }
    j["turns"] = std::move(turns);
    return j;
}

TemplateSet template_set_from_json(const json& j) {
    TemplateSet set;
    set.signature = signature_from_json(j.at("signature"));
    for (const auto& [key, turn] : j.at("turns").items()) {
        TurnTemplates t;
        for (const auto& [name, value] : turn.items()) {
            if (name == "answer")
                t.answer = value.get<std::string>();
            else
                t.families[name] = value.get<std::vector<std::string>>();
        }
        set.turns[std::stoul(key)] = std::move(t);
    }
    return set;
}

std::string render_turn_rows(const FactSignature& sig) {
    std::string out;
    for (std::size_t i = 0; i < sig.turns.size(); ++i) {
        const auto& t = sig.turns[i];
        if (i) out += '\n';
        out += "Turn " + std::to_string(i + 1) + ": (" + sig.subject_placeholder() + ", " + t.predicate_label;
        if (t.qualifier) out += ", " + t.qualifier_label;
        out += ", " + object_placeholder(i + 1) + ")";
    }
    return out;
}

const std::map<std::string, double>& wh_word_penalties() {
    static const std::map<std::string, double> penalties = [] {
        std::map<std::string, double> m;
        for (const char* w : {"who", "whom", "what", "when", "which", "how"}) {
            std::string lower = w;
            std::string capital = lower;
            capital[0] = static_cast<char>(std::toupper(static_cast<unsigned char>(capital[0])));
            // leading-space forms are separate tokens for most BPE vocabularies
            for (const auto& form : {lower, capital, " " + lower, " " + capital}) m[form] = -100.0;
        }
        return m;
    }();
    return penalties;
}

namespace {

void check_shape(const FactSignature& sig) {
    if (sig.turns.empty()) throw ContractViolation("template signature has no turns");
    if (sig.turns.size() > kMaxTemplateTurns)
        throw ContractViolation("template signature has " + std::to_string(sig.turns.size()) +
                                " turns; at most " + std::to_string(kMaxTemplateTurns) + " per request");
    if (sig.subject_type_label.empty()) throw ContractViolation("template signature has an empty type label");
}

std::string with_turn_count(std::string_view instructions, std::size_t n) {
    std::string out(instructions);
    const auto pos = out.find(" K ");
    if (pos != std::string::npos) out.replace(pos + 1, 1, std::to_string(n));
    return out;
}

struct Example {
    FactSignature signature;
    std::string response;
};

std::vector<Example> load_examples(std::string_view text) {
    const auto j = ojson::parse(text);
    std::vector<Example> out;
    for (const auto& e : j.at("examples"))
        out.push_back({signature_from_json(json::parse(e.at("signature").dump())), e.at("response").dump()});
    return out;
}

const std::vector<Example>& examples_for(Interaction interaction, bool qualified) {
    static const auto voice = load_examples(detail::kVoiceExamplesJson);
    static const auto text = load_examples(detail::kTextExamplesJson);
    static const auto qvoice = load_examples(detail::kQualifiedVoiceExamplesJson);
    static const auto qtext = load_examples(detail::kQualifiedTextExamplesJson);
    if (qualified) return interaction == Interaction::voice ? qvoice : qtext;
    return interaction == Interaction::voice ? voice : text;
}

ChatRequest assemble_request(const FactSignature& sig, std::string_view system, std::string_view instructions,
                             bool search_note, bool penalties, std::string model_profile) {
    ChatRequest r;
    r.system = std::string(system);
    bool first = true;
    for (const auto& ex : examples_for(sig.interaction, sig.qualified())) {
        std::string user;
        if (first && search_note) user += std::string(prompts::kSearchExamplesNote) + "\n";
        user += "# Triples\n" + render_turn_rows(ex.signature);
        r.history.push_back({std::move(user), ex.response});
        first = false;
    }
    r.user = with_turn_count(instructions, sig.turns.size()) + "\n\n# Triples\n" + render_turn_rows(sig);
    if (penalties) r.logit_penalties = wh_word_penalties();
    r.model_profile = std::move(model_profile);
    return r;
}

void require_unqualified(const FactSignature& sig) {
    if (sig.qualified())
        throw ContractViolation("signature carries relationship predicates; use the qualified prompt");
}

}  // namespace

ChatRequest build_voice_prompt(const FactSignature& sig, std::string model_profile) {
    check_shape(sig);
    if (sig.interaction != Interaction::voice) throw ContractViolation("voice prompt needs a voice signature");
    require_unqualified(sig);
    return assemble_request(sig, prompts::kVoiceSystem, prompts::kVoiceUser, false, false, std::move(model_profile));
}

ChatRequest build_text_prompt(const FactSignature& sig, std::string model_profile) {
    check_shape(sig);
    if (sig.interaction != Interaction::text) throw ContractViolation("text prompt needs a text signature");
    require_unqualified(sig);
    return assemble_request(sig, prompts::kTextSystem, prompts::kTextUser, true, true, std::move(model_profile));
}

ChatRequest build_qualified_prompt(const FactSignature& sig, std::string model_profile) {
    check_shape(sig);
    for (std::size_t i = 0; i < sig.turns.size(); ++i)
        if (!sig.turns[i].qualifier || sig.turns[i].qualifier_label.empty())
            throw ContractViolation("turn " + std::to_string(i + 1) + " has no relationship predicate");
    if (sig.interaction == Interaction::voice)
        return assemble_request(sig, prompts::kVoiceSystem, prompts::kQualifiedUser, false, false,
                                std::move(model_profile));
    return assemble_request(sig, prompts::kQualifiedSystem, prompts::kQualifiedUser, true, true,
                            std::move(model_profile));
}

ChatRequest build_template_prompt(const FactSignature& sig, std::string model_profile) {
    if (sig.qualified()) return build_qualified_prompt(sig, std::move(model_profile));
    return sig.interaction == Interaction::voice ? build_voice_prompt(sig, std::move(model_profile))
                                                 : build_text_prompt(sig, std::move(model_profile));
}

namespace {

std::string summarize(const std::vector<Violation>& report) {
    std::string out = "template response failed validation:";
    for (const auto& v : report) {
        out += " [";
        if (v.turn) out += "turn " + std::to_string(v.turn) + " ";
        if (!v.family.empty()) out += v.family + " ";
        out += v.rule;
        if (!v.detail.empty()) out += ": " + v.detail;
        out += "]";
    }
    return out;
}

}  // namespace

TemplateValidationError::TemplateValidationError(std::vector<Violation> report)
    : Error(summarize(report)), report_(std::move(report)) {}

bool starts_with_wh_word(std::string_view question) {
    const std::string q = to_lower(trim(question));
    for (std::string_view w : {"who", "whom", "what", "when", "which", "how"}) {
        if (q.compare(0, w.size(), w) != 0) continue;
        if (q.size() == w.size()) return true;
        const unsigned char next = static_cast<unsigned char>(q[w.size()]);
        if (!std::isalnum(next) && next != '_') return true;
    }
    return false;
}

std::vector<std::string> placeholders_in(std::string_view text) {
    std::vector<std::string> out;
    std::size_t i = 0;
    while ((i = text.find('[', i)) != std::string_view::npos) {
        const auto close = text.find(']', i + 1);
        const auto reopen = text.find('[', i + 1);
        if (close == std::string_view::npos || (reopen != std::string_view::npos && reopen < close)) {
            out.emplace_back("[");
            ++i;
            continue;
        }
        out.emplace_back(text.substr(i, close - i + 1));
        i = close + 1;
    }
    return out;
}

std::vector<Violation> validate_template_set(const TemplateSet& set) {
    const auto& sig = set.signature;
    const std::size_t n = sig.turns.size();
    const auto families = requested_families(sig.interaction);
    const std::string subject = sig.subject_placeholder();
    std::vector<Violation> report;

    for (const auto& [k, turn] : set.turns)
        if (k == 0 || k > n) report.push_back({k, "", "unexpected-turn", "signature has " + std::to_string(n) + " turns"});

    for (std::size_t k = 1; k <= n; ++k) {
        const auto it = set.turns.find(k);
        if (it == set.turns.end()) {
            report.push_back({k, "", "missing-turn", ""});
            continue;
        }
        const auto& turn = it->second;
        const std::string own = object_placeholder(k);

        for (const auto& [name, variants] : turn.families)
            if (std::find(families.begin(), families.end(), name) == families.end())
                report.push_back({k, name, "schema", "unexpected family"});

        for (const auto& name : families) {
            const auto f = turn.families.find(name);
            if (f == turn.families.end()) {
                report.push_back({k, name, "missing-family", ""});
                continue;
            }
            if (f->second.size() != kVariantsPerFamily)
                report.push_back({k, name, "variant-count",
                                  std::to_string(f->second.size()) + " variants, expected " +
                                      std::to_string(kVariantsPerFamily)});
            for (const auto& q : f->second) {
                if (trim(q).empty()) {
                    report.push_back({k, name, "empty-question", ""});
                    continue;
                }
                bool own_seen = false;
                for (const auto& p : placeholders_in(q)) {
                    if (p == subject) continue;
                    if (p == own) {
                        own_seen = true;
                        continue;
                    }
                    bool allowed = false;
                    for (std::size_t j = 1; j <= n && sig.qualified(); ++j)
                        if (j != k && p == object_placeholder(j) && sig.turns[j - 1].predicate == sig.turns[k - 1].predicate)
                            allowed = true;
                    if (!allowed) report.push_back({k, name, "foreign-placeholder", p + " in \"" + q + "\""});
                }
                if (own_seen) report.push_back({k, name, "object-in-question", own + " in \"" + q + "\""});
                if (name == family::original && q.find(subject) == std::string::npos)
                    report.push_back({k, name, "subject-missing", subject + " not in \"" + q + "\""});
                if (sig.interaction == Interaction::text && starts_with_wh_word(q))
                    report.push_back({k, name, "wh-initial", "\"" + q + "\""});
            }
        }
        if (trim(turn.answer) != own)
            report.push_back({k, "", "answer-mismatch", "answer \"" + turn.answer + "\", expected " + own});
    }
    return report;
}

namespace {

// End of the balanced {...} starting at `from`, honouring JSON strings.
std::optional<std::size_t> matching_brace(std::string_view text, std::size_t from) {
    int depth = 0;
    bool in_string = false;
    for (std::size_t i = from; i < text.size(); ++i) {
        const char c = text[i];
        if (in_string) {
            if (c == '\\')
                ++i;
            else if (c == '"')
                in_string = false;
            continue;
        }
        if (c == '"')
            in_string = true;
        else if (c == '{')
            ++depth;
        else if (c == '}' && --depth == 0)
            return i;
    }
    return std::nullopt;
}

json extract_object(std::string_view text, bool strict) {
    if (strict) {
        json j = json::parse(trim(text), nullptr, false);
        if (j.is_discarded() || !j.is_object()) throw ParseError("response is not a single JSON object", std::string(text));
        return j;
    }
    {
        json whole = json::parse(trim(text), nullptr, false);
        if (!whole.is_discarded()) {
            if (whole.is_object()) return whole;
            throw ParseError("response is JSON but not an object", std::string(text));
        }
    }
    // only top-level spans count; the objects nested in a broken one do not
    std::size_t pos = 0;
    while ((pos = text.find('{', pos)) != std::string_view::npos) {
        const auto end = matching_brace(text, pos);
        if (!end) break;
        json j = json::parse(text.substr(pos, *end - pos + 1), nullptr, false);
        if (!j.is_discarded() && j.is_object()) return j;
        pos = *end + 1;
    }
    throw ParseError("no JSON object in template response", std::string(text));
}

bool parse_turn_number(const std::string& key, std::size_t& out) {
    const std::string k = trim(key);
    if (k.empty() || k.size() > 3 || !std::all_of(k.begin(), k.end(), [](char c) { return c >= '0' && c <= '9'; }))
        return false;
    out = std::stoul(k);
    return true;
}

}  // namespace

TemplateSet parse_template_response(std::string_view text, const FactSignature& sig, const ParseOptions& options) {
    const json root = extract_object(text, options.strict);
    const auto families = requested_families(sig.interaction);

    TemplateSet set;
    set.signature = sig;
    std::vector<Violation> report;

    for (const auto& [key, value] : root.items()) {
        std::size_t k = 0;
        if (!parse_turn_number(key, k) || k == 0 || k > sig.turns.size() || set.turns.count(k)) {
            report.push_back({0, "", "unexpected-turn", "key \"" + key + "\""});
            continue;
        }
        if (!value.is_object()) {
            report.push_back({k, "", "schema", "turn value is not an object"});
            set.turns[k];
            continue;
        }
        TurnTemplates turn;
        for (const auto& name : families) {
            if (!value.contains(name)) continue;
            const auto& list = value[name];
            if (!list.is_array()) {
                report.push_back({k, name, "schema", "family is not a list"});
                turn.families[name];
                continue;
            }
            std::vector<std::string> variants;
            for (const auto& q : list) {
                if (q.is_string())
                    variants.push_back(q.get<std::string>());
                else
                    report.push_back({k, name, "schema", "variant is not a string"});
            }
            turn.families[name] = std::move(variants);
        }
        if (value.contains("answer") && value["answer"].is_string()) turn.answer = trim(value["answer"].get<std::string>());
        set.turns[k] = std::move(turn);
    }

    // schema-level problems first, then the semantic rules on what was readable
    for (auto& v : validate_template_set(set)) {
        if (v.rule == "missing-turn" && std::any_of(report.begin(), report.end(), [&](const Violation& r) {
                return r.turn == v.turn && r.rule == "schema" && r.family.empty();
            }))
            continue;
        report.push_back(std::move(v));
    }
    if (!report.empty()) throw TemplateValidationError(std::move(report));
    return set;
}

TemplateCache::TemplateCache(std::string dir) : dir_(std::move(dir)) {}

std::string TemplateCache::path_for(const FactSignature& sig) const {
    return (fs::path(dir_) / (signature_key(sig) + ".json")).string();
}

std::optional<TemplateSet> TemplateCache::get(const FactSignature& sig) const {
    const auto path = path_for(sig);
    std::error_code ec;
    if (!fs::exists(path, ec)) return std::nullopt;
    try {
        const auto j = json::parse(read_file(path));
        if (signature_from_json(j.at("signature")) != sig) {
            spdlog::warn("template cache entry {} holds a different signature; ignoring it", path);
            return std::nullopt;
        }
        auto set = template_set_from_json(j.at("templates"));
        if (set.signature != sig || !validate_template_set(set).empty()) {
            spdlog::warn("template cache entry {} does not validate; ignoring it", path);
            return std::nullopt;
        }
        return set;
    } catch (const std::exception& ex) {
        spdlog::warn("corrupt template cache entry {}: {}", path, ex.what());
        return std::nullopt;
    }
}

void TemplateCache::put(const TemplateSet& set, std::string_view raw_response) {
    ojson j;
    j["key"] = signature_key(set.signature);
    j["signature"] = to_json(set.signature);
    j["raw_response"] = std::string(raw_response);
    j["templates"] = to_json(set);
    const std::string content = j.dump(2) + "\n";
    std::lock_guard lock(write_mu_);
    write_file(path_for(set.signature), content);
}

void TemplateCache::quarantine(const FactSignature& sig, const std::vector<std::string>& reasons) {
    ojson j;
    j["key"] = signature_key(sig);
    j["signature"] = to_json(sig);
    j["reasons"] = reasons;
    std::lock_guard lock(write_mu_);
    write_file((fs::path(dir_) / "quarantine" / (signature_key(sig) + ".json")).string(), j.dump(2) + "\n");
}

bool TemplateCache::is_quarantined(const FactSignature& sig) const {
    std::error_code ec;
    return fs::exists(fs::path(dir_) / "quarantine" / (signature_key(sig) + ".json"), ec);
}

TemplateOutcome generate_templates(ChatGateway& gateway, const FactSignature& sig, TemplateCache& cache,
                                   const TemplateOptions& options) {
    TemplateOutcome out;
    if (auto hit = cache.get(sig)) {
        out.set = std::move(hit);
        out.cached = true;
        return out;
    }
    if (cache.is_quarantined(sig)) {
        out.quarantined = true;
        return out;
    }
    const ChatRequest request = build_template_prompt(sig, options.model_profile);
    for (int attempt = 1; attempt <= options.max_attempts; ++attempt) {
        out.attempts = attempt;
        const std::string text = gateway.chat(request);
        try {
            auto set = parse_template_response(text, sig, options.parse);
            cache.put(set, text);
            out.set = std::move(set);
            return out;
        } catch (const ParseError& ex) {
            out.failures.push_back(ex.what());
        } catch (const TemplateValidationError& ex) {
            out.failures.push_back(ex.what());
        }
        spdlog::debug("template attempt {} for {} failed: {}", attempt, signature_key(sig), out.failures.back());
    }
    spdlog::warn("quarantining template signature {} ({} turns, {}) after {} attempts", signature_key(sig),
                 sig.turns.size(), to_string(sig.interaction), out.attempts);
    cache.quarantine(sig, out.failures);
    out.quarantined = true;
    return out;
}

RowKey row_key(const FactRecord& fact, Interaction interaction) {
    return RowKey{fact.subject_type, interaction, fact.fact.predicate, fact.fact.qualifier_predicate};
}

TemplatePlan plan_signatures(std::span<const FactRecord> facts, std::span<const Interaction> interactions) {
    struct Group {
        std::string type_label;
        std::vector<PredicateRow> rows;
    };
    std::map<std::pair<EntityId, bool>, Group> groups;
    for (const auto& f : facts) {
        auto& g = groups[{f.subject_type, f.fact.qualifier_predicate.has_value()}];
        g.type_label = f.subject_type_label;
        PredicateRow row{f.fact.predicate, f.predicate_label, f.fact.qualifier_predicate, f.qualifier_label};
        if (std::none_of(g.rows.begin(), g.rows.end(), [&](const PredicateRow& r) { return r.same_key(row); }))
            g.rows.push_back(std::move(row));
    }

    TemplatePlan plan;
    std::map<std::string, std::size_t> by_key;
    for (auto& [gk, g] : groups) {
        std::stable_sort(g.rows.begin(), g.rows.end(), row_less);
        for (const auto interaction : interactions) {
            for (std::size_t start = 0; start < g.rows.size(); start += kMaxTemplateTurns) {
                const std::size_t end = std::min(g.rows.size(), start + kMaxTemplateTurns);
                FactSignature sig;
                sig.subject_type_label = g.type_label;
                sig.interaction = interaction;
                for (std::size_t i = start; i < end; ++i)
                    sig.turns.push_back({g.rows[i].property, g.rows[i].label, g.rows[i].qualifier, g.rows[i].qualifier_label});
                const auto key = signature_key(sig);
                auto [it, inserted] = by_key.emplace(key, plan.signatures.size());
                if (inserted) plan.signatures.push_back(std::move(sig));
                for (std::size_t i = start; i < end; ++i)
                    plan.slots[RowKey{gk.first, interaction, g.rows[i].property, g.rows[i].qualifier}] = {it->second,
                                                                                                         i - start + 1};
            }
        }
    }
    return plan;
}

void TemplateIndex::add(const RowKey& key, const TemplateSet& set, std::size_t turn) {
    const auto sk = signature_key(set.signature);
    auto it = by_key_.find(sk);
    if (it == by_key_.end()) {
        it = by_key_.emplace(sk, sets_.size()).first;
        sets_.push_back(set);
    }
    slots_[key] = {it->second, turn};
}

const TurnTemplates* TemplateIndex::find(const RowKey& key) const {
    const auto it = slots_.find(key);
    if (it == slots_.end()) return nullptr;
    const auto& turns = sets_[it->second.first].turns;
    const auto t = turns.find(it->second.second);
    return t == turns.end() ? nullptr : &t->second;
}

const TemplateSet* TemplateIndex::set_for(const RowKey& key) const {
    const auto it = slots_.find(key);
    return it == slots_.end() ? nullptr : &sets_[it->second.first];
}

std::optional<std::pair<const TemplateSet*, std::size_t>> TemplateIndex::lookup(const RowKey& key) const {
    const auto it = slots_.find(key);
    if (it == slots_.end()) return std::nullopt;
    const auto& set = sets_[it->second.first];
    if (!set.turns.count(it->second.second)) return std::nullopt;
    return std::make_pair(&set, it->second.second);
}

TemplateIndex build_template_index(const TemplatePlan& plan, const TemplateCache& cache) {
    TemplateIndex index;
    std::vector<std::optional<TemplateSet>> loaded(plan.signatures.size());
    for (std::size_t i = 0; i < plan.signatures.size(); ++i) loaded[i] = cache.get(plan.signatures[i]);
    for (const auto& [key, slot] : plan.slots)
        if (loaded[slot.first]) index.add(key, *loaded[slot.first], slot.second);
    return index;
}

}  // namespace kgconv
