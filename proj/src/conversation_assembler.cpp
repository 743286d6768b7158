#include "kgconv/conversation_assembler.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <map>
#include <set>

namespace kgconv {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

void ConversationConfig::validate() const {
    if (disfluency && interaction != Interaction::voice)
        throw ContractViolation("disfluency applies to voice interaction only");
    if (typo && interaction != Interaction::text) throw ContractViolation("typo applies to text interaction only");
    if (turns == 0) throw ContractViolation("a conversation needs at least one turn");
}

std::string ConversationConfig::name() const {
    std::string n = to_string(interaction);
    if (deixis) n += "+deixis";
    if (disfluency) n += "+disfluency";
    if (typo) n += "+typo";
    if (related) n += "+related";
    return n;
}

ojson to_json(const ConversationConfig& c) {
    ojson j;
    j["interaction"] = to_string(c.interaction);
    j["deixis"] = c.deixis;
    j["disfluency"] = c.disfluency;
    j["typo"] = c.typo;
    j["related"] = c.related;
    j["turns"] = c.turns;
    j["seed"] = c.seed;
    return j;
}

ConversationConfig config_from_json(const json& j) {
    ConversationConfig c;
    c.interaction = interaction_from_string(j.at("interaction").get<std::string>());
    c.deixis = j.value("deixis", false);
    c.disfluency = j.value("disfluency", false);
    c.typo = j.value("typo", false);
    c.related = j.value("related", false);
    c.turns = j.value("turns", std::size_t{5});
    c.seed = j.value("seed", std::uint64_t{0});
    c.validate();
    return c;
}

std::vector<ConversationConfig> all_configs(std::size_t turns, std::uint64_t seed) {
    std::vector<ConversationConfig> out;
    for (bool related : {false, true}) {
        for (auto interaction : {Interaction::voice, Interaction::text}) {
            for (bool deixis : {false, true}) {
                for (bool phenomenon : {false, true}) {
                    ConversationConfig c;
                    c.interaction = interaction;
                    c.deixis = deixis;
                    if (interaction == Interaction::voice)
                        c.disfluency = phenomenon;
                    else
                        c.typo = phenomenon;
                    c.related = related;
                    c.turns = turns;
                    c.seed = seed;
                    out.push_back(c);
                }
            }
        }
    }
    return out;
}

void GroupingRules::validate() const {
    std::set<PropertyId> seen;
    for (const auto& g : groups)
        for (const auto& p : g)
            if (!seen.insert(p).second) throw ContractViolation("predicate " + p.value + " appears in two groups");
}

GroupingRules GroupingRules::defaults() { return GroupingRules{{{PropertyId{"P569"}, PropertyId{"P19"}}}}; }

std::optional<std::size_t> GroupingRules::group_of(const PropertyId& p) const {
    for (std::size_t i = 0; i < groups.size(); ++i)
        if (std::find(groups[i].begin(), groups[i].end(), p) != groups[i].end()) return i;
    return std::nullopt;
}

GroupingRules grouping_from_json(const json& j) {
    GroupingRules r;
    for (const auto& g : j.at("groups")) {
        std::vector<PropertyId> group;
        for (const auto& p : g) group.emplace_back(p.get<std::string>());
        r.groups.push_back(std::move(group));
    }
    r.validate();
    return r;
}

ojson to_json(const GroupingRules& r) {
    ojson j;
    j["groups"] = ojson::array();
    for (const auto& g : r.groups) {
        ojson ids = ojson::array();
        for (const auto& p : g) ids.push_back(p.value);
        j["groups"].push_back(std::move(ids));
    }
    return j;
}

namespace {

std::vector<const FactRecord*> choose_block(std::span<const FactRecord* const> pool, std::size_t k,
                                            const GroupingRules& rules, Rng& rng) {
    if (k == 0) return {};
    std::vector<std::size_t> order(pool.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    rng.shuffle(order);
    order.resize(k);
    std::sort(order.begin(), order.end());

    // unit per grouping rule, per qualified predicate, else per fact
    std::vector<std::string> unit_order;
    std::map<std::string, std::vector<std::size_t>> units;
    for (const auto i : order) {
        const auto& f = *pool[i];
        std::string key;
        if (const auto g = rules.group_of(f.fact.predicate))
            key = "g:" + std::to_string(*g);
        else if (f.fact.kind == FactKind::qualified)
            key = "q:" + f.fact.predicate.value;
        else
            key = "f:" + std::to_string(i);
        auto [it, inserted] = units.try_emplace(key);
        if (inserted) unit_order.push_back(key);
        it->second.push_back(i);
    }
    rng.shuffle(unit_order);

    std::vector<const FactRecord*> out;
    for (const auto& key : unit_order) {
        auto members = units[key];
        if (key[0] == 'g') {
            const auto& group = rules.groups[std::stoul(key.substr(2))];
            auto rank = [&](std::size_t i) {
                const auto& p = pool[i]->fact.predicate;
                return std::make_pair(std::find(group.begin(), group.end(), p) - group.begin(), pool[i]->source_index);
            };
            std::stable_sort(members.begin(), members.end(), [&](auto a, auto b) { return rank(a) < rank(b); });
        } else {
            std::stable_sort(members.begin(), members.end(),
                             [&](auto a, auto b) { return pool[a]->source_index < pool[b]->source_index; });
        }
        for (const auto i : members) out.push_back(pool[i]);
    }
    return out;
}

}  // namespace

FactSequence plan_fact_sequence(std::span<const FactRecord* const> facts,
                                std::span<const FactRecord* const> related_facts, const GroupingRules& rules,
                                std::size_t n, Rng& rng) {
    if (facts.empty()) throw ContractViolation("empty fact pool");
    if (n == 0) throw ContractViolation("a conversation needs at least one turn");
    const std::size_t r = std::min(related_facts.size(), n / 2);
    const std::size_t p = std::min(facts.size(), n - r);

    FactSequence seq;
    seq.facts = choose_block(facts, p, rules, rng);
    seq.related_begin = seq.facts.size();
    for (const auto* f : choose_block(related_facts, r, rules, rng)) seq.facts.push_back(f);
    seq.short_pool = seq.facts.size() < n;
    return seq;
}

std::string template_family(const ConversationConfig& config, bool first_in_block) {
    const bool deixis = config.deixis && !first_in_block;
    if (config.interaction == Interaction::voice) {
        if (deixis && config.disfluency) return std::string(family::deixis_disfluencies);
        if (deixis) return std::string(family::deixis);
        if (config.disfluency) return std::string(family::disfluencies);
        return std::string(family::original);
    }
    return std::string(deixis ? family::deixis : family::original);
}

std::string fill_template(std::string_view tmpl, const FactSignature& sig, std::size_t turn, const FactRecord& fact) {
    const std::string subject = sig.subject_placeholder();
    std::string out;
    std::size_t i = 0;
    while (i < tmpl.size()) {
        const auto open = tmpl.find('[', i);
        if (open == std::string_view::npos) {
            out.append(tmpl.substr(i));
            break;
        }
        out.append(tmpl.substr(i, open - i));
        const auto close = tmpl.find(']', open + 1);
        if (close == std::string_view::npos)
            throw AssemblyError("unterminated placeholder in template \"" + std::string(tmpl) + "\"");
        const std::string token(tmpl.substr(open, close - open + 1));
        if (token == subject) {
            out += fact.subject_label;
        } else {
            bool filled = false;
            for (std::size_t j = 1; j <= sig.turns.size(); ++j) {
                if (j == turn || token != object_placeholder(j)) continue;
                if (fact.rendered_qualifier) {
                    out += *fact.rendered_qualifier;
                    filled = true;
                }
                break;
            }
            if (!filled)
                throw AssemblyError("unresolved placeholder " + token + " in template \"" + std::string(tmpl) +
                                    "\" for fact " + fact.id);
        }
        i = close + 1;
    }
    return out;
}

std::vector<std::string> gold_answers_for(const FactRecord& fact, const KgStore& store) {
    std::vector<std::string> out;
    auto add = [&](const std::string& s) {
        if (!s.empty() && std::find(out.begin(), out.end(), s) == out.end()) out.push_back(s);
    };
    for (const auto& r : fact.rendered_objects) add(r);
    for (const auto& o : fact.fact.objects) {
        if (const auto* ref = std::get_if<EntityRef>(&o))
            if (const auto* rec = store.find(ref->id))
                for (const auto& a : rec->aliases) add(a);
    }
    return out;
}

namespace {

std::string describe_row(const FactRecord& f, Interaction interaction) {
    std::string s = "(" + f.subject_type_label + ", " + f.predicate_label;
    if (f.fact.qualifier_predicate) s += ", " + f.qualifier_label;
    return s + ") " + to_string(interaction);
}

std::string typo_tag(const std::string& fam) {
    return fam == family::deixis ? std::string(family::deixis_typos) : std::string(family::typos);
}

}  // namespace

Conversation assemble(std::string id, const FactSequence& sequence, const TemplateIndex& templates,
                      const ConversationConfig& config, const KgStore& store, Rng& rng) {
    config.validate();
    if (sequence.facts.empty()) throw AssemblyError("conversation " + id + " has no facts");

    Conversation c;
    c.id = std::move(id);
    c.config = config;
    c.primary_entity = sequence.facts.front()->fact.subject;
    c.short_pool = sequence.short_pool;
    if (sequence.related_begin < sequence.facts.size())
        c.related_entity = sequence.facts[sequence.related_begin]->fact.subject;

    for (std::size_t i = 0; i < sequence.facts.size(); ++i) {
        const auto& fact = *sequence.facts[i];
        const auto slot = templates.lookup(row_key(fact, config.interaction));
        if (!slot) throw AssemblyError("no validated templates cover " + describe_row(fact, config.interaction));
        const auto& [set, turn_no] = *slot;
        const auto& turn_templates = set->turns.at(turn_no);

        const bool first_in_block = i == 0 || i == sequence.related_begin;
        const std::string fam = template_family(config, first_in_block);
        const auto fit = turn_templates.families.find(fam);
        if (fit == turn_templates.families.end() || fit->second.empty())
            throw AssemblyError("templates for " + describe_row(fact, config.interaction) + " lack family " + fam);

        ConversationTurn t;
        t.index = i + 1;
        t.variant = rng.below(fit->second.size());
        t.question = fill_template(fit->second[t.variant], set->signature, turn_no, fact);
        t.family = fam;
        if (config.typo) {
            auto augmented = augment_turn(t.question, rng);
            t.question = std::move(augmented.question);
            t.typo = std::move(augmented.report);
            t.family = typo_tag(fam);
        }
        t.objects = fact.rendered_objects;
        t.gold_answers = gold_answers_for(fact, store);
        t.fact_id = fact.id;
        t.subject = fact.fact.subject;
        t.subject_type = fact.subject_type;
        t.predicate = fact.fact.predicate;
        t.qualifier = fact.fact.qualifier_predicate;
        t.kind = fact.fact.kind;
        t.related = i >= sequence.related_begin;
        c.turns.push_back(std::move(t));
    }
    return c;
}

std::size_t questions_per_fact(Universe universe, const RelatedFollowUpBudget& budget) {
    const auto voice = requested_families(Interaction::voice).size();
    // text: the two requested families plus their typo-augmented copies
    const auto text = 2 * requested_families(Interaction::text).size();
    const std::size_t general = (voice + text) * kVariantsPerFamily;
    return universe == Universe::general ? general : general + budget.total();
}

std::size_t questions_per_fact(std::span<const std::string> families) { return families.size() * kVariantsPerFamily; }

std::vector<BankEntry> enumerate_fact_questions(const FactRecord& fact, const TemplateIndex& templates, Rng& rng) {
    std::vector<BankEntry> out;
    for (const auto interaction : {Interaction::voice, Interaction::text}) {
        const auto slot = templates.lookup(row_key(fact, interaction));
        if (!slot) throw AssemblyError("no validated templates cover " + describe_row(fact, interaction));
        const auto& [set, turn_no] = *slot;
        const auto& turn = set->turns.at(turn_no);
        for (const auto& fam : requested_families(interaction)) {
            const auto& variants = turn.families.at(fam);
            for (std::size_t v = 0; v < variants.size(); ++v)
                out.push_back({interaction, fam, v, fill_template(variants[v], set->signature, turn_no, fact), {}});
        }
        if (interaction != Interaction::text) continue;
        for (const auto& fam : requested_families(interaction)) {
            const auto& variants = turn.families.at(fam);
            for (std::size_t v = 0; v < variants.size(); ++v) {
                auto aug = augment_turn(fill_template(variants[v], set->signature, turn_no, fact), rng);
                out.push_back({interaction, typo_tag(fam), v, std::move(aug.question), std::move(aug.report)});
            }
        }
    }
    return out;
}

namespace {

bool covered(const FactRecord& f, const TemplateIndex& templates, Interaction interaction) {
    return templates.lookup(row_key(f, interaction)).has_value();
}

}  // namespace

GenerateResult generate_dataset(const KgStore& store, std::span<const FactRecord> facts,
                                std::span<const RelatedPair> related, const TemplateIndex& templates,
                                const GenerateOptions& options) {
    options.rules.validate();
    std::vector<EntityId> subjects;
    std::map<EntityId, std::vector<const FactRecord*>> by_subject;
    for (const auto& f : facts) {
        auto [it, inserted] = by_subject.try_emplace(f.fact.subject);
        if (inserted) subjects.push_back(f.fact.subject);
        it->second.push_back(&f);
    }
    std::map<EntityId, EntityId> related_of;
    for (const auto& p : related) related_of.emplace(p.anchor, p.related);

    struct Job {
        std::string id;
        const ConversationConfig* config;
        std::vector<const FactRecord*> pool;
        std::vector<const FactRecord*> related_pool;
    };
    GenerateResult result;
    std::vector<Job> jobs;
    for (const auto& config : options.configs) {
        config.validate();
        for (const auto& subject : subjects) {
            std::vector<const FactRecord*> pool;
            for (const auto* f : by_subject[subject])
                if (covered(*f, templates, config.interaction)) pool.push_back(f);
            if (pool.empty()) {
                result.skipped.push_back(subject.value + " " + config.name() + ": no facts with templates");
                continue;
            }
            std::vector<const FactRecord*> related_pool;
            if (config.related) {
                const auto rel = related_of.find(subject);
                if (rel == related_of.end()) {
                    result.skipped.push_back(subject.value + " " + config.name() + ": no related entity");
                    continue;
                }
                for (const auto* f : by_subject[rel->second])
                    if (covered(*f, templates, config.interaction)) related_pool.push_back(f);
                if (related_pool.empty()) {
                    result.skipped.push_back(subject.value + " " + config.name() + ": related entity " +
                                             rel->second.value + " has no facts with templates");
                    continue;
                }
            }
            for (std::size_t k = 0; k < options.conversations_per_entity; ++k)
                jobs.push_back({subject.value + "/" + config.name() + "/" + std::to_string(k), &config, pool,
                                related_pool});
        }
    }

    result.conversations.resize(jobs.size());
    parallel_for(jobs.size(), options.threads, [&](std::size_t i) {
        const auto& job = jobs[i];
        Rng rng(derive_seed(job.config->seed, job.id));
        const auto seq = plan_fact_sequence(job.pool, job.related_pool, options.rules, job.config->turns, rng);
        result.conversations[i] = assemble(job.id, seq, templates, *job.config, store, rng);
    });
    for (const auto& s : result.skipped) spdlog::debug("generate: skipped {}", s);
    return result;
}

ojson to_json(const Conversation& c) {
    ojson j;
    j["schema"] = kDatasetSchema;
    j["id"] = c.id;
    j["primary_entity"] = c.primary_entity.value;
    if (c.related_entity) j["related_entity"] = c.related_entity->value;
    j["config"] = to_json(c.config);
    j["short"] = c.short_pool;
    j["turns"] = ojson::array();
    for (const auto& t : c.turns) {
        ojson tj;
        tj["index"] = t.index;
        tj["question"] = t.question;
        tj["family"] = t.family;
        tj["variant"] = t.variant;
        tj["objects"] = t.objects;
        tj["gold_answers"] = t.gold_answers;
        tj["fact_id"] = t.fact_id;
        tj["subject"] = t.subject.value;
        tj["subject_type"] = t.subject_type.value;
        tj["predicate"] = t.predicate.value;
        if (t.qualifier) tj["qualifier"] = t.qualifier->value;
        tj["kind"] = to_string(t.kind);
        tj["related"] = t.related;
        if (t.typo) tj["typo"] = to_json(*t.typo);
        j["turns"].push_back(std::move(tj));
    }
    return j;
}

Conversation conversation_from_json(const json& j) {
    if (j.value("schema", std::string(kDatasetSchema)) != kDatasetSchema)
        throw ParseError("unsupported dataset schema " + j["schema"].dump(), j.dump());
    Conversation c;
    c.id = j.at("id").get<std::string>();
    c.primary_entity = EntityId{j.at("primary_entity").get<std::string>()};
    if (j.contains("related_entity")) c.related_entity = EntityId{j["related_entity"].get<std::string>()};
    c.config = config_from_json(j.at("config"));
    c.short_pool = j.value("short", false);
    for (const auto& tj : j.at("turns")) {
        ConversationTurn t;
        t.index = tj.at("index").get<std::size_t>();
        t.question = tj.at("question").get<std::string>();
        t.family = tj.at("family").get<std::string>();
        t.variant = tj.value("variant", std::size_t{0});
        t.objects = tj.at("objects").get<std::vector<std::string>>();
        t.gold_answers = tj.at("gold_answers").get<std::vector<std::string>>();
        t.fact_id = tj.value("fact_id", std::string());
        t.subject = EntityId{tj.value("subject", c.primary_entity.value)};
        t.subject_type = EntityId{tj.value("subject_type", std::string())};
        t.predicate = PropertyId{tj.value("predicate", std::string())};
        if (tj.contains("qualifier")) t.qualifier = PropertyId{tj["qualifier"].get<std::string>()};
        t.kind = fact_kind_from_string(tj.value("kind", std::string("simple")));
        t.related = tj.value("related", false);
        if (tj.contains("typo")) t.typo = typo_report_from_json(tj["typo"]);
        c.turns.push_back(std::move(t));
    }
    return c;
}

std::string dataset_to_jsonl(std::span<const Conversation> conversations) {
    std::string out;
    for (const auto& c : conversations) out += to_json(c).dump() + "\n";
    return out;
}

std::vector<Conversation> read_dataset(std::istream& in) {
    std::vector<Conversation> out;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
        ++n;
        if (trim(line).empty()) continue;
        json j = json::parse(line, nullptr, false);
        if (j.is_discarded()) throw ParseError("dataset line " + std::to_string(n) + " is not JSON", line);
        out.push_back(conversation_from_json(j));
    }
    return out;
}

std::vector<Conversation> read_dataset_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open dataset " + path);
    return read_dataset(in);
}

}  // namespace kgconv
