#include "kgconv/fact_extractor.h"

#include "kgconv/common.h"

#include <algorithm>
#include <fstream>
#include <set>

namespace kgconv {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

const char* to_string(FactKind k) {
    switch (k) {
        case FactKind::simple: return "simple";
        case FactKind::complex: return "complex";
        case FactKind::qualified: return "qualified";
    }
    return "simple";
}

FactKind fact_kind_from_string(const std::string& s) {
    if (s == "simple") return FactKind::simple;
    if (s == "complex") return FactKind::complex;
    if (s == "qualified") return FactKind::qualified;
    throw ParseError("unknown fact kind '" + s + "'", s);
}

namespace {

std::vector<const Statement*> statements_of(const EntityRecord& record, const PropertyId& p,
                                            const ExtractOptions& options) {
    std::vector<const Statement*> out;
    for (const auto& s : record.statements)
        if (s.property == p) out.push_back(&s);
    if (options.preferred_only && !out.empty()) {
        const bool any_preferred =
            std::any_of(out.begin(), out.end(), [](const Statement* s) { return s->rank == Rank::preferred; });
        const Rank keep = any_preferred ? Rank::preferred : Rank::normal;
        std::erase_if(out, [&](const Statement* s) { return s->rank != keep; });
    }
    return out;
}

std::optional<Fact> group_fact(const EntityId& e, const PropertyId& p, const std::vector<const Statement*>& sts) {
    if (sts.empty()) return std::nullopt;
    Fact f;
    f.subject = e;
    f.predicate = p;
    for (const auto* s : sts) f.objects.push_back(s->value);
    f.kind = f.objects.size() == 1 ? FactKind::simple : FactKind::complex;
    return f;
}

const EntityRecord& checked_record(const KgStore& store, const EntityId& e, const SelectedPredicates& selected) {
    const auto& record = store.at(e);
    if (!types_of(store, e).count(selected.type))
        throw ContractViolation("selection for type " + selected.type.value + " does not apply to " + e.value);
    return record;
}

enum class RowFilter { unqualified, qualified, all };

std::vector<Fact> extract(const KgStore& store, const EntityId& e, const SelectedPredicates& selected,
                          const ExtractOptions& options, RowFilter filter) {
    const auto& record = checked_record(store, e, selected);

    std::set<PropertyId> unqualified_selected;
    std::map<PropertyId, std::set<PropertyId>> qualifiers_selected;
    for (const auto& row : selected.selected) {
        if (row.qualifier)
            qualifiers_selected[row.property].insert(*row.qualifier);
        else
            unqualified_selected.insert(row.property);
    }

    std::vector<Fact> out;
    std::set<PropertyId> fallback_done;
    for (const auto& row : selected.selected) {
        const auto sts = statements_of(record, row.property, options);
        if (!row.qualifier) {
            if (filter == RowFilter::qualified) continue;
            if (auto f = group_fact(e, row.property, sts)) out.push_back(std::move(*f));
            continue;
        }
        if (filter == RowFilter::unqualified) continue;
        for (const auto* s : sts) {
            for (const auto& q : s->qualifiers) {
                if (q.property != *row.qualifier) continue;
                Fact f;
                f.subject = e;
                f.predicate = row.property;
                f.objects = {s->value};
                f.kind = FactKind::qualified;
                f.qualifier_predicate = q.property;
                f.qualifier_value = q.value;
                out.push_back(std::move(f));
            }
        }
        if (unqualified_selected.count(row.property) || !fallback_done.insert(row.property).second) continue;
        const auto& wanted = qualifiers_selected[row.property];
        std::vector<const Statement*> bare;
        for (const auto* s : sts) {
            const bool has_any = std::any_of(s->qualifiers.begin(), s->qualifiers.end(),
                                             [&](const Qualifier& q) { return wanted.count(q.property) != 0; });
            if (!has_any) bare.push_back(s);
        }
        if (auto f = group_fact(e, row.property, bare)) out.push_back(std::move(*f));
    }
    return out;
}

}  // namespace

std::vector<Fact> extract_facts(const KgStore& store, const EntityId& e, const SelectedPredicates& selected,
                                const ExtractOptions& options) {
    return extract(store, e, selected, options, RowFilter::unqualified);
}

std::vector<Fact> extract_qualified_facts(const KgStore& store, const EntityId& e, const SelectedPredicates& selected,
                                          const ExtractOptions& options) {
    return extract(store, e, selected, options, RowFilter::qualified);
}

std::vector<Fact> extract_all_facts(const KgStore& store, const EntityId& e, const SelectedPredicates& selected,
                                    const ExtractOptions& options) {
    return extract(store, e, selected, options, RowFilter::all);
}

namespace {

ojson fact_identity(const Fact& f) {
    ojson j;
    j["subject"] = f.subject.value;
    j["predicate"] = f.predicate.value;
    j["kind"] = to_string(f.kind);
    j["objects"] = ojson::array();
    for (const auto& o : f.objects) j["objects"].push_back(value_to_json(o));
    if (f.qualifier_predicate) j["qualifier_predicate"] = f.qualifier_predicate->value;
    if (f.qualifier_value) j["qualifier_value"] = value_to_json(*f.qualifier_value);
    return j;
}

}  // namespace

FactRecord make_fact_record(const KgStore& store, const Fact& fact, const SelectedPredicates& selection,
                            std::size_t source_index) {
    FactRecord r;
    r.id = sha256_hex(fact_identity(fact).dump()).substr(0, 16);
    r.fact = fact;
    r.subject_label = store.label_of(fact.subject).value_or(fact.subject.value);
    r.subject_type = selection.type;
    r.subject_type_label = selection.type_label.empty() ? type_label(store, selection.type) : selection.type_label;
    r.predicate_label = store.property_label(fact.predicate);
    if (fact.qualifier_predicate) r.qualifier_label = store.property_label(*fact.qualifier_predicate);
    for (const auto& o : fact.objects) r.rendered_objects.push_back(store.render(o));
    if (fact.qualifier_value) r.rendered_qualifier = store.render(*fact.qualifier_value);
    r.source_index = source_index;
    return r;
}

const SelectedPredicates* selection_for(const EntityRecord& record,
                                        const std::map<EntityId, SelectedPredicates>& selections) {
    for (const auto& t : record.types) {
        const auto it = selections.find(t);
        if (it != selections.end() && !it->second.selected.empty()) return &it->second;
    }
    return nullptr;
}

std::vector<FactRecord> extract_store_facts(const KgStore& store,
                                            const std::map<EntityId, SelectedPredicates>& selections,
                                            const ExtractOptions& options) {
    std::vector<FactRecord> out;
    for (const auto& record : store.entities()) {
        const auto* selection = selection_for(record, selections);
        if (!selection) continue;
        const auto facts = extract_all_facts(store, record.id, *selection, options);
        for (std::size_t i = 0; i < facts.size(); ++i) out.push_back(make_fact_record(store, facts[i], *selection, i));
    }
    return out;
}

ojson to_json(const FactRecord& r) {
    ojson j;
    j["id"] = r.id;
    j["subject"] = r.fact.subject.value;
    j["subject_label"] = r.subject_label;
    j["subject_type"] = r.subject_type.value;
    j["subject_type_label"] = r.subject_type_label;
    j["predicate"] = r.fact.predicate.value;
    j["predicate_label"] = r.predicate_label;
    j["kind"] = to_string(r.fact.kind);
    j["objects"] = ojson::array();
    for (std::size_t i = 0; i < r.fact.objects.size(); ++i)
        j["objects"].push_back({{"rendered", r.rendered_objects[i]}, {"raw", value_to_json(r.fact.objects[i])}});
    if (r.fact.qualifier_predicate) {
        ojson q;
        q["predicate"] = r.fact.qualifier_predicate->value;
        q["predicate_label"] = r.qualifier_label;
        if (r.fact.qualifier_value)
            q["value"] = {{"rendered", r.rendered_qualifier.value_or("")}, {"raw", value_to_json(*r.fact.qualifier_value)}};
        j["qualifier"] = std::move(q);
    }
    j["source_index"] = r.source_index;
    return j;
}

FactRecord fact_record_from_json(const json& j) {
    FactRecord r;
    r.id = j.at("id").get<std::string>();
    r.fact.subject = EntityId{j.at("subject").get<std::string>()};
    r.subject_label = j.value("subject_label", r.fact.subject.value);
    r.subject_type = EntityId{j.at("subject_type").get<std::string>()};
    r.subject_type_label = j.value("subject_type_label", r.subject_type.value);
    r.fact.predicate = PropertyId{j.at("predicate").get<std::string>()};
    r.predicate_label = j.value("predicate_label", r.fact.predicate.value);
    r.fact.kind = fact_kind_from_string(j.at("kind").get<std::string>());
    for (const auto& o : j.at("objects")) {
        r.fact.objects.push_back(value_from_json(o.at("raw")));
        r.rendered_objects.push_back(o.at("rendered").get<std::string>());
    }
    if (j.contains("qualifier")) {
        const auto& q = j["qualifier"];
        r.fact.qualifier_predicate = PropertyId{q.at("predicate").get<std::string>()};
        r.qualifier_label = q.value("predicate_label", r.fact.qualifier_predicate->value);
        if (q.contains("value")) {
            r.fact.qualifier_value = value_from_json(q["value"].at("raw"));
            r.rendered_qualifier = q["value"].at("rendered").get<std::string>();
        }
    }
    r.source_index = j.value("source_index", std::size_t{0});
    return r;
}

void write_facts_file(const std::string& path, std::span<const FactRecord> facts) {
    std::string out;
    for (const auto& f : facts) out += to_json(f).dump() + "\n";
    write_file(path, out);
}

std::vector<FactRecord> read_facts_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<FactRecord> out;
    std::string line;
    while (std::getline(in, line))
        if (!trim(line).empty()) out.push_back(fact_record_from_json(json::parse(line)));
    return out;
}

}  // namespace kgconv
