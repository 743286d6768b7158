#include "kgconv/kg_store.h"

#include "kgconv/common.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <istream>
#include <sstream>
#include <unordered_set>

namespace kgconv {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

bool natural_id_less(const std::string& a, const std::string& b) {
    auto split = [](const std::string& s) -> std::optional<std::pair<char, std::string_view>> {
        if (s.size() < 2 || !std::isalpha(static_cast<unsigned char>(s[0]))) return std::nullopt;
        for (std::size_t i = 1; i < s.size(); ++i)
            if (!std::isdigit(static_cast<unsigned char>(s[i]))) return std::nullopt;
        return std::make_pair(s[0], std::string_view(s).substr(1));
    };
    const auto sa = split(a);
    const auto sb = split(b);
    if (sa && sb && sa->first == sb->first) {
        // strip leading zeros so "P007" and "P7" compare by magnitude
        auto strip = [](std::string_view d) {
            const auto nz = d.find_first_not_of('0');
            return nz == std::string_view::npos ? std::string_view{} : d.substr(nz);
        };
        const auto da = strip(sa->second);
        const auto db = strip(sb->second);
        if (da.size() != db.size()) return da.size() < db.size();
        if (da != db) return da < db;
    }
    return a < b;
}

// ---------------------------------------------------------------------------
// Values

ojson value_to_json(const Value& v) {
    ojson j;
    std::visit(
        [&](const auto& x) {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, EntityRef>) {
                j["kind"] = "entity";
                j["id"] = x.id.value;
            } else if constexpr (std::is_same_v<T, TextValue>) {
                j["kind"] = "text";
                j["text"] = x.text;
            } else if constexpr (std::is_same_v<T, Quantity>) {
                j["kind"] = "quantity";
                j["amount"] = x.amount;
                if (x.unit) j["unit"] = x.unit->value;
            } else if constexpr (std::is_same_v<T, Timestamp>) {
                j["kind"] = "time";
                j["time"] = x.time;
                j["precision"] = x.precision;
            } else {
                j["kind"] = "other";
                j["raw"] = x.raw;
            }
        },
        v);
    return j;
}

Value value_from_json(const json& j) {
    if (!j.is_object() || !j.contains("kind") || !j["kind"].is_string())
        throw ParseError("value without kind", j.dump());
    const std::string kind = j["kind"];
    auto str = [&](const char* key) -> std::string {
        if (!j.contains(key) || !j[key].is_string())
            throw ParseError(std::string("value field '") + key + "' missing", j.dump());
        return j[key].get<std::string>();
    };
    if (kind == "entity") return EntityRef{EntityId{str("id")}};
    if (kind == "text") return TextValue{str("text")};
    if (kind == "quantity") {
        Quantity q{str("amount"), std::nullopt};
        if (j.contains("unit") && j["unit"].is_string()) q.unit = EntityId{j["unit"].get<std::string>()};
        return q;
    }
    if (kind == "time") {
        Timestamp t{str("time"), 11};
        if (j.contains("precision") && j["precision"].is_number_integer()) t.precision = j["precision"];
        return t;
    }
    if (kind == "other") return OtherValue{str("raw")};
    throw ParseError("unknown value kind '" + kind + "'", j.dump());
}

std::string render_timestamp(const Timestamp& t) {
    std::string_view s = t.time;
    std::string sign;
    if (!s.empty() && (s[0] == '+' || s[0] == '-')) {
        if (s[0] == '-') sign = "-";
        s.remove_prefix(1);
    }
    const auto t_pos = s.find('T');
    const std::string_view date = s.substr(0, t_pos);
    // date is YYYY-MM-DD with a variable-width year
    const auto first_dash = date.find('-');
    if (first_dash == std::string_view::npos || date.size() < first_dash + 6) return t.time;
    const std::string_view year = date.substr(0, first_dash);
    const std::string_view month = date.substr(first_dash + 1, 2);
    const std::string_view day = date.substr(first_dash + 4, 2);
    std::string out = sign + std::string(year);
    if (t.precision >= 10) out += "-" + std::string(month);
    if (t.precision >= 11) out += "-" + std::string(day);
    return out;
}

// ---------------------------------------------------------------------------
// Store

const EntityRecord* KgStore::find(const EntityId& id) const {
    const auto it = index_.find(id.value);
    return it == index_.end() ? nullptr : &entities_[it->second];
}

const EntityRecord& KgStore::at(const EntityId& id) const {
    if (const auto* r = find(id)) return *r;
    throw NotFoundError("unknown entity " + id.value);
}

std::span<const EntityId> KgStore::entities_of_type(const EntityId& t) const {
    const auto it = by_type_.find(t);
    if (it == by_type_.end()) return {};
    return it->second;
}

std::vector<EntityId> KgStore::type_ids() const {
    std::vector<EntityId> out;
    out.reserve(by_type_.size());
    for (const auto& [t, members] : by_type_)
        if (!members.empty()) out.push_back(t);
    std::sort(out.begin(), out.end(),
              [](const EntityId& a, const EntityId& b) { return natural_id_less(a.value, b.value); });
    return out;
}

std::optional<std::string> KgStore::label_of(const EntityId& id) const {
    if (const auto* r = find(id)) return r->label;
    const auto it = labels_.find(id.value);
    if (it == labels_.end()) return std::nullopt;
    return it->second;
}

std::vector<std::pair<std::string, std::string>> KgStore::labels_sorted() const {
    std::vector<std::pair<std::string, std::string>> out(labels_.begin(), labels_.end());
    std::sort(out.begin(), out.end());
    return out;
}

std::string KgStore::property_label(const PropertyId& p) const {
    const auto it = property_labels_.find(p);
    return it == property_labels_.end() ? p.value : it->second;
}

std::string KgStore::render(const Value& v) const {
    return std::visit(
        [&](const auto& x) -> std::string {
            using T = std::decay_t<decltype(x)>;
            if constexpr (std::is_same_v<T, EntityRef>) {
                return label_of(x.id).value_or(x.id.value);
            } else if constexpr (std::is_same_v<T, TextValue>) {
                return x.text;
            } else if constexpr (std::is_same_v<T, Quantity>) {
                std::string amount = x.amount;
                if (!amount.empty() && amount[0] == '+') amount.erase(0, 1);
                if (x.unit) {
                    if (auto unit = label_of(*x.unit)) return amount + " " + *unit;
                }
                return amount;
            } else if constexpr (std::is_same_v<T, Timestamp>) {
                return render_timestamp(x);
            } else {
                return x.raw;
            }
        },
        v);
}

bool KgStoreBuilder::add(EntityRecord record) {
    if (record.id.empty()) return false;
    if (store_.index_.count(record.id.value)) return false;
    for (const auto& t : record.types) store_.by_type_[t].push_back(record.id);
    store_.index_.emplace(record.id.value, store_.entities_.size());
    store_.entities_.push_back(std::move(record));
    return true;
}

void KgStoreBuilder::add_label(const EntityId& id, std::string label) {
    if (label.empty()) return;
    store_.labels_.try_emplace(id.value, std::move(label));
}

void KgStoreBuilder::add_property_label(const PropertyId& p, std::string label) {
    if (label.empty()) return;
    store_.property_labels_.try_emplace(p, std::move(label));
}

KgStore KgStoreBuilder::build() && {
    // kept entities answer label_of() from their record
    for (const auto& e : store_.entities_) store_.labels_.erase(e.id.value);
    return std::move(store_);
}

std::set<EntityId> types_of(const KgStore& store, const EntityId& e) {
    const auto& record = store.at(e);
    std::set<EntityId> out(record.types.begin(), record.types.end());
    for (const auto& s : record.statements) {
        if (s.property != kInstanceOf && s.property != kOccupation) continue;
        if (const auto* ref = std::get_if<EntityRef>(&s.value)) out.insert(ref->id);
    }
    return out;
}

DatasetStats stats(const KgStore& store) {
    DatasetStats st;
    std::unordered_set<std::string> types;
    std::unordered_set<std::string> predicates;
    for (const auto& e : store.entities()) {
        ++st.entity_count;
        st.fact_count += e.statements.size();
        for (const auto& t : e.types) types.insert(t.value);
        for (const auto& s : e.statements) predicates.insert(s.property.value);
    }
    st.unique_type_count = types.size();
    st.unique_predicate_count = predicates.size();
    return st;
}

// ---------------------------------------------------------------------------
// Ingest

namespace {

void derive_types(EntityRecord& record) {
    std::unordered_set<std::string> seen;
    for (const auto& t : record.types) seen.insert(t.value);
    for (const auto& s : record.statements) {
        if (s.property != kInstanceOf && s.property != kOccupation) continue;
        if (const auto* ref = std::get_if<EntityRef>(&s.value))
            if (seen.insert(ref->id.value).second) record.types.push_back(ref->id);
    }
}

Rank parse_rank(const std::string& r) {
    if (r == "preferred") return Rank::preferred;
    if (r == "deprecated") return Rank::deprecated;
    return Rank::normal;
}

const char* rank_name(Rank r) {
    switch (r) {
        case Rank::preferred: return "preferred";
        case Rank::deprecated: return "deprecated";
        default: return "normal";
    }
}

std::string strip_entity_uri(const std::string& s) {
    const auto slash = s.rfind('/');
    return slash == std::string::npos ? s : s.substr(slash + 1);
}

// Wikidata snak → Value. novalue/somevalue snaks become OtherValue markers.
Value snak_value(const ojson& snak) {
    const std::string snaktype = snak.value("snaktype", "value");
    if (snaktype != "value" || !snak.contains("datavalue")) return OtherValue{snaktype};
    const auto& dv = snak["datavalue"];
    const std::string type = dv.value("type", "");
    const auto& v = dv["value"];
    if (type == "wikibase-entityid") {
        if (v.contains("id")) return EntityRef{EntityId{v["id"].get<std::string>()}};
        const std::string et = v.value("entity-type", "item");
        const char prefix = et == "property" ? 'P' : et == "lexeme" ? 'L' : 'Q';
        return EntityRef{EntityId{std::string(1, prefix) + std::to_string(v["numeric-id"].get<long long>())}};
    }
    if (type == "string") return TextValue{v.get<std::string>()};
    if (type == "monolingualtext") return TextValue{v.value("text", "")};
    if (type == "quantity") {
        Quantity q{v.value("amount", ""), std::nullopt};
        const std::string unit = v.value("unit", "1");
        if (unit != "1" && !unit.empty()) q.unit = EntityId{strip_entity_uri(unit)};
        return q;
    }
    if (type == "time") return Timestamp{v.value("time", ""), v.value("precision", 11)};
    return OtherValue{v.dump()};
}

struct ParsedLine {
    enum class Kind { skip, entity, property } kind = Kind::skip;
    EntityRecord record;
    bool has_label = false;
    std::vector<std::pair<PropertyId, std::string>> property_labels;
};

ParsedLine parse_wikidata(const ojson& j, const std::string& lang) {
    ParsedLine out;
    out.record.id = EntityId{j.at("id").get<std::string>()};
    if (j.contains("labels") && j["labels"].contains(lang)) {
        out.record.label = j["labels"][lang].value("value", "");
        out.has_label = !out.record.label.empty();
    }
    if (j.value("type", "item") == "property") {
        out.kind = ParsedLine::Kind::property;
        return out;
    }
    out.kind = ParsedLine::Kind::entity;
    if (j.contains("aliases") && j["aliases"].contains(lang))
        for (const auto& a : j["aliases"][lang]) out.record.aliases.push_back(a.value("value", ""));
    if (j.contains("claims") && j["claims"].is_object()) {
        for (const auto& [prop, statements] : j["claims"].items()) {
            for (const auto& st : statements) {
                Statement s;
                s.property = PropertyId{prop};
                s.value = snak_value(st.at("mainsnak"));
                s.rank = parse_rank(st.value("rank", "normal"));
                if (st.contains("qualifiers")) {
                    const auto& quals = st["qualifiers"];
                    std::vector<std::string> order;
                    if (st.contains("qualifiers-order"))
                        order = st["qualifiers-order"].get<std::vector<std::string>>();
                    else
                        for (const auto& [qp, _] : quals.items()) order.push_back(qp);
                    for (const auto& qp : order) {
                        if (!quals.contains(qp)) continue;
                        for (const auto& qs : quals[qp]) s.qualifiers.push_back({PropertyId{qp}, snak_value(qs)});
                    }
                }
                out.record.statements.push_back(std::move(s));
            }
        }
    }
    derive_types(out.record);
    return out;
}

ParsedLine parse_canonical(const json& j) {
    ParsedLine out;
    out.kind = ParsedLine::Kind::entity;
    out.record.id = EntityId{j.at("id").get<std::string>()};
    out.record.label = j.value("label", "");
    out.has_label = !out.record.label.empty();
    if (j.contains("aliases"))
        for (const auto& a : j["aliases"]) out.record.aliases.push_back(a.get<std::string>());
    if (j.contains("types"))
        for (const auto& t : j["types"]) out.record.types.push_back(EntityId{t.get<std::string>()});
    if (j.contains("claims")) {
        for (const auto& c : j["claims"]) {
            Statement s;
            s.property = PropertyId{c.at("property").get<std::string>()};
            if (c.contains("property_label") && c["property_label"].is_string())
                out.property_labels.emplace_back(s.property, c["property_label"].get<std::string>());
            s.value = value_from_json(c.at("value"));
            if (c.contains("qualifiers")) {
                for (const auto& q : c["qualifiers"]) {
                    PropertyId qp{q.at("property").get<std::string>()};
                    if (q.contains("property_label") && q["property_label"].is_string())
                        out.property_labels.emplace_back(qp, q["property_label"].get<std::string>());
                    s.qualifiers.push_back({qp, value_from_json(q.at("value"))});
                }
            }
            if (c.contains("rank") && c["rank"].is_string()) s.rank = parse_rank(c["rank"]);
            out.record.statements.push_back(std::move(s));
        }
    }
    derive_types(out.record);
    return out;
}

bool passes_type_filter(const EntityRecord& r, const IngestFilter& filter) {
    if (!filter.type_allowlist) return true;
    return std::any_of(r.types.begin(), r.types.end(),
                       [&](const EntityId& t) { return filter.type_allowlist->count(t) != 0; });
}

}  // namespace

IngestResult ingest_dump(std::istream& source, const IngestFilter& filter, Provenance provenance) {
    IngestResult result;
    KgStoreBuilder builder;
    builder.set_provenance(std::move(provenance));

    std::string line;
    while (std::getline(source, line)) {
        ++result.lines_read;
        std::string_view view = line;
        while (!view.empty() && std::isspace(static_cast<unsigned char>(view.back()))) view.remove_suffix(1);
        while (!view.empty() && std::isspace(static_cast<unsigned char>(view.front()))) view.remove_prefix(1);
        if (!view.empty() && view.back() == ',') view.remove_suffix(1);
        if (view.empty() || view == "[" || view == "]") continue;

        ParsedLine parsed;
        try {
            const auto j = json::parse(view);
            if (!j.is_object()) throw ParseError("line is not a JSON object", std::string(view));
            if (!j.contains("id") || !j["id"].is_string() || j["id"].get<std::string>().empty())
                throw ParseError("missing id", std::string(view));
            if (j.contains("labels") && j["labels"].is_object()) {
                // re-parse preserving document order so claims keep dump order
                parsed = parse_wikidata(ojson::parse(view), filter.language);
            } else {
                parsed = parse_canonical(j);
            }
        } catch (const std::exception& ex) {
            result.rejects.push_back({result.lines_read, ex.what()});
            continue;
        }

        auto& record = parsed.record;
        if (parsed.kind == ParsedLine::Kind::property) {
            if (parsed.has_label) builder.add_property_label(PropertyId{record.id.value}, record.label);
            continue;
        }
        for (auto& [p, label] : parsed.property_labels) builder.add_property_label(p, std::move(label));

        const bool allowlisted = filter.entity_allowlist.count(record.id) != 0;
        if (parsed.has_label) builder.add_label(record.id, record.label);
        if (!allowlisted && (!parsed.has_label || !passes_type_filter(record, filter))) {
            ++result.dropped;
            continue;
        }
        if (!parsed.has_label) record.label = record.id.value;
        const std::string id = record.id.value;
        if (!builder.add(std::move(record))) result.rejects.push_back({result.lines_read, "duplicate id " + id});
    }
    if (source.bad()) throw IoError("read error after line " + std::to_string(result.lines_read));
    result.store = std::move(builder).build();
    if (!result.rejects.empty())
        spdlog::warn("ingest: {} malformed line(s) rejected", result.rejects.size());
    return result;
}

IngestResult ingest_dump_file(const std::string& path, const IngestFilter& filter, Provenance provenance) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open dump " + path);
    if (provenance.dump.empty()) provenance.dump = std::filesystem::path(path).filename().string();
    return ingest_dump(in, filter, std::move(provenance));
}

std::string to_canonical_line(const KgStore& store, const EntityRecord& record) {
    ojson j;
    j["id"] = record.id.value;
    j["label"] = record.label;
    j["aliases"] = record.aliases;
    j["types"] = ojson::array();
    for (const auto& t : record.types) j["types"].push_back(t.value);
    j["claims"] = ojson::array();
    for (const auto& s : record.statements) {
        ojson c;
        c["property"] = s.property.value;
        c["property_label"] = store.property_label(s.property);
        c["value"] = value_to_json(s.value);
        c["qualifiers"] = ojson::array();
        for (const auto& q : s.qualifiers) {
            ojson qj;
            qj["property"] = q.property.value;
            qj["property_label"] = store.property_label(q.property);
            qj["value"] = value_to_json(q.value);
            c["qualifiers"].push_back(std::move(qj));
        }
        if (s.rank != Rank::normal) c["rank"] = rank_name(s.rank);
        j["claims"].push_back(std::move(c));
    }
    return j.dump();
}

std::string reject_log_tsv(std::span<const Reject> rejects) {
    std::string out;
    for (const auto& r : rejects) {
        std::string reason = r.reason;
        std::replace_if(reason.begin(), reason.end(), [](char c) { return c == '\t' || c == '\n' || c == '\r'; },
                        ' ');
        out += std::to_string(r.line) + "\t" + reason + "\n";
    }
    return out;
}

void save_store(const KgStore& store, const std::string& dir) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    std::string entities;
    for (const auto& e : store.entities()) entities += to_canonical_line(store, e) + "\n";
    write_file((fs::path(dir) / "entities.jsonl").string(), entities);

    std::string labels;
    for (const auto& [id, label] : store.labels_sorted()) labels += ojson{{"id", id}, {"label", label}}.dump() + "\n";
    write_file((fs::path(dir) / "labels.jsonl").string(), labels);

    std::string props;
    for (const auto& [p, label] : store.property_labels())
        props += ojson{{"id", p.value}, {"label", label}}.dump() + "\n";
    write_file((fs::path(dir) / "properties.jsonl").string(), props);

    ojson prov{{"dump", store.provenance().dump}, {"cutoff", store.provenance().cutoff}};
    write_file((fs::path(dir) / "provenance.json").string(), prov.dump(2) + "\n");
}

KgStore load_store(const std::string& dir) {
    namespace fs = std::filesystem;
    const fs::path root(dir);
    if (!fs::exists(root / "entities.jsonl")) throw IoError("no store at " + dir);

    KgStoreBuilder builder;
    auto for_lines = [](const fs::path& p, auto&& fn) {
        if (!fs::exists(p)) return;
        std::ifstream in(p);
        std::string line;
        while (std::getline(in, line))
            if (!line.empty()) fn(json::parse(line));
    };
    for_lines(root / "properties.jsonl", [&](const json& j) {
        builder.add_property_label(PropertyId{j.at("id").get<std::string>()}, j.at("label").get<std::string>());
    });
    for_lines(root / "labels.jsonl", [&](const json& j) {
        builder.add_label(EntityId{j.at("id").get<std::string>()}, j.at("label").get<std::string>());
    });
    for_lines(root / "entities.jsonl", [&](const json& j) {
        auto parsed = parse_canonical(j);
        builder.add(std::move(parsed.record));
    });
    if (fs::exists(root / "provenance.json")) {
        const auto j = json::parse(read_file((root / "provenance.json").string()));
        builder.set_provenance({j.value("dump", ""), j.value("cutoff", "")});
    }
    return std::move(builder).build();
}

}  // namespace kgconv
