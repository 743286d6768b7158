#include "oracles.h"

#include <algorithm>
#include <map>
#include <set>
#include <sstream>

namespace kgconv::testing {

std::string describe(const Fact& f) {
    std::string s = f.subject.value + "|" + f.predicate.value + "|" + to_string(f.kind) + "|";
    for (std::size_t i = 0; i < f.objects.size(); ++i) s += (i ? ";" : "") + value_to_json(f.objects[i]).dump();
    s += "|";
    if (f.qualifier_predicate) s += f.qualifier_predicate->value;
    s += "|";
    if (f.qualifier_value) s += value_to_json(*f.qualifier_value).dump();
    return s;
}

namespace {

std::string describe_group(const EntityId& e, const PropertyId& p, const std::vector<const Statement*>& sts) {
    Fact f;
    f.subject = e;
    f.predicate = p;
    for (const auto* s : sts) f.objects.push_back(s->value);
    f.kind = sts.size() == 1 ? FactKind::simple : FactKind::complex;
    return describe(f);
}

}  // namespace

std::vector<std::string> oracle_facts(const EntityRecord& record, const SelectedPredicates& selection,
                                      bool preferred_only) {
    std::map<std::string, std::vector<const Statement*>> by_prop;
    for (const auto& s : record.statements) by_prop[s.property.value].push_back(&s);
    if (preferred_only) {
        for (auto& [_, sts] : by_prop) {
            int best = 0;
            for (const auto* s : sts) best = std::max(best, s->rank == Rank::preferred ? 2 : s->rank == Rank::normal ? 1 : 0);
            const Rank keep = best == 2 ? Rank::preferred : Rank::normal;
            std::vector<const Statement*> kept;
            for (const auto* s : sts)
                if (s->rank == keep) kept.push_back(s);
            sts = kept;
        }
    }
    std::set<std::string> plain;
    std::map<std::string, std::set<std::string>> quals;
    for (const auto& row : selection.selected) {
        if (row.qualifier) quals[row.property.value].insert(row.qualifier->value);
        else plain.insert(row.property.value);
    }
    std::vector<std::string> out;
    for (const auto& p : plain) {
        const auto& sts = by_prop[p];
        if (!sts.empty()) out.push_back(describe_group(record.id, PropertyId(p), sts));
    }
    for (const auto& [p, qs] : quals) {
        std::vector<const Statement*> bare;
        for (const auto* s : by_prop[p]) {
            bool hit = false;
            for (const auto& q : s->qualifiers) {
                if (!qs.count(q.property.value)) continue;
                hit = true;
                Fact f;
                f.subject = record.id;
                f.predicate = PropertyId(p);
                f.objects = {s->value};
                f.kind = FactKind::qualified;
                f.qualifier_predicate = q.property;
                f.qualifier_value = q.value;
                out.push_back(describe(f));
            }
            if (!hit) bare.push_back(s);
        }
        if (!plain.count(p) && !bare.empty()) out.push_back(describe_group(record.id, PropertyId(p), bare));
    }
    std::sort(out.begin(), out.end());
    return out;
}

EvalReport oracle_metrics(const std::vector<ScoredConversation>& scored) {
    EvalReport r;
    long double ones = 0, conv_sum = 0;
    for (const auto& c : scored) {
        long double conv_ones = 0;
        for (std::size_t i = 0; i < c.ratings.size(); ++i) {
            const bool na = i < c.na.size() && c.na[i];
            const int v = na ? 0 : c.ratings[i];
            conv_ones += v;
            if (na) ++r.na_turns;
        }
        ones += conv_ones;
        r.turns += c.ratings.size();
        conv_sum += conv_ones / c.ratings.size();
        ++r.conversations;
    }
    r.mean_turn = static_cast<double>(ones / r.turns);
    r.mean_conv = static_cast<double>(conv_sum / r.conversations);
    r.na_ratio = static_cast<double>(static_cast<long double>(r.na_turns) / r.turns);
    return r;
}

DatasetReport oracle_report(const std::string& jsonl) {
    DatasetReport r;
    std::set<std::string> entities, facts, types, preds, fams;
    bool related = false;
    std::istringstream in(jsonl);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto j = nlohmann::json::parse(line);
        ++r.conversations;
        const auto& cfg = j.at("config");
        std::string name = cfg.at("interaction").get<std::string>();
        if (cfg.value("deixis", false)) name += "+deixis";
        if (cfg.value("disfluency", false)) name += "+disfluency";
        if (cfg.value("typo", false)) name += "+typo";
        if (cfg.value("related", false)) {
            name += "+related";
            related = true;
        }
        ++r.per_config[name];
        for (const auto& t : j.at("turns")) {
            ++r.turns;
            entities.insert(t.at("subject").get<std::string>());
            facts.insert(t.at("fact_id").get<std::string>());
            types.insert(t.at("subject_type").get<std::string>());
            preds.insert(t.at("predicate").get<std::string>());
            fams.insert(cfg.at("interaction").get<std::string>() + "/" + t.at("family").get<std::string>());
        }
    }
    r.entities = entities.size();
    r.facts = facts.size();
    r.unique_types = types.size();
    r.unique_predicates = preds.size();
    r.questions_per_fact = fams.size() * 3 + (related ? 5 * 3 * 2 : 0);
    return r;
}

std::size_t edit_distance(const std::string& a, const std::string& b) {
    std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
    for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
    for (std::size_t i = 1; i <= a.size(); ++i) {
        cur[0] = i;
        for (std::size_t j = 1; j <= b.size(); ++j)
            cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1)});
        std::swap(prev, cur);
    }
    return prev[b.size()];
}

bool adjacent_transposition(const std::string& a, const std::string& b) {
    if (a.size() != b.size() || a == b) return false;
    std::vector<std::size_t> diff;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i] != b[i]) diff.push_back(i);
    return diff.size() == 2 && diff[1] == diff[0] + 1 && a[diff[0]] == b[diff[1]] && a[diff[1]] == b[diff[0]];
}

DatasetStats oracle_store_stats(const std::vector<nlohmann::json>& lines) {
    DatasetStats st;
    std::set<std::string> types, preds;
    for (const auto& j : lines) {
        ++st.entity_count;
        auto note = [&](const std::string& prop, const std::string& target) {
            preds.insert(prop);
            if ((prop == "P31" || prop == "P106") && !target.empty()) types.insert(target);
        };
        if (j.contains("labels")) {
            for (const auto& [prop, sts] : j["claims"].items())
                for (const auto& s : sts) {
                    ++st.fact_count;
                    const auto& v = s["mainsnak"]["datavalue"]["value"];
                    note(prop, v.is_object() && v.contains("id") ? v["id"].get<std::string>() : "");
                }
        } else {
            for (const auto& c : j["claims"]) {
                ++st.fact_count;
                note(c["property"], c["value"].value("id", ""));
            }
        }
    }
    st.unique_type_count = types.size();
    st.unique_predicate_count = preds.size();
    return st;
}

}  // namespace kgconv::testing
