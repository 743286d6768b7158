#include "kgconv/predicate_catalog.h"

#include "kgconv/prompts.h"
#include "kgconv/pylist.h"

#include <spdlog/spdlog.h>

#include <algorithm>
#include <fstream>
#include <set>

namespace kgconv {

using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

bool row_less(const PredicateRow& a, const PredicateRow& b) {
    if (a.property != b.property) return natural_id_less(a.property.value, b.property.value);
    if (a.qualifier.has_value() != b.qualifier.has_value()) return !a.qualifier.has_value();
    if (!a.qualifier) return false;
    return natural_id_less(a.qualifier->value, b.qualifier->value);
}

std::string type_label(const KgStore& store, const EntityId& type) {
    if (auto label = store.label_of(type)) return to_lower(*label);
    return type.value;
}

TypePredicateTable extract_predicates(const KgStore& store, const EntityId& t) {
    const auto members = store.entities_of_type(t);
    if (members.empty()) throw NotFoundError("type " + t.value + " has no member entities");

    std::set<std::pair<std::string, std::string>> seen;
    TypePredicateTable table{t, {}};
    auto add = [&](const PropertyId& p, const std::optional<PropertyId>& q) {
        if (!seen.emplace(p.value, q ? q->value : std::string{}).second) return;
        PredicateRow row{p, store.property_label(p), q, q ? store.property_label(*q) : std::string{}};
        table.predicates.push_back(std::move(row));
    };
    for (const auto& id : members) {
        for (const auto& s : store.at(id).statements) {
            add(s.property, std::nullopt);
            for (const auto& q : s.qualifiers) add(s.property, q.property);
        }
    }
    std::stable_sort(table.predicates.begin(), table.predicates.end(), row_less);
    return table;
}

ChatRequest build_selector_prompt(std::string_view type_label, std::span<const PredicateRow> batch,
                                  std::string model_profile) {
    if (batch.empty()) throw ContractViolation("selector batch is empty");
    if (batch.size() > kMaxSelectorBatch)
        throw ContractViolation("selector batch of " + std::to_string(batch.size()) + " rows exceeds " +
                                std::to_string(kMaxSelectorBatch));
    std::string rows;
    for (const auto& row : batch) {
        if (!rows.empty()) rows += ", ";
        rows += "(" + python_quote(row.property.value) + ", " + python_quote(row.label);
        if (row.qualifier)
            rows += ", " + python_quote(row.qualifier->value) + ", " + python_quote(row.qualifier_label);
        rows += ")";
    }
    ChatRequest req;
    req.system = std::string(prompts::kSelectorSystem);
    req.user = "Type: " + std::string(type_label) + "\nPredicates: [" + rows + "]";
    req.model_profile = std::move(model_profile);
    return req;
}

SelectorParse parse_selector_response(std::string_view text, std::span<const PredicateRow> batch) {
    const auto list = find_python_list(text);
    if (!list) throw ParseError("selector response has no bracketed list", std::string(text));

    SelectorParse out;
    std::vector<bool> taken(batch.size(), false);
    auto take = [&](std::size_t i) {
        if (taken[i]) return;
        taken[i] = true;
        out.selected.push_back(batch[i]);
    };
    for (const auto& item : list->items) {
        if (item.parts.empty()) continue;
        const std::string id = trim(item.parts[0]);
        std::optional<std::string> qualifier;
        if (item.tuple && item.parts.size() >= 3) qualifier = trim(item.parts[2]);

        bool matched = false;
        if (qualifier) {
            for (std::size_t i = 0; i < batch.size(); ++i) {
                if (batch[i].property.value == id && batch[i].qualifier && batch[i].qualifier->value == *qualifier) {
                    take(i);
                    matched = true;
                }
            }
        }
        if (!matched) {
            for (std::size_t i = 0; i < batch.size(); ++i) {
                if (batch[i].property.value == id) {
                    take(i);
                    matched = true;
                }
            }
        }
        if (!matched) {
            spdlog::info("selector returned id '{}' outside its batch; dropped", id);
            out.dropped.push_back(id);
        }
    }
    return out;
}

SelectedPredicates select_predicates(ChatGateway& gateway, const EntityId& t, std::string_view type_label,
                                     const TypePredicateTable& table, const SelectorOptions& options) {
    if (table.predicates.empty()) throw ContractViolation("predicate table for " + t.value + " is empty");

    std::vector<PredicateRow> rows = table.predicates;
    std::stable_sort(rows.begin(), rows.end(), row_less);

    SelectedPredicates result{t, std::string(type_label), {}, options.model_profile, {}};
    const std::size_t total = (rows.size() + kMaxSelectorBatch - 1) / kMaxSelectorBatch;
    std::size_t completed = 0;
    for (std::size_t start = 0; start < rows.size(); start += kMaxSelectorBatch) {
        const auto count = std::min(kMaxSelectorBatch, rows.size() - start);
        const std::span<const PredicateRow> batch(rows.data() + start, count);
        const auto request = build_selector_prompt(type_label, batch, options.model_profile);

        std::optional<SelectorParse> parsed;
        std::string last_error;
        for (int attempt = 0; attempt <= options.parse_retries && !parsed; ++attempt) {
            try {
                parsed = parse_selector_response(gateway.chat(request), batch);
            } catch (const ParseError& ex) {
                last_error = ex.what();
            } catch (const Error& ex) {
                throw SelectionError("selection for " + t.value + " failed at batch " + std::to_string(completed + 1) +
                                         ": " + ex.what(),
                                     result, completed, total);
            }
        }
        if (!parsed)
            throw SelectionError("selection for " + t.value + " failed at batch " + std::to_string(completed + 1) +
                                     ": " + last_error,
                                 result, completed, total);

        result.request_ids.push_back(request_hash(request));
        for (auto& row : parsed->selected) {
            const bool dup = std::any_of(result.selected.begin(), result.selected.end(),
                                         [&](const PredicateRow& r) { return r.same_key(row); });
            if (!dup) result.selected.push_back(std::move(row));
        }
        ++completed;
    }
    return result;
}

ojson to_json(const SelectedPredicates& s) {
    ojson j;
    j["type_id"] = s.type.value;
    j["type_label"] = s.type_label;
    j["predicates"] = ojson::array();
    for (const auto& row : s.selected) {
        ojson r;
        r["id"] = row.property.value;
        r["label"] = row.label;
        if (row.qualifier) r["qualifier_id"] = row.qualifier->value;
        j["predicates"].push_back(std::move(r));
    }
    j["model"] = s.model;
    j["request_ids"] = s.request_ids;
    return j;
}

SelectedPredicates selected_from_json(const json& j, const KgStore* store) {
    SelectedPredicates s;
    s.type = EntityId{j.at("type_id").get<std::string>()};
    s.type_label = j.value("type_label", s.type.value);
    for (const auto& r : j.at("predicates")) {
        PredicateRow row;
        row.property = PropertyId{r.at("id").get<std::string>()};
        row.label = r.value("label", row.property.value);
        if (r.contains("qualifier_id")) row.qualifier = PropertyId{r["qualifier_id"].get<std::string>()};
        if (store) {
            row.label = store->property_label(row.property);
            if (row.qualifier) row.qualifier_label = store->property_label(*row.qualifier);
        } else if (row.qualifier) {
            row.qualifier_label = r.value("qualifier_label", row.qualifier->value);
        }
        s.selected.push_back(std::move(row));
    }
    s.model = j.value("model", "");
    if (j.contains("request_ids")) s.request_ids = j["request_ids"].get<std::vector<std::string>>();
    return s;
}

void write_selected_file(const std::string& path, std::span<const SelectedPredicates> all) {
    std::string out;
    for (const auto& s : all) out += to_json(s).dump() + "\n";
    write_file(path, out);
}

std::vector<SelectedPredicates> read_selected_file(const std::string& path, const KgStore* store) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<SelectedPredicates> out;
    std::string line;
    while (std::getline(in, line))
        if (!trim(line).empty()) out.push_back(selected_from_json(json::parse(line), store));
    return out;
}

}  // namespace kgconv
