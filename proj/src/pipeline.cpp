#include "kgconv/pipeline.h"

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iomanip>
#include <set>
#include <sstream>

#include <spdlog/spdlog.h>

namespace kgconv {

namespace fs = std::filesystem;
using json = nlohmann::json;
using ojson = nlohmann::ordered_json;

const std::vector<std::string>& stage_names() {
    static const std::vector<std::string> names{"ingest",   "predicates", "related",  "facts",
                                                "templates", "generate",   "evaluate", "stats"};
    return names;
}

namespace {

const std::set<std::string> kMockKinds{"mock:select-all", "mock:template-writer", "mock:simulated-answerer",
                                       "mock:string-match-judge"};

std::string resolve(const std::string& base, const std::string& p) {
    const fs::path x(p);
    return (x.is_absolute() ? x : fs::path(base) / x).lexically_normal().string();
}

GatewayProfile parse_profile(json j, const std::string& role) {
    if (!j.contains("name")) j["name"] = role;
    if (is_mock_endpoint(j.value("endpoint", ""))) {
        // in-process models need no throttling
        if (!j.contains("requests_per_minute")) j["requests_per_minute"] = 1000000;
        if (!j.contains("max_concurrent")) j["max_concurrent"] = 64;
    }
    return profile_from_json(j);
}

}  // namespace

bool is_mock_endpoint(const std::string& endpoint) { return endpoint.rfind("mock:", 0) == 0; }

void PipelineConfig::validate() const {
    if (schema_version != kPipelineSchemaVersion)
        throw ContractViolation("config schema_version " + std::to_string(schema_version) + " is not supported (want " +
                                std::to_string(kPipelineSchemaVersion) + ")");
    if (dump.empty()) throw ContractViolation("config: paths.dump is required");
    if (!fs::is_regular_file(dump)) throw ContractViolation("config: dump not found: " + dump);
    if (embeddings && !fs::is_regular_file(*embeddings))
        throw ContractViolation("config: embeddings not found: " + *embeddings);
    if (work_dir.empty()) throw ContractViolation("config: paths.work_dir is required");
    if (fs::exists(work_dir) && !fs::is_directory(work_dir))
        throw ContractViolation("config: work_dir is not a directory: " + work_dir);
    for (const char* role : kRoles) {
        const auto it = gateways.find(role);
        if (it == gateways.end()) throw ContractViolation(std::string("config: no gateway profile for ") + role);
        const auto& p = it->second;
        p.validate();
        if (is_mock_endpoint(p.endpoint)) {
            if (!kMockKinds.count(p.endpoint)) throw ContractViolation("config: unknown mock endpoint " + p.endpoint);
        } else if (p.endpoint.empty()) {
            throw ContractViolation(std::string("config: gateway ") + role + " has no endpoint");
        }
    }
    if (configs.empty()) throw ContractViolation("config: no conversation settings");
    for (const auto& c : configs) c.validate();
    grouping.validate();
    if (conversations_per_entity == 0) throw ContractViolation("config: conversations_per_entity must be positive");
    if (threads == 0) throw ContractViolation("config: threads must be positive");
    if (templates.max_attempts <= 0) throw ContractViolation("config: templates.max_attempts must be positive");
    if (judge_attempts <= 0) throw ContractViolation("config: judge_attempts must be positive");
    if (selector_parse_retries < 0) throw ContractViolation("config: selector parse_retries must not be negative");
    const auto& a = simulated_answerer;
    if (a.p_correct < 0 || a.p_na < 0 || a.p_correct + a.p_na > 1)
        throw ContractViolation("config: simulated answerer probabilities must lie in [0, 1] and sum to at most 1");
}

PipelineConfig pipeline_config_from_json(const json& j, const std::string& base_dir) {
    PipelineConfig c;
    try {
        if (!j.is_object()) throw ParseError("pipeline config must be a JSON object", j.dump());
        if (!j.contains("schema_version")) throw ParseError("pipeline config has no schema_version", j.dump());
        c.schema_version = j.at("schema_version").get<int>();
        c.seed = j.value("seed", std::uint64_t{0});
        c.threads = j.value("threads", 4u);

        const auto& paths = j.at("paths");
        c.dump = resolve(base_dir, paths.at("dump").get<std::string>());
        c.work_dir = resolve(base_dir, paths.at("work_dir").get<std::string>());
        if (paths.contains("embeddings") && !paths["embeddings"].is_null())
            c.embeddings = resolve(base_dir, paths["embeddings"].get<std::string>());

        if (j.contains("ingest")) {
            const auto& in = j["ingest"];
            c.ingest.language = in.value("language", c.ingest.language);
            if (in.contains("type_allowlist") && !in["type_allowlist"].is_null()) {
                std::set<EntityId> types;
                for (const auto& t : in["type_allowlist"]) types.insert(EntityId(t.get<std::string>()));
                c.ingest.type_allowlist = std::move(types);
            }
            if (in.contains("entity_allowlist"))
                for (const auto& e : in["entity_allowlist"]) c.ingest.entity_allowlist.insert(EntityId(e.get<std::string>()));
            c.cutoff = in.value("cutoff", "");
        }
        if (j.contains("predicates")) c.selector_parse_retries = j["predicates"].value("parse_retries", 1);
        if (j.contains("related")) {
            const auto& r = j["related"];
            c.related.min_statements = r.value("min_statements", c.related.min_statements);
            c.related.person_type = EntityId(r.value("person_type", c.related.person_type.value));
            c.related.require_shared_type = r.value("require_shared_type", c.related.require_shared_type);
        }
        if (j.contains("facts")) c.facts.preferred_only = j["facts"].value("preferred_only", false);
        if (j.contains("templates")) {
            c.templates.max_attempts = j["templates"].value("max_attempts", 3);
            c.templates.parse.strict = j["templates"].value("strict", false);
        }

        std::size_t turns = 5;
        if (j.contains("generation")) {
            const auto& g = j["generation"];
            turns = g.value("turns", turns);
            c.conversations_per_entity = g.value("conversations_per_entity", c.conversations_per_entity);
            if (g.contains("grouping")) c.grouping = grouping_from_json(g["grouping"]);
            if (g.contains("configs") && g["configs"].is_array()) {
                for (const auto& cj : g["configs"]) {
                    json copy = cj;
                    if (!copy.contains("turns")) copy["turns"] = turns;
                    c.configs.push_back(config_from_json(copy));
                }
            }
        }
        if (c.configs.empty()) c.configs = all_configs(turns);

        if (j.contains("evaluation")) {
            const auto& e = j["evaluation"];
            c.judge_attempts = e.value("judge_attempts", c.judge_attempts);
            if (e.contains("simulated_answerer")) {
                c.simulated_answerer.p_correct = e["simulated_answerer"].value("p_correct", 0.7);
                c.simulated_answerer.p_na = e["simulated_answerer"].value("p_na", 0.1);
            }
        }
        if (j.contains("gateways"))
            for (const auto& [role, pj] : j["gateways"].items()) {
                if (pj.is_string()) {
                    const auto arg = pj.get<std::string>();
                    c.gateways[role] = profile_argument(is_mock_endpoint(arg) ? arg : resolve(base_dir, arg), role);
                } else {
                    c.gateways[role] = parse_profile(pj, role);
                }
            }
    } catch (const json::exception& ex) {
        throw ParseError(std::string("pipeline config: ") + ex.what(), j.dump());
    }
    return c;
}

PipelineConfig load_pipeline_config(const std::string& path) {
    const std::string text = read_file(path);
    json j;
    try {
        j = json::parse(text);
    } catch (const json::parse_error& ex) {
        throw ParseError("pipeline config " + path + ": " + ex.what(), text);
    }
    return pipeline_config_from_json(j, fs::path(path).parent_path().string());
}

GatewayProfile profile_argument(const std::string& arg, const std::string& role) {
    if (is_mock_endpoint(arg)) return parse_profile(json{{"endpoint", arg}}, role);
    const std::string text = read_file(arg);
    try {
        return parse_profile(json::parse(text), role);
    } catch (const json::parse_error& ex) {
        throw ParseError("gateway profile " + arg + ": " + ex.what(), text);
    }
}

// ---------------------------------------------------------------------------

namespace {

class InProcessTransport : public ChatTransport {
public:
    explicit InProcessTransport(std::shared_ptr<ChatGateway> model) : model_(std::move(model)) {}
    TransportReply send(const ChatRequest& request) override {
        try {
            return {200, model_->chat(request), ""};
        } catch (const std::exception& ex) {
            return {500, "", ex.what()};
        }
    }

private:
    std::shared_ptr<ChatGateway> model_;
};

}  // namespace

struct GatewaySet::Slot {
    std::unique_ptr<ChatGateway> gateway;
    std::shared_ptr<ChatGateway> model;
    mock::Instrumented* instrumented = nullptr;
};

GatewaySet::GatewaySet(std::map<std::string, GatewayProfile> profiles, GatewayIo io, mock::AnswererProfile answerer)
    : profiles_(std::move(profiles)), io_(std::move(io)), answerer_(answerer) {}

GatewaySet::~GatewaySet() = default;

ChatGateway& GatewaySet::get(const std::string& role, std::span<const Conversation> dataset) {
    if (const auto it = slots_.find(role); it != slots_.end()) return *it->second->gateway;
    const auto pit = profiles_.find(role);
    if (pit == profiles_.end()) throw ContractViolation("no gateway profile for role " + role);
    const GatewayProfile& profile = pit->second;
    auto slot = std::make_unique<Slot>();

    if (!io_.replay_dir.empty()) {
        const std::string path = (fs::path(io_.replay_dir) / (role + ".jsonl")).string();
        std::vector<TranscriptEntry> entries;
        if (fs::exists(path)) entries = Transcript::load(path);
        else spdlog::warn("no transcript for {} in {}", role, io_.replay_dir);
        slot->gateway = replay_gateway(entries);
    } else {
        std::shared_ptr<ChatTransport> transport;
        if (is_mock_endpoint(profile.endpoint)) {
            if (profile.endpoint == "mock:select-all") {
                auto m = std::make_shared<mock::SelectAllSelector>();
                slot->instrumented = m.get();
                slot->model = m;
            } else if (profile.endpoint == "mock:template-writer") {
                auto m = std::make_shared<mock::TemplateWriter>();
                slot->instrumented = m.get();
                slot->model = m;
            } else if (profile.endpoint == "mock:simulated-answerer") {
                slot->model = std::make_shared<mock::SimulatedAnswerer>(dataset, answerer_);
            } else if (profile.endpoint == "mock:string-match-judge") {
                slot->model = std::make_shared<mock::StringMatchJudge>();
            } else {
                throw ContractViolation("unknown mock endpoint " + profile.endpoint);
            }
            transport = std::make_shared<InProcessTransport>(slot->model);
        } else {
            transport = make_http_transport(profile);
        }
        std::shared_ptr<Transcript> transcript;
        if (!io_.record_dir.empty()) {
            fs::create_directories(io_.record_dir);
            const std::string path = (fs::path(io_.record_dir) / (role + ".jsonl")).string();
            std::ofstream(path, std::ios::trunc | std::ios::binary);
            transcript = std::make_shared<Transcript>(path);
        }
        slot->gateway = std::make_unique<Gateway>(profile, transport, transcript);
    }
    auto& ref = *slot->gateway;
    slots_.emplace(role, std::move(slot));
    return ref;
}

std::map<std::string, std::vector<std::size_t>> GatewaySet::request_sizes() const {
    std::map<std::string, std::vector<std::size_t>> out;
    for (const auto& [role, slot] : slots_)
        if (slot->instrumented) out[role] = slot->instrumented->request_sizes();
    return out;
}

// ---------------------------------------------------------------------------

std::vector<SelectedPredicates> select_all_types(const KgStore& store, ChatGateway& selector,
                                                 const SelectorOptions& options, unsigned threads) {
    const auto types = store.type_ids();
    std::vector<SelectedPredicates> out(types.size());
    parallel_for(types.size(), threads, [&](std::size_t i) {
        const auto table = extract_predicates(store, types[i]);
        out[i] = select_predicates(selector, types[i], type_label(store, types[i]), table, options);
    });
    return out;
}

namespace {

ojson row_key_json(const RowKey& k) {
    ojson j;
    j["type"] = k.type.value;
    j["interaction"] = to_string(k.interaction);
    j["predicate"] = k.predicate.value;
    if (k.qualifier) j["qualifier"] = k.qualifier->value;
    return j;
}

std::string index_path(const std::string& dir) { return (fs::path(dir) / "index.json").string(); }

}  // namespace

TemplateRunSummary run_templates(std::span<const FactRecord> facts, std::span<const Interaction> interactions,
                                 ChatGateway& writer, TemplateCache& cache, const TemplateOptions& options,
                                 unsigned threads) {
    const TemplatePlan plan = plan_signatures(facts, interactions);
    std::vector<TemplateOutcome> outcomes(plan.signatures.size());
    parallel_for(plan.signatures.size(), threads,
                 [&](std::size_t i) { outcomes[i] = generate_templates(writer, plan.signatures[i], cache, options); });

    TemplateRunSummary summary;
    summary.signatures = plan.signatures.size();
    ojson index;
    index["schema"] = "kgconv.templates/1";
    index["signatures"] = ojson::array();
    for (std::size_t i = 0; i < plan.signatures.size(); ++i) {
        const auto& o = outcomes[i];
        if (o.cached) ++summary.cached;
        if (o.set && !o.cached) ++summary.generated;
        if (!o.set) ++summary.quarantined;
        ojson s;
        s["key"] = signature_key(plan.signatures[i]);
        s["status"] = o.set ? "ok" : "quarantined";
        s["signature"] = to_json(plan.signatures[i]);
        index["signatures"].push_back(std::move(s));
    }
    index["slots"] = ojson::array();
    for (const auto& [key, slot] : plan.slots) {
        ojson s = row_key_json(key);
        s["signature"] = slot.first;
        s["turn"] = slot.second;
        index["slots"].push_back(std::move(s));
    }
    write_file(index_path(cache.dir()), index.dump(2) + "\n");
    return summary;
}

TemplateIndex load_template_index(const std::string& cache_dir) {
    const std::string path = index_path(cache_dir);
    const std::string text = read_file(path);
    TemplatePlan plan;
    try {
        const json j = json::parse(text);
        for (const auto& s : j.at("signatures")) plan.signatures.push_back(signature_from_json(s.at("signature")));
        for (const auto& s : j.at("slots")) {
            RowKey k;
            k.type = EntityId(s.at("type").get<std::string>());
            k.interaction = interaction_from_string(s.at("interaction").get<std::string>());
            k.predicate = PropertyId(s.at("predicate").get<std::string>());
            if (s.contains("qualifier")) k.qualifier = PropertyId(s["qualifier"].get<std::string>());
            const auto sig = s.at("signature").get<std::size_t>();
            if (sig >= plan.signatures.size()) throw ParseError(path + ": slot names a missing signature", text);
            plan.slots[k] = {sig, s.at("turn").get<std::size_t>()};
        }
    } catch (const json::exception& ex) {
        throw ParseError(path + ": " + ex.what(), text);
    }
    return build_template_index(plan, TemplateCache(cache_dir));
}

// ---------------------------------------------------------------------------

DatasetReport report_stats(std::span<const Conversation> dataset) {
    DatasetReport r;
    std::set<std::string> entities, facts, types, predicates, families;
    bool any_related = false;
    for (const auto& c : dataset) {
        ++r.conversations;
        ++r.per_config[c.config.name()];
        any_related = any_related || c.config.related;
        for (const auto& t : c.turns) {
            ++r.turns;
            entities.insert(t.subject.value);
            facts.insert(t.fact_id);
            types.insert(t.subject_type.value);
            predicates.insert(t.predicate.value);
            families.insert(std::string(to_string(c.config.interaction)) + "/" + t.family);
        }
    }
    r.entities = entities.size();
    r.facts = facts.size();
    r.unique_types = types.size();
    r.unique_predicates = predicates.size();
    r.questions_per_fact = families.size() * kVariantsPerFamily + (any_related ? RelatedFollowUpBudget{}.total() : 0);
    return r;
}

DatasetReport report_stats_file(const std::string& path) {
    const auto dataset = read_dataset_file(path);
    return report_stats(dataset);
}

ojson to_json(const DatasetReport& r) {
    ojson j;
    j["conversations"] = r.conversations;
    j["turns"] = r.turns;
    j["entities"] = r.entities;
    j["facts"] = r.facts;
    j["unique_types"] = r.unique_types;
    j["unique_predicates"] = r.unique_predicates;
    j["questions_per_fact"] = r.questions_per_fact;
    j["per_config"] = ojson::object();
    for (const auto& [name, n] : r.per_config) j["per_config"][name] = n;
    return j;
}

namespace {

void table_row(std::ostringstream& out, const std::string& label, std::size_t value) {
    out << std::left << std::setw(34) << label << std::right << std::setw(8) << value << "\n";
}

}  // namespace

std::string format_report(const DatasetReport& r) {
    std::ostringstream out;
    table_row(out, "entities", r.entities);
    table_row(out, "facts", r.facts);
    table_row(out, "unique types", r.unique_types);
    table_row(out, "unique predicates", r.unique_predicates);
    table_row(out, "questions per fact", r.questions_per_fact);
    table_row(out, "conversations", r.conversations);
    table_row(out, "turns", r.turns);
    if (!r.per_config.empty()) {
        out << "\n" << std::left << std::setw(34) << "config" << std::right << std::setw(8) << "convs" << "\n";
        for (const auto& [name, n] : r.per_config) table_row(out, name, n);
    }
    return out.str();
}

std::string format_store_stats(const DatasetStats& s) {
    std::ostringstream out;
    table_row(out, "entities", s.entity_count);
    table_row(out, "facts", s.fact_count);
    table_row(out, "unique types", s.unique_type_count);
    table_row(out, "unique predicates", s.unique_predicate_count);
    return out.str();
}

// ---------------------------------------------------------------------------

std::vector<std::string> PipelineResult::with_status(const std::string& status) const {
    std::vector<std::string> out;
    for (const auto& s : stages)
        if (s.status == status) out.push_back(s.name);
    return out;
}

namespace {

struct StageRecord {
    std::string status = "not_run";  // ok | failed | not_run
    std::string input_hash;
    std::map<std::string, std::string> outputs;  // relative path → sha256
    std::string error;
};

using Manifest = std::map<std::string, StageRecord>;

Manifest load_manifest(const std::string& path) {
    Manifest m;
    if (!fs::exists(path)) return m;
    try {
        const json j = json::parse(read_file(path));
        for (const auto& s : j.at("stages")) {
            StageRecord r;
            r.status = s.at("status").get<std::string>();
            r.input_hash = s.value("input_hash", "");
            if (s.contains("outputs"))
                for (const auto& [k, v] : s["outputs"].items()) r.outputs[k] = v.get<std::string>();
            r.error = s.value("error", "");
            m[s.at("name").get<std::string>()] = std::move(r);
        }
    } catch (const std::exception& ex) {
        spdlog::warn("ignoring unreadable manifest {}: {}", path, ex.what());
        m.clear();
    }
    return m;
}

void write_manifest(const std::string& path, const Manifest& m, const std::optional<std::string>& failed) {
    ojson j;
    j["schema"] = kManifestSchema;
    j["stages"] = ojson::array();
    ojson artifacts = ojson::object();
    for (const auto& name : stage_names()) {
        const auto it = m.find(name);
        const StageRecord r = it == m.end() ? StageRecord{} : it->second;
        ojson s;
        s["name"] = name;
        s["status"] = r.status;
        if (!r.input_hash.empty()) s["input_hash"] = r.input_hash;
        s["outputs"] = ojson::object();
        for (const auto& [k, v] : r.outputs) s["outputs"][k] = v;
        if (!r.error.empty()) s["error"] = r.error;
        j["stages"].push_back(std::move(s));
        if (r.status == "ok")
            for (const auto& [k, v] : r.outputs) artifacts[k] = v;
    }
    j["artifacts"] = std::move(artifacts);
    if (failed) {
        j["failure"] = {{"stage", *failed}, {"error", m.at(*failed).error}};
    } else {
        j["failure"] = nullptr;
    }
    write_file(path, j.dump(2) + "\n");
}

// Profile fields that shape model output; endpoints and credentials stay out of
// the stage hashes so recorded and replayed runs agree.
ojson profile_fingerprint(const GatewayProfile& p) {
    ojson j;
    j["model"] = p.model;
    j["temperature"] = p.temperature;
    j["kind"] = is_mock_endpoint(p.endpoint) ? p.endpoint : "http";
    return j;
}

ojson filter_json(const IngestFilter& f) {
    ojson j;
    j["language"] = f.language;
    if (f.type_allowlist) {
        j["type_allowlist"] = ojson::array();
        for (const auto& t : *f.type_allowlist) j["type_allowlist"].push_back(t.value);
    }
    j["entity_allowlist"] = ojson::array();
    for (const auto& e : f.entity_allowlist) j["entity_allowlist"].push_back(e.value);
    return j;
}

struct StageDef {
    std::string name;
    std::vector<std::string> deps;
    ojson params;
    std::function<std::vector<std::string>()> run;  // returns produced paths relative to work_dir
};

class Runner {
public:
    Runner(const PipelineConfig& config, const RunOptions& options)
        : cfg_(config),
          opts_(options),
          work_(config.work_dir),
          gateways_(config.gateways, options.io, answerer_profile(config)) {}

    PipelineResult run();

private:
    static mock::AnswererProfile answerer_profile(const PipelineConfig& c) {
        auto p = c.simulated_answerer;
        p.seed = derive_seed(c.seed, "evaluate");
        return p;
    }

    std::string path(const std::string& rel) const { return (fs::path(work_) / rel).string(); }

    std::vector<StageDef> stages();
    std::string input_hash(const StageDef& s) const;
    bool up_to_date(const StageDef& s, const std::string& hash) const;

    const KgStore& store() {
        if (!store_) store_ = load_store(path("store"));
        return *store_;
    }

    std::vector<Interaction> interactions() const {
        std::vector<Interaction> out;
        for (const auto& c : cfg_.configs)
            if (std::find(out.begin(), out.end(), c.interaction) == out.end()) out.push_back(c.interaction);
        std::sort(out.begin(), out.end());
        return out;
    }

    const PipelineConfig& cfg_;
    const RunOptions& opts_;
    std::string work_;
    GatewaySet gateways_;
    Manifest manifest_;
    std::optional<KgStore> store_;
};

std::string Runner::input_hash(const StageDef& s) const {
    ojson j;
    j["stage"] = s.name;
    j["params"] = s.params;
    j["inputs"] = ojson::object();
    for (const auto& d : s.deps) {
        const auto it = manifest_.find(d);
        if (it == manifest_.end()) continue;
        for (const auto& [k, v] : it->second.outputs) j["inputs"][k] = v;
    }
    return sha256_hex(j.dump());
}

bool Runner::up_to_date(const StageDef& s, const std::string& hash) const {
    const auto it = manifest_.find(s.name);
    if (it == manifest_.end() || it->second.status != "ok" || it->second.input_hash != hash) return false;
    for (const auto& [rel, digest] : it->second.outputs) {
        const std::string p = path(rel);
        if (!fs::is_regular_file(p) || sha256_file(p) != digest) return false;
    }
    return !it->second.outputs.empty();
}

std::vector<StageDef> Runner::stages() {
    std::vector<StageDef> out;
    const unsigned threads = cfg_.threads;

    {
        ojson p;
        p["dump"] = sha256_file(cfg_.dump);
        p["filter"] = filter_json(cfg_.ingest);
        p["cutoff"] = cfg_.cutoff;
        out.push_back({"ingest", {}, p, [this] {
                           Provenance prov{fs::path(cfg_.dump).filename().string(), cfg_.cutoff};
                           auto result = ingest_dump_file(cfg_.dump, cfg_.ingest, prov);
                           fs::remove_all(path("store"));
                           save_store(result.store, path("store"));
                           write_file(path("rejects.tsv"), reject_log_tsv(result.rejects));
                           spdlog::info("ingest: {} entities kept, {} rejected lines, {} dropped",
                                        result.store.size(), result.rejects.size(), result.dropped);
                           store_ = std::move(result.store);
                           return std::vector<std::string>{"store/entities.jsonl", "store/labels.jsonl",
                                                           "store/properties.jsonl", "store/provenance.json",
                                                           "rejects.tsv"};
                       }});
    }
    {
        ojson p;
        p["profile"] = profile_fingerprint(cfg_.gateways.at("selector"));
        p["parse_retries"] = cfg_.selector_parse_retries;
        out.push_back({"predicates", {"ingest"}, p, [this, threads] {
                           SelectorOptions o;
                           o.model_profile = cfg_.gateways.at("selector").model;
                           o.parse_retries = cfg_.selector_parse_retries;
                           const auto all = select_all_types(store(), gateways_.get("selector"), o, threads);
                           write_selected_file(path("predicates.jsonl"), all);
                           return std::vector<std::string>{"predicates.jsonl"};
                       }});
    }
    {
        ojson p;
        p["embeddings"] = cfg_.embeddings ? sha256_file(*cfg_.embeddings) : std::string("ontology");
        p["min_statements"] = cfg_.related.min_statements;
        p["person_type"] = cfg_.related.person_type.value;
        p["require_shared_type"] = cfg_.related.require_shared_type;
        out.push_back({"related", {"ingest"}, p, [this] {
                           const EmbeddingIndex index =
                               cfg_.embeddings ? load_embeddings_file(*cfg_.embeddings) : ontology_embeddings(store());
                           const auto pairs = find_related(store(), index, cfg_.related);
                           write_file(path("related.jsonl"), related_to_jsonl(pairs));
                           return std::vector<std::string>{"related.jsonl"};
                       }});
    }
    {
        ojson p;
        p["preferred_only"] = cfg_.facts.preferred_only;
        out.push_back({"facts", {"ingest", "predicates"}, p, [this] {
                           std::map<EntityId, SelectedPredicates> selections;
                           for (auto& s : read_selected_file(path("predicates.jsonl"), &store()))
                               selections.emplace(s.type, std::move(s));
                           const auto facts = extract_store_facts(store(), selections, cfg_.facts);
                           write_facts_file(path("facts.jsonl"), facts);
                           return std::vector<std::string>{"facts.jsonl"};
                       }});
    }
    {
        ojson p;
        p["profile"] = profile_fingerprint(cfg_.gateways.at("template"));
        p["max_attempts"] = cfg_.templates.max_attempts;
        p["strict"] = cfg_.templates.parse.strict;
        p["interactions"] = ojson::array();
        for (auto i : interactions()) p["interactions"].push_back(to_string(i));
        out.push_back({"templates", {"facts"}, p, [this, threads] {
                           const auto facts = read_facts_file(path("facts.jsonl"));
                           TemplateCache cache(path("templates"));
                           auto options = cfg_.templates;
                           options.model_profile = cfg_.gateways.at("template").model;
                           const auto modes = interactions();
                           const auto summary =
                               run_templates(facts, modes, gateways_.get("template"), cache, options, threads);
                           spdlog::info("templates: {} signatures, {} cached, {} generated, {} quarantined",
                                        summary.signatures, summary.cached, summary.generated, summary.quarantined);
                           std::vector<std::string> produced{"templates/index.json"};
                           const json index = json::parse(read_file(path("templates/index.json")));
                           for (const auto& s : index.at("signatures")) {
                               const std::string key = s.at("key").get<std::string>();
                               for (const std::string& rel : {"templates/" + key + ".json",
                                                             "templates/quarantine/" + key + ".json"})
                                   if (fs::exists(path(rel))) produced.push_back(rel);
                           }
                           return produced;
                       }});
    }
    {
        ojson p;
        p["seed"] = cfg_.seed;
        p["conversations_per_entity"] = cfg_.conversations_per_entity;
        p["grouping"] = to_json(cfg_.grouping);
        p["configs"] = ojson::array();
        for (const auto& c : cfg_.configs) p["configs"].push_back(to_json(c));
        out.push_back({"generate", {"ingest", "related", "facts", "templates"}, p, [this, threads] {
                           const auto facts = read_facts_file(path("facts.jsonl"));
                           const auto related = read_related_file(path("related.jsonl"));
                           const auto index = load_template_index(path("templates"));
                           GenerateOptions o;
                           o.configs = cfg_.configs;
                           for (auto& c : o.configs) c.seed = derive_seed(cfg_.seed, "generate");
                           o.rules = cfg_.grouping;
                           o.conversations_per_entity = cfg_.conversations_per_entity;
                           o.threads = threads;
                           const auto result = generate_dataset(store(), facts, related, index, o);
                           for (const auto& s : result.skipped) spdlog::debug("skipped {}", s);
                           spdlog::info("generate: {} conversations, {} skipped", result.conversations.size(),
                                        result.skipped.size());
                           write_file(path("dataset.jsonl"), dataset_to_jsonl(result.conversations));
                           return std::vector<std::string>{"dataset.jsonl"};
                       }});
    }
    {
        ojson p;
        p["answerer"] = profile_fingerprint(cfg_.gateways.at("answerer"));
        p["judge"] = profile_fingerprint(cfg_.gateways.at("judge"));
        p["judge_attempts"] = cfg_.judge_attempts;
        p["p_correct"] = cfg_.simulated_answerer.p_correct;
        p["p_na"] = cfg_.simulated_answerer.p_na;
        p["seed"] = cfg_.seed;
        out.push_back({"evaluate", {"generate"}, p, [this, threads] {
                           const auto dataset = read_dataset_file(path("dataset.jsonl"));
                           EvalOptions o;
                           o.threads = threads;
                           o.judge_attempts = cfg_.judge_attempts;
                           o.answerer_profile = cfg_.gateways.at("answerer").model;
                           o.judge_profile = cfg_.gateways.at("judge").model;
                           auto& answerer = gateways_.get("answerer", dataset);
                           auto& judge = gateways_.get("judge");
                           const auto result = evaluate_dataset(answerer, judge, dataset, o);
                           write_file(path("report.json"), to_json(result).dump(2) + "\n");
                           write_file(path("report.txt"), format_eval_table(result));
                           return std::vector<std::string>{"report.json", "report.txt"};
                       }});
    }
    out.push_back({"stats", {"ingest", "generate"}, ojson::object(), [this] {
                       const auto dataset = read_dataset_file(path("dataset.jsonl"));
                       const auto report = report_stats(dataset);
                       const auto store_stats = stats(store());
                       ojson j;
                       j["schema"] = kStatsSchema;
                       j["store"] = {{"entities", store_stats.entity_count},
                                     {"facts", store_stats.fact_count},
                                     {"unique_types", store_stats.unique_type_count},
                                     {"unique_predicates", store_stats.unique_predicate_count}};
                       j["dataset"] = to_json(report);
                       write_file(path("stats.json"), j.dump(2) + "\n");
                       write_file(path("stats.txt"),
                                  "store\n" + format_store_stats(store_stats) + "\ndataset\n" + format_report(report));
                       return std::vector<std::string>{"stats.json", "stats.txt"};
                   }});
    return out;
}

PipelineResult Runner::run() {
    PipelineResult result;
    const std::string manifest_path = path("manifest.json");
    manifest_ = load_manifest(manifest_path);
    if (!opts_.dry_run) fs::create_directories(work_);

    auto defs = stages();
    bool halted = false;
    bool pending_upstream = false;  // dry run: something upstream would run
    bool past_until = false;
    for (const auto& def : defs) {
        if (past_until) break;
        if (opts_.until && *opts_.until == def.name) past_until = true;
        if (halted) {
            result.stages.push_back({def.name, "blocked", ""});
            manifest_[def.name] = StageRecord{};
            continue;
        }
        const std::string hash = input_hash(def);
        if (opts_.dry_run) {
            const bool fresh = !pending_upstream && up_to_date(def, hash);
            if (!fresh) pending_upstream = true;
            result.stages.push_back({def.name, fresh ? "skipped" : "would-run", ""});
            continue;
        }
        if (up_to_date(def, hash)) {
            spdlog::info("stage {}: up to date", def.name);
            result.stages.push_back({def.name, "skipped", ""});
            continue;
        }
        spdlog::info("stage {}: running", def.name);
        StageRecord rec;
        rec.input_hash = hash;
        try {
            for (const auto& rel : def.run()) rec.outputs[rel] = sha256_file(path(rel));
            rec.status = "ok";
            result.stages.push_back({def.name, "ran", ""});
        } catch (const std::exception& ex) {
            rec.status = "failed";
            rec.error = ex.what();
            rec.outputs.clear();
            spdlog::error("stage {} failed: {}", def.name, ex.what());
            result.stages.push_back({def.name, "failed", ex.what()});
            result.failed_stage = def.name;
            halted = true;
        }
        manifest_[def.name] = std::move(rec);
    }
    result.request_sizes = gateways_.request_sizes();
    if (!opts_.dry_run) write_manifest(manifest_path, manifest_, result.failed_stage);
    result.exit_code = result.failed_stage ? 1 : 0;
    return result;
}

}  // namespace

PipelineResult run_pipeline(const PipelineConfig& config, const RunOptions& options) {
    config.validate();
    if (options.until &&
        std::find(stage_names().begin(), stage_names().end(), *options.until) == stage_names().end())
        throw ContractViolation("unknown stage " + *options.until);
    Runner runner(config, options);
    return runner.run();
}

}  // namespace kgconv
