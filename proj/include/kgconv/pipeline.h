#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgconv/conversation_assembler.h"
#include "kgconv/eval_harness.h"
#include "kgconv/fact_extractor.h"
#include "kgconv/gateway.h"
#include "kgconv/kg_store.h"
#include "kgconv/mock_models.h"
#include "kgconv/predicate_catalog.h"
#include "kgconv/related_entity.h"
#include "kgconv/template_engine.h"

namespace kgconv {

inline constexpr int kPipelineSchemaVersion = 1;
inline constexpr const char* kManifestSchema = "kgconv.manifest/1";
inline constexpr const char* kStatsSchema = "kgconv.stats/1";

/// ingest, predicates, related, facts, templates, generate, evaluate, stats
const std::vector<std::string>& stage_names();

/// Gateway roles, also the transcript file stems.
inline constexpr const char* kRoles[] = {"selector", "template", "answerer", "judge"};

/// Endpoints "mock:select-all", "mock:template-writer", "mock:simulated-answerer"
/// and "mock:string-match-judge" resolve to the in-process models.
bool is_mock_endpoint(const std::string& endpoint);

struct PipelineConfig {
    int schema_version = kPipelineSchemaVersion;
    std::uint64_t seed = 0;
    std::string dump;
    std::string work_dir;
    std::optional<std::string> embeddings;  // ontology vectors when absent
    IngestFilter ingest;
    std::string cutoff;
    RelatedOptions related;
    ExtractOptions facts;
    TemplateOptions templates;
    int selector_parse_retries = 1;
    GroupingRules grouping = GroupingRules::defaults();
    std::vector<ConversationConfig> configs;  // seeds are filled from `seed` at run time
    std::size_t conversations_per_entity = 1;
    std::map<std::string, GatewayProfile> gateways;  // by role
    mock::AnswererProfile simulated_answerer;
    int judge_attempts = 2;
    unsigned threads = 4;

    /// Throws ContractViolation for a wrong schema version, a missing role,
    /// bad settings, or a referenced input file that does not exist.
    void validate() const;
};

/// Relative paths resolve against `base_dir`.
PipelineConfig pipeline_config_from_json(const nlohmann::json& j, const std::string& base_dir = ".");
/// Throws IoError or ParseError.
PipelineConfig load_pipeline_config(const std::string& path);
/// Profile from "mock:<kind>" or a JSON profile file.
GatewayProfile profile_argument(const std::string& arg, const std::string& role);

/// Where transcripts are written to or read from: "<dir>/<role>.jsonl".
struct GatewayIo {
    std::string record_dir;
    std::string replay_dir;
};

/// Gateways for the roles of one run, created on first use. Recording
/// truncates each transcript once per run.
class GatewaySet {
public:
    GatewaySet(std::map<std::string, GatewayProfile> profiles, GatewayIo io, mock::AnswererProfile answerer = {});
    ~GatewaySet();

    /// The answerer mock needs the dataset it answers about.
    ChatGateway& get(const std::string& role, std::span<const Conversation> dataset = {});
    /// Row counts seen by instrumented mock roles.
    std::map<std::string, std::vector<std::size_t>> request_sizes() const;

private:
    struct Slot;
    std::map<std::string, GatewayProfile> profiles_;
    GatewayIo io_;
    mock::AnswererProfile answerer_;
    std::map<std::string, std::unique_ptr<Slot>> slots_;
};

/// Selector pass over every type of the store, types in parallel.
std::vector<SelectedPredicates> select_all_types(const KgStore& store, ChatGateway& selector,
                                                 const SelectorOptions& options, unsigned threads);

struct TemplateRunSummary {
    std::size_t signatures = 0;
    std::size_t cached = 0;
    std::size_t generated = 0;
    std::size_t quarantined = 0;
};

/// Plans the signatures of `facts`, fills the cache, and writes the plan to
/// "<cache dir>/index.json". Signatures run in parallel.
TemplateRunSummary run_templates(std::span<const FactRecord> facts, std::span<const Interaction> interactions,
                                 ChatGateway& writer, TemplateCache& cache, const TemplateOptions& options,
                                 unsigned threads);
/// Rebuilds the index from "<cache dir>/index.json" and the cache entries.
TemplateIndex load_template_index(const std::string& cache_dir);

struct DatasetReport {
    std::size_t conversations = 0;
    std::size_t turns = 0;
    std::size_t entities = 0;           // distinct turn subjects
    std::size_t facts = 0;              // distinct fact ids
    std::size_t unique_types = 0;       // distinct subject types
    std::size_t unique_predicates = 0;  // distinct predicates
    /// Three variants per distinct (interaction, family) seen, plus the
    /// related follow-up budget when any related conversation is present.
    std::size_t questions_per_fact = 0;
    std::map<std::string, std::size_t> per_config;
    bool operator==(const DatasetReport&) const = default;
};

DatasetReport report_stats(std::span<const Conversation> dataset);
/// Throws IoError for an unreadable file.
DatasetReport report_stats_file(const std::string& path);
nlohmann::ordered_json to_json(const DatasetReport& r);
std::string format_report(const DatasetReport& r);
std::string format_store_stats(const DatasetStats& s);

struct RunOptions {
    bool dry_run = false;
    GatewayIo io;
    /// Stop after this stage (inclusive) when set.
    std::optional<std::string> until;
};

struct StageOutcome {
    std::string name;
    std::string status;  // ran | skipped | failed | blocked | would-run
    std::string error;
};

struct PipelineResult {
    int exit_code = 0;
    std::vector<StageOutcome> stages;
    std::optional<std::string> failed_stage;
    std::map<std::string, std::vector<std::size_t>> request_sizes;

    std::vector<std::string> with_status(const std::string& status) const;
};

/// Runs the stages in order inside config.work_dir, skipping a stage when its
/// input hash and recorded outputs are unchanged, and writes manifest.json.
/// A failing stage stops the run; the manifest records where.
PipelineResult run_pipeline(const PipelineConfig& config, const RunOptions& options = {});

}  // namespace kgconv
