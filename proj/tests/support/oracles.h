#pragma once

#include <string>
#include <vector>

#include "kgconv/conversation_assembler.h"
#include "kgconv/eval_harness.h"
#include "kgconv/fact_extractor.h"
#include "kgconv/pipeline.h"

// Brute-force recomputations used as test oracles. None of them call the code
// they check.
namespace kgconv::testing {

/// "subject|predicate|kind|obj;obj|qualifier|qualifier value", values as raw JSON.
std::string describe(const Fact& f);

/// Group-by over the raw statements of one entity for one selection, sorted.
std::vector<std::string> oracle_facts(const EntityRecord& record, const SelectedPredicates& selection,
                                      bool preferred_only = false);

/// Plain folds over per-conversation rating vectors.
EvalReport oracle_metrics(const std::vector<ScoredConversation>& scored);

/// Counts recomputed from the dataset JSONL text itself.
DatasetReport oracle_report(const std::string& jsonl);

/// Store counts straight from the dump's JSON lines, sharing no code with ingest.
DatasetStats oracle_store_stats(const std::vector<nlohmann::json>& lines);

/// Levenshtein distance.
std::size_t edit_distance(const std::string& a, const std::string& b);
/// True when b is a with one pair of adjacent characters swapped.
bool adjacent_transposition(const std::string& a, const std::string& b);

}  // namespace kgconv::testing
