#pragma once

#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <nlohmann/json.hpp>

#include "kgconv/conversation_assembler.h"
#include "kgconv/gateway.h"

namespace kgconv {

/// One bare value, or "[a, b, c]" for several.
std::string render_answer_list(std::span<const std::string> values);

struct GoldTurn {
    std::string question;
    std::vector<std::string> answers;
};

/// Replays the gold history as user/assistant pairs before the question.
ChatRequest build_answer_request(std::span<const GoldTurn> history, std::string_view question,
                                 std::string model_profile = {});

enum class AnswerKind { single, list, na };

struct AnswerRecord {
    std::size_t turn = 0;
    std::string raw;
    AnswerKind kind = AnswerKind::single;
    std::vector<std::string> values;
    bool nonconforming = false;  // no "Answer:" prefix

    bool is_na() const { return kind == AnswerKind::na; }
    /// "NA", the bare value, or a bracketed list.
    std::string rendered() const;
};

/// Reads the last "Answer:" line. NA only for a line that is exactly
/// "Answer: NA". Without the prefix the whole text is one answer, flagged
/// nonconforming. Throws ParseError on empty text.
AnswerRecord parse_answer(std::string_view text, std::size_t turn = 0);

struct JudgeTurn {
    std::string question;
    std::vector<std::string> gold_answers;
    AnswerRecord candidate;
};

/// All turns of a conversation in one user message. Throws ContractViolation
/// for an empty conversation.
ChatRequest build_judge_request(std::span<const JudgeTurn> turns, std::string model_profile = {});

class JudgeParseError : public ParseError {
public:
    using ParseError::ParseError;
};

struct JudgeRating {
    std::vector<int> ratings;
    std::vector<bool> na;  // filled from the parsed answers, never from the judge
};

/// The list after "Ratings:" (or the first list when the prefix is missing).
/// Throws JudgeParseError on a missing list, a non-binary element or a length
/// other than n.
JudgeRating parse_ratings(std::string_view text, std::size_t n);

struct ScoredConversation {
    std::string id;
    std::string config;
    std::vector<int> ratings;
    std::vector<bool> na;
};

struct EvalReport {
    double mean_turn = 0.0;
    double mean_conv = 0.0;
    double na_ratio = 0.0;
    std::size_t conversations = 0;
    std::size_t turns = 0;
    std::size_t na_turns = 0;
};

/// NA turns count as 0 in both means. Throws ContractViolation for no
/// conversations or a conversation without turns.
EvalReport compute_metrics(std::span<const ScoredConversation> scored);

struct ConversationEval {
    std::string id;
    ConversationConfig config;
    std::vector<AnswerRecord> answers;
    std::optional<ScoredConversation> scored;
    std::string failure;  // why it is unscored
};

struct EvalResult {
    EvalReport overall;
    std::map<std::string, EvalReport> per_config;
    std::vector<ConversationEval> conversations;
    std::vector<std::string> unscored;
};

struct EvalOptions {
    unsigned threads = 1;
    int judge_attempts = 2;  // first try plus one retry
    std::string answerer_profile;
    std::string judge_profile;
};

/// Turns within a conversation run in order; conversations run in parallel.
EvalResult evaluate_dataset(ChatGateway& answerer, ChatGateway& judge, std::span<const Conversation> dataset,
                            const EvalOptions& options = {});

inline constexpr const char* kEvalSchema = "kgconv.eval/1";

nlohmann::ordered_json to_json(const EvalReport& r);
nlohmann::ordered_json to_json(const EvalResult& r);
/// Per-setting rows: interaction, deixis, disfluency, typo, related, metrics.
std::string format_eval_table(const EvalResult& r);

}  // namespace kgconv
