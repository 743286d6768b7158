#include "kgconv/eval_harness.h"

#include "kgconv/prompts.h"
#include "kgconv/pylist.h"

#include <spdlog/spdlog.h>

#include <cstdio>
#include <sstream>

namespace kgconv {

using ojson = nlohmann::ordered_json;

std::string render_answer_list(std::span<const std::string> values) {
    if (values.size() == 1) return values.front();
    std::string out = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += values[i];
    }
    return out + "]";
}

ChatRequest build_answer_request(std::span<const GoldTurn> history, std::string_view question,
                                 std::string model_profile) {
    ChatRequest r;
    r.system = std::string(prompts::kAnswerSystem);
    for (const auto& g : history) r.history.push_back({g.question, render_answer_list(g.answers)});
    r.user = std::string(question);
    r.model_profile = std::move(model_profile);
    return r;
}

std::string AnswerRecord::rendered() const {
    if (kind == AnswerKind::na) return "NA";
    if (kind == AnswerKind::single) return values.empty() ? std::string() : values.front();
    std::string out = "[";
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += values[i];
    }
    return out + "]";
}

namespace {

std::string unquote(std::string s) {
    if (s.size() >= 2 && (s.front() == '\'' || s.front() == '"') && s.back() == s.front())
        return s.substr(1, s.size() - 2);
    return s;
}

// Elements of a bracketed payload. Falls back to a plain comma split when the
// list is not valid python (bare names with apostrophes, say).
std::optional<std::vector<std::string>> list_payload(const std::string& payload) {
    if (payload.size() < 2 || payload.front() != '[' || payload.back() != ']') return std::nullopt;
    if (auto list = parse_python_list_at(payload, 0); list && list->end == payload.size()) {
        std::vector<std::string> out;
        for (const auto& item : list->items) {
            std::string joined;
            for (std::size_t i = 0; i < item.parts.size(); ++i) joined += (i ? ", " : "") + item.parts[i];
            out.push_back(std::move(joined));
        }
        return out;
    }
    std::vector<std::string> out;
    std::stringstream inner(payload.substr(1, payload.size() - 2));
    std::string part;
    while (std::getline(inner, part, ',')) {
        auto t = unquote(trim(part));
        if (!t.empty()) out.push_back(std::move(t));
    }
    return out;
}

}  // namespace

AnswerRecord parse_answer(std::string_view text, std::size_t turn) {
    AnswerRecord rec;
    rec.turn = turn;
    rec.raw = std::string(text);
    const std::string whole = trim(text);
    if (whole.empty()) throw ParseError("empty answer", rec.raw);

    std::optional<std::string> line;
    std::string payload;
    std::stringstream lines(whole);
    std::string l;
    while (std::getline(lines, l)) {
        const std::string t = trim(l);
        if (starts_with_ci(t, "answer:")) {
            line = t;
            payload = trim(std::string_view(t).substr(7));
        }
    }
    if (!line) {
        rec.nonconforming = true;
        payload = whole;
    }
    if (line && *line == "Answer: NA") {
        rec.kind = AnswerKind::na;
        return rec;
    }
    if (auto items = list_payload(payload)) {
        rec.kind = AnswerKind::list;
        rec.values = std::move(*items);
        return rec;
    }
    rec.kind = AnswerKind::single;
    rec.values = {unquote(payload)};
    return rec;
}

ChatRequest build_judge_request(std::span<const JudgeTurn> turns, std::string model_profile) {
    if (turns.empty()) throw ContractViolation("judge request needs at least one turn");
    ChatRequest r;
    r.system = std::string(prompts::kJudgeSystem);
    for (std::size_t i = 0; i < turns.size(); ++i) {
        if (i) r.user += "\n\n";
        r.user += "Question: " + turns[i].question + "\n";
        r.user += "Gold Answers: " + render_answer_list(turns[i].gold_answers) + "\n";
        r.user += "Candidates: " + turns[i].candidate.rendered();
    }
    r.model_profile = std::move(model_profile);
    return r;
}

JudgeRating parse_ratings(std::string_view text, std::size_t n) {
    if (n == 0) throw ContractViolation("ratings for zero turns requested");
    const std::string raw(text);
    std::optional<PyList> list;
    const auto prefix = to_lower(raw).rfind("ratings:");
    if (prefix != std::string::npos) list = find_python_list(raw, prefix);
    if (!list) list = find_python_list(raw);
    if (!list) throw JudgeParseError("no ratings list in judge output", raw);

    JudgeRating r;
    for (const auto& item : list->items) {
        if (item.tuple || item.parts.size() != 1) throw JudgeParseError("rating element is a tuple", raw);
        const std::string& v = item.parts.front();
        if (v == "1" || v == "1.0")
            r.ratings.push_back(1);
        else if (v == "0" || v == "0.0")
            r.ratings.push_back(0);
        else
            throw JudgeParseError("rating element '" + v + "' is not 0 or 1", raw);
    }
    if (r.ratings.size() != n)
        throw JudgeParseError("judge returned " + std::to_string(r.ratings.size()) + " ratings for " +
                                  std::to_string(n) + " turns",
                              raw);
    r.na.assign(n, false);
    return r;
}

EvalReport compute_metrics(std::span<const ScoredConversation> scored) {
    if (scored.empty()) throw ContractViolation("no scored conversations");
    EvalReport rep;
    double conv_sum = 0.0;
    std::size_t rated = 0;
    for (const auto& c : scored) {
        if (c.ratings.empty()) throw ContractViolation("conversation " + c.id + " has no turns");
        std::size_t ones = 0;
        for (std::size_t i = 0; i < c.ratings.size(); ++i) {
            const bool na = i < c.na.size() && c.na[i];
            if (na) ++rep.na_turns;
            if (!na && c.ratings[i] == 1) ++ones;
        }
        rated += ones;
        rep.turns += c.ratings.size();
        conv_sum += static_cast<double>(ones) / static_cast<double>(c.ratings.size());
    }
    rep.conversations = scored.size();
    rep.mean_turn = static_cast<double>(rated) / static_cast<double>(rep.turns);
    rep.mean_conv = conv_sum / static_cast<double>(scored.size());
    rep.na_ratio = static_cast<double>(rep.na_turns) / static_cast<double>(rep.turns);
    return rep;
}

namespace {

ConversationEval evaluate_one(ChatGateway& answerer, ChatGateway& judge, const Conversation& c,
                              const EvalOptions& options) {
    ConversationEval out;
    out.id = c.id;
    out.config = c.config;
    std::vector<GoldTurn> history;
    std::vector<JudgeTurn> judged;
    for (const auto& t : c.turns) {
        const auto request = build_answer_request(history, t.question, options.answerer_profile);
        const std::string text = answerer.chat(request);
        AnswerRecord a;
        try {
            a = parse_answer(text, t.index);
        } catch (const ParseError&) {
            a.turn = t.index;
            a.raw = text;
            a.values = {""};
            a.nonconforming = true;
        }
        judged.push_back({t.question, t.gold_answers, a});
        out.answers.push_back(std::move(a));
        history.push_back({t.question, t.objects});
    }
    if (judged.empty()) {
        out.failure = "conversation has no turns";
        return out;
    }

    const auto request = build_judge_request(judged, options.judge_profile);
    for (int attempt = 0; attempt < std::max(1, options.judge_attempts); ++attempt) {
        try {
            auto rating = parse_ratings(judge.chat(request), judged.size());
            ScoredConversation s;
            s.id = c.id;
            s.config = c.config.name();
            s.ratings = std::move(rating.ratings);
            s.na.resize(judged.size());
            for (std::size_t i = 0; i < judged.size(); ++i) {
                s.na[i] = out.answers[i].is_na();
                if (s.na[i]) s.ratings[i] = 0;
            }
            out.scored = std::move(s);
            out.failure.clear();
            return out;
        } catch (const JudgeParseError& ex) {
            out.failure = ex.what();
        }
    }
    spdlog::warn("conversation {} left unscored: {}", c.id, out.failure);
    return out;
}

}  // namespace

EvalResult evaluate_dataset(ChatGateway& answerer, ChatGateway& judge, std::span<const Conversation> dataset,
                            const EvalOptions& options) {
    EvalResult result;
    result.conversations.resize(dataset.size());
    parallel_for(dataset.size(), options.threads,
                 [&](std::size_t i) { result.conversations[i] = evaluate_one(answerer, judge, dataset[i], options); });

    std::vector<ScoredConversation> all;
    std::map<std::string, std::vector<ScoredConversation>> by_config;
    for (const auto& ce : result.conversations) {
        if (!ce.scored) {
            result.unscored.push_back(ce.id);
            continue;
        }
        all.push_back(*ce.scored);
        by_config[ce.scored->config].push_back(*ce.scored);
    }
    if (!all.empty()) result.overall = compute_metrics(all);
    for (const auto& [name, convs] : by_config) result.per_config[name] = compute_metrics(convs);
    return result;
}

ojson to_json(const EvalReport& r) {
    ojson j;
    j["mean_turn"] = r.mean_turn;
    j["mean_conv"] = r.mean_conv;
    j["na_ratio"] = r.na_ratio;
    j["conversations"] = r.conversations;
    j["turns"] = r.turns;
    j["na_turns"] = r.na_turns;
    return j;
}

namespace {

const ConversationConfig* config_named(const EvalResult& r, const std::string& name) {
    for (const auto& c : r.conversations)
        if (c.config.name() == name) return &c.config;
    return nullptr;
}

const char* on_off(bool b) { return b ? "on" : "off"; }

}  // namespace

ojson to_json(const EvalResult& r) {
    ojson j;
    j["schema"] = kEvalSchema;
    j["overall"] = to_json(r.overall);
    j["per_config"] = ojson::array();
    for (const auto& [name, rep] : r.per_config) {
        ojson row;
        row["config"] = name;
        if (const auto* c = config_named(r, name)) {
            row["interaction"] = to_string(c->interaction);
            row["deixis"] = c->deixis;
            row["disfluency"] = c->disfluency;
            row["typo"] = c->typo;
            row["related"] = c->related;
        }
        const ojson metrics = to_json(rep);
        for (const auto& [k, v] : metrics.items()) row[k] = v;
        j["per_config"].push_back(std::move(row));
    }
    j["unscored"] = r.unscored;
    j["conversations"] = ojson::array();
    for (const auto& c : r.conversations) {
        ojson cj;
        cj["id"] = c.id;
        cj["config"] = c.config.name();
        ojson answers = ojson::array();
        for (const auto& a : c.answers) {
            ojson aj;
            aj["turn"] = a.turn;
            aj["raw"] = a.raw;
            aj["parsed"] = a.rendered();
            if (a.nonconforming) aj["nonconforming"] = true;
            answers.push_back(std::move(aj));
        }
        cj["answers"] = std::move(answers);
        if (c.scored) {
            cj["ratings"] = c.scored->ratings;
            cj["na"] = c.scored->na;
        } else {
            cj["failure"] = c.failure;
        }
        j["conversations"].push_back(std::move(cj));
    }
    return j;
}

std::string format_eval_table(const EvalResult& r) {
    std::string out;
    char buf[256];
    std::snprintf(buf, sizeof buf, "%-6s %-7s %-11s %-5s %-8s %10s %10s %9s %6s\n", "inter", "deixis", "disfluency",
                  "typo", "related", "mean_turn", "mean_conv", "na_ratio", "convs");
    out += buf;
    for (const auto& [name, rep] : r.per_config) {
        const auto* c = config_named(r, name);
        if (!c) continue;
        const bool voice = c->interaction == Interaction::voice;
        std::snprintf(buf, sizeof buf, "%-6s %-7s %-11s %-5s %-8s %10.4f %10.4f %9.4f %6zu\n", to_string(c->interaction),
                      on_off(c->deixis), voice ? on_off(c->disfluency) : "-", voice ? "-" : on_off(c->typo),
                      on_off(c->related), rep.mean_turn, rep.mean_conv, rep.na_ratio, rep.conversations);
        out += buf;
    }
    std::snprintf(buf, sizeof buf, "%-42s %10.4f %10.4f %9.4f %6zu\n", "all", r.overall.mean_turn, r.overall.mean_conv,
                  r.overall.na_ratio, r.overall.conversations);
    out += buf;
    if (!r.unscored.empty()) out += "unscored conversations: " + std::to_string(r.unscored.size()) + "\n";
    return out;
}

}  // namespace kgconv
