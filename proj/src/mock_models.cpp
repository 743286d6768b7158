#include "kgconv/mock_models.h"

#include "kgconv/eval_harness.h"
#include "kgconv/pylist.h"
#include "kgconv/template_engine.h"

#include <algorithm>
#include <regex>
#include <sstream>

namespace kgconv::mock {

using ojson = nlohmann::ordered_json;

std::vector<std::size_t> Instrumented::request_sizes() const {
    std::lock_guard lock(mu_);
    return sizes_;
}

std::size_t Instrumented::max_request_size() const {
    std::lock_guard lock(mu_);
    return sizes_.empty() ? 0 : *std::max_element(sizes_.begin(), sizes_.end());
}

void Instrumented::record(std::size_t rows) {
    std::lock_guard lock(mu_);
    sizes_.push_back(rows);
}

std::string SelectAllSelector::chat(const ChatRequest& request) {
    const auto pos = request.user.find("Predicates: ");
    if (pos == std::string::npos) {
        record(0);
        return "[]";
    }
    const std::string list = request.user.substr(pos + 12);
    const auto parsed = find_python_list(list);
    record(parsed ? parsed->items.size() : 0);
    return list;
}

namespace {

struct Row {
    std::size_t turn;
    std::string subject;  // "[type]"
    std::string predicate;
    std::string qualifier;
    std::string object;
};

std::vector<Row> request_rows(const std::string& user, bool qualified) {
    std::vector<Row> rows;
    const auto start = user.rfind("# Triples\n");
    if (start == std::string::npos) return rows;
    static const std::regex line_re(R"(^Turn (\d+): \((\[[^\]]*\]), (.*), (\[[a-z]\])\)$)");
    std::stringstream lines(user.substr(start + 10));
    std::string line;
    while (std::getline(lines, line)) {
        std::smatch m;
        if (!std::regex_match(line, m, line_re)) continue;
        Row r{std::stoul(m[1]), m[2], m[3], "", m[4]};
        if (qualified) {
            const auto comma = r.predicate.rfind(", ");
            if (comma != std::string::npos) {
                r.qualifier = r.predicate.substr(comma + 2);
                r.predicate = r.predicate.substr(0, comma);
            }
        }
        rows.push_back(std::move(r));
    }
    return rows;
}

}  // namespace

std::string TemplateWriter::chat(const ChatRequest& request) {
    const bool voice = request.system.find("disfluencies") != std::string::npos;
    const bool qualified = request.user.find("relationship_predicate") != std::string::npos;
    const auto rows = request_rows(request.user, qualified);
    record(rows.size());

    ojson out = ojson::object();
    for (const auto& r : rows) {
        // another turn of the same predicate lends its placeholder as context
        std::string other;
        for (const auto& o : rows)
            if (qualified && o.turn != r.turn && o.predicate == r.predicate) other = o.object;
        std::string tail;
        if (qualified) tail = other.empty() ? " by " + r.qualifier : " with " + r.qualifier + " " + other;
        const std::string& s = r.subject;
        const std::string& p = r.predicate;

        ojson turn;
        if (voice) {
            turn["original"] = {"What is the " + p + " of " + s + tail + "?", "Can you tell me the " + p + " of " + s + tail + "?",
                                "Do you know the " + p + " of " + s + tail + "?"};
            turn["deixis"] = {"What is their " + p + tail + "?", "Can you tell me its " + p + tail + "?",
                              "Do you know that one's " + p + tail + "?"};
            turn["disfluencies"] = {"Um, what is the " + p + " of " + s + tail + "?",
                                    "Can you, uh, tell me the " + p + " of " + s + tail + "?",
                                    "Do you know the, hmm, the " + p + " of " + s + tail + "?"};
            turn["deixis_disfluencies"] = {"Um, what is their " + p + tail + "?", "Can you, uh, tell me its " + p + tail + "?",
                                           "Do you know, hmm, that one's " + p + tail + "?"};
        } else {
            turn["original"] = {s + " " + p + tail, "the " + p + " of " + s + tail, s + " " + p + " please" + tail};
            turn["deixis"] = {"their " + p + tail, "its " + p + tail, "that one " + p + tail};
        }
        turn["answer"] = r.object;
        out[std::to_string(r.turn)] = std::move(turn);
    }
    return out.dump();
}

SimulatedAnswerer::SimulatedAnswerer(std::span<const Conversation> dataset, AnswererProfile profile)
    : profile_(profile) {
    for (const auto& c : dataset)
        for (const auto& t : c.turns) gold_.emplace(t.question, t.objects);
}

std::string SimulatedAnswerer::chat(const ChatRequest& request) {
    const auto draw = static_cast<double>(derive_seed(profile_.seed, request_hash(request)) >> 11) * 0x1.0p-53;
    const auto it = gold_.find(request.user);
    if (it == gold_.end() || draw < profile_.p_na) return "Answer: NA";
    if (draw < profile_.p_na + profile_.p_correct) {
        const auto& objects = it->second;
        if (objects.size() == 1) return "Answer: " + objects.front();
        std::string list = "[";
        for (std::size_t i = 0; i < objects.size(); ++i) list += (i ? ", " : "") + python_quote(objects[i]);
        return "Answer: " + list + "]";
    }
    return "Answer: unknown entity";
}

namespace {

std::vector<std::string> split_answers(const std::string& rendered) {
    AnswerRecord r = parse_answer("Answer: " + rendered);
    std::vector<std::string> out;
    for (const auto& v : r.values) out.push_back(to_lower(trim(v)));
    if (r.kind == AnswerKind::list) out.push_back(to_lower(trim(rendered)));
    return out;
}

}  // namespace

std::string StringMatchJudge::chat(const ChatRequest& request) {
    std::vector<int> ratings;
    std::stringstream lines(request.user);
    std::string line;
    std::vector<std::string> gold;
    while (std::getline(lines, line)) {
        if (line.rfind("Gold Answers: ", 0) == 0) {
            gold = split_answers(line.substr(14));
            gold.push_back(to_lower(trim(line.substr(14))));
        } else if (line.rfind("Candidates: ", 0) == 0) {
            const std::string cand = line.substr(12);
            int rating = 0;
            if (trim(cand) != "NA") {
                for (const auto& c : split_answers(cand))
                    if (std::find(gold.begin(), gold.end(), c) != gold.end()) rating = 1;
            }
            ratings.push_back(rating);
        }
    }
    std::string out = "Ratings: [";
    for (std::size_t i = 0; i < ratings.size(); ++i) out += (i ? ", " : "") + std::to_string(ratings[i]);
    return out + "]";
}

}  // namespace kgconv::mock
