#include "kgconv/typo_augment.h"

#include <algorithm>
#include <cctype>
#include <vector>

namespace kgconv {

using ojson = nlohmann::ordered_json;

const char* to_string(TypoAttack a) {
    switch (a) {
        case TypoAttack::random_char_deletion: return "random_char_deletion";
        case TypoAttack::neighboring_char_swap: return "neighboring_char_swap";
        case TypoAttack::qwerty_substitution: return "qwerty_substitution";
    }
    return "random_char_deletion";
}

TypoAttack typo_attack_from_string(const std::string& s) {
    for (auto a : kTypoAttacks)
        if (s == to_string(a)) return a;
    throw ParseError("unknown typo attack '" + s + "'", s);
}

namespace {

struct Adjacency {
    std::array<std::string, 26> neighbors;

    Adjacency() {
        static constexpr std::array<std::string_view, 3> rows = {"qwertyuiop", "asdfghjkl", "zxcvbnm"};
        auto at = [&](int r, int c) -> char {
            if (r < 0 || r >= 3 || c < 0 || c >= static_cast<int>(rows[r].size())) return 0;
            return rows[r][c];
        };
        // Each row sits half a key to the right of the one above it, so key
        // (r, c) touches (r-1, c), (r-1, c+1), (r+1, c-1) and (r+1, c).
        for (int r = 0; r < 3; ++r) {
            for (int c = 0; c < static_cast<int>(rows[r].size()); ++c) {
                std::string& n = neighbors[rows[r][c] - 'a'];
                for (char k : {at(r, c - 1), at(r, c + 1), at(r - 1, c), at(r - 1, c + 1), at(r + 1, c - 1),
                               at(r + 1, c)})
                    if (k) n.push_back(k);
                std::sort(n.begin(), n.end());
            }
        }
    }
};

const Adjacency& adjacency() {
    static const Adjacency table;
    return table;
}

bool is_letter(char c) { return std::isalpha(static_cast<unsigned char>(c)) != 0; }

}  // namespace

std::string_view qwerty_neighbors(char c) {
    if (c < 'a' || c > 'z') return {};
    return adjacency().neighbors[c - 'a'];
}

std::string random_char_deletion(std::string_view word, Rng& rng) {
    if (word.size() < kMinTypoWordLength) throw IneligibleError("word too short for deletion");
    std::string out(word);
    out.erase(rng.below(out.size()), 1);
    return out;
}

std::string neighboring_char_swap(std::string_view word, Rng& rng) {
    if (word.size() < kMinTypoWordLength) throw IneligibleError("word too short for swap");
    std::vector<std::size_t> pairs;
    for (std::size_t i = 0; i + 1 < word.size(); ++i)
        if (word[i] != word[i + 1]) pairs.push_back(i);
    if (pairs.empty()) throw IneligibleError("no unequal adjacent characters");
    std::string out(word);
    const auto i = pairs[rng.below(pairs.size())];
    std::swap(out[i], out[i + 1]);
    return out;
}

std::string qwerty_substitution(std::string_view word, Rng& rng) {
    if (word.size() < kMinTypoWordLength) throw IneligibleError("word too short for substitution");
    std::vector<std::size_t> positions;
    for (std::size_t i = 0; i < word.size(); ++i)
        if (is_letter(word[i]) && !qwerty_neighbors(static_cast<char>(std::tolower(word[i]))).empty())
            positions.push_back(i);
    if (positions.empty()) throw IneligibleError("no substitutable letter");
    std::string out(word);
    const auto i = positions[rng.below(positions.size())];
    const bool upper = std::isupper(static_cast<unsigned char>(out[i])) != 0;
    const auto options = qwerty_neighbors(static_cast<char>(std::tolower(out[i])));
    char repl = options[rng.below(options.size())];
    out[i] = upper ? static_cast<char>(std::toupper(repl)) : repl;
    return out;
}

bool attack_applies(TypoAttack attack, std::string_view word) {
    if (word.size() < kMinTypoWordLength) return false;
    switch (attack) {
        case TypoAttack::random_char_deletion: return true;
        case TypoAttack::neighboring_char_swap:
            for (std::size_t i = 0; i + 1 < word.size(); ++i)
                if (word[i] != word[i + 1]) return true;
            return false;
        case TypoAttack::qwerty_substitution:
            return std::any_of(word.begin(), word.end(), is_letter);
    }
    return false;
}

std::string apply_attack(TypoAttack attack, std::string_view word, Rng& rng) {
    switch (attack) {
        case TypoAttack::random_char_deletion: return random_char_deletion(word, rng);
        case TypoAttack::neighboring_char_swap: return neighboring_char_swap(word, rng);
        case TypoAttack::qwerty_substitution: return qwerty_substitution(word, rng);
    }
    throw IneligibleError("unknown attack");
}

ojson to_json(const TypoReport& r) {
    ojson j;
    if (r.unaugmentable) {
        j["unaugmentable"] = true;
        return j;
    }
    j["word_index"] = r.word_index;
    j["attack"] = to_string(r.attack);
    j["before"] = r.before;
    j["after"] = r.after;
    return j;
}

TypoReport typo_report_from_json(const nlohmann::json& j) {
    TypoReport r;
    if (j.value("unaugmentable", false)) {
        r.unaugmentable = true;
        return r;
    }
    r.word_index = j.at("word_index").get<std::size_t>();
    r.attack = typo_attack_from_string(j.at("attack").get<std::string>());
    r.before = j.at("before").get<std::string>();
    r.after = j.at("after").get<std::string>();
    return r;
}

namespace {

struct Token {
    std::size_t begin;  // offset in the question
    std::size_t size;
    std::size_t core_begin;  // offset of the alphanumeric core inside the token
    std::size_t core_size;
};

std::vector<Token> tokenize(std::string_view q) {
    std::vector<Token> out;
    std::size_t i = 0;
    while (i < q.size()) {
        while (i < q.size() && std::isspace(static_cast<unsigned char>(q[i]))) ++i;
        if (i >= q.size()) break;
        const std::size_t start = i;
        while (i < q.size() && !std::isspace(static_cast<unsigned char>(q[i]))) ++i;
        Token t{start, i - start, 0, 0};
        std::string_view tok = q.substr(start, i - start);
        std::size_t b = 0;
        std::size_t e = tok.size();
        auto alnum = [](char c) { return std::isalnum(static_cast<unsigned char>(c)) != 0; };
        while (b < e && !alnum(tok[b])) ++b;
        while (e > b && !alnum(tok[e - 1])) --e;
        t.core_begin = b;
        t.core_size = e - b;
        out.push_back(t);
    }
    return out;
}

bool eligible_token(std::string_view token, std::string_view core) {
    if (core.size() < kMinTypoWordLength) return false;
    if (token.find('[') != std::string_view::npos || token.find(']') != std::string_view::npos) return false;
    for (char c : token)
        if (static_cast<unsigned char>(c) >= 0x80) return false;
    const auto letters = std::count_if(core.begin(), core.end(), is_letter);
    return static_cast<std::size_t>(letters) * 2 > core.size();
}

}  // namespace

AugmentedTurn augment_turn(std::string_view question, Rng& rng) {
    const auto tokens = tokenize(question);

    // every (word, attack) pair starts out equally likely; a pair that does
    // not apply is removed and the draw repeated
    std::vector<std::pair<std::size_t, TypoAttack>> pairs;
    for (std::size_t w = 0; w < tokens.size(); ++w) {
        const auto token = question.substr(tokens[w].begin, tokens[w].size);
        const auto core = token.substr(tokens[w].core_begin, tokens[w].core_size);
        if (!eligible_token(token, core)) continue;
        for (auto a : kTypoAttacks) pairs.emplace_back(w, a);
    }

    while (!pairs.empty()) {
        const auto pick = rng.below(pairs.size());
        const auto [w, attack] = pairs[pick];
        const auto& tok = tokens[w];
        const auto token = question.substr(tok.begin, tok.size);
        const auto core = token.substr(tok.core_begin, tok.core_size);
        if (!attack_applies(attack, core)) {
            pairs.erase(pairs.begin() + static_cast<std::ptrdiff_t>(pick));
            continue;
        }
        const std::string altered_core = apply_attack(attack, core, rng);
        std::string altered_token(token.substr(0, tok.core_begin));
        altered_token += altered_core;
        altered_token += token.substr(tok.core_begin + tok.core_size);

        AugmentedTurn out;
        out.question = std::string(question.substr(0, tok.begin)) + altered_token +
                       std::string(question.substr(tok.begin + tok.size));
        out.report.word_index = w;
        out.report.attack = attack;
        out.report.before = std::string(token);
        out.report.after = altered_token;
        return out;
    }
    AugmentedTurn out;
    out.question = std::string(question);
    out.report.unaugmentable = true;
    return out;
}

}  // namespace kgconv
