#pragma once

#include <array>
#include <string>
#include <string_view>

#include <nlohmann/json.hpp>

#include "kgconv/common.h"

namespace kgconv {

enum class TypoAttack { random_char_deletion, neighboring_char_swap, qwerty_substitution };

inline constexpr std::array<TypoAttack, 3> kTypoAttacks = {
    TypoAttack::random_char_deletion, TypoAttack::neighboring_char_swap, TypoAttack::qwerty_substitution};

const char* to_string(TypoAttack a);
TypoAttack typo_attack_from_string(const std::string& s);

class IneligibleError : public Error {
public:
    using Error::Error;
};

/// Keyboard neighbours of a lowercase letter on a standard QWERTY layout
/// (same row left/right, plus the touching keys of the rows above and below).
/// Empty for anything that is not a letter.
std::string_view qwerty_neighbors(char c);

inline constexpr std::size_t kMinTypoWordLength = 3;

// Each attack throws IneligibleError when the word does not qualify.
std::string random_char_deletion(std::string_view word, Rng& rng);
std::string neighboring_char_swap(std::string_view word, Rng& rng);
std::string qwerty_substitution(std::string_view word, Rng& rng);

bool attack_applies(TypoAttack attack, std::string_view word);
std::string apply_attack(TypoAttack attack, std::string_view word, Rng& rng);

struct TypoReport {
    bool unaugmentable = false;
    std::size_t word_index = 0;  // among whitespace-separated tokens
    TypoAttack attack = TypoAttack::random_char_deletion;
    std::string before;
    std::string after;
    bool operator==(const TypoReport&) const = default;
};

nlohmann::ordered_json to_json(const TypoReport& r);
TypoReport typo_report_from_json(const nlohmann::json& j);

struct AugmentedTurn {
    std::string question;
    TypoReport report;
};

/// Alters exactly one eligible word (length >= 3, mostly letters, ASCII,
/// not a leftover placeholder) with one randomly drawn attack. Leading and
/// trailing punctuation of the word is left alone. With no eligible word the
/// question comes back unchanged and the report is flagged unaugmentable.
AugmentedTurn augment_turn(std::string_view question, Rng& rng);

}  // namespace kgconv
