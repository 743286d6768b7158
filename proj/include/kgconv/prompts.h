#pragma once

#include <string_view>

// Instruction texts sent to the models. The system texts are reproduced
// word for word; changing them changes every request hash and invalidates
// recorded transcripts and template caches.
namespace kgconv::prompts {

extern const std::string_view kSelectorSystem;

extern const std::string_view kVoiceSystem;
extern const std::string_view kVoiceUser;

extern const std::string_view kTextSystem;
extern const std::string_view kTextUser;

extern const std::string_view kQualifiedSystem;
extern const std::string_view kQualifiedUser;

/// Lead-in placed before the in-context examples of search-style prompts.
extern const std::string_view kSearchExamplesNote;

extern const std::string_view kAnswerSystem;
extern const std::string_view kJudgeSystem;

}  // namespace kgconv::prompts
