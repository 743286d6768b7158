#include "kgconv/prompts.h"

namespace kgconv::prompts {

const std::string_view kSelectorSystem =
    "You are a helpful assistant that can help select all predicates likely to be used in a Factoid "
    "Conversational QA dataset for a particular type of entity. You should not select something like "
    "id/index/phone number/Commons category (which does not lend well to Conversational QA), name (which is "
    "obvious from the question itself), and also things which have little or nothing to do with the particular "
    "type like goals scored for a type actor or supported sports team for a singer. Predicates whose "
    "corresponding objects have type video, audio, and image should also not be included.  Do not include first "
    "name and last name which would already be obvious from the user question. Things like marriage/partners "
    "should be included. You will be provided with a type and a table of tuples of the form (predicate_id, "
    "predicate_name). Always provide only an answer and in the format \"<pythonic list of useful predicate "
    "ids>\".";

const std::string_view kVoiceSystem =
    "You are an AI assistant tasked with generating a natural conversational question-answering session between "
    "two people, A and B, based on information from a knowledge graph, in the form of a list of triples.\n"
    "A will only ask questions, and they should be based on the subject type and predicate of each triple, while "
    "B will only answer with just the object and no extraneous information.\n"
    "To make the conversation more realistic, you should also include for A:\n"
    "- deixis (words that refer to people, places, or things in the conversation history like this, their, that, "
    "it, they, them)\n"
    "- disfluencies (pauses, repetitions, and other speech errors that occur naturally in conversation)\n"
    "- deixis_disfluencies (each question displays both deixis and disfluencies)\n"
    "You only return JSON of the following form with key being an <int representing the turn number> mapping "
    "to:\n"
    "\n"
    "- original: <list of three variants of standard single-turn questions not depending on conversation history "
    "answered by the answer field>\n"
    "- deixis: <deixis applied to original variants>\n"
    "- disfluencies: <disfluencies applied to original variants>\n"
    "- deixis_disfluencies: <disfluencies applied to deixis variants>\n"
    "- answer: <always the object field from the turn triple, representing B's answer to any of the questions>\n"
    "Ensure that the variants of the original have the subject variable (enclosed by []) as is and that the "
    "object is always the answer and is never part of the questions.\n"
    "Ensure there are exactly three variants of each type.\n"
    "All questions should mimic real world conversational questions.";

const std::string_view kVoiceUser =
    "You have been provided with K triples (subject, predicate, object) from the knowledge graph corresponding "
    "directly to exact turns.\n"
    "The subject and object, in this case, are templates and enclosed by [], and the subject template should be "
    "used as is for questions in the original field.\n"
    "For example, for a triple ([person], gender, [x]), a question in the original field should always use the "
    "literal \"[person]\" without any deixis.\n"
    "The answer field should always be the turn's object template.\n"
    "Your task is to use this information to generate a coherent conversational question-answering session "
    "between A and B following the aforementioned template.\n"
    "Remember their roles exactly and ensure the conversation length is equal to the number of turns.";

const std::string_view kTextSystem =
    "You are an AI assistant tasked with generating a natural conversational question-answering session between "
    "two people, A and B, based on information from a knowledge graph, in the form of a list of triples. A will "
    "only ask questions, and they should be based on the subject type and predicate of each triple, while B will "
    "only answer with just the object and no extraneous information. To make the conversation more realistic, "
    "you should also include for A:\n"
    "- deixis (words that refer to people, places, or things in the conversation history like this, their, that, "
    "it, they, them)\n"
    "You only return JSON of the following form with key being an <int representing the turn number> mapping "
    "to:\n"
    "- original: <list of three variants of standard single-turn questions not depending on conversation history "
    "answered by the answer field>\n"
    "- deixis: <deixis applied to original variants>\n"
    "- answer: <always the object field from the turn triple, representing B's answer to any of the questions>\n"
    "Ensure that the variants of the original have the subject variable (enclosed by []) as is and that the "
    "object is always the answer and is never part of the questions. Ensure there are exactly three variants of "
    "each type. All questions should mimic real world user search queries and be short, lower case and never "
    "proper questions beginning with who/whom/what/when/which/how. Ensure to never generate proper questions for "
    "any variant of the four types of queries.";

const std::string_view kTextUser =
    "You have been provided with K triples (subject, predicate, object) from the knowledge graph corresponding "
    "directly to exact turns. The subject and object, in this case, are templates and enclosed by [], and the "
    "subject template should be used as is for questions in the original field. For example, for a triple "
    "([person], gender, [x]), a question in the original field should always use the literal \"[person]\" "
    "without any deixis. The answer field should always be the turn's object template. Your task is to use this "
    "information to generate a coherent conversational question-answering session between A and B following the "
    "aforementioned template. Remember their roles exactly and ensure the conversation length is equal to the "
    "number of turns.";

const std::string_view kQualifiedSystem =
    "You are an AI assistant tasked with generating a natural conversational question-answering session between "
    "two people, A and B, based on information from a knowledge graph, in the form of a list of tuples.\n"
    "A will only ask questions, and they should be based on the subject type, predicate, and relationship "
    "predicate of each tuple (potentially also an object from another tuple provided), while B will only answer "
    "with just the object and no extraneous information.\n"
    "To make the conversation more realistic, you should also include for A:\n"
    "- deixis (words that refer to people, places, or things in the conversation history like this, their, that, "
    "it, they, them) applied to just the subject template (never to any of the objects included)\n"
    "You only return JSON of the following form with key being an <int representing the turn number> mapping "
    "to:\n"
    "\n"
    "- original: <list of three variants of standard single-turn questions not depending on conversation history "
    "answered by the answer field>\n"
    "- deixis: <deixis applied to original variants>\n"
    "- answer: <always the object field from the turn tuple, representing B's answer to any of the questions>\n"
    "\n"
    "Ensure that the variants of the original have the subject variable (enclosed by []) as is and that the "
    "object is always the answer and is never part of the questions.\n"
    "Ensure there are exactly three variants of each type.\n"
    "All questions should mimic real world user search queries and be short, lower case and never proper "
    "questions beginning with who/whom/what/when/which/how.\n"
    "Ensure to never generate proper questions for any variant of the four types of queries.";

const std::string_view kQualifiedUser =
    "You have been provided with K tuples (subject, predicate, relationship_predicate, object) from the knowledge "
    "graph corresponding directly to exact turns.\n"
    "The subject and object, in this case, are templates and enclosed by [], and the subject template should be "
    "used as is for questions in the original field.\n"
    "For example, for a tuple ([person], marriage, related person, [a]), a question in the original field should "
    "always use the literal \"[person]\" without any deixis.\n"
    "You can also use the object field from any of the other tuples from the same predicate, if available, to "
    "craft better questions.\n"
    "The answer field should always be the turn's object template.\n"
    "Your task is to use this information to generate a coherent conversational question-answering session "
    "between A and B following the aforementioned template.\n"
    "Remember their roles exactly and ensure the conversation length is equal to the number of turns.\n"
    "Never use the object template corresponding to the turn ([a] in 1, [b] in 2, ...) in any of the turn's "
    "questions.";

const std::string_view kSearchExamplesNote =
    "We see in the following examples all variants take on user search query form and never start with one of a "
    "who, what, when, which, and how.";

const std::string_view kAnswerSystem =
    "You are a helpful assistant that can do conversational factoid question answering. You only provide the "
    "exact answer span and never with extraneous information or in full sentences. Provide the answer in a "
    "string or pythonic list (the list can have multiple elements if there are multiple answers). Always provide "
    "an answer in the format \"Answer: <answer string or list of answer strings>\". If you are extremely unsure "
    "of the answer, return \"Answer: NA\".";

const std::string_view kJudgeSystem =
    "You are a helpful assistant that can help evaluate conversational factoid question answering. You will be "
    "provided Questions, Gold Answers, and Candidates, turn-by-turn. The Gold Answer and Candidate are either a "
    "single answer or list of answers.  If the Candidate seems to properly answer the question based on the "
    "answers, score it a 1, else, a 0. Do not use any of your global knowledge. If they are lists, ensure that at "
    "least one of the Candidate is captured by the Gold Answers. Do not use any additional knowledge. The output "
    "should be of the form \"Ratings: <pythonic list of 0s/1s>\" where the list's order corresponds exactly to "
    "the conversation turn";

}  // namespace kgconv::prompts
