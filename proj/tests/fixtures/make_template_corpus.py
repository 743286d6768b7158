#!/usr/bin/env python3
# Writes template_corpus.json: crafted model responses with hand labels.
# label is "valid", "parse-error", or the one validation rule the response breaks.
import json
from pathlib import Path

CRICKETER = {"subject_type_label": "cricketer", "interaction": "voice",
             "turns": [{"predicate": "P1350", "predicate_label": "number of matches played/races/starts"},
                       {"predicate": "P569", "predicate_label": "date of birth"}]}
SINGER = {"subject_type_label": "singer", "interaction": "text",
          "turns": [{"predicate": "P264", "predicate_label": "record label"}]}
MOVIE = {"subject_type_label": "movie", "interaction": "voice",
         "turns": [{"predicate": "P725", "predicate_label": "voice actor", "qualifier": "P175", "qualifier_label": "performer"},
                   {"predicate": "P725", "predicate_label": "voice actor", "qualifier": "P453", "qualifier_label": "character role"}]}
BUSINESS = {"subject_type_label": "business", "interaction": "text",
            "turns": [{"predicate": "P169", "predicate_label": "chief executive officer", "qualifier": "P580", "qualifier_label": "start time"}]}


def voice_turn(s, answer):
    return {
        "original": [f"How many matches has {s} played?", f"What is the match count of {s}?", f"Tell me the matches {s} played"],
        "deixis": ["How many matches has he played?", "What is their match count?", "Tell me the matches that player played"],
        "disfluencies": [f"How many, um, matches has {s} played?", f"What is the, uh, match count of {s}?", f"Tell me, hmm, the matches {s} played"],
        "deixis_disfluencies": ["How many, um, matches has he played?", "What is the, uh, match count of theirs?", "Tell me, hmm, the matches that player played"],
        "answer": answer,
    }


def cricketer():
    one = voice_turn("[cricketer]", "[a]")
    two = {
        "original": ["When was [cricketer] born?", "What is the birth date of [cricketer]?", "Birthday of [cricketer]?"],
        "deixis": ["When was he born?", "What is their birth date?", "That player's birthday?"],
        "disfluencies": ["When was, um, [cricketer] born?", "What is the, uh, birth date of [cricketer]?", "Birthday of, hmm, [cricketer]?"],
        "deixis_disfluencies": ["When was, um, he born?", "What is the, uh, birth date of theirs?", "Birthday of, hmm, that player?"],
        "answer": "[b]",
    }
    return {"1": one, "2": two}


def singer():
    return {"1": {"original": ["[singer] record label", "the label that signed [singer]", "record label of [singer] please"],
                  "deixis": ["their record label", "the label that signed her", "record label of that artist please"],
                  "answer": "[a]"}}


def movie():
    return {"1": voice_turn("[movie]", "[a]") | {
                "original": ["Who voiced a part in [movie]?", "Which performer was a voice actor in [movie]?", "Name a voice actor of [movie]"]},
            "2": voice_turn("[movie]", "[b]") | {
                "original": ["Whose voice of [a] is in [movie]?", "Which role did [a] voice in [movie]?", "Name the character [a] voiced in [movie]"]}}


def business():
    return {"1": {"original": ["[business] chief executive and start date", "the CEO of [business] since when", "[business] boss start time"],
                  "deixis": ["its chief executive and start date", "the CEO there since when", "that company's boss start time"],
                  "answer": "[a]"}}


def case(name, sig, label, response):
    text = response if isinstance(response, str) else json.dumps(response, indent=1)
    return {"name": name, "signature": sig, "label": label, "response": text}


def edited(base, fn):
    r = json.loads(json.dumps(base))
    fn(r)
    return r


def setitem(path, value):
    def fn(r):
        node = r
        for k in path[:-1]:
            node = node[k]
        node[path[-1]] = value
    return fn


cases = [
    case("voice two turns", CRICKETER, "valid", cricketer()),
    case("text one turn", SINGER, "valid", singer()),
    case("qualified voice with cross-turn object", MOVIE, "valid", movie()),
    case("qualified text", BUSINESS, "valid", business()),
    case("prose around the object", CRICKETER, "valid", "Sure, here it is:\n" + json.dumps(cricketer()) + "\nLet me know!"),
    case("code fence", SINGER, "valid", "```json\n" + json.dumps(singer(), indent=2) + "\n```"),
    case("whose is not a wh-word", SINGER, "valid", edited(singer(), setitem(["1", "deixis", 0], "whose label is it"))),
    case("padded answer", CRICKETER, "valid", edited(cricketer(), setitem(["2", "answer"], " [b] "))),
    case("stray braces before the object", SINGER, "valid", "{not json} then " + json.dumps(singer())),

    case("two originals", CRICKETER, "variant-count", edited(cricketer(), lambda r: r["1"]["original"].pop())),
    case("four deixis", SINGER, "variant-count", edited(singer(), lambda r: r["1"]["deixis"].append("their label again"))),
    case("empty disfluency list", CRICKETER, "variant-count", edited(cricketer(), setitem(["2", "disfluencies"], []))),

    case("deixis leaks own object", CRICKETER, "object-in-question",
         edited(cricketer(), setitem(["1", "deixis", 1], "Has he played [a] matches?"))),
    case("text original leaks own object", SINGER, "object-in-question",
         edited(singer(), setitem(["1", "original", 2], "[singer] signed to [a]"))),
    case("qualified leaks own object", MOVIE, "object-in-question",
         edited(movie(), setitem(["1", "deixis", 0], "Did [a] voice a part in it?"))),
    case("second turn leaks its object", CRICKETER, "object-in-question",
         edited(cricketer(), setitem(["2", "deixis_disfluencies", 2], "Was he, um, born on [b]?"))),

    case("who first", SINGER, "wh-initial", edited(singer(), setitem(["1", "original", 0], "Who signed [singer]"))),
    case("what first in deixis", SINGER, "wh-initial", edited(singer(), setitem(["1", "deixis", 0], "what label signed her"))),
    case("how after spaces", SINGER, "wh-initial", edited(singer(), setitem(["1", "deixis", 1], "  How did she get signed"))),
    case("upper-case when", SINGER, "wh-initial", edited(singer(), setitem(["1", "original", 1], "WHEN was [singer] signed"))),
    case("which in qualified text", BUSINESS, "wh-initial",
         edited(business(), setitem(["1", "deixis", 2], "which boss started there"))),
    case("whom first", BUSINESS, "wh-initial", edited(business(), setitem(["1", "original", 0], "Whom did [business] hire as CEO"))),

    case("empty text", CRICKETER, "parse-error", ""),
    case("prose only", SINGER, "parse-error", "I am sorry, I cannot help with that."),
    case("truncated", CRICKETER, "parse-error", json.dumps(cricketer())[:-40]),
    case("python dict", SINGER, "parse-error", str(singer())),
    case("array", SINGER, "parse-error", json.dumps([singer()])),
    case("trailing comma", BUSINESS, "parse-error", json.dumps(business())[:-1] + ",}"),
    case("raw newline in a string", SINGER, "parse-error", json.dumps(singer()).replace("their record label", "their\nrecord label")),

    case("family missing", CRICKETER, "missing-family", edited(cricketer(), lambda r: r["2"].pop("deixis_disfluencies"))),
    case("subject missing", CRICKETER, "subject-missing",
         edited(cricketer(), setitem(["1", "original", 2], "Tell me the matches he played"))),
    case("wrong answer token", SINGER, "answer-mismatch", edited(singer(), setitem(["1", "answer"], "[b]"))),
    case("turn missing", CRICKETER, "missing-turn", edited(cricketer(), lambda r: r.pop("2"))),
    case("other turn's object in a plain set", CRICKETER, "foreign-placeholder",
         edited(cricketer(), setitem(["2", "original", 0], "Born before playing [a] matches, [cricketer]?"))),
    case("extra turn", SINGER, "unexpected-turn", edited(singer(), lambda r: r.__setitem__("2", r["1"]))),
    case("blank variant", SINGER, "empty-question", edited(singer(), setitem(["1", "deixis", 2], " "))),
]

out = Path(__file__).with_name("template_corpus.json")
out.write_text(json.dumps({"cases": cases}, indent=1) + "\n")
print(f"{len(cases)} cases -> {out.name}")
