"""Closed instruction language for single-digit canvas edits.

An edit is a triplet (verb, digit, argument).  The argument is a named
position for "put", a direction for "move", and absent for the other
verbs.  Every triplet has exactly one canonical sentence, so realizing
and parsing round-trip losslessly over the whole language.
"""
from __future__ import annotations

import enum
import json
from dataclasses import dataclass
from functools import lru_cache

PAD_WORD = "<pad>"
EOS_WORD = "<eos>"
PAD_ID = 0
EOS_ID = 1

# Hard cap on surface length; the longest sentence is 6 words
# ("move seven to the bottom left"), leaving room for EOS.
MAX_TOKENS = 8

DIGIT_WORDS = (
    "zero", "one", "two", "three", "four",
    "five", "six", "seven", "eight", "nine",
)


class Verb(enum.Enum):
    PUT = "put"
    REMOVE = "remove"
    EXPAND = "expand"
    COMPRESS = "compress"
    MOVE = "move"


class NamedPosition(enum.Enum):
    TOP = "top"
    LEFT = "left"
    RIGHT = "right"
    BOTTOM = "bottom"
    MIDDLE = "middle"


class Direction(enum.Enum):
    TOP = "top"
    LEFT = "left"
    RIGHT = "right"
    BOTTOM = "bottom"
    TOP_LEFT = "top-left"
    TOP_RIGHT = "top-right"
    BOTTOM_LEFT = "bottom-left"
    BOTTOM_RIGHT = "bottom-right"


class ParseError(ValueError):
    """Base class for instruction parsing failures."""


class UnknownWord(ParseError):
    """A word outside the closed vocabulary. `position` is the 0-based token index."""

    def __init__(self, word: str, position: int):
        super().__init__(f"unknown word {word!r} at position {position}")
        self.word = word
        self.position = position


class MalformedPattern(ParseError):
    """All words are known but the sentence matches no instruction template."""


@dataclass(frozen=True)
class InstructionTriplet:
    verb: Verb
    digit: int
    arg: NamedPosition | Direction | None = None

    def __post_init__(self):
        if not 0 <= self.digit <= 9:
            raise ValueError(f"digit must be 0-9, got {self.digit}")
        expected = {
            Verb.PUT: NamedPosition,
            Verb.MOVE: Direction,
        }.get(self.verb)
        if expected is None:
            if self.arg is not None:
                raise ValueError(f"{self.verb.value} takes no argument")
        elif not isinstance(self.arg, expected):
            raise ValueError(
                f"{self.verb.value} requires a {expected.__name__} argument, got {self.arg!r}"
            )


@dataclass(frozen=True)
class InstructionText:
    surface: str
    tokens: tuple[int, ...]  # word ids, no EOS/PAD


@lru_cache(maxsize=1)
def vocabulary() -> tuple[str, ...]:
    """Ordered word list; index is the word id. Ids 0 and 1 are PAD and EOS."""
    words = set(DIGIT_WORDS)
    words.update(v.value for v in Verb)
    words.update(p.value for p in NamedPosition)
    for d in Direction:
        words.update(d.value.split("-"))
    words.update(("on", "the", "to"))
    return (PAD_WORD, EOS_WORD) + tuple(sorted(words))


@lru_cache(maxsize=1)
def _word_ids() -> dict[str, int]:
    return {w: i for i, w in enumerate(vocabulary())}


def save_vocabulary(path) -> None:
    """Write the vocabulary as a JSON list (index = word id)."""
    with open(path, "w", encoding="utf-8") as f:
        json.dump(list(vocabulary()), f)


def token_ids(words: list[str]) -> tuple[int, ...]:
    ids = []
    table = _word_ids()
    for pos, word in enumerate(words):
        wid = table.get(word)
        if wid is None or wid in (PAD_ID, EOS_ID):
            raise UnknownWord(word, pos)
        ids.append(wid)
    return tuple(ids)


def _surface_words(triplet: InstructionTriplet) -> list[str]:
    digit = DIGIT_WORDS[triplet.digit]
    verb = triplet.verb
    if verb is Verb.PUT:
        return ["put", digit, "on", "the", triplet.arg.value]
    if verb is Verb.MOVE:
        return ["move", digit, "to", "the"] + triplet.arg.value.split("-")
    return [verb.value, digit]


def realize(triplet: InstructionTriplet) -> InstructionText:
    """Render the canonical sentence for a triplet."""
    words = _surface_words(triplet)
    return InstructionText(surface=" ".join(words), tokens=token_ids(words))


_DIGIT_BY_WORD = {w: i for i, w in enumerate(DIGIT_WORDS)}
_POSITION_BY_WORD = {p.value: p for p in NamedPosition}
_STRAIGHT_DIRECTIONS = {d.value: d for d in Direction if "-" not in d.value}
_DIAGONAL_DIRECTIONS = {tuple(d.value.split("-")): d for d in Direction if "-" in d.value}


def parse(text: str | InstructionText) -> InstructionTriplet:
    """Invert `realize`. Raises UnknownWord/MalformedPattern on anything else."""
    surface = text.surface if isinstance(text, InstructionText) else text
    words = surface.strip().lower().split()
    if not words:
        raise MalformedPattern("empty instruction")
    token_ids(words)  # raises UnknownWord with the failing position

    verb_word = words[0]
    try:
        verb = Verb(verb_word)
    except ValueError:
        raise MalformedPattern(f"{verb_word!r} is not an instruction verb") from None

    def digit_at(i: int) -> int:
        if i >= len(words) or words[i] not in _DIGIT_BY_WORD:
            raise MalformedPattern(f"expected a digit word after {verb_word!r}")
        return _DIGIT_BY_WORD[words[i]]

    if verb is Verb.PUT:
        digit = digit_at(1)
        pos = _POSITION_BY_WORD.get(words[4]) if len(words) == 5 else None
        if words[2:4] != ["on", "the"] or pos is None:
            raise MalformedPattern('put takes the form "put <digit> on the <position>"')
        return InstructionTriplet(verb, digit, pos)

    if verb is Verb.MOVE:
        digit = digit_at(1)
        direction = None
        if len(words) == 5:
            direction = _STRAIGHT_DIRECTIONS.get(words[4])
        elif len(words) == 6:
            direction = _DIAGONAL_DIRECTIONS.get((words[4], words[5]))
        if words[2:4] != ["to", "the"] or direction is None:
            raise MalformedPattern('move takes the form "move <digit> to the <direction>"')
        return InstructionTriplet(verb, digit, direction)

    digit = digit_at(1)
    if len(words) != 2:
        raise MalformedPattern(f'{verb_word} takes the form "{verb_word} <digit>"')
    return InstructionTriplet(verb, digit)


def triplets_for_digit(digit: int) -> list[InstructionTriplet]:
    """All 16 well-formed triplets mentioning one digit, in canonical order."""
    out = []
    for verb in sorted(Verb, key=lambda v: v.value):
        if verb is Verb.PUT:
            out.extend(InstructionTriplet(verb, digit, p) for p in NamedPosition)
        elif verb is Verb.MOVE:
            out.extend(InstructionTriplet(verb, digit, d) for d in Direction)
        else:
            out.append(InstructionTriplet(verb, digit))
    return out


def enumerate_triplets() -> list[InstructionTriplet]:
    """All 160 well-formed triplets, sorted by verb, then digit, then argument."""
    out = []
    for verb in sorted(Verb, key=lambda v: v.value):
        for digit in range(10):
            if verb is Verb.PUT:
                out.extend(InstructionTriplet(verb, digit, p) for p in NamedPosition)
            elif verb is Verb.MOVE:
                out.extend(InstructionTriplet(verb, digit, d) for d in Direction)
            else:
                out.append(InstructionTriplet(verb, digit))
    return out


def padded_token_ids(text: InstructionText, length: int = MAX_TOKENS) -> list[int]:
    """Token ids with EOS appended and PAD up to `length` (model/sample encoding)."""
    ids = list(text.tokens) + [EOS_ID]
    if len(ids) > length:
        raise ValueError(f"instruction longer than {length} tokens: {text.surface!r}")
    return ids + [PAD_ID] * (length - len(ids))
