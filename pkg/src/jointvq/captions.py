"""Caption grammar for the captioned-digit dataset.

A scene is described by slots: (position, color, digit) triples. Captions are
one templated sentence per slot, e.g. "the green 0 is on the upper right."
The parser is the exact inverse of the generator on grammar output, and total
(never raises) on arbitrary text so it can score generated captions.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field


class InvalidSlotsError(ValueError):
    """Slot list violates the grammar (empty, bad digit, duplicate position)."""


class Color(enum.Enum):
    WHITE = "white"
    RED = "red"
    GREEN = "green"
    BLUE = "blue"

    @property
    def rgb(self) -> tuple[int, int, int]:
        return _RGB[self]


_RGB = {
    Color.WHITE: (255, 255, 255),
    Color.RED: (255, 0, 0),
    Color.GREEN: (0, 255, 0),
    Color.BLUE: (0, 0, 255),
}


class Position(enum.Enum):
    CENTER = "center"
    TOP_LEFT = "top_left"
    TOP_RIGHT = "top_right"
    BOTTOM_LEFT = "bottom_left"
    BOTTOM_RIGHT = "bottom_right"

    @property
    def is_corner(self) -> bool:
        return self is not Position.CENTER

    @property
    def phrase(self) -> str:
        """Caption wording: corners read "upper left" etc., center reads "center"."""
        return _PHRASE[self]


_PHRASE = {
    Position.CENTER: "center",
    Position.TOP_LEFT: "upper left",
    Position.TOP_RIGHT: "upper right",
    Position.BOTTOM_LEFT: "lower left",
    Position.BOTTOM_RIGHT: "lower right",
}
_PHRASE_TO_POSITION = {v: k for k, v in _PHRASE.items()}

CORNERS = (
    Position.TOP_LEFT,
    Position.TOP_RIGHT,
    Position.BOTTOM_LEFT,
    Position.BOTTOM_RIGHT,
)


class PairKind(enum.Enum):
    SINGLE = "single"
    QUAD1 = "quad1"
    QUAD2 = "quad2"
    QUAD3 = "quad3"
    QUAD4 = "quad4"

    @property
    def slot_count(self) -> int:
        return 1 if self is PairKind.SINGLE else int(self.value[-1])

    @property
    def uses_center(self) -> bool:
        return self is PairKind.SINGLE


@dataclass(frozen=True)
class Slot:
    position: Position
    color: Color
    digit: int

    def __post_init__(self):
        if not 0 <= self.digit <= 9:
            raise InvalidSlotsError(f"digit out of range: {self.digit}")


def _validate_slots(slots: list[Slot]) -> None:
    if not slots:
        raise InvalidSlotsError("empty slot list")
    positions = [s.position for s in slots]
    if len(set(positions)) != len(positions):
        raise InvalidSlotsError(f"duplicate positions: {[p.value for p in positions]}")


def caption_from_slots(slots: list[Slot]) -> str:
    """Render slots to a caption, one sentence per slot in slot order."""
    _validate_slots(slots)
    sentences = []
    for s in slots:
        if s.position is Position.CENTER:
            sentences.append(f"the {s.color.value} {s.digit} is in the center.")
        else:
            sentences.append(
                f"the {s.color.value} {s.digit} is on the {s.position.phrase}."
            )
    return " ".join(sentences)


@dataclass
class ParsedCaption:
    """Slots recovered from a caption plus any text that matched no template."""

    slots: list[Slot] = field(default_factory=list)
    residual: list[str] = field(default_factory=list)

    @property
    def is_clean(self) -> bool:
        return not self.residual


_COLOR_WORDS = {c.value: c for c in Color}
_DIGIT_WORDS = {str(d): d for d in range(10)}


def _match_sentence(words: list[str]) -> Slot | None:
    # Corner form: the <color> <digit> is on the <upper|lower> <left.|right.>
    # Center form: the <color> <digit> is in the center.
    if len(words) not in (7, 8):
        return None
    if words[0] != "the" or words[3] != "is":
        return None
    color = _COLOR_WORDS.get(words[1])
    digit = _DIGIT_WORDS.get(words[2])
    if color is None or digit is None:
        return None
    if len(words) == 7:
        if words[4:] != ["in", "the", "center."]:
            return None
        return Slot(Position.CENTER, color, digit)
    if words[4] != "on" or words[5] != "the":
        return None
    if not words[7].endswith("."):
        return None
    phrase = f"{words[6]} {words[7][:-1]}"
    position = _PHRASE_TO_POSITION.get(phrase)
    if position is None or position is Position.CENTER:
        return None
    return Slot(position, color, digit)


def parse_caption(text: str) -> ParsedCaption:
    """Greedily match each sentence against the two caption templates.

    Sentences are maximal word runs ending in a "."-terminated word; a final
    unterminated run counts as one sentence. Non-matching sentences and
    duplicate-position matches land in ``residual``.
    """
    parsed = ParsedCaption()
    words = text.split()
    sentence: list[str] = []
    sentences: list[list[str]] = []
    for w in words:
        sentence.append(w)
        if w.endswith("."):
            sentences.append(sentence)
            sentence = []
    if sentence:
        sentences.append(sentence)

    seen_positions: set[Position] = set()
    for sent in sentences:
        slot = _match_sentence(sent)
        if slot is None or slot.position in seen_positions:
            parsed.residual.append(" ".join(sent))
            continue
        seen_positions.add(slot.position)
        parsed.slots.append(slot)
    return parsed


def infer_kind(slots: list[Slot]) -> PairKind | None:
    """Pair kind implied by a parsed slot set; None if the set fits no kind."""
    if not slots:
        return None
    positions = {s.position for s in slots}
    if Position.CENTER in positions:
        if positions == {Position.CENTER}:
            return PairKind.SINGLE
        return None
    return PairKind(f"quad{len(slots)}")
