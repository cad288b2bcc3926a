"""Domain types of the test-suite annotation schema.

The schema has four levels: core data (test items and their
functional-dependency analyses), phenomenon-related data (the phenomenon
hierarchy and the item/phenomenon links with their parameters), test sets,
and user & application profiles (evaluation runs and their per-item
results).  All types are frozen dataclasses; validation returns a list of
:class:`Violation` records instead of raising.
"""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from typing import Optional

WELLFORMED = 1
ILLFORMED = 0
MARGINAL = 2
WELLFORMEDNESS_CODES = (ILLFORMED, WELLFORMED, MARGINAL)

#: Names of the abstract (non-leaf) phenomenon classes.  A phenomenon's
#: supertypes and presuppositions may refer to these without a stored record.
DEFAULT_TAXONOMY = (
    "C_Complementation",
    "C_Agreement",
    "C_Modification",
    "NP_Complementation",
    "NP_Agreement",
    "NP_Modification",
    "Diathesis",
    "Tense_Aspect_Modality",
    "Sentence_Types",
    "Coordination",
    "Negation",
    "Word_Order",
    "Extragrammatical",
)


@dataclass(frozen=True)
class Violation:
    """One consistency problem found in a record or across records."""

    rule: str
    field: str
    message: str
    relation: str = ""
    key: object = None

    def __str__(self) -> str:
        where = self.relation
        if self.key is not None:
            where = f"{where}[{self.key}]"
        prefix = f"{where} " if where else ""
        return f"{prefix}{self.field}: {self.rule}: {self.message}"


def tokenize(text: str) -> list[str]:
    return text.split(" ") if text else []


def is_punctuation(token: str) -> bool:
    return bool(token) and all(unicodedata.category(c).startswith("P") for c in token)


def item_length(text: str) -> int:
    """Token count of *text*, not counting a sentence-final punctuation token."""
    tokens = tokenize(text)
    if tokens and is_punctuation(tokens[-1]):
        return len(tokens) - 1
    return len(tokens)


def split_names(value: str) -> list[str]:
    """Split a comma-separated list of phenomenon names (``"A, B"``)."""
    return [name.strip() for name in value.split(",") if name.strip()]


def join_names(names) -> str:
    return ", ".join(names)


@dataclass(frozen=True)
class TestItem:
    item_id: int
    author: str
    date: str
    register: str
    format: str
    origin: str
    difficulty: int
    wellformedness: int
    category: str
    input: str
    length: int
    comment: str = ""

    __test__ = False  # not a pytest class

    @property
    def tokens(self) -> list[str]:
        return tokenize(self.input)


@dataclass(frozen=True)
class AnalysisSpan:
    item_id: int
    start: int
    end: int
    instance: str
    category: str
    function: str
    domain_start: int
    domain_end: int

    @property
    def position(self) -> tuple[int, int]:
        return (self.start, self.end)

    @property
    def domain(self) -> tuple[int, int]:
        return (self.domain_start, self.domain_end)


@dataclass(frozen=True)
class Phenomenon:
    phenomenon_id: int
    name: str
    supertypes: tuple[str, ...] = ()
    presupposition: tuple[str, ...] = ()
    restrictions: str = ""
    interaction: str = "none"
    purpose: str = ""
    author: str = ""
    date: str = ""
    comment: str = ""


@dataclass(frozen=True)
class ItemPhenomenonLink:
    link_id: int
    item_id: int
    phenomenon_id: int
    parameters: tuple[tuple[str, str], ...] = ()


@dataclass(frozen=True)
class TestSet:
    set_id: int
    item_ids: tuple[int, ...]

    __test__ = False


@dataclass(frozen=True)
class Run:
    run_id: int
    application: str
    date: str
    environment: str = ""
    comment: str = ""


@dataclass(frozen=True)
class Result:
    run_id: int
    item_id: int
    accepted: int
    readings: int
    time_ms: int
    output: str = ""
    flags: str = ""


def validate_item(item: TestItem) -> list[Violation]:
    """Check a test item against its field rules; ``[]`` means clean."""
    found = []

    def bad(fieldname, rule, message):
        found.append(Violation(rule, fieldname, message, "item", item.item_id))

    if item.item_id < 1:
        bad("i-id", "positive", f"item id must be positive, got {item.item_id}")
    if not item.date:
        bad("i-date", "nonempty", "date is empty")
    if item.difficulty < 1:
        bad("i-difficulty", "range", f"difficulty must be >= 1, got {item.difficulty}")
    if item.wellformedness not in WELLFORMEDNESS_CODES:
        bad("i-wf", "wellformedness",
            f"code {item.wellformedness} not in {{0, 1, 2}}")
    if not item.input:
        bad("i-input", "nonempty", "input is empty")
    elif "" in item.tokens or any(c.isspace() and c != " " for c in item.input):
        bad("i-input", "tokenization", "tokens must be separated by exactly one space")
    expected = item_length(item.input)
    if item.length != expected:
        bad("i-length", "length",
            f"length {item.length} but input has {expected} non-final-punctuation tokens")
    elif item.input and item.length < 1:
        bad("i-length", "length", "length must be >= 1")
    return found


def _check_range(found, span, fieldname, start, end, ntokens):
    if not 0 <= start < end:
        found.append(Violation("span-bounds", fieldname,
                               f"{start}:{end} is not a non-empty range",
                               "analysis", span.item_id))
    elif end > ntokens:
        found.append(Violation("span-bounds", fieldname,
                               f"end {end} exceeds token count {ntokens}",
                               "analysis", span.item_id))


def validate_span(span: AnalysisSpan, item: TestItem) -> list[Violation]:
    """Check one analysis row against the input of its parent item."""
    found: list[Violation] = []
    if span.item_id != item.item_id:
        found.append(Violation("item-mismatch", "i-id",
                               f"span belongs to {span.item_id}, not {item.item_id}",
                               "analysis", span.item_id))
        return found
    tokens = item.tokens
    _check_range(found, span, "a-position", span.start, span.end, len(tokens))
    _check_range(found, span, "a-domain", span.domain_start, span.domain_end, len(tokens))
    if not any(v.field == "a-position" for v in found):
        expected = " ".join(tokens[span.start:span.end])
        if span.instance != expected:
            found.append(Violation("instance", "a-instance",
                                   f"{span.instance!r} != tokens {span.start}:{span.end} "
                                   f"{expected!r}", "analysis", span.item_id))
    return found


def derive_instance(item_input: str, start: int, end: int) -> str:
    return " ".join(tokenize(item_input)[start:end])


def find_cycles(adjacency: dict[str, list[str]]) -> list[list[str]]:
    """Cycles in a name graph given as ``{node: [successor, ...]}``.

    Returns one closed path (first node repeated at the end) per back edge
    found by a depth-first search in sorted node order.
    """
    white, grey, black = 0, 1, 2
    colour = {node: white for node in adjacency}
    found = []
    for root in sorted(adjacency):
        if colour[root] != white:
            continue
        colour[root] = grey
        path = [root]
        stack = [iter(adjacency[root])]
        while stack:
            child = next(stack[-1], None)
            if child is None:
                stack.pop()
                colour[path.pop()] = black
                continue
            state = colour.get(child, black)
            if state == grey:
                found.append(path[path.index(child):] + [child])
            elif state == white:
                colour[child] = grey
                path.append(child)
                stack.append(iter(adjacency[child]))
    return found


def render_position(position: Optional[tuple[int, int]]) -> str:
    if position is None:
        return ""
    return f"{position[0]}:{position[1]}"
