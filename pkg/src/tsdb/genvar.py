"""Systematic generation of test data.

Two tools live here.  :func:`apply_variation` derives an ill-formed item
from a well-formed one by replacement, addition, deletion or permutation of
tokens, carrying the analysis spans along; :func:`make_test_set` stores a
base item together with such variants as a test set.  :func:`expand_grammar`
enumerates a small feature-equation grammar into annotated items, marking
derivations that go through a malrule as ill-formed.
"""

from __future__ import annotations

import itertools
import re
from dataclasses import dataclass, field, replace
from typing import Optional

from tsdb.model import (
    ILLFORMED,
    WELLFORMED,
    AnalysisSpan,
    TestItem,
    derive_instance,
    item_length,
    tokenize,
)
from tsdb.storage import (
    Database,
    TsdbError,
    check_consistency,
    escape,
    get_item,
    insert_record,
    links,
    span_to_row,
    spans,
    split_fields,
    item_to_row,
)

KINDS = ("replacement", "addition", "deletion", "permutation")
PROVENANCE_PREFIX = "derived:"


class VariationError(TsdbError):
    pass


class GrammarError(TsdbError):
    pass


@dataclass(frozen=True)
class VariationDirective:
    """One edit.  Which fields matter depends on ``kind``:

    * replacement: ``span``, ``tokens`` and optional ``category``/``function``
    * addition: ``index``, ``tokens`` and optional ``category``/``function``/``domain``
      for the span covering the new tokens
    * deletion: ``span``
    * permutation: ``span`` and ``other`` (swapped)
    """

    kind: str
    span: Optional[tuple[int, int]] = None
    other: Optional[tuple[int, int]] = None
    index: Optional[int] = None
    tokens: str = ""
    category: str = ""
    function: str = ""
    domain: Optional[tuple[int, int]] = None


def replacement(span, tokens, category="", function=""):
    return VariationDirective("replacement", span=tuple(span), tokens=tokens,
                              category=category, function=function)


def addition(index, tokens, category="", function="", domain=None):
    return VariationDirective("addition", index=index, tokens=tokens, category=category,
                              function=function, domain=tuple(domain) if domain else None)


def deletion(span):
    return VariationDirective("deletion", span=tuple(span))


def permutation(span, other):
    return VariationDirective("permutation", span=tuple(span), other=tuple(other))


def _position(text: str) -> tuple[int, int]:
    match = re.fullmatch(r"(\d+):(\d+)", text.strip())
    if not match:
        raise VariationError(f"bad span {text!r}, expected START:END")
    return int(match.group(1)), int(match.group(2))


def parse_directive(line: str) -> VariationDirective:
    """Parse ``kind@span(s)@payload`` (fields escaped as in data files)."""
    fields = split_fields(line)
    kind = fields[0].strip()
    rest = fields[1:]
    try:
        if kind == "replacement" and 2 <= len(rest) <= 4:
            return replacement(_position(rest[0]), rest[1], *rest[2:])
        if kind == "addition" and 2 <= len(rest) <= 5:
            domain = _position(rest[4]) if len(rest) == 5 and rest[4] else None
            return addition(int(rest[0]), rest[1], *rest[2:4], domain=domain)
        if kind == "deletion" and len(rest) == 1:
            return deletion(_position(rest[0]))
        if kind == "permutation" and len(rest) == 2:
            return permutation(_position(rest[0]), _position(rest[1]))
    except ValueError as exc:
        raise VariationError(f"bad directive {line!r}: {exc}") from None
    raise VariationError(f"bad directive {line!r}")


def render_directive(d: VariationDirective) -> str:
    def pos(p):
        return f"{p[0]}:{p[1]}"

    if d.kind == "replacement":
        parts = [pos(d.span), escape(d.tokens)]
        if d.category or d.function:
            parts += [escape(d.category), escape(d.function)]
    elif d.kind == "addition":
        parts = [str(d.index), escape(d.tokens)]
        if d.category or d.function or d.domain:
            parts += [escape(d.category), escape(d.function)]
        if d.domain:
            parts.append(pos(d.domain))
    elif d.kind == "deletion":
        parts = [pos(d.span)]
    else:
        parts = [pos(d.span), pos(d.other)]
    return "@".join([d.kind] + parts)


def read_directives(text: str) -> list[VariationDirective]:
    return [parse_directive(line) for line in text.splitlines()
            if line.strip() and not line.lstrip().startswith("#")]


@dataclass(frozen=True)
class Provenance:
    derived_id: Optional[int]
    source_id: int
    directive: VariationDirective

    def comment(self) -> str:
        return f"{PROVENANCE_PREFIX}{self.source_id}:{render_directive(self.directive)}"


def parse_provenance(comment: str) -> Optional[Provenance]:
    """Recover the provenance stored in a derived item's comment, if any."""
    match = re.match(r"derived:(\d+):(\w+@.*)", comment)
    if not match:
        return None
    try:
        directive = parse_directive(match.group(2))
    except VariationError:
        return None
    return Provenance(None, int(match.group(1)), directive)


@dataclass(frozen=True)
class Variant:
    item: TestItem
    spans: tuple[AnalysisSpan, ...]
    provenance: Provenance


def _check_span(span, ntokens, what="span"):
    if span is None:
        raise VariationError(f"{what} missing")
    start, end = span
    if not 0 <= start < end <= ntokens:
        raise VariationError(f"{what} {start}:{end} out of bounds for {ntokens} tokens")


def _image(indices: list[int]) -> Optional[tuple[int, int]]:
    """Contiguous range covered by *indices*, or None if there is a gap."""
    if not indices:
        return None
    low, high = min(indices), max(indices)
    if high - low + 1 != len(indices):
        return None
    return low, high + 1


def _edit(tokens: list[str], old: list[tuple], d: VariationDirective):
    """Return new tokens and remapped ``(position, domain, category, function)`` rows."""
    n = len(tokens)
    new_tokens = list(tokens)
    remapped = []

    if d.kind == "deletion":
        _check_span(d.span, n)
        s, e = d.span
        if e - s == n:
            raise VariationError("deletion would remove every token")
        k = e - s
        new_tokens = tokens[:s] + tokens[e:]

        def shift(p):
            return p if p <= s else p - k if p >= e else None

        for (a, b), (da, db), cat, fn in old:
            if a < e and s < b:
                continue
            dom = (shift(da), shift(db))
            if None in dom or dom[0] >= dom[1]:
                continue
            remapped.append(((shift(a), shift(b)), dom, cat, fn))

    elif d.kind == "addition":
        i = d.index
        if i is None or not 0 <= i <= n:
            raise VariationError(f"insertion index {i} out of bounds for {n} tokens")
        added = tokenize(d.tokens)
        if not added or "" in added:
            raise VariationError(f"bad token string {d.tokens!r}")
        k = len(added)
        new_tokens = tokens[:i] + added + tokens[i:]

        def start(p):
            return p if p < i else p + k

        def end(p):
            return p if p <= i else p + k

        for (a, b), (da, db), cat, fn in old:
            if a < i < b:
                continue
            remapped.append(((start(a), end(b)), (start(da), end(db)), cat, fn))
        if d.category or d.function:
            domain = d.domain or (0, item_length(" ".join(new_tokens)))
            _check_span(domain, len(new_tokens), "domain")
            remapped.append(((i, i + k), domain, d.category, d.function))

    elif d.kind == "replacement":
        _check_span(d.span, n)
        s, e = d.span
        added = tokenize(d.tokens)
        if not added or "" in added:
            raise VariationError(f"bad token string {d.tokens!r}")
        k, m = e - s, len(added)
        new_tokens = tokens[:s] + added + tokens[e:]

        def shift(p):
            return p if p <= s else p + m - k if p >= e else None

        for (a, b), (da, db), cat, fn in old:
            target = (a, b) == (s, e)
            if target:
                cat = d.category or cat
                fn = d.function or fn
            if m == k:
                nested = (s <= a and b <= e) or (a <= s and e <= b)
                if a < e and s < b and not nested:
                    continue
                remapped.append(((a, b), (da, db), cat, fn))
                continue
            if target:
                pos = (s, s + m)
            elif a < e and s < b:
                continue
            else:
                pos = (shift(a), shift(b))
            dom = (shift(da), shift(db))
            if None in dom:
                continue
            remapped.append((pos, dom, cat, fn))

    elif d.kind == "permutation":
        _check_span(d.span, n)
        _check_span(d.other, n, "second span")
        first, second = sorted([d.span, d.other])
        if first[1] > second[0]:
            raise VariationError(f"permutation spans {first[0]}:{first[1]} and "
                                 f"{second[0]}:{second[1]} overlap")
        (a1, a2), (b1, b2) = first, second
        order = (list(range(a1)) + list(range(b1, b2)) + list(range(a2, b1))
                 + list(range(a1, a2)) + list(range(b2, n)))
        new_tokens = [tokens[j] for j in order]
        where = {old_index: new_index for new_index, old_index in enumerate(order)}
        for (a, b), (da, db), cat, fn in old:
            pos = _image([where[j] for j in range(a, b)])
            dom = _image([where[j] for j in range(da, db)])
            if pos is None or dom is None:
                continue
            remapped.append((pos, dom, cat, fn))
    else:
        raise VariationError(f"unknown variation kind {d.kind!r}")
    return new_tokens, remapped


def apply_variation(item: TestItem, item_spans, directive: VariationDirective) -> Variant:
    """Derive an ill-formed variant of a well-formed item.

    The variant's ``item_id`` is ``-1`` until it is stored.  Spans that an
    edit cuts through are dropped; all instance strings are re-read from the
    new input.
    """
    if item.wellformedness != WELLFORMED:
        raise VariationError(f"item {item.item_id} is not well-formed")
    old = [(s.position, s.domain, s.category, s.function) for s in item_spans]
    new_tokens, remapped = _edit(item.tokens, old, directive)
    text = " ".join(new_tokens)
    if item_length(text) < 1:
        raise VariationError(f"variant {text!r} has no tokens besides punctuation")
    provenance = Provenance(None, item.item_id, directive)
    derived = replace(item, item_id=-1, wellformedness=ILLFORMED, input=text,
                      length=item_length(text), comment=provenance.comment())
    new_spans = tuple(
        AnalysisSpan(-1, a, b, derive_instance(text, a, b), cat, fn, da, db)
        for (a, b), (da, db), cat, fn in remapped)
    return Variant(derived, new_spans, provenance)


def make_test_set(db: Database, base_id: int, directives) -> tuple[int, list[int]]:
    """Derive, store and group variants of *base_id*; nothing is stored on error."""
    directives = list(directives)
    if not directives:
        raise VariationError("a test set needs at least one variant")
    try:
        base = get_item(db, base_id)
    except KeyError:
        raise VariationError(f"no item {base_id}") from None
    base_spans = spans(db, base_id)
    variants = [apply_variation(base, base_spans, d) for d in directives]

    work = db.snapshot()
    derived_ids = []
    base_links = links(db, base_id)
    for variant in variants:
        row = item_to_row(variant.item)
        row["i-id"] = None
        new_id = insert_record(work, "item", row)
        derived_ids.append(new_id)
        for span in variant.spans:
            insert_record(work, "analysis", span_to_row(replace(span, item_id=new_id)))
        for link in base_links:
            ip = insert_record(work, "item-phenomenon",
                               {"i-id": new_id, "p-id": link.phenomenon_id})
            for name, value in link.parameters:
                insert_record(work, "parameter",
                              {"ip-id": ip, "par-name": name, "par-value": value})
    set_id = work.next_id("set", "s-id")
    for position, member in enumerate([base_id] + derived_ids):
        insert_record(work, "set", {"s-id": set_id, "i-id": member, "s-position": position})
    before = {str(v) for v in check_consistency(db)}
    introduced = [v for v in check_consistency(work) if str(v) not in before]
    if introduced:
        raise VariationError("test set would make the database inconsistent: "
                             + "; ".join(str(v) for v in introduced))
    db.records = work.records
    return set_id, derived_ids


# -- grammar expansion ------------------------------------------------------


@dataclass(frozen=True)
class Constraint:
    """``left.feature = right.feature``; ``left == "^"`` sets a parent feature."""

    left: str
    left_feature: str
    right: str
    right_feature: str


@dataclass(frozen=True)
class Annotation:
    child: str
    function: str
    domain: tuple[str, str]


@dataclass(frozen=True)
class Rule:
    lhs: str
    rhs: tuple[str, ...]
    constraints: tuple[Constraint, ...] = ()
    annotations: tuple[Annotation, ...] = ()
    mal: bool = False


@dataclass(frozen=True)
class LexEntry:
    tokens: str
    category: str
    features: tuple[tuple[str, str], ...] = ()


@dataclass
class ProductionGrammar:
    start: str
    rules: list[Rule] = field(default_factory=list)
    lexicon: dict[str, list[LexEntry]] = field(default_factory=dict)
    depth_bound: int = 10
    meta: dict[str, str] = field(default_factory=dict)

    def without_malrules(self) -> "ProductionGrammar":
        return ProductionGrammar(self.start, [r for r in self.rules if not r.mal],
                                 self.lexicon, self.depth_bound, dict(self.meta))


_GRAMMAR_TOKEN = re.compile(r'"(?:[^"\\]|\\.)*"|,|[^\s,]+')


def _is_literal(symbol: str) -> bool:
    return symbol.startswith('"')


def _literal(symbol: str) -> str:
    return re.sub(r'\\(.)', r'\1', symbol[1:-1])


def _child_ref(ref: str, rhs: tuple[str, ...], number: int) -> int:
    name, _, nth = ref.partition("/")
    hits = [i for i, sym in enumerate(rhs) if sym == name]
    nth_index = int(nth) - 1 if nth else 0
    if not hits or not 0 <= nth_index < len(hits):
        raise GrammarError(f"line {number}: {ref!r} is not a child of the rule")
    return hits[nth_index]


def _parse_rule(words: list[str], number: int, mal: bool) -> Rule:
    if len(words) < 3 or words[1] != "->":
        raise GrammarError(f"line {number}: expected 'rule LHS -> RHS ...'")
    lhs = words[0]
    sections = {"rhs": [], "where": [], "annotate": []}
    current = "rhs"
    for word in words[2:]:
        if word in ("where", "annotate"):
            current = word
        else:
            sections[current].append(word)
    rhs = tuple(sections["rhs"])
    if not rhs:
        raise GrammarError(f"line {number}: empty right-hand side")

    def groups(tokens):
        group = []
        for token in tokens + [","]:
            if token == ",":
                if group:
                    yield group
                group = []
            else:
                group.append(token)

    constraints = []
    for group in groups(sections["where"]):
        if len(group) != 3 or group[1] != "=" or "." not in group[0] or "." not in group[2]:
            raise GrammarError(f"line {number}: bad constraint {' '.join(group)!r}")
        (left, lf), (right, rf) = group[0].split(".", 1), group[2].split(".", 1)
        if left != "^":
            _child_ref(left, rhs, number)
        _child_ref(right, rhs, number)
        constraints.append(Constraint(left, lf, right, rf))
    annotations = []
    for group in groups(sections["annotate"]):
        if len(group) != 3:
            raise GrammarError(f"line {number}: bad annotation {' '.join(group)!r}")
        child, function, domain = group
        low, _, high = domain.partition("..")
        high = high or low
        for ref in (child, low, high):
            _child_ref(ref, rhs, number)
        annotations.append(Annotation(child, function, (low, high)))
    return Rule(lhs, rhs, tuple(constraints), tuple(annotations), mal)


def parse_grammar(text: str) -> ProductionGrammar:
    """Read the line-oriented grammar format (see README)."""
    start = None
    grammar = ProductionGrammar(start="")
    for number, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        words = _GRAMMAR_TOKEN.findall(line)
        head, rest = words[0], words[1:]
        if head == "start" and len(rest) == 1:
            start = rest[0]
        elif head == "depth" and len(rest) == 1 and rest[0].isdigit():
            grammar.depth_bound = int(rest[0])
        elif head == "meta" and len(rest) >= 2:
            grammar.meta[rest[0]] = " ".join(_literal(w) if _is_literal(w) else w
                                             for w in rest[1:])
        elif head in ("rule", "malrule"):
            grammar.rules.append(_parse_rule(rest, number, head == "malrule"))
        elif head == "lex" and len(rest) >= 3 and _is_literal(rest[1]):
            features = []
            for pair in rest[3:]:
                name, eq, value = pair.partition("=")
                if not eq:
                    raise GrammarError(f"line {number}: bad feature {pair!r}")
                features.append((name, value))
            grammar.lexicon.setdefault(rest[0], []).append(
                LexEntry(_literal(rest[1]), rest[2], tuple(features)))
        else:
            raise GrammarError(f"line {number}: cannot parse {line!r}")
    if start is None:
        raise GrammarError("grammar has no start symbol")
    grammar.start = start
    validate_grammar(grammar)
    return grammar


def _symbol_depth(grammar: ProductionGrammar, symbol: str, stack: tuple, memo: dict) -> int:
    if _is_literal(symbol) or symbol in grammar.lexicon:
        return 0
    if symbol in memo:
        return memo[symbol]
    if symbol in stack:
        raise GrammarError("depth bound exceeded: cyclic rules through "
                           + " -> ".join(stack[stack.index(symbol):] + (symbol,)))
    rules = [r for r in grammar.rules if r.lhs == symbol]
    if not rules:
        raise GrammarError(f"symbol {symbol!r} has neither rules nor lexical entries")
    depth = 1 + max(_symbol_depth(grammar, child, stack + (symbol,), memo)
                    for rule in rules for child in rule.rhs)
    memo[symbol] = depth
    return depth


def validate_grammar(grammar: ProductionGrammar) -> None:
    for slot, entries in grammar.lexicon.items():
        if not entries:
            raise GrammarError(f"slot {slot!r} has no lexical entries")
        if any(r.lhs == slot for r in grammar.rules):
            raise GrammarError(f"{slot!r} is both a lexical slot and a nonterminal")
    depth = _symbol_depth(grammar, grammar.start, (), {})
    if depth > grammar.depth_bound:
        raise GrammarError(f"depth bound exceeded: derivations reach depth {depth}, "
                           f"bound is {grammar.depth_bound}")


@dataclass(frozen=True)
class _Derivation:
    tokens: tuple[str, ...]
    # (start, end, category, function, domain or None)
    spans: tuple[tuple, ...]
    features: tuple[tuple[str, str], ...]
    depth: int
    mal: bool


def _derive(grammar: ProductionGrammar, symbol: str, memo: dict) -> list[_Derivation]:
    if symbol in memo:
        return memo[symbol]
    if _is_literal(symbol):
        out = [_Derivation((_literal(symbol),), (), (), 0, False)]
    elif symbol in grammar.lexicon:
        out = []
        for entry in grammar.lexicon[symbol]:
            toks = tuple(tokenize(entry.tokens))
            out.append(_Derivation(toks, ((0, len(toks), entry.category, "", None),),
                                   entry.features, 0, False))
    else:
        out = []
        for rule in grammar.rules:
            if rule.lhs == symbol:
                out.extend(_apply_rule(grammar, rule, memo))
    memo[symbol] = out
    return out


def _apply_rule(grammar, rule: Rule, memo) -> list[_Derivation]:
    out = []
    options = [_derive(grammar, child, memo) for child in rule.rhs]
    for combo in itertools.product(*options):
        feats = [dict(c.features) for c in combo]
        parent: dict[str, str] = {}
        ok = True
        for con in rule.constraints:
            right = feats[_child_ref(con.right, rule.rhs, 0)].get(con.right_feature)
            if con.left == "^":
                if right is not None:
                    parent[con.left_feature] = right
                continue
            left = feats[_child_ref(con.left, rule.rhs, 0)].get(con.left_feature)
            if left is None or left != right:
                ok = False
                break
        if not ok:
            continue
        offsets = list(itertools.accumulate([0] + [len(c.tokens) for c in combo]))
        extent = [(offsets[i], offsets[i + 1]) for i in range(len(combo))]
        annotated = {}
        for ann in rule.annotations:
            child = _child_ref(ann.child, rule.rhs, 0)
            low = extent[_child_ref(ann.domain[0], rule.rhs, 0)][0]
            high = extent[_child_ref(ann.domain[1], rule.rhs, 0)][1]
            annotated[child] = (ann.function, (low, high))
        spans_out = []
        for i, child in enumerate(combo):
            shift = offsets[i]
            child_spans = [(a + shift, b + shift, cat, fn,
                            None if dom is None else (dom[0] + shift, dom[1] + shift))
                           for a, b, cat, fn, dom in child.spans]
            if i in annotated:
                function, domain = annotated[i]
                if len(child_spans) == 1 and child_spans[0][:2] == extent[i]:
                    a, b, cat, _, _ = child_spans[0]
                    child_spans = [(a, b, cat, function, domain)]
                else:
                    child_spans.insert(0, (*extent[i], rule.rhs[i], function, domain))
            spans_out.extend(child_spans)
        out.append(_Derivation(
            tuple(t for c in combo for t in c.tokens), tuple(spans_out),
            tuple(sorted(parent.items())), 1 + max(c.depth for c in combo),
            rule.mal or any(c.mal for c in combo)))
    return out


def expand_grammar(grammar: ProductionGrammar, limit: int) -> list[tuple[TestItem, list[AnalysisSpan]]]:
    """Enumerate annotated items, well-formed ones first, shallow derivations first.

    An ill-formed (malrule) derivation whose string is also derivable with
    ordinary rules is suppressed.  Items are numbered from 1.
    """
    if limit <= 0:
        return []
    validate_grammar(grammar)
    derivations = _derive(grammar, grammar.start, {})
    good = [d for d in derivations if not d.mal]
    bad = [d for d in derivations if d.mal]
    ordered = (sorted(good, key=lambda d: d.depth) + sorted(bad, key=lambda d: d.depth))
    meta = grammar.meta
    seen = set()
    out = []
    for d in ordered:
        text = " ".join(d.tokens)
        if text in seen:
            continue
        seen.add(text)
        item_id = len(out) + 1
        item = TestItem(item_id, meta.get("author", "genvar"), meta.get("date", "generated"),
                        meta.get("register", "formal"), meta.get("format", "none"),
                        meta.get("origin", "generated"), int(meta.get("difficulty", "1")),
                        ILLFORMED if d.mal else WELLFORMED,
                        meta.get("category", grammar.start), text, item_length(text),
                        meta.get("comment", ""))
        item_spans = []
        for a, b, cat, fn, dom in d.spans:
            da, db = dom if dom is not None else (a, b)
            item_spans.append(AnalysisSpan(item_id, a, b, derive_instance(text, a, b), cat,
                                           fn, da, db))
        out.append((item, item_spans))
        if len(out) >= limit:
            break
    return out


def expansion_database(db: Database, expanded) -> Database:
    """A copy of *db* (usually empty) with the expanded items added under fresh ids."""
    work = db.snapshot()
    for item, item_spans in expanded:
        row = item_to_row(item)
        row["i-id"] = None
        new_id = insert_record(work, "item", row)
        for span in item_spans:
            insert_record(work, "analysis", span_to_row(replace(span, item_id=new_id)))
    return work
