"""The query language: lexer, parser, planner and evaluator.

Grammar (whitespace-insensitive)::

    query       := "select" attribute+ ["where" disjunction]
    disjunction := conjunction ("|" conjunction)*
    conjunction := term ("&" term)*
    term        := "!" term | "(" disjunction ")" | attribute op literal
    op          := "=" | "!=" | "<" | "<=" | ">" | ">=" | "~" | "!~"
    literal     := integer | '"' characters '"'

Attributes carry their relation's prefix (``i-``, ``a-``, ``p-`` ...).  Joins
are implicit: the relations owning the mentioned attributes are connected
along the unique paths of the schema's join tree and natural-joined on the
tree-edge key attributes.  Results are deduplicated and totally ordered.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

from tsdb.pattern import PatternError, compile_pattern
from tsdb.storage import (
    Database,
    Schema,
    TsdbError,
    default_schema,
    encode_value,
    split_fields,
)

COMPARATORS = ("=", "!=", "<", "<=", ">", ">=", "~", "!~")
KEYWORDS = ("select", "where")


class QueryError(TsdbError):
    pass


class QuerySyntaxError(QueryError):
    def __init__(self, message: str, offset: int):
        super().__init__(f"syntax error at offset {offset}: {message}")
        self.offset = offset


class UnknownAttributeError(QueryError):
    def __init__(self, name: str, offset: Optional[int] = None):
        super().__init__(f"unknown attribute {name}")
        self.name = name
        self.offset = offset


class QueryTypeError(QueryError):
    pass


class InvalidPatternError(QueryError):
    def __init__(self, pattern: str, message: str):
        super().__init__(message)
        self.pattern = pattern


# -- AST --------------------------------------------------------------------


@dataclass(frozen=True)
class Compare:
    attribute: str
    op: str
    value: Union[int, str]


@dataclass(frozen=True)
class And:
    terms: tuple


@dataclass(frozen=True)
class Or:
    terms: tuple


@dataclass(frozen=True)
class Not:
    term: object


Condition = Union[Compare, And, Or, Not]


@dataclass(frozen=True)
class QueryAst:
    projection: tuple[str, ...]
    condition: Optional[Condition] = None

    def attributes(self) -> list[str]:
        out = list(self.projection)
        if self.condition is not None:
            out.extend(condition_attributes(self.condition))
        return out


def condition_attributes(node: Condition) -> list[str]:
    if isinstance(node, Compare):
        return [node.attribute]
    if isinstance(node, Not):
        return condition_attributes(node.term)
    return [a for term in node.terms for a in condition_attributes(term)]


# -- lexer ------------------------------------------------------------------

_TOKEN = re.compile(r"""
    (?P<space>\s+)
  | (?P<int>-?[0-9]+)
  | (?P<word>[A-Za-z][A-Za-z0-9_]*(?:-[A-Za-z0-9_]+)*)
  | (?P<op>!=|!~|<=|>=|[=<>~&|!()])
  | (?P<string>")
""", re.VERBOSE)


@dataclass(frozen=True)
class Token:
    kind: str
    text: str
    offset: int
    value: object = None


def _read_string(text: str, start: int) -> tuple[str, int]:
    out = []
    i = start + 1
    while i < len(text):
        char = text[i]
        if char == '"':
            return "".join(out), i + 1
        if char == "\\" and i + 1 < len(text) and text[i + 1] in '"\\':
            out.append(text[i + 1])
            i += 2
            continue
        out.append(char)
        i += 1
    raise QuerySyntaxError("unterminated string", start)


def tokenize(text: str) -> list[Token]:
    tokens = []
    i = 0
    while i < len(text):
        match = _TOKEN.match(text, i)
        if not match:
            raise QuerySyntaxError(f"unexpected character {text[i]!r}", i)
        kind = match.lastgroup
        if kind == "string":
            value, end = _read_string(text, i)
            tokens.append(Token("string", text[i:end], i, value))
            i = end
            continue
        if kind == "int":
            tokens.append(Token("int", match.group(), i, int(match.group())))
        elif kind == "word":
            tokens.append(Token("word", match.group(), i))
        elif kind == "op":
            tokens.append(Token("op", match.group(), i))
        i = match.end()
    tokens.append(Token("end", "", len(text)))
    return tokens


# -- parser -----------------------------------------------------------------


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def error(self, expected: str):
        token = self.current
        found = "end of input" if token.kind == "end" else repr(token.text)
        raise QuerySyntaxError(f"expected {expected}, found {found}", token.offset)

    def is_op(self, text: str) -> bool:
        return self.current.kind == "op" and self.current.text == text

    def is_attribute(self) -> bool:
        token = self.current
        return token.kind == "word" and token.text not in KEYWORDS

    def attribute(self) -> str:
        token = self.current
        if not self.is_attribute():
            self.error("attribute")
        if "-" not in token.text or token.text != token.text.lower():
            raise QuerySyntaxError(f"malformed attribute name {token.text!r}", token.offset)
        self.advance()
        self.offsets.setdefault(token.text, token.offset)
        return token.text

    def parse(self) -> QueryAst:
        self.offsets: dict[str, int] = {}
        if not (self.current.kind == "word" and self.current.text == "select"):
            self.error("'select'")
        self.advance()
        projection = [self.attribute()]
        while self.is_attribute():
            projection.append(self.attribute())
        condition = None
        if self.current.kind == "word" and self.current.text == "where":
            self.advance()
            condition = self.disjunction()
        if self.current.kind != "end":
            self.error("'where', attribute, or end of query" if condition is None
                       else "'&', '|' or end of query")
        return QueryAst(tuple(projection), condition)

    def disjunction(self):
        terms = [self.conjunction()]
        while self.is_op("|"):
            self.advance()
            terms.append(self.conjunction())
        return terms[0] if len(terms) == 1 else Or(tuple(terms))

    def conjunction(self):
        terms = [self.term()]
        while self.is_op("&"):
            self.advance()
            terms.append(self.term())
        return terms[0] if len(terms) == 1 else And(tuple(terms))

    def term(self):
        if self.is_op("!"):
            self.advance()
            return Not(self.term())
        if self.is_op("("):
            self.advance()
            inner = self.disjunction()
            if not self.is_op(")"):
                self.error("')'")
            self.advance()
            return inner
        if not self.is_attribute():
            self.error("condition")
        attribute = self.attribute()
        token = self.current
        if token.kind != "op" or token.text not in COMPARATORS:
            self.error("comparison operator")
        self.advance()
        literal = self.current
        if literal.kind not in ("int", "string"):
            self.error("integer or string literal")
        self.advance()
        return Compare(attribute, token.text, literal.value)


def _check_types(node, schema: Schema):
    if isinstance(node, Compare):
        type_ = schema.attribute_type(node.attribute)
        if node.op in ("~", "!~"):
            if not isinstance(node.value, str):
                raise QueryTypeError(f"{node.attribute} {node.op}: pattern must be a string")
        elif type_ == "integer" and not isinstance(node.value, int):
            raise QueryTypeError(f"{node.attribute} is an integer attribute, "
                                 f"got {node.value!r}")
        elif type_ != "integer" and not isinstance(node.value, str):
            raise QueryTypeError(f"{node.attribute} is a {type_} attribute, "
                                 f"got {node.value!r}")
    elif isinstance(node, Not):
        _check_types(node.term, schema)
    else:
        for term in node.terms:
            _check_types(term, schema)


def parse_query(text: str, schema: Optional[Schema] = None) -> QueryAst:
    """Parse and validate a query against *schema* (the default schema if None)."""
    schema = schema or default_schema()
    parser = _Parser(text)
    ast = parser.parse()
    for name in ast.attributes():
        if not schema.has_attribute(name):
            raise UnknownAttributeError(name, parser.offsets.get(name))
    if ast.condition is not None:
        _check_types(ast.condition, schema)
    return ast


def parse_projection(text: str) -> tuple[str, ...]:
    """Syntax-only parse, for clients that do not hold the schema."""
    return _Parser(text).parse().projection


# -- rendering --------------------------------------------------------------


def _render_literal(value) -> str:
    if isinstance(value, int):
        return str(value)
    return '"' + value.replace("\\", "\\\\").replace('"', '\\"') + '"'


def render_condition(node) -> str:
    if isinstance(node, Compare):
        return f"{node.attribute} {node.op} {_render_literal(node.value)}"
    if isinstance(node, Not):
        inner = render_condition(node.term)
        return "!" + (inner if isinstance(node.term, Not) else f"({inner})")
    glue = " & " if isinstance(node, And) else " | "
    parts = []
    for term in node.terms:
        text = render_condition(term)
        if isinstance(term, (And, Or)):
            text = f"({text})"
        parts.append(text)
    return glue.join(parts)


def render_query(ast: QueryAst) -> str:
    text = "select " + " ".join(ast.projection)
    if ast.condition is not None:
        text += " where " + render_condition(ast.condition)
    return text


# -- planning ---------------------------------------------------------------


@dataclass(frozen=True)
class JoinPlan:
    """Relations to join, in join order, with the edge used for each.

    ``joins[i]`` is ``(parent, attribute)`` for ``relations[i]`` or ``None``
    for the first relation.  ``filters`` maps a relation to the conjuncts
    that only mention its own attributes; ``residual`` is the rest.
    """

    relations: tuple[str, ...]
    joins: tuple
    projection: tuple[str, ...]
    condition: Optional[Condition]
    filters: dict = field(default_factory=dict, compare=False)
    residual: tuple = ()


def _tree(schema: Schema) -> tuple[dict, dict]:
    """Parent pointers and depths of the join tree rooted at the first relation."""
    root = schema.relation_names[0]
    parent = {root: None}
    depth = {root: 0}
    frontier = [root]
    while frontier:
        node = frontier.pop(0)
        for other, attr in schema.neighbours(node):
            if other not in parent:
                parent[other] = (node, attr)
                depth[other] = depth[node] + 1
                frontier.append(other)
    return parent, depth


def connect(schema: Schema, mentioned) -> set[str]:
    """Close a set of relations under the unique tree paths between them."""
    mentioned = set(mentioned)
    if len(mentioned) <= 1:
        return mentioned
    parent, depth = _tree(schema)
    nodes = set(mentioned)
    anchor = min(mentioned, key=lambda r: (depth[r], r))
    for rel in mentioned:
        a, b = rel, anchor
        path = {a, b}
        while a != b:
            if depth[a] >= depth[b]:
                a = parent[a][0]
            else:
                b = parent[b][0]
            path.update((a, b))
        nodes |= path
    return nodes


def _conjuncts(node) -> list:
    if node is None:
        return []
    if isinstance(node, And):
        return [c for term in node.terms for c in _conjuncts(term)]
    return [node]


def plan_query(ast: QueryAst, schema: Schema) -> JoinPlan:
    mentioned = {schema.owner(a).name for a in ast.attributes()}
    relations = connect(schema, mentioned)
    parent, depth = _tree(schema)
    order = {name: i for i, name in enumerate(schema.relation_names)}
    ordered = sorted(relations, key=lambda r: (depth[r], order[r]))
    joins = [None] + [parent[r] for r in ordered[1:]]
    filters: dict[str, list] = {}
    residual = []
    for conjunct in _conjuncts(ast.condition):
        owners = {schema.owner(a).name for a in condition_attributes(conjunct)}
        if len(owners) == 1:
            filters.setdefault(owners.pop(), []).append(conjunct)
        else:
            residual.append(conjunct)
    return JoinPlan(tuple(ordered), tuple(joins), ast.projection, ast.condition,
                    {k: tuple(v) for k, v in filters.items()}, tuple(residual))


# -- evaluation -------------------------------------------------------------


@dataclass(frozen=True)
class ResultTable:
    header: tuple[str, ...]
    rows: tuple[tuple, ...]
    types: tuple[str, ...] = ()

    def __len__(self):
        return len(self.rows)

    def render_delimited(self) -> str:
        types = self.types or ("string",) * len(self.header)
        return "".join("@".join(encode_value(v, t) for v, t in zip(row, types)) + "\n"
                       for row in self.rows)

    def render_table(self) -> str:
        types = self.types or ("string",) * len(self.header)
        cells = [[encode_value(v, t) if t != "string" else v.replace("\n", "\\n")
                  for v, t in zip(row, types)] for row in self.rows]
        widths = [max([len(h)] + [len(r[i]) for r in cells])
                  for i, h in enumerate(self.header)]
        lines = ["  ".join(h.ljust(w) for h, w in zip(self.header, widths)).rstrip(),
                 "  ".join("-" * w for w in widths)]
        for row in cells:
            lines.append("  ".join(c.ljust(w) for c, w in zip(row, widths)).rstrip())
        lines.append(f"({len(self.rows)} row{'s' if len(self.rows) != 1 else ''})")
        return "\n".join(lines) + "\n"

    @classmethod
    def from_delimited(cls, header, lines) -> "ResultTable":
        """Rebuild a table of string cells from delimited row lines."""
        return cls(tuple(header), tuple(tuple(split_fields(line)) for line in lines))


def _sort_key_value(value):
    return (-1, -1) if value is None else value


def sort_rows(rows, types) -> list[tuple]:
    """Ascending by the leftmost integer column, then the others in order."""
    lead = next((i for i, t in enumerate(types) if t == "integer"), None)

    def key(row):
        values = [_sort_key_value(v) for v in row]
        if lead is None:
            return tuple(values)
        return (values[lead],) + tuple(values[:lead]) + tuple(values[lead + 1:])

    return sorted(set(rows), key=key)


def _text(value) -> str:
    if isinstance(value, tuple):
        return f"{value[0]}:{value[1]}"
    if value is None:
        return ""
    return str(value)


def compile_condition(node, locate: Callable[[str], Callable]) -> Callable:
    """Build a predicate over a bound row; *locate* maps attribute -> getter."""
    if isinstance(node, And):
        parts = [compile_condition(t, locate) for t in node.terms]
        return lambda row: all(p(row) for p in parts)
    if isinstance(node, Or):
        parts = [compile_condition(t, locate) for t in node.terms]
        return lambda row: any(p(row) for p in parts)
    if isinstance(node, Not):
        inner = compile_condition(node.term, locate)
        return lambda row: not inner(row)
    get = locate(node.attribute)
    op, literal = node.op, node.value
    if op in ("~", "!~"):
        try:
            regex = compile_pattern(literal)
        except PatternError as exc:
            raise InvalidPatternError(literal, str(exc)) from None
        if op == "~":
            return lambda row: regex.search(_text(get(row))) is not None
        return lambda row: regex.search(_text(get(row))) is None
    if isinstance(literal, str):
        value_of = lambda row: _text(get(row))  # noqa: E731
    else:
        value_of = get
    compare = {
        "=": lambda a, b: a == b,
        "!=": lambda a, b: a != b,
        "<": lambda a, b: a < b,
        "<=": lambda a, b: a <= b,
        ">": lambda a, b: a > b,
        ">=": lambda a, b: a >= b,
    }[op]
    return lambda row: compare(value_of(row), literal)


def evaluate_query(plan: JoinPlan, db: Database) -> ResultTable:
    schema = db.schema
    slot = {name: i for i, name in enumerate(plan.relations)}

    def locate(attribute):
        owner = schema.owner(attribute)
        r, a = slot[owner.name], owner.index(attribute)
        return lambda row: row[r][a]

    def locate_single(attribute):
        a = schema.owner(attribute).index(attribute)
        return lambda record: record[a]

    sources = {}
    for name in plan.relations:
        records = db[name]
        conjuncts = plan.filters.get(name, ())
        if conjuncts:
            test = compile_condition(And(conjuncts), locate_single)
            records = [r for r in records if test(r)]
        sources[name] = records
    residual = compile_condition(And(plan.residual), locate) if plan.residual else None

    first = plan.relations[0]
    rows = [(r,) for r in sources[first]]
    for name, join in zip(plan.relations[1:], plan.joins[1:]):
        parent, attribute = join
        child_index = schema.relation(name).index(attribute)
        parent_slot = slot[parent]
        parent_index = schema.relation(parent).index(attribute)
        buckets: dict = {}
        for record in sources[name]:
            buckets.setdefault(record[child_index], []).append(record)
        rows = [row + (match,) for row in rows
                for match in buckets.get(row[parent_slot][parent_index], ())]
        if not rows:
            break
    if residual is not None:
        rows = [row for row in rows if residual(row)]
    getters = [locate(a) for a in plan.projection]
    projected = [tuple(g(row) for g in getters) for row in rows]
    types = tuple(schema.attribute_type(a) for a in plan.projection)
    return ResultTable(plan.projection, tuple(sort_rows(projected, types)), types)


def run_query(db: Database, text: str) -> ResultTable:
    ast = parse_query(text, db.schema)
    return evaluate_query(plan_query(ast, db.schema), db)


# -- test-suite instantiation -----------------------------------------------


def _phenomenon_closure(db: Database, seeds: set[int]) -> set[int]:
    """Ids of *seeds* plus every stored phenomenon their names lead to."""
    by_name = {row["p-name"]: row for row in db.rows("phenomenon")}
    by_id = {row["p-id"]: row for row in db.rows("phenomenon")}
    keep = set()
    stack = [pid for pid in seeds if pid in by_id]
    while stack:
        pid = stack.pop()
        if pid in keep:
            continue
        keep.add(pid)
        row = by_id[pid]
        for attr in ("p-supertypes", "p-presupposition"):
            for name in row[attr].split(","):
                target = by_name.get(name.strip())
                if target is not None:
                    stack.append(target["p-id"])
    return keep


def instantiate_testsuite(db: Database, ast: Optional[QueryAst]) -> Database:
    """Concrete test suite: items passing the condition plus all their dependents."""
    if ast is None or ast.condition is None:
        return db.snapshot()
    selector = QueryAst(("i-id",), ast.condition)
    table = evaluate_query(plan_query(selector, db.schema), db)
    survivors = {row[0] for row in table.rows}
    out = Database(db.language, db.schema, taxonomy=db.taxonomy)

    def keep(relation, test):
        names = db.schema.relation(relation).names
        out.records[relation] = [r for r in db[relation] if test(dict(zip(names, r)))]

    keep("item", lambda r: r["i-id"] in survivors)
    keep("analysis", lambda r: r["i-id"] in survivors)
    keep("item-phenomenon", lambda r: r["i-id"] in survivors)
    link_ids = set(out.column("item-phenomenon", "ip-id"))
    keep("parameter", lambda r: r["ip-id"] in link_ids)
    pids = _phenomenon_closure(db, set(out.column("item-phenomenon", "p-id")))
    keep("phenomenon", lambda r: r["p-id"] in pids)

    wellformed = {r["i-id"] for r in out.rows("item") if r["i-wf"] == 1}
    members: dict[int, set] = {}
    for row in db.rows("set"):
        if row["i-id"] in survivors:
            members.setdefault(row["s-id"], set()).add(row["i-id"])
    good_sets = {sid for sid, m in members.items() if len(m) >= 2 and m & wellformed}
    keep("set", lambda r: r["s-id"] in good_sets and r["i-id"] in survivors)
    keep("run", lambda r: True)
    keep("result", lambda r: r["i-id"] in survivors)
    # Any relations a user added to the schema are copied unchanged.
    fixed = {"item", "analysis", "item-phenomenon", "parameter", "phenomenon", "set",
             "run", "result"}
    for name in db.schema.relation_names:
        if name not in fixed:
            out.records[name] = list(db[name])
    return out

