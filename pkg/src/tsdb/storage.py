"""Relational kernel: schema registry, flat-file persistence, CRUD, consistency.

A database home directory holds the schema file ``relations``, an optional
``taxonomy`` file (abstract phenomenon names, one per line), and one
sub-directory per language with one data file per relation.  Data files hold
one record per line with fields joined by ``@``; see :func:`escape`
for the escaping rules.
"""

from __future__ import annotations

import os
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Callable, Mapping, Optional, Sequence, Union

from tsdb.model import (
    DEFAULT_TAXONOMY,
    WELLFORMED,
    AnalysisSpan,
    ItemPhenomenonLink,
    Phenomenon,
    Result,
    Run,
    TestItem,
    TestSet,
    Violation,
    find_cycles,
    join_names,
    split_names,
    validate_item,
    validate_span,
)

SCHEMA_FILE = "relations"
TAXONOMY_FILE = "taxonomy"
LANGUAGES = ("en", "fr", "de")
TYPES = ("integer", "string", "position")
DELIMITER = "@"
BUNDLE_HEADER = "\\relation "

Value = Union[int, str, tuple, None]


class TsdbError(Exception):
    """Base class for all errors raised by tsdb."""


class SchemaError(TsdbError):
    pass


class StorageError(TsdbError):
    """A data file or record could not be read or written."""

    def __init__(self, message, relation=None, line=None):
        where = ""
        if relation is not None:
            where = relation if line is None else f"{relation}:{line}"
            where += ": "
        super().__init__(where + message)
        self.relation = relation
        self.line = line


class DuplicateKeyError(StorageError):
    pass


# -- schema -----------------------------------------------------------------


def attribute_prefix(name: str) -> str:
    return name.split("-", 1)[0]


@dataclass(frozen=True)
class Attribute:
    name: str
    type: str
    key: bool = False


@dataclass(frozen=True)
class RelationDecl:
    name: str
    prefix: str
    attributes: tuple[Attribute, ...]

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes)

    @property
    def keys(self) -> tuple[str, ...]:
        return tuple(a.name for a in self.attributes if a.key)

    def index(self, attribute: str) -> int:
        return self.names.index(attribute)

    def attribute(self, name: str) -> Attribute:
        return self.attributes[self.index(name)]

    @property
    def allocating_key(self) -> Optional[str]:
        """The key attribute that gets auto-allocated ids, if any."""
        keys = [a for a in self.attributes if a.key]
        if len(keys) == 1 and keys[0].type == "integer":
            return keys[0].name
        return None


@dataclass(frozen=True)
class JoinEdge:
    left: str
    right: str
    attribute: str


@dataclass(frozen=True)
class Schema:
    relations: tuple[RelationDecl, ...]
    join_edges: tuple[JoinEdge, ...]

    def __post_init__(self):
        self._check()

    def relation(self, name: str) -> RelationDecl:
        for rel in self.relations:
            if rel.name == name:
                return rel
        raise SchemaError(f"unknown relation {name!r}")

    @property
    def relation_names(self) -> tuple[str, ...]:
        return tuple(r.name for r in self.relations)

    def owner(self, attribute: str) -> RelationDecl:
        """The relation whose prefix the attribute carries."""
        prefix = attribute_prefix(attribute)
        for rel in self.relations:
            if rel.prefix == prefix and attribute in rel.names:
                return rel
        raise SchemaError(f"unknown attribute {attribute!r}")

    def has_attribute(self, attribute: str) -> bool:
        try:
            self.owner(attribute)
        except SchemaError:
            return False
        return True

    @property
    def attributes(self) -> list[Attribute]:
        """All owned attributes, in declaration order."""
        return [a for r in self.relations for a in r.attributes
                if attribute_prefix(a.name) == r.prefix]

    def attribute_type(self, attribute: str) -> str:
        return self.owner(attribute).attribute(attribute).type

    def neighbours(self, relation: str) -> list[tuple[str, str]]:
        out = []
        for edge in self.join_edges:
            if edge.left == relation:
                out.append((edge.right, edge.attribute))
            elif edge.right == relation:
                out.append((edge.left, edge.attribute))
        return out

    def referenced_side(self, edge: JoinEdge) -> tuple[str, str]:
        """``(owner, referrer)`` relation names for a join edge."""
        owner = self.owner(edge.attribute).name
        other = edge.right if owner == edge.left else edge.left
        return owner, other

    def _check(self):
        names = [r.name for r in self.relations]
        if len(set(names)) != len(names):
            raise SchemaError("relation names must be unique")
        prefixes = [r.prefix for r in self.relations]
        if len(set(prefixes)) != len(prefixes):
            raise SchemaError("relation prefixes must be distinct")
        owned: dict[str, str] = {}
        for rel in self.relations:
            if len(set(rel.names)) != len(rel.names):
                raise SchemaError(f"{rel.name}: duplicate attribute")
            for attr in rel.attributes:
                if attr.type not in TYPES:
                    raise SchemaError(f"{rel.name}: {attr.name}: unknown type {attr.type!r}")
                if attribute_prefix(attr.name) == rel.prefix:
                    if attr.name in owned:
                        raise SchemaError(f"attribute {attr.name!r} declared twice")
                    owned[attr.name] = rel.name
        by_name = {r.name: r for r in self.relations}
        for rel in self.relations:
            for attr in rel.attributes:
                if attr.name not in owned:
                    raise SchemaError(
                        f"{rel.name}: {attr.name!r} is neither owned here nor a "
                        f"foreign key into another relation")
                home = by_name[owned[attr.name]].attribute(attr.name)
                if home.type != attr.type:
                    raise SchemaError(f"{rel.name}: {attr.name!r} type differs from owner")
        for edge in self.join_edges:
            for end in (edge.left, edge.right):
                if end not in by_name:
                    raise SchemaError(f"join edge names unknown relation {end!r}")
                if edge.attribute not in by_name[end].names:
                    raise SchemaError(f"join attribute {edge.attribute!r} missing in {end}")
            if owned.get(edge.attribute) not in (edge.left, edge.right):
                raise SchemaError(f"join attribute {edge.attribute!r} is not owned by "
                                  f"either {edge.left} or {edge.right}")
        if self.relations:
            if len(self.join_edges) != len(self.relations) - 1:
                raise SchemaError("join graph must be a tree")
            seen = {names[0]}
            frontier = [names[0]]
            while frontier:
                node = frontier.pop()
                for other, _ in self.neighbours(node):
                    if other not in seen:
                        seen.add(other)
                        frontier.append(other)
            if len(seen) != len(names):
                raise SchemaError("join graph must be connected")


_ATTRIBUTE_LINE = re.compile(r"^\s+(\S+)\s+:(\w+)(\s+:key)?\s*$")


def parse_schema(text: str) -> Schema:
    relations: list[RelationDecl] = []
    edges: list[JoinEdge] = []
    current: Optional[list] = None

    def close():
        if current is not None:
            name, prefix, attrs = current
            relations.append(RelationDecl(name, prefix, tuple(attrs)))

    for number, line in enumerate(text.splitlines(), 1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        if line[0].isspace():
            if current is None:
                raise SchemaError(f"line {number}: attribute outside a relation")
            match = _ATTRIBUTE_LINE.match(line)
            if not match:
                raise SchemaError(f"line {number}: malformed attribute {line.strip()!r}")
            current[2].append(Attribute(match.group(1), match.group(2), bool(match.group(3))))
            continue
        words = line.split()
        if words[0] == "join":
            if len(words) != 4:
                raise SchemaError(f"line {number}: expected 'join REL REL ATTRIBUTE'")
            edges.append(JoinEdge(*words[1:]))
        elif len(words) == 2:
            close()
            current = [words[0], words[1], []]
        else:
            raise SchemaError(f"line {number}: expected 'RELATION PREFIX'")
    close()
    return Schema(tuple(relations), tuple(edges))


def render_schema(schema: Schema) -> str:
    lines = []
    for rel in schema.relations:
        lines.append(f"{rel.name} {rel.prefix}")
        for attr in rel.attributes:
            lines.append(f"  {attr.name} :{attr.type}" + (" :key" if attr.key else ""))
        lines.append("")
    lines.extend(f"join {e.left} {e.right} {e.attribute}" for e in schema.join_edges)
    return "\n".join(lines) + "\n"


def default_schema_text() -> str:
    return resources.files("tsdb").joinpath("data", SCHEMA_FILE).read_text("utf-8")


def default_schema() -> Schema:
    return parse_schema(default_schema_text())


def sample_home() -> Path:
    """Directory of the bundled sample database (language ``fr``)."""
    return Path(str(resources.files("tsdb").joinpath("data", "sample")))


# -- field encoding ---------------------------------------------------------

_INTEGER = re.compile(r"(0|-?[1-9][0-9]*)\Z")
_POSITION = re.compile(r"(0|[1-9][0-9]*):(0|[1-9][0-9]*)\Z")


def escape(text: str) -> str:
    return text.replace("\\", "\\\\").replace("@", "\\@").replace("\n", "\\n")


def encode_value(value: Value, type_: str) -> str:
    if type_ == "integer":
        return str(-1 if value is None else value)
    if type_ == "position":
        return "" if value is None else f"{value[0]}:{value[1]}"
    return escape("" if value is None else value)


def encode_record(record: Sequence[Value], decl: RelationDecl) -> str:
    return DELIMITER.join(encode_value(v, a.type) for v, a in zip(record, decl.attributes))


def split_fields(line: str) -> list[str]:
    """Split a record line on unescaped ``@`` and undo the escapes."""
    fields = []
    current = []
    chars = iter(line)
    for char in chars:
        if char == "\\":
            nxt = next(chars, None)
            if nxt == "n":
                current.append("\n")
            elif nxt in ("\\", "@"):
                current.append(nxt)
            else:
                raise ValueError(f"invalid escape \\{nxt or ''}")
        elif char == DELIMITER:
            fields.append("".join(current))
            current = []
        else:
            current.append(char)
    fields.append("".join(current))
    return fields


def decode_value(text: str, type_: str) -> Value:
    if type_ == "integer":
        if not _INTEGER.match(text):
            raise ValueError(f"{text!r} is not an integer")
        return int(text)
    if type_ == "position":
        if text == "":
            return None
        match = _POSITION.match(text)
        if not match:
            raise ValueError(f"{text!r} is not a position")
        return (int(match.group(1)), int(match.group(2)))
    return text


def decode_record(line: str, decl: RelationDecl) -> tuple:
    fields = split_fields(line)
    if len(fields) != len(decl.attributes):
        raise ValueError(f"expected {len(decl.attributes)} fields, found {len(fields)}")
    values = []
    for text, attr in zip(fields, decl.attributes):
        try:
            values.append(decode_value(text, attr.type))
        except ValueError as exc:
            raise ValueError(f"{attr.name}: {exc}") from None
    return tuple(values)


def coerce_value(value: Value, type_: str) -> Value:
    """Check that a Python value fits an attribute type; returns it unchanged."""
    if type_ == "integer":
        if value is None:
            return -1
        if not isinstance(value, int) or isinstance(value, bool):
            raise TypeError(f"expected integer, got {value!r}")
    elif type_ == "position":
        if value is None:
            return None
        if (not isinstance(value, tuple) or len(value) != 2
                or not all(isinstance(v, int) and v >= 0 for v in value)):
            raise TypeError(f"expected (start, end) position, got {value!r}")
    else:
        if value is None:
            return ""
        if not isinstance(value, str):
            raise TypeError(f"expected string, got {value!r}")
    return value


# -- database ---------------------------------------------------------------


@dataclass
class Database:
    """In-memory database: one ordered record list per relation.

    Records are tuples in attribute order.  Mutation requires exclusive
    access; :meth:`snapshot` gives an independent copy for readers.
    """

    language: str
    schema: Schema
    records: dict[str, list[tuple]] = field(default_factory=dict)
    taxonomy: tuple[str, ...] = DEFAULT_TAXONOMY

    def __post_init__(self):
        for name in self.schema.relation_names:
            self.records.setdefault(name, [])

    def __getitem__(self, relation: str) -> list[tuple]:
        if relation not in self.records:
            raise SchemaError(f"unknown relation {relation!r}")
        return self.records[relation]

    def snapshot(self) -> "Database":
        return Database(self.language, self.schema,
                        {k: list(v) for k, v in self.records.items()}, self.taxonomy)

    def rows(self, relation: str) -> list[dict]:
        names = self.schema.relation(relation).names
        return [dict(zip(names, r)) for r in self[relation]]

    def column(self, relation: str, attribute: str) -> list:
        i = self.schema.relation(relation).index(attribute)
        return [r[i] for r in self[relation]]

    def next_id(self, relation: str, attribute: Optional[str] = None) -> int:
        attribute = attribute or self.schema.relation(relation).allocating_key
        if attribute is None:
            raise SchemaError(f"{relation} has no single integer key")
        return max([0] + self.column(relation, attribute)) + 1

    def sizes(self) -> dict[str, int]:
        return {name: len(self.records[name]) for name in self.schema.relation_names}

    def __eq__(self, other):
        if not isinstance(other, Database):
            return NotImplemented
        return (self.language == other.language and self.schema == other.schema
                and self.records == other.records and self.taxonomy == other.taxonomy)


def new_database(language: str, schema: Optional[Schema] = None) -> Database:
    return Database(language, schema or default_schema())


def _check_language(language: str):
    if language not in LANGUAGES:
        raise StorageError(f"unknown language {language!r} (expected one of "
                           f"{', '.join(LANGUAGES)})")


def _key_of(record: Sequence, decl: RelationDecl):
    idx = [decl.index(k) for k in decl.keys]
    return tuple(record[i] for i in idx) if idx else None


def load_database(home: Union[str, os.PathLike], language: str) -> Database:
    home = Path(home)
    _check_language(language)
    schema_path = home / SCHEMA_FILE
    if not schema_path.is_file():
        raise StorageError(f"missing schema file {schema_path}")
    schema = parse_schema(schema_path.read_text("utf-8"))
    taxonomy = DEFAULT_TAXONOMY
    if (home / TAXONOMY_FILE).is_file():
        text = (home / TAXONOMY_FILE).read_text("utf-8")
        taxonomy = tuple(line for line in text.split("\n") if line)
    db = Database(language, schema, taxonomy=taxonomy)
    for decl in schema.relations:
        path = home / language / decl.name
        if not path.is_file():
            continue
        text = path.read_text("utf-8")
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        seen = set()
        target = db.records[decl.name]
        for number, line in enumerate(lines, 1):
            try:
                record = decode_record(line, decl)
            except ValueError as exc:
                raise StorageError(str(exc), decl.name, number) from None
            key = _key_of(record, decl)
            if key is not None:
                if key in seen:
                    raise DuplicateKeyError(f"duplicate key {key!r}", decl.name, number)
                seen.add(key)
            target.append(record)
    return db


def store_database(db: Database, home: Union[str, os.PathLike]) -> None:
    home = Path(home)
    _check_language(db.language)
    try:
        (home / db.language).mkdir(parents=True, exist_ok=True)
        (home / SCHEMA_FILE).write_text(render_schema(db.schema), "utf-8")
        (home / TAXONOMY_FILE).write_text("".join(n + "\n" for n in db.taxonomy), "utf-8")
        for decl in db.schema.relations:
            lines = "".join(encode_record(r, decl) + "\n" for r in db[decl.name])
            (home / db.language / decl.name).write_bytes(lines.encode("utf-8"))
    except OSError as exc:
        raise StorageError(f"cannot write database: {exc}") from exc


def export_bundle(db: Database) -> str:
    """All records as one text: ``\\relation NAME`` headers then record lines.

    A header can never be mistaken for a record because ``\\r`` is not a
    valid escape inside a field.
    """
    parts = []
    for decl in db.schema.relations:
        parts.append(BUNDLE_HEADER + decl.name + "\n")
        parts.extend(encode_record(r, decl) + "\n" for r in db[decl.name])
    return "".join(parts)


def parse_bundle(text: str, schema: Schema) -> dict[str, list[tuple]]:
    out: dict[str, list[tuple]] = {}
    decl = None
    lines = text.split("\n")
    if lines and lines[-1] == "":
        lines.pop()
    for number, line in enumerate(lines, 1):
        if line.startswith(BUNDLE_HEADER):
            try:
                decl = schema.relation(line[len(BUNDLE_HEADER):].strip())
            except SchemaError as exc:
                raise StorageError(str(exc), None, number) from None
            out.setdefault(decl.name, [])
            continue
        if decl is None:
            raise StorageError("record before any relation header", None, number)
        try:
            out[decl.name].append(decode_record(line, decl))
        except ValueError as exc:
            raise StorageError(str(exc), decl.name, number) from None
    return out


def import_bundle(db: Database, text: str) -> dict[str, int]:
    """Merge a bundle into *db*; all or nothing.  Returns per-relation counts."""
    incoming = parse_bundle(text, db.schema)
    work = db.snapshot()
    counts = {}
    for name, records in incoming.items():
        for record in records:
            insert_record(work, name, record)
        counts[name] = len(records)
    db.records = work.records
    return counts


# -- CRUD -------------------------------------------------------------------


def insert_record(db: Database, relation: str,
                  record: Union[Mapping[str, Value], Sequence[Value]]) -> Optional[object]:
    """Append one record and return its key (the allocated id for auto keys).

    *record* is either a full tuple in attribute order or a mapping from
    attribute names to values; attributes missing from a mapping take the
    missing-value defaults (``-1`` / ``""``), except an absent single
    integer key, which is allocated as one more than the current maximum.
    """
    decl = db.schema.relation(relation)
    auto = decl.allocating_key
    if isinstance(record, Mapping):
        unknown = set(record) - set(decl.names)
        if unknown:
            raise SchemaError(f"{relation}: unknown attribute(s) {', '.join(sorted(unknown))}")
        values = [record.get(a.name) for a in decl.attributes]
        if auto is not None and record.get(auto) is None:
            values[decl.index(auto)] = db.next_id(relation)
    else:
        values = list(record)
        if len(values) != len(decl.attributes):
            raise StorageError(f"expected {len(decl.attributes)} fields, got {len(values)}",
                               relation)
    try:
        values = [coerce_value(v, a.type) for v, a in zip(values, decl.attributes)]
    except TypeError as exc:
        raise StorageError(str(exc), relation) from None
    for attr, value in zip(decl.attributes, values):
        if attr.type == "string" and not isinstance(value, str):
            raise StorageError(f"{attr.name}: expected string", relation)
    new = tuple(values)
    key = _key_of(new, decl)
    if key is not None:
        existing = {_key_of(r, decl) for r in db[relation]}
        if key in existing:
            raise DuplicateKeyError(f"duplicate key {key if len(key) > 1 else key[0]!r}",
                                    relation)
    db[relation].append(new)
    if key is None:
        return None
    return key[0] if len(key) == 1 else key


def delete_records(db: Database, relation: str, predicate: Callable[[dict], bool]) -> int:
    """Remove records for which ``predicate(row_dict)`` holds; no cascading."""
    decl = db.schema.relation(relation)
    kept = []
    removed = 0
    for record in db[relation]:
        if predicate(dict(zip(decl.names, record))):
            removed += 1
        else:
            kept.append(record)
    db.records[relation] = kept
    return removed


# -- typed views ------------------------------------------------------------


def item_from_row(row: Mapping) -> TestItem:
    return TestItem(row["i-id"], row["i-author"], row["i-date"], row["i-register"],
                    row["i-format"], row["i-origin"], row["i-difficulty"], row["i-wf"],
                    row["i-category"], row["i-input"], row["i-length"], row["i-comment"])


def item_to_row(item: TestItem) -> dict:
    return {"i-id": item.item_id, "i-author": item.author, "i-date": item.date,
            "i-register": item.register, "i-format": item.format, "i-origin": item.origin,
            "i-difficulty": item.difficulty, "i-wf": item.wellformedness,
            "i-category": item.category, "i-input": item.input, "i-length": item.length,
            "i-comment": item.comment}


def span_from_row(row: Mapping) -> AnalysisSpan:
    pos = row["a-position"] or (-1, -1)
    dom = row["a-domain"] or (-1, -1)
    return AnalysisSpan(row["i-id"], pos[0], pos[1], row["a-instance"], row["a-category"],
                        row["a-function"], dom[0], dom[1])


def span_to_row(span: AnalysisSpan) -> dict:
    return {"i-id": span.item_id, "a-position": (span.start, span.end),
            "a-instance": span.instance, "a-category": span.category,
            "a-function": span.function,
            "a-domain": (span.domain_start, span.domain_end)}


def phenomenon_from_row(row: Mapping) -> Phenomenon:
    return Phenomenon(row["p-id"], row["p-name"], tuple(split_names(row["p-supertypes"])),
                      tuple(split_names(row["p-presupposition"])), row["p-restrictions"],
                      row["p-interaction"], row["p-purpose"], row["p-author"],
                      row["p-date"], row["p-comment"])


def phenomenon_to_row(p: Phenomenon) -> dict:
    return {"p-id": p.phenomenon_id, "p-name": p.name,
            "p-supertypes": join_names(p.supertypes),
            "p-presupposition": join_names(p.presupposition),
            "p-restrictions": p.restrictions, "p-interaction": p.interaction,
            "p-purpose": p.purpose, "p-author": p.author, "p-date": p.date,
            "p-comment": p.comment}


def items(db: Database) -> list[TestItem]:
    return [item_from_row(r) for r in db.rows("item")]


def get_item(db: Database, item_id: int) -> TestItem:
    for row in db.rows("item"):
        if row["i-id"] == item_id:
            return item_from_row(row)
    raise KeyError(item_id)


def spans(db: Database, item_id: Optional[int] = None) -> list[AnalysisSpan]:
    return [span_from_row(r) for r in db.rows("analysis")
            if item_id is None or r["i-id"] == item_id]


def phenomena(db: Database) -> list[Phenomenon]:
    return [phenomenon_from_row(r) for r in db.rows("phenomenon")]


def links(db: Database, item_id: Optional[int] = None) -> list[ItemPhenomenonLink]:
    params: dict[int, list] = {}
    for row in db.rows("parameter"):
        params.setdefault(row["ip-id"], []).append((row["par-name"], row["par-value"]))
    return [ItemPhenomenonLink(r["ip-id"], r["i-id"], r["p-id"],
                               tuple(params.get(r["ip-id"], ())))
            for r in db.rows("item-phenomenon")
            if item_id is None or r["i-id"] == item_id]


def member_sets(db: Database) -> list[TestSet]:
    members: dict[int, list] = {}
    for row in db.rows("set"):
        members.setdefault(row["s-id"], []).append((row["s-position"], row["i-id"]))
    return [TestSet(sid, tuple(i for _, i in sorted(m))) for sid, m in members.items()]


def runs(db: Database) -> list[Run]:
    return [Run(r["r-id"], r["r-application"], r["r-date"], r["r-environment"],
                r["r-comment"]) for r in db.rows("run")]


def results(db: Database, run_id: Optional[int] = None) -> list[Result]:
    return [Result(r["r-id"], r["i-id"], r["o-accepted"], r["o-readings"], r["o-time"],
                   r["o-output"], r["o-flags"])
            for r in db.rows("result") if run_id is None or r["r-id"] == run_id]


def insert_item(db: Database, item: TestItem, allocate: bool = False) -> int:
    row = item_to_row(item)
    if allocate:
        row["i-id"] = None
    return insert_record(db, "item", row)


# -- consistency ------------------------------------------------------------


def _type_violations(db: Database) -> list[Violation]:
    found = []
    for decl in db.schema.relations:
        for number, record in enumerate(db[decl.name], 1):
            if len(record) != len(decl.attributes):
                found.append(Violation("arity", "*", f"record {number} has {len(record)} "
                                       f"fields", decl.name, number))
                continue
            for value, attr in zip(record, decl.attributes):
                try:
                    coerce_value(value, attr.type)
                except TypeError as exc:
                    found.append(Violation("type", attr.name, str(exc), decl.name, number))
    return found


def check_consistency(db: Database) -> list[Violation]:
    """Every record-level and cross-record problem in *db*, in a stable order."""
    found = _type_violations(db)
    if found:
        return found
    schema = db.schema

    for decl in schema.relations:
        if not decl.keys:
            continue
        seen = set()
        for record in db[decl.name]:
            key = _key_of(record, decl)
            if key in seen:
                found.append(Violation("duplicate-key", ",".join(decl.keys),
                                       f"key {key!r} occurs more than once", decl.name, key))
            seen.add(key)

    for edge in schema.join_edges:
        owner, referrer = schema.referenced_side(edge)
        present = set(db.column(owner, edge.attribute))
        for value in db.column(referrer, edge.attribute):
            if value not in present:
                found.append(Violation("dangling-reference", edge.attribute,
                                       f"{value!r} has no {owner} record", referrer, value))

    item_by_id = {}
    for item in items(db):
        item_by_id[item.item_id] = item
        found.extend(validate_item(item))
    for span in spans(db):
        if span.item_id in item_by_id:
            found.extend(validate_span(span, item_by_id[span.item_id]))

    pheno = phenomena(db)
    names = {p.name for p in pheno}
    if len(names) != len(pheno):
        found.append(Violation("duplicate-name", "p-name", "phenomenon names must be unique",
                               "phenomenon"))
    known = names | set(db.taxonomy)
    for kind, attr in (("supertype", "p-supertypes"), ("presupposition", "p-presupposition")):
        graph = {}
        for p in pheno:
            targets = list(getattr(p, "supertypes" if kind == "supertype" else kind))
            for target in targets:
                if target not in known:
                    found.append(Violation("unresolved-" + kind, attr,
                                           f"{target!r} is not a known phenomenon",
                                           "phenomenon", p.phenomenon_id))
            graph.setdefault(p.name, []).extend(targets)
        for cycle in find_cycles(graph):
            found.append(Violation(kind + "-cycle", attr, " -> ".join(cycle), "phenomenon"))

    pairs = set()
    for row in db.rows("item-phenomenon"):
        pair = (row["i-id"], row["p-id"])
        if pair in pairs:
            found.append(Violation("duplicate-link", "p-id", f"item {pair[0]} linked to "
                                   f"phenomenon {pair[1]} twice", "item-phenomenon",
                                   row["ip-id"]))
        pairs.add(pair)

    for test_set in member_sets(db):
        if len(test_set.item_ids) < 2:
            found.append(Violation("set-size", "s-id", f"set has {len(test_set.item_ids)} "
                                   "member(s), needs at least 2", "set", test_set.set_id))
        members = [item_by_id[i] for i in test_set.item_ids if i in item_by_id]
        if not any(m.wellformedness == WELLFORMED for m in members):
            found.append(Violation("set-positive", "s-id", "set has no well-formed member",
                                   "set", test_set.set_id))

    for result in results(db):
        if result.accepted not in (0, 1):
            found.append(Violation("accepted-code", "o-accepted", f"{result.accepted} not "
                                   "in {0, 1}", "result", (result.run_id, result.item_id)))
        if result.readings < 0 or (result.accepted == 0 and result.readings != 0):
            found.append(Violation("readings", "o-readings", "readings must be >= 0 and 0 "
                                   "for rejected items", "result",
                                   (result.run_id, result.item_id)))
        if result.time_ms < -1:
            found.append(Violation("time", "o-time", f"{result.time_ms} < -1", "result",
                                   (result.run_id, result.item_id)))
    return found
