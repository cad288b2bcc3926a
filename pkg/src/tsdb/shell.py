"""Interactive command shell and one-shot query runner.

Input lines are either queries or meta-commands starting with a backslash::

    \\relations            list relations
    \\describe REL         list the attributes of REL
    \\language CODE        switch to the database of another language
    \\import FILE          merge a bundle file (in memory until \\export)
    \\export [FILE]        write a bundle file, or save to the home directory
    \\check                run the consistency checker
    \\insert REL           add a record field by field
    \\history              show the command history
    \\help                 show this list
    \\quit                 leave the shell
"""

from __future__ import annotations

import os
import sys
from dataclasses import dataclass
from pathlib import Path
from typing import Optional, TextIO

from tsdb.model import item_length, validate_item, validate_span
from tsdb.query import KEYWORDS, QueryError, run_query
from tsdb.storage import (
    Database,
    StorageError,
    TsdbError,
    check_consistency,
    coerce_value,
    decode_value,
    encode_value,
    export_bundle,
    get_item,
    import_bundle,
    insert_record,
    item_from_row,
    load_database,
    span_from_row,
    store_database,
)

HISTORY_FILE = ".tsdb_history"
META_COMMANDS = ("\\relations", "\\describe", "\\language", "\\import", "\\export",
                 "\\check", "\\insert", "\\history", "\\help", "\\quit")
ABORT = "\\abort"


@dataclass(frozen=True)
class ShellCommand:
    kind: str
    argument: str = ""


def parse_command(line: str) -> Optional[ShellCommand]:
    """Classify an input line; None for blank lines."""
    text = line.strip()
    if not text:
        return None
    if not text.startswith("\\"):
        return ShellCommand("query", text)
    name, _, argument = text[1:].partition(" ")
    aliases = {"q": "quit", "exit": "quit", "h": "help", "?": "help"}
    return ShellCommand(aliases.get(name, name), argument.strip())


class _Aborted(Exception):
    pass


class Shell:
    prompt = "tsdb> "

    def __init__(self, home, language: str, db: Optional[Database] = None,
                 stdin: TextIO = None, stdout: TextIO = None, stderr: TextIO = None,
                 interactive: Optional[bool] = None, history_file=None):
        self.home = Path(home)
        self.language = language
        self.db = db if db is not None else load_database(self.home, language)
        self.stdin = stdin or sys.stdin
        self.stdout = stdout or sys.stdout
        self.stderr = stderr or sys.stderr
        if interactive is None:
            interactive = self.stdin is sys.stdin and sys.stdin.isatty()
        self.interactive = interactive
        self.history: list[str] = []
        self.history_file = Path(history_file) if history_file else self.home / HISTORY_FILE
        self.last_inserted: dict[str, dict] = {}
        self.readline = None

    # -- i/o ----------------------------------------------------------------

    def write(self, text: str):
        self.stdout.write(text)
        if not text.endswith("\n"):
            self.stdout.write("\n")

    def error(self, text: str):
        self.stderr.write(f"error: {text}\n")

    def read_line(self, prompt: str) -> Optional[str]:
        if self.interactive:
            try:
                return input(prompt)
            except EOFError:
                return None
        line = self.stdin.readline()
        if not line:
            return None
        return line.rstrip("\n")

    def remember(self, line: str):
        self.history.append(line)
        if self.readline is None:
            try:
                with open(self.history_file, "a", encoding="utf-8") as handle:
                    handle.write(line.replace("\n", " ") + "\n")
            except OSError:
                pass

    # -- completion ---------------------------------------------------------

    def vocabulary(self, line: str) -> list[str]:
        words = line.split()
        if words and words[0] in ("\\describe", "\\insert") and (
                len(words) == 1 or (len(words) == 2 and not line.endswith(" "))):
            return list(self.db.schema.relation_names)
        if line.lstrip().startswith("\\") and len(words) <= 1 and not line.endswith(" "):
            return list(META_COMMANDS)
        return list(KEYWORDS) + [a.name for a in self.db.schema.attributes]

    def completions(self, line: str, text: str) -> list[str]:
        return sorted(w for w in set(self.vocabulary(line)) if w.startswith(text))

    def _complete(self, text, state):
        line = self.readline.get_line_buffer()[:self.readline.get_endidx()]
        options = self.completions(line, text)
        return options[state] if state < len(options) else None

    def _setup_readline(self):
        try:
            import readline
        except ImportError:
            return
        self.readline = readline
        readline.set_completer(self._complete)
        readline.set_completer_delims(" \t()=!<>~&|\"")
        readline.parse_and_bind("tab: complete")
        try:
            readline.read_history_file(self.history_file)
        except OSError:
            pass

    def _save_readline(self):
        if self.readline is not None:
            try:
                self.readline.set_history_length(1000)
                self.readline.write_history_file(self.history_file)
            except OSError:
                pass

    # -- loop ---------------------------------------------------------------

    def run(self) -> int:
        if self.interactive:
            self._setup_readline()
        try:
            while True:
                line = self.read_line(self.prompt)
                if line is None:
                    return 0
                command = parse_command(line)
                if command is None:
                    continue
                self.remember(line)
                if command.kind == "quit":
                    return 0
                self.dispatch(command)
        finally:
            self._save_readline()

    def dispatch(self, command: ShellCommand):
        handler = getattr(self, "do_" + command.kind, None)
        if handler is None:
            self.error(f"unknown command \\{command.kind}; try \\help")
            return
        try:
            handler(command.argument)
        except _Aborted:
            self.write("aborted")
        except (TsdbError, OSError) as exc:
            self.error(str(exc))

    def do_query(self, text):
        self.write(run_query(self.db, text).render_table())

    def do_relations(self, _):
        self.write("\n".join(self.db.schema.relation_names))

    def do_describe(self, name):
        decl = self.db.schema.relation(name)
        self.write("\n".join(f"{a.name} :{a.type}" + (" :key" if a.key else "")
                             for a in decl.attributes))

    def do_language(self, code):
        db = load_database(self.home, code)
        self.db, self.language = db, code
        self.write(f"language {code}: " + ", ".join(f"{k} {v}" for k, v in db.sizes().items()
                                                    if v))

    def do_import(self, path):
        if not path:
            raise StorageError("\\import needs a file name")
        counts = import_bundle(self.db, Path(path).read_text("utf-8"))
        total = sum(counts.values())
        self.write(f"imported {total} record(s); \\export to save")

    def do_export(self, path):
        if path:
            Path(path).write_text(export_bundle(self.db), "utf-8")
            self.write(f"wrote {path}")
        else:
            store_database(self.db, self.home)
            self.write(f"saved to {self.home}")

    def do_check(self, _):
        problems = check_consistency(self.db)
        self.write("\n".join(map(str, problems)) if problems else "consistent")

    def do_history(self, _):
        self.write("\n".join(f"{i:4d}  {line}" for i, line in enumerate(self.history, 1)))

    def do_help(self, _):
        self.write(__doc__.split("::", 1)[1].strip("\n").replace("\\\\", "\\"))

    def do_insert(self, relation):
        record_id = guided_insert(self, relation)
        if record_id is not None:
            self.write(f"inserted {relation} {record_id}")

    def ask(self, prompt: str) -> str:
        answer = self.read_line(prompt)
        if answer is None or answer.strip() == ABORT:
            raise _Aborted()
        return answer


def _default_for(shell: Shell, relation: str, attr, values: dict):
    decl = shell.db.schema.relation(relation)
    if attr.name == decl.allocating_key:
        return None
    if relation == "item" and attr.name == "i-length" and "i-input" in values:
        return item_length(values["i-input"])
    prior = shell.last_inserted.get(relation)
    if prior is None and shell.db[relation]:
        prior = dict(zip(decl.names, shell.db[relation][-1]))
    if prior is not None:
        return prior.get(attr.name)
    return coerce_value(None, attr.type)


def _violations(shell: Shell, relation: str, values: dict) -> list:
    if relation == "item":
        return validate_item(item_from_row(values))
    if relation == "analysis":
        try:
            parent = get_item(shell.db, values["i-id"])
        except KeyError:
            return [f"no item {values['i-id']}"]
        return validate_span(span_from_row(values), parent)
    return []


def guided_insert(shell: Shell, relation: str) -> Optional[object]:
    """Prompt for each attribute, validate, insert on confirmation, save to home.

    An empty answer takes the bracketed default (the previous record's value;
    an auto-allocated id for single integer keys).  ``\\abort`` or end of input
    leaves the database untouched.
    """
    decl = shell.db.schema.relation(relation)
    values: dict = {}
    for attr in decl.attributes:
        default = _default_for(shell, relation, attr, values)
        shown = "new id" if default is None and attr.type == "integer" else \
            encode_value(default, attr.type)
        while True:
            answer = shell.ask(f"{attr.name} [{shown}]: ")
            if answer == "":
                values[attr.name] = default
                break
            try:
                values[attr.name] = answer if attr.type == "string" else \
                    decode_value(answer.strip(), attr.type)
                break
            except ValueError as exc:
                shell.write(f"{attr.name}: {exc}; expected {attr.type}")
    key = decl.allocating_key
    if key is not None and values.get(key) is None:
        values[key] = shell.db.next_id(relation)
    problems = _violations(shell, relation, values)
    for problem in problems:
        shell.write(str(problem))
    question = "insert? [y/N] " if not problems else \
        f"insert despite {len(problems)} problem(s)? [y/N] "
    if shell.ask(question).strip().lower() not in ("y", "yes"):
        raise _Aborted()
    work = shell.db.snapshot()
    record_id = insert_record(work, relation, values)
    store_database(work, shell.home)
    shell.db = work
    shell.last_inserted[relation] = dict(values)
    return record_id


def repl(home, language: str, **kwargs) -> int:
    try:
        shell = Shell(home, language, **kwargs)
    except (TsdbError, OSError) as exc:
        (kwargs.get("stderr") or sys.stderr).write(f"error: {exc}\n")
        return 2
    return shell.run()


def run_once(home, language: str, text: str, output_format: str = "table") -> tuple[str, str, int]:
    """Evaluate one query: ``(stdout text, stderr text, exit status)``.

    Status 0 on success, 1 for a bad query, 2 when the database cannot be
    loaded.  The delimited format is the data-file record format.
    """
    if not os.path.isdir(home):
        return "", f"error: no database home {home}\n", 2
    try:
        db = load_database(home, language)
    except (TsdbError, OSError) as exc:
        return "", f"error: {exc}\n", 2
    try:
        table = run_query(db, text)
    except QueryError as exc:
        return "", f"error: {exc}\n", 1
    if output_format == "delimited":
        return table.render_delimited(), "", 0
    return table.render_table(), "", 0

