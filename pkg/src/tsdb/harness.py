"""Retrieve, process, and compare: automated evaluation runs.

Items selected by a query are fed, one input per line, to an external
application (the *adapter*) over its standard streams.  The adapter answers
each line with one of::

    ACCEPT <readings> <time-ms> [<output>]
    REJECT <time-ms> [unanalyzed]

Outcomes are stored as a ``run`` record with one ``result`` record per item,
from which coverage, overgeneration and regression reports are computed.
"""

from __future__ import annotations

import datetime
import platform
import queue
import re
import shlex
import subprocess
import threading
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from tsdb.model import ILLFORMED, WELLFORMED
from tsdb.query import QueryAst, evaluate_query, parse_query, plan_query
from tsdb.storage import Database, TsdbError, insert_record, results

EXPECTED_OUTPUT = "expected-output"
ERROR_FLAGS = ("timeout", "crash", "protocol")
UNANALYZED = "unanalyzed"

_ACCEPT = re.compile(r"ACCEPT (\d+) (-1|\d+)(?: (.*))?\Z")
_REJECT = re.compile(r"REJECT (-1|\d+)(?: (\S+))?\Z")


class HarnessError(TsdbError):
    pass


class AdapterError(HarnessError):
    """The external application could not be launched."""


@dataclass(frozen=True)
class AdapterSpec:
    command: Union[str, Sequence[str]]
    timeout_ms: int = 10000
    parallel: int = 1

    def __post_init__(self):
        if self.timeout_ms <= 0:
            raise ValueError("timeout must be positive")
        if self.parallel < 1:
            raise ValueError("parallelism must be at least 1")

    @property
    def argv(self) -> list[str]:
        if isinstance(self.command, str):
            return shlex.split(self.command)
        return list(self.command)

    def describe(self) -> str:
        return self.command if isinstance(self.command, str) else shlex.join(self.command)


@dataclass(frozen=True)
class ItemOutcome:
    item_id: int
    accepted: bool
    readings: int
    time_ms: int
    output: str = ""
    error: Optional[str] = None
    flags: str = ""


def parse_response(item_id: int, line: str) -> ItemOutcome:
    line = line.rstrip("\r\n")
    match = _ACCEPT.match(line)
    if match:
        return ItemOutcome(item_id, True, int(match.group(1)), int(match.group(2)),
                           match.group(3) or "")
    match = _REJECT.match(line)
    if match:
        return ItemOutcome(item_id, False, 0, int(match.group(1)),
                           flags=match.group(2) or "")
    return failed(item_id, "protocol")


def failed(item_id: int, error: str) -> ItemOutcome:
    return ItemOutcome(item_id, False, 0, -1, error=error, flags=error)


class AdapterProcess:
    """One persistent adapter process, restarted after a crash or timeout."""

    def __init__(self, spec: AdapterSpec):
        self.spec = spec
        self.process: Optional[subprocess.Popen] = None
        self.lines: queue.Queue = queue.Queue()

    def start(self):
        try:
            self.process = subprocess.Popen(
                self.spec.argv, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, encoding="utf-8", bufsize=1)
        except (OSError, ValueError) as exc:
            raise AdapterError(f"cannot launch {self.spec.describe()!r}: {exc}") from exc
        self.lines = queue.Queue()
        threading.Thread(target=self._pump, args=(self.process, self.lines),
                         daemon=True).start()

    @staticmethod
    def _pump(process, lines):
        for line in process.stdout:
            lines.put(line)
        lines.put(None)

    def stop(self):
        if self.process is None:
            return
        try:
            self.process.stdin.close()
        except OSError:
            pass
        try:
            self.process.wait(timeout=1)
        except subprocess.TimeoutExpired:
            self.process.kill()
            self.process.wait()
        self.process = None

    def kill(self):
        if self.process is not None:
            self.process.kill()
            self.process.wait()
            self.process = None

    def ask(self, item_id: int, text: str) -> ItemOutcome:
        if self.process is None or self.process.poll() is not None:
            try:
                self.start()
            except AdapterError:
                return failed(item_id, "crash")
        try:
            self.process.stdin.write(text.replace("\n", " ") + "\n")
            self.process.stdin.flush()
        except OSError:
            self.kill()
            return failed(item_id, "crash")
        try:
            line = self.lines.get(timeout=self.spec.timeout_ms / 1000)
        except queue.Empty:
            self.kill()
            return failed(item_id, "timeout")
        if line is None:
            self.kill()
            return failed(item_id, "crash")
        return parse_response(item_id, line)


def dispatch(spec: AdapterSpec, inputs: Sequence[tuple[int, str]]) -> list[ItemOutcome]:
    """Run every ``(item_id, input)`` through *spec*; outcomes in item-id order."""
    workers = [AdapterProcess(spec) for _ in range(min(spec.parallel, len(inputs)) or 1)]
    started = []
    try:
        for worker in workers:
            worker.start()
            started.append(worker)
    except AdapterError:
        for worker in started:
            worker.kill()
        raise
    todo: queue.Queue = queue.Queue()
    for entry in inputs:
        todo.put(entry)
    outcomes: dict[int, ItemOutcome] = {}
    lock = threading.Lock()

    def work(adapter):
        while True:
            try:
                item_id, text = todo.get_nowait()
            except queue.Empty:
                return
            outcome = adapter.ask(item_id, text)
            with lock:
                outcomes[item_id] = outcome

    threads = [threading.Thread(target=work, args=(w,)) for w in workers]
    try:
        for thread in threads:
            thread.start()
        for thread in threads:
            thread.join()
    finally:
        for worker in workers:
            worker.stop()
    return [outcomes[item_id] for item_id in sorted(outcomes)]


# -- reports ----------------------------------------------------------------


def _fraction(numerator: int, denominator: int) -> Optional[float]:
    return numerator / denominator if denominator else None


@dataclass
class Figures:
    wellformed_total: int = 0
    wellformed_accepted: int = 0
    illformed_total: int = 0
    illformed_accepted: int = 0
    total: int = 0
    unanalyzed: int = 0

    def add(self, wellformedness: int, accepted: bool, unanalyzed: bool):
        self.total += 1
        self.unanalyzed += unanalyzed
        if wellformedness == WELLFORMED:
            self.wellformed_total += 1
            self.wellformed_accepted += accepted
        elif wellformedness == ILLFORMED:
            self.illformed_total += 1
            self.illformed_accepted += accepted

    @property
    def coverage(self) -> Optional[float]:
        return _fraction(self.wellformed_accepted, self.wellformed_total)

    @property
    def overgeneration(self) -> Optional[float]:
        return _fraction(self.illformed_accepted, self.illformed_total)

    @property
    def unanalyzed_fraction(self) -> Optional[float]:
        return _fraction(self.unanalyzed, self.total)


@dataclass
class RunReport:
    run_id: int
    totals: Figures
    phenomena: dict[str, Figures] = field(default_factory=dict)
    mismatches: int = 0

    @property
    def coverage(self):
        return self.totals.coverage

    @property
    def overgeneration(self):
        return self.totals.overgeneration

    @property
    def unanalyzed(self):
        return self.totals.unanalyzed_fraction


def _is_unanalyzed(flags: str) -> bool:
    return any(f in (UNANALYZED,) + ERROR_FLAGS for f in flags.split(","))


def run_report(db: Database, run_id: int) -> RunReport:
    if run_id not in db.column("run", "r-id"):
        raise HarnessError(f"unknown run {run_id}")
    wf = dict(zip(db.column("item", "i-id"), db.column("item", "i-wf")))
    names = dict(zip(db.column("phenomenon", "p-id"), db.column("phenomenon", "p-name")))
    linked: dict[int, set] = {}
    for row in db.rows("item-phenomenon"):
        if row["p-id"] in names:
            linked.setdefault(row["i-id"], set()).add(names[row["p-id"]])
    report = RunReport(run_id, Figures())
    for result in results(db, run_id):
        if result.item_id not in wf:
            continue
        accepted = bool(result.accepted)
        lost = _is_unanalyzed(result.flags)
        report.totals.add(wf[result.item_id], accepted, lost)
        report.mismatches += "mismatch" in result.flags.split(",")
        for name in linked.get(result.item_id, ()):
            report.phenomena.setdefault(name, Figures()).add(wf[result.item_id], accepted,
                                                            lost)
    return report


def _percent(value: Optional[float]) -> str:
    return "n/a" if value is None else f"{value * 100:.1f}%"


def report_render(report: RunReport) -> str:
    t = report.totals
    lines = [
        f"run {report.run_id}",
        f"items {t.total}: well-formed {t.wellformed_accepted}/{t.wellformed_total} accepted, "
        f"ill-formed {t.illformed_accepted}/{t.illformed_total} accepted",
        f"coverage {_percent(t.coverage)}",
        f"overgeneration {_percent(t.overgeneration)}",
        f"unanalyzed {_percent(t.unanalyzed_fraction)}",
    ]
    if report.mismatches:
        lines.append(f"output mismatches {report.mismatches}")
    if report.phenomena:
        header = ("phenomenon", "items", "coverage", "overgeneration", "unanalyzed")
        rows = [(name, str(f.total), _percent(f.coverage), _percent(f.overgeneration),
                 _percent(f.unanalyzed_fraction))
                for name, f in sorted(report.phenomena.items())]
        widths = [max(len(r[i]) for r in [header] + rows) for i in range(len(header))]
        lines.append("")
        for row in [header] + rows:
            cells = [row[0].ljust(widths[0])] + [c.rjust(w) for c, w in zip(row[1:],
                                                                             widths[1:])]
            lines.append("  ".join(cells))
    return "\n".join(lines) + "\n"


# -- running ----------------------------------------------------------------


def select_items(db: Database, selection: str) -> list[int]:
    ast = parse_query(selection, db.schema)
    selector = QueryAst(("i-id",), ast.condition)
    return [row[0] for row in evaluate_query(plan_query(selector, db.schema), db).rows]


def _expected_outputs(db: Database) -> dict[int, str]:
    by_link = dict(zip(db.column("item-phenomenon", "ip-id"),
                       db.column("item-phenomenon", "i-id")))
    out = {}
    for row in db.rows("parameter"):
        if row["par-name"] == EXPECTED_OUTPUT and row["ip-id"] in by_link:
            out.setdefault(by_link[row["ip-id"]], row["par-value"])
    return out


def run_cycle(db: Database, selection: str, adapter: AdapterSpec, application: str = "",
              comment: str = "", environment: Optional[str] = None,
              date: Optional[str] = None) -> tuple[int, RunReport]:
    """Select, process and compare; store the run and return its id and report."""
    item_ids = select_items(db, selection)
    if not item_ids:
        raise HarnessError("selection query matched no items")
    inputs = dict(zip(db.column("item", "i-id"), db.column("item", "i-input")))
    outcomes = dispatch(adapter, [(i, inputs[i]) for i in item_ids])
    expected = _expected_outputs(db)

    work = db.snapshot()
    run_id = insert_record(work, "run", {
        "r-application": application or adapter.describe(),
        "r-date": date or datetime.datetime.now().isoformat(timespec="seconds"),
        "r-environment": environment if environment is not None else
        f"{platform.system()} {platform.machine()} python {platform.python_version()}",
        "r-comment": comment,
    })
    for outcome in outcomes:
        flags = [f for f in outcome.flags.split(",") if f]
        want = expected.get(outcome.item_id)
        if outcome.accepted and want is not None and outcome.output != want:
            flags.append("mismatch")
        insert_record(work, "result", {
            "r-id": run_id, "i-id": outcome.item_id, "o-accepted": int(outcome.accepted),
            "o-readings": outcome.readings, "o-time": outcome.time_ms,
            "o-output": outcome.output, "o-flags": ",".join(flags),
        })
    db.records = work.records
    return run_id, run_report(db, run_id)


@dataclass
class RunDiff:
    run_a: int
    run_b: int
    newly_accepted_wellformed: list[int]
    newly_rejected_wellformed: list[int]
    newly_rejected_illformed: list[int]
    newly_accepted_illformed: list[int]
    common: int
    time_delta: Optional[float]

    @property
    def progress(self) -> list[int]:
        return sorted(self.newly_accepted_wellformed + self.newly_rejected_illformed)

    @property
    def regressions(self) -> list[int]:
        return sorted(self.newly_rejected_wellformed + self.newly_accepted_illformed)


def diff_runs(db: Database, run_a: int, run_b: int) -> RunDiff:
    known = set(db.column("run", "r-id"))
    for run_id in (run_a, run_b):
        if run_id not in known:
            raise HarnessError(f"unknown run {run_id}")
    a = {r.item_id: r for r in results(db, run_a)}
    b = {r.item_id: r for r in results(db, run_b)}
    wf = dict(zip(db.column("item", "i-id"), db.column("item", "i-wf")))
    common = sorted(set(a) & set(b))
    lists: dict[str, list[int]] = {"aw": [], "rw": [], "ri": [], "ai": []}
    deltas = []
    for item_id in common:
        before, after = a[item_id].accepted, b[item_id].accepted
        code = wf.get(item_id)
        if before != after:
            if code == WELLFORMED:
                lists["aw" if after else "rw"].append(item_id)
            elif code == ILLFORMED:
                lists["ai" if after else "ri"].append(item_id)
        if a[item_id].time_ms >= 0 and b[item_id].time_ms >= 0:
            deltas.append(b[item_id].time_ms - a[item_id].time_ms)
    delta = sum(deltas) / len(deltas) if deltas else None
    return RunDiff(run_a, run_b, lists["aw"], lists["rw"], lists["ri"], lists["ai"],
                   len(common), delta)


def diff_render(diff: RunDiff) -> str:
    def ids(values):
        return " ".join(map(str, values)) if values else "-"

    delta = "undefined" if diff.time_delta is None else f"{diff.time_delta:+.1f} ms"
    return "\n".join([
        f"runs {diff.run_a} -> {diff.run_b}: {diff.common} common items",
        f"progress: newly accepted well-formed: {ids(diff.newly_accepted_wellformed)}",
        f"progress: newly rejected ill-formed: {ids(diff.newly_rejected_illformed)}",
        f"regression: newly rejected well-formed: {ids(diff.newly_rejected_wellformed)}",
        f"regression: newly accepted ill-formed: {ids(diff.newly_accepted_illformed)}",
        f"mean time delta: {delta}",
    ]) + "\n"
