"""Command-line entry point: ``tsdb <command> ...``."""

from __future__ import annotations

import argparse
import logging
import os
import shutil
import sys
from pathlib import Path

from tsdb.genvar import expand_grammar, expansion_database, make_test_set, parse_grammar, \
    read_directives
from tsdb.harness import AdapterSpec, diff_render, diff_runs, report_render, run_cycle, \
    run_report
from tsdb.server import DEFAULT_PORT, serve
from tsdb.shell import repl, run_once
from tsdb.storage import (
    TsdbError,
    check_consistency,
    default_schema,
    export_bundle,
    import_bundle,
    load_database,
    new_database,
    sample_home,
    store_database,
)


def _common(parser: argparse.ArgumentParser):
    parser.add_argument("--home", default=os.environ.get("TSDB_HOME", "."),
                        help="database home directory (default: $TSDB_HOME or .)")
    parser.add_argument("--language", default=os.environ.get("TSDB_LANGUAGE", "en"),
                        choices=("en", "fr", "de"),
                        help="database language (default: $TSDB_LANGUAGE or en)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="tsdb", description="Test-suite database tools.")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("init", help="create a database home")
    p.add_argument("directory")
    p.add_argument("--sample", action="store_true",
                   help="copy the bundled sample database (language fr)")

    p = sub.add_parser("shell", help="interactive shell")
    _common(p)

    p = sub.add_parser("query", help="evaluate one query")
    _common(p)
    p.add_argument("-e", "--execute", required=True, metavar="QUERY")
    p.add_argument("--format", choices=("table", "delimited"), default="table")

    p = sub.add_parser("check", help="check database consistency")
    _common(p)

    p = sub.add_parser("import", help="merge a bundle file into the database")
    _common(p)
    p.add_argument("file")

    p = sub.add_parser("export", help="write the database as a bundle file")
    _common(p)
    p.add_argument("file", help="output file, - for standard output")

    p = sub.add_parser("serve", help="read-only network server")
    _common(p)
    p.add_argument("--port", type=int, default=int(os.environ.get("TSDB_PORT", DEFAULT_PORT)))
    p.add_argument("--host", default="127.0.0.1")

    p = sub.add_parser("generate", help="derive ill-formed variants as a test set")
    _common(p)
    p.add_argument("--base", type=int, required=True, metavar="ID")
    p.add_argument("--directives", required=True, metavar="FILE")

    p = sub.add_parser("expand", help="enumerate a grammar into annotated items")
    p.add_argument("--grammar", required=True, metavar="FILE")
    p.add_argument("--limit", type=int, default=1000)
    p.add_argument("--out", required=True, metavar="FILE", help="bundle file to write")
    p.add_argument("--language", default=os.environ.get("TSDB_LANGUAGE", "en"),
                   choices=("en", "fr", "de"))

    p = sub.add_parser("run", help="evaluate an application on selected items")
    _common(p)
    p.add_argument("--select", required=True, metavar="QUERY")
    p.add_argument("--adapter", required=True, metavar="CMD")
    p.add_argument("--timeout", type=int, default=10000, metavar="MS")
    p.add_argument("--parallel", type=int, default=1, metavar="K")
    p.add_argument("--comment", default="")
    p.add_argument("--application", default="")

    p = sub.add_parser("report", help="coverage report of a stored run")
    _common(p)
    p.add_argument("--run", type=int, required=True)

    p = sub.add_parser("diff", help="compare two stored runs")
    _common(p)
    p.add_argument("--runs", type=int, nargs=2, required=True, metavar=("A", "B"))
    return parser


def _init(args):
    target = Path(args.directory)
    if args.sample:
        shutil.copytree(sample_home(), target, dirs_exist_ok=True)
    else:
        target.mkdir(parents=True, exist_ok=True)
        store_database(new_database("en", default_schema()), target)
    print(f"initialised {target}")
    return 0


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        return _run(args)
    except (TsdbError, OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2 if isinstance(exc, OSError) else 1


def _run(args) -> int:
    if args.command == "init":
        return _init(args)
    if args.command == "shell":
        return repl(args.home, args.language)
    if args.command == "query":
        out, err, status = run_once(args.home, args.language, args.execute, args.format)
        sys.stdout.write(out)
        sys.stderr.write(err)
        return status
    if args.command == "expand":
        with open(args.grammar, encoding="utf-8") as handle:
            grammar = parse_grammar(handle.read())
        expanded = expand_grammar(grammar, args.limit)
        db = expansion_database(new_database(args.language), expanded)
        Path(args.out).write_text(export_bundle(db), "utf-8")
        print(f"wrote {len(expanded)} item(s) to {args.out}")
        return 0

    db = load_database(args.home, args.language)
    if args.command == "check":
        problems = check_consistency(db)
        for problem in problems:
            print(problem)
        if not problems:
            print("consistent")
        return 1 if problems else 0
    if args.command == "import":
        counts = import_bundle(db, Path(args.file).read_text("utf-8"))
        store_database(db, args.home)
        print(", ".join(f"{name} {n}" for name, n in counts.items() if n) or "nothing imported")
        return 0
    if args.command == "export":
        text = export_bundle(db)
        if args.file == "-":
            sys.stdout.write(text)
        else:
            Path(args.file).write_text(text, "utf-8")
        return 0
    if args.command == "serve":
        serve(db, args.port, args.host)
        return 0
    if args.command == "generate":
        with open(args.directives, encoding="utf-8") as handle:
            directives = read_directives(handle.read())
        set_id, derived = make_test_set(db, args.base, directives)
        store_database(db, args.home)
        print(f"set {set_id}: {args.base} " + " ".join(map(str, derived)))
        return 0
    if args.command == "run":
        spec = AdapterSpec(args.adapter, args.timeout, args.parallel)
        _, report = run_cycle(db, args.select, spec, application=args.application,
                              comment=args.comment)
        store_database(db, args.home)
        sys.stdout.write(report_render(report))
        return 0
    if args.command == "report":
        sys.stdout.write(report_render(run_report(db, args.run)))
        return 0
    if args.command == "diff":
        sys.stdout.write(diff_render(diff_runs(db, *args.runs)))
        return 0
    raise AssertionError(args.command)


if __name__ == "__main__":
    sys.exit(main())
