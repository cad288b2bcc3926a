import time
from dataclasses import replace

import pytest

from conftest import FIG1_ID, mock_adapter
from tsdb.harness import (
    AdapterError,
    AdapterSpec,
    Figures,
    HarnessError,
    ItemOutcome,
    diff_render,
    diff_runs,
    dispatch,
    parse_response,
    report_render,
    run_cycle,
    run_report,
)
from tsdb.storage import check_consistency, insert_record, results

ALL = "select i-id where i-id > 0"


def spec(*args, **kwargs):
    kwargs.setdefault("timeout_ms", 5000)
    return AdapterSpec(mock_adapter(*args), **kwargs)


@pytest.mark.parametrize("line, expected", [
    ("ACCEPT 2 15", ItemOutcome(1, True, 2, 15)),
    ("ACCEPT 1 0 (S (NP x))", ItemOutcome(1, True, 1, 0, "(S (NP x))")),
    ("REJECT 7", ItemOutcome(1, False, 0, 7)),
    ("REJECT 7 unanalyzed\n", ItemOutcome(1, False, 0, 7, flags="unanalyzed")),
    ("MAYBE", ItemOutcome(1, False, 0, -1, error="protocol", flags="protocol")),
    ("ACCEPT x 1", ItemOutcome(1, False, 0, -1, error="protocol", flags="protocol")),
])
def test_parse_response(line, expected):
    assert parse_response(1, line) == expected


def test_spec_validation():
    with pytest.raises(ValueError):
        AdapterSpec("x", timeout_ms=0)
    with pytest.raises(ValueError):
        AdapterSpec("x", parallel=0)
    assert AdapterSpec("python3 -m mod 'a b'").argv == ["python3", "-m", "mod", "a b"]


def test_coverage_and_overgeneration(two_item_db):
    run_id, report = run_cycle(two_item_db, ALL, spec(3), date="d", environment="e")
    assert run_id == 1
    assert report.coverage == 1.0 and report.overgeneration == 1.0
    assert report.unanalyzed == 0.0
    text = report_render(report)
    assert "coverage 100.0%" in text and "overgeneration 100.0%" in text
    assert "C_Complementation_subj(NP)_V" in text
    assert check_consistency(two_item_db) == []
    assert two_item_db.rows("run")[0]["r-environment"] == "e"


def test_all_reject_and_unanalyzed(two_item_db):
    _, report = run_cycle(two_item_db, ALL, spec(3, "--reject-all", "--unanalyzed"))
    assert report.coverage == 0.0 and report.overgeneration == 0.0
    assert report.unanalyzed == 1.0


def test_only_wellformed_selected_gives_undefined_overgeneration(two_item_db):
    _, report = run_cycle(two_item_db, "select i-id where i-wf = 1", spec(2))
    assert report.coverage == 0.0 and report.overgeneration is None
    assert "overgeneration n/a" in report_render(report)


def test_empty_selection_is_an_error(two_item_db):
    with pytest.raises(HarnessError, match="matched no items"):
        run_cycle(two_item_db, "select i-id where i-id < 0", spec(3))
    assert two_item_db["run"] == []


def test_timeout_and_restart(two_item_db):
    started = time.monotonic()
    _, report = run_cycle(two_item_db, ALL,
                          spec(3, "--sleep-on", "viens", "--sleep", "30", timeout_ms=300))
    assert time.monotonic() - started < 5
    by_item = {r.item_id: r for r in results(two_item_db, 1)}
    assert by_item[FIG1_ID + 1].flags == "timeout" and by_item[FIG1_ID + 1].time_ms == -1
    assert by_item[FIG1_ID].accepted == 1
    assert report.unanalyzed == 0.5


def test_crash_is_flagged_and_adapter_restarted():
    outcomes = dispatch(spec(3, "--crash-on", "boom"),
                        [(1, "a ."), (2, "boom ."), (3, "b c .")])
    assert [o.flags for o in outcomes] == ["", "crash", ""]
    assert [o.accepted for o in outcomes] == [True, False, True]


def test_protocol_violation():
    (outcome,) = dispatch(spec(3, "--garble-on", "x"), [(1, "x .")])
    assert outcome.error == "protocol" and not outcome.accepted


def test_missing_adapter():
    with pytest.raises(AdapterError, match="cannot launch"):
        dispatch(AdapterSpec(["/nonexistent/adapter"]), [(1, "a")])


def test_parallel_equals_serial():
    inputs = [(i, " ".join(["w"] * (i % 5 + 1)) + " .") for i in range(1, 30)]
    serial = dispatch(spec(3), inputs)
    parallel = dispatch(spec(3, parallel=4), inputs)
    assert [o.item_id for o in parallel] == list(range(1, 30))
    assert [replace(o, time_ms=0) for o in serial] == [replace(o, time_ms=0) for o in parallel]


def test_expected_output_mismatch(two_item_db):
    insert_record(two_item_db, "parameter", {"ip-id": 1, "par-name": "expected-output",
                                             "par-value": "(S x)"})
    _, report = run_cycle(two_item_db, "select i-id where i-wf = 1", spec(3))
    assert report.mismatches == 1
    assert results(two_item_db)[0].flags == "mismatch"
    assert "output mismatches 1" in report_render(report)


def test_diff_runs(two_item_db):
    first, _ = run_cycle(two_item_db, ALL, spec(3, "--reject-all"))
    second, _ = run_cycle(two_item_db, ALL, spec(3))
    diff = diff_runs(two_item_db, first, second)
    assert diff.newly_accepted_wellformed == [FIG1_ID]
    assert diff.newly_accepted_illformed == [FIG1_ID + 1]
    assert diff.progress == [FIG1_ID] and diff.regressions == [FIG1_ID + 1]
    assert diff.common == 2 and diff.time_delta is not None
    text = diff_render(diff)
    assert f"newly accepted well-formed: {FIG1_ID}" in text
    assert "newly rejected ill-formed: -" in text
    back = diff_runs(two_item_db, second, first)
    assert back.newly_rejected_wellformed == [FIG1_ID]
    assert back.newly_rejected_illformed == [FIG1_ID + 1]


def test_diff_without_common_items(two_item_db):
    first, _ = run_cycle(two_item_db, "select i-id where i-wf = 1", spec(3))
    second, _ = run_cycle(two_item_db, "select i-id where i-wf = 0", spec(3))
    diff = diff_runs(two_item_db, first, second)
    assert diff.common == 0 and diff.time_delta is None
    assert "mean time delta: undefined" in diff_render(diff)
    with pytest.raises(HarnessError):
        diff_runs(two_item_db, first, 99)


def test_report_of_unknown_run(two_item_db):
    with pytest.raises(HarnessError):
        run_report(two_item_db, 7)


def test_figures_arithmetic():
    figures = Figures()
    for wf, accepted in [(1, True), (1, False), (1, True), (0, False), (2, True)]:
        figures.add(wf, accepted, unanalyzed=False)
    assert figures.coverage == pytest.approx(2 / 3)
    assert figures.overgeneration == 0.0
    assert figures.total == 5
