from dataclasses import replace

import pytest
from hypothesis import given, strategies as st

from tsdb.model import (
    AnalysisSpan,
    TestItem,
    derive_instance,
    find_cycles,
    is_punctuation,
    item_length,
    join_names,
    split_names,
    validate_item,
    validate_span,
)

ITEM = TestItem(24020101, "issco", "jan-95", "formal", "none", "invented", 1, 1, "S",
                "L' ingénieur vient .", 3)
SUBJ = AnalysisSpan(24020101, 0, 2, "L' ingénieur", "NP_sg", "subj", 2, 3)
FUNC = AnalysisSpan(24020101, 2, 3, "vient", "V_3-sg", "func", 0, 3)


def rules(violations):
    return sorted(v.rule for v in violations)


def test_fixture_item_is_clean():
    assert validate_item(ITEM) == []
    assert validate_span(SUBJ, ITEM) == []
    assert validate_span(FUNC, ITEM) == []


@pytest.mark.parametrize("text, expected", [
    ("L' ingénieur vient .", 3),
    ("He saw the boy .", 4),
    ("Who came ?", 2),
    ("no punctuation here", 3),
    ("Stop !", 1),
    ("a , b", 3),
])
def test_length_skips_only_final_punctuation(text, expected):
    assert item_length(text) == expected


def test_punctuation_is_by_unicode_category():
    assert is_punctuation(".") and is_punctuation("«") and is_punctuation("...")
    assert not is_punctuation("a.") and not is_punctuation("")


@pytest.mark.parametrize("change, rule", [
    ({"wellformedness": 3}, "wellformedness"),
    ({"length": 4}, "length"),
    ({"item_id": 0}, "positive"),
    ({"difficulty": 0}, "range"),
    ({"date": ""}, "nonempty"),
    ({"input": "L'  ingénieur vient .", "length": 3}, "tokenization"),
])
def test_item_rules(change, rule):
    assert rule in rules(validate_item(replace(ITEM, **change)))


def test_marginal_code_is_allowed():
    assert validate_item(replace(ITEM, wellformedness=2)) == []


def test_span_bounds_and_instance():
    wide = replace(SUBJ, end=9)
    assert rules(validate_span(wide, ITEM)) == ["span-bounds"]
    empty = replace(SUBJ, start=2, end=2)
    assert rules(validate_span(empty, ITEM)) == ["span-bounds"]
    wrong = replace(SUBJ, instance="vient")
    assert rules(validate_span(wrong, ITEM)) == ["instance"]
    bad_domain = replace(FUNC, domain_end=5)
    assert [v.field for v in validate_span(bad_domain, ITEM)] == ["a-domain"]


def test_span_of_another_item():
    assert rules(validate_span(replace(SUBJ, item_id=1), ITEM)) == ["item-mismatch"]


def test_violation_text_names_the_record():
    (violation,) = validate_item(replace(ITEM, length=4))
    assert str(violation).startswith("item[24020101] i-length: length:")


def test_derive_instance():
    assert derive_instance(ITEM.input, 0, 2) == "L' ingénieur"
    assert derive_instance(ITEM.input, 3, 4) == "."


def test_find_cycles():
    assert find_cycles({"a": ["b"], "b": ["c"], "c": []}) == []
    (cycle,) = find_cycles({"a": ["b"], "b": ["a"]})
    assert cycle[0] == cycle[-1] and set(cycle) == {"a", "b"}
    assert find_cycles({"x": ["x"]}) == [["x", "x"]]


def test_name_lists():
    assert split_names("C_Agreement, NP_Agreement") == ["C_Agreement", "NP_Agreement"]
    assert split_names("") == []
    assert join_names(["a", "b"]) == "a, b"


words = st.text(st.characters(whitelist_categories=("Ll", "Lu", "Nd")), min_size=1,
                max_size=6)


@given(st.lists(words, min_size=1, max_size=8), st.sampled_from(["", " .", " ?"]))
def test_length_formula_property(tokens, ending):
    text = " ".join(tokens) + ending
    item = replace(ITEM, input=text, length=len(tokens))
    assert item_length(text) == len(tokens)
    assert validate_item(item) == []


@given(st.lists(words, min_size=1, max_size=8), st.data())
def test_every_derived_instance_validates(tokens, data):
    text = " ".join(tokens)
    start = data.draw(st.integers(0, len(tokens) - 1))
    end = data.draw(st.integers(start + 1, len(tokens)))
    item = replace(ITEM, input=text, length=len(tokens))
    span = AnalysisSpan(item.item_id, start, end, derive_instance(text, start, end), "X", "",
                        start, end)
    assert validate_span(span, item) == []
