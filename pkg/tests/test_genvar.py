from dataclasses import replace
from pathlib import Path

import pytest
from hypothesis import assume, given, strategies as st

from conftest import FIG1_ID
from tsdb.genvar import (
    GrammarError,
    VariationError,
    addition,
    apply_variation,
    deletion,
    expand_grammar,
    expansion_database,
    make_test_set,
    parse_directive,
    parse_grammar,
    parse_provenance,
    permutation,
    read_directives,
    render_directive,
    replacement,
)
from tsdb.model import AnalysisSpan, TestItem, derive_instance, validate_item, validate_span
from tsdb.storage import check_consistency, get_item, insert_record, links, member_sets, \
    new_database, spans

GRAMMARS = Path(__file__).resolve().parents[1] / "src" / "tsdb" / "data" / "grammars"


def item_of(text, wf=1):
    return TestItem(1, "t", "d", "formal", "none", "invented", 1, wf, "S", text,
                    len(text.split(" ")) - (text.endswith(" .")))


def span(item, a, b, category="X", function="", domain=None):
    da, db = domain or (a, b)
    return AnalysisSpan(item.item_id, a, b, derive_instance(item.input, a, b), category,
                        function, da, db)


def test_replacement_keeps_fixture_spans(sample_db):
    base = get_item(sample_db, FIG1_ID)
    variant = apply_variation(base, spans(sample_db, FIG1_ID),
                              replacement((2, 3), "viens", category="V_2-sg"))
    assert variant.item.input == "L' ingénieur viens ."
    assert variant.item.wellformedness == 0 and variant.item.length == 3
    assert [(s.position, s.instance, s.category, s.domain) for s in variant.spans] == [
        ((0, 2), "L' ingénieur", "NP_sg", (2, 3)), ((2, 3), "viens", "V_2-sg", (0, 3))]
    assert variant.item.comment == "derived:24020101:replacement@2:3@viens@V_2-sg@"


def test_deletion_shifts_and_drops():
    item = item_of("Der Manager hält den Vortrag .")
    old = [span(item, 0, 2, "NP"), span(item, 2, 3, "V"), span(item, 3, 5, "NP"),
           span(item, 4, 6, "X"), span(item, 5, 6, "PUNCT")]
    variant = apply_variation(item, old, deletion((3, 5)))
    assert variant.item.input == "Der Manager hält ."
    assert [(s.position, s.instance) for s in variant.spans] == [
        ((0, 2), "Der Manager"), ((2, 3), "hält"), ((3, 4), ".")]


def test_addition_shifts_and_adds_span():
    item = item_of("Der Manager arbeitet .")
    old = [span(item, 0, 2, "NP"), span(item, 3, 4, "PUNCT")]
    variant = apply_variation(item, old, addition(3, "den Vortrag", "NP_acc", "obj"))
    assert variant.item.input == "Der Manager arbeitet den Vortrag ."
    assert [(s.position, s.instance, s.function) for s in variant.spans] == [
        ((0, 2), "Der Manager", ""), ((5, 6), ".", ""), ((3, 5), "den Vortrag", "obj")]
    assert variant.item.length == 5


def test_replacement_with_different_length():
    item = item_of("He saw the boy .")
    old = [span(item, 0, 1), span(item, 2, 4), span(item, 3, 4), span(item, 4, 5)]
    variant = apply_variation(item, old, replacement((2, 4), "him"))
    assert variant.item.input == "He saw him ."
    assert [(s.position, s.instance) for s in variant.spans] == [
        ((0, 1), "He"), ((2, 3), "him"), ((3, 4), ".")]


def test_permutation_moves_spans_and_drops_straddlers():
    item = item_of("He saw the boy .")
    old = [span(item, 1, 2, "V"), span(item, 2, 4, "NP"), span(item, 0, 2, "bad"),
           span(item, 4, 5, "PUNCT")]
    variant = apply_variation(item, old, permutation((1, 2), (2, 4)))
    assert variant.item.input == "He the boy saw ."
    assert [(s.position, s.instance, s.category) for s in variant.spans] == [
        ((3, 4), "saw", "V"), ((1, 3), "the boy", "NP"), ((4, 5), ".", "PUNCT")]


@pytest.mark.parametrize("directive, message", [
    (replacement((2, 9), "x"), "out of bounds"),
    (deletion((3, 3)), "out of bounds"),
    (addition(9, "x"), "out of bounds"),
    (permutation((0, 2), (1, 3)), "overlap"),
    (replacement((0, 1), ""), "bad token string"),
    (deletion((0, 3)), "no tokens besides punctuation"),
    (deletion((0, 4)), "every token"),
])
def test_directive_errors(directive, message):
    with pytest.raises(VariationError, match=message):
        apply_variation(item_of("L' ingénieur vient ."), [], directive)


def test_ill_formed_source_is_rejected():
    with pytest.raises(VariationError, match="not well-formed"):
        apply_variation(item_of("a b .", wf=0), [], deletion((0, 1)))


def test_directive_text_round_trip():
    for d in [replacement((2, 3), "viens"), replacement((0, 1), "a@b", "C", "f"),
              addition(3, "den Vortrag", "NP", "obj", (0, 5)), addition(0, "x"),
              deletion((3, 5)), permutation((1, 2), (2, 4))]:
        assert parse_directive(render_directive(d)) == d
    text = "# comment\nreplacement@2:3@viens\n\ndeletion@0:1\n"
    assert [d.kind for d in read_directives(text)] == ["replacement", "deletion"]
    with pytest.raises(VariationError):
        parse_directive("swap@1:2")
    with pytest.raises(VariationError):
        parse_directive("deletion@1-2")


def test_provenance_round_trip():
    d = replacement((2, 3), "viens")
    variant = apply_variation(item_of("L' ingénieur vient ."), [], d)
    recovered = parse_provenance(variant.item.comment)
    assert recovered.source_id == 1 and recovered.directive == d
    assert parse_provenance("hand written") is None


def test_make_test_set_on_fixture(sample_db):
    set_id, derived = make_test_set(sample_db, FIG1_ID, [replacement((2, 3), "viens")])
    assert (set_id, derived) == (1, [FIG1_ID + 1])
    assert [s.item_ids for s in member_sets(sample_db)] == [(FIG1_ID, FIG1_ID + 1)]
    assert len(sample_db["item"]) == 2
    assert [link.phenomenon_id for link in links(sample_db, FIG1_ID + 1)] == [2402]
    assert check_consistency(sample_db) == []


def test_make_test_set_is_atomic(sample_db):
    before = sample_db.snapshot()
    with pytest.raises(VariationError):
        make_test_set(sample_db, FIG1_ID, [])
    with pytest.raises(VariationError, match="out of bounds"):
        make_test_set(sample_db, FIG1_ID, [replacement((2, 3), "viens"), deletion((9, 10))])
    with pytest.raises(VariationError, match="no item"):
        make_test_set(sample_db, 5, [deletion((0, 1))])
    assert sample_db == before


def test_make_test_set_copies_parameters(sample_db):
    insert_record(sample_db, "parameter", {"ip-id": 1, "par-name": "valency",
                                           "par-value": "1"})
    make_test_set(sample_db, FIG1_ID, [deletion((0, 2)), replacement((2, 3), "viens")])
    assert sorted(sample_db.column("parameter", "ip-id")) == [1, 2, 3]
    assert set(sample_db.column("parameter", "par-value")) == {"1"}
    assert sample_db.column("set", "s-position") == [0, 1, 2]


# -- properties -------------------------------------------------------------

words = st.sampled_from(["der", "Manager", "hält", "den", "Vortrag", "He", "saw", "x"])
sentences = st.lists(words, min_size=2, max_size=7).map(lambda ws: " ".join(ws) + " .")


@st.composite
def item_and_span(draw):
    text = draw(sentences)
    item = item_of(text)
    n = len(text.split(" ")) - 1
    start = draw(st.integers(0, n - 1))
    end = draw(st.integers(start + 1, n))
    return item, (start, end)


@given(item_and_span())
def test_deletion_then_addition_restores_input(case):
    item, (s, e) = case
    removed = " ".join(item.tokens[s:e])
    assume(e - s < len(item.tokens) - 1)
    deleted = apply_variation(item, [], deletion((s, e)))
    again = apply_variation(replace(deleted.item, wellformedness=1), [],
                            addition(s, removed))
    assert again.item.input == item.input


@given(item_and_span(), st.sampled_from(["replacement", "deletion", "addition"]))
def test_tokens_outside_the_edit_are_untouched(case, kind):
    item, (s, e) = case
    tokens = item.tokens
    assume(kind != "deletion" or e - s < len(tokens) - 1)
    directive = {"replacement": replacement((s, e), "NEW TOKENS"),
                 "deletion": deletion((s, e)),
                 "addition": addition(s, "NEW")}[kind]
    new = apply_variation(item, [], directive).item.tokens
    assert new[:s] == tokens[:s]
    tail = len(tokens) - (s if kind == "addition" else e)
    assert new[len(new) - tail:] == tokens[len(tokens) - tail:]


@given(item_and_span(), st.data())
def test_permutation_keeps_the_multiset(case, data):
    item, (s, e) = case
    n = len(item.tokens)
    assume(e < n)
    f = data.draw(st.integers(e + 1, n))
    new = apply_variation(item, [], permutation((s, e), (e, f))).item.tokens
    assert sorted(new) == sorted(item.tokens)
    assert new[:s] == item.tokens[:s] and new[f:] == item.tokens[f:]


@given(item_and_span(), st.sampled_from(["replacement", "deletion", "addition",
                                         "permutation"]))
def test_variants_validate(case, kind):
    item, (s, e) = case
    n = len(item.tokens)
    every = [span(item, a, b) for a in range(n) for b in range(a + 1, n + 1)]
    if kind == "deletion":
        assume(e - s < n - 1)
        directive = deletion((s, e))
    elif kind == "replacement":
        directive = replacement((s, e), "one two")
    elif kind == "addition":
        directive = addition(s, "new", "X", "f")
    else:
        assume(e < n)
        directive = permutation((s, e), (e, n))
    variant = apply_variation(item, every, directive)
    derived = replace(variant.item, item_id=1)
    assert validate_item(derived) == []
    for new_span in variant.spans:
        assert validate_span(replace(new_span, item_id=1), derived) == []


# -- grammars ---------------------------------------------------------------


def load(name):
    return parse_grammar((GRAMMARS / name).read_text("utf-8"))


def test_grammar_reproduces_fixture(sample_db):
    ((item, item_spans),) = expand_grammar(load("agreement-fr.grammar"), 10)
    fixture = get_item(sample_db, FIG1_ID)
    assert item.input == fixture.input and item.wellformedness == 1 and item.length == 3
    assert [replace(s, item_id=FIG1_ID) for s in item_spans] == spans(sample_db, FIG1_ID)


def test_malrule_adds_ill_formed_item():
    out = expand_grammar(load("agreement-fr-mal.grammar"), 10)
    assert [(i.input, i.wellformedness) for i, _ in out] == [
        ("L' ingénieur vient .", 1), ("L' ingénieur viens .", 0)]


def test_limit():
    grammar = load("agreement-fr-mal.grammar")
    assert expand_grammar(grammar, 0) == []
    assert len(expand_grammar(grammar, 1)) == 1


def test_expansion_database_is_consistent():
    db = expansion_database(new_database("fr"),
                            expand_grammar(load("agreement-fr-mal.grammar"), 10))
    assert db.column("item", "i-id") == [1, 2]
    assert check_consistency(db) == []


def test_cyclic_grammar_exceeds_depth():
    with pytest.raises(GrammarError, match="depth bound exceeded"):
        parse_grammar('start S\nrule S -> S "x"\nlex A "a" A\n')
    text = "start S\ndepth 2\nrule S -> A\nrule A -> B\nrule B -> C\nlex C \"c\" C\n"
    with pytest.raises(GrammarError, match="depth bound exceeded"):
        parse_grammar(text)


@pytest.mark.parametrize("text, message", [
    ("rule S -> A\n", "no start symbol"),
    ("start S\nrule S A\n", "expected 'rule LHS"),
    ("start S\nrule S -> A where A.x B.y\nlex A \"a\" A\n", "bad constraint"),
    ("start S\nrule S -> A annotate Z subj A\nlex A \"a\" A\n", "not a child"),
    ("start S\nlex S \"a\" A oops\n", "bad feature"),
    ("start S\nrule S -> Q\n", "neither rules nor lexical"),
    ("start S\nfrobnicate\n", "cannot parse"),
])
def test_grammar_errors(text, message):
    with pytest.raises(GrammarError, match=message):
        parse_grammar(text)


RICH = '''
start S
depth 5
rule S -> NP VP "." where NP.num = VP.num annotate NP subj VP
malrule S -> NP VP "." annotate NP subj VP
rule VP -> V where ^.num = V.num
rule VP -> V NP where ^.num = V.num annotate NP/1 obj V
lex NP "the engineer" NP_sg num=sg
lex NP "the engineers" NP_pl num=pl
lex V "works" V_sg num=sg
lex V "work" V_pl num=pl
'''


def test_richer_grammar_agreement_and_annotations():
    out = expand_grammar(parse_grammar(RICH), 100)
    good = [i.input for i, _ in out if i.wellformedness == 1]
    bad = [i.input for i, _ in out if i.wellformedness == 0]
    assert "the engineer works ." in good and "the engineers work ." in good
    assert "the engineer work ." in bad and "the engineer works ." not in bad
    assert not set(good) & set(bad)
    first_good = out.index(next(pair for pair in out if pair[0].wellformedness == 0))
    assert all(i.wellformedness == 1 for i, _ in out[:first_good])
    for item, item_spans in out:
        assert validate_item(item) == []
        for s in item_spans:
            assert validate_span(s, item) == []


@given(st.integers(0, 40))
def test_expansion_properties(limit):
    grammar = parse_grammar(RICH)
    with_mal = expand_grammar(grammar, limit)
    without = expand_grammar(grammar.without_malrules(), limit)
    assert len(with_mal) <= limit
    good = [(i, s) for i, s in with_mal if i.wellformedness == 1]
    assert good == without[:len(good)]
    assert {i.input for i, _ in without} <= {i.input for i, _ in with_mal} or \
        len(with_mal) == limit
    assert expand_grammar(grammar, limit) == with_mal
