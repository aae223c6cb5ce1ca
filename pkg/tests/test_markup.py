import random

import pytest
from hypothesis import given, settings, strategies as st

from cascadener.core import EntitySpan, Sentence
from cascadener.errors import AlignmentFailure, MalformedMarkup, MarkupError, OverlapError
from cascadener.markup import (
    MarkedText,
    align_marked,
    lcs_alignment,
    lcs_table,
    parse_marked,
    reembed_each,
    render_marked,
    split_marked,
)

from fixtures import random_span_case

APPLE = Sentence("a", "Apple released the Macbook.")


def lcs_oracle(a, b):
    """Textbook O(nm) dynamic program."""
    L = [[0] * (len(b) + 1) for _ in range(len(a) + 1)]
    for i in range(1, len(a) + 1):
        for j in range(1, len(b) + 1):
            if a[i - 1] == b[j - 1]:
                L[i][j] = L[i - 1][j - 1] + 1
            else:
                L[i][j] = max(L[i - 1][j], L[i][j - 1])
    return L


def test_apple_spans():
    spans = parse_marked("##Apple## released the ##Macbook##.", APPLE)
    assert [(s.start, s.end, s.surface) for s in spans] == [(0, 5, "Apple"), (19, 26, "Macbook")]


def test_odd_delimiters_rejected():
    with pytest.raises(MalformedMarkup):
        split_marked("##Apple released the Macbook.")
    with pytest.raises(MalformedMarkup):
        MarkedText("####", "x")


def test_adjacent_spans_round_trip():
    s = Sentence("x", "NewYork")
    spans = [EntitySpan.of(s.text, 0, 3), EntitySpan.of(s.text, 3, 7)]
    marked = render_marked(s, spans)
    assert marked.text == "##New####York##"
    assert parse_marked(marked.text, s) == spans


def test_whitespace_drift_is_tolerated():
    s = Sentence("x", "Apple  released the Macbook.")
    res = align_marked("##Apple## released the ##Macbook##.", s)
    assert not res.recovered
    assert [sp.surface for sp in res.spans] == ["Apple", "Macbook"]


def test_lcs_recovery_of_a_paraphrased_generation():
    res = align_marked("##Apple## has released the ##Macbook##.", APPLE)
    assert res.recovered
    assert [sp.surface for sp in res.spans] == ["Apple", "Macbook"]


def test_hallucinated_region_is_dropped():
    res = align_marked("##Apple## released the Macbook ##Pro Max Ultra##.", APPLE)
    assert [sp.surface for sp in res.spans] == ["Apple"]
    assert res.dropped_regions == 1


def test_unrelated_generation_fails():
    with pytest.raises(AlignmentFailure):
        parse_marked("##Zebras## quizzically jog.", APPLE)


def test_render_rejects_bad_spans():
    with pytest.raises(OverlapError):
        render_marked(APPLE, [EntitySpan.of(APPLE.text, 0, 5), EntitySpan.of(APPLE.text, 2, 8)])
    with pytest.raises(MarkupError):
        render_marked(APPLE, [EntitySpan(0, 5, "Pear!")])
    with pytest.raises(MarkupError):
        render_marked(Sentence("h", "tag #Apple"), [EntitySpan.of("tag #Apple", 5, 10)])


def test_reembed_each_marks_one_span_at_a_time():
    spans = [EntitySpan.of(APPLE.text, 19, 26), EntitySpan.of(APPLE.text, 0, 5)]
    out = [m.text for m in reembed_each(APPLE, spans)]
    assert out == ["##Apple## released the Macbook.", "Apple released the ##Macbook##."]


@settings(max_examples=200)
@given(st.text("abcab ", max_size=25), st.text("bcaab ", max_size=25))
def test_lcs_table_matches_dp_oracle(a, b):
    assert lcs_table(a, b).tolist() == lcs_oracle(a, b)


@settings(max_examples=200)
@given(st.text("xyzxy", max_size=20), st.text("yzxxy", max_size=20))
def test_lcs_alignment_is_a_common_subsequence_of_optimal_length(a, b):
    pairs = lcs_alignment(a, b)
    assert len(pairs) == lcs_oracle(a, b)[len(a)][len(b)]
    assert all(a[i] == b[j] for i, j in pairs)
    assert all(i1 < i2 and j1 < j2 for (i1, j1), (i2, j2) in zip(pairs, pairs[1:]))


@pytest.mark.parametrize("script", ["latin", "cjk", "cyrillic"])
def test_round_trip(script):
    rng = random.Random(script)
    for _ in range(100):
        s, spans = random_span_case(rng, script)
        assert parse_marked(render_marked(s, spans).text, s) == spans


def test_worked_markup_examples():
    s = Sentence("p", "Apple proposes new Macbook")
    spans = parse_marked("##Apple## proposes new ##Macbook##", s)
    assert [(x.start, x.end) for x in spans] == [(0, 5), (19, 26)]
    assert render_marked(s, spans).text == "##Apple## proposes new ##Macbook##"
    assert parse_marked("##Apple##  proposes new  ##Macbook##", s) == spans
    ai = Sentence("q", "AI wins")
    assert render_marked(ai, [EntitySpan.of(ai.text, 0, 2)]).text == "##AI## wins"
    assert render_marked(ai, []).text == "AI wins"


def test_reembed_each_counts():
    assert reembed_each(APPLE, []) == []
    assert len(reembed_each(APPLE, [EntitySpan.of(APPLE.text, 0, 5)])) == 1
