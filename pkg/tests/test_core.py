import pytest
from hypothesis import given, strategies as st

from cascadener.core import (
    UNKNOWN,
    AnnotatedSentence,
    EntitySpan,
    Label,
    Sentence,
    TypeList,
    load_taxonomy,
    parse_taxonomy,
    subcategories_of,
    validate_dataset,
)
from cascadener.errors import IntegrityError, ParseError, UnknownNode

TAX = load_taxonomy()


def test_bundled_taxonomy_sizes():
    assert TAX.counts() == (8, 31, 155)


def test_person_subcategories():
    assert subcategories_of(TAX, "Person").names == ("Real Person", "Fictional Figure")
    kids = TAX.children(Label("Real Person", "medium"))
    assert len(kids) == 11
    assert kids[-1] == "Other Person"


def test_every_fine_node_has_one_coarse_ancestor():
    coarse = set(TAX.names("coarse"))
    for name in TAX.names("fine"):
        path = TAX.path(Label(name, "fine"))
        assert [p.level for p in path] == ["coarse", "medium", "fine"]
        assert path[0].name in coarse


def test_children_partition_the_level_below():
    for upper, lower in (("coarse", "medium"), ("medium", "fine")):
        seen = []
        for name in TAX.names(upper):
            seen += TAX.children(Label(name, upper))
        assert sorted(seen) == sorted(TAX.names(lower))


def test_repeated_names_resolve_by_level():
    repeated = set(TAX.names("medium")) & set(TAX.names("fine"))
    assert repeated, "bundled taxonomy reuses names across levels"
    name = sorted(repeated)[0]
    assert TAX.node(Label(name, "fine")).level == "fine"
    assert TAX.node(name).level == "medium"


def test_unknown_node():
    with pytest.raises(UnknownNode):
        TAX.node("Quasar")
    assert Label("Quasar", "fine") not in TAX


def test_integrity_errors():
    with pytest.raises(IntegrityError):
        parse_taxonomy(["coarse\tA", "medium\tB\tMissing"])
    with pytest.raises(IntegrityError):
        parse_taxonomy(["coarse\tA", "coarse\tA"])
    with pytest.raises(ParseError):
        parse_taxonomy(["weird\tA"])


def test_span_validation():
    with pytest.raises(ValueError):
        EntitySpan(3, 3, "")
    with pytest.raises(ValueError):
        EntitySpan.of("abc", 1, 9)
    a, b = EntitySpan.of("abcdef", 0, 3), EntitySpan.of("abcdef", 2, 5)
    assert a.overlaps(b) and not a.overlaps(EntitySpan.of("abcdef", 3, 5))


def test_sentence_rejects_empty_text():
    with pytest.raises(ValueError):
        Sentence("x", "")


def test_type_list():
    with pytest.raises(ValueError):
        TypeList(("a", "a"))
    tl = TypeList(("a", "b"))
    assert tl.admits(Label("a")) and not tl.admits(Label("c"))
    assert tl.admits(UNKNOWN)


def _rec(rid, text, ents, names=("PER", "LOC")):
    return AnnotatedSentence(Sentence(rid, text),
                             tuple((EntitySpan.of(text, s, e), Label(t)) for s, e, t in ents),
                             TypeList(names))


def test_validate_dataset_reports_each_kind():
    good = _rec("a", "Ann met Bob", [(0, 3, "PER"), (8, 11, "PER")])
    assert validate_dataset([good])
    bad = [
        good,
        good,
        _rec("b", "Ann met Bob", [(0, 5, "PER"), (2, 11, "LOC")]),
        _rec("c", "Ann", [(0, 3, "ORG")]),
        _rec("d", "Ann", [], names=()),
    ]
    rep = validate_dataset(bad)
    assert not rep
    assert set(rep.kinds()) >= {"duplicate id", "overlap", "label not in type list",
                                "empty type list"}


@given(st.lists(st.tuples(st.integers(0, 30), st.integers(1, 8)), max_size=6))
def test_overlap_detection_matches_pairwise_check(raw):
    text = "x" * 40
    spans = [EntitySpan.of(text, s, s + n) for s, n in raw]
    rec = AnnotatedSentence(Sentence("r", text), tuple((sp, Label("PER")) for sp in spans),
                            TypeList(("PER",)))
    pairwise = any(a.overlaps(b) for i, a in enumerate(spans) for b in spans[i + 1:])
    assert ("overlap" in validate_dataset([rec]).kinds()) == pairwise


def test_small_taxonomies():
    one = parse_taxonomy(["coarse\tPerson"])
    assert one.counts() == (1, 0, 0)
    assert TAX.children(TAX.names("fine")[0]) == ()


def test_surface_mismatch_and_clean_fixture():
    text = "Ann met Bob"
    bad = AnnotatedSentence(Sentence("m", text), ((EntitySpan(0, 3, "Bob"), Label("PER")),),
                            TypeList(("PER",)))
    assert "surface mismatch" in validate_dataset([bad]).kinds()
    clean = [_rec(f"r{i}", text, [(0, 3, "PER")]) for i in range(3)]
    assert validate_dataset(clean).violations == []
