import random

import pytest

from cascadener.core import UNKNOWN, AnnotatedSentence, Label, Sentence, load_taxonomy
from cascadener.errors import AlignmentError, EmptyInput
from cascadener.evaluation import (
    GroupScores,
    Scores,
    aggregate_report,
    classifier_accuracy,
    extraction_scores,
    group_scores,
    harmonic_f1,
    level_accuracies,
    score_by_category,
    score_spans,
)
from cascadener.metrics import label_key

from fixtures import gold_corpus, make_record

GOLD = gold_corpus()


def relabel(rec, mapping):
    ents = tuple((s, mapping.get(s.surface, label)) for s, label in rec.entities)
    return AnnotatedSentence(rec.sentence, ents, rec.type_list)


def test_perfect_and_empty():
    assert score_spans(GOLD, GOLD).f1 == 1.0
    empty = [AnnotatedSentence(r.sentence, (), r.type_list) for r in GOLD]
    s = score_spans(empty, GOLD)
    assert (s.tp, s.fp, s.fn) == (0, 0, 40) and s.f1 == 0.0


def test_strict_matching_and_counts():
    pred = [relabel(r, {"Paris": Label("person")}) for r in GOLD]
    s = score_spans(pred, GOLD)
    assert (s.tp, s.fp, s.fn) == (39, 1, 1)
    cats = score_by_category(pred, GOLD)
    assert (cats["person"].fp, cats["location"].fn) == (1, 1)


def test_unknown_policies():
    pred = [relabel(r, {"Paris": UNKNOWN}) for r in GOLD]
    drop, fp = score_spans(pred, GOLD, "drop"), score_spans(pred, GOLD, "fp")
    assert (drop.tp, drop.fp, drop.fn) == (39, 0, 1)
    assert (fp.tp, fp.fp, fp.fn) == (39, 1, 1)
    with pytest.raises(ValueError):
        score_spans(pred, GOLD, "ignore")


def test_alignment_is_by_id():
    with pytest.raises(AlignmentError):
        score_spans(GOLD[:-1], GOLD)
    assert score_spans(GOLD[::-1], GOLD).f1 == 1.0


def test_extraction_scores_ignore_labels():
    pred = [relabel(r, {"Paris": Label("person")}) for r in GOLD]
    assert extraction_scores(pred, GOLD).f1 == 1.0
    assert extraction_scores([[(0, 5)]], [[(0, 5), (6, 9)]]).recall == 0.5


def test_classifier_accuracy():
    assert classifier_accuracy([(Label("a"), Label("a")), (Label("b"), Label("a"))]) == 0.5
    with pytest.raises(EmptyInput):
        classifier_accuracy([])


def test_coarse_projection():
    tax = load_taxonomy()
    fine = tax.children(Label("Real Person", "medium"))
    rec = make_record("x", "Ann and Bo", [("Ann", fine[0]), ("Bo", fine[1])], fine)
    gold = [AnnotatedSentence(rec.sentence,
                              tuple((s, Label(x.name, "fine")) for s, x in rec.entities),
                              rec.type_list)]
    pred = [relabel(gold[0], {"Bo": Label(fine[0], "fine")})]
    assert score_spans(pred, gold).tp == 1
    assert score_spans(pred, gold, project=label_key(tax, "coarse")).tp == 2


def test_table_triple():
    assert round(harmonic_f1(98.4, 93.6), 1) == 95.9


def test_every_row_is_self_consistent():
    rng = random.Random(0)
    langs = ("en", "zh", "ru")
    for _ in range(200):
        groups = [GroupScores(rng.choice(langs), rng.choice(("coarse", "fine")),
                              f"c{rng.randint(0, 5)}",
                              Scores(rng.randint(0, 20), rng.randint(0, 20), rng.randint(0, 20)))
                  for _ in range(rng.randint(1, 15))]
        report = aggregate_report(groups)
        for row in report.rows + report.categories:
            p, r = row["precision"], row["recall"]
            assert row["f1"] == pytest.approx(harmonic_f1(p, r), abs=1e-9)


def test_report_rows():
    zh = [AnnotatedSentence(Sentence(r.id + "z", r.sentence.text, "zh"), r.entities, r.type_list)
          for r in GOLD]
    pred = [relabel(r, {"Paris": Label("person")}) for r in GOLD] + zh
    report = aggregate_report(group_scores(pred, GOLD + zh))
    keys = [(r["language"], r["average"]) for r in report.rows]
    assert keys == [("en", "micro"), ("en", "macro"), ("zh", "micro"), ("zh", "macro"),
                    ("overall", "micro"), ("overall", "macro")]
    micro_zh = report.rows[2]
    assert micro_zh["f1"] == 1.0
    assert "overall" in report.to_text()
    assert report.to_dict()["rows"] == report.rows


def test_partial_and_spurious_counts():
    gold = [make_record("a", "Ann met Bo", [("Ann", "person"), ("Bo", "person")])]
    pred = [make_record("a", "Ann met Bo", [("Ann", "person")])]
    s = score_spans(pred, gold)
    assert (s.precision, s.recall) == (1.0, 0.5)
    assert s.f1 == pytest.approx(2 / 3)
    n = sum(len(r.entities) for r in GOLD)
    extra = list(GOLD)
    extra[0] = make_record(GOLD[0].id, GOLD[0].sentence.text,
                           [("Apple", "organization"), ("released", "person"),
                            ("Macbook", "product"), ("Cupertino", "location")])
    s = score_spans(extra, GOLD)
    assert s.fp == 1 and s.precision == pytest.approx(n / (n + 1))


def test_drop_policy_equals_deleting_unknown_first():
    pred = [relabel(rec, {"Paris": UNKNOWN, "Apple": UNKNOWN}) for rec in GOLD]
    stripped = [AnnotatedSentence(r.sentence, tuple(e for e in r.entities if not e[1].is_unknown),
                                  r.type_list) for r in pred]
    assert score_spans(pred, GOLD, "drop") == score_spans(stripped, GOLD, "fp")


def test_half_correct_accuracy_and_level_accuracies():
    a, b = Label("A"), Label("B")
    assert classifier_accuracy([(a, a)] * 5 + [(b, a)] * 5) == 0.5
    tax = load_taxonomy()
    gold = tax.path("Politician")
    gold = tuple(gold) + (None,) * (3 - len(gold))
    wrong_fine = (gold[0], gold[1], Label("Nope", "fine"))
    stopped = (gold[0], None, None)
    acc = level_accuracies([gold, wrong_fine, stopped], [gold] * 3)
    assert acc["coarse"] == 1.0
    assert acc["medium"] == pytest.approx(2 / 3)
    assert acc["fine"] == pytest.approx(1 / 3)
    with pytest.raises(AlignmentError):
        level_accuracies([gold], [])
