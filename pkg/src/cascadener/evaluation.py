"""Strict span scoring, classifier accuracy and grouped reports."""

from __future__ import annotations

from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

from .core import UNKNOWN, AnnotatedSentence, EntitySpan, Label
from .errors import AlignmentError, EmptyInput

UNKNOWN_POLICIES = ("drop", "fp")


def harmonic_f1(p: float, r: float) -> float:
    return 0.0 if p + r == 0 else 2 * p * r / (p + r)


@dataclass
class Scores:
    tp: int = 0
    fp: int = 0
    fn: int = 0

    @property
    def precision(self) -> float:
        return self.tp / (self.tp + self.fp) if self.tp + self.fp else 0.0

    @property
    def recall(self) -> float:
        return self.tp / (self.tp + self.fn) if self.tp + self.fn else 0.0

    @property
    def f1(self) -> float:
        return harmonic_f1(self.precision, self.recall)

    @property
    def support(self) -> int:
        return self.tp + self.fn

    def __add__(self, other: Scores) -> Scores:
        return Scores(self.tp + other.tp, self.fp + other.fp, self.fn + other.fn)

    def as_row(self) -> dict:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "precision": self.precision,
                "recall": self.recall, "f1": self.f1}


def _count(pred_keys: Iterable, gold_keys: Iterable) -> Scores:
    pred, gold = Counter(pred_keys), Counter(gold_keys)
    tp = sum((pred & gold).values())
    return Scores(tp, sum(pred.values()) - tp, sum(gold.values()) - tp)


def _align(pred: Sequence[AnnotatedSentence], gold: Sequence[AnnotatedSentence]):
    by_id = {rec.id: rec for rec in pred}
    gold_ids = [rec.id for rec in gold]
    if len(by_id) != len(pred) or set(by_id) != set(gold_ids) or len(set(gold_ids)) != len(gold):
        missing = sorted(set(gold_ids) - set(by_id))
        extra = sorted(set(by_id) - set(gold_ids))
        raise AlignmentError(f"sentence ids differ (missing {missing[:5]}, extra {extra[:5]})")
    return [(by_id[g.id], g) for g in gold]


def _keep(label: Label, policy: str) -> bool:
    if policy not in UNKNOWN_POLICIES:
        raise ValueError(f"unknown policy {policy!r}")
    return not (label.is_unknown and policy == "drop")


def _entity_keys(rec: AnnotatedSentence, policy: str, project: Callable | None):
    for span, label in rec.entities:
        if not _keep(label, policy):
            continue
        name = label.name if label.is_unknown or project is None else project(label)
        yield span.start, span.end, name


def score_spans(
    pred: Sequence[AnnotatedSentence],
    gold: Sequence[AnnotatedSentence],
    policy: str = "drop",
    project: Callable[[Label], str] | None = None,
) -> Scores:
    """Micro-averaged strict (start, end, label) scores.

    ``policy`` decides Unknown predictions: ``drop`` ignores them, ``fp``
    counts them as false positives. ``project`` maps labels to category
    names, e.g. to score at a coarser granularity.
    """
    total = Scores()
    for p, g in _align(pred, gold):
        total += _count(_entity_keys(p, policy, project), _entity_keys(g, "fp", project))
    return total


def score_by_category(pred, gold, policy: str = "drop", project=None) -> dict[str, Scores]:
    out: dict[str, Scores] = defaultdict(Scores)
    for p, g in _align(pred, gold):
        pk = Counter(_entity_keys(p, policy, project))
        gk = Counter(_entity_keys(g, "fp", project))
        matched = pk & gk
        for key, n in pk.items():
            out[key[2]].tp += matched[key]
            out[key[2]].fp += n - matched[key]
        for key, n in gk.items():
            out[key[2]].fn += n - matched[key]
    return dict(sorted(out.items()))


def _span_key(span) -> tuple[int, int]:
    if isinstance(span, EntitySpan):
        return span.start, span.end
    return tuple(span[:2])


def extraction_scores(pred_spans, gold_spans) -> Scores:
    """Boundary-only scores; inputs are aligned per-sentence span collections
    (or aligned corpora of :class:`AnnotatedSentence`)."""
    if pred_spans and isinstance(pred_spans[0], AnnotatedSentence):
        pairs = _align(pred_spans, gold_spans)
        pred_spans = [p.spans for p, _ in pairs]
        gold_spans = [g.spans for _, g in pairs]
    if len(pred_spans) != len(gold_spans):
        raise AlignmentError("prediction and gold sentence counts differ")
    total = Scores()
    for p, g in zip(pred_spans, gold_spans):
        total += _count(map(_span_key, p), map(_span_key, g))
    return total


def classifier_accuracy(pairs: Sequence[tuple[Label, Label]]) -> float:
    """Fraction of (predicted, gold) pairs with equal label names."""
    if not pairs:
        raise EmptyInput("accuracy of an empty prediction set")
    return sum(p.name == g.name for p, g in pairs) / len(pairs)


def level_accuracies(paths: Sequence[tuple], gold_paths: Sequence[tuple],
                     levels: Sequence[str] = ("coarse", "medium", "fine")) -> dict[str, float]:
    """Accuracy per level of progressive predictions, each level scored on its own.

    Levels where gold has no label are skipped; an unreached predicted level
    (``None``) counts as wrong.
    """
    if len(paths) != len(gold_paths):
        raise AlignmentError("prediction and gold path counts differ")
    out = {}
    for i, level in enumerate(levels):
        pairs = [(p[i] if p[i] is not None else UNKNOWN, g[i])
                 for p, g in zip(paths, gold_paths) if g[i] is not None]
        if pairs:
            out[level] = classifier_accuracy(pairs)
    return out


@dataclass
class GroupScores:
    language: str
    granularity: str
    category: str
    scores: Scores


@dataclass
class EvalReport:
    rows: list[dict] = field(default_factory=list)
    categories: list[dict] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {"rows": self.rows, "categories": self.categories}

    def to_text(self) -> str:
        header = f"{'language':<10} {'granularity':<12} {'avg':<6} {'P':>7} {'R':>7} {'F1':>7}"
        lines = [header, "-" * len(header)]
        for row in self.rows:
            lines.append(f"{row['language']:<10} {row['granularity']:<12} {row['average']:<6} "
                         f"{100 * row['precision']:7.2f} {100 * row['recall']:7.2f} "
                         f"{100 * row['f1']:7.2f}")
        return "\n".join(lines) + "\n"


def aggregate_report(groups: Iterable[GroupScores]) -> EvalReport:
    """Micro and macro rows per (language, granularity), plus an overall row
    per granularity when more than one language is present."""
    groups = [g for g in groups if g.scores.tp + g.scores.fp + g.scores.fn > 0]
    report = EvalReport()
    keyed = defaultdict(list)
    for g in groups:
        keyed[(g.language, g.granularity)].append(g)
        report.categories.append({"language": g.language, "granularity": g.granularity,
                                  "category": g.category, "support": g.scores.support,
                                  **g.scores.as_row()})
    languages = sorted({g.language for g in groups})
    if len(languages) > 1:
        for g in groups:
            keyed[("overall", g.granularity)].append(g)

    order = sorted(keyed, key=lambda k: (k[0] == "overall", k[0], k[1]))
    for language, granularity in order:
        members = keyed[(language, granularity)]
        micro = sum((m.scores for m in members), Scores())
        report.rows.append({"language": language, "granularity": granularity,
                            "average": "micro", "support": micro.support, **micro.as_row()})
        # macro over categories: mean P and mean R, F1 as their harmonic mean
        per_cat = defaultdict(Scores)
        for m in members:
            per_cat[m.category] += m.scores
        mp = sum(s.precision for s in per_cat.values()) / len(per_cat)
        mr = sum(s.recall for s in per_cat.values()) / len(per_cat)
        report.rows.append({"language": language, "granularity": granularity,
                            "average": "macro", "support": micro.support,
                            "precision": mp, "recall": mr, "f1": harmonic_f1(mp, mr)})
    return report


def group_scores(pred, gold, *, granularity: str = "label", policy: str = "drop",
                 project=None) -> list[GroupScores]:
    """Per-language, per-category scores ready for :func:`aggregate_report`."""
    pairs = _align(pred, gold)
    by_lang = defaultdict(lambda: ([], []))
    for p, g in pairs:
        by_lang[g.sentence.language][0].append(p)
        by_lang[g.sentence.language][1].append(g)
    out = []
    for language in sorted(by_lang):
        ps, gs = by_lang[language]
        for category, scores in score_by_category(ps, gs, policy, project).items():
            out.append(GroupScores(language, granularity, category, scores))
    return out
