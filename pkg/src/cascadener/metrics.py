"""Categorization-quality metrics over category distributions and embeddings."""

from __future__ import annotations

import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Callable, Mapping, Sequence

import numpy as np

from .backend import EmbeddingVector
from .core import AnnotatedSentence, Taxonomy
from .errors import DegenerateCategory, DegenerateDistribution, ZeroMean, ZeroVector

logger = logging.getLogger(__name__)

COHESION_CAP = 200


@dataclass(frozen=True)
class CategoryDistribution:
    counts: Mapping[str, int]

    def __post_init__(self):
        counts = dict(self.counts)
        if any(c < 0 for c in counts.values()):
            raise ValueError("category counts must be non-negative")
        if sum(counts.values()) <= 0:
            raise ValueError("distribution has no samples")
        object.__setattr__(self, "counts", counts)

    @classmethod
    def from_proportions(cls, proportions: Sequence[float]) -> CategoryDistribution:
        """Wrap raw proportions (or any non-negative weights)."""
        return cls({f"c{i}": p for i, p in enumerate(proportions)})

    @property
    def n(self) -> int:
        return len(self.counts)

    def values(self) -> np.ndarray:
        return np.array(list(self.counts.values()), dtype=np.float64)

    @property
    def proportions(self) -> np.ndarray:
        x = self.values()
        return x / x.sum()

    @property
    def mean(self) -> float:
        return float(self.values().mean())

    @property
    def std(self) -> float:
        # population standard deviation
        return float(self.values().std(ddof=0))


def _as_matrix(vectors) -> np.ndarray:
    rows = [v.values if isinstance(v, EmbeddingVector) else v for v in vectors]
    return np.asarray(rows, dtype=np.float64)


def cohesion(vectors: Sequence[EmbeddingVector] | np.ndarray) -> float:
    """Mean cosine similarity over unordered pairs of vectors."""
    m = _as_matrix(vectors)
    n = len(m)
    if n < 2:
        raise DegenerateCategory(f"cohesion needs at least 2 vectors, got {n}")
    norms = np.linalg.norm(m, axis=1)
    if np.any(norms == 0):
        raise ZeroVector("cohesion is undefined for an all-zero vector")
    unit = m / norms[:, None]
    sims = unit @ unit.T
    upper = sims[np.triu_indices(n, k=1)]
    return float(np.clip(upper.mean(), -1.0, 1.0))


def normalized_entropy(d: CategoryDistribution) -> float:
    if d.n < 2:
        raise DegenerateDistribution("normalized entropy needs at least 2 categories")
    p = d.proportions
    p = p[p > 0]
    h = -np.sum(p * np.log2(p))
    return float(np.clip(h / np.log2(d.n), 0.0, 1.0))


def gini(d: CategoryDistribution) -> float:
    """Gini coefficient from proportions sorted ascending.

    ``G = (n + 1 - 2 * sum_i (n - i + 1) * p_i) / n`` for ``i = 1..n``,
    evaluated on the raw values as ``(2 * sum_i i * x_i - (n + 1) * sum x) / (n * sum x)``
    so integer counts cancel exactly.
    """
    x = np.sort(d.values())
    n = len(x)
    total = x.sum()
    ranks = np.arange(1, n + 1, dtype=np.float64)
    g = (2 * np.dot(ranks, x) - (n + 1) * total) / (n * total)
    return float(max(g, 0.0))


def variation_coefficient(d: CategoryDistribution) -> float:
    mu = d.mean
    if mu <= 0:
        raise ZeroMean("coefficient of variation needs a positive mean")
    return d.std / mu


@dataclass(frozen=True)
class MetricThresholds:
    cohesion_merge: float = 0.9
    entropy_min: float = 0.8
    gini_max: float = 0.4
    cv_max: float = 0.5

    def __post_init__(self):
        if not -1 <= self.cohesion_merge <= 1:
            raise ValueError("cohesion threshold outside [-1, 1]")
        if not 0 <= self.entropy_min <= 1 or not 0 <= self.gini_max <= 1:
            raise ValueError("entropy/gini thresholds outside [0, 1]")
        if self.cv_max < 0:
            raise ValueError("cv threshold must be non-negative")


def metric_flags(cohesion_by_category: Mapping[str, float | None], entropy: float | None,
                 gini_value: float | None, cv: float | None,
                 thresholds: MetricThresholds = MetricThresholds()) -> dict[str, object]:
    """Threshold flags; a pure function of the metric values."""
    merge = sorted(c for c, v in cohesion_by_category.items()
                   if v is not None and v > thresholds.cohesion_merge)
    return {
        "cohesion_merge": merge,
        "entropy_low": entropy is not None and entropy < thresholds.entropy_min,
        "gini_high": gini_value is not None and gini_value > thresholds.gini_max,
        "cv_high": cv is not None and cv > thresholds.cv_max,
    }


@dataclass
class MetricReport:
    counts: dict[str, int]
    cohesion: dict[str, float | None]
    normalized_entropy: float | None
    gini: float
    variation_coefficient: float
    flags: dict[str, object]
    granularity: str = "label"
    thresholds: MetricThresholds = field(default_factory=MetricThresholds)

    @property
    def raised(self) -> list[str]:
        return [k for k, v in self.flags.items() if v]

    def recheck_flags(self) -> dict[str, object]:
        return metric_flags(self.cohesion, self.normalized_entropy, self.gini,
                            self.variation_coefficient, self.thresholds)

    def to_dict(self) -> dict:
        return {
            "granularity": self.granularity,
            "counts": self.counts,
            "cohesion": self.cohesion,
            "normalized_entropy": self.normalized_entropy,
            "gini": self.gini,
            "variation_coefficient": self.variation_coefficient,
            "flags": self.flags,
            "thresholds": self.thresholds.__dict__,
        }

    def table_rows(self) -> list[dict]:
        """One row per category, plot-ready."""
        return [
            {"category": c, "count": n, "cohesion": self.cohesion.get(c)}
            for c, n in self.counts.items()
        ]


LEVEL_ORDER = {"coarse": 0, "medium": 1, "fine": 2}


def label_key(tax: Taxonomy | None, granularity: str | None) -> Callable:
    """Function mapping a label to its category name at ``granularity``.

    Labels finer than the requested level are lifted; coarser ones are kept.
    """
    def key(label):
        if tax is None or granularity in (None, "label"):
            return label.name
        node = tax.node(label)
        if LEVEL_ORDER[node.level] <= LEVEL_ORDER[granularity]:
            return node.name
        return tax.ancestor(label, granularity).name
    return key


def report_from_counts(counts: Mapping[str, int], cohesion_by_category=None, *,
                       granularity: str = "label",
                       thresholds: MetricThresholds = MetricThresholds()) -> MetricReport:
    d = CategoryDistribution(counts)
    entropy = normalized_entropy(d) if d.n >= 2 else None
    g = gini(d)
    cv = variation_coefficient(d)
    coh = dict(cohesion_by_category or {})
    return MetricReport(dict(counts), coh, entropy, g, cv,
                        metric_flags(coh, entropy, g, cv, thresholds), granularity, thresholds)


def category_cohesion(surfaces: Mapping[str, Sequence[str]], emb_backend, *,
                      cap: int = COHESION_CAP, seed: int = 0) -> dict[str, float | None]:
    """Cohesion per category from entity surface embeddings; ``None`` if < 2 entities."""
    out: dict[str, float | None] = {}
    for category in sorted(surfaces):
        texts = list(surfaces[category])
        if len(texts) < 2:
            out[category] = None
            continue
        if len(texts) > cap:
            texts = random.Random(f"{seed}:{category}").sample(texts, cap)
        out[category] = cohesion(emb_backend.embed_texts(texts))
    return out


def metric_report(ds: Sequence[AnnotatedSentence], emb_backend=None, *,
                  tax: Taxonomy | None = None, granularity: str | None = None,
                  cap: int = COHESION_CAP, seed: int = 0,
                  thresholds: MetricThresholds = MetricThresholds()) -> MetricReport:
    """Metrics over gold label counts; cohesion only when an embedding backend is given."""
    key = label_key(tax, granularity)
    counts: Counter = Counter()
    surfaces = defaultdict(list)
    for rec in ds:
        for span, label in rec.entities:
            if label.is_unknown:
                continue
            name = key(label)
            counts[name] += 1
            surfaces[name].append(span.surface)
    counts = dict(sorted(counts.items()))
    if emb_backend is not None:
        coh = category_cohesion(surfaces, emb_backend, cap=cap, seed=seed)
    else:
        coh = {c: None for c in counts}
    skipped = [c for c, v in coh.items() if v is None]
    if emb_backend is not None and skipped:
        logger.info("cohesion skipped for %d categories with < 2 entities", len(skipped))
    return report_from_counts(counts, coh, granularity=granularity or "label",
                              thresholds=thresholds)
