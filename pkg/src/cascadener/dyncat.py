"""Four-round dynamic re-categorization of labels and per-record type lists.

Rounds run in a fixed order: mix granularities, replace synonyms, remove
irrelevant types, merge rare types into ``Miscellaneous``. Each round reads
its own subset of the quality metrics and scales its edit probability by
``damping`` or ``boost`` per raised flag. Every edit is logged so the audit
log alone replays the run.
"""

from __future__ import annotations

import hashlib
import json
import math
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Mapping, Sequence

from .core import LEVELS, MISC_NAME, AnnotatedSentence, Label, Taxonomy, TypeList
from .dataio import dumps_record
from .errors import DegenerateCategory, UnknownNode, UnresolvableLabel
from .metrics import (
    CategoryDistribution,
    MetricThresholds,
    category_cohesion,
    gini,
    normalized_entropy,
    variation_coefficient,
)

ROUNDS = ("mix_granularities", "replace_synonyms", "remove_irrelevant", "merge_miscellaneous")


@dataclass(frozen=True)
class DynCatConfig:
    seed: int = 0
    thresholds: MetricThresholds = field(default_factory=MetricThresholds)
    mix_prob: float = 0.3
    synonym_prob: float = 0.2
    remove_prob: float = 0.5
    merge_prob: float = 0.05
    damping: float = 0.5
    boost: float = 1.5
    rare_percentile: float = 10.0
    cohesion_low: float = 0.5
    max_passes: int = 10
    cohesion_cap: int = 200
    synonym_table: Mapping[str, Sequence[str]] = field(default_factory=dict)

    def __post_init__(self):
        for name in ("mix_prob", "synonym_prob", "remove_prob", "merge_prob"):
            if not 0.0 <= getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1]")
        if self.damping < 0 or self.boost < 0:
            raise ValueError("damping and boost must be non-negative")
        if not 0 <= self.rare_percentile <= 100:
            raise ValueError("rare_percentile must lie in [0, 100]")


def load_synonyms(path: str | Path | None = None) -> dict[str, list[str]]:
    """Read ``name<TAB>syn1|syn2`` lines; ``None`` loads the bundled starter table."""
    if path is None:
        text = resources.files("cascadener.data").joinpath("synonyms.tsv").read_text("utf-8")
    else:
        text = Path(path).read_text("utf-8")
    table = {}
    for line in text.splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        name, _, syns = line.partition("\t")
        table[name.strip()] = [s.strip() for s in syns.split("|") if s.strip()]
    return table


@dataclass(frozen=True)
class DynamicRecord:
    record: AnnotatedSentence
    provenance: tuple[dict, ...] = ()

    @property
    def id(self) -> str:
        return self.record.id


# --- edits --------------------------------------------------------------------


def apply_edit(rec: AnnotatedSentence, edit: Mapping) -> AnnotatedSentence:
    """Apply one logged edit to a record.

    ``rename`` rewrites a type-list entry and every label carrying that name
    (optionally only at ``from_level``), merging duplicates. ``drop`` removes
    a list entry that no label uses.
    """
    names = list(rec.type_list.names)
    entities = rec.entities
    if edit["op"] == "rename":
        old, new = edit["from"], edit["to"]
        from_level, to_level = edit.get("from_level"), edit.get("to_level")
        if old in names:
            i = names.index(old)
            if new in names and new != old:
                del names[i]
            else:
                names[i] = new
        relabeled = []
        for span, label in entities:
            if label.name == old and not label.is_unknown and \
                    (from_level is None or label.level == from_level):
                label = Label(new, to_level or label.level)
            relabeled.append((span, label))
        entities = tuple(relabeled)
    elif edit["op"] == "drop":
        if any(label.name == edit["name"] for label in rec.labels):
            raise ValueError(f"refusing to drop gold label {edit['name']!r} from {rec.id}")
        names.remove(edit["name"])
    else:
        raise ValueError(f"unknown edit op {edit['op']!r}")
    return AnnotatedSentence(rec.sentence, entities, TypeList(names, rec.type_list.allow_unknown))


@dataclass
class AuditLog:
    entries: list[dict] = field(default_factory=list)

    def add(self, **entry):
        self.entries.append(entry)

    def edits(self) -> list[dict]:
        return [e for e in self.entries if e["event"] == "edit"]

    def rounds(self) -> list[str]:
        """Round names in the order they started."""
        return [e["method"] for e in self.entries if e["event"] == "round_start"]

    def metrics(self) -> list[dict]:
        return [e for e in self.entries if e["event"] == "metrics"]

    def convergence(self) -> dict | None:
        for e in reversed(self.entries):
            if e["event"] == "convergence":
                return e
        return None

    def to_jsonl(self) -> str:
        return "".join(json.dumps(e, ensure_ascii=False, sort_keys=True) + "\n"
                       for e in self.entries)

    def write(self, path: str | Path):
        Path(path).write_text(self.to_jsonl(), encoding="utf-8", newline="\n")

    @classmethod
    def read(cls, path: str | Path) -> AuditLog:
        lines = Path(path).read_text("utf-8").splitlines()
        return cls([json.loads(line) for line in lines if line.strip()])


def replay(ds: Sequence[AnnotatedSentence], log: AuditLog) -> list[AnnotatedSentence]:
    """Re-apply every logged edit to the input corpus, without any randomness."""
    by_id = {rec.id: rec for rec in _records(ds)}
    for edit in log.edits():
        by_id[edit["record"]] = apply_edit(by_id[edit["record"]], edit["edit"])
    return [by_id[rec.id] for rec in _records(ds)]


# --- helpers ------------------------------------------------------------------


def _records(ds) -> list[AnnotatedSentence]:
    return [d.record if isinstance(d, DynamicRecord) else d for d in ds]


def _dynamic(ds) -> list[DynamicRecord]:
    return [d if isinstance(d, DynamicRecord) else DynamicRecord(d) for d in ds]


def _rng(cfg: DynCatConfig, round_name: str, pass_no: int, record_id: str) -> random.Random:
    digest = hashlib.sha256(f"{cfg.seed}\0{round_name}\0{pass_no}\0{record_id}".encode()).digest()
    return random.Random(int.from_bytes(digest[:8], "big"))


def _clamp(p: float) -> float:
    return min(1.0, max(0.0, p))


def canonical_map(cfg: DynCatConfig) -> dict[str, str]:
    """Synonym -> original name, so synonyms count as the same category."""
    out = {}
    for name, syns in cfg.synonym_table.items():
        for s in syns:
            out.setdefault(s, name)
    return out


def label_counts(ds, cfg: DynCatConfig) -> Counter:
    canon = canonical_map(cfg)
    counts = Counter()
    for rec in _records(ds):
        for label in rec.labels:
            if not label.is_unknown:
                counts[canon.get(label.name, label.name)] += 1
    return counts


def option_counts(ds, cfg: DynCatConfig) -> Counter:
    canon = canonical_map(cfg)
    counts = Counter()
    for rec in _records(ds):
        for name in rec.type_list.names:
            counts[canon.get(name, name)] += 1
    return counts


def distribution_metrics(counts: Mapping[str, int]) -> dict[str, float | None]:
    if not counts or sum(counts.values()) == 0:
        return {"categories": 0, "entropy": None, "gini": None, "cv": None}
    d = CategoryDistribution(counts)
    return {
        "categories": d.n,
        "entropy": normalized_entropy(d) if d.n >= 2 else None,
        "gini": gini(d),
        "cv": variation_coefficient(d),
    }


def _flags(m: Mapping, th: MetricThresholds) -> dict[str, bool]:
    return {
        "entropy_low": m["entropy"] is not None and m["entropy"] < th.entropy_min,
        "gini_high": m["gini"] is not None and m["gini"] > th.gini_max,
        "cv_high": m["cv"] is not None and m["cv"] > th.cv_max,
    }


def _surfaces(ds, cfg: DynCatConfig) -> dict[str, list[str]]:
    canon = canonical_map(cfg)
    out = defaultdict(list)
    for rec in _records(ds):
        for span, label in rec.entities:
            if not label.is_unknown:
                out[canon.get(label.name, label.name)].append(span.surface)
    return out


def _cohesion(ds, cfg, emb_backend) -> dict[str, float | None]:
    if emb_backend is None:
        return {}
    try:
        return category_cohesion(_surfaces(ds, cfg), emb_backend, cap=cfg.cohesion_cap,
                                 seed=cfg.seed)
    except DegenerateCategory:
        return {}


def _log_metrics(log, round_name, stage, ds, cfg, cohesion=None):
    labels = distribution_metrics(label_counts(ds, cfg))
    options = distribution_metrics(option_counts(ds, cfg))
    entry = {"event": "metrics", "method": round_name, "stage": stage,
             "labels": labels, "options": options,
             "flags": _flags(labels, cfg.thresholds)}
    if cohesion:
        entry["cohesion"] = dict(sorted(cohesion.items()))
    if log is not None:
        log.entries.append(entry)
    return entry


class _Editor:
    """Applies edits to one record while recording them."""

    def __init__(self, drec: DynamicRecord, round_name: str, log: AuditLog | None):
        self.rec = drec.record
        self.provenance = list(drec.provenance)
        self.round_name = round_name
        self.log = log

    def apply(self, edit: dict, pass_no: int = 0):
        self.rec = apply_edit(self.rec, edit)
        entry = {"round": self.round_name, "pass": pass_no, "edit": edit}
        self.provenance.append(entry)
        if self.log is not None:
            self.log.add(event="edit", method=self.round_name, record=self.rec.id,
                         **{"pass": pass_no, "edit": edit})

    def result(self) -> DynamicRecord:
        return DynamicRecord(self.rec, tuple(self.provenance))


# --- round 1: mixing granularities ----------------------------------------------


def _entry_level(tax: Taxonomy, rec: AnnotatedSentence, name: str) -> str | None:
    for label in rec.labels:
        if label.name == name and label.level in LEVELS:
            return label.level
    try:
        return tax.node(name).level
    except UnknownNode:
        return None


def _lift_edit(tax: Taxonomy, name: str, level: str) -> dict | None:
    parent = tax.parent(Label(name, level))
    if parent is None:
        return None
    return {"op": "rename", "from": name, "to": parent.name,
            "from_level": level, "to_level": parent.level}


def _parent_cohesion(tax, ds, cfg, emb_backend) -> dict[tuple[str, str], float | None]:
    """Cohesion of all entities that sit under each non-leaf node."""
    if emb_backend is None:
        return {}
    groups = defaultdict(list)
    for rec in _records(ds):
        for span, label in rec.entities:
            if label.is_unknown or label not in tax:
                continue
            for anc in tax.path(label)[:-1]:
                groups[(anc.level, anc.name)].append(span.surface)
    keyed = {f"{lvl}\0{name}": v for (lvl, name), v in groups.items()}
    coh = category_cohesion(keyed, emb_backend, cap=cfg.cohesion_cap, seed=cfg.seed)
    return {tuple(k.split("\0")): v for k, v in coh.items()}


def _check_resolvable(ds, tax: Taxonomy, cfg: DynCatConfig):
    canon = canonical_map(cfg)
    for rec in _records(ds):
        for label in rec.labels:
            if label.is_unknown or label.name == MISC_NAME or label.name in canon:
                continue
            if label not in tax:
                raise UnresolvableLabel(f"label {label.name!r} in {rec.id} is not in the taxonomy")


def mix_granularities(ds, tax: Taxonomy, cfg: DynCatConfig, *, emb_backend=None,
                      log: AuditLog | None = None) -> list[DynamicRecord]:
    """Lift type-list entries (and their labels) to coarser ancestors.

    A first pass lifts each entry one level with probability ``mix_prob``,
    and a fine entry a second level with the same probability. The
    probability is damped for entries whose parent group is already highly
    cohesive. While entropy, Gini or CV stay out of bounds, rebalancing passes
    lift below-mean categories (or pull descendants up into a below-mean
    coarse category) with a boosted probability.
    """
    name = ROUNDS[0]
    _check_resolvable(ds, tax, cfg)
    th = cfg.thresholds
    records = _dynamic(ds)
    parent_coh = _parent_cohesion(tax, ds, cfg, emb_backend)

    def p_for(entry_name, level):
        p = cfg.mix_prob
        parent = tax.parent(Label(entry_name, level))
        coh = parent_coh.get((parent.level, parent.name)) if parent else None
        if coh is not None and coh > th.cohesion_merge:
            p *= cfg.damping
        return _clamp(p)

    out = []
    for drec in records:
        ed = _Editor(drec, name, log)
        rng = _rng(cfg, name, 0, drec.id)
        for entry in list(ed.rec.type_list.names):
            level = _entry_level(tax, ed.rec, entry)
            if level not in ("medium", "fine"):
                continue
            p = p_for(entry, level)
            if rng.random() >= p:
                continue
            edit = _lift_edit(tax, entry, level)
            ed.apply(edit)
            if level == "fine" and rng.random() < p:
                ed.apply(_lift_edit(tax, edit["to"], edit["to_level"]))
        out.append(ed.result())
    _log_metrics(log, name, "pass 0", out, cfg)

    canon = canonical_map(cfg)
    for pass_no in range(1, cfg.max_passes + 1):
        counts = label_counts(out, cfg)
        m = distribution_metrics(counts)
        flags = _flags(m, th)
        if not (flags["entropy_low"] or flags["gini_high"] or flags["cv_high"]) \
                or cfg.mix_prob == 0:
            break
        mean = sum(counts.values()) / len(counts)
        rare = {c for c, n in counts.items() if n < mean}
        p = _clamp(cfg.mix_prob * cfg.boost ** pass_no)
        changed = False
        next_out = []
        for drec in out:
            ed = _Editor(drec, name, log)
            rng = _rng(cfg, name, pass_no, drec.id)
            for entry in list(ed.rec.type_list.names):
                level = _entry_level(tax, ed.rec, entry)
                if level not in LEVELS or canon.get(entry, entry) != entry:
                    continue
                path = tax.path(Label(entry, level))
                # lift a rare liftable category, or pull an entry into a rare ancestor
                wants = (entry in rare and level != "coarse") or \
                    any(anc.name in rare for anc in path[:-1])
                if not wants or rng.random() >= p:
                    continue
                ed.apply(_lift_edit(tax, entry, level), pass_no)
                changed = True
            next_out.append(ed.result())
        out = next_out
        _log_metrics(log, name, f"pass {pass_no}", out, cfg)
        if not changed and p >= 1.0:
            break
    return out


# --- round 2: synonyms ----------------------------------------------------------


def replace_synonyms(ds, cfg: DynCatConfig, *, log: AuditLog | None = None) -> list[DynamicRecord]:
    """Swap type names for a seeded choice of synonym, jointly in list and labels.

    High dispersion (CV) boosts the substitution rate; high Gini damps it.
    """
    name = ROUNDS[1]
    table = cfg.synonym_table
    flags = _flags(distribution_metrics(label_counts(ds, cfg)), cfg.thresholds)
    p = cfg.synonym_prob
    if flags["cv_high"]:
        p *= cfg.boost
    if flags["gini_high"]:
        p *= cfg.damping
    p = _clamp(p)
    out = []
    for drec in _dynamic(ds):
        ed = _Editor(drec, name, log)
        rng = _rng(cfg, name, 0, drec.id)
        for entry in list(ed.rec.type_list.names):
            options = [s for s in table.get(entry, ()) if s not in ed.rec.type_list.names]
            if not options or p == 0:
                continue
            if rng.random() < p:
                ed.apply({"op": "rename", "from": entry, "to": rng.choice(options)})
        out.append(ed.result())
    return out


# --- round 3: irrelevant types ----------------------------------------------------


def remove_irrelevant(ds, cfg: DynCatConfig, *, emb_backend=None,
                      log: AuditLog | None = None) -> list[DynamicRecord]:
    """Drop type-list entries that label nothing in the record.

    The rate is damped when the option distribution's entropy is low and,
    per entry, when that category's cohesion is below ``cohesion_low``.
    Gold labels are never dropped and a list never empties.
    """
    name = ROUNDS[2]
    canon = canonical_map(cfg)
    options = distribution_metrics(option_counts(ds, cfg))
    p = cfg.remove_prob
    if options["entropy"] is not None and options["entropy"] < cfg.thresholds.entropy_min:
        p *= cfg.damping
    coh = _cohesion(ds, cfg, emb_backend)
    out = []
    for drec in _dynamic(ds):
        ed = _Editor(drec, name, log)
        rng = _rng(cfg, name, 0, drec.id)
        gold = {label.name for label in ed.rec.labels}
        for entry in list(ed.rec.type_list.names):
            if entry in gold or len(ed.rec.type_list) == 1:
                continue
            pe = p
            c = coh.get(canon.get(entry, entry))
            if c is not None and c < cfg.cohesion_low:
                pe *= cfg.damping
            if rng.random() < _clamp(pe):
                ed.apply({"op": "drop", "name": entry})
        out.append(ed.result())
    return out


# --- round 4: miscellaneous -------------------------------------------------------


def rare_types(counts: Mapping[str, int], cfg: DynCatConfig, pass_no: int = 0) -> list[str]:
    """Lowest-count categories, ``ceil(n * q / 100)`` of them, seeded tie-break."""
    candidates = [c for c in counts if c != MISC_NAME]
    if len(candidates) < 2:
        return []
    k = max(1, math.ceil(len(candidates) * cfg.rare_percentile / 100))
    rng = random.Random(f"{cfg.seed}:rare:{pass_no}")
    tiebreak = {c: rng.random() for c in sorted(candidates)}
    return sorted(candidates, key=lambda c: (counts[c], tiebreak[c]))[:k]


def _violations(m: Mapping, th: MetricThresholds) -> int:
    return sum(_flags(m, th).values())


def merge_miscellaneous(ds, tax: Taxonomy | None, cfg: DynCatConfig, *, emb_backend=None,
                        log: AuditLog | None = None) -> list[DynamicRecord]:
    """Fold the rarest types into ``Miscellaneous``.

    The merge rate starts at ``merge_prob`` and is boosted once per raised
    flag (cohesion merge candidates, low entropy, high Gini, high CV). A pass
    that increases the number of violated distribution thresholds is undone.
    """
    name = ROUNDS[3]
    canon = canonical_map(cfg)
    th = cfg.thresholds
    coh = _cohesion(ds, cfg, emb_backend)
    current = _dynamic(ds)
    for pass_no in range(cfg.max_passes):
        counts = label_counts(current, cfg)
        m = distribution_metrics(counts)
        flags = _flags(m, th)
        merge_flag = any(v is not None and v > th.cohesion_merge for v in coh.values())
        raised = sum(flags.values()) + merge_flag
        if pass_no > 0 and raised == 0:
            break
        p = _clamp(cfg.merge_prob * cfg.boost ** raised)
        rare = set(rare_types(counts, cfg, pass_no))
        if not rare or p == 0:
            break
        staged_log = AuditLog()
        nxt = []
        for drec in current:
            ed = _Editor(drec, name, staged_log)
            rng = _rng(cfg, name, pass_no, drec.id)
            for entry in list(ed.rec.type_list.names):
                if canon.get(entry, entry) in rare and rng.random() < p:
                    ed.apply({"op": "rename", "from": entry, "to": MISC_NAME}, pass_no)
            nxt.append(ed.result())
        after = distribution_metrics(label_counts(nxt, cfg))
        if _violations(after, th) > _violations(m, th):
            if log is not None:
                log.add(event="pass_reverted", method=name, **{"pass": pass_no})
            break
        if log is not None:
            log.entries.extend(staged_log.entries)
        current = nxt
        if raised == 0:
            break
    return current


# --- driver -------------------------------------------------------------------


def _coarse_projection(ds, tax: Taxonomy, cfg: DynCatConfig) -> Counter:
    canon = canonical_map(cfg)
    counts = Counter()
    for rec in _records(ds):
        for label in rec.labels:
            if label.is_unknown:
                continue
            base = canon.get(label.name, label.name)
            if base == MISC_NAME:
                counts[MISC_NAME] += 1
                continue
            level = label.level if label.level in LEVELS else tax.node(base).level
            counts[tax.ancestor(Label(base, level), "coarse").name] += 1
    return counts


def _label_consistent(ds) -> bool:
    return all(rec.type_list.admits(label) for rec in _records(ds) for label in rec.labels)


def run_dynamic_categorization(ds: Sequence[AnnotatedSentence], tax: Taxonomy,
                               cfg: DynCatConfig, *, emb_backend=None
                               ) -> tuple[list[DynamicRecord], AuditLog]:
    """Apply the four rounds in order with metric snapshots in between.

    The closing ``convergence`` entry compares final label-distribution
    metrics with their targets. A target counts as attainable when the
    all-coarse projection of the input (reachable by lifting alone) meets it.
    """
    log = AuditLog()
    log.add(event="config", seed=cfg.seed, thresholds=cfg.thresholds.__dict__,
            probabilities={"mix": cfg.mix_prob, "synonym": cfg.synonym_prob,
                           "remove": cfg.remove_prob, "merge": cfg.merge_prob})
    _log_metrics(log, "input", "before", ds, cfg, _cohesion(ds, cfg, emb_backend))
    current = _dynamic(ds)
    for round_name in ROUNDS:
        log.add(event="round_start", method=round_name)
        if round_name == "mix_granularities":
            current = mix_granularities(current, tax, cfg, emb_backend=emb_backend, log=log)
        elif round_name == "replace_synonyms":
            current = replace_synonyms(current, cfg, log=log)
        elif round_name == "remove_irrelevant":
            current = remove_irrelevant(current, cfg, emb_backend=emb_backend, log=log)
        else:
            current = merge_miscellaneous(current, tax, cfg, emb_backend=emb_backend, log=log)
        coh = _cohesion(current, cfg, emb_backend) if round_name in (ROUNDS[0], ROUNDS[2]) else None
        entry = _log_metrics(log, round_name, "after", current, cfg, coh)
        entry["label_consistent"] = _label_consistent(current)

    bound = distribution_metrics(_coarse_projection(ds, tax, cfg))
    final = distribution_metrics(label_counts(current, cfg))
    th = cfg.thresholds
    targets = {}
    for metric, limit, ok in (
        ("entropy", th.entropy_min, lambda v, t: v is not None and v >= t),
        ("gini", th.gini_max, lambda v, t: v is not None and v <= t),
        ("cv", th.cv_max, lambda v, t: v is not None and v <= t),
    ):
        targets[metric] = {"threshold": limit, "bound": bound[metric],
                           "attainable": ok(bound[metric], limit),
                           "final": final[metric], "met": ok(final[metric], limit)}
    log.add(event="convergence", targets=targets)
    return current, log


def dump_records(ds: Iterable[DynamicRecord | AnnotatedSentence]) -> str:
    """Canonical text form of a corpus (used for byte-identity checks)."""

    return "".join(dumps_record(rec) + "\n" for rec in _records(ds))
