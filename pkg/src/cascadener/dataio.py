"""Corpus I/O (JSONL, CoNLL BIO), stratified sampling, splitting, decontamination."""

from __future__ import annotations

import json
import math
import random
import re
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .core import LABEL_LEVELS, UNKNOWN, AnnotatedSentence, EntitySpan, Label, Sentence, TypeList
from .errors import ParseError, TagSequenceError, ValidationError


# --- JSONL corpus -----------------------------------------------------------


def record_to_dict(rec: AnnotatedSentence) -> dict:
    return {
        "id": rec.sentence.id,
        "language": rec.sentence.language,
        "text": rec.sentence.text,
        "entities": [
            {
                "start": span.start,
                "end": span.end,
                "label": label.name,
                "level": None if label.is_unknown else label.level,
            }
            for span, label in rec.entities
        ],
        "type_list": list(rec.type_list.names),
        "allow_unknown": rec.type_list.allow_unknown,
    }


def record_from_dict(obj: Mapping, line: int | None = None) -> AnnotatedSentence:
    try:
        text = obj["text"]
        sentence = Sentence(str(obj["id"]), text, obj.get("language", "en"))
        entities = []
        for ent in obj.get("entities", []):
            start, end = int(ent["start"]), int(ent["end"])
            if not 0 <= start < end <= len(text):
                raise ValidationError(f"entity range [{start}, {end}) invalid for text of "
                                      f"length {len(text)}", line)
            level = ent.get("level")
            if level is None:
                label = UNKNOWN
            elif level in LABEL_LEVELS:
                label = Label(ent["label"], level)
            else:
                raise ValidationError(f"unknown label level {level!r}", line)
            entities.append((EntitySpan.of(text, start, end), label))
        type_list = TypeList(tuple(obj.get("type_list", [])), bool(obj.get("allow_unknown", False)))
    except ValidationError:
        raise
    except (KeyError, TypeError) as exc:
        raise ParseError(f"missing or malformed field: {exc}", line) from exc
    except ValueError as exc:
        raise ValidationError(str(exc), line) from exc
    return AnnotatedSentence(sentence, tuple(entities), type_list)


def dumps_record(rec: AnnotatedSentence) -> str:
    return json.dumps(record_to_dict(rec), ensure_ascii=False, separators=(",", ":"))


def read_corpus(path: str | Path) -> list[AnnotatedSentence]:
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise ParseError(f"invalid JSON: {exc.msg}", lineno) from exc
            out.append(record_from_dict(obj, lineno))
    return out


def write_corpus(ds: Iterable[AnnotatedSentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in ds:
            fh.write(dumps_record(rec) + "\n")


def write_jsonl(rows: Iterable[Mapping], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


# --- CoNLL BIO ----------------------------------------------------------------


def tokens_to_record(tokens: Sequence[str], tags: Sequence[str], sentence_id: str,
                     language: str = "en", lenient: bool = False,
                     line: int | None = None) -> AnnotatedSentence:
    """Join tokens with single spaces and turn BIO tags into character spans."""
    offsets = []
    pos = 0
    for tok in tokens:
        offsets.append((pos, pos + len(tok)))
        pos += len(tok) + 1
    text = " ".join(tokens)
    entities = []
    current = None  # [start, end, type]
    for i, tag in enumerate(tags):
        prefix, _, etype = tag.partition("-")
        if tag == "O":
            if current:
                entities.append(current)
            current = None
            continue
        if prefix not in ("B", "I") or not etype:
            raise TagSequenceError(f"bad tag {tag!r}", line)
        if prefix == "I" and current is not None and current[2] == etype:
            current[1] = offsets[i][1]
            continue
        if prefix == "I" and not lenient:
            raise TagSequenceError(f"{tag!r} at token {i} does not continue an entity", line)
        if current:
            entities.append(current)
        current = [offsets[i][0], offsets[i][1], etype]
    if current:
        entities.append(current)
    ents = tuple((EntitySpan.of(text, s, e), Label(t, "flat")) for s, e, t in entities)
    type_list = TypeList(tuple(dict.fromkeys(t for _, _, t in entities)))
    return AnnotatedSentence(Sentence(sentence_id, text, language), ents, type_list)


def read_conll(path: str | Path, language: str = "en", lenient: bool = False,
               type_list: Sequence[str] | None = None) -> list[AnnotatedSentence]:
    """Read token-per-line BIO data (token first column, tag last column).

    Without ``type_list`` each record's list holds the types it mentions.
    """
    stem = Path(path).stem
    out = []
    tokens, tags, first_line = [], [], None

    def flush():
        if tokens:
            rec = tokens_to_record(tokens, tags, f"{stem}-{len(out)}", language, lenient,
                                   first_line)
            if type_list is not None:
                rec = AnnotatedSentence(rec.sentence, rec.entities, TypeList(tuple(type_list)))
            out.append(rec)
        tokens.clear()
        tags.clear()

    with open(path, encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.strip()
            if not line or line.startswith("-DOCSTART-"):
                flush()
                continue
            cols = line.split()
            if len(cols) < 2:
                raise ParseError(f"expected token and tag columns, got {line!r}", lineno)
            if not tokens:
                first_line = lineno
            tokens.append(cols[0])
            tags.append(cols[-1])
    flush()
    return out


def _tokens(text: str, cuts: set[int]) -> list[tuple[int, int]]:
    """Whitespace tokens, further split at every offset in ``cuts``."""
    toks = []
    for m in re.finditer(r"\S+", text):
        inner = sorted(c for c in cuts if m.start() < c < m.end())
        edges = [m.start(), *inner, m.end()]
        toks += list(zip(edges, edges[1:]))
    return toks


def record_to_bio(rec: AnnotatedSentence) -> list[tuple[str, str]]:
    """Tokens with BIO tags; tokens break at entity edges so spans always align."""
    text = rec.sentence.text
    cuts = {x for span in rec.spans for x in (span.start, span.end)}
    toks = _tokens(text, cuts)
    tags = ["O"] * len(toks)
    starts = {s: i for i, (s, _) in enumerate(toks)}
    ends = {e: i for i, (_, e) in enumerate(toks)}
    for span, label in sorted(rec.entities, key=lambda e: e[0].start):
        if span.start not in starts or span.end not in ends:
            raise TagSequenceError(f"span {span.surface!r} in {rec.id} has whitespace at an edge")
        first, last = starts[span.start], ends[span.end]
        tags[first] = f"B-{label.name}"
        for i in range(first + 1, last + 1):
            tags[i] = f"I-{label.name}"
    return [(text[s:e], tag) for (s, e), tag in zip(toks, tags)]


def write_conll(ds: Iterable[AnnotatedSentence], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in ds:
            for tok, tag in record_to_bio(rec):
                fh.write(f"{tok}\t{tag}\n")
            fh.write("\n")


# --- sampling and splitting -----------------------------------------------------


def stratum_sizes(counts: Mapping[str, int], total: int) -> dict[str, int]:
    """``s_i = min(floor(S / m), n_i)`` for every category."""
    if total <= 0:
        raise ValueError("sample size must be positive")
    m = len(counts)
    if m == 0:
        return {}
    per = total // m
    return {c: min(per, n) for c, n in counts.items()}


@dataclass
class SampleResult:
    records: list[AnnotatedSentence]
    targets: dict[str, int]
    drawn: dict[str, int]
    effective: dict[str, int] = field(default_factory=dict)

    def manifest(self) -> dict:
        return {"targets": self.targets, "drawn": self.drawn, "effective": self.effective,
                "sentences": len(self.records)}


def stratified_sample(ds: Sequence[AnnotatedSentence], size: int, seed: int = 0) -> SampleResult:
    """Draw ``s_i`` labels per category without replacement.

    The sample is every sentence holding a drawn label, in corpus order;
    co-occurring labels ride along and show up in ``effective``.
    """
    strata = defaultdict(list)
    for ri, rec in enumerate(ds):
        for ei, (_, label) in enumerate(rec.entities):
            strata[label.name].append((ri, ei))
    strata = dict(sorted(strata.items()))
    targets = stratum_sizes({c: len(v) for c, v in strata.items()}, size)
    rng = random.Random(seed)
    chosen = set()
    drawn = {}
    for category, members in strata.items():
        picks = rng.sample(members, targets[category])
        drawn[category] = len(picks)
        chosen.update(ri for ri, _ in picks)
    records = [ds[i] for i in sorted(chosen)]
    effective = defaultdict(int)
    for rec in records:
        for _, label in rec.entities:
            effective[label.name] += 1
    return SampleResult(records, targets, drawn, dict(sorted(effective.items())))


def apportion(total: int, ratios: Sequence[float]) -> list[int]:
    """Largest-remainder apportionment; ties go to the earlier part."""
    if not ratios or any(r < 0 for r in ratios) or sum(ratios) <= 0:
        raise ValueError("ratios must be non-negative with a positive sum")
    weight = sum(ratios)
    quotas = [total * r / weight for r in ratios]
    sizes = [math.floor(q) for q in quotas]
    remainders = sorted(range(len(ratios)), key=lambda i: (-(quotas[i] - sizes[i]), i))
    for i in remainders[: total - sum(sizes)]:
        sizes[i] += 1
    return sizes


def split_dataset(ds: Sequence, ratios: Sequence[float] = (1, 1, 3), seed: int = 0):
    sizes = apportion(len(ds), ratios)
    order = list(range(len(ds)))
    random.Random(seed).shuffle(order)
    parts = []
    pos = 0
    for n in sizes:
        idx = sorted(order[pos:pos + n])
        parts.append([ds[i] for i in idx])
        pos += n
    return tuple(parts)


# --- decontamination ------------------------------------------------------------


def _text(item) -> str:
    if isinstance(item, AnnotatedSentence):
        return item.sentence.text
    if isinstance(item, Sentence):
        return item.text
    return str(item)


def _unit_rows(vectors) -> np.ndarray:
    m = np.asarray([v.values for v in vectors], dtype=np.float64)
    norms = np.linalg.norm(m, axis=1, keepdims=True)
    norms[norms == 0] = 1.0
    return m / norms


def max_similarities(candidates: Sequence, reference: Sequence, emb_backend) -> list[float]:
    """Per candidate, the highest cosine similarity to any reference sentence."""
    if not candidates:
        return []
    if not reference:
        return [-1.0] * len(candidates)
    cand = _unit_rows(emb_backend.embed_texts([_text(c) for c in candidates]))
    ref = _unit_rows(emb_backend.embed_texts([_text(r) for r in reference]))
    return [float(x) for x in (cand @ ref.T).max(axis=1)]


def decontaminate(ds: Sequence, reference: Sequence, emb_backend, threshold: float = 0.8):
    """Split ``ds`` into (kept, excluded); excluded iff max similarity > threshold."""
    if not 0 < threshold <= 1:
        raise ValueError("threshold must lie in (0, 1]")
    sims = max_similarities(ds, reference, emb_backend)
    kept = [rec for rec, s in zip(ds, sims) if not s > threshold]
    excluded = [rec for rec, s in zip(ds, sims) if s > threshold]
    return kept, excluded
