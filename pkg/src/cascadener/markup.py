"""``##``-delimited entity markup: rendering, parsing and alignment recovery.

Generations that reproduce the source sentence (up to whitespace) are mapped
back position by position. Anything else goes through a character-level
longest-common-subsequence alignment against the source sentence.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .core import EntitySpan, Sentence
from .errors import AlignmentFailure, MalformedMarkup, MarkupError, OverlapError

DELIM = "##"

# fraction of a region's characters that must align for it to be kept
REGION_COVERAGE = 0.8
# fraction of the whole stripped generation that must align
GLOBAL_COVERAGE = 0.5

_WS = re.compile(r"\s+")


def split_marked(text: str) -> tuple[str, list[tuple[int, int]]]:
    """Strip delimiters; return the plain text and region ranges within it."""
    parts = text.split(DELIM)
    if len(parts) % 2 == 0:
        raise MalformedMarkup(f"odd number of {DELIM!r} delimiters in {text!r}")
    plain = []
    regions = []
    pos = 0
    for i, part in enumerate(parts):
        if i % 2 == 1:
            if not part:
                raise MalformedMarkup(f"empty marked region in {text!r}")
            regions.append((pos, pos + len(part)))
        plain.append(part)
        pos += len(part)
    return "".join(plain), regions


@dataclass(frozen=True)
class MarkedText:
    text: str
    source_id: str = ""

    def __post_init__(self):
        split_marked(self.text)

    @property
    def regions(self) -> list[tuple[int, int]]:
        return split_marked(self.text)[1]

    @property
    def plain(self) -> str:
        return split_marked(self.text)[0]

    def __str__(self):
        return self.text


def _check_renderable(text: str, spans: Sequence[EntitySpan]) -> list[EntitySpan]:
    ordered = sorted(spans, key=lambda s: (s.start, s.end))
    for a, b in zip(ordered, ordered[1:]):
        if a.overlaps(b):
            raise OverlapError(f"spans [{a.start}, {a.end}) and [{b.start}, {b.end}) overlap")
    if DELIM in text:
        raise MarkupError(f"sentence text already contains {DELIM!r}")
    for s in ordered:
        if s.end > len(text) or text[s.start:s.end] != s.surface:
            raise MarkupError(f"span {s} does not match the sentence text")
        # a '#' touching a delimiter makes the boundary ambiguous
        if (s.start > 0 and text[s.start - 1] == "#") or text[s.start] == "#" \
                or text[s.end - 1] == "#" or (s.end < len(text) and text[s.end] == "#"):
            raise MarkupError(f"span {s.surface!r} touches a '#' and cannot be delimited")
    return ordered


def render_marked(s: Sentence, spans: Sequence[EntitySpan]) -> MarkedText:
    text = s.text
    out = []
    pos = 0
    for span in _check_renderable(text, spans):
        out += [text[pos:span.start], DELIM, span.surface, DELIM]
        pos = span.end
    out.append(text[pos:])
    return MarkedText("".join(out), s.id)


def reembed_each(s: Sentence, spans: Sequence[EntitySpan]) -> list[MarkedText]:
    ordered = _check_renderable(s.text, spans)
    return [render_marked(s, [span]) for span in ordered]


# --- parsing --------------------------------------------------------------


@dataclass(frozen=True)
class MarkupParse:
    spans: list[EntitySpan]
    recovered: bool = False
    dropped_regions: int = 0


def _normalize(text: str) -> tuple[str, list[tuple[int, int]]]:
    """Collapse whitespace runs and trim; map each output char to its source run."""
    chars = []
    runs = []
    for m in re.finditer(r"\s+|\S", text):
        if m.group().isspace():
            chars.append(" ")
        else:
            chars.append(m.group())
        runs.append((m.start(), m.end()))
    # trim collapsed whitespace at both ends
    while chars and chars[0] == " ":
        chars.pop(0), runs.pop(0)
    while chars and chars[-1] == " ":
        chars.pop(), runs.pop()
    return "".join(chars), runs


def _strip_region(plain: str, a: int, b: int) -> tuple[int, int]:
    while a < b and plain[a].isspace():
        a += 1
    while b > a and plain[b - 1].isspace():
        b -= 1
    return a, b


def _map_normalized(plain, regions, original):
    norm_g, runs_g = _normalize(plain)
    norm_o, runs_o = _normalize(original)
    if norm_g != norm_o:
        return None
    # stripped-generation char index -> normalized position
    to_norm = {}
    for k, (lo, hi) in enumerate(runs_g):
        for i in range(lo, hi):
            to_norm[i] = k
    spans = []
    for a, b in regions:
        a, b = _strip_region(plain, a, b)
        if a == b:
            continue
        ks, ke = to_norm[a], to_norm[b - 1]
        start, end = runs_o[ks][0], runs_o[ke][1]
        spans.append(EntitySpan.of(original, start, end))
    return spans


def lcs_table(a: str, b: str) -> np.ndarray:
    """Full LCS length table, shape ``(len(a)+1, len(b)+1)``.

    Rows are filled with a running maximum: since row ``i-1`` is
    non-decreasing, ``L[i, j] = max_{j' <= j} max(L[i-1, j'], L[i-1, j'-1] + eq)``.
    """
    n, m = len(a), len(b)
    table = np.zeros((n + 1, m + 1), dtype=np.int32)
    if n == 0 or m == 0:
        return table
    bcodes = np.frombuffer(b.encode("utf-32-le"), dtype=np.uint32)
    for i, ch in enumerate(a, start=1):
        prev = table[i - 1]
        eq = bcodes == ord(ch)
        cand = prev.copy()
        cand[1:] = np.maximum(prev[1:], prev[:-1] + eq)
        table[i] = np.maximum.accumulate(cand)
    return table


def lcs_alignment(a: str, b: str) -> list[tuple[int, int]]:
    """Matched index pairs ``(i, j)`` of one longest common subsequence, ascending."""
    table = lcs_table(a, b)
    pairs = []
    i, j = len(a), len(b)
    while i > 0 and j > 0:
        if a[i - 1] == b[j - 1] and table[i, j] == table[i - 1, j - 1] + 1:
            pairs.append((i - 1, j - 1))
            i -= 1
            j -= 1
        elif table[i - 1, j] >= table[i, j - 1]:
            i -= 1
        else:
            j -= 1
    return pairs[::-1]


def _map_lcs(plain, regions, original):
    pairs = lcs_alignment(plain, original)
    if plain and len(pairs) < GLOBAL_COVERAGE * len(plain):
        raise AlignmentFailure(
            f"only {len(pairs)}/{len(plain)} generated characters align to the source"
        )
    aligned = dict(pairs)
    spans = []
    dropped = 0
    for a, b in regions:
        hits = [aligned[i] for i in range(a, b) if i in aligned]
        if len(hits) < REGION_COVERAGE * (b - a):
            dropped += 1
            continue
        start, end = _strip_region(original, min(hits), max(hits) + 1)
        if start == end:
            dropped += 1
            continue
        spans.append(EntitySpan.of(original, start, end))
    return spans, dropped


def align_marked(generation: str, original: Sentence) -> MarkupParse:
    """Parse a ``##``-marked generation against its source sentence."""
    plain, regions = split_marked(generation)
    text = original.text
    if plain == text:
        return MarkupParse([EntitySpan.of(text, a, b) for a, b in regions])
    spans = _map_normalized(plain, regions, text)
    if spans is not None:
        return MarkupParse(spans)
    spans, dropped = _map_lcs(plain, regions, text)
    return MarkupParse(spans, recovered=True, dropped_regions=dropped)


def parse_marked(generation: str, original: Sentence) -> list[EntitySpan]:
    return align_marked(generation, original).spans
