"""Extractor stage: bare-sentence prompt, repeated generations, result fusion."""

from __future__ import annotations

import logging
from collections import defaultdict
from dataclasses import dataclass
from typing import Iterable, Sequence

from .backend import ChatMessage, GenerationParams
from .core import EntitySpan, Sentence
from .errors import MarkupError
from .markup import MarkedText, align_marked

logger = logging.getLogger(__name__)

EXTRACTION_SYSTEM = "Surround every named entity in the sentence with ##."
MAX_DEMOS = 3
DEFAULT_ROUNDS = 3
DIVERSITY_TEMPERATURE = 0.7


@dataclass(frozen=True)
class ExtractionRound:
    index: int
    spans: frozenset[EntitySpan]
    raw_generation: str
    parse_status: str  # ok | recovered | dropped


def build_extraction_prompt(
    s: Sentence,
    demos: Sequence[tuple[Sentence, MarkedText | str]] = (),
    max_demos: int = MAX_DEMOS,
) -> list[ChatMessage]:
    if len(demos) > max_demos:
        raise ValueError(f"{len(demos)} demonstrations exceed the limit of {max_demos}")
    messages = [ChatMessage("system", EXTRACTION_SYSTEM)]
    for demo_sentence, marked in demos:
        if not isinstance(marked, MarkedText):
            marked = MarkedText(marked, demo_sentence.id)
        messages.append(ChatMessage("user", demo_sentence.text))
        messages.append(ChatMessage("assistant", marked.text))
    messages.append(ChatMessage("user", s.text))
    return messages


def round_params(index: int, seed: int = 0, temperature: float = DIVERSITY_TEMPERATURE,
                 max_tokens: int = 512) -> GenerationParams:
    """Round 1 is greedy; later rounds sample with per-round seeds."""
    if index == 1:
        return GenerationParams(0.0, seed, max_tokens)
    return GenerationParams(temperature, seed + index, max_tokens)


def extract_rounds(
    backend,
    s: Sentence,
    k: int = DEFAULT_ROUNDS,
    *,
    demos: Sequence[tuple[Sentence, MarkedText | str]] = (),
    seed: int = 0,
    temperature: float = DIVERSITY_TEMPERATURE,
    max_tokens: int = 512,
) -> list[ExtractionRound]:
    if k < 1:
        raise ValueError("k must be at least 1")
    messages = build_extraction_prompt(s, demos)
    rounds = []
    for index in range(1, k + 1):
        params = round_params(index, seed, temperature, max_tokens)
        generation = backend.chat_complete(messages, params)
        try:
            parsed = align_marked(generation, s)
        except MarkupError as exc:
            logger.debug("sentence %s round %d dropped: %s", s.id, index, exc)
            rounds.append(ExtractionRound(index, frozenset(), generation, "dropped"))
            continue
        status = "recovered" if parsed.recovered else "ok"
        rounds.append(ExtractionRound(index, frozenset(parsed.spans), generation, status))
    return rounds


def _rank(span: EntitySpan):
    # smaller is stronger: longer first, then earlier start, then surface
    return (-span.length, span.start, span.surface)


def dominates(e: EntitySpan, f: EntitySpan) -> bool:
    return e != f and e.overlaps(f) and _rank(e) < _rank(f)


def overlap_components(spans: Iterable[EntitySpan]) -> list[list[EntitySpan]]:
    """Connected components of the overlap graph, via a sweep over start offsets."""
    components = []
    current: list[EntitySpan] = []
    reach = -1
    for span in sorted(spans, key=lambda s: (s.start, s.end, s.surface)):
        if current and span.start >= reach:
            components.append(current)
            current = []
        current.append(span)
        reach = max(reach, span.end) if len(current) > 1 else span.end
    if current:
        components.append(current)
    return components


def fuse_results(rounds: Iterable[Iterable[EntitySpan] | ExtractionRound]) -> set[EntitySpan]:
    """Union of all rounds, keeping only spans no overlapping span outranks."""
    union = set()
    for r in rounds:
        union.update(r.spans if isinstance(r, ExtractionRound) else r)
    kept = set()
    for component in overlap_components(union):
        if len(component) == 1:
            kept.add(component[0])
            continue
        # within a component, scan from strongest; a span survives unless an
        # overlapping stronger span exists (survivor or not)
        by_rank = sorted(component, key=_rank)
        for i, span in enumerate(by_rank):
            if not any(stronger.overlaps(span) for stronger in by_rank[:i]):
                kept.add(span)
    return kept


def span_counts_by_round(rounds: Sequence[ExtractionRound]) -> dict[str, int]:
    counts = defaultdict(int)
    for r in rounds:
        counts[r.parse_status] += 1
    return dict(counts)
