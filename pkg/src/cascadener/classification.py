"""Classifier stage: one marked entity in context, labelled against a type list."""

from __future__ import annotations

import unicodedata
from dataclasses import dataclass
from typing import Sequence

from .backend import ChatMessage, GenerationParams
from .core import LEVELS, UNKNOWN, Label, Taxonomy, TypeList
from .errors import UnparseableLabel
from .markup import MarkedText

CLASSIFICATION_SYSTEM = "Classify the entity surrounded by ## in the sentence."
UNKNOWN_SUFFIX = "If none of them applied, return unknown"
REPROMPT = "Answer with exactly one name from this list: {names}"
MODES = ("supervised", "zero_shot")


@dataclass(frozen=True)
class ClassificationQuery:
    marked: MarkedText
    type_list: TypeList
    mode: str = "supervised"

    def __post_init__(self):
        if len(self.marked.regions) != 1:
            raise ValueError("a classification query needs exactly one marked entity")
        if self.mode not in MODES:
            raise ValueError(f"unknown mode {self.mode!r}")
        if not self.type_list.names:
            raise ValueError("type list is empty")


def render_query(q: ClassificationQuery) -> str:
    lines = [
        f"Entity types: {', '.join(q.type_list.names)}",
        f"Sentence: {q.marked.text}",
    ]
    if q.mode == "zero_shot":
        lines.append(UNKNOWN_SUFFIX)
    return "\n".join(lines)


def build_classification_prompt(
    q: ClassificationQuery,
    demos: Sequence[tuple[ClassificationQuery, Label]] = (),
) -> list[ChatMessage]:
    messages = [ChatMessage("system", CLASSIFICATION_SYSTEM)]
    for demo, label in demos:
        if not demo.type_list.admits(label):
            raise ValueError(f"demo label {label.name!r} is not in its type list")
        answer = "unknown" if label.is_unknown else label.name
        messages.append(ChatMessage("user", render_query(demo)))
        messages.append(ChatMessage("assistant", answer))
    messages.append(ChatMessage("user", render_query(q)))
    return messages


def _trim(text: str) -> str:
    def junk(ch):
        return ch.isspace() or unicodedata.category(ch).startswith("P")

    start, end = 0, len(text)
    while start < end and junk(text[start]):
        start += 1
    while end > start and junk(text[end - 1]):
        end -= 1
    return text[start:end]


def parse_label(generation: str, tl: TypeList, level: str = "flat") -> Label:
    """Map a generation onto the type list.

    Tried in order: exact match (case-insensitive, edges trimmed), a unique
    case-insensitive substring match, then ``unknown`` if the list admits it.
    """
    norm = _trim(generation).casefold()
    for name in tl.names:
        if norm == name.casefold():
            return Label(name, level)
    lowered = generation.casefold()
    found = [name for name in tl.names if name.casefold() in lowered]
    # "Real Person" answers should not also count as "Person"
    found = [n for n in found
             if not any(n != m and n.casefold() in m.casefold() for m in found)]
    if len(found) == 1:
        return Label(found[0], level)
    if len(found) > 1:
        raise UnparseableLabel(f"ambiguous answer mentions {found}", generation)
    if tl.allow_unknown and norm == "unknown":
        return UNKNOWN
    raise UnparseableLabel(f"answer {generation!r} matches no listed type", generation)


def classify_entity(
    backend,
    q: ClassificationQuery,
    demos: Sequence[tuple[ClassificationQuery, Label]] = (),
    *,
    level: str = "flat",
    seed: int = 0,
    max_tokens: int = 64,
) -> Label:
    params = GenerationParams(0.0, seed, max_tokens)
    tl = q.type_list
    if q.mode == "zero_shot" and not tl.allow_unknown:
        tl = TypeList(tl.names, allow_unknown=True)
    messages = build_classification_prompt(q, demos)
    answer = backend.chat_complete(messages, params)
    try:
        return parse_label(answer, tl, level)
    except UnparseableLabel:
        pass
    retry = messages + [
        ChatMessage("assistant", answer or "?"),
        ChatMessage("user", REPROMPT.format(names=", ".join(tl.names))),
    ]
    return parse_label(backend.chat_complete(retry, params), tl, level)


def classify_progressive(
    backend,
    marked: MarkedText,
    tax: Taxonomy,
    *,
    mode: str = "supervised",
    demos: Sequence[tuple[ClassificationQuery, Label]] = (),
    seed: int = 0,
) -> tuple[Label, Label | None, Label | None]:
    """Classify coarse first, then re-ask over the chosen node's children.

    Stops at a leaf or at an Unknown answer; unreached levels are ``None``.
    Demonstrations are only shown for the coarse question.
    """
    path: list[Label] = []
    names = tax.names("coarse")
    for depth, level in enumerate(LEVELS):
        if not names:
            break
        q = ClassificationQuery(marked, TypeList(names, allow_unknown=mode == "zero_shot"), mode)
        label = classify_entity(backend, q, demos if depth == 0 else (), level=level, seed=seed)
        path.append(label)
        if label.is_unknown:
            break
        names = list(tax.children(label))
    path += [None] * (len(LEVELS) - len(path))
    return tuple(path)


def deepest(path: Sequence[Label | None]) -> Label:
    """Most specific known label on a progressive path (Unknown if none)."""
    known = [label for label in path if label is not None and not label.is_unknown]
    return known[-1] if known else UNKNOWN
