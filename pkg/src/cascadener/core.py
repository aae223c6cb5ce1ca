"""Domain types, the three-level taxonomy and dataset validation."""

from __future__ import annotations

from collections import Counter
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Iterable, Sequence

from .errors import IntegrityError, ParseError, UnknownNode

LEVELS = ("coarse", "medium", "fine")
LABEL_LEVELS = LEVELS + ("flat",)
UNKNOWN_NAME = "Unknown"
MISC_NAME = "Miscellaneous"


@dataclass(frozen=True)
class Sentence:
    id: str
    text: str
    language: str = "en"

    def __post_init__(self):
        if not self.text:
            raise ValueError(f"sentence {self.id!r} has empty text")


@dataclass(frozen=True, order=True)
class EntitySpan:
    """Half-open character range ``[start, end)`` plus its surface string.

    Offsets count code points (Python ``str`` indices). Agreement between
    ``surface`` and the sentence text is checked by :func:`validate_dataset`
    and by :meth:`of`, not here, since a span carries no text of its own.
    """

    start: int
    end: int
    surface: str

    def __post_init__(self):
        if self.start < 0 or self.end <= self.start:
            raise ValueError(f"invalid span range [{self.start}, {self.end})")

    @classmethod
    def of(cls, text: str, start: int, end: int) -> EntitySpan:
        if end > len(text):
            raise ValueError(f"span end {end} beyond text length {len(text)}")
        return cls(start, end, text[start:end])

    @property
    def length(self) -> int:
        return self.end - self.start

    def overlaps(self, other: EntitySpan) -> bool:
        return self.start < other.end and other.start < self.end


@dataclass(frozen=True)
class Label:
    name: str
    level: str = "flat"

    def __post_init__(self):
        if self.level not in LABEL_LEVELS and self.level != "unknown":
            raise ValueError(f"unknown label level {self.level!r}")
        if self.level == "unknown" and self.name != UNKNOWN_NAME:
            raise ValueError("level 'unknown' is reserved for the Unknown sentinel")

    @property
    def is_unknown(self) -> bool:
        return self.level == "unknown"

    def __str__(self):
        return self.name


UNKNOWN = Label(UNKNOWN_NAME, "unknown")


@dataclass(frozen=True)
class TypeList:
    """Ordered candidate type names offered to the classifier.

    An empty list is representable (leaf nodes have no subcategories) but
    :func:`validate_dataset` rejects it on records.
    """

    names: tuple[str, ...]
    allow_unknown: bool = False

    def __post_init__(self):
        object.__setattr__(self, "names", tuple(self.names))
        dupes = [n for n, c in Counter(self.names).items() if c > 1]
        if dupes:
            raise ValueError(f"duplicate type names: {dupes}")

    def __contains__(self, name) -> bool:
        return name in self.names

    def __iter__(self):
        return iter(self.names)

    def __len__(self):
        return len(self.names)

    def admits(self, label: Label) -> bool:
        # Unknown is an abstention, not a type; allow_unknown only shapes prompts
        return label.is_unknown or label.name in self.names


@dataclass(frozen=True)
class AnnotatedSentence:
    sentence: Sentence
    entities: tuple[tuple[EntitySpan, Label], ...]
    type_list: TypeList

    def __post_init__(self):
        object.__setattr__(self, "entities", tuple(tuple(e) for e in self.entities))

    @property
    def id(self) -> str:
        return self.sentence.id

    @property
    def spans(self) -> list[EntitySpan]:
        return [span for span, _ in self.entities]

    @property
    def labels(self) -> list[Label]:
        return [label for _, label in self.entities]


# --- taxonomy -------------------------------------------------------------


@dataclass(frozen=True)
class TaxonomyNode:
    name: str
    level: str
    parent: str | None = None


@dataclass(frozen=True)
class Taxonomy:
    nodes: tuple[TaxonomyNode, ...]
    _index: dict = field(default=None, repr=False, compare=False)
    _children: dict = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        index = {}
        children = {(node.level, node.name): [] for node in self.nodes}
        for node in self.nodes:
            key = (node.level, node.name)
            if node.level not in LEVELS:
                raise IntegrityError(f"node {node.name!r} has invalid level {node.level!r}")
            if key in index:
                raise IntegrityError(f"duplicate {node.level} node {node.name!r}")
            index[key] = node
        for node in self.nodes:
            depth = LEVELS.index(node.level)
            if depth == 0:
                if node.parent is not None:
                    raise IntegrityError(f"coarse node {node.name!r} cannot have a parent")
                continue
            parent_key = (LEVELS[depth - 1], node.parent)
            if node.parent is None or parent_key not in index:
                raise IntegrityError(
                    f"{node.level} node {node.name!r} names missing parent {node.parent!r}"
                )
            children[parent_key].append(node.name)
        object.__setattr__(self, "_index", index)
        object.__setattr__(self, "_children", {k: tuple(v) for k, v in children.items()})

    def names(self, level: str) -> list[str]:
        return [n.name for n in self.nodes if n.level == level]

    def counts(self) -> tuple[int, int, int]:
        return tuple(len(self.names(level)) for level in LEVELS)

    def node(self, label: Label | str) -> TaxonomyNode:
        """Resolve a label to its node.

        Bare names (or ``flat`` labels) resolve to the coarsest level that
        defines them, since a few names repeat across levels.
        """
        if isinstance(label, str):
            label = Label(label)
        if label.level in LEVELS:
            try:
                return self._index[(label.level, label.name)]
            except KeyError:
                raise UnknownNode(f"no {label.level} node named {label.name!r}") from None
        for level in LEVELS:
            if (level, label.name) in self._index:
                return self._index[(level, label.name)]
        raise UnknownNode(f"no node named {label.name!r}")

    def __contains__(self, label) -> bool:
        try:
            self.node(label)
        except UnknownNode:
            return False
        return True

    def children(self, label: Label | str) -> tuple[str, ...]:
        node = self.node(label)
        return self._children[(node.level, node.name)]

    def parent(self, label: Label | str) -> Label | None:
        node = self.node(label)
        if node.parent is None:
            return None
        return Label(node.parent, LEVELS[LEVELS.index(node.level) - 1])

    def ancestor(self, label: Label | str, level: str) -> Label:
        """Label of the ancestor (or self) at ``level``."""
        node = self.node(label)
        current = Label(node.name, node.level)
        if LEVELS.index(level) > LEVELS.index(node.level):
            raise ValueError(f"{node.name!r} is coarser than {level}")
        while current.level != level:
            current = self.parent(current)
        return current

    def path(self, label: Label | str) -> list[Label]:
        """Root-to-node path."""
        node = self.node(label)
        current = Label(node.name, node.level)
        out = [current]
        while (parent := self.parent(current)) is not None:
            out.append(parent)
            current = parent
        return out[::-1]


def parse_taxonomy(lines: Iterable[str]) -> Taxonomy:
    nodes = []
    for lineno, raw in enumerate(lines, start=1):
        line = raw.rstrip("\r\n")
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        level = cols[0].strip()
        if level == "coarse" and len(cols) == 2:
            nodes.append(TaxonomyNode(cols[1].strip(), level))
        elif level in ("medium", "fine") and len(cols) == 3:
            nodes.append(TaxonomyNode(cols[1].strip(), level, cols[2].strip()))
        else:
            raise ParseError(f"malformed taxonomy line {line!r}", lineno)
        if not nodes[-1].name:
            raise ParseError("empty node name", lineno)
    return Taxonomy(tuple(nodes))


def load_taxonomy(path: str | Path | None = None) -> Taxonomy:
    """Load a taxonomy file; ``None`` loads the bundled DynamicNER taxonomy."""
    if path is None:
        text = resources.files("cascadener.data").joinpath("dynamicner.tax").read_text("utf-8")
        return parse_taxonomy(text.splitlines())
    with open(path, encoding="utf-8") as fh:
        return parse_taxonomy(fh)


def subcategories_of(tax: Taxonomy, label: Label | str) -> TypeList:
    return TypeList(tax.children(label))


# --- validation -----------------------------------------------------------


@dataclass(frozen=True)
class Violation:
    record_id: str
    kind: str
    detail: str = ""


@dataclass
class ValidationReport:
    violations: list[Violation] = field(default_factory=list)

    def __bool__(self):
        # truthy means "dataset is valid"
        return not self.violations

    def __len__(self):
        return len(self.violations)

    def kinds(self) -> list[str]:
        return [v.kind for v in self.violations]


def validate_dataset(ds: Sequence[AnnotatedSentence]) -> ValidationReport:
    report = ValidationReport()
    add = report.violations.append
    seen = set()
    for rec in ds:
        rid = rec.id
        text = rec.sentence.text
        if rid in seen:
            add(Violation(rid, "duplicate id"))
        seen.add(rid)
        if not rec.type_list.names:
            add(Violation(rid, "empty type list"))
        in_range = []
        for span, label in rec.entities:
            if span.end > len(text):
                add(Violation(rid, "span out of range", f"[{span.start}, {span.end})"))
                continue
            in_range.append(span)
            if text[span.start:span.end] != span.surface:
                add(Violation(rid, "surface mismatch",
                              f"{span.surface!r} != {text[span.start:span.end]!r}"))
            if not rec.type_list.admits(label):
                add(Violation(rid, "label not in type list", label.name))
        in_range.sort(key=lambda s: (s.start, s.end))
        reach = None  # span with the furthest end so far
        for span in in_range:
            if reach is not None and reach.overlaps(span):
                add(Violation(rid, "overlap",
                              f"[{reach.start}, {reach.end}) / [{span.start}, {span.end})"))
            if reach is None or span.end > reach.end:
                reach = span
    return report
