"""Two-stage extract-then-classify NER and dataset categorization tooling."""

from .core import (
    UNKNOWN,
    AnnotatedSentence,
    EntitySpan,
    Label,
    Sentence,
    Taxonomy,
    TypeList,
    load_taxonomy,
    subcategories_of,
    validate_dataset,
)

__version__ = "0.1.0"

__all__ = [
    "UNKNOWN",
    "AnnotatedSentence",
    "EntitySpan",
    "Label",
    "Sentence",
    "Taxonomy",
    "TypeList",
    "load_taxonomy",
    "subcategories_of",
    "validate_dataset",
]
