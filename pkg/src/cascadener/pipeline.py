"""End-to-end cascade: extract, fuse, re-embed, classify."""

from __future__ import annotations

import hashlib
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Sequence

from .classification import ClassificationQuery, classify_entity, classify_progressive, deepest
from .core import AnnotatedSentence, Label, Sentence, Taxonomy, TypeList
from .errors import CascadeError
from .extraction import DEFAULT_ROUNDS, DIVERSITY_TEMPERATURE, extract_rounds, fuse_results
from .markup import reembed_each

logger = logging.getLogger(__name__)


@dataclass
class PipelineConfig:
    rounds: int = DEFAULT_ROUNDS
    seed: int = 0
    temperature: float = DIVERSITY_TEMPERATURE
    mode: str = "supervised"
    taxonomy: Taxonomy | None = None
    type_list: TypeList | None = None
    extraction_demos: Sequence = ()
    classification_demos: Sequence = ()
    workers: int = 1
    fail_fast: bool = False

    def validate(self):
        if self.rounds < 1:
            raise ValueError("rounds must be at least 1")
        if self.workers < 1:
            raise ValueError("workers must be at least 1")

    def fingerprint(self) -> dict:
        return {
            "rounds": self.rounds,
            "seed": self.seed,
            "temperature": self.temperature,
            "mode": self.mode,
            "taxonomy": None if self.taxonomy is None else
            [(n.level, n.name, n.parent) for n in self.taxonomy.nodes],
            "type_list": None if self.type_list is None else list(self.type_list.names),
            "extraction_demos": len(self.extraction_demos),
            "classification_demos": len(self.classification_demos),
        }

    def digest(self) -> str:
        blob = json.dumps(self.fingerprint(), sort_keys=True, ensure_ascii=False)
        return hashlib.sha256(blob.encode("utf-8")).hexdigest()


class SentenceFailure(CascadeError):
    def __init__(self, sentence_id: str, cause: Exception):
        self.sentence_id = sentence_id
        self.cause = cause
        super().__init__(f"sentence {sentence_id}: {type(cause).__name__}: {cause}")


def _output_type_list(base: TypeList, labels: list[Label], allow_unknown: bool) -> TypeList:
    names = list(base.names)
    for label in labels:
        if not label.is_unknown and label.name not in names:
            names.append(label.name)
    return TypeList(names, allow_unknown=allow_unknown)


def run_ner_sentence(ext_backend, cls_backend, s: Sentence | AnnotatedSentence,
                     cfg: PipelineConfig) -> AnnotatedSentence:
    """Annotate one sentence.

    Flat mode uses ``cfg.type_list``, falling back to the record's own list
    when ``s`` is an :class:`AnnotatedSentence`. Unknown answers are kept.
    """
    cfg.validate()
    record_list = s.type_list if isinstance(s, AnnotatedSentence) else None
    sentence = s.sentence if isinstance(s, AnnotatedSentence) else s
    type_list = cfg.type_list or record_list
    if cfg.taxonomy is None and type_list is None:
        raise ValueError("either a taxonomy or a flat type list is required")
    zero_shot = cfg.mode == "zero_shot"
    try:
        rounds = extract_rounds(ext_backend, sentence, cfg.rounds, demos=cfg.extraction_demos,
                                seed=cfg.seed, temperature=cfg.temperature)
        spans = sorted(fuse_results(rounds), key=lambda sp: (sp.start, sp.end))
        entities = []
        for span, marked in zip(spans, reembed_each(sentence, spans)):
            if cfg.taxonomy is not None:
                path = classify_progressive(cls_backend, marked, cfg.taxonomy, mode=cfg.mode,
                                            demos=cfg.classification_demos, seed=cfg.seed)
                label = deepest(path)
            else:
                q = ClassificationQuery(marked, type_list, cfg.mode)
                label = classify_entity(cls_backend, q, cfg.classification_demos, seed=cfg.seed)
            entities.append((span, label))
    except CascadeError as exc:
        raise SentenceFailure(sentence.id, exc) from exc
    if cfg.taxonomy is not None:
        base = TypeList(cfg.taxonomy.names("coarse"))
    else:
        base = type_list
    out_list = _output_type_list(base, [label for _, label in entities],
                                 zero_shot or type_list is not None and type_list.allow_unknown)
    return AnnotatedSentence(sentence, tuple(entities), out_list)


@dataclass
class RunManifest:
    config_hash: str
    extractor_model: str
    classifier_model: str
    seed: int
    rounds: int
    sentences: int = 0
    predicted: int = 0
    errors: list[dict] = field(default_factory=list)
    started: str = ""
    finished: str = ""

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def run_ner_batch(
    ds: Sequence[Sentence | AnnotatedSentence],
    ext_backend,
    cls_backend,
    cfg: PipelineConfig,
) -> tuple[list[AnnotatedSentence], RunManifest]:
    """Run the cascade over a corpus, isolating per-sentence failures.

    Output order follows input order whatever the worker count.
    """
    cfg.validate()
    manifest = RunManifest(
        config_hash=cfg.digest(),
        extractor_model=getattr(ext_backend, "model_id", type(ext_backend).__name__),
        classifier_model=getattr(cls_backend, "model_id", type(cls_backend).__name__),
        seed=cfg.seed,
        rounds=cfg.rounds,
        sentences=len(ds),
        started=_now(),
    )

    def work(item):
        try:
            return run_ner_sentence(ext_backend, cls_backend, item, cfg)
        except SentenceFailure as exc:
            if cfg.fail_fast:
                raise
            return exc

    if cfg.workers == 1:
        results = [work(item) for item in ds]
    else:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            results = list(pool.map(work, ds))

    predictions = []
    for result in results:
        if isinstance(result, SentenceFailure):
            logger.warning("%s", result)
            manifest.errors.append({
                "id": result.sentence_id,
                "error": type(result.cause).__name__,
                "message": str(result.cause),
            })
        else:
            predictions.append(result)
    manifest.predicted = len(predictions)
    manifest.finished = _now()
    return predictions, manifest
