"""Shared corpus builders and scripted mock backends."""

from __future__ import annotations

import random

from cascadener.backend import MockBackend
from cascadener.core import AnnotatedSentence, EntitySpan, Label, Sentence, TypeList
from cascadener.markup import render_marked, split_marked

TYPES = ("person", "location", "organization", "product")

# (text, [(surface, type), ...])
SENTENCES = [
    ("Apple released the Macbook in Cupertino.", [("Apple", "organization"), ("Macbook", "product"), ("Cupertino", "location")]),
    ("Marie Curie worked in Paris.", [("Marie Curie", "person"), ("Paris", "location")]),
    ("Boston University is in Boston.", [("Boston University", "organization"), ("Boston", "location")]),
    ("Toyota builds the Corolla.", [("Toyota", "organization"), ("Corolla", "product")]),
    ("Ada Lovelace met Charles Babbage in London.", [("Ada Lovelace", "person"), ("Charles Babbage", "person"), ("London", "location")]),
    ("The Nile flows through Egypt.", [("Nile", "location"), ("Egypt", "location")]),
    ("Siemens opened an office in Munich.", [("Siemens", "organization"), ("Munich", "location")]),
    ("Alan Turing studied at Cambridge.", [("Alan Turing", "person"), ("Cambridge", "location")]),
    ("Nokia sold the 3310 phone worldwide.", [("Nokia", "organization"), ("3310", "product")]),
    ("Frida Kahlo painted in Mexico City.", [("Frida Kahlo", "person"), ("Mexico City", "location")]),
    ("Sony shipped the Walkman in 1979.", [("Sony", "organization"), ("Walkman", "product")]),
    ("Nelson Mandela was born in Mvezo.", [("Nelson Mandela", "person"), ("Mvezo", "location")]),
    ("Lego is based in Billund.", [("Lego", "organization"), ("Billund", "location")]),
    ("Grace Hopper joined the Navy.", [("Grace Hopper", "person"), ("Navy", "organization")]),
    ("The Kindle was made by Amazon.", [("Kindle", "product"), ("Amazon", "organization")]),
    ("Tokyo hosted the Olympics.", [("Tokyo", "location")]),
    ("Linus Torvalds wrote Linux in Helsinki.", [("Linus Torvalds", "person"), ("Linux", "product"), ("Helsinki", "location")]),
    ("Ikea sells the Billy bookcase.", [("Ikea", "organization"), ("Billy", "product")]),
    ("It rained all day.", []),
    ("Rome is the capital of Italy.", [("Rome", "location"), ("Italy", "location")]),
]


def make_record(rid, text, ents, type_list=TYPES, language="en") -> AnnotatedSentence:
    entities = []
    cursor = 0
    for surface, label in ents:
        start = text.index(surface, cursor)
        entities.append((EntitySpan.of(text, start, start + len(surface)), Label(label)))
        cursor = start + len(surface)
    return AnnotatedSentence(Sentence(rid, text, language), tuple(entities), TypeList(tuple(type_list)))


def gold_corpus() -> list[AnnotatedSentence]:
    return [make_record(f"s{i:02d}", text, ents) for i, (text, ents) in enumerate(SENTENCES)]


def gold_extractor(ds, drop_prob: float = 0.0, seed: int = 0) -> MockBackend:
    """Extractor that marks the gold spans, omitting each with ``drop_prob``.

    Omissions are a pure function of (seed, sentence, round seed, span).
    """
    by_text = {rec.sentence.text: rec for rec in ds}

    def respond(messages, params):
        rec = by_text[messages[-1].content]
        keep = []
        for span in rec.spans:
            rng = random.Random(f"{seed}|{rec.id}|{params.seed}|{params.temperature}|{span.start}")
            if rng.random() >= drop_prob:
                keep.append(span)
        return render_marked(rec.sentence, keep).text

    return MockBackend(responder=respond, model_id="mock-extractor")


def gold_classifier(ds, unknown: set[str] = frozenset()) -> MockBackend:
    """Classifier that answers the gold label; surfaces in ``unknown`` get 'unknown'."""
    gold = {}
    for rec in ds:
        for span, label in rec.entities:
            gold[(rec.sentence.text, span.start, span.end)] = label.name

    def respond(messages, params):
        query = messages[-1].content
        body = query.split("Sentence: ", 1)[1].split("\n", 1)[0]
        plain, regions = split_marked(body)
        (start, end), = regions
        if plain[start:end] in unknown:
            return "unknown"
        return gold[(plain, start, end)]

    return MockBackend(responder=respond, model_id="mock-classifier")


def dyncat_corpus(tax, n: int = 500, seed: int = 7) -> list[AnnotatedSentence]:
    """Records with fine labels: coarse classes balanced, fine classes Zipf-skewed."""
    rng = random.Random(seed)
    coarse = tax.names("coarse")
    fine_by_coarse = {}
    for c in coarse:
        leaves = [node for node in _leaves(tax, Label(c, "coarse"))]
        fine_by_coarse[c] = leaves
    out = []
    for i in range(n):
        c = coarse[i % len(coarse)]
        leaves = fine_by_coarse[c]
        weights = [1 / (r + 1) ** 1.5 for r in range(len(leaves))]
        gold = rng.choices(leaves, weights)[0]
        word = f"Entity{i}"
        text = f"We saw {word} today."
        start = text.index(word)
        distractors = rng.sample([x for x in leaves if x != gold], min(2, len(leaves) - 1))
        names = [gold.name, *(d.name for d in distractors)]
        rng.shuffle(names)
        span = EntitySpan.of(text, start, start + len(word))
        out.append(AnnotatedSentence(Sentence(f"r{i:03d}", text), ((span, gold),),
                                     TypeList(tuple(dict.fromkeys(names)))))
    return out


def _leaves(tax, label):
    kids = tax.children(label)
    if not kids:
        return [label]
    level = {"coarse": "medium", "medium": "fine"}[label.level]
    out = []
    for k in kids:
        out.extend(_leaves(tax, Label(k, level)))
    return out


ALPHABETS = {
    "latin": "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZéèüß.,'-",
    "cjk": "北京大学东方明珠上海人民共和国的了是在有和日本東京都",
    "cyrillic": "абвгдежзийклмнопрстуфхцчшщыэюяМоскваРоссия.,",
}


def random_span_case(rng: random.Random, script: str) -> tuple[Sentence, list[EntitySpan]]:
    """A random sentence and a set of non-overlapping spans over it."""
    alphabet = ALPHABETS[script]
    sep = "" if script == "cjk" else " "
    words = ["".join(rng.choice(alphabet) for _ in range(rng.randint(1, 7)))
             for _ in range(rng.randint(1, 14))]
    text = sep.join(words)
    cuts = sorted(rng.sample(range(len(text) + 1), min(len(text) + 1, 2 * rng.randint(0, 4))))
    spans = []
    for a, b in zip(cuts[::2], cuts[1::2]):
        if a < b:
            spans.append(EntitySpan.of(text, a, b))
    return Sentence(f"{script}-{rng.random():.6f}", text), spans


def random_rounds(rng: random.Random, text: str = "x" * 40, max_rounds: int = 4,
                  max_spans: int = 8) -> list[list[EntitySpan]]:
    rounds = []
    for _ in range(rng.randint(1, max_rounds)):
        spans = []
        for _ in range(rng.randint(0, max_spans)):
            a = rng.randrange(len(text))
            b = rng.randint(a + 1, min(len(text), a + 12))
            spans.append(EntitySpan.of(text, a, b))
        rounds.append(spans)
    return rounds


def dominance_oracle(rounds) -> set[EntitySpan]:
    """Brute force: keep each span unless an overlapping span is longer, or as
    long and earlier."""
    union = {s for r in rounds for s in r}
    keep = set()
    for e in union:
        beaten = any(
            f != e and f.start < e.end and e.start < f.end
            and (f.end - f.start, -f.start) > (e.end - e.start, -e.start)
            for f in union
        )
        if not beaten:
            keep.add(e)
    return keep
