import pytest

from cascadener.backend import MockBackend
from cascadener.classification import (
    CLASSIFICATION_SYSTEM,
    REPROMPT,
    UNKNOWN_SUFFIX,
    ClassificationQuery,
    build_classification_prompt,
    classify_entity,
    classify_progressive,
    deepest,
    parse_label,
    render_query,
)
from cascadener.core import UNKNOWN, Label, TypeList, load_taxonomy, parse_taxonomy
from cascadener.errors import UnparseableLabel
from cascadener.markup import MarkedText

TL = TypeList(("person", "location", "organization"))
TAX = load_taxonomy()
MARKED = MarkedText("##Marie Curie## worked in Paris.", "s")


def test_parse_label_cascade():
    assert parse_label("location", TL) == Label("location")
    assert parse_label("  Location. ", TL) == Label("location")
    assert parse_label("The answer is: person", TL) == Label("person")
    with pytest.raises(UnparseableLabel):
        parse_label("person or location", TL)
    with pytest.raises(UnparseableLabel):
        parse_label("unknown", TL)
    assert parse_label("Unknown.", TypeList(TL.names, allow_unknown=True)) is UNKNOWN


def test_parse_label_prefers_containing_name():
    tl = TypeList(("Person", "Real Person"))
    assert parse_label("it is a real person", tl) == Label("Real Person")


def test_parse_label_keeps_level():
    assert parse_label("Person", TypeList(("Person",)), "coarse") == Label("Person", "coarse")


def test_zero_shot_query_carries_the_literal_suffix():
    q = ClassificationQuery(MARKED, TL, "zero_shot")
    text = render_query(q)
    assert text.endswith("\n" + UNKNOWN_SUFFIX)
    assert "Entity types: person, location, organization" in text
    assert UNKNOWN_SUFFIX not in render_query(ClassificationQuery(MARKED, TL))


def test_query_validation():
    with pytest.raises(ValueError):
        ClassificationQuery(MarkedText("##a## ##b##", "x"), TL)
    with pytest.raises(ValueError):
        ClassificationQuery(MARKED, TypeList(()))
    with pytest.raises(ValueError):
        ClassificationQuery(MARKED, TL, "few_shot_magic")


def test_prompt_with_demos():
    demo = ClassificationQuery(MarkedText("I love ##Rome##.", "d"), TL)
    msgs = build_classification_prompt(ClassificationQuery(MARKED, TL), [(demo, Label("location"))])
    assert msgs[0].content == CLASSIFICATION_SYSTEM
    assert [m.role for m in msgs] == ["system", "user", "assistant", "user"]
    assert msgs[2].content == "location"
    with pytest.raises(ValueError):
        build_classification_prompt(ClassificationQuery(MARKED, TL), [(demo, Label("fruit"))])


def test_classify_entity_reprompts_once():
    calls = []

    def respond(msgs, params):
        calls.append(msgs)
        assert params.temperature == 0.0
        return "a scientist" if len(calls) == 1 else "person"

    label = classify_entity(MockBackend(responder=respond), ClassificationQuery(MARKED, TL))
    assert label == Label("person")
    assert len(calls) == 2
    assert calls[1][-1].content == REPROMPT.format(names="person, location, organization")


def test_classify_entity_gives_up_after_reprompt():
    backend = MockBackend(responder=lambda m, p: "no idea")
    with pytest.raises(UnparseableLabel):
        classify_entity(backend, ClassificationQuery(MARKED, TL))


def test_zero_shot_unknown():
    backend = MockBackend(responder=lambda m, p: "unknown")
    assert classify_entity(backend, ClassificationQuery(MARKED, TL, "zero_shot")) is UNKNOWN


def _taxonomy_responder(answers):
    """Answer with the first listed type that appears in ``answers``."""
    seen = []

    def respond(msgs, params):
        listed = msgs[-1].content.split("\n")[0].removeprefix("Entity types: ").split(", ")
        seen.append(listed)
        for name in listed:
            if name in answers:
                return name
        return "unknown"

    return respond, seen


def test_progressive_descent_to_a_leaf():
    respond, seen = _taxonomy_responder({"Person", "Real Person"})
    fine = TAX.children(Label("Real Person", "medium"))[0]

    def leaf_aware(msgs, params):
        return fine if fine in msgs[-1].content.split("\n")[0] else respond(msgs, params)

    path = classify_progressive(MockBackend(responder=leaf_aware), MARKED, TAX)
    assert path == (Label("Person", "coarse"), Label("Real Person", "medium"), Label(fine, "fine"))
    assert deepest(path) == Label(fine, "fine")
    assert seen[0] == TAX.names("coarse")
    assert seen[1] == ["Real Person", "Fictional Figure"]


def test_progressive_stops_at_unknown():
    respond, seen = _taxonomy_responder({"Person"})
    path = classify_progressive(MockBackend(responder=respond), MARKED, TAX, mode="zero_shot")
    assert path == (Label("Person", "coarse"), UNKNOWN, None)
    assert deepest(path) == Label("Person", "coarse")
    assert len(seen) == 2


def test_deepest_of_nothing_is_unknown():
    assert deepest((UNKNOWN, None, None)) is UNKNOWN




def test_sentence_answers_and_single_node_taxonomy():
    assert parse_label("It is a Person.", TypeList(("Person", "Location"))) == Label("Person")
    flat = parse_taxonomy(["coarse\tPerson"])
    calls = []

    def respond(msgs, params):
        calls.append(msgs)
        return "Person"

    path = classify_progressive(MockBackend(responder=respond), MARKED, flat)
    assert path == (Label("Person", "coarse"), None, None) and len(calls) == 1
