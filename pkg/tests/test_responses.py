import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from czanaphora.responses import (
    ParsedResponse,
    parse_bracketed,
    parse_response,
    parse_tagged_response,
    parse_yesno,
)


@pytest.mark.parametrize(
    "raw, strict, label",
    [
        ("YES", True, "YES"),
        ("NO", True, "NO"),
        ("Yes.", True, None),
        ("Yes.", False, "YES"),
        ("  no  ", False, "NO"),
        ("**NO**", False, "NO"),
        ("YES, because the pronoun agrees.", False, "YES"),
        ("Maybe", False, None),
        ("", False, None),
        ("Nope", False, None),
    ],
)
def test_yesno(raw, strict, label):
    res = parse_yesno(raw, strict)
    assert res.payload == label
    assert res.kind == ("format_error" if label is None else label.lower())


@pytest.mark.parametrize(
    "raw, strict, payload",
    [
        ("[Budova]", True, "Budova"),
        ("The answer is [Budova].", True, "Budova"),
        ("[ Budova ]", True, "Budova"),
        ("Budova", True, None),
        ("Budova", False, "Budova"),
        ("[]", False, None),
        ("   ", False, None),
        ("[[Budova]]", True, "Budova"),
        ("[a] and [b]", True, "a"),
    ],
)
def test_bracketed(raw, strict, payload):
    assert parse_bracketed(raw, strict).payload == payload


@pytest.mark.parametrize(
    "raw, strict, payload",
    [
        ("[<ant>Budova</ant>, <ana>která</ana> byla otevřena.]", True, "<ant>Budova</ant>, <ana>která</ana> byla otevřena."),
        ("<ant>Budova</ant> stojí.", False, "<ant>Budova</ant> stojí."),
        ("<ant>Budova</ant> stojí.", True, None),
        ('"[<ant>Budova</ant> stojí.]"', False, "<ant>Budova</ant> stojí."),
        ("[Budova stojí.]", False, None),
        ("[</ant>Budova<ant> stojí.]", False, None),
        ("[<ant>A</ant> <ant>B</ant>]", False, None),
    ],
)
def test_tagged(raw, strict, payload):
    assert parse_tagged_response(raw, strict).payload == payload


def test_dispatch():
    assert parse_response("yes_no", "yes").payload == "YES"
    assert parse_response("question_answering", "[x]").kind == "answer_string"
    assert parse_response("tagging", "[<ant>x</ant>]").kind == "tagged_sentence"


def test_parsed_response_validation():
    with pytest.raises(ValueError):
        ParsedResponse("maybe")
    with pytest.raises(ValueError):
        ParsedResponse("answer_string", "")


TEXTS = st.text(alphabet=st.sampled_from(list("ab [ ]\"<>/antYESNOyesno.,\n")) | st.characters(), max_size=60)


@settings(max_examples=400)
@given(TEXTS, st.booleans())
def test_parsers_total(raw, strict):
    for strategy in ("yes_no", "question_answering", "tagging"):
        res = parse_response(strategy, raw, strict)
        assert isinstance(res, ParsedResponse)


@settings(max_examples=400)
@given(TEXTS)
def test_bracketed_idempotent(raw):
    # parsing an extracted answer again is a fixpoint
    first = parse_bracketed(raw)
    if first.kind == "answer_string":
        assert parse_bracketed(first.payload) == first
        if "[" not in first.payload and "]" not in first.payload:
            assert parse_bracketed(f"[{first.payload}]", strict=True) == first


@settings(max_examples=400)
@given(TEXTS)
def test_tagged_idempotent(raw):
    first = parse_tagged_response(raw)
    if first.kind == "tagged_sentence":
        assert parse_tagged_response(f"[{first.payload}]") == first
        assert parse_tagged_response(first.payload) == first
