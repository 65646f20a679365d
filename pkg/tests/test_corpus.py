import csv
import json

import pytest
from hypothesis import given
from hypothesis import strategies as st

from czanaphora.corpus import (
    CrossingTags,
    DuplicateTag,
    EmptyTagContent,
    InvalidSpan,
    InvariantViolation,
    Span,
    UnbalancedTags,
    count_words,
    distance_sign_check,
    export_finetune_pairs,
    load_dataset,
    load_path,
    parse_tagged_text,
    passage_to_record,
    render_tagged_text,
)

FIG1 = "Budova, <ana>která</ana> byla dokončena v loňském roce, stále nebyla otevřena."
FIG1_PLAIN = "Budova, která byla dokončena v loňském roce, stále nebyla otevřena."


def test_parse_budova():
    plain, ana, ant = parse_tagged_text(FIG1)
    assert plain == FIG1_PLAIN
    assert ana == Span(8, 13)
    assert ana.of(plain) == "která"
    assert ant is None


def test_parse_untagged_is_identity():
    assert parse_tagged_text("abc") == ("abc", None, None)


def test_parse_nested_against_character_count():
    tagged = "x <ant>a <ana>b</ana> c</ant> y"
    plain, ana, ant = parse_tagged_text(tagged)
    # oracle: delete tags by hand and count characters before each tag
    expected_plain = "x a b c y"
    before_ant = len("x ")
    before_ana = len("x ") + len("a ")
    assert plain == expected_plain
    assert ant == Span(before_ant, before_ant + len("a b c"))
    assert ana == Span(before_ana, before_ana + len("b"))
    assert ant.contains(ana)


@pytest.mark.parametrize(
    "tagged, error",
    [
        ("x <ant>a <ana>b</ant> c</ana>", CrossingTags),
        ("<ana>a <ant>b</ant></ana>", CrossingTags),
        ("<ana>a", UnbalancedTags),
        ("a</ant>", UnbalancedTags),
        ("<ana>a</ana> <ana>b</ana>", DuplicateTag),
        ("a <ant></ant>", EmptyTagContent),
    ],
)
def test_parse_errors(tagged, error):
    with pytest.raises(error):
        parse_tagged_text(tagged)


def test_render_budova():
    assert render_tagged_text(FIG1_PLAIN, Span(8, 13), None) == FIG1
    assert render_tagged_text("abc") == "abc"


def test_render_touching_and_equal_spans():
    assert render_tagged_text("ab", Span(1, 2), Span(0, 1)) == "<ant>a</ant><ana>b</ana>"
    assert render_tagged_text("ab", Span(0, 2), Span(0, 2)) == "<ant><ana>ab</ana></ant>"
    assert parse_tagged_text("<ant><ana>ab</ana></ant>") == ("ab", Span(0, 2), Span(0, 2))


def test_render_rejects_bad_spans():
    with pytest.raises(InvalidSpan):
        render_tagged_text("abc", Span(1, 5))
    with pytest.raises(CrossingTags):
        render_tagged_text("abcdef", Span(0, 3), Span(2, 5))
    with pytest.raises(InvalidSpan):
        Span(3, 3)


plain_text = st.text(st.characters(blacklist_characters="<>", blacklist_categories=("Cs",)), min_size=1, max_size=40)


@st.composite
def tagged_inputs(draw):
    text = draw(plain_text)
    n = len(text)

    def span():
        a = draw(st.integers(0, n - 1))
        b = draw(st.integers(a + 1, n))
        return Span(a, b)

    ana = draw(st.none() | st.builds(span))
    ant = draw(st.none() | st.builds(span))
    if ana and ant and ana.overlaps(ant) and not ant.contains(ana):
        ant = None
    return text, ana, ant


@given(tagged_inputs())
def test_round_trip(case):
    text, ana, ant = case
    assert parse_tagged_text(render_tagged_text(text, ana, ant)) == (text, ana, ant)


def test_fixture_passages(dataset):
    assert len(dataset) == 14
    assert not dataset.rejections
    fig = dataset["budova"]
    assert fig.anaphor_surface == "která"
    assert fig.subtree_surface == "Budova"
    assert fig.root_surface == "Budova"
    muz = dataset["muz"]
    assert muz.metadata.anaphor_in_antecedent
    assert muz.antecedent_subtree.contains(muz.anaphor)
    strom = dataset["strom"]
    assert strom.root_surface == "strom"
    assert strom.subtree_surface == "šťastný strom rostoucí v lese"


def test_records_round_trip(dataset):
    for p in dataset:
        assert parse_tagged_text(p.sentence_ant_ana) == (p.text, p.anaphor, p.antecedent_subtree)
        assert parse_tagged_text(p.sentence_ana) == (p.text, p.anaphor, None)


def test_demonstratives_are_textual(dataset):
    assert all(p.metadata.coref_type == "textual" for p in dataset if p.metadata.pronoun_category == "n.pron.def.demon")


def test_counts_match_recomputation(dataset):
    counts = dataset.counts
    assert (counts["test"]["grammatical"].passages, counts["test"]["textual"].passages) == (1, 4)
    assert (counts["train"]["grammatical"].passages, counts["train"]["textual"].passages) == (3, 3)
    assert sum(c.words for s in counts.values() for c in s.values()) == sum(count_words(p.text) for p in dataset)
    assert counts["test"]["textual"].sentences == 5  # "dum" spans two sentences


def test_empty_file(tmp_path):
    path = tmp_path / "empty.jsonl"
    path.write_text("")
    ds = load_dataset(path)
    assert len(ds) == 0
    assert all(c.passages == 0 for s in ds.counts.values() for c in s.values())


def _record(**overrides):
    rec = {
        "id": "r1",
        "sentence_ant_ana": "<ant>Budova</ant>, <ana>která</ana> stojí.",
        "anaphora": "která",
        "antecedent_subtree": "Budova",
        "antecedent_root": "Budova",
        "coref_type": "grammatical",
        "pronoun_category": "n.pron.indef",
        "distance": 2,
        "subcorpus": "PDT",
        "split": "test",
    }
    rec.update(overrides)
    return rec


def _write(tmp_path, records):
    path = tmp_path / "d.jsonl"
    path.write_text("".join(json.dumps(r, ensure_ascii=False) + "\n" for r in records), encoding="utf-8")
    return path


def test_root_outside_subtree_is_rejected(tmp_path):
    path = _write(tmp_path, [_record(), _record(id="r2", antecedent_root="stojí")])
    ds = load_dataset(path)
    assert [p.id for p in ds] == ["r1"]
    assert len(ds.rejections) == 1
    assert "InvariantViolation" in ds.rejections[0].reason
    with pytest.raises(InvariantViolation):
        load_dataset(path, strict=True)


@pytest.mark.parametrize(
    "overrides, reason",
    [
        ({"coref_type": None}, "SchemaError"),
        ({"pronoun_category": "n.pron.def.demon"}, "demonstrative"),
        ({"anaphora": "který"}, "surface"),
        ({"sentence_ant_ana": "<ant>Budova</ant>, která stojí."}, "one <ana>"),
        ({"sentence_ant_ana": "<ant>Budova, <ana>která</ant> stojí</ana>."}, "CrossingTags"),
        ({"anaphor_in_antecedent": True}, "anaphor_in_antecedent"),
    ],
)
def test_invalid_records(tmp_path, overrides, reason):
    ds = load_dataset(_write(tmp_path, [_record(**overrides)]))
    assert len(ds) == 0
    assert reason in ds.rejections[0].reason


def test_duplicate_ids_rejected(tmp_path):
    ds = load_dataset(_write(tmp_path, [_record(), _record()]))
    assert len(ds) == 1 and "duplicate" in ds.rejections[0].reason


def test_aliases_and_value_normalization(tmp_path):
    rec = _record()
    rec["type"] = rec.pop("coref_type")
    del rec["subcorpus"]
    rec["corpus"] = "PCEDT 2.0 (English translated)"
    rec["split"] = "dev"
    ds = load_dataset(_write(tmp_path, [rec]), strict=True)
    m = ds["r1"].metadata
    assert (m.coref_type, m.subcorpus, m.split) == ("grammatical", "PCEDT 2.0", "validation")


def test_root_prefers_token_aligned_occurrence(tmp_path):
    rec = _record(
        sentence_ant_ana="<ant>Starý pan Starý</ant> řekl, že <ana>ho</ana> zná.",
        anaphora="ho",
        antecedent_subtree="Starý pan Starý",
        antecedent_root="pan",
        coref_type="textual",
        pronoun_category="n.pron.def.pers",
    )
    p = load_dataset(_write(tmp_path, [rec]), strict=True)["r1"]
    assert p.antecedent_root == Span(6, 9)


def test_tabular_and_directory_loading(tmp_path, dataset):
    path = tmp_path / "test_split.csv"
    rows = [passage_to_record(p) for p in dataset.split("test")]
    for r in rows:
        del r["split"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0]))
        writer.writeheader()
        writer.writerows(rows)
    loaded = load_path(tmp_path)
    assert [p.id for p in loaded] == [p.id for p in dataset.split("test")]
    assert all(p.metadata.split == "test" for p in loaded)
    assert loaded["budova"] == dataset["budova"]


def test_parquet_loading(tmp_path, dataset):
    pd = pytest.importorskip("pandas")
    pytest.importorskip("pyarrow")
    path = tmp_path / "validation.parquet"
    pd.DataFrame([passage_to_record(p) for p in dataset.split("validation")]).to_parquet(path)
    loaded = load_path(path)
    assert [p for p in loaded] == list(dataset.split("validation"))


def test_distance_sign_check(dataset):
    tally = distance_sign_check(dataset)
    assert tally == {"consistent": 13, "inverted": 0, "undetermined": 1}


def test_flip_distance_sign(fixture_path):
    flipped = load_dataset(fixture_path, flip_distance_sign=True)
    assert flipped["marie"].metadata.distance == 5
    assert distance_sign_check(flipped)["inverted"] == 13


def test_export_pairs(dataset):
    pairs = dict((i, t) for i, t in export_finetune_pairs(dataset, "test"))
    fig_input = FIG1
    assert pairs[fig_input] == "<ant>Budova</ant>, <ana>která</ana> byla dokončena v loňském roce, stále nebyla otevřena."
    for i, t in export_finetune_pairs(dataset, "train"):
        assert "<ant>" not in i and "<ana>" in i
        _, ana, ant = parse_tagged_text(t)
        assert ana is not None and ant is not None


def test_export_empty_split(tmp_path):
    path = tmp_path / "e.jsonl"
    path.write_text("")
    assert export_finetune_pairs(load_dataset(path), "train") == []
