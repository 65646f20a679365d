import csv
import io
import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import GOLDENS
from czanaphora.corpus import AnaphoraMetadata
from czanaphora.report import (
    AXES,
    DistanceBucket,
    DuplicateId,
    ReportError,
    StratifiedReport,
    UnknownId,
    aggregate,
    bucket_distance,
    emit,
)
from czanaphora.scorer import Failure, ScoreResult

# Hand-assigned outcomes for the 14 fixture passages; the expected table is counted by hand
OUTCOMES = {
    "budova": None,
    "tomas": Failure.ROOT_MISSING,
    "jana": None,
    "dum": Failure.FORMAT_ERROR,
    "abych": None,
    "strom": None,
    "vlada": None,
    "kniha": Failure.CONTAINMENT_VIOLATED,
    "pes": None,
    "petr-se": Failure.DISCONTINUOUS,
    "marie": None,
    "muz": Failure.NO_PREDICTION,
    "auto": None,
    "nekdo": Failure.FORMAT_ERROR,
}


def _meta(distance, flag=False):
    return AnaphoraMetadata("textual", "n.pron.def.pers", distance, flag, "PDT 3.5", "test")


@pytest.mark.parametrize(
    "distance, flag, bucket",
    [
        (3, False, DistanceBucket.D0_5),
        (0, False, DistanceBucket.D0_5),
        (5, False, DistanceBucket.D0_5),
        (6, False, DistanceBucket.D6_10),
        (10, False, DistanceBucket.D6_10),
        (11, False, DistanceBucket.D11_20),
        (20, False, DistanceBucket.D11_20),
        (21, False, DistanceBucket.D21_30),
        (30, False, DistanceBucket.D21_30),
        (31, False, DistanceBucket.D31_PLUS),
        (-2, False, DistanceBucket.CATAPHORA),
        (1, True, DistanceBucket.ANAPHOR_IN_ANTECEDENT),
        (-1, True, DistanceBucket.ANAPHOR_IN_ANTECEDENT),
    ],
)
def test_bucket_distance(distance, flag, bucket):
    assert bucket_distance(_meta(distance, flag)) is bucket


@pytest.fixture
def report(dataset):
    return aggregate([(pid, ScoreResult(f)) for pid, f in OUTCOMES.items()], dataset)


def test_hand_counted_cells(report):
    expected = {
        ("overall", "all"): (14, 8),
        ("coref_type", "grammatical"): (5, 3),
        ("coref_type", "textual"): (9, 5),
        ("pronoun_category", "n.pron.indef"): (5, 3),
        ("pronoun_category", "n.pron.def.pers"): (8, 4),
        ("pronoun_category", "n.pron.def.demon"): (1, 1),
        ("pronoun_category*coref_type", "n.pron.indef/grammatical"): (4, 3),
        ("pronoun_category*coref_type", "n.pron.indef/textual"): (1, 0),
        ("pronoun_category*coref_type", "n.pron.def.pers/grammatical"): (1, 0),
        ("pronoun_category*coref_type", "n.pron.def.pers/textual"): (7, 4),
        ("pronoun_category*coref_type", "n.pron.def.demon/textual"): (1, 1),
        ("distance", "cataphora"): (1, 1),
        ("distance", "anaphor_in_antecedent"): (1, 0),
        ("distance", "d0_5"): (10, 6),
        ("distance", "d6_10"): (2, 1),
        ("subcorpus", "PDT 3.5"): (8, 4),
        ("subcorpus", "PCEDT 2.0"): (3, 2),
        ("subcorpus", "PDTSC 2.0"): (3, 2),
    }
    got = {(axis, key): (c.total, c.correct) for axis in AXES for key, c in report.cells[axis].items()}
    assert got == expected
    assert report.format_error_rate == pytest.approx(2 / 14)
    assert dict(report.overall.failures) == {
        "root_missing": 1, "format_error": 2, "containment_violated": 1, "discontinuous": 1, "no_prediction": 1,
    }


def test_absent_cells(report):
    assert report.accuracy("pronoun_category*coref_type", "n.pron.def.demon/grammatical") is None
    assert report.accuracy("distance", "d11_20") is None
    assert report.accuracy("pronoun_category*coref_type", "n.pron.indef/textual") == 0.0


def test_markdown_golden(report):
    assert emit(report, "markdown") == (GOLDENS / "report_fixture.md").read_text(encoding="utf-8")


def test_all_correct(dataset):
    rep = aggregate([(p.id, ScoreResult()) for p in dataset.passages], dataset)
    assert all(c.accuracy == 1.0 for axis in AXES for c in rep.cells[axis].values())
    assert rep.format_error_rate == 0


def test_id_errors(dataset):
    with pytest.raises(UnknownId):
        aggregate([("nope", ScoreResult())], dataset)
    with pytest.raises(DuplicateId):
        aggregate([("jana", ScoreResult()), ("jana", ScoreResult())], dataset)
    with pytest.raises(ReportError):
        emit(StratifiedReport(), "xml")


def test_empty_report(dataset):
    rep = aggregate([], dataset)
    assert "zero counts" in emit(rep, "markdown")
    data = json.loads(emit(rep, "json"))
    assert data["total"] == 0 and data["accuracy"] is None and data["cells"] == []
    assert emit(rep, "csv").strip() == "axis,key,total,correct,accuracy"


def _cell_multiset(rows):
    return sorted((r["axis"], r["key"], int(r["total"]), int(r["correct"])) for r in rows)


def test_json_csv_roundtrip(report):
    data = json.loads(emit(report, "json"))
    back = StratifiedReport.from_json(data)
    assert emit(back, "json") == emit(report, "json")
    rows = list(csv.DictReader(io.StringIO(emit(report, "csv"))))
    assert _cell_multiset(rows) == _cell_multiset(data["cells"])
    for r in rows:
        assert float(r["accuracy"]) == pytest.approx(int(r["correct"]) / int(r["total"]))


OUTCOME = st.sampled_from([None, *Failure])


@settings(max_examples=200)
@given(st.lists(OUTCOME, min_size=14, max_size=14), st.lists(st.booleans(), min_size=14, max_size=14))
def test_axis_sums_and_weighted_average(dataset, outcomes, keep):
    ids = [p.id for p in dataset.passages]
    results = [(pid, ScoreResult(f)) for pid, f, k in zip(ids, outcomes, keep) if k]
    rep = aggregate(results, dataset)
    for axis in AXES:
        assert sum(c.total for c in rep.cells[axis].values()) == len(results)
    assert rep.cells["pronoun_category*coref_type"].get("n.pron.def.demon/grammatical") is None
    if results:
        weighted = sum(Fraction(c.correct) for c in rep.cells["coref_type"].values()) / len(results)
        assert weighted == Fraction(rep.overall.correct, rep.overall.total)
    assert all(c.total > 0 for axis in AXES for c in rep.cells[axis].values())
    assert aggregate(results, dataset).to_json() == rep.to_json()
