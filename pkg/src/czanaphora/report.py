"""Stratified accuracy tables."""

from __future__ import annotations

import csv
import io
import json
from collections import Counter
from collections.abc import Iterable, Mapping
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

from .corpus import COREF_TYPES, CORPORA, PRONOUN_CATEGORIES, AnaphoraMetadata, Dataset
from .scorer import Failure, ScoreResult


class ReportError(ValueError):
    pass


class UnknownId(ReportError):
    pass


class DuplicateId(ReportError):
    pass


class DistanceBucket(str, Enum):
    CATAPHORA = "cataphora"
    ANAPHOR_IN_ANTECEDENT = "anaphor_in_antecedent"
    D0_5 = "d0_5"
    D6_10 = "d6_10"
    D11_20 = "d11_20"
    D21_30 = "d21_30"
    D31_PLUS = "d31_plus"


BUCKET_LABELS = {
    DistanceBucket.CATAPHORA: "Cataphora",
    DistanceBucket.ANAPHOR_IN_ANTECEDENT: "Anaphor in antecedent",
    DistanceBucket.D0_5: "0-5",
    DistanceBucket.D6_10: "6-10",
    DistanceBucket.D11_20: "11-20",
    DistanceBucket.D21_30: "21-30",
    DistanceBucket.D31_PLUS: "31+",
}

SUBCORPUS_LABELS = {
    "PDT 3.5": "PDT 3.5 (original Czech)",
    "PCEDT 2.0": "PCEDT 2.0 (English translated)",
    "PDTSC 2.0": "PDTSC 2.0 (Spoken Czech)",
}

AXES = ("overall", "coref_type", "pronoun_category", "pronoun_category*coref_type", "distance", "subcorpus")


def bucket_distance(meta: AnaphoraMetadata) -> DistanceBucket:
    if meta.anaphor_in_antecedent:
        return DistanceBucket.ANAPHOR_IN_ANTECEDENT
    d = meta.distance
    if d < 0:
        return DistanceBucket.CATAPHORA
    if d <= 5:
        return DistanceBucket.D0_5
    if d <= 10:
        return DistanceBucket.D6_10
    if d <= 20:
        return DistanceBucket.D11_20
    if d <= 30:
        return DistanceBucket.D21_30
    return DistanceBucket.D31_PLUS


@dataclass
class Cell:
    total: int = 0
    correct: int = 0
    failures: Counter = field(default_factory=Counter)

    @property
    def accuracy(self) -> float:
        return self.correct / self.total

    def add(self, result: ScoreResult) -> None:
        self.total += 1
        if result.correct:
            self.correct += 1
        else:
            self.failures[result.failure.value] += 1


@dataclass
class StratifiedReport:
    cells: dict[str, dict[str, Cell]] = field(default_factory=lambda: {a: {} for a in AXES})
    ambiguous: int = 0
    extras: dict[str, Any] = field(default_factory=dict)

    @property
    def overall(self) -> Cell:
        return self.cells["overall"].get("all", Cell())

    @property
    def total(self) -> int:
        return self.overall.total

    @property
    def format_error_rate(self) -> float | None:
        o = self.overall
        return o.failures[Failure.FORMAT_ERROR.value] / o.total if o.total else None

    def accuracy(self, axis: str, key: str = "all") -> float | None:
        """Accuracy of one cell, or None when the cell is empty (absent)."""
        cell = self.cells[axis].get(key)
        return cell.accuracy if cell and cell.total else None

    def to_json(self) -> dict[str, Any]:
        rows = []
        for axis in AXES:
            for key, cell in self.cells[axis].items():
                rows.append({
                    "axis": axis,
                    "key": key,
                    "total": cell.total,
                    "correct": cell.correct,
                    "accuracy": cell.accuracy,
                    "failures": dict(sorted(cell.failures.items())),
                })
        return {
            "total": self.total,
            "accuracy": self.accuracy("overall"),
            "format_error_rate": self.format_error_rate,
            "ambiguous_answers": self.ambiguous,
            "extras": self.extras,
            "cells": rows,
        }

    @classmethod
    def from_json(cls, data: Mapping[str, Any]) -> StratifiedReport:
        rep = cls(ambiguous=data.get("ambiguous_answers", 0), extras=dict(data.get("extras", {})))
        for row in data["cells"]:
            rep.cells[row["axis"]][row["key"]] = Cell(row["total"], row["correct"], Counter(row["failures"]))
        return rep


def _keys(meta: AnaphoraMetadata) -> dict[str, str]:
    return {
        "overall": "all",
        "coref_type": meta.coref_type,
        "pronoun_category": meta.pronoun_category,
        "pronoun_category*coref_type": f"{meta.pronoun_category}/{meta.coref_type}",
        "distance": bucket_distance(meta).value,
        "subcorpus": meta.subcorpus,
    }


def _order(axis: str) -> list[str]:
    if axis == "coref_type":
        return list(COREF_TYPES)
    if axis == "pronoun_category":
        return list(PRONOUN_CATEGORIES)
    if axis == "pronoun_category*coref_type":
        return [f"{c}/{t}" for c in PRONOUN_CATEGORIES for t in COREF_TYPES]
    if axis == "distance":
        return [b.value for b in DistanceBucket]
    if axis == "subcorpus":
        return list(CORPORA)
    return ["all"]


def aggregate(
    results: Iterable[tuple[str, ScoreResult]],
    dataset: Dataset,
    extras: Mapping[str, Any] | None = None,
) -> StratifiedReport:
    """Tally results into every stratification axis; empty cells stay absent."""
    seen: set[str] = set()
    raw: dict[str, dict[str, Cell]] = {a: {} for a in AXES}
    ambiguous = 0
    for pid, result in results:
        if pid in seen:
            raise DuplicateId(f"duplicate result for passage {pid!r}")
        seen.add(pid)
        passage = dataset.get(pid)
        if passage is None:
            raise UnknownId(f"result for unknown passage {pid!r}")
        ambiguous += result.ambiguous
        for axis, key in _keys(passage.metadata).items():
            raw[axis].setdefault(key, Cell()).add(result)
    rep = StratifiedReport(ambiguous=ambiguous, extras=dict(extras or {}))
    for axis in AXES:
        order = _order(axis)
        rep.cells[axis] = {k: raw[axis][k] for k in order if k in raw[axis]}
    return rep


def _fmt(acc: float | None) -> str:
    return "−" if acc is None else f"{acc:.3f}"


def to_markdown(rep: StratifiedReport) -> str:
    lines: list[str] = ["# Accuracy report", ""]
    if rep.total == 0:
        lines += ["No scored passages (zero counts).", ""]
        return "\n".join(lines)
    fer = rep.format_error_rate
    lines += [
        f"Scored passages: {rep.total}",
        "",
        f"Overall accuracy: {_fmt(rep.accuracy('overall'))}",
        "",
        f"Format error rate: {_fmt(fer)}",
        "",
    ]
    if rep.ambiguous:
        lines += [f"Answers matching more than one place in the passage: {rep.ambiguous}", ""]
    for key, value in sorted(rep.extras.items()):
        lines += [f"{key}: {value}", ""]
    fails = rep.overall.failures
    if fails:
        lines += ["| Failure | Count |", "|---|---|"]
        lines += [f"| {name} | {count} |" for name, count in sorted(fails.items())]
        lines.append("")

    lines += ["## Accuracy by anaphora type", "", "| | Grammatical | Textual | Average |", "|---|---|---|---|"]
    lines.append(
        "| all | "
        + " | ".join(_fmt(rep.accuracy("coref_type", t)) for t in COREF_TYPES)
        + f" | {_fmt(rep.accuracy('overall'))} |"
    )
    lines += ["", "## Accuracy by pronoun category and anaphora type", ""]
    lines += ["| | Grammatical | Textual | Average |", "|---|---|---|---|"]
    for cat in PRONOUN_CATEGORIES:
        cols = [_fmt(rep.accuracy("pronoun_category*coref_type", f"{cat}/{t}")) for t in COREF_TYPES]
        lines.append(f"| {cat} | {' | '.join(cols)} | {_fmt(rep.accuracy('pronoun_category', cat))} |")
    lines += ["", "## Accuracy by antecedent distance", "", "| Distance | Accuracy | Count |", "|---|---|---|"]
    for b in DistanceBucket:
        cell = rep.cells["distance"].get(b.value)
        lines.append(f"| {BUCKET_LABELS[b]} | {_fmt(rep.accuracy('distance', b.value))} | {cell.total if cell else 0} |")
    lines += ["", "## Accuracy by subcorpus", "", "| Subcorpus | Accuracy | Count |", "|---|---|---|"]
    for c in CORPORA:
        cell = rep.cells["subcorpus"].get(c)
        lines.append(f"| {SUBCORPUS_LABELS[c]} | {_fmt(rep.accuracy('subcorpus', c))} | {cell.total if cell else 0} |")
    lines.append("")
    return "\n".join(lines)


CSV_FIELDS = ("axis", "key", "total", "correct", "accuracy")


def to_csv(rep: StratifiedReport) -> str:
    buf = io.StringIO()
    writer = csv.DictWriter(buf, fieldnames=CSV_FIELDS, lineterminator="\n")
    writer.writeheader()
    for row in rep.to_json()["cells"]:
        writer.writerow({k: row[k] for k in CSV_FIELDS})
    return buf.getvalue()


def emit(rep: StratifiedReport, format: str) -> str:
    if format == "json":
        return json.dumps(rep.to_json(), indent=2, ensure_ascii=False) + "\n"
    if format == "csv":
        return to_csv(rep)
    if format == "markdown":
        return to_markdown(rep)
    raise ReportError(f"unknown report format {format!r}")
