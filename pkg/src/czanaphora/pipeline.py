"""File-level glue: scoring prediction records and model responses, run manifests."""

from __future__ import annotations

import hashlib
import json
import platform
from collections.abc import Iterable, Mapping, Sequence
from datetime import datetime, timezone
from pathlib import Path
from typing import Any

from . import __version__
from .corpus import InvalidSpan, Passage, Span
from .prompts import PromptInstance
from .report import StratifiedReport, emit
from .responses import ParsedResponse, parse_response
from .scorer import Failure, ScoreResult, score_answer_string, score_span, score_tagged_sentence, tokenize

PREDICTION_FORMS = ("answer", "tagged", "span", "label")


class PredictionError(ValueError):
    pass


def _spans_from(value: Any) -> list[Span]:
    if isinstance(value, Mapping):
        return [Span(int(value["start"]), int(value["end"]))]
    if isinstance(value, Sequence) and len(value) == 2 and all(isinstance(v, int) for v in value):
        return [Span(value[0], value[1])]
    return [p for v in value for p in _spans_from(v)]


def score_prediction(record: Mapping[str, Any], passage: Passage) -> ScoreResult:
    """Score one prediction record carrying exactly one of ``answer``, ``tagged``, ``span`` or ``label``."""
    forms = [f for f in PREDICTION_FORMS if f in record]
    if len(forms) != 1:
        raise PredictionError(f"record {record.get('id')!r} must carry exactly one of {PREDICTION_FORMS}")
    form = forms[0]
    value = record[form]
    if record.get("format_error"):
        return ScoreResult(Failure.FORMAT_ERROR)
    if value is None:
        return ScoreResult(Failure.NO_PREDICTION)
    tokens = tokenize(passage.text)
    if form == "answer":
        return score_answer_string(str(value), passage, tokens)
    if form == "tagged":
        return score_tagged_sentence(str(value), passage, tokens)
    if form == "label":
        return score_label(value, record.get("expected_label"))
    try:
        pieces = _spans_from(value)
    except (InvalidSpan, KeyError, TypeError, ValueError) as exc:
        raise PredictionError(f"record {record.get('id')!r}: bad span {value!r}") from exc
    if not pieces:
        return ScoreResult(Failure.NO_PREDICTION)
    return score_span(pieces, passage.antecedent_root, passage.antecedent_subtree, tokens, len(passage.text))


def score_label(label: str | None, expected: str | None) -> ScoreResult:
    if expected not in ("YES", "NO"):
        raise PredictionError("yes/no predictions need expected_label YES or NO")
    if not label:
        return ScoreResult(Failure.NO_PREDICTION)
    if label not in ("YES", "NO"):
        return ScoreResult(Failure.FORMAT_ERROR)
    return ScoreResult() if label == expected else ScoreResult(Failure.WRONG_LABEL)


def score_response(
    prompt: PromptInstance, raw: str | None, passage: Passage, strict: bool = False
) -> tuple[ParsedResponse | None, ScoreResult]:
    """Parse a raw completion for the prompt's strategy and score it."""
    if raw is None or not raw.strip():
        return None, ScoreResult(Failure.NO_PREDICTION)
    parsed = parse_response(prompt.strategy, raw, strict=strict)
    if parsed.kind == "format_error":
        return parsed, ScoreResult(Failure.FORMAT_ERROR)
    if prompt.strategy == "yes_no":
        return parsed, score_label(parsed.payload, prompt.expected_label)
    if prompt.strategy == "question_answering":
        return parsed, score_answer_string(parsed.payload, passage)
    return parsed, score_tagged_sentence(parsed.payload, passage)


def prediction_record(prompt: PromptInstance, parsed: ParsedResponse | None) -> dict[str, Any]:
    """Prediction-file row for a parsed response (re-scorable with ``score``).

    ``parsed`` is None for an empty completion.
    """
    field = {"yes_no": "label", "question_answering": "answer", "tagging": "tagged"}[prompt.strategy]
    row: dict[str, Any] = {"id": prompt.passage_id, field: ""}
    if parsed is not None and parsed.kind == "format_error":
        row["format_error"] = True
    elif parsed is not None:
        row[field] = parsed.payload
    if prompt.strategy == "yes_no":
        row["expected_label"] = prompt.expected_label
        row["candidate"] = prompt.candidate
    return row


def file_sha256(path: str | Path) -> str:
    h = hashlib.sha256()
    with Path(path).open("rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 20), b""):
            h.update(chunk)
    return h.hexdigest()


def now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


def write_manifest(
    run_dir: str | Path,
    command: str,
    config: Mapping[str, Any],
    inputs: Iterable[str | Path] = (),
    started: str | None = None,
    **extra: Any,
) -> Path:
    path = Path(run_dir) / "manifest.json"
    manifest = {
        "command": command,
        "tool_version": __version__,
        "python": platform.python_version(),
        "config": dict(config),
        "inputs": {str(p): file_sha256(p) for p in inputs if Path(p).is_file()},
        "started": started or now(),
        "finished": now(),
        **extra,
    }
    path.write_text(json.dumps(manifest, indent=2, ensure_ascii=False, default=str) + "\n", encoding="utf-8")
    return path


def write_reports(run_dir: str | Path, rep: StratifiedReport) -> None:
    run_dir = Path(run_dir)
    for fmt, name in (("json", "report.json"), ("csv", "report.csv"), ("markdown", "report.md")):
        (run_dir / name).write_text(emit(rep, fmt), encoding="utf-8")
