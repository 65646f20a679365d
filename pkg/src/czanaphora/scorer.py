"""Relaxed span-level accuracy.

A predicted antecedent is correct when it

1. covers the root token of the gold antecedent,
2. stays inside the gold antecedent subtree at token granularity, and
3. is one contiguous stretch of the passage.

Failure reasons are reported for the first violated condition in that order.
"""

from __future__ import annotations

import bisect
import re
from collections.abc import Sequence
from dataclasses import dataclass
from enum import Enum

from .corpus import Passage, Span, TagError, normalize_ws, parse_tagged_text, render_tagged_text


class Failure(str, Enum):
    ROOT_MISSING = "root_missing"
    CONTAINMENT_VIOLATED = "containment_violated"
    DISCONTINUOUS = "discontinuous"
    FORMAT_ERROR = "format_error"
    NO_PREDICTION = "no_prediction"
    # Yes/No items answered with the wrong label.
    WRONG_LABEL = "wrong_label"


class SpanOutOfRange(ValueError):
    pass


@dataclass(frozen=True, slots=True)
class ScoreResult:
    failure: Failure | None = None
    ambiguous: bool = False

    @property
    def correct(self) -> bool:
        return self.failure is None

    @property
    def verdict(self) -> str:
        return "correct" if self.failure is None else "incorrect"

    def to_json(self) -> dict:
        out = {"verdict": self.verdict, "failure": self.failure.value if self.failure else None}
        if self.ambiguous:
            out["ambiguous"] = True
        return out

    @classmethod
    def from_json(cls, data: dict) -> ScoreResult:
        failure = data.get("failure")
        return cls(Failure(failure) if failure else None, bool(data.get("ambiguous", False)))


CORRECT = ScoreResult()

_TOKEN_RE = re.compile(r"\w+|[^\w\s]")


@dataclass(frozen=True, slots=True)
class Tokenization:
    token_spans: tuple[Span, ...]

    def __post_init__(self) -> None:
        for a, b in zip(self.token_spans, self.token_spans[1:]):
            if a.end > b.start:
                raise ValueError("token spans overlap or are out of order")

    def __len__(self) -> int:
        return len(self.token_spans)

    def covering(self, span: Span) -> tuple[int, int] | None:
        """Indices ``[i, j)`` of the tokens overlapping ``span``, or None."""
        starts = [t.start for t in self.token_spans]
        ends = [t.end for t in self.token_spans]
        i = bisect.bisect_right(ends, span.start)
        j = bisect.bisect_left(starts, span.end)
        return (i, j) if i < j else None

    def snap(self, span: Span) -> Span | None:
        """Expand ``span`` to the boundaries of every token it touches."""
        idx = self.covering(span)
        if idx is None:
            return None
        return Span(self.token_spans[idx[0]].start, self.token_spans[idx[1] - 1].end)


def tokenize(text: str) -> Tokenization:
    """Words and individual punctuation marks; whitespace separates."""
    return Tokenization(tuple(Span(m.start(), m.end()) for m in _TOKEN_RE.finditer(text)))


def _merge_if_contiguous(pieces: Sequence[Span], tokens: Tokenization) -> Span | None:
    """Join token-snapped pieces into one span, or None when a token lies between them."""
    ordered = sorted(pieces)
    merged = ordered[0]
    for nxt in ordered[1:]:
        if nxt.start > merged.end:
            gap = tokens.covering(Span(merged.end, nxt.start))
            if gap is not None:
                return None
        merged = Span(merged.start, max(merged.end, nxt.end))
    return merged


def score_span(
    predicted: Span | Sequence[Span],
    gold_root: Span,
    gold_subtree: Span,
    tokens: Tokenization,
    text_length: int | None = None,
) -> ScoreResult:
    """Score one predicted span (or a list of span pieces) against the gold antecedent."""
    pieces = [predicted] if isinstance(predicted, Span) else list(predicted)
    if not pieces:
        return ScoreResult(Failure.NO_PREDICTION)
    limit = text_length if text_length is not None else (tokens.token_spans[-1].end if len(tokens) else 0)
    for s in (*pieces, gold_root, gold_subtree):
        if s.end > limit:
            raise SpanOutOfRange(f"span [{s.start}, {s.end}) beyond text length {limit}")
    snapped = [s for s in (tokens.snap(p) for p in pieces) if s is not None]
    root = tokens.snap(gold_root) or gold_root
    subtree = tokens.snap(gold_subtree) or gold_subtree
    if not snapped:
        return ScoreResult(Failure.ROOT_MISSING)
    if not any(p.contains(root) for p in snapped) and not _covered_by_union(root, snapped):
        return ScoreResult(Failure.ROOT_MISSING)
    if not all(subtree.contains(p) for p in snapped):
        return ScoreResult(Failure.CONTAINMENT_VIOLATED)
    if _merge_if_contiguous(snapped, tokens) is None:
        return ScoreResult(Failure.DISCONTINUOUS)
    return CORRECT


def _covered_by_union(target: Span, pieces: Sequence[Span]) -> bool:
    pos = target.start
    for p in sorted(pieces):
        if p.start > pos:
            break
        pos = max(pos, p.end)
        if pos >= target.end:
            return True
    return False


def _normalized_index(text: str) -> tuple[str, list[int]]:
    """Whitespace-normalized text and, per normalized char, its source offset."""
    chars: list[str] = []
    origin: list[int] = []
    pending_space = False
    for i, ch in enumerate(text):
        if ch.isspace():
            pending_space = bool(chars)
            continue
        if pending_space:
            chars.append(" ")
            origin.append(i - 1)
            pending_space = False
        chars.append(ch)
        origin.append(i)
    return "".join(chars), origin


def find_occurrences(answer: str, text: str) -> list[Span]:
    """Character spans in ``text`` whose whitespace-normalized form equals ``answer``'s."""
    needle = normalize_ws(answer)
    if not needle:
        return []
    hay, origin = _normalized_index(text)
    hits = []
    start = hay.find(needle)
    while start != -1:
        end = start + len(needle)
        hits.append(Span(origin[start], origin[end - 1] + 1))
        start = hay.find(needle, start + 1)
    return hits


def score_answer_string(answer: str, passage: Passage, tokens: Tokenization | None = None) -> ScoreResult:
    """Score a surface-string answer; any valid occurrence earns credit."""
    if not normalize_ws(answer):
        return ScoreResult(Failure.NO_PREDICTION)
    tokens = tokens or tokenize(passage.text)
    hits = find_occurrences(answer, passage.text)
    if not hits:
        return ScoreResult(Failure.FORMAT_ERROR)
    ambiguous = len(hits) > 1
    results = [
        score_span(h, passage.antecedent_root, passage.antecedent_subtree, tokens, len(passage.text))
        for h in hits
    ]
    best = next((r for r in results if r.correct), results[0])
    return ScoreResult(best.failure, ambiguous)


def score_tagged_sentence(
    predicted_tagged: str, passage: Passage, tokens: Tokenization | None = None
) -> ScoreResult:
    """Score a sentence echoed back with ``<ant>`` tags inserted."""
    if not predicted_tagged.strip():
        return ScoreResult(Failure.NO_PREDICTION)
    try:
        plain, ana, ant = parse_tagged_text(predicted_tagged)
    except TagError:
        return ScoreResult(Failure.FORMAT_ERROR)
    if ant is None:
        return ScoreResult(Failure.FORMAT_ERROR)
    # the model must reproduce the query sentence unchanged; dropped <ana> tags are tolerated
    if ana is not None:
        expected = normalize_ws(render_tagged_text(passage.text, passage.anaphor, None))
        echoed = normalize_ws(render_tagged_text(plain, ana, None))
    else:
        expected, echoed = normalize_ws(passage.text), normalize_ws(plain)
    if echoed != expected:
        return ScoreResult(Failure.FORMAT_ERROR)
    mapped = _map_span(plain, ant, passage.text)
    if mapped is None:
        return ScoreResult(Failure.FORMAT_ERROR)
    tokens = tokens or tokenize(passage.text)
    return score_span(mapped, passage.antecedent_root, passage.antecedent_subtree, tokens, len(passage.text))


def _map_span(source: str, span: Span, target: str) -> Span | None:
    """Carry ``span`` from ``source`` to ``target``; both differ only in whitespace."""
    src_norm, src_origin = _normalized_index(source)
    tgt_norm, tgt_origin = _normalized_index(target)
    if src_norm != tgt_norm:
        return None
    idx = [k for k, o in enumerate(src_origin) if span.start <= o < span.end and not source[o].isspace()]
    if not idx:
        return None
    return Span(tgt_origin[idx[0]], tgt_origin[idx[-1]] + 1)
