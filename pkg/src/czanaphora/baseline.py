"""Rule-based antecedent selection over externally produced UD parses.

Parsing itself happens outside this package (any UD parser emitting
CoNLL-U will do). :func:`ingest_conllu` aligns the parse to the dataset
passages; :func:`resolve` picks the closest preceding noun phrase that
agrees with the pronoun in gender and number.
"""

from __future__ import annotations

import logging
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .corpus import Dataset, Passage, Span

logger = logging.getLogger(__name__)

NOMINAL_UPOS = frozenset({"NOUN", "PROPN"})
PRONOMINAL_UPOS = frozenset({"PRON", "DET"})
AGREEMENT_FEATURES = ("Gender", "Number")


class ConlluError(ValueError):
    pass


class MalformedConllu(ConlluError):
    pass


class AlignmentError(ConlluError):
    pass


@dataclass(frozen=True, slots=True)
class ParsedToken:
    id: int
    form: str
    lemma: str
    upos: str
    feats: Mapping[str, frozenset[str]]
    head: int
    deprel: str
    char_span: Span | None = None


@dataclass(frozen=True, slots=True)
class ParsedPassage:
    passage_id: str
    sentences: tuple[tuple[ParsedToken, ...], ...]
    anaphor_token: tuple[int, int]  # (sentence index, token position within sentence)
    anaphor_span: Span

    @property
    def flat(self) -> list[tuple[int, int, ParsedToken]]:
        return [(s, k, tok) for s, sent in enumerate(self.sentences) for k, tok in enumerate(sent)]

    @property
    def anaphor(self) -> ParsedToken:
        s, k = self.anaphor_token
        return self.sentences[s][k]


def parse_feats(raw: str) -> dict[str, frozenset[str]]:
    if raw in ("_", ""):
        return {}
    feats: dict[str, frozenset[str]] = {}
    for item in raw.split("|"):
        if "=" not in item:
            raise MalformedConllu(f"bad FEATS item {item!r}")
        key, value = item.split("=", 1)
        feats[key] = frozenset(value.split(","))
    return feats


@dataclass
class _Block:
    passage_id: str | None
    sentences: list[list[ParsedToken]] = field(default_factory=list)
    # per sentence: (surface form, [syntactic word ids covered]) in surface order
    surfaces: list[list[tuple[str, list[int]]]] = field(default_factory=list)


def read_conllu(lines: Iterable[str]) -> list[_Block]:
    """Group CoNLL-U sentences into passage blocks.

    A block starts at ``# passage_id = X`` or, when that comment is never
    used, at ``# newpar`` / ``# newdoc`` boundaries.
    """
    blocks: list[_Block] = []
    cur_sent: list[ParsedToken] = []
    cur_surf: list[tuple[str, list[int]]] = []
    pending_mwt: tuple[int, int, str] | None = None
    uses_ids = False
    start_new: str | None | bool = False
    lineno = 0

    def flush() -> None:
        nonlocal cur_sent, cur_surf, start_new
        if not cur_sent:
            return
        if start_new is not False or not blocks:
            blocks.append(_Block(start_new if isinstance(start_new, str) else None))
            start_new = False
        blocks[-1].sentences.append(cur_sent)
        blocks[-1].surfaces.append(cur_surf)
        cur_sent, cur_surf = [], []

    for lineno, raw in enumerate(lines, 1):
        line = raw.rstrip("\n").rstrip("\r")
        if not line.strip():
            flush()
            continue
        if line.startswith("#"):
            key, _, value = line[1:].partition("=")
            key = key.strip()
            if key == "passage_id":
                flush()
                uses_ids = True
                if not (blocks and blocks[-1].passage_id == value.strip() and start_new is False):
                    start_new = value.strip()
            elif key in ("newpar", "newdoc") and not uses_ids:
                flush()
                start_new = None
            continue
        cols = line.split("\t")
        if len(cols) != 10:
            raise MalformedConllu(f"line {lineno}: expected 10 columns, got {len(cols)}")
        tid = cols[0]
        if "-" in tid:
            a, b = tid.split("-", 1)
            if not (a.isdigit() and b.isdigit()):
                raise MalformedConllu(f"line {lineno}: bad range id {tid!r}")
            pending_mwt = (int(a), int(b), cols[1])
            cur_surf.append((cols[1], list(range(int(a), int(b) + 1))))
            continue
        if "." in tid:
            continue  # empty nodes carry no surface text
        if not tid.isdigit():
            raise MalformedConllu(f"line {lineno}: bad token id {tid!r}")
        if not cols[6].isdigit():
            raise MalformedConllu(f"line {lineno}: non-integer head {cols[6]!r}")
        tok = ParsedToken(int(tid), cols[1], cols[2], cols[3], parse_feats(cols[5]), int(cols[6]), cols[7])
        cur_sent.append(tok)
        if pending_mwt and pending_mwt[0] <= tok.id <= pending_mwt[1]:
            if tok.id == pending_mwt[1]:
                pending_mwt = None
        else:
            cur_surf.append((tok.form, [tok.id]))
    flush()
    for block in blocks:
        for sent in block.sentences:
            n = len(sent)
            for tok in sent:
                if tok.head > n:
                    raise MalformedConllu(f"head {tok.head} out of range in sentence of {n} tokens")
    return blocks


def _align(block: _Block, text: str) -> tuple[tuple[ParsedToken, ...], ...]:
    pos = 0
    out: list[tuple[ParsedToken, ...]] = []
    for sent, surfaces in zip(block.sentences, block.surfaces):
        spans: dict[int, Span] = {}
        for form, ids in surfaces:
            while pos < len(text) and text[pos].isspace():
                pos += 1
            if text.startswith(form, pos):
                end = pos + len(form)
            else:
                # tolerate whitespace inside the surface form (e.g. "10 000")
                end = _match_ignoring_space(text, pos, form)
                if end is None:
                    raise AlignmentError(
                        f"passage {block.passage_id}: token {form!r} does not match text at offset {pos}: "
                        f"{text[pos:pos + len(form) + 10]!r}"
                    )
            for i in ids:
                spans[i] = Span(pos, end)
            pos = end
        out.append(tuple(
            ParsedToken(t.id, t.form, t.lemma, t.upos, t.feats, t.head, t.deprel, spans.get(t.id))
            for t in sent
        ))
    if text[pos:].strip():
        raise AlignmentError(f"passage {block.passage_id}: parse ends before text at offset {pos}")
    return tuple(out)


def _match_ignoring_space(text: str, pos: int, form: str) -> int | None:
    want = "".join(form.split())
    k = 0
    i = pos
    while i < len(text) and k < len(want):
        if text[i].isspace():
            i += 1
            continue
        if text[i] != want[k]:
            return None
        i += 1
        k += 1
    return i if k == len(want) and want else None


def _find_anaphor(sentences: Sequence[Sequence[ParsedToken]], anaphor: Span) -> tuple[int, int] | None:
    overlapping = [
        (s, k, t)
        for s, sent in enumerate(sentences)
        for k, t in enumerate(sent)
        if t.char_span is not None and t.char_span.overlaps(anaphor)
    ]
    if not overlapping:
        return None
    pron = [x for x in overlapping if x[2].upos in PRONOMINAL_UPOS]
    s, k, _ = (pron or overlapping)[0]
    return s, k


def align_block(block: _Block, passage: Passage) -> ParsedPassage:
    sentences = _align(block, passage.text)
    where = _find_anaphor(sentences, passage.anaphor)
    if where is None:
        raise AlignmentError(f"passage {passage.id}: no token overlaps the anaphor")
    return ParsedPassage(passage.id, sentences, where, passage.anaphor)


def ingest_conllu(
    path: str | Path,
    dataset: Dataset,
    order: Sequence[str] | None = None,
) -> tuple[list[ParsedPassage], list[str]]:
    """Read a CoNLL-U file and align each parsed block to its passage.

    Blocks are matched by ``# passage_id`` comments; files without them
    are matched positionally to ``order`` (the id list written next to
    the plain-text export). Returns the aligned passages and a list of
    problems for passages that were skipped.
    """
    try:
        with Path(path).open(encoding="utf-8") as fh:
            blocks = read_conllu(fh)
    except OSError as exc:
        raise ConlluError(f"cannot read {path}: {exc}") from exc
    if blocks and all(b.passage_id is None for b in blocks):
        if order is None:
            raise ConlluError("CoNLL-U has no passage_id comments and no id order was given")
        if len(order) != len(blocks):
            raise AlignmentError(f"{len(blocks)} paragraph blocks for {len(order)} passage ids")
        for b, pid in zip(blocks, order):
            b.passage_id = pid
    parsed: list[ParsedPassage] = []
    problems: list[str] = []
    for block in blocks:
        passage = dataset.get(block.passage_id or "")
        if passage is None:
            problems.append(f"{block.passage_id}: unknown passage id")
            continue
        try:
            parsed.append(align_block(block, passage))
        except AlignmentError as exc:
            problems.append(str(exc))
    for msg in problems:
        logger.warning("skipped: %s", msg)
    return parsed, problems


def emit_plain_text(passages: Iterable[Passage]) -> tuple[str, list[str]]:
    """Blank-line separated passages for an external parser, plus the id order."""
    ids, chunks = [], []
    for p in passages:
        ids.append(p.id)
        chunks.append(" ".join(p.text.split()))
    return "\n\n".join(chunks) + ("\n" if chunks else ""), ids


@dataclass(frozen=True, slots=True)
class Candidate:
    head: tuple[int, int]
    span: Span
    distance: int


EDGE_DEPRELS = frozenset({"punct", "case", "cc", "mark"})


def _edge_word(tok: ParsedToken) -> bool:
    return tok.upos == "PUNCT" or tok.deprel.split(":")[0] in EDGE_DEPRELS


def _subtree_block(sent: Sequence[ParsedToken], head_pos: int, limit: int) -> tuple[int, int]:
    """Contiguous run of the head's subtree (positions < ``limit``) around the head."""
    children: dict[int, list[int]] = {}
    for t in sent:
        children.setdefault(t.head, []).append(t.id)
    members = set()
    stack = [sent[head_pos].id]
    while stack:
        node = stack.pop()
        members.add(node)
        stack.extend(children.get(node, ()))
    lo = hi = head_pos
    while lo - 1 >= 0 and sent[lo - 1].id in members:
        lo -= 1
    while hi + 1 < limit and sent[hi + 1].id in members:
        hi += 1
    while lo < head_pos and _edge_word(sent[lo]):
        lo += 1
    while hi > head_pos and _edge_word(sent[hi]):
        hi -= 1
    return lo, hi


def extract_np_candidates(parsed: ParsedPassage) -> list[Candidate]:
    """Nominal heads before the anaphor, nearest first, with their truncated subtree spans."""
    flat = parsed.flat
    ana_s, ana_k = parsed.anaphor_token
    ana_index = next(i for i, (s, k, _) in enumerate(flat) if (s, k) == (ana_s, ana_k))
    cands: list[Candidate] = []
    for i, (s, k, tok) in enumerate(flat):
        if tok.upos not in NOMINAL_UPOS or tok.char_span is None:
            continue
        if tok.char_span.end > parsed.anaphor_span.start:
            continue
        sent = parsed.sentences[s]
        limit = len(sent)
        for pos, t in enumerate(sent):
            if t.char_span is not None and t.char_span.end > parsed.anaphor_span.start:
                limit = pos
                break
        lo, hi = _subtree_block(sent, k, limit)
        span = Span(sent[lo].char_span.start, sent[hi].char_span.end)
        cands.append(Candidate((s, k), span, ana_index - i))
    cands.sort(key=lambda c: c.distance)
    return cands


def agreement_match(pronoun_feats: Mapping[str, Iterable[str]], candidate_feats: Mapping[str, Iterable[str]]) -> bool:
    """Gender and number compatibility; a missing feature matches anything."""
    for name in AGREEMENT_FEATURES:
        a, b = pronoun_feats.get(name), candidate_feats.get(name)
        if a is None or b is None:
            continue
        if not set(_values(a)) & set(_values(b)):
            return False
    return True


def _values(v: Iterable[str] | str) -> Iterable[str]:
    return v.split(",") if isinstance(v, str) else v


def resolve(parsed: ParsedPassage, fallback: str = "nearest") -> Span | None:
    """Closest agreeing candidate; ``fallback`` decides what happens when none agrees."""
    if fallback not in ("nearest", "abstain"):
        raise ValueError(f"unknown fallback mode {fallback!r}")
    cands = extract_np_candidates(parsed)
    if not cands:
        return None
    pron = parsed.anaphor.feats
    for c in cands:
        s, k = c.head
        if agreement_match(pron, parsed.sentences[s][k].feats):
            return c.span
    return cands[0].span if fallback == "nearest" else None
