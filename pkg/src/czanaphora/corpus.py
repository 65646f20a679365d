"""Dataset records, the ``<ana>``/``<ant>`` tag format, and dataset loading."""

from __future__ import annotations

import csv
import hashlib
import json
import logging
import re
from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

logger = logging.getLogger(__name__)

CORPORA = ("PDT 3.5", "PCEDT 2.0", "PDTSC 2.0")
SPLITS = ("train", "validation", "test")
COREF_TYPES = ("grammatical", "textual")
PRONOUN_CATEGORIES = ("n.pron.indef", "n.pron.def.pers", "n.pron.def.demon")

# Published split statistics, (grammatical, textual) per split.
PUBLISHED_COUNTS: dict[str, dict[str, tuple[int, int]]] = {
    "train": {"passages": (25951, 19009), "sentences": (34413, 30757), "words": (750298, 601294)},
    "validation": {"passages": (3244, 2376), "sentences": (4369, 3913), "words": (93324, 74365)},
    "test": {"passages": (3247, 2380), "sentences": (4351, 3837), "words": (95363, 75385)},
}


class CorpusError(ValueError):
    pass


class TagError(CorpusError):
    pass


class UnbalancedTags(TagError):
    pass


class DuplicateTag(TagError):
    pass


class CrossingTags(TagError):
    pass


class EmptyTagContent(TagError):
    pass


class InvalidSpan(CorpusError):
    pass


class SchemaError(CorpusError):
    pass


class InvariantViolation(CorpusError):
    pass


@dataclass(frozen=True, slots=True, order=True)
class Span:
    """Half-open character interval ``[start, end)``."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end <= self.start:
            raise InvalidSpan(f"invalid span [{self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start

    def contains(self, other: Span) -> bool:
        return self.start <= other.start and other.end <= self.end

    def overlaps(self, other: Span) -> bool:
        return self.start < other.end and other.start < self.end

    def check(self, text: str) -> Span:
        if self.end > len(text):
            raise InvalidSpan(f"span [{self.start}, {self.end}) exceeds text length {len(text)}")
        return self

    def of(self, text: str) -> str:
        return text[self.start : self.end]

    def to_json(self) -> dict[str, int]:
        return {"start": self.start, "end": self.end}


def normalize_ws(text: str) -> str:
    return " ".join(text.split())


_TAG_RE = re.compile(r"<(/?)(ana|ant)>")


def parse_tagged_text(tagged: str) -> tuple[str, Span | None, Span | None]:
    """Strip ``<ana>``/``<ant>`` tags and return ``(plain, ana, ant)``.

    Offsets address the tag-free text. The anaphor may sit inside the
    antecedent; any other overlap raises :class:`CrossingTags`.
    """
    pieces: list[str] = []
    plain_len = 0
    pos = 0
    opened: dict[str, int] = {}
    stack: list[str] = []
    found: dict[str, Span] = {}
    for m in _TAG_RE.finditer(tagged):
        chunk = tagged[pos : m.start()]
        pieces.append(chunk)
        plain_len += len(chunk)
        pos = m.end()
        closing, name = m.group(1) == "/", m.group(2)
        if not closing:
            if name in opened or name in found:
                raise DuplicateTag(f"second <{name}> tag at offset {m.start()}")
            opened[name] = plain_len
            stack.append(name)
            continue
        if name not in opened:
            raise UnbalancedTags(f"</{name}> without opening tag at offset {m.start()}")
        if stack[-1] != name:
            raise CrossingTags(f"</{name}> closes across <{stack[-1]}>")
        stack.pop()
        start = opened.pop(name)
        if start == plain_len:
            raise EmptyTagContent(f"empty <{name}></{name}> pair")
        found[name] = Span(start, plain_len)
    if opened:
        raise UnbalancedTags(f"unclosed tag(s): {', '.join(sorted(opened))}")
    pieces.append(tagged[pos:])
    ana, ant = found.get("ana"), found.get("ant")
    if ana and ant and ana.overlaps(ant) and not ant.contains(ana):
        raise CrossingTags("antecedent nested inside anaphor")
    return "".join(pieces), ana, ant


def render_tagged_text(plain: str, ana: Span | None = None, ant: Span | None = None) -> str:
    """Inverse of :func:`parse_tagged_text`."""
    for span in (ana, ant):
        if span is not None:
            span.check(plain)
    if ana and ant and ana.overlaps(ant) and not ant.contains(ana):
        raise CrossingTags("anaphor and antecedent overlap without containment")
    # (position, rank, tag): closes before opens; outer opens first, inner closes first
    events: list[tuple[int, int, str]] = []
    if ant is not None:
        events += [(ant.start, 2, "<ant>"), (ant.end, 1, "</ant>")]
    if ana is not None:
        events += [(ana.start, 3, "<ana>"), (ana.end, 0, "</ana>")]
    events.sort()
    out: list[str] = []
    pos = 0
    for at, _, tag in events:
        out.append(plain[pos:at])
        out.append(tag)
        pos = at
    out.append(plain[pos:])
    return "".join(out)


@dataclass(frozen=True, slots=True)
class AnaphoraMetadata:
    coref_type: str
    pronoun_category: str
    distance: int
    anaphor_in_antecedent: bool
    subcorpus: str
    split: str
    n_sentences: int = 1
    n_words: int = 0

    def __post_init__(self) -> None:
        if self.coref_type not in COREF_TYPES:
            raise InvariantViolation(f"unknown coref_type {self.coref_type!r}")
        if self.pronoun_category not in PRONOUN_CATEGORIES:
            raise InvariantViolation(f"unknown pronoun_category {self.pronoun_category!r}")
        if self.subcorpus not in CORPORA:
            raise InvariantViolation(f"unknown subcorpus {self.subcorpus!r}")
        if self.split not in SPLITS:
            raise InvariantViolation(f"unknown split {self.split!r}")
        if self.pronoun_category == "n.pron.def.demon" and self.coref_type != "textual":
            raise InvariantViolation("demonstrative pronoun with grammatical coreference")


@dataclass(frozen=True, slots=True)
class Passage:
    id: str
    text: str
    anaphor: Span
    antecedent_subtree: Span
    antecedent_root: Span
    metadata: AnaphoraMetadata

    def __post_init__(self) -> None:
        for name in ("anaphor", "antecedent_subtree", "antecedent_root"):
            try:
                getattr(self, name).check(self.text)
            except InvalidSpan as exc:
                raise InvariantViolation(f"{name}: {exc}") from None
        if not self.antecedent_subtree.contains(self.antecedent_root):
            raise InvariantViolation("antecedent_root lies outside antecedent_subtree")
        overlaps = self.anaphor.overlaps(self.antecedent_subtree)
        if overlaps and not self.antecedent_subtree.contains(self.anaphor):
            raise InvariantViolation("anaphor partially overlaps the antecedent")
        if self.metadata.anaphor_in_antecedent and not overlaps:
            raise InvariantViolation("anaphor_in_antecedent set but anaphor lies outside the antecedent")

    @property
    def anaphor_surface(self) -> str:
        return self.anaphor.of(self.text)

    @property
    def subtree_surface(self) -> str:
        return self.antecedent_subtree.of(self.text)

    @property
    def root_surface(self) -> str:
        return self.antecedent_root.of(self.text)

    @property
    def sentence_ana(self) -> str:
        return render_tagged_text(self.text, self.anaphor, None)

    @property
    def sentence_ant_ana(self) -> str:
        return render_tagged_text(self.text, self.anaphor, self.antecedent_subtree)

    @property
    def is_cataphora(self) -> bool:
        return self.antecedent_subtree.start >= self.anaphor.end


@dataclass(frozen=True, slots=True)
class Counts:
    passages: int = 0
    sentences: int = 0
    words: int = 0

    def __add__(self, other: Counts) -> Counts:
        return Counts(
            self.passages + other.passages,
            self.sentences + other.sentences,
            self.words + other.words,
        )


@dataclass(frozen=True, slots=True)
class Rejection:
    line: int
    id: str | None
    reason: str

    def __str__(self) -> str:
        return f"record {self.line} ({self.id or '?'}): {self.reason}"


@dataclass(frozen=True)
class Dataset:
    passages: tuple[Passage, ...] = ()
    rejections: tuple[Rejection, ...] = ()
    source_hash: str | None = None
    _index: dict[str, Passage] = field(init=False, repr=False, compare=False)

    def __post_init__(self) -> None:
        index: dict[str, Passage] = {}
        for p in self.passages:
            if p.id in index:
                raise InvariantViolation(f"duplicate passage id {p.id!r}")
            index[p.id] = p
        object.__setattr__(self, "_index", index)

    def __len__(self) -> int:
        return len(self.passages)

    def __iter__(self) -> Iterator[Passage]:
        return iter(self.passages)

    def __contains__(self, pid: object) -> bool:
        return pid in self._index

    def __getitem__(self, pid: str) -> Passage:
        return self._index[pid]

    def get(self, pid: str) -> Passage | None:
        return self._index.get(pid)

    def split(self, name: str) -> Dataset:
        if name not in SPLITS:
            raise CorpusError(f"unknown split {name!r}")
        return Dataset(
            tuple(p for p in self.passages if p.metadata.split == name),
            source_hash=self.source_hash,
        )

    @property
    def counts(self) -> dict[str, dict[str, Counts]]:
        table = {s: {t: Counts() for t in COREF_TYPES} for s in SPLITS}
        for p in self.passages:
            m = p.metadata
            table[m.split][m.coref_type] += Counts(1, m.n_sentences, m.n_words)
        return table

    @classmethod
    def merge(cls, *parts: Dataset) -> Dataset:
        hashes = [d.source_hash for d in parts if d.source_hash]
        digest = hashlib.sha256("".join(hashes).encode()).hexdigest() if hashes else None
        return cls(
            tuple(p for d in parts for p in d.passages),
            tuple(r for d in parts for r in d.rejections),
            digest,
        )


# Published column names mapped onto the loader's field names.
DEFAULT_ALIASES: dict[str, str] = {
    "sentence_id": "id",
    "passage_id": "id",
    "anaphor": "anaphora",
    "ana": "anaphora",
    "antecedent": "antecedent_subtree",
    "root": "antecedent_root",
    "type": "coref_type",
    "anaphora_type": "coref_type",
    "coreference_type": "coref_type",
    "coref": "coref_type",
    "pronoun_type": "pronoun_category",
    "pron_category": "pronoun_category",
    "category": "pronoun_category",
    "token_distance": "distance",
    "ana_ant_distance": "distance",
    "ana_in_ant": "anaphor_in_antecedent",
    "anaphor_in_ant": "anaphor_in_antecedent",
    "corpus": "subcorpus",
    "source": "subcorpus",
    "sentences": "n_sentences",
    "words": "n_words",
}

_COREF_VALUES = {"grammatical": "grammatical", "gram": "grammatical", "textual": "textual", "text": "textual"}
_CORPUS_VALUES = {"pdt": "PDT 3.5", "pcedt": "PCEDT 2.0", "pdtsc": "PDTSC 2.0"}
_SPLIT_VALUES = {"train": "train", "dev": "validation", "val": "validation", "validation": "validation", "test": "test"}

_WORD_RE = re.compile(r"\w+")
_SENT_END_RE = re.compile(r"[.!?…]+[\"'“”„)]*\s+(?=[\"'“„(]?[A-ZÁČĎÉĚÍŇÓŘŠŤÚŮÝŽ0-9])")


def count_sentences(text: str) -> int:
    return len(_SENT_END_RE.findall(text.strip())) + 1 if text.strip() else 0


def count_words(text: str) -> int:
    return len(_WORD_RE.findall(text))


def _canon(value: Any, table: Mapping[str, str], what: str) -> str:
    key = str(value).strip()
    low = key.lower()
    if low in table:
        return table[low]
    for prefix, canon in table.items():
        if low.startswith(prefix + " ") or low == prefix:
            return canon
    if key in table.values():
        return key
    raise InvariantViolation(f"unrecognized {what} value {value!r}")


def _as_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    if isinstance(value, (int, float)):
        return bool(value)
    low = str(value).strip().lower()
    if low in ("true", "1", "yes", "y", "t"):
        return True
    if low in ("false", "0", "no", "n", "f", ""):
        return False
    raise InvariantViolation(f"not a boolean: {value!r}")


def _token_aligned(text: str, start: int, end: int) -> bool:
    left_ok = start == 0 or not (text[start - 1].isalnum() and text[start].isalnum())
    right_ok = end == len(text) or not (text[end - 1].isalnum() and text[end].isalnum())
    return left_ok and right_ok


def _locate_root(text: str, subtree: Span, root: str) -> Span:
    window = subtree.of(text)
    root = root.strip()
    if not root:
        raise InvariantViolation("empty antecedent_root")
    hits = [m.start() for m in re.finditer(re.escape(root), window)]
    if not hits:
        raise InvariantViolation(f"antecedent_root {root!r} lies outside antecedent_subtree")
    aligned = [h for h in hits if _token_aligned(text, subtree.start + h, subtree.start + h + len(root))]
    offset = (aligned or hits)[0]
    return Span(subtree.start + offset, subtree.start + offset + len(root))


def passage_from_record(
    record: Mapping[str, Any],
    *,
    aliases: Mapping[str, str] | None = None,
    split: str | None = None,
    flip_distance_sign: bool = False,
) -> Passage:
    """Build and validate one :class:`Passage` from a raw record."""
    table = {**DEFAULT_ALIASES, **(aliases or {})}
    rec: dict[str, Any] = {}
    for key, value in record.items():
        rec.setdefault(table.get(key, key), value)

    def need(name: str) -> Any:
        value = rec.get(name)
        if value is None or (isinstance(value, float) and value != value):
            raise SchemaError(f"missing field {name!r}")
        return value

    pid = str(need("id"))
    text, ana, ant = parse_tagged_text(str(need("sentence_ant_ana")))
    if ana is None or ant is None:
        raise InvariantViolation("sentence_ant_ana must carry one <ana> and one <ant> pair")
    if rec.get("sentence_ana") is not None:
        text2, ana2, ant2 = parse_tagged_text(str(rec["sentence_ana"]))
        if ant2 is not None:
            raise InvariantViolation("sentence_ana carries an <ant> tag")
        if normalize_ws(text2) != normalize_ws(text) or ana2 is None:
            raise InvariantViolation("sentence_ana and sentence_ant_ana disagree")
    surface = rec.get("anaphora")
    if surface is not None and normalize_ws(str(surface)) != normalize_ws(ana.of(text)):
        raise InvariantViolation(f"anaphor surface {surface!r} != tagged {ana.of(text)!r}")
    subtree = rec.get("antecedent_subtree")
    if subtree is not None and normalize_ws(str(subtree)) != normalize_ws(ant.of(text)):
        raise InvariantViolation(f"antecedent_subtree {subtree!r} != tagged {ant.of(text)!r}")
    if rec.get("antecedent_root_start") is not None:
        rs = int(rec["antecedent_root_start"])
        root = Span(rs, rs + len(str(need("antecedent_root"))))
        if not ant.contains(root):
            raise InvariantViolation("antecedent_root lies outside antecedent_subtree")
    else:
        root = _locate_root(text, ant, str(need("antecedent_root")))

    distance = int(need("distance"))
    if flip_distance_sign:
        distance = -distance
    overlap = ana.overlaps(ant)
    in_ant = _as_bool(rec["anaphor_in_antecedent"]) if rec.get("anaphor_in_antecedent") is not None else overlap
    meta = AnaphoraMetadata(
        coref_type=_canon(need("coref_type"), _COREF_VALUES, "coref_type"),
        pronoun_category=str(need("pronoun_category")).strip(),
        distance=distance,
        anaphor_in_antecedent=in_ant,
        subcorpus=_canon(need("subcorpus"), _CORPUS_VALUES, "subcorpus"),
        split=_canon(rec["split"] if rec.get("split") is not None else split or need("split"), _SPLIT_VALUES, "split"),
        n_sentences=int(rec["n_sentences"]) if rec.get("n_sentences") is not None else count_sentences(text),
        n_words=int(rec["n_words"]) if rec.get("n_words") is not None else count_words(text),
    )
    return Passage(pid, text, ana, ant, root, meta)


def passage_to_record(p: Passage) -> dict[str, Any]:
    m = p.metadata
    return {
        "id": p.id,
        "sentence_ana": p.sentence_ana,
        "sentence_ant_ana": p.sentence_ant_ana,
        "anaphora": p.anaphor_surface,
        "antecedent_subtree": p.subtree_surface,
        "antecedent_root": p.root_surface,
        "antecedent_root_start": p.antecedent_root.start,
        "coref_type": m.coref_type,
        "pronoun_category": m.pronoun_category,
        "distance": m.distance,
        "anaphor_in_antecedent": m.anaphor_in_antecedent,
        "subcorpus": m.subcorpus,
        "split": m.split,
        "n_sentences": m.n_sentences,
        "n_words": m.n_words,
    }


def _read_records(path: Path, fmt: str) -> Iterator[dict[str, Any]]:
    if fmt == "json-lines":
        with path.open(encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    yield json.loads(line)
                except json.JSONDecodeError as exc:
                    yield {"__error__": f"line {lineno}: bad JSON ({exc.msg})"}
    elif fmt == "tabular":
        if path.suffix == ".parquet":
            import pandas as pd

            frame = pd.read_parquet(path)
            yield from frame.to_dict(orient="records")
            return
        with path.open(encoding="utf-8", newline="") as fh:
            delimiter = "\t" if path.suffix in (".tsv", ".tab") else ","
            yield from csv.DictReader(fh, delimiter=delimiter)
    else:
        raise CorpusError(f"unknown dataset format {fmt!r}")


def guess_format(path: Path) -> str:
    return "tabular" if path.suffix in (".csv", ".tsv", ".tab", ".parquet") else "json-lines"


def load_dataset(
    path: str | Path,
    format: str | None = None,
    *,
    split: str | None = None,
    strict: bool = False,
    aliases: Mapping[str, str] | None = None,
    flip_distance_sign: bool = False,
) -> Dataset:
    """Load and validate a dataset file.

    Invalid records are collected as rejections; with ``strict`` any
    rejection raises :class:`InvariantViolation` after the whole file has
    been read. ``split`` fills in records that carry no split field (for
    splits shipped as separate files).
    """
    path = Path(path)
    fmt = format or guess_format(path)
    try:
        digest = hashlib.sha256(path.read_bytes()).hexdigest()
    except OSError as exc:
        raise CorpusError(f"cannot read {path}: {exc}") from exc
    passages: list[Passage] = []
    rejections: list[Rejection] = []
    seen: set[str] = set()
    for n, record in enumerate(_read_records(path, fmt), 1):
        if "__error__" in record:
            rejections.append(Rejection(n, None, "SchemaError: " + record["__error__"]))
            continue
        rid = record.get("id")
        try:
            p = passage_from_record(record, aliases=aliases, split=split, flip_distance_sign=flip_distance_sign)
            if p.id in seen:
                raise InvariantViolation(f"duplicate id {p.id!r}")
        except CorpusError as exc:
            rejections.append(Rejection(n, None if rid is None else str(rid), f"{type(exc).__name__}: {exc}"))
            continue
        seen.add(p.id)
        passages.append(p)
    if rejections:
        logger.warning("%s: %d record(s) rejected", path, len(rejections))
        if strict:
            raise InvariantViolation(
                f"{len(rejections)} invalid record(s) in {path}; first: {rejections[0]}"
            )
    return Dataset(tuple(passages), tuple(rejections), digest)


def distance_sign_check(dataset: Iterable[Passage]) -> dict[str, int]:
    """Tally how the distance sign relates to span order.

    ``consistent`` means negative distance exactly when the antecedent
    follows the anaphor. A dataset dominated by ``inverted`` wants
    ``flip_distance_sign``.
    """
    tally = {"consistent": 0, "inverted": 0, "undetermined": 0}
    for p in dataset:
        d = p.metadata.distance
        if p.metadata.anaphor_in_antecedent or d == 0:
            tally["undetermined"] += 1
        elif (d < 0) == p.is_cataphora:
            tally["consistent"] += 1
        else:
            tally["inverted"] += 1
    return tally


def export_finetune_pairs(dataset: Dataset, split: str) -> list[tuple[str, str]]:
    return [
        (render_tagged_text(p.text, p.anaphor, None), render_tagged_text(p.text, p.anaphor, p.antecedent_subtree))
        for p in dataset.split(split)
    ]


def write_jsonl(path: str | Path, rows: Iterable[Mapping[str, Any]]) -> int:
    n = 0
    with Path(path).open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False) + "\n")
            n += 1
    return n


def read_jsonl(path: str | Path) -> list[dict[str, Any]]:
    with Path(path).open(encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def dataset_to_jsonl(path: str | Path, passages: Sequence[Passage]) -> int:
    return write_jsonl(path, (passage_to_record(p) for p in passages))


_SPLIT_HINTS = (("train", "train"), ("valid", "validation"), ("dev", "validation"), ("test", "test"))
_DATA_SUFFIXES = (".jsonl", ".json", ".csv", ".tsv", ".parquet")


def load_path(path: str | Path, **kwargs: Any) -> Dataset:
    """Load one dataset file, or every data file in a directory.

    In a directory, a split named in the file name (``train``, ``valid``/``dev``,
    ``test``) fills in records without a split field.
    """
    path = Path(path)
    if not path.is_dir():
        return load_dataset(path, **kwargs)
    parts = []
    for f in sorted(path.iterdir()):
        if f.suffix not in _DATA_SUFFIXES:
            continue
        hint = next((split for key, split in _SPLIT_HINTS if key in f.name.lower()), None)
        parts.append(load_dataset(f, **{"split": hint, **kwargs}))
    return Dataset.merge(*parts)
