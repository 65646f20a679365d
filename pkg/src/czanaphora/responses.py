"""Turn raw model output into something the scorer can consume.

Every parser is total: malformed output becomes ``format_error``, never
an exception.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

KINDS = ("yes", "no", "answer_string", "tagged_sentence", "format_error")

_INNER_BRACKETS = re.compile(r"\[([^\[\]]*)\]")
_TRAILING_PUNCT = ".,!?;:\"'`*)"


@dataclass(frozen=True, slots=True)
class ParsedResponse:
    kind: str
    payload: str | None = None

    def __post_init__(self) -> None:
        if self.kind not in KINDS:
            raise ValueError(f"unknown response kind {self.kind!r}")
        if self.kind in ("answer_string", "tagged_sentence") and not self.payload:
            raise ValueError(f"{self.kind} needs a non-empty payload")

    def to_json(self) -> dict:
        return {"kind": self.kind, "payload": self.payload}


FORMAT_ERROR = ParsedResponse("format_error")


def parse_yesno(raw: str, strict: bool = False) -> ParsedResponse:
    text = raw.strip()
    if strict:
        word = text
    else:
        text = text.rstrip(_TRAILING_PUNCT + " ")
        parts = text.split(None, 1)
        word = parts[0].strip(_TRAILING_PUNCT + "(\"'*") if parts else ""
        word = word.upper()
    if word == "YES":
        return ParsedResponse("yes", "YES")
    if word == "NO":
        return ParsedResponse("no", "NO")
    return FORMAT_ERROR


def parse_bracketed(raw: str, strict: bool = False) -> ParsedResponse:
    """Content of the first ``[...]`` pair; without brackets, the trimmed text (lenient mode)."""
    m = _INNER_BRACKETS.search(raw)
    if m is not None:
        content = m.group(1).strip()
    elif strict:
        return FORMAT_ERROR
    else:
        content = raw.strip()
    if not content:
        return FORMAT_ERROR
    return ParsedResponse("answer_string", content)


def _strip_wrappers(text: str) -> str:
    """Peel enclosing ``[...]`` pairs and double quotes until none remain."""
    while True:
        text = text.strip()
        if len(text) >= 2 and text[0] == "[" and text[-1] == "]" and _enclosing(text):
            text = text[1:-1]
        elif len(text) >= 2 and text[0] in "\"“„" and text[-1] in "\"”“":
            text = text[1:-1]
        else:
            return text


def _enclosing(text: str) -> bool:
    depth = 0
    for i, ch in enumerate(text):
        if ch == "[":
            depth += 1
        elif ch == "]":
            depth -= 1
            if depth == 0 and i != len(text) - 1:
                return False
    return depth == 0


def parse_tagged_response(raw: str, strict: bool = False) -> ParsedResponse:
    text = raw.strip()
    if strict:
        if not (text.startswith("[") and text.endswith("]") and _enclosing(text)):
            return FORMAT_ERROR
        text = text[1:-1].strip()
    else:
        text = _strip_wrappers(text)
    if text.count("<ant>") != 1 or text.count("</ant>") != 1:
        return FORMAT_ERROR
    if text.index("<ant>") > text.index("</ant>"):
        return FORMAT_ERROR
    return ParsedResponse("tagged_sentence", text)


PARSERS = {
    "yes_no": parse_yesno,
    "question_answering": parse_bracketed,
    "tagging": parse_tagged_response,
}


def parse_response(strategy: str, raw: str, strict: bool = False) -> ParsedResponse:
    return PARSERS[strategy](raw, strict=strict)
