"""Prompt templates for the Yes/No, question-answering and tagging strategies."""

from __future__ import annotations

import logging
import random
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

from .corpus import Dataset, Passage, Span
from .scorer import score_span, tokenize

logger = logging.getLogger(__name__)

STRATEGIES = ("yes_no", "question_answering", "tagging")
SHOT_COUNTS = (0, 1, 3)

YES_NO_TEMPLATE = (
    'You are an anaphora resolution system. In the following sentence: "$sentence_ana$" '
    'does "$anaphora$" refer to "$antecedent_subtree$" ? Respond only YES or NO. '
    "Do not include anything else in your response."
)

_QA_INSTRUCTIONS = (
    "INSTRUCTIONS: You are an anaphora resolution system. You are given a sentence in which a word "
    "is marked with <ana></ana> tags. Your task is to identify which passage of the sentence the "
    "mention marked in <ana></ana> refers to. Answer in format [X] where X is the passage of the "
    "sentence that the marked mention refers to. Do not change the grammatical form of this passage. "
    "Do not include anything else in your answer."
)

_TAGGING_INSTRUCTIONS = (
    "INSTRUCTIONS: You are an anaphora resolution system. You are given a sentence in which a word "
    "is marked with <ana></ana> tags. Your task is to identify which passage of the sentence the "
    "mention marked in <ana></ana> refers to. Add <ant></ant> tags to the sentence around the part "
    "of the sentence that the mention marked in <ana></ana> refers to. Answer in format [X] where X "
    "is the original sentence with the <ant></ant> tags added. Do not include anything else in your answer."
)

_QUERY_BLOCK = (
    'SENTENCE: "$sentence_ana$"\n'
    "QUESTION: Which passage of the sentence does <ana>$anaphora$</ana> refer to? "
    "Answer in the format as instructed\n"
    "ANSWER: "
)

INSTRUCTIONS = {"question_answering": _QA_INSTRUCTIONS, "tagging": _TAGGING_INSTRUCTIONS}
ANSWER_FIELD = {"question_answering": "antecedent_subtree", "tagging": "sentence_ant_ana"}
BLOCK_SEPARATOR = "\n\n"


class PromptError(ValueError):
    pass


class CandidateMissing(PromptError):
    pass


class BadShotCount(PromptError):
    pass


class InsufficientExemplars(PromptError):
    pass


class NoDistractorAvailable(PromptError):
    pass


@dataclass(frozen=True, slots=True)
class PromptInstance:
    item_id: str
    passage_id: str
    strategy: str
    shots: int
    rendered: str
    exemplar_ids: tuple[str, ...] = ()
    candidate: str | None = None
    expected_label: str | None = None

    def to_json(self) -> dict:
        out = {
            "id": self.item_id,
            "passage_id": self.passage_id,
            "strategy": self.strategy,
            "shots": self.shots,
            "prompt": self.rendered,
            "exemplars": list(self.exemplar_ids),
        }
        if self.strategy == "yes_no":
            out["candidate"] = self.candidate
            out["expected_label"] = self.expected_label
        return out

    @classmethod
    def from_json(cls, data: Mapping) -> PromptInstance:
        return cls(
            item_id=data["id"],
            passage_id=data.get("passage_id", data["id"]),
            strategy=data["strategy"],
            shots=int(data["shots"]),
            rendered=data["prompt"],
            exemplar_ids=tuple(data.get("exemplars", ())),
            candidate=data.get("candidate"),
            expected_label=data.get("expected_label"),
        )


def substitute(template: str, values: Mapping[str, str]) -> str:
    out = template
    for key, value in values.items():
        out = out.replace(f"${key}$", value)
    return out


def template_values(passage: Passage) -> dict[str, str]:
    return {
        "sentence_ana": passage.sentence_ana,
        "anaphora": passage.anaphor_surface,
        "antecedent_subtree": passage.subtree_surface,
        "sentence_ant_ana": passage.sentence_ant_ana,
    }


def _answered_block(exemplar: Passage, strategy: str) -> str:
    values = template_values(exemplar)
    return substitute(_QUERY_BLOCK, values) + f"[{values[ANSWER_FIELD[strategy]]}]"


def render(
    strategy: str,
    passage: Passage,
    exemplars: Sequence[Passage] = (),
    candidate: str | None = None,
    *,
    item_id: str | None = None,
    expected_label: str | None = None,
) -> PromptInstance:
    if strategy not in STRATEGIES:
        raise PromptError(f"unknown strategy {strategy!r}")
    if len(exemplars) not in SHOT_COUNTS:
        raise BadShotCount(f"{len(exemplars)} exemplars; expected one of {SHOT_COUNTS}")
    if any(e.id == passage.id for e in exemplars):
        raise PromptError(f"passage {passage.id} used as its own exemplar")
    values = template_values(passage)
    if strategy == "yes_no":
        if candidate is None:
            raise CandidateMissing("yes_no prompts need a candidate antecedent")
        if exemplars:
            raise BadShotCount("yes_no prompts are zero-shot only")
        if expected_label is None:
            expected_label = "YES" if candidate == passage.subtree_surface else None
        text = substitute(YES_NO_TEMPLATE, {**values, "antecedent_subtree": candidate})
    else:
        blocks = [INSTRUCTIONS[strategy]]
        blocks += [_answered_block(e, strategy) for e in exemplars]
        blocks.append(substitute(_QUERY_BLOCK, values))
        text = BLOCK_SEPARATOR.join(blocks)
    return PromptInstance(
        item_id=item_id or passage.id,
        passage_id=passage.id,
        strategy=strategy,
        shots=len(exemplars),
        rendered=text,
        exemplar_ids=tuple(e.id for e in exemplars),
        candidate=candidate,
        expected_label=expected_label,
    )


def select_exemplars(
    dataset: Dataset, k: int, seed: int, exclude: Iterable[str] = ()
) -> list[Passage]:
    """Pick ``k`` training exemplars; the 1-shot pick is the first of the 3-shot picks.

    The three-shot set always mixes a grammatical and a textual passage.
    """
    if k not in SHOT_COUNTS:
        raise BadShotCount(f"k={k}; expected one of {SHOT_COUNTS}")
    if k == 0:
        return []
    banned = set(exclude)
    pool = [p for p in dataset.split("train") if p.id not in banned]
    rng = random.Random(seed)
    rng.shuffle(pool)
    gram = [p for p in pool if p.metadata.coref_type == "grammatical"]
    text = [p for p in pool if p.metadata.coref_type == "textual"]
    if not gram or not text or len(pool) < 3:
        raise InsufficientExemplars(
            f"need 3 training passages incl. both anaphora types; have {len(gram)} grammatical, {len(text)} textual"
        )
    first, second = (gram[0], text[0]) if rng.random() < 0.5 else (text[0], gram[0])
    third = next(p for p in pool if p.id not in (first.id, second.id))
    return [first, second, third][:k]


def _distractors(passage: Passage, parsed_spans: Sequence[Span] | None = None) -> list[Span]:
    tokens = tokenize(passage.text)
    if parsed_spans is not None:
        spans = list(parsed_spans)
    else:
        spans = [
            t for t in tokens.token_spans
            if t.of(passage.text)[0].isalpha() and not t.overlaps(passage.anaphor)
        ]
    return [
        s for s in spans
        if not score_span(s, passage.antecedent_root, passage.antecedent_subtree, tokens, len(passage.text)).correct
        and s.of(passage.text) != passage.subtree_surface
    ]


def make_yesno_pairs(
    dataset: Iterable[Passage],
    negative_ratio: float = 0.0,
    seed: int = 0,
    candidates: Mapping[str, Sequence[Span]] | None = None,
) -> list[tuple[Passage, str, str]]:
    """One Yes/No item per passage; a seeded ``negative_ratio`` share gets a distractor.

    Distractors are token (or, given ``candidates``, noun-phrase) spans that
    the scorer rejects. Passages without any distractor stay positive.
    """
    if not 0.0 <= negative_ratio <= 1.0:
        raise ValueError("negative_ratio must lie in [0, 1]")
    passages = list(dataset)
    rng = random.Random(seed)
    n_neg = round(negative_ratio * len(passages))
    negative = set(rng.sample(range(len(passages)), n_neg))
    items: list[tuple[Passage, str, str]] = []
    for i, p in enumerate(passages):
        if i in negative:
            pool = _distractors(p, candidates.get(p.id) if candidates else None)
            if pool:
                items.append((p, rng.choice(pool).of(p.text), "NO"))
                continue
            logger.info("no distractor for %s; kept positive", p.id)
        items.append((p, p.subtree_surface, "YES"))
    return items


def render_all(
    strategy: str,
    passages: Sequence[Passage],
    exemplars: Sequence[Passage] = (),
    *,
    negative_ratio: float = 0.0,
    seed: int = 0,
) -> list[PromptInstance]:
    if strategy == "yes_no":
        return [
            render("yes_no", p, (), cand, item_id=f"{p.id}#{label.lower()}", expected_label=label)
            for p, cand, label in make_yesno_pairs(passages, negative_ratio, seed)
        ]
    return [render(strategy, p, exemplars) for p in passages]
