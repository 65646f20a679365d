"""Independent reference implementations used to check the package."""

import random

from czanaphora.corpus import AnaphoraMetadata, Passage, Span


def char_tokens(text):
    """Tokenize by walking characters: runs of letters/digits/underscore, or one other non-space char."""
    out = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch.isalnum() or ch == "_":
            j = i
            while j < len(text) and (text[j].isalnum() or text[j] == "_"):
                j += 1
            out.append((i, j))
            i = j
        else:
            out.append((i, i + 1))
            i += 1
    return out


def touched(tokens, start, end):
    return {k for k, (a, b) in enumerate(tokens) if a < end and start < b}


def literal_verdict(tokens, first, last, root, subtree):
    """Criteria applied literally to the token range ``first..last`` (inclusive).

    Returns None when correct, else the name of the first failed criterion.
    """
    predicted = set(range(first, last + 1))
    if not touched(tokens, *root) <= predicted:
        return "root_missing"
    if not predicted <= touched(tokens, *subtree):
        return "containment_violated"
    return None


WORDS = [
    "strom", "šťastný", "les", "dům", "Petr", "Jana", "viděl", "řekla", "město", "kniha",
    "starý", "nový", "učitel", "žák", "přišel", "ale", "protože", "a", "v", "na",
]
PUNCT = [",", ".", "!", "?", ";", ":"]


def synthetic_passages(n, seed=7, max_tokens=12):
    """Short random passages with a gold subtree, root and anaphor on token boundaries."""
    rng = random.Random(seed)
    out = []
    for k in range(n):
        count = rng.randint(3, max_tokens)
        toks = [rng.choice(PUNCT) if rng.random() < 0.2 else rng.choice(WORDS) for _ in range(count)]
        text, spans = "", []
        for t in toks:
            if text and not (t in PUNCT and rng.random() < 0.7):
                text += " " * rng.randint(1, 2)
            spans.append((len(text), len(text) + len(t)))
            text += t
        a = rng.randrange(count)
        b = rng.randrange(a, count)
        r = rng.randint(a, b)
        outside = [i for i in range(count) if i < a or i > b]
        ana = rng.choice(outside) if outside else r
        in_ant = a <= ana <= b
        meta = AnaphoraMetadata(
            coref_type=rng.choice(["grammatical", "textual"]),
            pronoun_category="n.pron.def.pers",
            distance=ana - r,
            anaphor_in_antecedent=in_ant,
            subcorpus="PDT 3.5",
            split="test",
        )
        out.append(Passage(
            id=f"syn{k}",
            text=text,
            anaphor=Span(*spans[ana]),
            antecedent_subtree=Span(spans[a][0], spans[b][1]),
            antecedent_root=Span(*spans[r]),
            metadata=meta,
        ))
    return out
