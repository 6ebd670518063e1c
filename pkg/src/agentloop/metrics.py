"""Evaluation metrics: ROUGE-N, ROUGE-L, entity recall, multiple-choice accuracy.

Tokenization for the ROUGE family is case-folded whitespace splitting with
punctuation stripped from token edges. Scores computed here are comparable
within this repo only; published numbers use unknown tokenizers.
"""

import re
import string
from collections import Counter
from dataclasses import dataclass


@dataclass(frozen=True)
class RougeScore:
    precision: float
    recall: float
    f1: float


ZERO_SCORE = RougeScore(0.0, 0.0, 0.0)

_CHOICE_RE = re.compile(r"\b([A-E])\b")
_ANSWER_FORM_RE = re.compile(r"answer\s*:?\s*([A-Ea-e])\b", re.IGNORECASE)


def tokenize(text: str) -> list[str]:
    tokens = []
    for raw in text.casefold().split():
        token = raw.strip(string.punctuation)
        if token:
            tokens.append(token)
    return tokens


def _f1(precision: float, recall: float) -> float:
    if precision + recall == 0.0:
        return 0.0
    return 2.0 * precision * recall / (precision + recall)


def _ngrams(tokens: list[str], n: int) -> list[tuple[str, ...]]:
    return [tuple(tokens[i : i + n]) for i in range(len(tokens) - n + 1)]


def rouge_n(candidate: str, reference: str, n: int = 1) -> RougeScore:
    """Clipped n-gram overlap: each reference n-gram is matched at most
    count-many times."""
    if n < 1:
        raise ValueError("n must be >= 1")
    cand = _ngrams(tokenize(candidate), n)
    ref = _ngrams(tokenize(reference), n)
    if not cand or not ref:
        return ZERO_SCORE
    overlap = sum((Counter(cand) & Counter(ref)).values())
    precision = overlap / len(cand)
    recall = overlap / len(ref)
    return RougeScore(precision, recall, _f1(precision, recall))


def lcs_length(a: list, b: list) -> int:
    """Classic dynamic program over the two token sequences."""
    if not a or not b:
        return 0
    previous = [0] * (len(b) + 1)
    for x in a:
        current = [0]
        for j, y in enumerate(b, start=1):
            if x == y:
                current.append(previous[j - 1] + 1)
            else:
                current.append(max(previous[j], current[j - 1]))
        previous = current
    return previous[len(b)]


def rouge_l(candidate: str, reference: str) -> RougeScore:
    """Longest-common-subsequence precision/recall over tokens."""
    cand = tokenize(candidate)
    ref = tokenize(reference)
    if not cand or not ref:
        return ZERO_SCORE
    lcs = lcs_length(cand, ref)
    precision = lcs / len(cand)
    recall = lcs / len(ref)
    return RougeScore(precision, recall, _f1(precision, recall))


def entity_recall(candidate: str, gold_entities: list[str]) -> float:
    """Fraction of gold entity surface forms present in the candidate.

    Case-insensitive substring match after whitespace normalization.
    """
    if not gold_entities:
        raise ValueError("gold_entities must be nonempty")
    haystack = " ".join(candidate.split()).casefold()
    hits = sum(
        1 for entity in gold_entities if " ".join(entity.split()).casefold() in haystack
    )
    return hits / len(gold_entities)


def extract_choice(prediction: str) -> str | None:
    """Pull the chosen letter out of a free-form answer.

    Pattern: the last standalone capital A-E anywhere; failing that, an
    explicit "Answer: X" form in any case. None when neither matches.
    """
    matches = _CHOICE_RE.findall(prediction)
    if matches:
        return matches[-1]
    form = _ANSWER_FORM_RE.search(prediction)
    if form:
        return form.group(1).upper()
    return None


def mc_accuracy(records) -> float:
    """Exact-match fraction over records with single-letter gold answers.

    A record whose prediction yields no extractable letter counts as wrong.
    """
    records = list(records)
    if not records:
        raise ValueError("no records to score")
    correct = sum(
        1 for r in records if extract_choice(r.prediction) == r.gold_answer
    )
    return correct / len(records)
