import itertools
import random
from dataclasses import dataclass

import pytest

from agentloop.metrics import (
    RougeScore,
    entity_recall,
    extract_choice,
    lcs_length,
    mc_accuracy,
    rouge_l,
    rouge_n,
    tokenize,
)


class TestTokenize:
    def test_case_folded_and_punctuation_stripped(self):
        assert tokenize("The CAT, sat!") == ["the", "cat", "sat"]

    def test_inner_apostrophe_kept(self):
        assert tokenize("don't stop") == ["don't", "stop"]

    def test_pure_punctuation_dropped(self):
        assert tokenize("hello -- world") == ["hello", "world"]


class TestRougeN:
    def test_identical_texts(self):
        score = rouge_n("same exact words", "same exact words", 1)
        assert score == RougeScore(1.0, 1.0, 1.0)

    def test_cat_sat_vs_cat_ran(self):
        score = rouge_n("the cat sat", "the cat ran", 1)
        assert score.precision == pytest.approx(2 / 3, abs=1e-9)
        assert score.recall == pytest.approx(2 / 3, abs=1e-9)
        assert score.f1 == pytest.approx(2 / 3, abs=1e-9)

    def test_empty_candidate_zeroes(self):
        assert rouge_n("", "reference text", 1) == RougeScore(0.0, 0.0, 0.0)

    def test_empty_reference_zeroes(self):
        assert rouge_n("candidate", "", 1) == RougeScore(0.0, 0.0, 0.0)

    def test_bigram_overlap_clipped(self):
        # candidate repeats "a b" twice; reference has it once -> clipped to 1
        score = rouge_n("a b a b", "a b c", 2)
        assert score.precision == pytest.approx(1 / 3)
        assert score.recall == pytest.approx(1 / 2)

    def test_n_must_be_positive(self):
        with pytest.raises(ValueError):
            rouge_n("a", "b", 0)

    def test_scores_bounded(self):
        rng = random.Random(5)
        vocab = ["a", "b", "c", "d"]
        for _ in range(100):
            cand = " ".join(rng.choices(vocab, k=rng.randint(0, 8)))
            ref = " ".join(rng.choices(vocab, k=rng.randint(0, 8)))
            for n in (1, 2):
                s = rouge_n(cand, ref, n)
                assert 0.0 <= s.precision <= 1.0
                assert 0.0 <= s.recall <= 1.0
                assert 0.0 <= s.f1 <= 1.0
                if s.precision == 0.0 or s.recall == 0.0:
                    assert s.f1 == 0.0


def brute_force_lcs(a: list, b: list) -> int:
    """Oracle: longest subsequence of a that is also a subsequence of b."""
    best = 0
    for size in range(len(a), 0, -1):
        for combo in itertools.combinations(a, size):
            it = iter(b)
            if all(token in it for token in combo):
                return size
    return best


class TestRougeL:
    def test_hand_example(self):
        score = rouge_l("a b c d", "a c d")
        assert score.precision == pytest.approx(3 / 4, abs=1e-9)
        assert score.recall == pytest.approx(1.0, abs=1e-9)
        assert score.f1 == pytest.approx(6 / 7, abs=1e-9)

    def test_identical_texts(self):
        assert rouge_l("x y z", "x y z") == RougeScore(1.0, 1.0, 1.0)

    def test_disjoint_vocabularies(self):
        assert rouge_l("a b c", "x y z") == RougeScore(0.0, 0.0, 0.0)

    def test_matches_brute_force_on_short_sequences(self):
        rng = random.Random(11)
        vocab = ["p", "q", "r", "s"]
        for _ in range(300):
            a = rng.choices(vocab, k=rng.randint(0, 10))
            b = rng.choices(vocab, k=rng.randint(0, 10))
            assert lcs_length(a, b) == brute_force_lcs(a, b), (a, b)


class TestEntityRecall:
    def test_half_present(self):
        assert entity_recall("Paris and Rome", ["Paris", "Rome", "Oslo", "Cairo"]) == 0.5

    def test_all_present(self):
        assert entity_recall("Paris, Rome.", ["Paris", "Rome"]) == 1.0

    def test_whitespace_normalization(self):
        assert entity_recall("visited new  york today", ["New York"]) == 1.0

    def test_case_insensitive(self):
        assert entity_recall("PARIS", ["paris"]) == 1.0

    def test_empty_gold_rejected(self):
        with pytest.raises(ValueError):
            entity_recall("text", [])


@dataclass
class FakeRecord:
    prediction: str
    gold_answer: str


class TestMultipleChoice:
    def test_three_of_four(self):
        records = [
            FakeRecord("The answer is C.", "C"),
            FakeRecord("I pick B", "B"),
            FakeRecord("Clearly D", "D"),
            FakeRecord("Clearly D", "A"),
        ]
        assert mc_accuracy(records) == 0.75

    def test_answer_form_extraction(self):
        assert extract_choice("the answer is C.") == "C"
        assert extract_choice("answer: b") == "B"
        assert extract_choice("Answer:E") == "E"

    def test_last_standalone_letter_wins(self):
        assert extract_choice("Not A. Definitely B") == "B"

    def test_unparseable_is_none_and_counts_wrong(self):
        assert extract_choice("no letters here") is None
        records = [FakeRecord("no letters here", "A")]
        assert mc_accuracy(records) == 0.0

    def test_empty_records_rejected(self):
        with pytest.raises(ValueError):
            mc_accuracy([])
