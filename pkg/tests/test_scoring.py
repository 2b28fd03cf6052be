import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fhmm_decode.errors import ConfigurationError, FormatError, ValidationError
from fhmm_decode.scoring import (WerReport, corpus_score, edit_distance_alignment,
                                 oracle_permutation_wer, read_transcripts, write_transcripts)

words = st.lists(st.sampled_from(["one", "two", "three", "oh"]), max_size=8)


def levenshtein(ref, hyp):
    """Textbook quadratic DP for the total edit cost only."""
    d = np.zeros((len(ref) + 1, len(hyp) + 1), dtype=int)
    d[:, 0] = np.arange(len(ref) + 1)
    d[0, :] = np.arange(len(hyp) + 1)
    for i, j in itertools.product(range(1, len(ref) + 1), range(1, len(hyp) + 1)):
        d[i, j] = min(d[i - 1, j] + 1, d[i, j - 1] + 1,
                      d[i - 1, j - 1] + (ref[i - 1] != hyp[j - 1]))
    return int(d[-1, -1])


class TestEditDistance:
    def test_single_deletion(self):
        assert edit_distance_alignment(["one", "two", "three"], ["one", "three"]) == (0, 1, 0)

    def test_identity(self):
        assert edit_distance_alignment(["a", "b"], ["a", "b"]) == (0, 0, 0)

    def test_single_insertion(self):
        assert edit_distance_alignment(["two", "two"], ["two", "five", "two"]) == (0, 0, 1)

    def test_empty_sides(self):
        assert edit_distance_alignment([], ["x", "y"]) == (0, 0, 2)
        assert edit_distance_alignment(["x"], []) == (0, 1, 0)

    def test_cost_tie_prefers_substitutions(self):
        # 2 subs and (del a, match b, ins c) both cost 2
        assert edit_distance_alignment(["a", "b"], ["b", "c"]) == (2, 0, 0)

    @settings(max_examples=200, deadline=None)
    @given(words, words)
    def test_total_matches_reference_dp(self, ref, hyp):
        s, d, i = edit_distance_alignment(ref, hyp)
        assert s + d + i == levenshtein(ref, hyp)
        # counts must describe a real alignment
        assert len(ref) - d + i == len(hyp)


class TestOraclePermutation:
    def test_swapped_streams(self):
        a, b = ["one", "two"], ["three"]
        report = oracle_permutation_wer([a, b], [b, a])
        assert report.errors == 0 and report.permutation == (1, 0)

    def test_identity_streams(self):
        a, b = ["one"], ["two"]
        report = oracle_permutation_wer([a, b], [a, b])
        assert report.errors == 0 and report.permutation == (0, 1)

    def test_enumerated_minimum(self):
        refs = [["one"], ["two", "three"]]
        hyps = [["two"], ["one"]]
        # identity: one->two (1 sub) + two three -> one (1 sub, 1 del) = 3
        # swap: one->one (0) + two three -> two (1 del) = 1
        report = oracle_permutation_wer(refs, hyps)
        assert report.errors == 1
        assert report.permutation == (1, 0)
        assert report.wer == pytest.approx(1 / 3)

    def test_refuses_many_speakers(self):
        with pytest.raises(ConfigurationError):
            oracle_permutation_wer([["a"]] * 9, [["a"]] * 9)

    @settings(max_examples=60, deadline=None)
    @given(st.lists(words, min_size=1, max_size=3), st.randoms())
    def test_properties(self, refs, rnd):
        hyps = [list(r) for r in refs]
        for h in hyps:
            rnd.shuffle(h)
        report = oracle_permutation_wer(refs, hyps)
        identity = sum(sum(edit_distance_alignment(r, h)) for r, h in zip(refs, hyps))
        assert report.errors <= identity
        perm = list(range(len(refs)))
        rnd.shuffle(perm)
        permuted = oracle_permutation_wer([refs[p] for p in perm], [hyps[p] for p in perm])
        assert permuted.errors == report.errors


class TestCorpusScore:
    def test_all_correct(self):
        pairs = [([["a"], ["b"]], [["a"], ["b"]]), ([["c"], []], [[], ["c"]])]
        assert corpus_score(pairs).wer == 0.0

    def test_pools_counts(self):
        u1 = ([["a", "b", "c", "d"]], [["a", "b", "c", "x"]])
        u2 = ([["a", "b", "c", "d", "e", "f"]], [["a", "b", "c", "d"]])
        report = corpus_score([u1, u2])
        assert (report.errors, report.n_reference_words) == (3, 10)
        assert report.wer == pytest.approx(0.3)

    def test_single_utterance(self):
        refs, hyps = [["a", "b"], ["c"]], [["c"], ["a"]]
        one = oracle_permutation_wer(refs, hyps)
        pooled = corpus_score([(refs, hyps)])
        assert (pooled.errors, pooled.n_reference_words) == (one.errors, one.n_reference_words)

    def test_empty_reference(self):
        with pytest.raises(ValidationError):
            corpus_score([([[]], [["a"]])])

    def test_format(self):
        r = WerReport(1, 2, 3, 12)
        assert r.format() == "WER 50.00% [ 6 / 12, 3 ins, 2 del, 1 sub ]"


class TestTranscripts:
    def test_round_trip(self, tmp_path):
        data = {"u2": {0: ["one"], 1: []}, "u1": {0: ["two", "oh"], 1: ["nine"]}}
        write_transcripts(tmp_path / "t.txt", data)
        assert read_transcripts(tmp_path / "t.txt") == data
        first = (tmp_path / "t.txt").read_text().splitlines()[0]
        assert first == "u1\t0\ttwo oh"

    def test_bad_line(self, tmp_path):
        (tmp_path / "t.txt").write_text("u1 0 one\n")
        with pytest.raises(FormatError, match=":1:"):
            read_transcripts(tmp_path / "t.txt")
