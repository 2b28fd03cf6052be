import numpy as np
import pytest

from fhmm_decode.errors import NumericError, ValidationError
from fhmm_decode.graph import DecodingGraph
from fhmm_decode.joint_exact import exact_joint_decode
from fhmm_decode.lbp import LbpConfig, lbp_joint_decode, lbp_per_speaker_scores, run_lbp
from fhmm_decode.viterbi import viterbi_decode

from helpers import correlated_joint, factorized_joint, random_graph, random_scores


def _toy():
    """Two-state chain and a 3-frame joint table small enough to work by hand."""
    g = DecodingGraph.from_dense(np.log([[0.8, 0.2], [0.3, 0.7]]), np.log([0.6, 0.4]))
    joint = np.log(np.array([
        [[0.5, 0.1], [0.3, 0.1]],
        [[0.1, 0.4], [0.2, 0.3]],
        [[0.2, 0.2], [0.1, 0.5]],
    ]))
    return g, joint


class TestHandMessages:
    """Messages after one sweep, worked out by hand in the probability domain.

    Speaker a sees uniform b messages, so ac_a[t] is the row max of each
    frame, max-normalized.  Its forward/backward vectors are then

        fw_a = [1, 2/3], [1, 0.35], [1, 0.25]
        bw_a = [0.365714.../0.525, 1], [0.32/0.7, 1], [1, 1]

    and ac_b[t, j] = max_i joint[t, i, j] * fw_a[t, i] * bw_a[t, i].
    """

    def test_speaker_a_acoustic(self):
        g, joint = _toy()
        dec, _ = run_lbp(g, joint, LbpConfig(max_sweeps=1, convergence_tol=0.0))
        np.testing.assert_allclose(np.exp(dec.msgs.acoustic["a"]),
                                   [[1, 0.6], [1, 0.75], [0.4, 1]], atol=1e-12)

    def test_speaker_a_chain(self):
        g, joint = _toy()
        dec, _ = run_lbp(g, joint, LbpConfig(max_sweeps=1, convergence_tol=0.0))
        np.testing.assert_allclose(np.exp(dec.msgs.forward["a"]),
                                   [[1, 2 / 3], [1, 0.35], [1, 0.25]], atol=1e-12)
        np.testing.assert_allclose(np.exp(dec.msgs.backward["a"]),
                                   [[0.8 * 0.32 / 0.7 / 0.525, 1], [0.32 / 0.7, 1], [1, 1]],
                                   atol=1e-12)

    def test_speaker_b_acoustic(self):
        g, joint = _toy()
        dec, _ = run_lbp(g, joint, LbpConfig(max_sweeps=1, convergence_tol=0.0))
        expect = [[1, 0.2], [0.07 / (0.4 * 0.32 / 0.7), 1], [1, 1]]
        np.testing.assert_allclose(np.exp(dec.msgs.acoustic["b"]), expect, atol=1e-12)

    def test_per_speaker_scores_b(self):
        g, joint = _toy()
        scores = lbp_per_speaker_scores(g, joint, LbpConfig(max_sweeps=1, convergence_tol=0.0))
        raw = np.array([[1, 0.2], [0.07 / (0.4 * 0.32 / 0.7), 1], [1, 1]])
        np.testing.assert_allclose(np.exp(scores.speaker(1)),
                                   raw / raw.sum(axis=1, keepdims=True), atol=1e-12)


class TestLbpDecode:
    def test_factorized_matches_separate_viterbi(self):
        rng = np.random.default_rng(0)
        for _ in range(30):
            V, T = int(rng.integers(1, 7)), int(rng.integers(1, 30))
            g = random_graph(rng, V)
            sa, sb = random_scores(rng, T, V), random_scores(rng, T, V)
            res, diag = lbp_joint_decode(g, factorized_joint(sa, sb))
            assert diag.converged and diag.sweeps <= 2
            np.testing.assert_array_equal(res.path_a.states, viterbi_decode(g, sa).states)
            np.testing.assert_array_equal(res.path_b.states, viterbi_decode(g, sb).states)

    def test_single_frame_is_exact(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            g = random_graph(rng, int(rng.integers(1, 6)))
            j = correlated_joint(rng, g, 1)
            res, _ = lbp_joint_decode(g, j)
            ex = exact_joint_decode(g, j)
            assert (res.path_a.states[0], res.path_b.states[0]) == \
                (ex.path_a.states[0], ex.path_b.states[0])

    def test_never_beats_exact(self):
        rng = np.random.default_rng(2)
        for _ in range(100):
            g = random_graph(rng, int(rng.integers(2, 6)))
            j = correlated_joint(rng, g, int(rng.integers(1, 16)))
            _, diag = lbp_joint_decode(g, j)
            assert diag.joint_score <= exact_joint_decode(g, j).joint_score + 1e-9

    def test_per_frame_constant_invariance(self):
        rng = np.random.default_rng(3)
        g = random_graph(rng, 4)
        j = correlated_joint(rng, g, 12)
        shifted = j + rng.normal(size=(12, 1, 1)) * 5
        a, _ = lbp_joint_decode(g, j)
        b, _ = lbp_joint_decode(g, shifted)
        np.testing.assert_array_equal(a.path_a.states, b.path_a.states)
        np.testing.assert_array_equal(a.path_b.states, b.path_b.states)

    def test_deterministic(self):
        rng = np.random.default_rng(4)
        g = random_graph(rng, 5)
        j = correlated_joint(rng, g, 15)
        a, da = lbp_joint_decode(g, j)
        b, db = lbp_joint_decode(g, j)
        assert a.path_a == b.path_a and a.path_b == b.path_b
        assert da == db

    def test_messages_stay_non_positive(self):
        rng = np.random.default_rng(5)
        g = random_graph(rng, 5)
        j = correlated_joint(rng, g, 20)
        dec, _ = run_lbp(g, j, LbpConfig(max_sweeps=25, convergence_tol=0.0))
        for family in (dec.msgs.acoustic, dec.msgs.forward, dec.msgs.backward):
            for k in "ab":
                assert np.all(family[k] <= 0.0)
                np.testing.assert_array_equal(family[k].max(axis=1), 0.0)

    def test_diagnostics(self):
        rng = np.random.default_rng(6)
        g = random_graph(rng, 3)
        j = correlated_joint(rng, g, 6)
        res, diag = lbp_joint_decode(g, j, LbpConfig(max_sweeps=3))
        record = diag.to_dict()
        assert set(record) == {"sweeps", "converged", "delta", "joint_score"}
        assert 1 <= record["sweeps"] <= 3
        assert record["joint_score"] == res.joint_score

    def test_damping_and_schedule_run(self):
        rng = np.random.default_rng(7)
        g = random_graph(rng, 4)
        j = correlated_joint(rng, g, 10)
        for cfg in (LbpConfig(damping=0.5, max_sweeps=40), LbpConfig(schedule=("b", "a"))):
            _, diag = lbp_joint_decode(g, j, cfg)
            assert diag.joint_score <= exact_joint_decode(g, j).joint_score + 1e-9

    def test_dead_frame_is_numeric_error(self):
        g = random_graph(np.random.default_rng(8), 2)
        j = np.full((3, 2, 2), np.log(0.25))
        j[1] = -np.inf
        with pytest.raises(NumericError, match="frame 1"):
            lbp_joint_decode(g, j)


class TestPerSpeakerScores:
    def test_factorized_argmax_equal(self):
        rng = np.random.default_rng(0)
        g = random_graph(rng, 5)
        sa, sb = random_scores(rng, 9, 5), random_scores(rng, 9, 5)
        out = lbp_per_speaker_scores(g, factorized_joint(sa, sb))
        np.testing.assert_array_equal(out.speaker(0).argmax(1), sa.argmax(1))
        np.testing.assert_array_equal(out.speaker(1).argmax(1), sb.argmax(1))

    def test_uniform_joint(self):
        V = 4
        g = DecodingGraph.from_dense(np.full((V, V), -np.log(V)), np.full(V, -np.log(V)))
        out = lbp_per_speaker_scores(g, np.full((5, V, V), -2 * np.log(V)))
        np.testing.assert_allclose(out.data, -np.log(V), atol=1e-12)

    def test_drop_in_for_viterbi(self):
        rng = np.random.default_rng(1)
        g = random_graph(rng, 4)
        j = correlated_joint(rng, g, 10)
        out = lbp_per_speaker_scores(g, j)
        assert len(viterbi_decode(g, out.speaker(0))) == 10


class TestConfig:
    @pytest.mark.parametrize("kwargs", [{"max_sweeps": 0}, {"damping": 1.0},
                                        {"convergence_tol": -1.0}, {"schedule": ("a", "a")}])
    def test_rejects(self, kwargs):
        with pytest.raises(ValidationError):
            LbpConfig(**kwargs)
