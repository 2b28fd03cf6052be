"""Single-speaker Viterbi decoding over a :class:`DecodingGraph`."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import DecodeError, ValidationError
from .graph import DecodingGraph


@dataclass(frozen=True, eq=False)
class StatePath:
    states: np.ndarray
    score: float

    def __len__(self):
        return len(self.states)

    def __eq__(self, other):
        return (isinstance(other, StatePath) and np.array_equal(self.states, other.states)
                and self.score == other.score)


@dataclass
class WordHypothesis:
    words: list[str]
    speaker_slot: int = 0


def _scores_array(graph, scores):
    scores = np.asarray(scores, dtype=np.float64)
    if scores.ndim != 2:
        raise ValidationError(f"scores must be a T x V matrix, got shape {scores.shape}")
    if scores.shape[0] < 1:
        raise ValidationError("at least one frame is required")
    if scores.shape[1] != graph.n_pdfs:
        raise ValidationError(f"scores have V={scores.shape[1]}, graph has {graph.n_pdfs} pdfs")
    return scores


def state_emissions(graph: DecodingGraph, scores) -> np.ndarray:
    """Expand a T x n_pdfs score matrix to T x n_states."""
    return np.ascontiguousarray(scores[:, graph.state_to_pdf])


def viterbi_forward(graph: DecodingGraph, scores, beam: float | None = None):
    """Run the forward recursion and return ``(delta, backpointers)``.

    ``delta[t, s]`` includes the emission of frame ``t``.
    """
    scores = _scores_array(graph, scores)
    ptr, src, logp = graph.predecessors
    delta, bp, dead = _kernels.viterbi_forward(
        state_emissions(graph, scores), graph.initial, ptr, src, logp,
        0.0 if beam is None else float(beam))
    if dead >= 0:
        raise DecodeError(f"no state survives at frame {dead}", frame=dead)
    return delta, bp


def viterbi_decode(graph: DecodingGraph, scores, beam: float | None = None) -> StatePath:
    """MAP state sequence for one speaker.

    Parameters
    ----------
    graph : DecodingGraph
    scores : np.ndarray [shape=(T, n_pdfs)]
        Log pseudo-likelihoods, one row per frame.
    beam : float, optional
        Log-domain pruning width.  Off by default, which makes the decoder
        exact.

    Returns
    -------
    StatePath
        Path maximizing initial + transitions + per-frame scores.  Ties
        go to the lowest state index at every max.
    """
    delta, bp = viterbi_forward(graph, scores, beam)
    last, best = _kernels._argmax_first(delta[-1])
    return StatePath(_kernels.backtrack(bp, last), float(best))


def path_score(graph: DecodingGraph, scores, states) -> float:
    scores = np.asarray(scores)
    states = np.asarray(states)
    emis = scores[np.arange(len(states)), graph.state_to_pdf[states]].sum()
    return float(graph.path_log_prior(states) + emis)


def states_to_words(path, graph: DecodingGraph, speaker_slot: int = 0) -> WordHypothesis:
    """Read the word sequence off a state path.

    A word is emitted when the path leaves that word's final state, or
    when the utterance ends inside it.  Silence emits nothing.
    """
    states = path.states if isinstance(path, StatePath) else np.asarray(path)
    finals = graph.state_to_word
    words = []
    for t, s in enumerate(states):
        s = int(s)
        if s in finals and (t == len(states) - 1 or int(states[t + 1]) != s):
            words.append(finals[s])
    return WordHypothesis(words, speaker_slot)
