"""Exact two-speaker MAP decoding over the product state space.

Used as the reference against which the loopy decoder is judged.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .errors import CapacityError, DecodeError, ValidationError
from .graph import DecodingGraph
from .posteriors import JointPosteriors
from .viterbi import StatePath

DEFAULT_MAX_STATES = 256
DEFAULT_BYTE_BUDGET = 2 * 1024 ** 3


@dataclass(frozen=True, eq=False)
class JointPath:
    path_a: StatePath
    path_b: StatePath
    joint_score: float

    @property
    def pair(self):
        return self.path_a.states, self.path_b.states


def _joint_array(graph, joint):
    data = joint.data if isinstance(joint, JointPosteriors) else np.asarray(joint, dtype=np.float64)
    if data.ndim != 3 or data.shape[1] != graph.n_pdfs or data.shape[2] != graph.n_pdfs:
        raise ValidationError(
            f"joint tensor shape {data.shape} does not match graph with {graph.n_pdfs} pdfs")
    return np.ascontiguousarray(data)


def joint_score(graph: DecodingGraph, joint, states_a, states_b) -> float:
    """Log score of a path pair: joint emissions plus both chains' priors."""
    data = joint.data if isinstance(joint, JointPosteriors) else np.asarray(joint)
    states_a = np.asarray(states_a)
    states_b = np.asarray(states_b)
    pa = graph.state_to_pdf[states_a]
    pb = graph.state_to_pdf[states_b]
    emis = data[np.arange(len(states_a)), pa, pb].sum()
    return float(emis + graph.path_log_prior(states_a) + graph.path_log_prior(states_b))


def backpointer_bytes(n_frames: int, n_states: int) -> int:
    return 2 * 2 * n_frames * n_states * n_states


def exact_joint_decode(graph: DecodingGraph, joint, max_states: int = DEFAULT_MAX_STATES,
                       byte_budget: int = DEFAULT_BYTE_BUDGET) -> JointPath:
    """Globally optimal state-pair sequence for two speakers.

    Ties are broken toward the lexicographically lowest ``(a, b)`` pair.
    The per-speaker ``StatePath.score`` fields hold each chain's prior
    (initial + transitions) only; emissions are not separable.
    """
    data = _joint_array(graph, joint)
    n, t = graph.n_states, data.shape[0]
    if n > max_states:
        raise CapacityError(f"{n} graph states exceed the exact decoder limit of {max_states}; "
                            "use the joint-lbp decoder")
    need = backpointer_bytes(t, n)
    if need > byte_budget:
        raise CapacityError(f"exact decoding needs {need} bytes of backpointers, budget is "
                            f"{byte_budget}; use the joint-lbp decoder")
    ptr, src, logp = graph.predecessors
    delta, bp_a, bp_b, dead = _kernels.exact_joint_viterbi(
        data, graph.state_to_pdf, graph.initial, ptr, src, logp)
    if dead >= 0:
        raise DecodeError(f"no state pair survives at frame {dead}", frame=dead)
    path_a, path_b, best = _kernels.exact_joint_backtrack(delta, bp_a, bp_b)
    return JointPath(StatePath(path_a, graph.path_log_prior(path_a)),
                     StatePath(path_b, graph.path_log_prior(path_b)), float(best))
