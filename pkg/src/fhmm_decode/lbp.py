"""Joint two-speaker decoding by max-product loopy belief propagation.

Each speaker's chain carries three message families, all T x S in the log
domain:

* ``acoustic[t]``  -- the joint posterior maximized over the other speaker,
  weighted by that speaker's forward and backward messages;
* ``forward[t]``   -- Viterbi-style max over predecessors, including the
  acoustic message of frame ``t - 1``;
* ``backward[t]``  -- the mirror image over successors.

A sweep refreshes all three families for speaker a (acoustic, then
forward left-to-right, then backward right-to-left) and then for speaker b,
with the other speaker's messages held fixed.  After convergence each
speaker's path is backtracked from its own forward argmaxes.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import logsumexp

from . import _kernels
from .errors import NumericError, ValidationError
from .graph import DecodingGraph
from .joint_exact import JointPath, _joint_array, joint_score
from .posteriors import SeparatePosteriors
from .viterbi import StatePath

SPEAKERS = ("a", "b")


@dataclass(frozen=True)
class LbpConfig:
    max_sweeps: int = 10
    convergence_tol: float = 1e-8
    damping: float = 0.0
    schedule: tuple[str, ...] = ("a", "b")

    def __post_init__(self):
        if self.max_sweeps < 1:
            raise ValidationError("max_sweeps must be positive")
        if not self.convergence_tol >= 0.0:
            raise ValidationError("convergence_tol must be non-negative")
        if not 0.0 <= self.damping < 1.0:
            raise ValidationError("damping must lie in [0, 1)")
        if sorted(self.schedule) != ["a", "b"]:
            raise ValidationError(f"schedule must order both speakers, got {self.schedule}")


@dataclass
class LbpDiagnostics:
    sweeps: int
    converged: bool
    delta: float
    joint_score: float

    def to_dict(self):
        return asdict(self)


@dataclass
class MessageSet:
    """Working state of the decoder for both speakers."""

    acoustic: dict[str, np.ndarray]
    forward: dict[str, np.ndarray]
    backward: dict[str, np.ndarray]
    forward_arg: dict[str, np.ndarray]
    backward_arg: dict[str, np.ndarray]
    history: list[float] = field(default_factory=list)

    @classmethod
    def uniform(cls, n_frames, n_states):
        def zeros():
            return {k: np.zeros((n_frames, n_states)) for k in SPEAKERS}

        def ints():
            return {k: np.zeros((n_frames, n_states), dtype=np.int64) for k in SPEAKERS}

        return cls(zeros(), zeros(), zeros(), ints(), ints())

    def snapshot(self):
        # every update stores a fresh array, so references are enough
        return [m[k] for m in (self.acoustic, self.forward, self.backward) for k in SPEAKERS]


def _damp(new, old, damping):
    if damping == 0.0:
        return new
    with np.errstate(invalid="ignore"):
        mixed = (1.0 - damping) * new + damping * old
    mixed[(new == -np.inf) | (old == -np.inf)] = -np.inf
    top = mixed.max(axis=1, keepdims=True)
    return mixed - top


class _Decoder:
    def __init__(self, graph, data, config):
        self.graph = graph
        self.data = data
        # each speaker's m1 reads its own pdf along the middle axis
        self.oriented = {"a": data, "b": np.ascontiguousarray(data.transpose(0, 2, 1))}
        self.config = config
        self.pdf = np.ascontiguousarray(graph.state_to_pdf)
        self.pred = graph.predecessors
        self.succ = graph.successors
        self.msgs = MessageSet.uniform(data.shape[0], graph.n_states)

    def _check(self, where, sweep, what):
        if where >= 0:
            raise NumericError(f"sweep {sweep}: {what} message of frame {where} is all -inf")

    def update_acoustic(self, k, sweep):
        other = "b" if k == "a" else "a"
        m = self.msgs
        fixed = m.forward[other] + m.backward[other]
        out = np.empty_like(m.acoustic[k])
        dead = _kernels.lbp_acoustic(self.oriented[k], fixed, self.pdf, self.pdf,
                                     self.graph.n_pdfs, out)
        self._check(dead, sweep, f"acoustic[{k}]")
        m.acoustic[k] = _damp(out, m.acoustic[k], self.config.damping)

    def update_chain(self, k, sweep):
        m = self.msgs
        fw = np.empty_like(m.forward[k])
        dead = _kernels.lbp_forward(m.acoustic[k], self.graph.initial, *self.pred,
                                    fw, m.forward_arg[k])
        self._check(dead, sweep, f"forward[{k}]")
        m.forward[k] = _damp(fw, m.forward[k], self.config.damping)
        bw = np.empty_like(m.backward[k])
        dead = _kernels.lbp_backward(m.acoustic[k], *self.succ, bw, m.backward_arg[k])
        self._check(dead, sweep, f"backward[{k}]")
        m.backward[k] = _damp(bw, m.backward[k], self.config.damping)

    def run(self):
        for k in SPEAKERS:
            self.update_acoustic(k, 0)
        delta = np.inf
        sweeps = 0
        converged = False
        for sweep in range(1, self.config.max_sweeps + 1):
            before = self.msgs.snapshot()
            for k in self.config.schedule:
                self.update_acoustic(k, sweep)
                self.update_chain(k, sweep)
            changes = [_kernels.max_abs_change(o, n)
                       for o, n in zip(before, self.msgs.snapshot())]
            if any(np.isnan(c) for c in changes):
                raise NumericError(f"sweep {sweep}: non-finite message values")
            delta = max(changes)
            self.msgs.history.append(delta)
            sweeps = sweep
            if delta < self.config.convergence_tol:
                converged = True
                break
        return sweeps, converged, float(delta)

    def backtrack(self, k):
        m = self.msgs
        final = m.forward[k][-1] + m.acoustic[k][-1]
        last, _ = _kernels._argmax_first(final)
        return _kernels.backtrack(m.forward_arg[k], last)


def run_lbp(graph: DecodingGraph, joint, config: LbpConfig | None = None):
    """Run message passing and return the decoder holding converged messages."""
    config = config or LbpConfig()
    dec = _Decoder(graph, _joint_array(graph, joint), config)
    return dec, dec.run()


def lbp_joint_decode(graph: DecodingGraph, joint, config: LbpConfig | None = None):
    """Approximate joint MAP decoding.

    Returns ``(JointPath, LbpDiagnostics)``.  The diagnostics' joint score
    is recomputed with the same scorer as the exact decoder, so the two can
    be compared directly.
    """
    dec, (sweeps, converged, delta) = run_lbp(graph, joint, config)
    states_a = dec.backtrack("a")
    states_b = dec.backtrack("b")
    score = joint_score(graph, dec.data, states_a, states_b)
    result = JointPath(StatePath(states_a, graph.path_log_prior(states_a)),
                       StatePath(states_b, graph.path_log_prior(states_b)), score)
    return result, LbpDiagnostics(sweeps, converged, delta, score)


def lbp_per_speaker_scores(graph: DecodingGraph, joint, config: LbpConfig | None = None):
    """Converged acoustic messages per speaker, as normalized T x V log scores."""
    dec, _ = run_lbp(graph, joint, config)
    out = []
    for k in SPEAKERS:
        other = "b" if k == "a" else "a"
        fixed = dec.msgs.forward[other] + dec.msgs.backward[other]
        scores = _kernels.lbp_pdf_acoustic(dec.oriented[k], fixed, dec.pdf, graph.n_pdfs)
        out.append(scores - logsumexp(scores, axis=1, keepdims=True))
    return SeparatePosteriors(np.stack(out))
