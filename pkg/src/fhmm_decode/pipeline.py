"""Decode-mode dispatch shared by the CLI and the experiments."""

from __future__ import annotations

from .errors import ConfigurationError
from .joint_exact import exact_joint_decode
from .lbp import LbpConfig, lbp_joint_decode
from .posteriors import JointPosteriors, SeparatePosteriors, marginalize_both
from .viterbi import states_to_words, viterbi_decode

MODES = ("separate", "marginal", "joint-exact", "joint-lbp")


def kind_of(post) -> str:
    return "joint" if isinstance(post, JointPosteriors) else "separate"


def check_mode(mode: str, post) -> None:
    if mode not in MODES:
        raise ConfigurationError(f"unknown decode mode {mode!r}; choose from {', '.join(MODES)}")
    need = "separate" if mode == "separate" else "joint"
    if kind_of(post) != need:
        raise ConfigurationError(
            f"mode/kind mismatch: mode {mode!r} needs {need} posteriors, got {kind_of(post)}")


def decode(graph, post, mode: str, lbp_config: LbpConfig | None = None, beam=None):
    """Return ``(word_lists, paths, diagnostics)`` for one utterance.

    ``diagnostics`` is only set for ``joint-lbp``.
    """
    check_mode(mode, post)
    diag = None
    if mode in ("separate", "marginal"):
        streams = post if isinstance(post, SeparatePosteriors) else marginalize_both(post)
        paths = [viterbi_decode(graph, streams.speaker(k), beam)
                 for k in range(streams.n_speakers)]
    elif mode == "joint-exact":
        res = exact_joint_decode(graph, post)
        paths = [res.path_a, res.path_b]
    else:
        res, diag = lbp_joint_decode(graph, post, lbp_config)
        paths = [res.path_a, res.path_b]
    words = [states_to_words(p, graph, k).words for k, p in enumerate(paths)]
    return words, paths, diag
