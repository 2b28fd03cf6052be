"""Random instance builders and brute-force oracles shared by the tests."""

import itertools

import numpy as np
from scipy.special import logsumexp

from fhmm_decode.graph import DecodingGraph


def random_graph(rng, n_states, density=0.6):
    """Random row-stochastic graph with identity pdf map.

    Every state keeps a self-loop and an edge to its successor (mod n) so
    the graph is strongly connected; other edges appear with ``density``.
    """
    mask = rng.random((n_states, n_states)) < density
    idx = np.arange(n_states)
    mask[idx, idx] = True
    mask[idx, (idx + 1) % n_states] = True
    probs = np.where(mask, rng.random((n_states, n_states)) + 0.05, 0.0)
    probs /= probs.sum(axis=1, keepdims=True)
    init = rng.random(n_states) + 0.05
    init /= init.sum()
    with np.errstate(divide="ignore"):
        return DecodingGraph.from_dense(np.log(probs), np.log(init))


def random_scores(rng, n_frames, n_pdfs):
    return np.log(rng.dirichlet(np.ones(n_pdfs), size=n_frames))


def sample_path(rng, graph, n_frames):
    probs = np.exp(graph.dense_transitions)
    s = rng.choice(graph.n_states, p=np.exp(graph.initial))
    path = [s]
    for _ in range(n_frames - 1):
        s = rng.choice(graph.n_states, p=probs[s])
        path.append(s)
    return np.array(path)


def correlated_joint(rng, graph, n_frames, confusion=0.3, signal=0.6):
    """Joint posteriors built around two sampled ground-truth paths.

    A fraction ``signal`` of each frame's mass sits on the true pair,
    ``confusion`` of that on the transposed pair; the rest is a flat
    Dirichlet draw, so the speakers' states are correlated through the
    tensor and the product-space problem is genuinely loopy.
    """
    v = graph.n_pdfs
    pa = graph.state_to_pdf[sample_path(rng, graph, n_frames)]
    pb = graph.state_to_pdf[sample_path(rng, graph, n_frames)]
    probs = (1 - signal) * rng.dirichlet(np.ones(v * v), size=n_frames).reshape(n_frames, v, v)
    t = np.arange(n_frames)
    probs[t, pa, pb] += signal * (1 - confusion)
    probs[t, pb, pa] += signal * confusion
    probs /= probs.sum(axis=(1, 2), keepdims=True)
    return np.log(probs)


def factorized_joint(sa, sb):
    return sa[:, :, None] + sb[:, None, :]


def normalize_joint(logits):
    return logits - logsumexp(logits, axis=(1, 2), keepdims=True)


def brute_force_viterbi(graph, scores):
    """Best (score, path) over all S**T sequences; ties keep the first in
    lexicographic order."""
    T = scores.shape[0]
    trans = graph.dense_transitions
    # itertools.product yields sequences in lexicographic order, and argmax
    # keeps the first maximum
    seqs = np.array(list(itertools.product(range(graph.n_states), repeat=T)))
    emis = scores[np.arange(T)[None, :], graph.state_to_pdf[seqs]]
    total = graph.initial[seqs[:, 0]] + emis.sum(axis=1)
    for t in range(1, T):
        total += trans[seqs[:, t - 1], seqs[:, t]]
    i = int(np.argmax(total))
    return total[i], seqs[i]


def brute_force_joint(graph, joint):
    """Exhaustive search over all pairs of state sequences.

    Vectorized over speaker b's sequences: for each a-sequence the score of
    every b-sequence is computed at once.
    """
    T = joint.shape[0]
    n = graph.n_states
    trans = graph.dense_transitions
    seqs = np.array(list(itertools.product(range(n), repeat=T)))
    prior = graph.initial[seqs[:, 0]].copy()
    for t in range(1, T):
        prior += trans[seqs[:, t - 1], seqs[:, t]]
    pdf = graph.state_to_pdf
    best, best_pair = -np.inf, None
    for ia, a in enumerate(seqs):
        emis = joint[np.arange(T)[None, :], pdf[a][None, :], pdf[seqs]].sum(axis=1)
        total = prior[ia] + prior + emis
        ib = int(np.argmax(total))
        if total[ib] > best:
            best, best_pair = total[ib], (a, seqs[ib])
    return best, best_pair
