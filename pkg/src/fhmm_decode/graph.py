"""Lexicon + unigram grammar compilation into an HMM decoding graph.

The graph is a word loop::

    [silence] -> word -> [silence] -> word -> ...

Every word is a left-to-right chain of its phones' HMM states, each state
with a self-loop.  The unigram weight is applied whenever a word chain is
entered.  Graph states are word specific, while emission PDFs are tied per
phone state, so several graph states may read the same posterior column.
"""

from __future__ import annotations

import math
import struct
from collections import deque
from dataclasses import dataclass, field
from functools import cached_property
from importlib import resources
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, FormatError, ValidationError

DEFAULT_SELF_LOOP = 0.5
DEFAULT_SILENCE_PROB = 0.5
SILENCE_PHONE = "SIL"

_GRAPH_MAGIC = b"FDG1"


@dataclass(frozen=True)
class Phone:
    label: str
    n_states: int
    self_loop: float = DEFAULT_SELF_LOOP


@dataclass(frozen=True)
class Lexicon:
    """Pronunciation dictionary plus phone inventory.

    ``words`` is a list of ``(word, [phone, ...])`` pairs.  The phone named
    ``silence_phone`` (if present in ``phones``) builds the optional
    silence chain between words.
    """

    words: list[tuple[str, list[str]]]
    phones: list[Phone]
    silence_phone: str | None = SILENCE_PHONE

    def __post_init__(self):
        labels = [w for w, _ in self.words]
        if len(set(labels)) != len(labels):
            raise ValidationError("duplicate word labels in lexicon")
        inventory = {}
        for p in self.phones:
            if p.n_states < 1:
                raise ValidationError(f"phone {p.label!r} has n_states < 1")
            if not 0.0 <= p.self_loop < 1.0:
                raise ValidationError(
                    f"phone {p.label!r} self-loop {p.self_loop} outside [0, 1)")
            if p.label in inventory:
                raise ValidationError(f"duplicate phone label {p.label!r}")
            inventory[p.label] = p
        for word, pron in self.words:
            if not pron:
                raise ValidationError(f"word {word!r} has an empty pronunciation")
            for ph in pron:
                if ph not in inventory:
                    raise ValidationError(
                        f"word {word!r} uses unknown phone {ph!r}")

    @cached_property
    def phone_map(self) -> dict[str, Phone]:
        return {p.label: p for p in self.phones}

    @cached_property
    def pronunciations(self) -> dict[str, list[str]]:
        return dict(self.words)

    @property
    def has_silence(self) -> bool:
        return self.silence_phone is not None and self.silence_phone in self.phone_map


def _content_lines(path):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.split("#", 1)[0].strip()
            if line:
                yield lineno, line.split()


def read_phones(path) -> list[Phone]:
    phones = []
    for lineno, cols in _content_lines(path):
        if len(cols) not in (2, 3):
            raise FormatError(f"{path}:{lineno}: expected 'PHONE n_states [self_loop]'")
        try:
            n = int(cols[1])
            loop = float(cols[2]) if len(cols) == 3 else DEFAULT_SELF_LOOP
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
        phones.append(Phone(cols[0], n, loop))
    return phones


def read_lexicon(lexicon_path, phones_path, silence_phone=SILENCE_PHONE) -> Lexicon:
    phones = read_phones(phones_path)
    words = []
    for lineno, cols in _content_lines(lexicon_path):
        if len(cols) < 2:
            raise FormatError(f"{lexicon_path}:{lineno}: expected 'WORD phone ...'")
        words.append((cols[0], cols[1:]))
    return Lexicon(words, phones, silence_phone)


def read_grammar(path) -> dict[str, float]:
    weights = {}
    for lineno, cols in _content_lines(path):
        if len(cols) != 2:
            raise FormatError(f"{path}:{lineno}: expected 'WORD weight'")
        try:
            weights[cols[0]] = float(cols[1])
        except ValueError as exc:
            raise FormatError(f"{path}:{lineno}: {exc}") from None
    return weights


def paper_lexicon_paths() -> tuple[Path, Path, Path]:
    """Bundled TIDIGITS-style lexicon, phone inventory and uniform grammar."""
    root = resources.files("fhmm_decode") / "data"
    return (Path(str(root / "lexicon.txt")), Path(str(root / "phones.txt")),
            Path(str(root / "grammar.txt")))


def paper_graph() -> "DecodingGraph":
    lex, phones, grammar = paper_lexicon_paths()
    return build_graph(read_lexicon(lex, phones), read_grammar(grammar))


@dataclass(frozen=True, eq=False)
class DecodingGraph:
    """Immutable HMM state graph.

    Transitions are stored row-wise in CSR form as natural-log
    probabilities: the successors of state ``s`` are
    ``indices[indptr[s]:indptr[s+1]]`` with weights ``logp[...]``.
    ``word_spans`` lists ``(word, start, stop)`` state ranges; the last state
    of each span is word final.
    """

    n_states: int
    n_pdfs: int
    indptr: np.ndarray
    indices: np.ndarray
    logp: np.ndarray
    initial: np.ndarray
    state_to_pdf: np.ndarray
    state_to_phone: tuple[str, ...]
    word_spans: tuple[tuple[str, int, int], ...] = ()
    silence_span: tuple[int, int] | None = None
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        for name in ("indptr", "indices", "logp", "initial", "state_to_pdf"):
            arr = getattr(self, name)
            if arr.flags.writeable:
                arr = arr.copy()
                arr.flags.writeable = False
                object.__setattr__(self, name, arr)
        if self.indptr.shape != (self.n_states + 1,):
            raise ValidationError("indptr length must be n_states + 1")
        if self.initial.shape != (self.n_states,) or self.state_to_pdf.shape != (self.n_states,):
            raise ValidationError("per-state tables must have length n_states")
        if len(self.state_to_phone) != self.n_states:
            raise ValidationError("state_to_phone must have length n_states")

    @classmethod
    def from_dense(cls, log_trans, initial, state_to_pdf=None, n_pdfs=None,
                   state_to_phone=None, word_spans=(), silence_span=None):
        """Build a graph from a dense ``S x S`` log-transition matrix (-inf = absent)."""
        log_trans = np.asarray(log_trans, dtype=np.float64)
        n = log_trans.shape[0]
        mask = log_trans > -np.inf
        indptr = np.concatenate([[0], np.cumsum(mask.sum(axis=1))]).astype(np.int64)
        rows, cols = np.nonzero(mask)
        if state_to_pdf is None:
            state_to_pdf = np.arange(n)
        state_to_pdf = np.asarray(state_to_pdf, dtype=np.int64)
        if n_pdfs is None:
            n_pdfs = int(state_to_pdf.max()) + 1 if n else 0
        if state_to_phone is None:
            state_to_phone = tuple(f"s{i}" for i in range(n))
        return cls(n, int(n_pdfs), indptr, cols.astype(np.int64),
                   log_trans[rows, cols].copy(), np.asarray(initial, dtype=np.float64),
                   state_to_pdf, tuple(state_to_phone), tuple(word_spans), silence_span)

    @property
    def dense_transitions(self) -> np.ndarray:
        if "dense" not in self._cache:
            dense = np.full((self.n_states, self.n_states), -np.inf)
            rows = np.repeat(np.arange(self.n_states), np.diff(self.indptr))
            dense[rows, self.indices] = self.logp
            dense.flags.writeable = False
            self._cache["dense"] = dense
        return self._cache["dense"]

    @property
    def predecessors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Column-wise CSR ``(ptr, src, logp)``, sources ascending per destination."""
        if "pred" not in self._cache:
            rows = np.repeat(np.arange(self.n_states), np.diff(self.indptr))
            order = np.lexsort((rows, self.indices))
            dst = self.indices[order]
            ptr = np.zeros(self.n_states + 1, dtype=np.int64)
            np.add.at(ptr, dst + 1, 1)
            self._cache["pred"] = (np.cumsum(ptr), rows[order].astype(np.int64),
                                   self.logp[order].astype(np.float64))
        return self._cache["pred"]

    @property
    def successors(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Row-wise CSR ``(ptr, dst, logp)`` with destinations sorted ascending."""
        if "succ" not in self._cache:
            rows = np.repeat(np.arange(self.n_states), np.diff(self.indptr))
            order = np.lexsort((self.indices, rows))
            self._cache["succ"] = (self.indptr.astype(np.int64),
                                   self.indices[order].astype(np.int64),
                                   self.logp[order].astype(np.float64))
        return self._cache["succ"]

    @property
    def state_to_word(self) -> dict[int, str]:
        """Word-final states mapped to their word label."""
        return {stop - 1: word for word, _, stop in self.word_spans}

    @property
    def words(self) -> list[str]:
        return [w for w, _, _ in self.word_spans]

    def transition(self, src: int, dst: int) -> float:
        return float(self.dense_transitions[src, dst])

    def path_log_prior(self, states) -> float:
        """Initial plus transition log-probability of a state sequence."""
        states = np.asarray(states)
        if len(states) == 0:
            return 0.0
        score = self.initial[states[0]]
        if len(states) > 1:
            score += self.dense_transitions[states[:-1], states[1:]].sum()
        return float(score)


def build_graph(lexicon: Lexicon, word_weights: dict[str, float],
                silence_prob: float = DEFAULT_SILENCE_PROB) -> DecodingGraph:
    """Compile ``lexicon`` and unigram ``word_weights`` into a word-loop graph.

    Parameters
    ----------
    lexicon : Lexicon
        Pronunciations and phone topology.
    word_weights : dict
        Unigram probability per word.  Must sum to one (within 1e-6); the
        weights are renormalized exactly before use.
    silence_prob : float
        Probability of passing through the silence chain at utterance start
        and after each word.  Ignored when the lexicon has no silence phone.

    Returns
    -------
    DecodingGraph
    """
    if not lexicon.words:
        raise ConfigurationError("lexicon has no words")
    if not word_weights:
        raise ConfigurationError("grammar has no words")
    unknown = [w for w in word_weights if w not in lexicon.pronunciations]
    if unknown:
        raise ConfigurationError(f"grammar words not in lexicon: {', '.join(unknown)}")
    total = math.fsum(word_weights.values())
    if abs(total - 1.0) > 1e-6:
        raise ValidationError(f"grammar weights sum to {total!r}, expected 1")
    bad = [w for w, p in word_weights.items() if not p > 0.0]
    if bad:
        raise ValidationError(f"non-positive grammar weights: {', '.join(bad)}")
    if not 0.0 <= silence_prob <= 1.0:
        raise ValidationError(f"silence_prob {silence_prob} outside [0, 1]")

    grammar = [(w, word_weights[w] / total) for w, _ in lexicon.words if w in word_weights]
    use_silence = lexicon.has_silence and silence_prob > 0.0

    used = {ph for w, _ in grammar for ph in lexicon.pronunciations[w]}
    if use_silence:
        used.add(lexicon.silence_phone)
    pdf_offset = {}
    n_pdfs = 0
    for p in lexicon.phones:
        if p.label in used:
            pdf_offset[p.label] = n_pdfs
            n_pdfs += p.n_states

    state_pdf: list[int] = []
    state_phone: list[str] = []
    state_loop: list[float] = []

    def add_chain(phones):
        start = len(state_pdf)
        for label in phones:
            ph = lexicon.phone_map[label]
            for k in range(ph.n_states):
                state_pdf.append(pdf_offset[label] + k)
                state_phone.append(label)
                state_loop.append(ph.self_loop)
        return start, len(state_pdf)

    silence_span = add_chain([lexicon.silence_phone]) if use_silence else None
    spans = tuple((w, *add_chain(lexicon.pronunciations[w])) for w, _ in grammar)
    n = len(state_pdf)

    probs = np.zeros((n, n))
    probs[np.arange(n), np.arange(n)] = state_loop

    def distribute_exit(src, mass, allow_silence):
        if allow_silence and use_silence:
            probs[src, silence_span[0]] += mass * silence_prob
            mass *= 1.0 - silence_prob
        for (_, start, _), (_, w) in zip(spans, grammar):
            probs[src, start] += mass * w

    for _, start, stop in spans:
        for s in range(start, stop - 1):
            probs[s, s + 1] += 1.0 - state_loop[s]
        distribute_exit(stop - 1, 1.0 - state_loop[stop - 1], allow_silence=True)
    if use_silence:
        start, stop = silence_span
        for s in range(start, stop - 1):
            probs[s, s + 1] += 1.0 - state_loop[s]
        distribute_exit(stop - 1, 1.0 - state_loop[stop - 1], allow_silence=False)

    init = np.zeros(n)
    mass = 1.0
    if use_silence:
        init[silence_span[0]] = silence_prob
        mass = 1.0 - silence_prob
    for (_, start, _), (_, w) in zip(spans, grammar):
        init[start] += mass * w

    with np.errstate(divide="ignore"):
        log_trans = np.log(probs)
        log_init = np.log(init)
    return DecodingGraph.from_dense(log_trans, log_init, state_pdf, n_pdfs,
                                    state_phone, spans, silence_span)


@dataclass(frozen=True)
class Violation:
    rule: str
    state: int | None
    detail: str

    def __str__(self):
        where = "graph" if self.state is None else f"state {self.state}"
        return f"{self.rule}: {where}: {self.detail}"


def validate_graph(graph: DecodingGraph, tol: float = 1e-9) -> list[Violation]:
    """Check every graph invariant; an empty list means the graph is valid."""
    out = []
    n = graph.n_states
    if np.any(np.isnan(graph.logp)) or np.any(graph.logp == np.inf):
        out.append(Violation("finite-weights", None, "NaN or +inf transition weight"))
    if np.any((graph.indices < 0) | (graph.indices >= n)):
        out.append(Violation("index-range", None, "transition target outside [0, n_states)"))
        return out
    row_mass = np.zeros(n)
    rows = np.repeat(np.arange(n), np.diff(graph.indptr))
    np.add.at(row_mass, rows, np.exp(graph.logp))
    for s in np.flatnonzero(np.abs(row_mass - 1.0) > tol):
        out.append(Violation("row-stochasticity", int(s),
                             f"outgoing probability sums to {row_mass[s]!r}"))
    init_mass = math.fsum(np.exp(graph.initial))
    if abs(init_mass - 1.0) > tol:
        out.append(Violation("initial-stochasticity", None,
                             f"initial probability sums to {init_mass!r}"))
    seen = np.zeros(n, dtype=bool)
    queue = deque(np.flatnonzero(graph.initial > -np.inf).tolist())
    seen[list(queue)] = True
    while queue:
        s = queue.popleft()
        for d in graph.indices[graph.indptr[s]:graph.indptr[s + 1]]:
            if not seen[d]:
                seen[d] = True
                queue.append(int(d))
    for s in np.flatnonzero(~seen):
        out.append(Violation("unreachable", int(s), "not reachable from any initial state"))
    for s in np.flatnonzero((graph.state_to_pdf < 0) | (graph.state_to_pdf >= graph.n_pdfs)):
        out.append(Violation("pdf-range", int(s),
                             f"pdf {graph.state_to_pdf[s]} outside [0, {graph.n_pdfs})"))
    for word, start, stop in graph.word_spans:
        if not 0 <= start < stop <= n:
            out.append(Violation("word-final", None, f"word {word!r} has no word-final state"))
    return out


# -- binary container -------------------------------------------------------

def _pack_strings(strings):
    parts = [struct.pack("<I", len(strings))]
    for s in strings:
        raw = s.encode("utf-8")
        parts.append(struct.pack("<I", len(raw)))
        parts.append(raw)
    return b"".join(parts)


class _Reader:
    def __init__(self, buf, path):
        self.buf = buf
        self.pos = 0
        self.path = path

    def take(self, n):
        if self.pos + n > len(self.buf):
            raise FormatError(f"{self.path}: truncated graph file: need {self.pos + n} bytes, "
                              f"have {len(self.buf)}")
        chunk = self.buf[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def array(self, dtype, count):
        dt = np.dtype(dtype)
        return np.frombuffer(self.take(dt.itemsize * count), dtype=dt).copy()

    def strings(self):
        return [self.take(self.u32()).decode("utf-8") for _ in range(self.u32())]


def graph_to_bytes(graph: DecodingGraph) -> bytes:
    nnz = len(graph.indices)
    phones = sorted(set(graph.state_to_phone))
    phone_idx = {p: i for i, p in enumerate(phones)}
    words = [w for w, _, _ in graph.word_spans]
    sil = graph.silence_span or (0xFFFFFFFF, 0xFFFFFFFF)
    parts = [
        _GRAPH_MAGIC,
        struct.pack("<III", graph.n_states, graph.n_pdfs, nnz),
        graph.indptr.astype("<u4").tobytes(),
        graph.indices.astype("<u4").tobytes(),
        graph.logp.astype("<f8").tobytes(),
        graph.initial.astype("<f8").tobytes(),
        graph.state_to_pdf.astype("<u4").tobytes(),
        _pack_strings(phones),
        np.array([phone_idx[p] for p in graph.state_to_phone], dtype="<u4").tobytes(),
        _pack_strings(words),
        np.array([(s, e) for _, s, e in graph.word_spans], dtype="<u4").reshape(-1).tobytes(),
        struct.pack("<II", *sil),
    ]
    return b"".join(parts)


def graph_from_bytes(buf: bytes, path="<bytes>") -> DecodingGraph:
    r = _Reader(buf, path)
    if r.take(4) != _GRAPH_MAGIC:
        raise FormatError(f"{path}: bad magic, not an FDG1 graph file")
    n, n_pdfs, nnz = struct.unpack("<III", r.take(12))
    indptr = r.array("<u4", n + 1).astype(np.int64)
    if indptr[-1] != nnz:
        raise FormatError(f"{path}: CSR indptr ends at {indptr[-1]}, header says nnz={nnz}")
    indices = r.array("<u4", nnz).astype(np.int64)
    logp = r.array("<f8", nnz)
    initial = r.array("<f8", n)
    state_to_pdf = r.array("<u4", n).astype(np.int64)
    phones = r.strings()
    phone_idx = r.array("<u4", n)
    if n and phone_idx.max() >= len(phones):
        raise FormatError(f"{path}: phone index out of range")
    words = r.strings()
    bounds = r.array("<u4", 2 * len(words)).reshape(-1, 2)
    sil = struct.unpack("<II", r.take(8))
    if r.pos != len(buf):
        raise FormatError(f"{path}: {len(buf) - r.pos} trailing bytes after graph")
    spans = tuple((w, int(s), int(e)) for w, (s, e) in zip(words, bounds))
    silence_span = None if sil[0] == 0xFFFFFFFF else (int(sil[0]), int(sil[1]))
    return DecodingGraph(n, n_pdfs, indptr, indices, logp, initial, state_to_pdf,
                         tuple(phones[i] for i in phone_idx), spans, silence_span)


def write_graph(graph: DecodingGraph, path) -> None:
    Path(path).write_bytes(graph_to_bytes(graph))


def read_graph(path) -> DecodingGraph:
    return graph_from_bytes(Path(path).read_bytes(), path)
