"""Synthetic two-speaker mixtures with ground truth.

State paths are sampled from the decoding graph, then turned into noisy
joint posteriors that emulate an acoustic model's uncertainty:

* a clean core putting all mass on the true pdf pair ``(l_a, l_b)``;
* smoothing mass ``1 / (1 + sharpness)`` spread by a symmetric Dirichlet
  draw whose total concentration is ``1 / sharpness`` (so the noise lands
  on a few random competitors rather than being spread thin);
* a speaker-confusion fraction ``confusion`` of the true pair's mass moved
  to the transposed pair ``(l_b, l_a)``.

A matching pair of separate per-speaker streams is also emitted.  Separate
streams cannot hold attribution uncertainty within a frame, so confusion
shows up there as runs of frames where the two outputs are swapped.
"""

from __future__ import annotations

import math
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .errors import ConfigurationError, ValidationError
from .graph import DecodingGraph
from .posteriors import JointPosteriors, SeparatePosteriors, quantize, write_posterior_file
from .scoring import write_transcripts
from .viterbi import StatePath

GENDERS = ("F", "M")


@dataclass(frozen=True)
class GenConfig:
    n_utts: int = 100
    digits_min: int = 1
    digits_max: int = 7
    frames_per_state: float = 2.0
    sharpness: float = 4.0
    confusion: float = 0.0
    confusion_same: float | None = None
    same_gender_fraction: float = 0.5
    factorized_fraction: float = 0.0
    silence_prob: float = 0.5
    swap_run_frames: float = 10.0
    seed: int = 0

    def __post_init__(self):
        if self.n_utts < 0:
            raise ValidationError("n_utts must be non-negative")
        if not 1 <= self.digits_min <= self.digits_max:
            raise ValidationError("need 1 <= digits_min <= digits_max")
        if not self.frames_per_state >= 1.0:
            raise ValidationError("frames_per_state must be >= 1")
        if not self.sharpness > 0.0:
            raise ValidationError("sharpness must be positive")
        for name in ("confusion", "same_gender_fraction", "factorized_fraction",
                     "silence_prob"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ValidationError(f"{name}={value} outside [0, 1]")
        if self.confusion_same is not None and not 0.0 <= self.confusion_same <= 1.0:
            raise ValidationError(f"confusion_same={self.confusion_same} outside [0, 1]")
        if not self.swap_run_frames >= 1.0:
            raise ValidationError("swap_run_frames must be >= 1")

    @property
    def smoothing_mass(self) -> float:
        return 0.0 if math.isinf(self.sharpness) else 1.0 / (1.0 + self.sharpness)

    @property
    def noise_concentration(self) -> float:
        """Total Dirichlet concentration of the smoothing draw."""
        return 1.0 / self.sharpness

    def confusion_for(self, same_gender: bool) -> float:
        if same_gender and self.confusion_same is not None:
            return self.confusion_same
        return self.confusion

    @classmethod
    def from_mapping(cls, values: dict[str, str]) -> "GenConfig":
        fields = cls.__dataclass_fields__
        kwargs = {}
        for key, raw in values.items():
            if key not in fields:
                raise ConfigurationError(f"unknown generator setting {key!r}")
            kind = fields[key].type
            try:
                if kind == "int":
                    kwargs[key] = int(raw)
                elif raw.lower() in ("none", ""):
                    kwargs[key] = None
                else:
                    kwargs[key] = float(raw)
            except ValueError:
                raise ConfigurationError(f"bad value for {key}: {raw!r}") from None
        return cls(**kwargs)


@dataclass(eq=False)
class MixtureInstance:
    utt_id: str
    words: tuple[list[str], list[str]]
    paths: tuple[StatePath, StatePath]
    genders: tuple[str, str]
    confusion: float
    joint: JointPosteriors
    separate: SeparatePosteriors
    seed: int
    config: GenConfig

    @property
    def n_frames(self) -> int:
        return self.joint.n_frames

    @property
    def same_gender(self) -> bool:
        return self.genders[0] == self.genders[1]


def utterance_seed(seed: int, utt_id: str) -> int:
    """Per-utterance RNG seed, independent of generation order."""
    ss = np.random.SeedSequence([seed, zlib.crc32(utt_id.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


def unigram_weights(graph: DecodingGraph) -> np.ndarray:
    starts = np.array([start for _, start, _ in graph.word_spans])
    w = np.exp(graph.initial[starts])
    return w / w.sum()


def _dwell(rng, mean):
    return int(rng.geometric(1.0 / mean))


def _speaker_path(graph, words, rng, config):
    spans = {w: (start, stop) for w, start, stop in graph.word_spans}
    chains = []
    sil = graph.silence_span
    if sil is not None:
        chains.append(range(*sil))
    for k, word in enumerate(words):
        if k and sil is not None and rng.random() < config.silence_prob:
            chains.append(range(*sil))
        chains.append(range(*spans[word]))
    if sil is not None:
        chains.append(range(*sil))
    states = []
    for chain in chains:
        for s in chain:
            states.extend([s] * _dwell(rng, config.frames_per_state))
    return states


def sample_paths(graph: DecodingGraph, config: GenConfig, rng_seed):
    """Sample word sequences and state paths for two speakers.

    Returns ``[(words_a, path_a), (words_b, path_b)]`` with both paths
    padded to the same length by extending their final state.
    """
    rng = np.random.default_rng(rng_seed)
    if not graph.word_spans:
        raise ConfigurationError("graph has no words to sample")
    vocab = graph.words
    weights = unigram_weights(graph)
    out = []
    for _ in range(2):
        n = int(rng.integers(config.digits_min, config.digits_max + 1))
        words = [vocab[i] for i in rng.choice(len(vocab), size=n, p=weights)]
        out.append((words, _speaker_path(graph, words, rng, config)))
    length = max(len(states) for _, states in out)
    result = []
    for words, states in out:
        last = states[-1]
        if len(states) < length:
            if graph.transition(last, last) == -math.inf:
                raise ConfigurationError(f"state {last} has no self-loop; cannot pad path")
            states = states + [last] * (length - len(states))
        arr = np.asarray(states, dtype=np.int64)
        result.append((words, StatePath(arr, graph.path_log_prior(arr))))
    return result


def _noise(rng, shape, total_concentration):
    n = int(np.prod(shape[1:]))
    draw = rng.dirichlet(np.full(n, total_concentration / n), size=shape[0])
    bad = ~np.isfinite(draw).all(axis=1) | (draw.sum(axis=1) <= 0)
    draw[bad] = 1.0 / draw.shape[1]
    return draw.reshape(shape)


def _log(p):
    with np.errstate(divide="ignore"):
        return np.log(p)


def emit_joint_posteriors(graph: DecodingGraph, paths, config: GenConfig, rng_seed,
                          confusion: float | None = None) -> JointPosteriors:
    """Noisy joint posterior tensor for a pair of equal-length state paths."""
    path_a, path_b = paths
    la = graph.state_to_pdf[np.asarray(getattr(path_a, "states", path_a))]
    lb = graph.state_to_pdf[np.asarray(getattr(path_b, "states", path_b))]
    if la.shape != lb.shape:
        raise ValidationError("paths must have equal length")
    gamma = config.confusion if confusion is None else confusion
    rng = np.random.default_rng(rng_seed)
    T, V = len(la), graph.n_pdfs
    eps, alpha = config.smoothing_mass, config.noise_concentration
    f = config.factorized_fraction
    frames = np.arange(T)
    probs = np.zeros((T, V, V))
    if f < 1.0:
        part = np.zeros((T, V, V))
        part[frames, la, lb] = 1.0 - eps
        if eps > 0.0:
            part += eps * _noise(rng, (T, V, V), alpha)
        probs += (1.0 - f) * part
    if f > 0.0:
        pa = np.zeros((T, V))
        pb = np.zeros((T, V))
        pa[frames, la] = 1.0 - eps
        pb[frames, lb] = 1.0 - eps
        if eps > 0.0:
            pa += eps * _noise(rng, (T, V), alpha)
            pb += eps * _noise(rng, (T, V), alpha)
        probs += f * pa[:, :, None] * pb[:, None, :]
    if gamma > 0.0:
        moved = gamma * probs[frames, la, lb]
        off = la != lb
        probs[frames[off], la[off], lb[off]] -= moved[off]
        probs[frames[off], lb[off], la[off]] += moved[off]
    probs /= probs.sum(axis=(1, 2), keepdims=True)
    return JointPosteriors(_log(probs))


def _swap_runs(rng, T, rate, mean_run):
    """Binary on/off sequence with stationary on-probability ``rate``."""
    if rate <= 0.0:
        return np.zeros(T, dtype=bool)
    if rate >= 1.0:
        return np.ones(T, dtype=bool)
    leave_on = 1.0 / mean_run
    leave_off = leave_on * rate / (1.0 - rate)
    if leave_off > 1.0:
        leave_off, leave_on = 1.0, (1.0 - rate) / rate
    out = np.empty(T, dtype=bool)
    state = rng.random() < rate
    u = rng.random(T)
    for t in range(T):
        out[t] = state
        state = (u[t] >= leave_on) if state else (u[t] < leave_off)
    return out


def emit_separate_posteriors(graph: DecodingGraph, paths, config: GenConfig, rng_seed,
                             confusion: float | None = None) -> SeparatePosteriors:
    """Two per-speaker streams whose attribution swaps on runs of frames.

    The fraction of swapped frames is ``confusion`` in expectation, with
    mean run length ``config.swap_run_frames``.
    """
    path_a, path_b = paths
    la = graph.state_to_pdf[np.asarray(getattr(path_a, "states", path_a))]
    lb = graph.state_to_pdf[np.asarray(getattr(path_b, "states", path_b))]
    gamma = config.confusion if confusion is None else confusion
    rng = np.random.default_rng(rng_seed)
    T, V = len(la), graph.n_pdfs
    eps, alpha = config.smoothing_mass, config.noise_concentration
    swapped = _swap_runs(rng, T, gamma, config.swap_run_frames)
    labels = np.stack([np.where(swapped, lb, la), np.where(swapped, la, lb)])
    probs = np.zeros((2, T, V))
    for k in range(2):
        probs[k, np.arange(T), labels[k]] = 1.0 - eps
        if eps > 0.0:
            probs[k] += eps * _noise(rng, (T, V), alpha)
    probs /= probs.sum(axis=2, keepdims=True)
    return SeparatePosteriors(_log(probs))


def generate_instance(graph: DecodingGraph, config: GenConfig, index: int,
                      utt_id: str | None = None) -> MixtureInstance:
    utt_id = utt_id or f"utt{index:05d}"
    seed = utterance_seed(config.seed, utt_id)
    ss = np.random.SeedSequence(seed)
    s_paths, s_meta, s_joint, s_sep = ss.spawn(4)
    meta = np.random.default_rng(s_meta)
    same = bool(meta.random() < config.same_gender_fraction)
    if same:
        g = GENDERS[int(meta.integers(2))]
        genders = (g, g)
    else:
        genders = tuple(GENDERS) if meta.random() < 0.5 else tuple(reversed(GENDERS))
    gamma = config.confusion_for(same)
    (words_a, path_a), (words_b, path_b) = sample_paths(graph, config, s_paths)
    joint = emit_joint_posteriors(graph, (path_a, path_b), config, s_joint, gamma)
    separate = emit_separate_posteriors(graph, (path_a, path_b), config, s_sep, gamma)
    return MixtureInstance(utt_id, (words_a, words_b), (path_a, path_b), genders, gamma,
                           quantize(joint), quantize(separate), seed, config)


MANIFEST_HEADER = "#utt_id\tT\tgender_a\tgender_b\tgamma\tkappa\tseed"


def manifest_line(inst: MixtureInstance) -> str:
    return "\t".join([inst.utt_id, str(inst.n_frames), inst.genders[0], inst.genders[1],
                      repr(inst.confusion), repr(inst.config.sharpness), str(inst.seed)])


def read_manifest(path) -> dict[str, dict]:
    out = {}
    with open(path, encoding="utf-8") as f:
        for line in f:
            if not line.strip() or line.startswith("#"):
                continue
            utt, T, ga, gb, gamma, kappa, seed = line.rstrip("\n").split("\t")
            out[utt] = {"T": int(T), "genders": (ga, gb), "gamma": float(gamma),
                        "kappa": float(kappa), "seed": int(seed)}
    return out


@dataclass
class CorpusStats:
    n_utts: int
    total_frames: int
    n_same_gender: int
    mean_words: float

    def to_dict(self):
        return asdict(self)


def generate_corpus(graph: DecodingGraph, config: GenConfig, out_dir,
                    threads: int = 1) -> CorpusStats:
    """Write ``joint/*.fdp``, ``separate/*.fdp``, ``ref.txt`` and ``manifest.tsv``."""
    out = Path(out_dir)
    (out / "joint").mkdir(parents=True, exist_ok=True)
    (out / "separate").mkdir(parents=True, exist_ok=True)

    def work(i):
        inst = generate_instance(graph, config, i)
        write_posterior_file(inst.joint, out / "joint" / f"{inst.utt_id}.fdp")
        write_posterior_file(inst.separate, out / "separate" / f"{inst.utt_id}.fdp")
        return (inst.utt_id, inst.words, manifest_line(inst), inst.n_frames, inst.same_gender)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            results = list(pool.map(work, range(config.n_utts)))
    else:
        results = [work(i) for i in range(config.n_utts)]
    refs = {utt: {0: words[0], 1: words[1]} for utt, words, *_ in results}
    write_transcripts(out / "ref.txt", refs)
    with open(out / "manifest.tsv", "w", encoding="utf-8", newline="\n") as f:
        f.write(MANIFEST_HEADER + "\n")
        for r in results:
            f.write(r[2] + "\n")
    n_words = sum(len(w[0]) + len(w[1]) for _, w, *_ in results)
    return CorpusStats(len(results), sum(r[3] for r in results), sum(r[4] for r in results),
                       n_words / (2 * len(results)) if results else 0.0)


def noiseless(config: GenConfig) -> GenConfig:
    return replace(config, sharpness=math.inf, confusion=0.0, confusion_same=None)
