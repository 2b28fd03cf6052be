"""Acoustic posterior tensors: data model, marginalization, file I/O.

All values are natural-log probabilities.  Separate posteriors hold one
``T x V`` matrix per speaker; joint posteriors hold a single ``T x V x V``
tensor indexed ``[t, state_a, state_b]``.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

from .errors import FormatError, NumericError, ValidationError

NORM_TOL = 1e-6

_MAGIC = b"FDP1"
_HEADER = struct.Struct("<4sBBHII")
KIND_SEPARATE = 0
KIND_JOINT = 1


def _check_values(data):
    if np.isnan(data).any():
        raise ValidationError("posterior tensor contains NaN")
    if (data == np.inf).any():
        raise ValidationError("posterior tensor contains +inf")


def _frozen(data):
    data = np.array(data, dtype=np.float64)
    data.flags.writeable = False
    return data


@dataclass(frozen=True, eq=False)
class SeparatePosteriors:
    """Per-speaker log posteriors, ``data.shape == (K, T, V)``."""

    data: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 3 or 0 in data.shape:
            raise ValidationError(f"separate posteriors need shape (K, T, V), got {data.shape}")
        _check_values(data)
        if self.normalized:
            err = np.abs(logsumexp(data, axis=2))
            if not np.all(err <= NORM_TOL):
                k, t = np.unravel_index(np.argmax(err), err.shape)
                raise ValidationError(
                    f"speaker {k} frame {t} not normalized: |logsumexp| = {err[k, t]:.3g}")
        object.__setattr__(self, "data", data)

    @property
    def n_speakers(self) -> int:
        return self.data.shape[0]

    @property
    def n_frames(self) -> int:
        return self.data.shape[1]

    @property
    def n_states(self) -> int:
        return self.data.shape[2]

    def speaker(self, k: int) -> np.ndarray:
        return self.data[k]


@dataclass(frozen=True, eq=False)
class JointPosteriors:
    """Joint log posteriors of a state pair, ``data.shape == (T, V, V)``."""

    data: np.ndarray
    normalized: bool = True

    def __post_init__(self):
        data = _frozen(self.data)
        if data.ndim != 3 or data.shape[1] != data.shape[2] or 0 in data.shape:
            raise ValidationError(f"joint posteriors need shape (T, V, V), got {data.shape}")
        _check_values(data)
        if self.normalized:
            err = np.abs(logsumexp(data, axis=(1, 2)))
            if not np.all(err <= NORM_TOL):
                t = int(np.argmax(err))
                raise ValidationError(
                    f"joint frame {t} not normalized: |logsumexp| = {err[t]:.3g}")
        object.__setattr__(self, "data", data)

    @property
    def n_frames(self) -> int:
        return self.data.shape[0]

    @property
    def n_states(self) -> int:
        return self.data.shape[1]

    def transposed(self) -> "JointPosteriors":
        """Swap the roles of the two speakers."""
        return JointPosteriors(self.data.transpose(0, 2, 1), self.normalized)


def marginalize(joint: JointPosteriors, speaker) -> SeparatePosteriors:
    """Sum the joint posterior over the other speaker's state.

    ``speaker`` is ``"a"``/``0`` (keep the first index) or ``"b"``/``1``.
    """
    axis = {"a": 2, 0: 2, "b": 1, 1: 1}.get(speaker)
    if axis is None:
        raise ValidationError(f"speaker must be 'a' or 'b', got {speaker!r}")
    return SeparatePosteriors(logsumexp(joint.data, axis=axis)[None], joint.normalized)


def marginalize_both(joint: JointPosteriors) -> SeparatePosteriors:
    a = logsumexp(joint.data, axis=2)
    b = logsumexp(joint.data, axis=1)
    return SeparatePosteriors(np.stack([a, b]), joint.normalized)


def to_pseudo_likelihood(post, prior=None):
    """Divide posteriors by a state prior (log-domain subtraction).

    Without a prior the input is returned unchanged, which is the default
    operating mode: the raw posterior stands in for the likelihood.
    """
    if prior is None:
        return post
    prior = np.asarray(prior, dtype=np.float64)
    if abs(logsumexp(prior)) > NORM_TOL:
        raise ValidationError("prior vector is not normalized")
    if prior.shape != (post.n_states,):
        raise ValidationError(f"prior length {prior.shape} does not match V={post.n_states}")
    if isinstance(post, JointPosteriors):
        live = post.data > -np.inf
        dead_prior = (prior[:, None] == -np.inf) | (prior[None, :] == -np.inf)
        if np.any(live & dead_prior[None]):
            raise NumericError("prior is zero where the posterior is nonzero")
        with np.errstate(invalid="ignore"):
            out = post.data - prior[None, :, None] - prior[None, None, :]
        out[~live] = -np.inf
        return JointPosteriors(out, normalized=False)
    live = post.data > -np.inf
    if np.any(live & (prior == -np.inf)[None, None, :]):
        raise NumericError("prior is zero where the posterior is nonzero")
    with np.errstate(invalid="ignore"):
        out = post.data - prior[None, None, :]
    out[~live] = -np.inf
    return SeparatePosteriors(out, normalized=False)


# -- FDP1 container ---------------------------------------------------------

def posteriors_to_bytes(post) -> bytes:
    if isinstance(post, JointPosteriors):
        t, v, _ = post.data.shape
        header = _HEADER.pack(_MAGIC, KIND_JOINT, 1, 0, t, v)
    elif isinstance(post, SeparatePosteriors):
        k, t, v = post.data.shape
        if k > 255:
            raise ValidationError("at most 255 speakers fit the file header")
        header = _HEADER.pack(_MAGIC, KIND_SEPARATE, k, 0, t, v)
    else:
        raise TypeError(f"cannot serialize {type(post).__name__}")
    return header + post.data.astype("<f4").tobytes()


def posteriors_from_bytes(buf: bytes, path="<bytes>", validate=True):
    if len(buf) < _HEADER.size:
        raise FormatError(f"{path}: truncated header: expected {_HEADER.size} bytes, "
                          f"got {len(buf)}")
    magic, kind, k, reserved, t, v = _HEADER.unpack_from(buf)
    if magic != _MAGIC:
        raise FormatError(f"{path}: bad magic {magic!r}, expected {_MAGIC!r}")
    if reserved != 0:
        raise FormatError(f"{path}: reserved header field is {reserved}, expected 0")
    if kind == KIND_SEPARATE:
        shape = (k, t, v)
    elif kind == KIND_JOINT:
        shape = (t, v, v)
    else:
        raise FormatError(f"{path}: unknown kind {kind}")
    expected = _HEADER.size + 4 * int(np.prod(shape, dtype=np.int64))
    if len(buf) != expected:
        raise FormatError(f"{path}: payload size mismatch: expected {expected} bytes "
                          f"for kind={kind} shape={shape}, got {len(buf)}")
    data = np.frombuffer(buf, dtype="<f4", offset=_HEADER.size).reshape(shape)
    if np.isnan(data).any():
        raise FormatError(f"{path}: NaN entries in payload")
    data = data.astype(np.float64)
    try:
        if kind == KIND_JOINT:
            return JointPosteriors(data, normalized=validate)
        return SeparatePosteriors(data, normalized=validate)
    except ValidationError as exc:
        raise FormatError(f"{path}: {exc}") from None


def write_posterior_file(post, path) -> None:
    Path(path).write_bytes(posteriors_to_bytes(post))


def read_posterior_file(path, validate=True):
    return posteriors_from_bytes(Path(path).read_bytes(), path, validate)


def quantize(post):
    """Round a tensor through the f32 file representation."""
    return posteriors_from_bytes(posteriors_to_bytes(post), validate=post.normalized)
