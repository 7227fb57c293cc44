"""Core types and primitives: seeded streams, Beta ratios, pairing, label mixing.

Conventions used across the package:

* an image is a float array of shape ``(H, W, C)`` with intensities in ``[0, 1]``;
* a label is a length-``K`` probability vector (one-hot for raw labels);
* a mask is an ``(H, W)`` float array; weight 1 selects the pixel of sample ``i``;
* ``lam`` is always the weight of sample ``i``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np

from .errors import EmptyInputError, ParameterError, ShapeError

SeedLike = Union[int, np.random.Generator]

# Named counter words so that independent consumers never share a stream.
STREAM_PAIRS = 1
STREAM_PAIR = 2
STREAM_SHUFFLE = 3
STREAM_FLIP = 4
STREAM_INIT = 5
STREAM_MISC = 6

_MASK63 = (1 << 63) - 1


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------


def _check_seed(seed: int) -> int:
    if isinstance(seed, (bool, np.bool_)) or not isinstance(seed, (int, np.integer)):
        raise ParameterError(f"seed must be an integer, got {seed!r}")
    if seed < 0:
        raise ParameterError(f"seed must be non-negative, got {seed}")
    return int(seed)


@lru_cache(maxsize=4096)
def _philox_key(seed: int) -> tuple[int, int]:
    state = np.random.SeedSequence(seed).generate_state(2, np.uint64)
    return int(state[0]), int(state[1])


def substream(seed: int, stream: int = 0, ordinal: int = 0) -> np.random.Generator:
    """Return an independent generator for ``(seed, stream, ordinal)``.

    The split is counter based: all substreams share the Philox key derived
    from ``seed`` and differ only in the high counter words, so streams never
    overlap and can be created in any order.
    """
    seed = _check_seed(seed)
    key = np.array(_philox_key(seed), dtype=np.uint64)
    counter = np.array([0, ordinal, stream, 0], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key, counter=counter))


def make_rng(seed: int) -> np.random.Generator:
    return substream(seed, STREAM_MISC, 0)


def derive_seed(seed: int, *keys: int) -> int:
    """Hash ``seed`` and a path of integer keys into a fresh 63-bit seed."""
    seed = _check_seed(seed)
    state = np.random.SeedSequence(seed, spawn_key=tuple(int(k) for k in keys)).generate_state(
        1, np.uint64
    )
    return int(state[0]) & _MASK63


def resolve_seed(seed: SeedLike) -> int:
    """Accept a master seed or a generator (from which one seed is drawn)."""
    if isinstance(seed, np.random.Generator):
        return int(seed.integers(0, _MASK63, dtype=np.int64))
    return _check_seed(seed)


def round_half_up(x: float) -> int:
    """Round to nearest integer, halves away from zero for x >= 0."""
    return int(math.floor(x + 0.5))


# ---------------------------------------------------------------------------
# value types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MixRatio:
    lam: float
    alpha: float

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ParameterError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.alpha > 0:
            raise ParameterError(f"alpha must be positive, got {self.alpha}")

    def __float__(self) -> float:
        return self.lam


@dataclass(frozen=True)
class PairIndex:
    i: int
    j: int


@dataclass(frozen=True)
class MixResult:
    """One mixed sample.

    ``lambda_effective`` is the weight actually carried by sample ``i``: equal
    to ``lambda_nominal`` for interpolation policies and to the mask mean for
    mask-based ones. For ``manifoldmix`` the image is the untouched ``x_i``;
    the blend happens on hidden features inside the model.
    """

    image: np.ndarray
    label: np.ndarray
    lambda_nominal: float
    lambda_effective: float
    mask: Optional[np.ndarray] = None
    pair: Optional[PairIndex] = None


def check_image(x: np.ndarray, name: str = "image") -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 3 or x.shape[2] not in (1, 3) or x.shape[0] < 1 or x.shape[1] < 1:
        raise ShapeError(f"{name} must have shape (H, W, 1|3), got {x.shape}")
    if not np.all(np.isfinite(x)) or x.min() < 0.0 or x.max() > 1.0:
        raise ParameterError(f"{name} intensities must be finite and in [0, 1]")
    return x


def check_lambda(lam: float) -> float:
    lam = float(lam)
    if not 0.0 <= lam <= 1.0:
        raise ParameterError(f"lambda must lie in [0, 1], got {lam}")
    return lam


def one_hot(k: int, num_classes: int) -> np.ndarray:
    if not 0 <= k < num_classes:
        raise ParameterError(f"class {k} out of range for K={num_classes}")
    y = np.zeros(num_classes)
    y[k] = 1.0
    return y


# ---------------------------------------------------------------------------
# Beta(alpha, alpha) sampling
# ---------------------------------------------------------------------------


def _log_gamma_mt(shape: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Log of Gamma(shape, 1) draws by Marsaglia-Tsang; requires shape >= 1."""
    d = shape - 1.0 / 3.0
    c = 1.0 / math.sqrt(9.0 * d)
    if size == 1:
        # scalar path: same draws in the same order, without array overhead
        while True:
            x = rng.standard_normal()
            v = (1.0 + c * x) ** 3
            u = 1.0 - rng.random()
            if v > 0 and math.log(u) < 0.5 * x * x + d - d * v + d * math.log(v):
                return np.array([math.log(d) + math.log(v)])
    return _log_gamma_mt_vec(d, c, rng, size)


def _log_gamma_mt_vec(d: float, c: float, rng: np.random.Generator, size: int) -> np.ndarray:
    out = np.empty(size)
    todo = np.arange(size)
    while todo.size:
        x = rng.standard_normal(todo.size)
        v = (1.0 + c * x) ** 3
        u = 1.0 - rng.random(todo.size)
        with np.errstate(invalid="ignore", divide="ignore"):
            logv = np.log(v)
            ok = (v > 0) & (np.log(u) < 0.5 * x * x + d - d * v + d * logv)
        out[todo[ok]] = math.log(d) + logv[ok]
        todo = todo[~ok]
    return out


def _log_gamma(shape: float, rng: np.random.Generator, size: int) -> np.ndarray:
    if shape >= 1.0:
        return _log_gamma_mt(shape, rng, size)
    # Gamma(a) = Gamma(a + 1) * U^(1/a); kept in log space so tiny draws never underflow.
    boosted = _log_gamma_mt(shape + 1.0, rng, size)
    u = 1.0 - rng.random(size)
    return boosted + np.log(u) / shape


def beta_draws(alpha: float, rng: np.random.Generator, size: int) -> np.ndarray:
    """Vector of ``size`` Beta(alpha, alpha) draws in the open interval (0, 1)."""
    alpha = float(alpha)
    if not (alpha > 0 and math.isfinite(alpha)):
        raise ParameterError(f"alpha must be positive and finite, got {alpha}")
    g1 = _log_gamma(alpha, rng, size)
    g2 = _log_gamma(alpha, rng, size)
    with np.errstate(over="ignore"):
        lam = 1.0 / (1.0 + np.exp(g2 - g1))
    tiny = np.finfo(np.float64).tiny
    return np.clip(lam, tiny, np.nextafter(1.0, 0.0))


def sample_lambda(alpha: float, rng: np.random.Generator) -> MixRatio:
    """Draw one mixing ratio from Beta(alpha, alpha).

    Example:
        >>> r = sample_lambda(1.0, make_rng(0))
        >>> 0.0 < r.lam < 1.0
        True
    """
    return MixRatio(float(beta_draws(alpha, rng, 1)[0]), float(alpha))


# ---------------------------------------------------------------------------
# pairing and label mixing
# ---------------------------------------------------------------------------


def make_pairs(batch_size: int, rng: np.random.Generator) -> list[PairIndex]:
    """Pair every index ``i`` with ``sigma(i)`` for a uniform random permutation."""
    if batch_size < 1:
        raise EmptyInputError("cannot pair an empty batch")
    perm = rng.permutation(batch_size)
    return [PairIndex(i, int(j)) for i, j in enumerate(perm)]


def mix_labels_linear(y_i, y_j, lam: float) -> np.ndarray:
    y_i = np.asarray(y_i, dtype=np.float64)
    y_j = np.asarray(y_j, dtype=np.float64)
    if y_i.shape != y_j.shape:
        raise ShapeError(f"label shapes differ: {y_i.shape} vs {y_j.shape}")
    lam = check_lambda(lam)
    return lam * y_i + (1.0 - lam) * y_j


def corrected_lambda(mask: np.ndarray) -> float:
    """Fraction of the mask that keeps sample ``i`` (the mean weight)."""
    mask = np.asarray(mask, dtype=np.float64)
    if mask.size == 0:
        raise ShapeError("empty mask")
    return float(mask.mean())


def stack_labels(labels: Sequence[np.ndarray]) -> np.ndarray:
    return np.stack([np.asarray(y, dtype=np.float64) for y in labels])
