"""Unified mixing-policy interface.

Every policy maps a pair ``(x_i, x_j)`` and a ratio ``lam`` to a mixed image
and labels it with ``mix_labels_linear(y_i, y_j, lambda_effective)``; cutting
policies use the realised mask mean as ``lambda_effective``.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Any, Mapping, Optional, Sequence

import numpy as np

from . import masks
from .core import (
    STREAM_PAIR,
    STREAM_PAIRS,
    MixResult,
    PairIndex,
    SeedLike,
    check_image,
    check_lambda,
    corrected_lambda,
    make_pairs,
    mix_labels_linear,
    resolve_seed,
    sample_lambda,
    substream,
)
from .errors import ConfigError, EmptyInputError, ParameterError, ShapeError
from .puzzlemix import puzzle_mix
from .saliency import DETECTORS, normalize_map, saliency_map

POLICIES = (
    "vanilla",
    "mixup",
    "cutmix",
    "manifoldmix",
    "smoothmix",
    "gridmix",
    "resizemix",
    "fmix",
    "saliencymix",
    "guidedcut",
    "puzzlemix",
)

MASK_POLICIES = frozenset(
    {"cutmix", "smoothmix", "gridmix", "resizemix", "fmix", "saliencymix", "guidedcut", "puzzlemix"}
)

# key -> (type, default) for each policy
PARAM_SCHEMA: dict[str, dict[str, tuple[type, Any]]] = {
    "vanilla": {},
    "mixup": {},
    "cutmix": {},
    "manifoldmix": {"layer": (int, 1)},
    "smoothmix": {},
    "gridmix": {"n_cells": (int, 4)},
    "resizemix": {"tau_min": (float, 0.1), "tau_max": (float, 0.8)},
    "fmix": {"decay": (float, 3.0)},
    "saliencymix": {"saliency": (str, "sobel")},
    "guidedcut": {},
    "puzzlemix": {"blocks": (int, 4), "max_shift": (int, 1), "saliency": (str, "sobel")},
}


def _coerce(kind: type, key: str, value: Any) -> Any:
    try:
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        return kind(value)
    except (TypeError, ValueError):
        raise ConfigError(f"parameter {key!r} expects {kind.__name__}, got {value!r}") from None


@dataclass(frozen=True)
class PolicyConfig:
    """Policy name, Beta concentration and policy-specific parameters."""

    policy: str
    alpha: float = 1.0
    params: Mapping[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.policy not in PARAM_SCHEMA:
            raise ConfigError(f"unknown policy {self.policy!r}; choose from {', '.join(POLICIES)}")
        try:
            alpha = float(self.alpha)
        except (TypeError, ValueError):
            raise ConfigError(f"alpha must be a number, got {self.alpha!r}") from None
        if not (alpha > 0 and np.isfinite(alpha)):
            raise ConfigError(f"alpha must be positive, got {self.alpha!r}")
        schema = PARAM_SCHEMA[self.policy]
        unknown = sorted(set(self.params) - set(schema))
        if unknown:
            raise ConfigError(f"policy {self.policy!r} does not accept parameters {unknown}")
        params = {k: _coerce(schema[k][0], k, v) for k, v in self.params.items()}
        object.__setattr__(self, "alpha", alpha)
        object.__setattr__(self, "params", params)
        self._validate()

    def _validate(self) -> None:
        p = self.resolved()
        if "saliency" in p and p["saliency"] not in DETECTORS:
            raise ConfigError(f"unknown saliency detector {p['saliency']!r}")
        if self.policy == "resizemix" and not 0.0 < p["tau_min"] <= p["tau_max"] < 1.0:
            raise ConfigError("resizemix needs 0 < tau_min <= tau_max < 1")
        if self.policy == "fmix" and not p["decay"] > 0:
            raise ConfigError("fmix decay must be positive")
        for key in ("n_cells", "blocks"):
            if key in p and p[key] < 1:
                raise ConfigError(f"{key} must be >= 1")
        if p.get("max_shift", 0) < 0:
            raise ConfigError("max_shift must be >= 0")
        if self.policy == "manifoldmix" and p["layer"] not in (0, 1):
            raise ConfigError("manifoldmix layer must be 0 (input) or 1 (hidden)")

    def __hash__(self) -> int:
        return hash(self.canonical())

    def resolved(self) -> dict[str, Any]:
        """Parameters with defaults filled in."""
        out = {k: default for k, (_, default) in PARAM_SCHEMA[self.policy].items()}
        out.update(self.params)
        return out

    def canonical(self) -> str:
        lines = [f"policy={self.policy}", f"alpha={self.alpha!r}"]
        lines += [f"param.{k}={v}" for k, v in sorted(self.resolved().items())]
        return "\n".join(lines) + "\n"


# ---------------------------------------------------------------------------
# pair-level operations
# ---------------------------------------------------------------------------


def _same_shape(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape != b.shape:
        raise ShapeError(f"shapes differ: {a.shape} vs {b.shape}")


def mixup_pair(x_i: np.ndarray, x_j: np.ndarray, lam: float) -> np.ndarray:
    x_i = np.asarray(x_i, dtype=np.float64)
    x_j = np.asarray(x_j, dtype=np.float64)
    _same_shape(x_i, x_j)
    lam = check_lambda(lam)
    out = lam * x_i + (1.0 - lam) * x_j
    return np.clip(np.where(x_i == x_j, x_i, out), 0.0, 1.0)


def manifold_mix(f_i: np.ndarray, f_j: np.ndarray, lam: float) -> np.ndarray:
    """Elementwise interpolation of feature tensors of any rank."""
    f_i = np.asarray(f_i, dtype=np.float64)
    f_j = np.asarray(f_j, dtype=np.float64)
    _same_shape(f_i, f_j)
    lam = check_lambda(lam)
    out = lam * f_i + (1.0 - lam) * f_j
    return np.where(f_i == f_j, f_i, out)


def _default_labels(y_i, y_j) -> tuple[np.ndarray, np.ndarray]:
    # Without labels the result carries [w_i, w_j] as a two-class vector.
    if y_i is None:
        y_i = np.array([1.0, 0.0])
    if y_j is None:
        y_j = np.array([0.0, 1.0])
    return np.asarray(y_i, dtype=np.float64), np.asarray(y_j, dtype=np.float64)


def _masked_result(image, mask, lam_nominal, y_i, y_j, pair=None) -> MixResult:
    lam_eff = corrected_lambda(mask)
    return MixResult(
        image=image,
        label=mix_labels_linear(y_i, y_j, lam_eff),
        lambda_nominal=float(lam_nominal),
        lambda_effective=lam_eff,
        mask=mask,
        pair=pair,
    )


def guided_cut(
    x_i: np.ndarray,
    x_j: np.ndarray,
    weight: np.ndarray,
    lam: float,
    rng: Optional[np.random.Generator] = None,
    y_i=None,
    y_j=None,
) -> MixResult:
    """Cut the most important region of the donor ``x_j`` into ``x_i``.

    ``weight`` is an importance map over the donor (a saliency map, or an
    externally supplied attention map). The CutMix-sized rectangle is centered
    on its first maximum in row-major order, clipped, and pasted at the same
    coordinates of ``x_i``. ``rng`` is unused; placement is deterministic.
    """
    x_i = check_image(x_i, "x_i")
    x_j = check_image(x_j, "x_j")
    _same_shape(x_i, x_j)
    weight = np.asarray(weight, dtype=np.float64)
    h, w = x_i.shape[:2]
    if weight.shape != (h, w):
        raise ShapeError(f"weight map {weight.shape} does not match image {(h, w)}")
    lam = check_lambda(lam)
    cy, cx = np.unravel_index(int(np.argmax(weight)), weight.shape)
    cut_h, cut_w = masks.cut_sides(h, w, lam)
    rect = masks.place_rect(h, w, cut_h, cut_w, int(cy), int(cx))
    mask = masks.rect_to_mask(h, w, rect)
    y_i, y_j = _default_labels(y_i, y_j)
    return _masked_result(masks.apply_mask(x_i, x_j, mask), mask, lam, y_i, y_j)


def bilinear_resize(x: np.ndarray, out_h: int, out_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel centers and edge clamping."""
    x = np.asarray(x, dtype=np.float64)
    h, w = x.shape[:2]

    def axis_weights(n_in: int, n_out: int):
        src = (np.arange(n_out) + 0.5) * (n_in / n_out) - 0.5
        src = np.clip(src, 0.0, n_in - 1)
        lo = np.floor(src).astype(int)
        hi = np.minimum(lo + 1, n_in - 1)
        return lo, hi, src - lo

    y0, y1, wy = axis_weights(h, out_h)
    x0, x1, wx = axis_weights(w, out_w)
    rows = x[y0] * (1.0 - wy)[:, None, None] + x[y1] * wy[:, None, None]
    return rows[:, x0] * (1.0 - wx)[None, :, None] + rows[:, x1] * wx[None, :, None]


def resizemix_pair(
    x_i: np.ndarray,
    x_j: np.ndarray,
    rng: np.random.Generator,
    tau_min: float = 0.1,
    tau_max: float = 0.8,
    lam_nominal: float = float("nan"),
    y_i=None,
    y_j=None,
) -> MixResult:
    """Paste a shrunken copy of ``x_j`` into ``x_i``.

    The scale ``tau`` is drawn uniformly from ``[tau_min, tau_max]`` and alone
    sets the pasted area; ``lam_nominal`` is only recorded.
    """
    x_i = check_image(x_i, "x_i")
    x_j = check_image(x_j, "x_j")
    _same_shape(x_i, x_j)
    if not 0.0 < tau_min <= tau_max < 1.0:
        raise ParameterError(f"need 0 < tau_min <= tau_max < 1, got {tau_min}, {tau_max}")
    h, w = x_i.shape[:2]
    tau = float(rng.uniform(tau_min, tau_max))
    mask, rect = masks.resize_paste_mask(h, w, tau, rng)
    y1, y2, x1, x2 = rect.bounds(h, w)
    out = x_i.copy()
    out[y1:y2, x1:x2] = np.clip(bilinear_resize(x_j, y2 - y1, x2 - x1), 0.0, 1.0)
    y_i, y_j = _default_labels(y_i, y_j)
    return _masked_result(out, mask, lam_nominal, y_i, y_j)


# ---------------------------------------------------------------------------
# batch driver
# ---------------------------------------------------------------------------


def _mix_one(
    cfg: PolicyConfig,
    p: dict[str, Any],
    x_i: np.ndarray,
    x_j: np.ndarray,
    y_i: np.ndarray,
    y_j: np.ndarray,
    lam: float,
    rng: np.random.Generator,
    weight: Optional[np.ndarray],
) -> MixResult:
    h, w = x_i.shape[:2]
    name = cfg.policy
    if name == "mixup":
        return MixResult(mixup_pair(x_i, x_j, lam), mix_labels_linear(y_i, y_j, lam), lam, lam)
    if name == "manifoldmix":
        image = manifold_mix(x_i, x_j, lam) if p["layer"] == 0 else x_i
        return MixResult(image, mix_labels_linear(y_i, y_j, lam), lam, lam)
    if name == "resizemix":
        return resizemix_pair(x_i, x_j, rng, p["tau_min"], p["tau_max"], lam, y_i, y_j)
    if name == "saliencymix":
        return guided_cut(x_i, x_j, saliency_map(x_j, p["saliency"]), lam, rng, y_i, y_j)
    if name == "guidedcut":
        return guided_cut(x_i, x_j, weight, lam, rng, y_i, y_j)
    if name == "puzzlemix":
        image, mask, _ = puzzle_mix(x_i, x_j, lam, rng, p["blocks"], p["max_shift"], p["saliency"])
        return _masked_result(image, mask, lam, y_i, y_j)

    if name == "cutmix":
        mask, _ = masks.rect_mask(h, w, lam, rng)
    elif name == "smoothmix":
        mask = masks.smooth_mask(h, w, lam, rng)
    elif name == "gridmix":
        mask = masks.grid_mask(h, w, p["n_cells"], lam, rng)
    elif name == "fmix":
        mask = masks.fourier_mask(h, w, lam, rng, decay=p["decay"])
    else:  # pragma: no cover - guarded by PolicyConfig
        raise ConfigError(f"unhandled policy {name!r}")
    return _masked_result(masks.apply_mask(x_i, x_j, mask), mask, lam, y_i, y_j)


def apply_policy(
    cfg: PolicyConfig,
    batch: Sequence[np.ndarray],
    labels: Sequence[np.ndarray],
    rng: SeedLike,
    *,
    pairs: Optional[Sequence[PairIndex]] = None,
    lam: Optional[float] = None,
    weight_maps: Optional[Sequence[np.ndarray]] = None,
    workers: int = 1,
) -> list[MixResult]:
    """Mix a batch according to ``cfg``.

    Args:
        cfg: the policy configuration.
        batch: images of identical shape ``(H, W, C)``.
        labels: one probability vector per image.
        rng: master seed, or a generator from which one seed is drawn. Pair
            ``k`` always uses substream ``k`` of that seed, so results do not
            depend on ``workers``.
        pairs: explicit pairing; defaults to :func:`make_pairs`.
        lam: force this ratio instead of sampling Beta(alpha, alpha).
        weight_maps: per-image importance maps, required by ``guidedcut``;
            the map of the donor ``x_j`` steers each cut.
        workers: thread count for pair-parallel mixing.

    Returns:
        One :class:`MixResult` per pair, in pair order.
    """
    if not isinstance(cfg, PolicyConfig):
        raise ConfigError(f"expected PolicyConfig, got {type(cfg).__name__}")
    n = len(batch)
    if n == 0:
        raise EmptyInputError("empty batch")
    if len(labels) != n:
        raise ShapeError(f"{n} images but {len(labels)} labels")
    images = [check_image(x, f"batch[{k}]") for k, x in enumerate(batch)]
    ys = [np.asarray(y, dtype=np.float64) for y in labels]
    if any(x.shape != images[0].shape for x in images):
        raise ShapeError(f"batch mixes image shapes {sorted({x.shape for x in images})}")
    if any(y.shape != ys[0].shape for y in ys):
        raise ShapeError("labels have different lengths")
    if lam is not None:
        lam = check_lambda(lam)

    if cfg.policy == "vanilla":
        return [
            MixResult(images[k], ys[k], 1.0, 1.0, None, PairIndex(k, k)) for k in range(n)
        ]
    if cfg.policy == "guidedcut":
        if weight_maps is None or len(weight_maps) != n:
            raise ConfigError("guidedcut needs one weight map per batch image")
        weight_maps = [normalize_map(m) for m in weight_maps]

    seed = resolve_seed(rng)
    if pairs is None:
        pairs = make_pairs(n, substream(seed, STREAM_PAIRS))
    else:
        pairs = [PairIndex(int(p.i), int(p.j)) for p in pairs]
        if any(not (0 <= p.i < n and 0 <= p.j < n) for p in pairs):
            raise ShapeError("pair index out of range")
    params = cfg.resolved()

    def run(ordinal: int) -> MixResult:
        pair = pairs[ordinal]
        g = substream(seed, STREAM_PAIR, ordinal)
        ratio = sample_lambda(cfg.alpha, g).lam if lam is None else lam
        weight = weight_maps[pair.j] if weight_maps is not None else None
        res = _mix_one(
            cfg, params, images[pair.i], images[pair.j], ys[pair.i], ys[pair.j], ratio, g, weight
        )
        return MixResult(
            res.image, res.label, res.lambda_nominal, res.lambda_effective, res.mask, pair
        )

    ordinals = range(len(pairs))
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(run, ordinals))
    return [run(k) for k in ordinals]

