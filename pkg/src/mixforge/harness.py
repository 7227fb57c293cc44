"""Tiny two-layer classifier, SGD training on mixed batches, and the benchmark runner."""

from __future__ import annotations

import csv
import io
import logging
import math
import statistics
import time
from dataclasses import dataclass, field, replace
from functools import lru_cache
from pathlib import Path
from typing import Optional, Sequence

import numpy as np

from . import objective
from .core import (
    STREAM_FLIP,
    STREAM_INIT,
    STREAM_SHUFFLE,
    derive_seed,
    substream,
)
from .data import Dataset, SynthSpec, read_cifar, read_image_dir, synth_dataset
from .errors import ConfigError, EmptyInputError, TrainingDiverged
from .policies import PolicyConfig, apply_policy

log = logging.getLogger(__name__)

ALPHA_GRID = (0.1, 0.2, 0.5, 1.0, 2.0, 4.0)
HIST_BINS = 10
_MIX_KEY = 7


# ---------------------------------------------------------------------------
# model
# ---------------------------------------------------------------------------


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


class TinyModel:
    """Flattened pixels -> ReLU hidden layer -> softmax.

    All parameters live in one flat vector ``theta``; ``w1``, ``b1``, ``w2``
    and ``b2`` are views into it. The hidden activations are the ManifoldMix
    hook: pass ``mix=(partner, lam)`` to blend row ``r`` with row
    ``partner[r]`` using weight ``lam[r]`` before the output layer.
    """

    def __init__(self, n_in: int, n_classes: int, hidden: int = 256, seed: int = 0):
        self.n_in, self.hidden, self.n_classes = n_in, hidden, n_classes
        sizes = [n_in * hidden, hidden, hidden * n_classes, n_classes]
        self.theta = np.zeros(sum(sizes))
        self._offsets = np.cumsum([0] + sizes)
        rng = substream(seed, STREAM_INIT)
        self.w1[...] = rng.standard_normal(self.w1.shape) * math.sqrt(2.0 / n_in)
        self.w2[...] = rng.standard_normal(self.w2.shape) * math.sqrt(1.0 / hidden)

    def _view(self, k: int, shape) -> np.ndarray:
        return self.theta[self._offsets[k] : self._offsets[k + 1]].reshape(shape)

    @property
    def w1(self):
        return self._view(0, (self.n_in, self.hidden))

    @property
    def b1(self):
        return self._view(1, (self.hidden,))

    @property
    def w2(self):
        return self._view(2, (self.hidden, self.n_classes))

    @property
    def b2(self):
        return self._view(3, (self.n_classes,))

    def forward(self, x: np.ndarray, mix=None):
        pre = x @ self.w1 + self.b1
        h = np.maximum(pre, 0.0)
        if mix is not None:
            partner, lam = mix
            lam = np.asarray(lam, dtype=np.float64)[:, None]
            hm = lam * h + (1.0 - lam) * h[partner]
        else:
            hm = h
        probs = softmax(hm @ self.w2 + self.b2)
        return probs, (x, pre, hm)

    def predict(self, x: np.ndarray, batch: int = 1024) -> np.ndarray:
        return np.concatenate(
            [self.forward(x[k : k + batch])[0] for k in range(0, len(x), batch)]
        )

    def loss_and_grad(self, x, y_i, y_j, lam, mix=None) -> tuple[float, np.ndarray]:
        """Batch-mean mixup cross-entropy and its gradient w.r.t. ``theta``.

        With one-hot (or any normalised) labels the logit gradient of
        ``lam CE(p, y_i) + (1 - lam) CE(p, y_j)`` is ``p - (lam y_i + (1 - lam) y_j)``.
        """
        lam = np.asarray(lam, dtype=np.float64)
        probs, (x, pre, hm) = self.forward(x, mix)
        loss = float(np.mean(objective.mixup_cross_entropy(probs, y_i, y_j, lam)))
        n = len(x)
        target = lam[:, None] * y_i + (1.0 - lam[:, None]) * y_j
        dlogits = (probs - target) / n
        grad = np.empty_like(self.theta)
        g = lambda k, shape: grad[self._offsets[k] : self._offsets[k + 1]].reshape(shape)  # noqa: E731
        g(2, self.w2.shape)[...] = hm.T @ dlogits
        g(3, self.b2.shape)[...] = dlogits.sum(axis=0)
        dhm = dlogits @ self.w2.T
        if mix is not None:
            partner, mlam = mix
            mlam = np.asarray(mlam, dtype=np.float64)[:, None]
            dh = mlam * dhm
            np.add.at(dh, partner, (1.0 - mlam) * dhm)
        else:
            dh = dhm
        dpre = dh * (pre > 0)
        g(0, self.w1.shape)[...] = x.T @ dpre
        g(1, self.b1.shape)[...] = dpre.sum(axis=0)
        return loss, grad

    def loss_at(self, theta, x, y_i, y_j, lam, mix=None) -> float:
        saved = self.theta.copy()
        self.theta[...] = theta
        try:
            probs, _ = self.forward(x, mix)
            return float(np.mean(objective.mixup_cross_entropy(probs, y_i, y_j, lam)))
        finally:
            self.theta[...] = saved


# ---------------------------------------------------------------------------
# dataset references
# ---------------------------------------------------------------------------


def _parse_kv(text: str) -> dict[str, str]:
    out = {}
    for part in filter(None, (p.strip() for p in text.split(","))):
        if "=" not in part:
            raise ConfigError(f"expected key=value in dataset options, got {part!r}")
        k, v = part.split("=", 1)
        out[k.strip()] = v.strip()
    return out


_SYNTH_KEYS = {"n": int, "h": int, "w": int, "c": int, "k": int, "pattern": str,
               "noise": float, "label_noise": float, "test_n": int, "seed": int}


@lru_cache(maxsize=16)
def load_dataset(ref: str) -> tuple[Dataset, Dataset]:
    """Resolve a dataset reference to ``(train, test)``.

    References:
        ``synth[:key=value,...]`` with keys ``n, h, w, c, k, pattern, noise,
        label_noise, test_n, seed`` (the test split is always label-clean);
        ``cifar10:<dir>``, ``cifar100:<dir>``; ``dir:<root>`` with ``train/``
        and ``test/`` image folders.
    """
    kind, _, rest = ref.partition(":")
    if kind == "synth":
        opts = _parse_kv(rest)
        bad = sorted(set(opts) - set(_SYNTH_KEYS))
        if bad:
            raise ConfigError(f"unknown synth options {bad}")
        vals = {k: _SYNTH_KEYS[k](v) for k, v in opts.items()}
        seed = vals.pop("seed", 0)
        test_n = vals.pop("test_n", 1024)
        spec = SynthSpec(**vals)
        train = synth_dataset(spec, seed, "train")
        test = synth_dataset(replace(spec, n=test_n, label_noise=0.0), seed, "test")
        return train, test
    if kind in ("cifar10", "cifar100"):
        return read_cifar(rest, kind, "train"), read_cifar(rest, kind, "test")
    if kind == "dir":
        root = Path(rest)
        return read_image_dir(root / "train", "train"), read_image_dir(root / "test", "test")
    raise ConfigError(f"unknown dataset reference {ref!r}")


# ---------------------------------------------------------------------------
# training
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class TrainConfig:
    dataset: str = "synth"
    policy: PolicyConfig = field(default_factory=lambda: PolicyConfig("vanilla"))
    epochs: int = 30
    batch_size: int = 64
    lr: float = 0.05
    seed: int = 0
    eval_every: int = 1
    hidden: int = 256
    median_last: int = 0
    subset: int = 0
    flip: bool = True

    def __post_init__(self):
        for name in ("epochs", "batch_size", "hidden", "eval_every"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive")
        if not self.lr > 0:
            raise ConfigError("lr must be positive")
        if self.median_last < 0 or self.subset < 0:
            raise ConfigError("median_last and subset must be >= 0")


@dataclass
class RunReport:
    train_loss: list[float]
    train_top1: float
    test_top1: float
    ece: float
    wall_seconds: float
    lambda_hist: list[int]
    lambda_mean: float
    test_history: list[tuple[int, float]] = field(default_factory=list)

    def metrics(self) -> dict:
        """Everything except wall-clock time; bit-reproducible for a fixed config."""
        return {
            "train_loss": list(self.train_loss),
            "train_top1": self.train_top1,
            "test_top1": self.test_top1,
            "ece": self.ece,
            "lambda_hist": list(self.lambda_hist),
            "lambda_mean": self.lambda_mean,
            "test_history": [list(t) for t in self.test_history],
        }


def _flatten(images: np.ndarray) -> np.ndarray:
    return images.reshape(len(images), -1).astype(np.float64)


def evaluate(model: TinyModel, ds: Dataset, bins: int = 15) -> tuple[float, float]:
    probs = model.predict(_flatten(ds.images))
    return objective.top1_accuracy(probs, ds.labels), objective.ece(probs, ds.labels, bins)


def train(cfg: TrainConfig, data: Optional[tuple[Dataset, Dataset]] = None) -> RunReport:
    """Mini-batch SGD on the mixup cross-entropy of policy-mixed batches.

    Every random choice (initialisation, shuffling, flips, mixing) comes from a
    substream of ``cfg.seed``, so a config always yields the same metrics.
    """
    start = time.perf_counter()
    train_ds, test_ds = data if data is not None else load_dataset(cfg.dataset)
    if cfg.subset:
        train_ds = train_ds.subset(cfg.subset)
    if len(train_ds) == 0 or len(test_ds) == 0:
        raise EmptyInputError("training and test sets must be non-empty")
    n = len(train_ds)
    k = train_ds.num_classes
    eye = np.eye(k)
    model = TinyModel(int(np.prod(train_ds.shape)), k, cfg.hidden, cfg.seed)
    manifold = cfg.policy.policy == "manifoldmix" and cfg.policy.resolved()["layer"] == 1

    losses: list[float] = []
    hist = np.zeros(HIST_BINS, dtype=np.int64)
    lam_total, lam_count = 0.0, 0
    history: list[tuple[int, float]] = []
    step = 0
    for epoch in range(cfg.epochs):
        order = substream(cfg.seed, STREAM_SHUFFLE, epoch).permutation(n)
        epoch_loss, seen = 0.0, 0
        for start_idx in range(0, n, cfg.batch_size):
            idx = order[start_idx : start_idx + cfg.batch_size]
            images = train_ds.images[idx].astype(np.float64)
            if cfg.flip:
                flips = substream(cfg.seed, STREAM_FLIP, step).random(len(idx)) < 0.5
                images[flips] = images[flips, :, ::-1]
            labels = eye[train_ds.labels[idx]]
            results = apply_policy(
                cfg.policy, images, labels, derive_seed(cfg.seed, _MIX_KEY, step)
            )
            x = np.stack([r.image for r in results]).reshape(len(idx), -1)
            pi = np.array([r.pair.i for r in results])
            pj = np.array([r.pair.j for r in results])
            lam = np.array([r.lambda_effective for r in results])
            mix = (pj, lam) if manifold else None
            # with manifold mixing the inputs stay unmixed and row r blends with row pj[r]
            with np.errstate(over="ignore", invalid="ignore"):
                # overflow surfaces as TrainingDiverged below
                loss, grad = model.loss_and_grad(x, labels[pi], labels[pj], lam, mix)
            if not math.isfinite(loss) or not np.all(np.isfinite(grad)):
                raise TrainingDiverged(step, loss)
            model.theta -= cfg.lr * grad
            epoch_loss += loss * len(idx)
            seen += len(idx)
            hist += np.bincount(
                np.minimum((lam * HIST_BINS).astype(int), HIST_BINS - 1), minlength=HIST_BINS
            )
            lam_total += float(lam.sum())
            lam_count += lam.size
            step += 1
        losses.append(epoch_loss / seen)
        last = epoch == cfg.epochs - 1
        in_tail = cfg.median_last and epoch >= cfg.epochs - cfg.median_last
        if last or in_tail or (epoch + 1) % cfg.eval_every == 0:
            acc, _ = evaluate(model, test_ds)
            history.append((epoch, acc))
            log.debug("epoch %d loss %.4f test %.4f", epoch, losses[-1], acc)

    train_acc, _ = evaluate(model, train_ds)
    test_acc, test_ece = evaluate(model, test_ds)
    if cfg.median_last:
        tail = [a for e, a in history if e >= cfg.epochs - cfg.median_last]
        test_acc = float(statistics.median(tail))
    return RunReport(
        train_loss=losses,
        train_top1=train_acc,
        test_top1=test_acc,
        ece=test_ece,
        wall_seconds=time.perf_counter() - start,
        lambda_hist=[int(c) for c in hist],
        lambda_mean=lam_total / lam_count,
        test_history=history,
    )


# ---------------------------------------------------------------------------
# benchmark
# ---------------------------------------------------------------------------

BENCH_COLUMNS = ["policy", "alpha", "seed", "train_top1", "test_top1", "gap", "ece",
                 "final_loss", "best_alpha", "error"]


@dataclass
class BenchRow:
    policy: str
    alpha: float
    seed: str
    report: Optional[RunReport] = None
    error: str = ""
    best_alpha: bool = False
    is_mean: bool = False
    values: dict = field(default_factory=dict)

    def cells(self, timings: bool = False) -> dict:
        v = self.values
        row = {
            "policy": self.policy,
            "alpha": f"{self.alpha:g}",
            "seed": self.seed,
            "train_top1": _fmt(v.get("train_top1")),
            "test_top1": _fmt(v.get("test_top1")),
            "gap": _fmt(v.get("gap")),
            "ece": _fmt(v.get("ece")),
            "final_loss": _fmt(v.get("final_loss")),
            "best_alpha": "*" if self.best_alpha else "",
            "error": self.error,
        }
        if timings:
            row["seconds"] = _fmt(v.get("seconds"), 2)
        return row


def _fmt(x, digits: int = 4) -> str:
    return "" if x is None else f"{x:.{digits}f}"


def _row_values(rep: RunReport) -> dict:
    return {
        "train_top1": rep.train_top1,
        "test_top1": rep.test_top1,
        "gap": rep.train_top1 - rep.test_top1,
        "ece": rep.ece,
        "final_loss": rep.train_loss[-1],
        "seconds": rep.wall_seconds,
    }


@dataclass
class BenchTable:
    rows: list[BenchRow]

    def best_alpha(self) -> dict[str, float]:
        return {r.policy: r.alpha for r in self.rows if r.best_alpha}

    def to_csv(self, timings: bool = False) -> str:
        cols = BENCH_COLUMNS + (["seconds"] if timings else [])
        buf = io.StringIO()
        writer = csv.DictWriter(buf, fieldnames=cols, lineterminator="\n")
        writer.writeheader()
        for r in self.rows:
            writer.writerow(r.cells(timings))
        return buf.getvalue()

    def to_text(self, timings: bool = False) -> str:
        cols = BENCH_COLUMNS + (["seconds"] if timings else [])
        cells = [r.cells(timings) for r in self.rows]
        widths = {c: max([len(c)] + [len(row[c]) for row in cells]) for c in cols}
        lines = ["  ".join(c.ljust(widths[c]) for c in cols).rstrip()]
        lines.append("  ".join("-" * widths[c] for c in cols))
        for row in cells:
            lines.append("  ".join(row[c].ljust(widths[c]) for c in cols).rstrip())
        return "\n".join(lines) + "\n"


def bench(
    cfgs: Sequence[TrainConfig], trials: int = 1, aggregate: Optional[bool] = None
) -> BenchTable:
    """Train every config and tabulate the results.

    With ``trials > 1`` each config runs with seeds ``seed, seed+1, ...``.
    With aggregation (default when ``trials > 1``) configs that differ only in
    their seed gain a mean row. Rows are stable-sorted by policy; within each
    policy the alpha with the best test accuracy (mean rows when present) is
    marked. A failing run is recorded in its row and the sweep continues.
    """
    if not cfgs:
        raise EmptyInputError("bench needs at least one config")
    if trials < 1:
        raise ConfigError("trials must be >= 1")
    if aggregate is None:
        aggregate = trials > 1
    runs = [replace(c, seed=c.seed + t) for c in cfgs for t in range(trials)]

    rows: list[BenchRow] = []
    groups: dict[tuple, list[BenchRow]] = {}
    for cfg in runs:
        row = BenchRow(cfg.policy.policy, cfg.policy.alpha, str(cfg.seed))
        try:
            row.report = train(cfg)
            row.values = _row_values(row.report)
        except Exception as exc:  # noqa: BLE001 - recorded per row by contract
            row.error = f"{type(exc).__name__}: {exc}"
            log.warning("bench run %s failed: %s", cfg, exc)
        rows.append(row)
        groups.setdefault(replace(cfg, seed=0), []).append(row)

    if aggregate:
        for key, members in groups.items():
            ok = [m for m in members if not m.error]
            mean = BenchRow(key.policy.policy, key.policy.alpha, "mean", is_mean=True)
            if ok:
                mean.values = {c: float(np.mean([m.values[c] for m in ok])) for c in ok[0].values}
            if len(ok) != len(members):
                mean.error = f"{len(members) - len(ok)} of {len(members)} runs failed"
            rows.append(mean)

    rows.sort(key=lambda r: r.policy)
    scored = [r for r in rows if r.is_mean] if aggregate else rows
    best: dict[str, BenchRow] = {}
    for r in scored:
        if "test_top1" in r.values:
            cur = best.get(r.policy)
            if cur is None or r.values["test_top1"] > cur.values["test_top1"]:
                best[r.policy] = r
    for r in best.values():
        r.best_alpha = True
    return BenchTable(rows)
