"""Dataset ingestion: CIFAR binary batches, image folders, synthetic data."""

from __future__ import annotations

import os
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import netpbm
from .core import STREAM_MISC, substream
from .errors import CorruptionError, EmptyInputError, FormatError, ParameterError, ShapeError

CIFAR_SIDE = 32
CIFAR_PLANE = CIFAR_SIDE * CIFAR_SIDE
CIFAR_LAYOUT = {
    # variant: (label bytes, fine-label offset, num classes, dir name, train files, test files)
    "cifar10": (1, 0, 10, "cifar-10-batches-bin",
                [f"data_batch_{k}.bin" for k in range(1, 6)], ["test_batch.bin"]),
    "cifar100": (2, 1, 100, "cifar-100-binary", ["train.bin"], ["test.bin"]),
}


@dataclass
class Dataset:
    """Images ``(N, H, W, C)`` as float32 in [0, 1] with integer labels."""

    images: np.ndarray
    labels: np.ndarray
    num_classes: int
    split: str = "train"
    class_names: list[str] = field(default_factory=list)

    def __post_init__(self):
        self.images = np.asarray(self.images, dtype=np.float32)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.images.ndim != 4:
            raise ShapeError(f"images must be (N, H, W, C), got {self.images.shape}")
        if len(self.images) != len(self.labels):
            raise ShapeError(f"{len(self.images)} images but {len(self.labels)} labels")
        if self.labels.size and (self.labels.min() < 0 or self.labels.max() >= self.num_classes):
            raise CorruptionError(f"labels must lie in [0, {self.num_classes})")
        if self.split not in ("train", "test"):
            raise ParameterError(f"split must be 'train' or 'test', got {self.split!r}")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def shape(self) -> tuple[int, int, int]:
        return tuple(self.images.shape[1:])

    def subset(self, n: int) -> "Dataset":
        """The first ``n`` samples."""
        return Dataset(self.images[:n], self.labels[:n], self.num_classes, self.split,
                       list(self.class_names))


# ---------------------------------------------------------------------------
# CIFAR
# ---------------------------------------------------------------------------


def parse_cifar_bytes(data: bytes, variant: str, name: str = "<bytes>") -> tuple[np.ndarray, np.ndarray]:
    """Decode raw CIFAR records into ``(uint8 images (N,32,32,3), labels)``."""
    if variant not in CIFAR_LAYOUT:
        raise ParameterError(f"variant must be one of {sorted(CIFAR_LAYOUT)}, got {variant!r}")
    n_label, fine, k, *_ = CIFAR_LAYOUT[variant]
    record = n_label + 3 * CIFAR_PLANE
    full, extra = divmod(len(data), record)
    if extra:
        raise FormatError(
            f"{name}: truncated record at byte offset {full * record} "
            f"({extra} of {record} bytes present)"
        )
    rows = np.frombuffer(data, dtype=np.uint8).reshape(full, record)
    labels = rows[:, fine].astype(np.int64)
    bad = np.flatnonzero(labels >= k)
    if bad.size:
        r = int(bad[0])
        raise CorruptionError(
            f"{name}: record {r} (byte offset {r * record + fine}) has label {labels[r]} >= {k}"
        )
    planes = rows[:, n_label:].reshape(full, 3, CIFAR_SIDE, CIFAR_SIDE)
    return planes.transpose(0, 2, 3, 1), labels


def _cifar_files(path: Path, variant: str, split: str) -> list[Path]:
    *_, dirname, train_files, test_files = CIFAR_LAYOUT[variant]
    if path.is_file():
        return [path]
    names = train_files if split == "train" else test_files
    for root in (path, path / dirname):
        files = [root / f for f in names]
        if all(f.is_file() for f in files):
            return files
    raise FileNotFoundError(f"no {variant} {split} batches ({', '.join(names)}) under {path}")


def read_cifar(path: str | os.PathLike, variant: str = "cifar10", split: str = "train") -> Dataset:
    """Read CIFAR-10/100 binary batches.

    ``path`` may be a single batch file or a directory holding the standard
    files (directly or inside ``cifar-10-batches-bin`` / ``cifar-100-binary``).
    CIFAR-100 coarse labels are dropped; fine labels index the 100 classes.
    """
    if variant not in CIFAR_LAYOUT:
        raise ParameterError(f"variant must be one of {sorted(CIFAR_LAYOUT)}, got {variant!r}")
    if split not in ("train", "test"):
        raise ParameterError(f"split must be 'train' or 'test', got {split!r}")
    images, labels = [], []
    for f in _cifar_files(Path(path), variant, split):
        img, lab = parse_cifar_bytes(f.read_bytes(), variant, str(f))
        images.append(img)
        labels.append(lab)
    raw = np.concatenate(images)
    out = np.empty(raw.shape, dtype=np.float32)
    np.divide(raw, np.float32(255.0), out=out, dtype=np.float32)
    return Dataset(out, np.concatenate(labels), CIFAR_LAYOUT[variant][2], split)


# ---------------------------------------------------------------------------
# image folders
# ---------------------------------------------------------------------------

NETPBM_SUFFIXES = (".ppm", ".pgm")


def _png_reader():
    try:
        from PIL import Image
    except ImportError:  # pragma: no cover - Pillow is an optional extra
        return None

    def read_png(p: Path) -> np.ndarray:
        with Image.open(p) as im:
            arr = np.asarray(im.convert("L" if im.mode in ("L", "1", "I", "I;16") else "RGB"))
        if arr.ndim == 2:
            arr = arr[:, :, None]
        return arr.astype(np.float64) / 255.0

    return read_png


def read_image_dir(path: str | os.PathLike, split: str = "train", png: bool = True) -> Dataset:
    """Read ``path/<class>/*.{ppm,pgm[,png]}``; sorted class names give the indices."""
    root = Path(path)
    if not root.is_dir():
        raise FileNotFoundError(f"not a directory: {root}")
    readers = {s: netpbm.read for s in NETPBM_SUFFIXES}
    png_reader = _png_reader() if png else None
    if png_reader is not None:
        readers[".png"] = png_reader

    classes = sorted(p.name for p in root.iterdir() if p.is_dir())
    files: list[tuple[Path, int]] = []
    for k, name in enumerate(classes):
        for f in sorted((root / name).iterdir()):
            if f.is_file() and f.suffix.lower() in readers:
                files.append((f, k))
    if not files:
        raise EmptyInputError(f"no images found under {root}")

    images = []
    for f, _ in files:
        try:
            images.append(readers[f.suffix.lower()](f))
        except (OSError, FormatError) as exc:
            raise FormatError(f"unreadable image {f}: {exc}") from exc
    shapes: dict[tuple, list[str]] = {}
    for (f, _), img in zip(files, images):
        shapes.setdefault(img.shape, []).append(str(f))
    if len(shapes) > 1:
        detail = "; ".join(f"{s}: {', '.join(fs)}" for s, fs in shapes.items())
        raise ShapeError(f"images under {root} have mixed shapes: {detail}")
    return Dataset(np.stack(images), [k for _, k in files], len(classes), split, classes)


def write_image_dir(ds: Dataset, path: str | os.PathLike) -> None:
    """Write a dataset as ``path/<class>/<index>.ppm|pgm`` (inverse of :func:`read_image_dir`)."""
    root = Path(path)
    names = ds.class_names or [f"class_{k:03d}" for k in range(ds.num_classes)]
    suffix = ".ppm" if ds.shape[2] == 3 else ".pgm"
    for name in names:
        (root / name).mkdir(parents=True, exist_ok=True)
    for n, (img, k) in enumerate(zip(ds.images, ds.labels)):
        netpbm.write(root / names[k] / f"{n:06d}{suffix}", img)


# ---------------------------------------------------------------------------
# synthetic data
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthSpec:
    n: int = 512
    h: int = 16
    w: int = 16
    c: int = 3
    k: int = 2
    pattern: str = "stripes"
    label_noise: float = 0.0
    noise: float = 0.1

    def __post_init__(self):
        for name in ("n", "h", "w", "k"):
            if getattr(self, name) < 1:
                raise ParameterError(f"{name} must be positive")
        if self.c not in (1, 3):
            raise ParameterError(f"c must be 1 or 3, got {self.c}")
        if self.pattern not in ("stripes", "solid"):
            raise ParameterError(f"pattern must be 'stripes' or 'solid', got {self.pattern!r}")
        if not 0.0 <= self.label_noise <= 1.0:
            raise ParameterError("label_noise must lie in [0, 1]")
        if self.noise < 0:
            raise ParameterError("noise must be >= 0")


def class_colors(k: int, c: int) -> np.ndarray:
    """``(k, c)`` base intensities; neighbouring classes differ by 0.8/(k-1) per channel."""
    if k == 1:
        return np.full((1, c), 0.5)
    idx = (np.arange(k)[:, None] + np.arange(c)[None, :]) % k
    return 0.1 + 0.8 * idx / (k - 1)


def synth_dataset(spec: SynthSpec | dict, seed: int = 0, split: str = "train") -> Dataset:
    """Deterministic class-patterned images; labels follow ``i % k`` before noise.

    Each class has its own constant colour and, with ``pattern='stripes'``, a
    vertical sinusoid whose frequency is ``class + 1`` cycles per width. Every
    sample gets a random stripe phase, brightness offset and pixel noise.
    With ``label_noise > 0`` that fraction of labels (in expectation) is moved
    to a different, uniformly chosen class.
    """
    if isinstance(spec, dict):
        spec = SynthSpec(**spec)
    rng = substream(seed, STREAM_MISC, 1 if split == "test" else 0)
    labels = np.arange(spec.n) % spec.k
    colors = class_colors(spec.k, spec.c)
    img = np.broadcast_to(colors[labels][:, None, None, :], (spec.n, spec.h, spec.w, spec.c)).copy()
    if spec.pattern == "stripes":
        cols = np.arange(spec.w) / spec.w
        phase = rng.uniform(0.0, 2 * np.pi, size=spec.n)
        freq = labels + 1
        stripes = 0.1 * np.sin(2 * np.pi * freq[:, None] * cols[None, :] + phase[:, None])
        img += stripes[:, None, :, None]
    img += rng.uniform(-0.05, 0.05, size=spec.n)[:, None, None, None]
    img += spec.noise * rng.standard_normal(img.shape)
    np.clip(img, 0.0, 1.0, out=img)

    noisy = labels.copy()
    if spec.label_noise > 0 and spec.k > 1:
        flip = rng.random(spec.n) < spec.label_noise
        shift = rng.integers(1, spec.k, size=spec.n)
        noisy[flip] = (labels[flip] + shift[flip]) % spec.k
    return Dataset(img, noisy, spec.k, split, [f"class_{k:03d}" for k in range(spec.k)])
