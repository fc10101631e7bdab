"""Dataset ingestion, amplitude preprocessing, binary tasks, and a synthetic two-domain generator."""

from __future__ import annotations

import csv
import gzip
import struct
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Sequence

import numpy as np

from .circuit import make_rng
from .encoder import AmplitudeTarget
from .qstate import DomainError

IDX_IMAGES = 0x00000803
IDX_LABELS = 0x00000801


class FormatError(ValueError):
    """Malformed input file."""


@dataclass
class RawImageSet:
    images: np.ndarray  # (N, H, W) or (N, H, W, C), values in [0, 255]
    labels: np.ndarray  # (N,) digit labels

    def __len__(self) -> int:
        return len(self.labels)


@dataclass
class DomainDataset:
    samples: np.ndarray  # (N, 2**n) unit-norm rows
    labels: np.ndarray | None
    domain: str = "source"
    task: tuple = ()

    def __post_init__(self):
        self.samples = np.asarray(self.samples, dtype=float)
        if self.samples.ndim != 2:
            raise DomainError("samples must be a 2-D array")
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=int)
            if len(self.labels) != len(self.samples):
                raise DomainError("labels and samples differ in length")
        if self.domain not in ("source", "target"):
            raise DomainError(f"domain must be source or target, got {self.domain!r}")

    def __len__(self) -> int:
        return len(self.samples)

    @property
    def n_qubits(self) -> int:
        return int(self.samples.shape[1]).bit_length() - 1

    def subset(self, idx) -> "DomainDataset":
        idx = np.asarray(idx, dtype=int)
        labels = None if self.labels is None else self.labels[idx]
        return replace(self, samples=self.samples[idx], labels=labels)

    def unlabeled(self) -> "DomainDataset":
        return replace(self, labels=None)


# ---------------------------------------------------------------------------
# file formats
# ---------------------------------------------------------------------------


def _read_bytes(path) -> bytes:
    path = Path(path)
    opener = gzip.open if path.suffix == ".gz" else open
    with opener(path, "rb") as f:
        return f.read()


def _idx_header(buf: bytes, magic: int, ndim: int, what: str) -> tuple[int, ...]:
    if len(buf) < 4:
        raise FormatError(f"{what}: truncated header at byte 0")
    (got,) = struct.unpack(">I", buf[:4])
    if got != magic:
        raise FormatError(f"{what}: bad magic 0x{got:08x} at byte 0 (expected 0x{magic:08x})")
    need = 4 + 4 * ndim
    if len(buf) < need:
        raise FormatError(f"{what}: truncated header at byte {len(buf)}")
    return struct.unpack(">" + "I" * ndim, buf[4:need])


def load_idx(images_path, labels_path) -> RawImageSet:
    """Read an IDX image file (magic 0x803) and label file (magic 0x801)."""
    ib = _read_bytes(images_path)
    count, rows, cols = _idx_header(ib, IDX_IMAGES, 3, "images")
    need = 16 + count * rows * cols
    if len(ib) < need:
        raise FormatError(f"images: truncated at byte {len(ib)}, expected {need} bytes")
    images = np.frombuffer(ib, dtype=np.uint8, count=count * rows * cols, offset=16)
    lb = _read_bytes(labels_path)
    (n_labels,) = _idx_header(lb, IDX_LABELS, 1, "labels")
    if len(lb) < 8 + n_labels:
        raise FormatError(f"labels: truncated at byte {len(lb)}, expected {8 + n_labels} bytes")
    if n_labels != count:
        raise FormatError(f"labels: count {n_labels} at byte 4 does not match {count} images")
    labels = np.frombuffer(lb, dtype=np.uint8, count=n_labels, offset=8)
    return RawImageSet(images.reshape(count, rows, cols).copy(), labels.astype(int))


def write_idx(images_path, labels_path, images: np.ndarray, labels: Sequence[int]) -> None:
    images = np.asarray(images, dtype=np.uint8)
    n, r, c = images.shape
    Path(images_path).write_bytes(struct.pack(">IIII", IDX_IMAGES, n, r, c) + images.tobytes())
    lab = np.asarray(labels, dtype=np.uint8)
    Path(labels_path).write_bytes(struct.pack(">II", IDX_LABELS, len(lab)) + lab.tobytes())


def load_csv(path, width: int, height: int, channels: int = 1) -> RawImageSet:
    """Rows are ``label, pixels...`` with pixels row-major and channel-interleaved."""
    n_pix = width * height * channels
    images, labels = [], []
    with open(path, newline="") as f:
        for lineno, row in enumerate(csv.reader(f), start=1):
            if not row or (len(row) == 1 and not row[0].strip()):
                continue
            if len(row) != 1 + n_pix:
                raise FormatError(f"{path}:{lineno}: expected {1 + n_pix} fields, got {len(row)}")
            try:
                vals = np.array([float(v) for v in row])
            except ValueError as e:
                raise FormatError(f"{path}:{lineno}: non-numeric field ({e})") from None
            pix = vals[1:]
            if np.any(pix < 0) or np.any(pix > 255) or not np.all(np.isfinite(pix)):
                raise FormatError(f"{path}:{lineno}: pixel values must lie in [0, 255]")
            labels.append(int(vals[0]))
            shape = (height, width) if channels == 1 else (height, width, channels)
            images.append(pix.reshape(shape))
    if not images:
        shape = (0, height, width) if channels == 1 else (0, height, width, channels)
        return RawImageSet(np.zeros(shape), np.zeros(0, dtype=int))
    return RawImageSet(np.stack(images), np.array(labels, dtype=int))


def write_csv(path, images: np.ndarray, labels: Sequence[int]) -> None:
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        for img, lab in zip(images, labels):
            w.writerow([int(lab)] + [repr(float(v)) for v in np.asarray(img).reshape(-1)])


# ---------------------------------------------------------------------------
# preprocessing
# ---------------------------------------------------------------------------


def area_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic box-filter weights mapping ``n_in`` samples to ``n_out`` bins."""
    edges = np.linspace(0.0, n_in, n_out + 1)
    w = np.zeros((n_out, n_in))
    for i in range(n_out):
        lo, hi = edges[i], edges[i + 1]
        for j in range(int(np.floor(lo)), int(np.ceil(hi))):
            w[i, j] = min(hi, j + 1) - max(lo, j)
        w[i] /= hi - lo
    return w


def downsample(image: np.ndarray, size: int | tuple[int, int]) -> np.ndarray:
    h_out, w_out = (size, size) if np.isscalar(size) else size
    img = np.asarray(image, dtype=float)
    rows = area_matrix(img.shape[0], h_out)
    cols = area_matrix(img.shape[1], w_out)
    if img.ndim == 2:
        return rows @ img @ cols.T
    return np.einsum("ih,hwc,jw->ijc", rows, img, cols)


def preprocess(raw_image: np.ndarray, target_size: int | tuple[int, int] = 16, channels: int = 1, n_qubits: int | None = None) -> AmplitudeTarget:
    """Box-filter downsample, flatten (channel-planar for colour), zero-pad to ``2**n``, normalise."""
    img = np.asarray(raw_image, dtype=float)
    if channels == 1 and img.ndim == 3 and img.shape[-1] == 1:
        img = img[..., 0]
    if (channels == 1) != (img.ndim == 2):
        raise DomainError(f"image shape {img.shape} does not match channels={channels}")
    small = downsample(img, target_size)
    flat = small.reshape(-1) if channels == 1 else np.moveaxis(small, -1, 0).reshape(-1)
    n = int(np.ceil(np.log2(flat.size))) if n_qubits is None else n_qubits
    if flat.size > 2**n:
        raise DomainError(f"{flat.size} values do not fit {n} qubits")
    padded = np.zeros(2**n)
    padded[: flat.size] = flat
    if not np.any(padded):
        raise DomainError("cannot encode an all-zero image")
    return AmplitudeTarget(padded)


def to_dataset(
    images: np.ndarray,
    labels,
    domain: str = "source",
    target_size: int | tuple[int, int] = 16,
    channels: int = 1,
    n_qubits: int | None = None,
    task: tuple = (),
) -> DomainDataset:
    rows = [preprocess(im, target_size, channels, n_qubits).normalized for im in images]
    return DomainDataset(np.array(rows), None if labels is None else np.asarray(labels), domain, task)


def make_binary_task(
    raw: RawImageSet,
    digit_a: int,
    digit_b: int,
    domain: str = "source",
    target_size: int = 16,
    channels: int = 1,
    n_qubits: int | None = None,
) -> DomainDataset:
    """Keep two digits; the smaller digit is class 0, the larger class 1."""
    if not digit_a < digit_b:
        raise DomainError("digit_a must be smaller than digit_b")
    for d in (digit_a, digit_b):
        if not np.any(raw.labels == d):
            raise DomainError(f"digit {d} absent from the image set")
    keep = np.flatnonzero((raw.labels == digit_a) | (raw.labels == digit_b))
    labels = (raw.labels[keep] == digit_b).astype(int)
    return to_dataset(
        raw.images[keep], labels, domain, target_size, channels, n_qubits, (digit_a, digit_b)
    )


def split(dataset: DomainDataset, n_train: int, n_test: int, seed: int = 0) -> tuple[DomainDataset, DomainDataset]:
    """Disjoint random train/test subsets."""
    if n_train + n_test > len(dataset):
        raise DomainError(f"asked for {n_train + n_test} samples, only {len(dataset)} available")
    perm = make_rng(seed).permutation(len(dataset))
    return dataset.subset(np.sort(perm[:n_train])), dataset.subset(np.sort(perm[n_train : n_train + n_test]))


# ---------------------------------------------------------------------------
# synthetic two-domain task
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SyntheticDomainSpec:
    """Two class templates observed in two domains.

    Source images carry a bright watermark pixel on every class-1 image, a
    shortcut that is absent from the target. Target images are blurred, may be
    rescaled in contrast and may gain a brightness offset. Pixel values are on a
    0..255 scale; per-sample nuisance is a random global gain plus Gaussian
    pixel noise of width ``noise``.
    """

    n_qubits: int = 4
    templates: str = "bars"
    brightness: float = 0.0
    blur: float = 0.8
    contrast: float = 0.3  # target template scale
    marker: float = 255.0  # source-only watermark on class-1 images (bottom-right pixel)
    level: float = 0.3  # source template scale
    noise: float = 20.0
    gain_jitter: float = 0.2
    n_source: int = 200
    n_target: int = 200
    n_target_test: int = 200
    n_source_test: int = 0
    seed: int = 0

    @classmethod
    def from_dict(cls, d: dict) -> "SyntheticDomainSpec":
        return cls(**d)


def image_shape(n_qubits: int) -> tuple[int, int]:
    h = 2 ** (n_qubits // 2)
    return h, 2**n_qubits // h


def make_templates(kind: str, shape: tuple[int, int]) -> np.ndarray:
    h, w = shape
    t = np.zeros((2, h, w))
    if kind == "bars":
        # class 0: bright left half, class 1: bright top half
        t[0, :, : w // 2] = 200.0
        t[1, : h // 2, :] = 200.0
    elif kind == "diagonals":
        for i in range(h):
            t[0, i, (i * w) // h] = 220.0
            t[1, i, w - 1 - (i * w) // h] = 220.0
    else:
        raise DomainError(f"unknown template set {kind!r}")
    return t


def gaussian_blur(img: np.ndarray, sigma: float) -> np.ndarray:
    if sigma <= 0:
        return img.copy()
    out = img
    for axis, n in enumerate(img.shape):
        x = np.arange(n)
        k = np.exp(-0.5 * ((x[:, None] - x[None, :]) / sigma) ** 2)
        k /= k.sum(axis=1, keepdims=True)
        out = np.moveaxis(np.tensordot(k, np.moveaxis(out, axis, 0), axes=(1, 0)), 0, axis)
    return out


def _draw(rng, templates, labels, offset, blur, noise, gain_jitter) -> np.ndarray:
    imgs = []
    for c in labels:
        base = gaussian_blur(templates[c], blur) if blur > 0 else templates[c]
        gain = 1.0 + gain_jitter * rng.uniform(-1.0, 1.0)
        img = gain * base + offset + noise * rng.normal(size=base.shape)
        img = np.clip(img, 0.0, 255.0)
        if not np.any(img):
            img[0, 0] = 1.0
        imgs.append(img)
    return np.array(imgs)


def gen_synthetic_images(spec: SyntheticDomainSpec) -> dict[str, RawImageSet]:
    """Raw pixel sets for each split; deterministic per seed.

    Label order depends only on (seed, train/test role), so with zero shift and
    zero noise the source and target splits coincide exactly.
    """
    shape = image_shape(spec.n_qubits)
    templates = make_templates(spec.templates, shape)
    splits = {
        "source": (spec.n_source, 0, 0),
        "target": (spec.n_target, 1, 0),
        "source_test": (spec.n_source_test, 0, 1),
        "target_test": (spec.n_target_test, 1, 1),
    }
    out = {}
    for name, (n, shifted, role) in splits.items():
        labels = np.arange(n) % 2
        make_rng([spec.seed, 100 + role]).shuffle(labels)
        rng = make_rng([spec.seed, 2 * role + shifted])
        offset = spec.brightness if shifted else 0.0
        blur = spec.blur if shifted else 0.0
        scale = spec.contrast if shifted else spec.level
        tmpl = scale * templates
        if not shifted and spec.marker:
            tmpl[1, -1, -1] = spec.marker
        imgs = _draw(rng, tmpl, labels, offset, blur, spec.noise, spec.gain_jitter)
        out[name] = RawImageSet(imgs.reshape((n,) + shape), labels)
    return out


def gen_synthetic(spec: SyntheticDomainSpec) -> dict[str, DomainDataset]:
    """Labeled source and target splits; strip target labels before training."""
    shape = image_shape(spec.n_qubits)
    out = {}
    for name, rs in gen_synthetic_images(spec).items():
        if len(rs) == 0:
            continue
        dom = "target" if name.startswith("target") else "source"
        out[name] = to_dataset(
            rs.images, rs.labels, dom, shape, 1, spec.n_qubits, ("synthetic", spec.templates)
        )
    return out
