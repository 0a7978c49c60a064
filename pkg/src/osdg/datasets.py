"""MNIST IDX ingestion and ColoredMNIST-style multi-domain splits.

Domains differ only by a foreground palette multiplied into the grayscale
glyph, so labels never depend on the domain (pure covariate shift).
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .numerics import rng_stream

log = logging.getLogger(__name__)

IMAGE_MAGIC = 0x00000803
LABEL_MAGIC = 0x00000801
OOD = -1
SIDE = 28
DUMP_MAGIC = b"OSDGDATA"
DUMP_VERSION = 1


class IdxFormatError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass
class RawDigitSet:
    images: np.ndarray  # [N, 28, 28] float64 in [0, 1]
    labels: np.ndarray  # [N] int64

    def __post_init__(self):
        if len(self.images) != len(self.labels):
            raise IdxFormatError(
                f"{len(self.images)} images but {len(self.labels)} labels")

    def __len__(self):
        return len(self.labels)


@dataclass(frozen=True)
class DomainSpec:
    domain_id: int
    palette: tuple[float, float, float]

    def __post_init__(self):
        p = np.asarray(self.palette, dtype=float)
        if p.shape != (3,) or np.any(p < 0) or np.any(p > 1):
            raise ConfigError(f"palette must be an RGB triple in [0,1], got {self.palette}")
        if not np.any(p > 0):
            raise ConfigError("palette (0,0,0) erases the glyph")


RED = DomainSpec(0, (1.0, 0.0, 0.0))
GREEN = DomainSpec(1, (0.0, 1.0, 0.0))
BLUE = DomainSpec(2, (0.0, 0.0, 1.0))
MAGENTA = DomainSpec(3, (1.0, 0.0, 1.0))


@dataclass(frozen=True)
class ColoredSample:
    image: np.ndarray  # [3, 28, 28]
    label: int  # OOD marker is -1
    domain_id: int


@dataclass
class ColoredSet:
    """Array-of-struct view over many ColoredSamples."""

    images: np.ndarray  # [N, 3, 28, 28]
    labels: np.ndarray  # [N]; OOD entries carry -1
    domains: np.ndarray  # [N]
    classes: np.ndarray = field(default=None)  # original digit, kept for bookkeeping

    def __post_init__(self):
        if self.classes is None:
            self.classes = self.labels.copy()

    def __len__(self):
        return len(self.labels)

    def __getitem__(self, i) -> ColoredSample:
        return ColoredSample(self.images[i], int(self.labels[i]), int(self.domains[i]))

    def subset(self, idx) -> "ColoredSet":
        return ColoredSet(self.images[idx], self.labels[idx], self.domains[idx],
                          self.classes[idx])

    @property
    def is_ood(self) -> np.ndarray:
        return self.labels == OOD


@dataclass(frozen=True)
class SplitSpec:
    train_domains: tuple[DomainSpec, ...] = (RED, GREEN, BLUE)
    test_domain: DomainSpec = MAGENTA
    id_classes: tuple[int, ...] = (0, 1, 2, 3, 4, 5, 6)
    ood_classes: tuple[int, ...] = (7, 8, 9)
    n_train: int = 5000
    n_test: int = 2000
    n_val: int = 0
    seed: int = 0

    def __post_init__(self):
        if not self.id_classes:
            raise ConfigError("id_classes is empty")
        if set(self.id_classes) & set(self.ood_classes):
            raise ConfigError(
                f"id/ood classes overlap: {sorted(set(self.id_classes) & set(self.ood_classes))}")
        if not self.train_domains:
            raise ConfigError("need at least one training domain")

    @property
    def label_map(self) -> dict[int, int]:
        """Digit -> contiguous ID label 0..K-1."""
        return {c: i for i, c in enumerate(sorted(self.id_classes))}

    @property
    def num_classes(self) -> int:
        return len(self.id_classes)


# ------------------------------------------------------------------------ IDX

def _read_idx(path, magic: int, rank: int) -> np.ndarray:
    raw = Path(path).read_bytes()
    if len(raw) < 4 + 4 * rank:
        raise IdxFormatError(f"{path}: header truncated ({len(raw)} bytes)")
    (actual,) = struct.unpack(">I", raw[:4])
    if actual != magic:
        raise IdxFormatError(f"{path}: bad magic 0x{actual:08x}, expected 0x{magic:08x}")
    dims = struct.unpack(f">{rank}I", raw[4:4 + 4 * rank])
    payload = raw[4 + 4 * rank:]
    need = int(np.prod(dims))
    if len(payload) < need:
        raise IdxFormatError(f"{path}: payload has {len(payload)} bytes, header promises {need}")
    return np.frombuffer(payload, dtype=np.uint8, count=need).reshape(dims)


def load_idx(images_path, labels_path) -> RawDigitSet:
    images = _read_idx(images_path, IMAGE_MAGIC, 3)
    if images.shape[1:] != (SIDE, SIDE):
        raise IdxFormatError(f"{images_path}: expected 28x28 images, got {images.shape[1:]}")
    labels = _read_idx(labels_path, LABEL_MAGIC, 1)
    if len(images) != len(labels):
        raise IdxFormatError(
            f"count mismatch: {len(images)} images vs {len(labels)} labels")
    return RawDigitSet(images.astype(np.float64) / 255.0, labels.astype(np.int64))


def write_idx(images_path, labels_path, images_u8: np.ndarray, labels: np.ndarray) -> None:
    images_u8 = np.asarray(images_u8, dtype=np.uint8)
    n, h, w = images_u8.shape
    with open(images_path, "wb") as f:
        f.write(struct.pack(">4I", IMAGE_MAGIC, n, h, w))
        f.write(images_u8.tobytes())
    with open(labels_path, "wb") as f:
        f.write(struct.pack(">2I", LABEL_MAGIC, len(labels)))
        f.write(np.asarray(labels, dtype=np.uint8).tobytes())


# --------------------------------------------------------------- colorization

def colorize(gray: np.ndarray, spec: DomainSpec | Sequence[float]) -> np.ndarray:
    """[..., 28, 28] grayscale -> [..., 3, 28, 28] with channel c = gray * palette[c]."""
    palette = np.asarray(spec.palette if isinstance(spec, DomainSpec) else spec, dtype=float)
    gray = np.asarray(gray, dtype=float)
    if palette.ndim == 1:
        return gray[..., None, :, :] * palette[:, None, None]
    # one palette per image
    return gray[..., None, :, :] * palette[..., :, None, None]


def make_split(raw: RawDigitSet, spec: SplitSpec) -> dict[str, ColoredSet]:
    """Draw test first (so its class mix follows the raw frequencies), then train/val
    from the remaining ID-class images."""
    rng = rng_stream(spec.seed)
    id_set = np.asarray(spec.id_classes)
    ood_set = np.asarray(spec.ood_classes)
    lmap = spec.label_map

    eligible_test = np.flatnonzero(np.isin(raw.labels, np.concatenate([id_set, ood_set])))
    n_test = min(spec.n_test, len(eligible_test))
    test_idx = np.sort(rng.choice(eligible_test, size=n_test, replace=False))

    remaining = np.ones(len(raw), dtype=bool)
    remaining[test_idx] = False
    pool = np.flatnonzero(remaining & np.isin(raw.labels, id_set))
    pool = rng.permutation(pool)
    if len(pool) < spec.n_train + spec.n_val:
        log.warning("only %d ID images available for %d train + %d val",
                    len(pool), spec.n_train, spec.n_val)
    train_idx = np.sort(pool[:spec.n_train])
    val_idx = np.sort(pool[spec.n_train:spec.n_train + spec.n_val])

    def build(idx, domains: Sequence[DomainSpec]) -> ColoredSet:
        pick = rng.integers(len(domains), size=len(idx))
        palettes = np.array([domains[k].palette for k in pick]).reshape(-1, 3)
        digits = raw.labels[idx]
        labels = np.array([lmap.get(int(d), OOD) for d in digits], dtype=np.int64)
        dom_ids = np.array([domains[k].domain_id for k in pick], dtype=np.int64)
        return ColoredSet(colorize(raw.images[idx], palettes), labels, dom_ids,
                          digits.astype(np.int64))

    train = build(train_idx, spec.train_domains)
    val = build(val_idx, spec.train_domains)
    test = build(test_idx, (spec.test_domain,))
    if np.any(train.labels == OOD) or np.any(np.isin(train.classes, ood_set)):
        raise AssertionError("OOD class leaked into the training split")
    return {"train": train, "val": val, "test": test}


def enumerate_ood_selections(num_classes: int = 10, min_fraction: float = 0.5,
                             trials_per_selection: int = 3,
                             block: int = 3) -> list[tuple[tuple[int, ...], int]]:
    """Contiguous top-down digit blocks ({7,8,9}, {4,5,6}, ...) until their union
    covers ``min_fraction`` of the classes; each block is repeated per trial."""
    if not 0 <= min_fraction <= 1:
        raise ConfigError(f"min_fraction must lie in [0, 1], got {min_fraction}")
    need = int(np.ceil(min_fraction * num_classes - 1e-12))
    covered: set[int] = set()
    schedule = []
    hi = num_classes
    while len(covered) < need and hi > 0:
        sel = tuple(range(max(0, hi - block), hi))
        covered |= set(sel)
        schedule.extend((sel, t) for t in range(trials_per_selection))
        hi -= block
    return schedule


# ----------------------------------------------------------------- raw dumps

def dump_colored(path, data: ColoredSet) -> None:
    """OSDGDATA v1: magic, version u32 LE, N u32 LE, then per sample
    [label u8][domain u8][3x28x28 f32 LE]. OOD labels are stored as 255."""
    with open(path, "wb") as f:
        f.write(DUMP_MAGIC)
        f.write(struct.pack("<II", DUMP_VERSION, len(data)))
        for img, lab, dom in zip(data.images, data.labels, data.domains):
            f.write(struct.pack("<BB", int(lab) & 0xFF, int(dom) & 0xFF))
            f.write(np.asarray(img, dtype="<f4").tobytes())


def load_colored(path) -> ColoredSet:
    raw = Path(path).read_bytes()
    if raw[:8] != DUMP_MAGIC:
        raise IdxFormatError(f"{path}: not an OSDGDATA file")
    version, n = struct.unpack("<II", raw[8:16])
    if version != DUMP_VERSION:
        raise IdxFormatError(f"{path}: unsupported version {version}")
    rec = np.dtype([("label", "u1"), ("domain", "u1"), ("image", "<f4", (3, SIDE, SIDE))])
    if len(raw) - 16 != n * rec.itemsize:
        raise IdxFormatError(f"{path}: expected {n} records, payload is {len(raw) - 16} bytes")
    arr = np.frombuffer(raw, dtype=rec, offset=16, count=n)
    labels = arr["label"].astype(np.int64)
    labels[labels == 255] = OOD
    return ColoredSet(arr["image"].astype(np.float64), labels, arr["domain"].astype(np.int64))
