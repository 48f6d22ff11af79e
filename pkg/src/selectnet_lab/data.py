"""Datasets, synthetic generators, imbalance carving and oversampling."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import FrozenSet, Iterable, List, Optional, Tuple

import numpy as np

from .errors import ConfigError, InputError, ParseError

BINARY_MAGIC = b"SNDS"
_HEADER = struct.Struct("<4sIII")


@dataclass(frozen=True, eq=False)
class LabeledDataset:
    features: np.ndarray
    labels: np.ndarray
    num_classes: int

    def __post_init__(self):
        features = np.asarray(self.features, dtype=np.float64)
        if features.ndim == 1:
            features = features.reshape(-1, 1) if features.size else features.reshape(0, 0)
        labels = np.asarray(self.labels, dtype=np.int64).reshape(-1)
        if features.shape[0] != labels.size:
            raise InputError(f"{features.shape[0]} feature rows but {labels.size} labels")
        if labels.size and (labels.min() < 0 or labels.max() >= self.num_classes):
            raise InputError(f"labels must lie in [0, {self.num_classes})")
        object.__setattr__(self, "features", features)
        object.__setattr__(self, "labels", labels)

    def __len__(self):
        return self.labels.size

    def __eq__(self, other):
        if not isinstance(other, LabeledDataset):
            return NotImplemented
        return (
            self.num_classes == other.num_classes
            and np.array_equal(self.features, other.features)
            and np.array_equal(self.labels, other.labels)
        )

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    def class_counts(self) -> np.ndarray:
        return np.bincount(self.labels, minlength=self.num_classes)

    def subset(self, index) -> "LabeledDataset":
        index = np.asarray(index, dtype=np.int64)
        return LabeledDataset(self.features[index], self.labels[index], self.num_classes)


@dataclass(frozen=True, eq=False)
class UnlabeledPool:
    """Unlabeled features. Ground truth is kept for evaluation only.

    Training code must never touch ``_hidden_labels``; ``metrics.pool_ground_truth``
    is the single accessor.
    """

    features: np.ndarray
    _hidden_labels: np.ndarray = field(repr=False)

    def __post_init__(self):
        object.__setattr__(self, "features", np.asarray(self.features, dtype=np.float64))
        object.__setattr__(self, "_hidden_labels", np.asarray(self._hidden_labels, dtype=np.int64))

    def __len__(self):
        return self.features.shape[0]


@dataclass(frozen=True)
class ImbalanceSpec:
    minor_classes: FrozenSet[int]
    minor_keep_fraction: float
    major_keep_fraction: float
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "minor_classes", frozenset(int(c) for c in self.minor_classes))
        for name in ("minor_keep_fraction", "major_keep_fraction"):
            value = getattr(self, name)
            if not 0 < value <= 1:
                raise ConfigError(f"{name} must lie in (0, 1], got {value}")
        if not self.minor_classes:
            raise ConfigError("at least one minor class is required")

    def keep_fraction(self, cls: int) -> float:
        return self.minor_keep_fraction if cls in self.minor_classes else self.major_keep_fraction


@dataclass(frozen=True, eq=False)
class CarvedSplit:
    labeled: LabeledDataset
    pool: UnlabeledPool
    spec: ImbalanceSpec
    # row indices into the source dataset
    labeled_index: np.ndarray
    pool_index: np.ndarray

    @property
    def imbalance_ratio(self) -> float:
        counts = self.labeled.class_counts()
        return float(counts.max() / counts.min())


def generate_gaussian_blobs(
    m: int, per_class: int, dim: int, separation: float, seed: int
) -> LabeledDataset:
    """Balanced blobs with unit isotropic noise around ``separation``-scaled centers.

    Centers are random unit directions (orthonormal when ``m <= dim``) times
    ``separation``. Rows are grouped by class.
    """
    if m < 2 or per_class < 1 or dim < 1 or not separation > 0:
        raise ConfigError("need m >= 2, per_class >= 1, dim >= 1 and separation > 0")
    rng = np.random.default_rng(seed)
    directions = rng.standard_normal((m, dim))
    if m <= dim:
        q, _ = np.linalg.qr(directions.T)
        directions = q.T[:m]
    else:
        directions /= np.linalg.norm(directions, axis=1, keepdims=True)
    centers = separation * directions
    labels = np.repeat(np.arange(m), per_class)
    features = centers[labels] + rng.standard_normal((labels.size, dim))
    return LabeledDataset(features, labels, m)


def generate_two_moons(per_class: int, noise: float, seed: int) -> LabeledDataset:
    rng = np.random.default_rng(seed)
    t = rng.uniform(0, np.pi, size=(2, per_class))
    upper = np.stack([np.cos(t[0]), np.sin(t[0])], axis=1)
    lower = np.stack([1 - np.cos(t[1]), 0.5 - np.sin(t[1])], axis=1)
    features = np.vstack([upper, lower]) + noise * rng.standard_normal((2 * per_class, 2))
    return LabeledDataset(features, np.repeat([0, 1], per_class), 2)


def keep_count(fraction: float, count: int) -> int:
    # the epsilon absorbs float noise such as 0.01 * 900 = 9.000000000000002
    return math.ceil(fraction * count - 1e-9)


def carve_imbalance(source: LabeledDataset, spec: ImbalanceSpec) -> CarvedSplit:
    all_classes = set(range(source.num_classes))
    if not spec.minor_classes < all_classes:
        raise ConfigError("minor classes must be a strict subset of the dataset's classes")
    rng = np.random.default_rng(spec.seed)
    keep, rest = [], []
    for cls in range(source.num_classes):
        idx = np.flatnonzero(source.labels == cls)
        n_keep = keep_count(spec.keep_fraction(cls), idx.size)
        if n_keep == 0:
            raise InputError(f"class {cls} would keep no labeled samples")
        idx = rng.permutation(idx)
        keep.append(idx[:n_keep])
        rest.append(idx[n_keep:])
    labeled_index = np.sort(np.concatenate(keep))
    pool_index = np.sort(np.concatenate(rest))
    pool = UnlabeledPool(source.features[pool_index], source.labels[pool_index])
    return CarvedSplit(source.subset(labeled_index), pool, spec, labeled_index, pool_index)


def oversample_to_balance(ds: LabeledDataset, seed: int) -> LabeledDataset:
    """Originals first, then with-replacement draws until every class matches the largest."""
    counts = ds.class_counts()
    if np.any(counts == 0):
        raise InputError(f"classes {np.flatnonzero(counts == 0).tolist()} have no samples")
    rng = np.random.default_rng(seed)
    target = counts.max()
    extra = [
        rng.choice(np.flatnonzero(ds.labels == cls), size=target - n, replace=True)
        for cls, n in enumerate(counts)
        if n < target
    ]
    if not extra:
        return ds
    index = np.concatenate([np.arange(len(ds)), *extra])
    return ds.subset(index)


def minibatches(n, batch_size: int, seed: int, epoch: int) -> List[np.ndarray]:
    """Index batches covering a seeded permutation of ``range(n)``.

    ``n`` may also be a dataset, in which case its length is used.
    """
    if not isinstance(n, (int, np.integer)):
        n = len(n)
    if batch_size < 1:
        raise ConfigError("batch_size must be at least 1")
    perm = np.random.default_rng([seed, epoch]).permutation(n)
    return [perm[i : i + batch_size] for i in range(0, n, batch_size)]


def held_out_test_split(
    source: LabeledDataset, fraction: float, seed: int
) -> Tuple[LabeledDataset, LabeledDataset]:
    """Split off a class-balanced test set; returns (remaining source, test set)."""
    if not 0 < fraction <= 0.5:
        raise ConfigError("test fraction must lie in (0, 0.5]")
    counts = source.class_counts()
    per_class = math.floor(fraction * counts.min() + 1e-9)
    if per_class < 1 or np.any(counts - per_class < 1):
        raise InputError("not enough samples per class for a balanced test set")
    rng = np.random.default_rng(seed)
    test = []
    for cls in range(source.num_classes):
        test.append(rng.permutation(np.flatnonzero(source.labels == cls))[:per_class])
    test_index = np.sort(np.concatenate(test))
    train_mask = np.ones(len(source), dtype=bool)
    train_mask[test_index] = False
    return source.subset(np.flatnonzero(train_mask)), source.subset(test_index)


def _infer_format(path: Path, fmt: Optional[str]) -> str:
    if fmt:
        fmt = fmt.lower()
    else:
        fmt = "csv" if path.suffix.lower() == ".csv" else "binary"
    if fmt not in ("csv", "binary"):
        raise ConfigError(f"unknown dataset format {fmt!r}")
    return fmt


def save_dataset(ds: LabeledDataset, path, fmt: Optional[str] = None) -> None:
    path = Path(path)
    if _infer_format(path, fmt) == "csv":
        lines = [f"# dim={ds.dim} classes={ds.num_classes}"]
        for row, label in zip(ds.features, ds.labels):
            lines.append(",".join(repr(float(v)) for v in row) + f",{int(label)}")
        path.write_text("\n".join(lines) + "\n")
        return
    if ds.num_classes > 256:
        raise InputError("binary format stores labels as u8; at most 256 classes")
    record = np.dtype([("label", "u1"), ("features", "<f4", (ds.dim,))])
    body = np.empty(len(ds), dtype=record)
    body["label"] = ds.labels
    body["features"] = ds.features
    path.write_bytes(_HEADER.pack(BINARY_MAGIC, len(ds), ds.dim, ds.num_classes) + body.tobytes())


def load_dataset(path, fmt: Optional[str] = None) -> LabeledDataset:
    path = Path(path)
    if _infer_format(path, fmt) == "csv":
        return _parse_csv(path.read_text().splitlines())
    return _parse_binary(path.read_bytes())


def _parse_csv(lines: Iterable[str]) -> LabeledDataset:
    lines = list(lines)
    if not lines or not lines[0].startswith("#"):
        raise ParseError("missing '# dim=<d> classes=<m>' header", line=1)
    try:
        header = dict(tok.split("=", 1) for tok in lines[0][1:].split())
        dim, classes = int(header["dim"]), int(header["classes"])
    except (KeyError, ValueError) as exc:
        raise ParseError(f"bad header {lines[0]!r}", line=1) from exc
    features, labels = [], []
    for lineno, text in enumerate(lines[1:], start=2):
        if not text.strip():
            continue
        cells = text.split(",")
        if len(cells) != dim + 1:
            raise ParseError(f"expected {dim + 1} fields, found {len(cells)}", line=lineno)
        try:
            features.append([float(c) for c in cells[:dim]])
            labels.append(int(cells[dim]))
        except ValueError as exc:
            raise ParseError(str(exc), line=lineno) from exc
        if not 0 <= labels[-1] < classes:
            raise ParseError(f"label {labels[-1]} outside [0, {classes})", line=lineno)
    return LabeledDataset(np.array(features, dtype=np.float64).reshape(-1, dim), labels, classes)


def _parse_binary(raw: bytes) -> LabeledDataset:
    if len(raw) < _HEADER.size:
        raise ParseError("file shorter than the header", offset=len(raw))
    magic, count, dim, classes = _HEADER.unpack_from(raw)
    if magic != BINARY_MAGIC:
        raise ParseError(f"bad magic {magic!r}", offset=0)
    record = np.dtype([("label", "u1"), ("features", "<f4", (dim,))])
    expected = _HEADER.size + count * record.itemsize
    if len(raw) != expected:
        bad_sample = (len(raw) - _HEADER.size) // record.itemsize
        raise ParseError(
            f"expected {expected} bytes for {count} samples, got {len(raw)} (sample {bad_sample})",
            offset=min(len(raw), _HEADER.size + bad_sample * record.itemsize),
        )
    body = np.frombuffer(raw, dtype=record, count=count, offset=_HEADER.size)
    labels = body["label"].astype(np.int64)
    if labels.size and labels.max() >= classes:
        bad = int(np.argmax(labels >= classes))
        raise ParseError(
            f"label {labels[bad]} outside [0, {classes})", offset=_HEADER.size + bad * record.itemsize
        )
    return LabeledDataset(body["features"].astype(np.float64).reshape(count, dim), labels, classes)
