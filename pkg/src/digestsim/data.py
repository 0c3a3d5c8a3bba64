"""Datasets and per-node partitions: synthetic blobs, libsvm files, splits."""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

__all__ = [
    "Dataset",
    "Partition",
    "load_libsvm",
    "generate_blobs",
    "partition_iid_balanced",
    "partition_noniid_unbalanced",
    "concentration_rho",
]


@dataclass
class Dataset:
    features: np.ndarray   # (D, d) float64
    labels: np.ndarray     # (D,) int64, contiguous from 0
    n_classes: int

    def __post_init__(self) -> None:
        if self.features.ndim != 2:
            raise ValueError("features must be a (D, d) matrix")
        if len(self.features) != len(self.labels):
            raise ValueError("features and labels must align")
        if len(self.labels) and (self.labels.min() < 0
                                 or self.labels.max() >= self.n_classes):
            raise ValueError("labels out of range")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int:
        return self.features.shape[1]


@dataclass
class Partition:
    """Disjoint cover of sample indices across nodes; every node nonempty."""

    assignment: tuple[np.ndarray, ...]

    def __post_init__(self) -> None:
        all_idx = np.concatenate(self.assignment) if self.assignment else np.array([])
        if len(np.unique(all_idx)) != len(all_idx):
            raise ValueError("partition assigns a sample twice")
        for a in self.assignment:
            if len(a) == 0:
                raise ValueError("every node needs at least one sample")

    @property
    def node_count(self) -> int:
        return len(self.assignment)

    @property
    def sizes(self) -> np.ndarray:
        return np.array([len(a) for a in self.assignment], dtype=np.int64)

    @property
    def total(self) -> int:
        return int(self.sizes.sum())

    def weights(self) -> np.ndarray:
        """Per-node data share D_v / D."""
        s = self.sizes
        return s / s.sum()


def load_libsvm(path) -> Dataset:
    """Parse a libsvm text file: ``label idx:val idx:val ...`` per line.

    Indices are 1-based and densified to dimension max-seen-index; labels are
    remapped to contiguous 0-based classes in sorted order of the raw values.
    A duplicated index on one line keeps the last value and emits a warning.
    """
    raw_labels: list[float] = []
    rows: list[dict[int, float]] = []
    max_idx = 0
    with open(path, "r", encoding="utf-8") as fh:
        for ln, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            parts = line.split()
            try:
                label = float(parts[0])
            except ValueError as exc:
                raise ValueError(f"line {ln}: bad label {parts[0]!r}") from exc
            feats: dict[int, float] = {}
            for tok in parts[1:]:
                try:
                    idx_s, val_s = tok.split(":", 1)
                    idx = int(idx_s)
                    val = float(val_s)
                except ValueError as exc:
                    raise ValueError(f"line {ln}: bad feature token {tok!r}") from exc
                if idx < 1:
                    raise ValueError(f"line {ln}: feature index {idx} must be >= 1")
                if idx in feats:
                    warnings.warn(f"line {ln}: duplicate index {idx}, last value wins")
                feats[idx] = val
                max_idx = max(max_idx, idx)
            raw_labels.append(label)
            rows.append(feats)
    if not rows:
        raise ValueError(f"{path}: no samples found")
    classes = sorted(set(raw_labels))
    remap = {c: k for k, c in enumerate(classes)}
    feats_arr = np.zeros((len(rows), max_idx), dtype=np.float64)
    for r, feats in enumerate(rows):
        for idx, val in feats.items():
            feats_arr[r, idx - 1] = val
    labels_arr = np.array([remap[c] for c in raw_labels], dtype=np.int64)
    return Dataset(feats_arr, labels_arr, n_classes=len(classes))


def generate_blobs(classes: int, per_class: int, dim: int, spread: float,
                   seed: int) -> Dataset:
    """Gaussian clusters, one per class, deterministic under the seed."""
    if classes < 1 or per_class < 1 or dim < 1:
        raise ValueError("classes, per_class and dim must be positive")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 101]))
    centers = rng.normal(0.0, 2.0, size=(classes, dim))
    feats = np.empty((classes * per_class, dim), dtype=np.float64)
    labels = np.empty(classes * per_class, dtype=np.int64)
    for c in range(classes):
        lo = c * per_class
        noise = rng.normal(0.0, 1.0, size=(per_class, dim))
        feats[lo:lo + per_class] = centers[c] + spread * noise
        labels[lo:lo + per_class] = c
    return Dataset(feats, labels, n_classes=classes)


def partition_iid_balanced(ds: Dataset, v_count: int, seed: int) -> Partition:
    """Shuffle, then split into near-equal contiguous chunks.

    The remainder of D / V is spread one extra sample each over the first
    D mod V nodes.
    """
    d_total = len(ds)
    if d_total < v_count:
        raise ValueError(f"need at least {v_count} samples, have {d_total}")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 202]))
    perm = rng.permutation(d_total)
    base = d_total // v_count
    extra = d_total % v_count
    sizes = [base + (1 if v < extra else 0) for v in range(v_count)]
    out = []
    pos = 0
    for s in sizes:
        out.append(np.sort(perm[pos:pos + s]))
        pos += s
    return Partition(tuple(out))


def partition_noniid_unbalanced(ds: Dataset, v_count: int, ratio: float,
                                seed: int) -> Partition:
    """Label-sorted split with geometrically shrinking per-node shares.

    Node v receives roughly delta * ratio**v samples where delta solves
    delta * sum_v ratio**v = D; rounding is largest-remainder with a one
    sample floor per node so the sizes still sum to D.
    """
    d_total = len(ds)
    if d_total < v_count:
        raise ValueError(f"need at least {v_count} samples, have {d_total}")
    if not (0.0 < ratio <= 1.0):
        raise ValueError("ratio must be in (0, 1]")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 303]))
    perm = rng.permutation(d_total)
    order = perm[np.argsort(ds.labels[perm], kind="stable")]

    geo = np.array([ratio ** v for v in range(v_count)], dtype=np.float64)
    quota = d_total * geo / geo.sum()
    sizes = np.floor(quota).astype(np.int64)
    remainder = quota - sizes
    leftover = d_total - int(sizes.sum())
    for v in sorted(range(v_count), key=lambda v: (-remainder[v], v))[:leftover]:
        sizes[v] += 1
    # one-sample floor, taken from the currently largest nodes
    while (sizes == 0).any():
        sizes[int(np.argmax(sizes))] -= 1
        sizes[int(np.argmin(sizes))] += 1
    out = []
    pos = 0
    for s in sizes:
        out.append(np.sort(order[pos:pos + s]))
        pos += int(s)
    return Partition(tuple(out))


def concentration_rho(p: Partition) -> float:
    """Data concentration sum_v (D_v / D)^2; 1/V when balanced, toward 1 when skewed."""
    w = p.weights()
    return float(np.sum(w * w))
