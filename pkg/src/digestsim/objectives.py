"""Optimization objectives: softmax regression and a noisy piecewise quadratic.

Pure evaluation functions plus small task adapters that give the simulator a
uniform interface (per-node sample draw, stochastic gradient, full loss).
All arithmetic is float64.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .data import Dataset, Partition

__all__ = [
    "ObjectiveSpec",
    "sample_loss",
    "sample_grad",
    "full_loss",
    "node_loss",
    "quad_loss",
    "quad_grad",
    "noisy_quad_grad",
    "LogisticTask",
    "NoisyQuadTask",
]

SOFTMAX_LOGISTIC = "softmax_logistic"
NOISY_QUADRATIC = "noisy_quadratic"


@dataclass
class ObjectiveSpec:
    """Which loss to optimize and its parameters.

    ``lam`` is the L2 regularization weight for softmax regression. For the
    noisy quadratic, ``zeta`` holds one gradient-noise mean per node (they
    must sum to zero) and ``sigma`` the noise standard deviation.
    """

    kind: str
    n_classes: int = 0
    dim: int = 0
    lam: float = 0.0
    zeta: np.ndarray | None = None
    sigma: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in (SOFTMAX_LOGISTIC, NOISY_QUADRATIC):
            raise ValueError(f"unknown objective kind {self.kind!r}")
        if self.lam < 0:
            raise ValueError("lam must be >= 0")
        if self.sigma < 0:
            raise ValueError("sigma must be >= 0")
        if self.zeta is not None:
            self.zeta = np.asarray(self.zeta, dtype=np.float64)
            if abs(float(self.zeta.sum())) > 1e-9 * max(1.0, float(np.abs(self.zeta).sum())):
                raise ValueError("zeta entries must sum to zero")


def _weights(spec: ObjectiveSpec, model: np.ndarray) -> np.ndarray:
    w = np.asarray(model, dtype=np.float64)
    if w.size != spec.n_classes * spec.dim:
        raise ValueError(
            f"model size {w.size} != n_classes*dim = {spec.n_classes * spec.dim}")
    return w.reshape(spec.n_classes, spec.dim)


def _log_softmax(z: np.ndarray) -> np.ndarray:
    m = z.max(axis=-1, keepdims=True)
    return z - m - np.log(np.exp(z - m).sum(axis=-1, keepdims=True))


def sample_loss(spec: ObjectiveSpec, model: np.ndarray, sample) -> float:
    """Cross-entropy of softmax logits plus (lam/2) * ||model||^2."""
    a, b = sample
    w = _weights(spec, model)
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (spec.dim,):
        raise ValueError(f"feature shape {a.shape} != ({spec.dim},)")
    logits = w @ a
    reg = 0.5 * spec.lam * float(np.dot(model, model))
    return float(-_log_softmax(logits)[int(b)]) + reg


def sample_grad(spec: ObjectiveSpec, model: np.ndarray, sample) -> np.ndarray:
    """Gradient of ``sample_loss`` with respect to the flattened model."""
    a, b = sample
    w = _weights(spec, model)
    a = np.asarray(a, dtype=np.float64)
    if a.shape != (spec.dim,):
        raise ValueError(f"feature shape {a.shape} != ({spec.dim},)")
    logits = w @ a
    p = np.exp(_log_softmax(logits))
    p[int(b)] -= 1.0
    return (np.outer(p, a) + spec.lam * w).ravel()


def full_loss(spec: ObjectiveSpec, model: np.ndarray, ds: Dataset,
              indices: np.ndarray | None = None) -> float:
    """Average sample loss over the whole dataset (or a subset of indices)."""
    w = _weights(spec, model)
    feats = ds.features if indices is None else ds.features[indices]
    labels = ds.labels if indices is None else ds.labels[indices]
    logits = feats @ w.T
    logp = _log_softmax(logits)
    ce = -logp[np.arange(len(labels)), labels].mean()
    return float(ce) + 0.5 * spec.lam * float(np.dot(model, model))


def node_loss(spec: ObjectiveSpec, model: np.ndarray, ds: Dataset,
              part: Partition, v: int) -> float:
    """Local loss over node v's samples."""
    return full_loss(spec, model, ds, indices=part.assignment[v])


def quad_loss(x):
    """Piecewise quadratic centered at 1: (x-1)^2 above, half that below."""
    e = np.asarray(x, dtype=np.float64) - 1.0
    return np.where(e >= 0.0, e * e, 0.5 * e * e)


def quad_grad(x):
    e = np.asarray(x, dtype=np.float64) - 1.0
    return np.where(e >= 0.0, 2.0 * e, e)


def noisy_quad_grad(spec: ObjectiveSpec, v: int, x, rng: np.random.Generator):
    """Quadratic gradient plus per-node Normal(zeta_v, sigma^2) noise."""
    zeta = 0.0 if spec.zeta is None else float(spec.zeta[v])
    return quad_grad(x) + rng.normal(zeta, spec.sigma, size=np.shape(x))


class LogisticTask:
    """Softmax regression over a partitioned dataset, used by node programs."""

    def __init__(self, dataset: Dataset, partition: Partition,
                 lam: float | None = None):
        if partition.total != len(dataset):
            raise ValueError("partition does not cover the dataset")
        # default regularization: one over the dataset size
        lam = 1.0 / len(dataset) if lam is None else float(lam)
        self.dataset = dataset
        self.partition = partition
        self.spec = ObjectiveSpec(SOFTMAX_LOGISTIC, n_classes=dataset.n_classes,
                                  dim=dataset.dim, lam=lam)
        self.dim = dataset.n_classes * dataset.dim
        self.weights = partition.weights()

    @property
    def node_count(self) -> int:
        return self.partition.node_count

    def init_model(self) -> np.ndarray:
        return np.zeros(self.dim, dtype=np.float64)

    def draw_index(self, v: int, rng: np.random.Generator) -> int:
        own = self.partition.assignment[v]
        if len(own) == 0:
            raise ValueError(f"node {v} has an empty local dataset")
        return int(own[rng.integers(len(own))])

    def stoch_grad(self, v: int, idx: int, model: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
        sample = (self.dataset.features[idx], int(self.dataset.labels[idx]))
        return sample_grad(self.spec, model, sample)

    def loss(self, model: np.ndarray) -> float:
        return full_loss(self.spec, model, self.dataset)


class NoisyQuadTask:
    """Scalar noisy quadratic, optionally replicated over a batch axis.

    With ``batch > 1`` the model is a vector of independent replicas that
    share one simulation schedule; every model operation in the simulator is
    componentwise linear, so replica trajectories stay independent. Node data
    shares are uniform (each node stands in for one unit of data).
    """

    def __init__(self, node_count: int, zeta=None, sigma: float = 0.0,
                 batch: int = 1, x0: float = 0.0):
        zeta = np.zeros(node_count) if zeta is None else np.asarray(zeta, float)
        if zeta.shape != (node_count,):
            raise ValueError("zeta must hold one entry per node")
        self.spec = ObjectiveSpec(NOISY_QUADRATIC, zeta=zeta, sigma=float(sigma))
        self.node_count = node_count
        self.dim = int(batch)
        self.x0 = float(x0)
        self.weights = np.full(node_count, 1.0 / node_count)

    def init_model(self) -> np.ndarray:
        return np.full(self.dim, self.x0, dtype=np.float64)

    def draw_index(self, v: int, rng: np.random.Generator) -> int:
        return 0

    def stoch_grad(self, v: int, idx: int, model: np.ndarray,
                   rng: np.random.Generator) -> np.ndarray:
        return noisy_quad_grad(self.spec, v, model, rng)

    def loss(self, model: np.ndarray) -> float:
        return float(np.mean(quad_loss(model)))
