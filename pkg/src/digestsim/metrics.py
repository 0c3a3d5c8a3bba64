"""Post-hoc analysis over run records: reference sequences, averages, costs."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simcore import RunRecord

__all__ = [
    "AverageSpec",
    "GapStats",
    "virtual_sequence",
    "weighted_average",
    "gap_stats",
    "comm_cost",
    "speedup_curve",
    "report_min_over_averages",
]


def virtual_sequence(record: RunRecord, t: int) -> np.ndarray:
    """Aggregate trajectory at slot t: x0 minus every data-weighted gradient
    started before t, applied unconditionally regardless of completion lag.

    This is an analysis object, not any node's state; it needs the gradient
    log (record_grads=True).
    """
    if record.grad_log is None:
        raise ValueError("run was recorded without a gradient log")
    x = record.x0.astype(np.float64).copy()
    for e in record.grad_log:
        if e.start < t:
            x -= record.weights[e.node] * e.eta * e.grad
    return x


@dataclass
class AverageSpec:
    """How to average the per-slot node models.

    kinds: 'last' (final slot only), 'uniform', 'linear' (weight t+1),
    'quadratic' (weight (1 - mu*eta)^-(t+1), needing mu and eta).
    """

    kind: str = "uniform"
    mu: float = 0.0
    eta: float = 0.0

    def slot_weights(self, t_count: int) -> np.ndarray:
        if self.kind == "last":
            w = np.zeros(t_count)
            w[-1] = 1.0
            return w
        if self.kind == "uniform":
            return np.full(t_count, 1.0 / t_count)
        if self.kind == "linear":
            w = np.arange(1, t_count + 1, dtype=np.float64)
            return w / w.sum()
        if self.kind == "quadratic":
            rate = self.mu * self.eta
            if not (0.0 <= rate < 1.0):
                raise ValueError("mu*eta must lie in [0, 1)")
            # log-space to survive large horizons; shifting cancels in the ratio
            logw = -np.log1p(-rate) * np.arange(1, t_count + 1, dtype=np.float64)
            w = np.exp(logw - logw.max())
            return w / w.sum()
        raise ValueError(f"unknown average kind {self.kind!r}")


def weighted_average(record: RunRecord, spec: AverageSpec) -> np.ndarray:
    """Data- and slot-weighted average of the recorded model trajectory."""
    if record.model_traj is None:
        raise ValueError("run was recorded without model trajectories")
    traj = record.model_traj                       # (T, V, dim)
    slot_w = spec.slot_weights(traj.shape[0])
    per_slot = np.einsum("v,tvd->td", record.weights, traj)
    return np.einsum("t,td->d", slot_w, per_slot)


@dataclass
class GapStats:
    per_node: tuple[int, ...]
    overall: int
    starved: tuple[int, ...]    # nodes with fewer than two sync events


def gap_stats(record: RunRecord) -> GapStats:
    """Largest slot distance between consecutive sync events, per node.

    A node with fewer than two sync events reports the horizon as a sentinel
    and is flagged in ``starved``.
    """
    gaps = []
    starved = []
    for v, slots in enumerate(record.sync_slots):
        distinct = sorted(set(slots))
        if len(distinct) < 2:
            gaps.append(record.total_slots)
            starved.append(v)
        else:
            gaps.append(int(np.diff(distinct).max()))
    return GapStats(per_node=tuple(gaps), overall=max(gaps) if gaps else 0,
                    starved=tuple(starved))


def comm_cost(record: RunRecord) -> tuple[int, int]:
    """(message count, model-transfer floats as a bytes proxy)."""
    return record.msg_count, record.byte_proxy


def speedup_curve(errors: dict[int, float], baseline_error: float) -> dict[int, float]:
    """Per node count: baseline (single-node) error over the method's error."""
    return {v: baseline_error / err for v, err in errors.items()}


def report_min_over_averages(record: RunRecord, loss_fn,
                             mu: float = 0.0, eta: float = 0.0):
    """Loss at the best of {last, uniform, linear, quadratic} model averages.

    Returns (kind, loss). The quadratic kind is skipped when mu*eta == 0
    would make it identical to uniform.
    """
    kinds = ["last", "uniform", "linear"]
    if mu * eta > 0.0:
        kinds.append("quadratic")
    best_kind, best_loss = None, np.inf
    for kind in kinds:
        model = weighted_average(record, AverageSpec(kind, mu=mu, eta=eta))
        loss = float(np.mean(loss_fn(model)))
        if loss < best_loss:
            best_kind, best_loss = kind, loss
    return best_kind, best_loss
