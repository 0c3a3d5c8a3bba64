"""Slotted discrete-event engine for decentralized SGD node programs.

Time advances in integer slots. Within slot t the engine:

1. delivers every in-flight message whose deliver slot is t (ascending
   destination id, then source id, then send order),
2. invokes each node program's ``on_slot`` in ascending node id,
3. runs the algorithm's optional ``after_slot`` hook (used by idealized
   coordinators such as a zero-delay averaging server),
4. schedules outgoing messages: the transit time is drawn from an
   exponential distribution with the link's mean delay, rounded up to whole
   slots with a one slot minimum,
5. updates the recorder (running aggregate trajectory, loss samples).

Everything is deterministic given the configuration: per-node randomness
comes from named streams derived from (seed, domain, node id), and message
delays from a single engine stream consumed in a fixed order.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

__all__ = [
    "SimConfig",
    "Message",
    "GradEntry",
    "MessageEntry",
    "GradPipeline",
    "NodeProgram",
    "Recorder",
    "RunRecord",
    "SimulationError",
    "make_rng",
    "run",
]

_RNG_DOMAINS = {"sample": 1, "noise": 2, "lag": 3, "walk": 4, "delay": 5}


def make_rng(seed: int, domain: str, node: int = 0) -> np.random.Generator:
    """Independent generator for one (seed, domain, node) triple."""
    return np.random.default_rng(
        np.random.SeedSequence([int(seed), _RNG_DOMAINS[domain], int(node)]))


class SimulationError(RuntimeError):
    """A node program raised; carries slot and node context."""


@dataclass
class SimConfig:
    """Run-wide simulation parameters.

    ``max_lag`` bounds how many extra slots a gradient computation may take:
    a gradient started at slot t is applied at t + lag with lag in
    [0, max_lag]. ``eval_every`` defaults to max(1, total_slots // 500).
    """

    total_slots: int
    seed: int
    max_lag: int = 0
    eval_every: int | None = None
    record_models: bool = False
    record_grads: bool = True
    record_merges: bool = False
    guard_divergence: bool = True
    divergence_factor: float = 1e6

    def __post_init__(self) -> None:
        if self.total_slots < 1:
            raise ValueError("total_slots must be >= 1")
        if self.max_lag < 0:
            raise ValueError("max_lag must be >= 0")

    @property
    def cadence(self) -> int:
        return self.eval_every or max(1, self.total_slots // 500)


@dataclass
class Message:
    src: int
    dst: int
    send_slot: int
    deliver_slot: int
    payload: object
    size: int
    seq: int


@dataclass
class GradEntry:
    node: int
    start: int
    applied: int
    eta: float
    grad: np.ndarray
    idx: int = 0


@dataclass
class MessageEntry:
    send: int
    deliver: int
    src: int
    dst: int
    stream: int
    size: int


@dataclass
class _PipeEntry:
    start: int
    completes: int
    eta: float
    grad: np.ndarray
    idx: int


class GradPipeline:
    """Per-node queue of gradient computations with bounded completion lag."""

    def __init__(self) -> None:
        self._entries: list[_PipeEntry] = []

    def __len__(self) -> int:
        return len(self._entries)

    def start_gradient(self, t: int, idx: int, eta: float, grad: np.ndarray,
                       duration: int) -> _PipeEntry:
        """Enqueue the gradient started at slot t; it occupies ``duration``
        slots and is applied in the local update of slot t + duration - 1."""
        if duration < 1:
            raise ValueError("duration must be >= 1")
        entry = _PipeEntry(start=t, completes=t + duration - 1,
                           eta=float(eta), grad=grad, idx=idx)
        self._entries.append(entry)
        return entry

    def completed_updates(self, t: int) -> list[_PipeEntry]:
        """Remove and return the entries completing exactly at slot t."""
        done = [e for e in self._entries if e.completes == t]
        if done:
            self._entries = [e for e in self._entries if e.completes != t]
        return done


class NodeProgram:
    """Base node program: engine-facing inbox/outbox plumbing.

    Subclasses implement ``on_slot`` and read ``self.inbox`` (messages
    delivered at the current slot, already in deterministic order). The
    current model must be kept in ``self.model``.
    """

    def __init__(self, v: int):
        self.v = v
        self.inbox: list[Message] = []
        self.outbox: list[tuple[int, object, int]] = []
        self.model: np.ndarray | None = None

    def on_message(self, t: int, msg: Message) -> None:
        self.inbox.append(msg)

    def on_slot(self, t: int) -> None:
        raise NotImplementedError

    def send(self, dst: int, payload: object, size: int) -> None:
        self.outbox.append((dst, payload, size))

    def take_inbox(self) -> list[Message]:
        got = self.inbox
        self.inbox = []
        return got


@dataclass
class RunRecord:
    """Everything recorded during one simulation run."""

    node_count: int
    dim: int
    total_slots: int
    stop_slot: int
    weights: np.ndarray
    x0: np.ndarray
    eval_slots: list[int]
    eval_global_loss: list[float]
    eval_vseq_loss: list[float]
    eval_msgs: list[int]
    eval_bytes: list[int]
    eval_max_gap: list[int]
    eval_max_lag: list[int]
    sync_slots: tuple[tuple[int, ...], ...]       # per node, merged event slots
    sync_log: list[tuple[int, int, int]]          # (slot, node, stream)
    msg_log: list[MessageEntry]
    msg_count: int
    byte_proxy: int
    inflight_at_end: int
    final_models: np.ndarray                      # (V, dim)
    vbar_final: np.ndarray
    initial_loss: float
    max_lag: int
    diverged: bool
    grad_log: list[GradEntry] | None = None
    merge_log: list[tuple[int, int, int, np.ndarray]] | None = None
    model_traj: np.ndarray | None = None          # (stop_slot, V, dim)

    CSV_HEADER = "slot,global_loss,vseq_loss,msgs_total,bytes_proxy,max_gap,max_lag"

    def to_recorder_csv(self) -> str:
        lines = [self.CSV_HEADER]
        for k, t in enumerate(self.eval_slots):
            lines.append(
                f"{t},{self.eval_global_loss[k]!r},{self.eval_vseq_loss[k]!r},"
                f"{self.eval_msgs[k]},{self.eval_bytes[k]},"
                f"{self.eval_max_gap[k]},{self.eval_max_lag[k]}")
        return "\n".join(lines) + "\n"

    def fingerprint(self) -> bytes:
        return (self.to_recorder_csv().encode()
                + self.final_models.tobytes()
                + self.vbar_final.tobytes())


class Recorder:
    """Collects gradients, sync events, messages and sampled losses."""

    def __init__(self, sim: SimConfig, task, node_count: int):
        self.sim = sim
        self.task = task
        self.node_count = node_count
        self.weights = np.asarray(task.weights, dtype=np.float64)
        self.x0 = np.atleast_1d(np.asarray(task.init_model(), dtype=np.float64))
        self.vbar = self.x0.copy()
        self.initial_loss = float(np.mean(task.loss(self.x0)))
        self._slot_grads: list[tuple[int, float, np.ndarray]] = []
        self.grad_log: list[GradEntry] | None = [] if sim.record_grads else None
        self.merge_log = [] if sim.record_merges else None
        self.sync_slots: list[list[int]] = [[] for _ in range(node_count)]
        self.sync_log: list[tuple[int, int, int]] = []
        self.msg_log: list[MessageEntry] = []
        self.msg_count = 0
        self.byte_proxy = 0
        self._last_sync: list[int | None] = [None] * node_count
        self._max_gap = 0
        self.max_lag = 0
        self._traj: list[np.ndarray] | None = [] if sim.record_models else None
        self.eval_slots: list[int] = []
        self.eval_global_loss: list[float] = []
        self.eval_vseq_loss: list[float] = []
        self.eval_msgs: list[int] = []
        self.eval_bytes: list[int] = []
        self.eval_max_gap: list[int] = []
        self.eval_max_lag: list[int] = []
        self.diverged = False

    # hooks called by node programs -------------------------------------

    def grad_started(self, v: int, start: int, applied: int, eta: float,
                     grad: np.ndarray, idx: int = 0) -> None:
        self._slot_grads.append((v, eta, grad))
        if self.grad_log is not None:
            self.grad_log.append(GradEntry(v, start, applied, float(eta),
                                           np.array(grad, dtype=np.float64),
                                           idx))
        lag = applied - start
        if lag > self.max_lag:
            self.max_lag = lag

    def synced(self, v: int, slot: int, stream: int = 0) -> None:
        self.sync_log.append((slot, v, stream))
        last = self._last_sync[v]
        if last is not None and slot > last:
            self._max_gap = max(self._max_gap, slot - last)
        self._last_sync[v] = slot
        self.sync_slots[v].append(slot)

    def merged(self, v: int, slot: int, stream: int, model: np.ndarray) -> None:
        if self.merge_log is not None:
            self.merge_log.append((slot, v, stream,
                                   np.array(model, dtype=np.float64)))

    def add_transfers(self, count: int, size: int) -> None:
        """Account idealized (non-network) model transfers."""
        self.msg_count += count
        self.byte_proxy += count * size

    # hooks called by the engine ------------------------------------------

    def message_scheduled(self, msg: Message) -> None:
        self.msg_count += 1
        self.byte_proxy += msg.size
        self.msg_log.append(MessageEntry(msg.send_slot, msg.deliver_slot,
                                         msg.src, msg.dst,
                                         getattr(msg.payload, "stream", -1),
                                         msg.size))

    def _models(self, nodes) -> np.ndarray:
        return np.stack([np.atleast_1d(np.asarray(n.model, dtype=np.float64))
                         for n in nodes])

    def end_slot(self, t: int, nodes) -> bool:
        """Close slot t; returns True when the run should stop (divergence)."""
        for v, eta, grad in self._slot_grads:
            self.vbar = self.vbar - self.weights[v] * eta * grad
        self._slot_grads.clear()
        if self._traj is not None:
            self._traj.append(self._models(nodes))
        if t % self.sim.cadence == 0 or t == self.sim.total_slots - 1:
            models = self._models(nodes)
            xhat = self.weights @ models
            loss = float(np.mean(self.task.loss(xhat)))
            vloss = float(np.mean(self.task.loss(self.vbar)))
            self.eval_slots.append(t)
            self.eval_global_loss.append(loss)
            self.eval_vseq_loss.append(vloss)
            self.eval_msgs.append(self.msg_count)
            self.eval_bytes.append(self.byte_proxy)
            self.eval_max_gap.append(self._max_gap)
            self.eval_max_lag.append(self.max_lag)
            if self.sim.guard_divergence:
                limit = self.sim.divergence_factor * max(1.0, self.initial_loss)
                if not math.isfinite(loss) or loss > limit:
                    self.diverged = True
                    return True
        return False

    def finalize(self, stop_slot: int, nodes, inflight: int) -> RunRecord:
        traj = None
        if self._traj is not None:
            traj = np.stack(self._traj) if self._traj else np.zeros(
                (0, self.node_count, len(self.x0)))
        return RunRecord(
            node_count=self.node_count,
            dim=len(self.x0),
            total_slots=self.sim.total_slots,
            stop_slot=stop_slot,
            weights=self.weights.copy(),
            x0=self.x0.copy(),
            eval_slots=self.eval_slots,
            eval_global_loss=self.eval_global_loss,
            eval_vseq_loss=self.eval_vseq_loss,
            eval_msgs=self.eval_msgs,
            eval_bytes=self.eval_bytes,
            eval_max_gap=self.eval_max_gap,
            eval_max_lag=self.eval_max_lag,
            sync_slots=tuple(tuple(s) for s in self.sync_slots),
            sync_log=self.sync_log,
            msg_log=self.msg_log,
            msg_count=self.msg_count,
            byte_proxy=self.byte_proxy,
            inflight_at_end=inflight,
            final_models=self._models(nodes),
            vbar_final=self.vbar.copy(),
            initial_loss=self.initial_loss,
            max_lag=self.max_lag,
            diverged=self.diverged,
            grad_log=self.grad_log,
            merge_log=self.merge_log,
            model_traj=traj,
        )


def run(sim: SimConfig, topo, algo, task) -> RunRecord:
    """Execute one simulation and return its record.

    ``algo`` provides ``make_nodes(topo, task, sim, recorder)`` and may
    provide ``after_slot(t, nodes, recorder)``. Node programs raise through
    a SimulationError that names the failing slot and node.
    """
    recorder = Recorder(sim, task, topo.node_count)
    nodes = algo.make_nodes(topo, task, sim, recorder)
    if len(nodes) != topo.node_count:
        raise ValueError("algorithm produced the wrong number of nodes")
    delay_rng = make_rng(sim.seed, "delay", 0)
    pending: dict[int, list[Message]] = {}
    after = getattr(algo, "after_slot", None)
    seq = 0
    stop_slot = sim.total_slots
    for t in range(sim.total_slots):
        for msg in sorted(pending.pop(t, ()), key=lambda m: (m.dst, m.src, m.seq)):
            try:
                nodes[msg.dst].on_message(t, msg)
            except Exception as exc:
                raise SimulationError(
                    f"node {msg.dst} failed receiving at slot {t}: {exc}") from exc
        for v in range(topo.node_count):
            try:
                nodes[v].on_slot(t)
            except Exception as exc:
                raise SimulationError(
                    f"node {v} failed at slot {t}: {exc}") from exc
        if after is not None:
            after(t, nodes, recorder)
        for v in range(topo.node_count):
            box = nodes[v].outbox
            if not box:
                continue
            nodes[v].outbox = []
            for dst, payload, size in box:
                try:
                    mean = topo.delay(v, dst)
                except KeyError:
                    raise SimulationError(
                        f"node {v} sent to non-neighbor {dst} at slot {t}")
                transit = max(1, math.ceil(delay_rng.exponential(mean)))
                msg = Message(src=v, dst=dst, send_slot=t,
                              deliver_slot=t + transit, payload=payload,
                              size=size, seq=seq)
                seq += 1
                pending.setdefault(msg.deliver_slot, []).append(msg)
                recorder.message_scheduled(msg)
        if recorder.end_slot(t, nodes):
            stop_slot = t + 1
            break
    inflight = sum(len(v) for v in pending.values())
    return recorder.finalize(stop_slot, nodes, inflight)
