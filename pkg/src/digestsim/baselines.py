"""Comparison node programs: random walk, gossip variants, central averaging."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .digest import LocalSgdNode, local_step
from .simcore import NodeProgram, make_rng
from .topology import Graph

__all__ = [
    "GossipConfig",
    "metropolis_weights",
    "sync_gossip_round",
    "async_gossip_step",
    "central_parallel_sgd",
    "urw_step",
    "Urw",
    "SyncGossip",
    "AsyncGossip",
    "CentralParallel",
]


@dataclass
class GossipConfig:
    """Local steps between mixing events; mixing uses Metropolis weights."""

    local_period: int = 1

    def __post_init__(self) -> None:
        if self.local_period < 1:
            raise ValueError("local_period must be >= 1")


def metropolis_weights(g: Graph) -> np.ndarray:
    """Symmetric doubly stochastic mixing matrix from node degrees."""
    v = g.node_count
    w = np.zeros((v, v), dtype=np.float64)
    for i, j in g.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(g.degree(i), g.degree(j)))
    for i in range(v):
        w[i, i] = 1.0 - w[i].sum()
    return w


def sync_gossip_round(models: np.ndarray, w: np.ndarray) -> np.ndarray:
    """Apply one synchronous mixing step to the stacked (V, dim) models."""
    return w @ np.asarray(models, dtype=np.float64)


def async_gossip_step(x: np.ndarray, received) -> np.ndarray:
    """Fold received (possibly stale) neighbor models in pairwise halves."""
    for other in received:
        x = 0.5 * (x + other)
    return x


def central_parallel_sgd(models: np.ndarray) -> np.ndarray:
    """Replace every model by the uniform average (idealized zero-delay server)."""
    models = np.asarray(models, dtype=np.float64)
    avg = models.mean(axis=0)
    return np.broadcast_to(avg, models.shape).copy()


def urw_step(x_global: np.ndarray, v: int, neighbors, task, eta: float,
             rng_sample: np.random.Generator, rng_noise: np.random.Generator,
             rng_walk: np.random.Generator):
    """One random-walk visit at node v.

    Takes one SGD step on the traveling model with a local sample, then
    picks the next node uniformly among the neighbors. Returns
    (updated model, next node, gradient used, sample index). Without
    neighbors the walk stays put.
    """
    idx = task.draw_index(v, rng_sample)
    grad = task.stoch_grad(v, idx, x_global, rng_noise)
    updated = x_global - eta * np.asarray(grad, dtype=np.float64)
    if len(neighbors) == 0:
        nxt = v
    else:
        nxt = int(neighbors[int(rng_walk.integers(len(neighbors)))])
    return updated, nxt, grad, idx


@dataclass
class UrwPayload:
    model: np.ndarray


@dataclass
class GossipPayload:
    model: np.ndarray
    round: int
    sender: int


class _UrwNode(NodeProgram):
    """Holder of the walk token computes; everyone else idles.

    A node's ``model`` is the traveling model as of its last visit, so the
    recorded network average lags the token by design.
    """

    def __init__(self, v, topo, task, sim, recorder, eta, start):
        super().__init__(v)
        self.task = task
        self.recorder = recorder
        self.eta = float(eta)
        self.nbrs = topo.neighbors(v)
        self.model = np.atleast_1d(
            np.asarray(task.init_model(), dtype=np.float64)).copy()
        self.rng_sample = make_rng(sim.seed, "sample", v)
        self.rng_noise = make_rng(sim.seed, "noise", v)
        self.rng_walk = make_rng(sim.seed, "walk", v)
        self.has_token = v == start

    def on_slot(self, t: int) -> None:
        for msg in self.take_inbox():
            self.model = msg.payload.model.copy()
            self.has_token = True
            self.recorder.synced(self.v, t, stream=-1)
        if not self.has_token:
            return
        updated, nxt, grad, idx = urw_step(self.model, self.v, self.nbrs,
                                           self.task, self.eta,
                                           self.rng_sample, self.rng_noise,
                                           self.rng_walk)
        self.recorder.grad_started(self.v, t, t, self.eta, grad, idx)
        self.model = updated
        if nxt != self.v:
            self.send(nxt, UrwPayload(updated.copy()), size=updated.size)
            self.has_token = False


class Urw:
    """Uniform random walk; one SGD step per visit, token moves each slot."""

    def __init__(self, eta: float, start: int = 0):
        self.eta = eta
        self.start = start

    def make_nodes(self, topo, task, sim, recorder):
        return [_UrwNode(v, topo, task, sim, recorder, self.eta, self.start)
                for v in range(topo.node_count)]


class _SyncGossipNode(LocalSgdNode):
    """Compute a fixed budget of local steps, broadcast, then block.

    The node mixes only once models from all neighbors for the current round
    have arrived, so one slow link stalls it (and transitively the network):
    the synchronous-clock straggler effect.
    """

    def __init__(self, v, topo, task, sim, recorder, eta, local_period, w_row):
        super().__init__(v, topo, task, sim, recorder, eta)
        self.local_period = int(local_period)
        self.w_row = w_row
        self.nbrs = topo.neighbors(v)
        self.phase = "compute"
        self.started = 0
        self.round = 0
        self.recv: dict[int, dict[int, np.ndarray]] = {}

    def on_slot(self, t: int) -> None:
        for msg in self.take_inbox():
            p = msg.payload
            self.recv.setdefault(p.round, {})[p.sender] = p.model
        if self.phase == "compute":
            if self.started < self.local_period:
                self.compute_slot(t)
                self.started += 1
            else:
                done = self.pipeline.completed_updates(t)
                if done:
                    self.model = local_step(self.model,
                                            [(e.eta, e.grad) for e in done])
            if self.started == self.local_period and len(self.pipeline) == 0:
                for u in self.nbrs:
                    self.send(u, GossipPayload(self.model.copy(), self.round,
                                               self.v), size=self.model.size)
                self.phase = "wait"
        elif self.phase == "wait":
            have = self.recv.get(self.round, {})
            if all(u in have for u in self.nbrs):
                mixed = self.w_row[self.v] * self.model
                for u in self.nbrs:
                    mixed = mixed + self.w_row[u] * have[u]
                self.model = mixed
                self.recv.pop(self.round, None)
                self.recorder.synced(self.v, t, stream=-1)
                self.round += 1
                self.started = 0
                self.phase = "compute"


class SyncGossip:
    """Rounds of local SGD followed by a barrier and Metropolis mixing."""

    def __init__(self, eta: float, local_period: int = 1):
        self.eta = eta
        self.config = GossipConfig(local_period)

    def make_nodes(self, topo, task, sim, recorder):
        w = metropolis_weights(topo)
        return [_SyncGossipNode(v, topo, task, sim, recorder, self.eta,
                                self.config.local_period, w[v])
                for v in range(topo.node_count)]


class _AsyncGossipNode(LocalSgdNode):
    def __init__(self, v, topo, task, sim, recorder, eta, local_period):
        super().__init__(v, topo, task, sim, recorder, eta)
        self.local_period = int(local_period)
        self.nbrs = topo.neighbors(v)

    def on_slot(self, t: int) -> None:
        msgs = self.take_inbox()
        if msgs:
            self.model = async_gossip_step(self.model,
                                           [m.payload.model for m in msgs])
            self.recorder.synced(self.v, t, stream=-1)
        self.compute_slot(t)
        if t > 0 and t % self.local_period == 0:
            for u in self.nbrs:
                self.send(u, GossipPayload(self.model.copy(), t, self.v),
                          size=self.model.size)


class AsyncGossip:
    """Non-blocking gossip: compute always, broadcast on a fixed cadence,
    average whatever arrives (however stale) pairwise."""

    def __init__(self, eta: float, local_period: int = 1):
        self.eta = eta
        self.config = GossipConfig(local_period)

    def make_nodes(self, topo, task, sim, recorder):
        return [_AsyncGossipNode(v, topo, task, sim, recorder, self.eta,
                                 self.config.local_period)
                for v in range(topo.node_count)]


class CentralParallel:
    """Idealized parameter server: every ``period`` slots all models are
    replaced by their uniform average, with no transport delay."""

    def __init__(self, eta: float, period: int = 1):
        if period < 1:
            raise ValueError("period must be >= 1")
        self.eta = eta
        self.period = period

    def make_nodes(self, topo, task, sim, recorder):
        return [LocalSgdNode(v, topo, task, sim, recorder, self.eta)
                for v in range(topo.node_count)]

    def after_slot(self, t, nodes, recorder) -> None:
        if (t + 1) % self.period != 0:
            return
        models = np.stack([n.model for n in nodes])
        replaced = central_parallel_sgd(models)
        for v, node in enumerate(nodes):
            node.model = replaced[v].copy()
            recorder.synced(v, t, stream=-1)
        recorder.add_transfers(2 * len(nodes), models.shape[1])
