"""Node programs for local SGD with a traveling global-model token.

Each node keeps updating its local model every slot. A single global model
circulates as a token: whoever receives it folds in the local progress made
since that node's previous merge, adopts the merged model, and forwards the
token depth-first until the whole member set has been covered, then parks it
until the next periodic round. The multi-stream variant runs one such token
per stream of a tree decomposition; streams exchange progress through their
shared endpoint nodes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .simcore import GradPipeline, NodeProgram, make_rng
from .topology import Graph, Stream, StreamPlan, all_pairs_delay, build_rooted_tree, decompose_streams

__all__ = [
    "local_step",
    "merge_global_single",
    "merge_global_multi",
    "dfs_next",
    "schedule_round",
    "DigestPayload",
    "LocalSgdNode",
    "LocalSgd",
    "SingleStreamDigest",
    "MultiStreamDigest",
    "whole_graph_plan",
]


def local_step(x: np.ndarray, completed) -> np.ndarray:
    """Apply every completed gradient: x - sum of eta * grad.

    ``completed`` holds (eta, grad) pairs; the sum is order-independent.
    Returns ``x`` unchanged when nothing completed.
    """
    total = None
    for eta, grad in completed:
        step = eta * np.asarray(grad, dtype=np.float64)
        total = step if total is None else total + step
    if total is None:
        return x
    return x - total


def merge_global_single(global_model: np.ndarray, x: np.ndarray,
                        x_last: np.ndarray, weight: float) -> np.ndarray:
    """Fold a node's progress since its last merge into the global model.

    Returns global + weight * (x - x_last); the caller then adopts the
    result as both its local model and its last-merge copy.
    """
    if weight == 1.0 and np.array_equal(global_model, x_last):
        # exact single-owner case: the formula reduces to x identically,
        # so skip the subtract/add round trip that could cost an ulp
        return np.array(x, dtype=np.float64)
    return global_model + weight * (x - x_last)


def merge_global_multi(global_model: np.ndarray, x: np.ndarray,
                       x_last: np.ndarray, global_last: np.ndarray,
                       weight: float) -> np.ndarray:
    """Stream merge: local progress plus what other streams contributed.

    Returns global + weight * (x - x_last) + (x_last - global_last), where
    ``global_last`` is this stream's model as of the node's previous merge
    with it. The third term injects progress the node received from other
    streams in between; with a single stream it is identically zero.
    """
    if weight == 1.0 and np.array_equal(global_model, x_last) \
            and np.array_equal(global_last, x_last):
        return np.array(x, dtype=np.float64)
    return global_model + weight * (x - x_last) + (x_last - global_last)


def dfs_next(v: int, visited: frozenset, pre_node: int, parent: int,
             neighbors, rng: np.random.Generator):
    """One depth-first routing decision for the token held at node v.

    On the first visit of a round, v joins ``visited`` and records the node
    it got the token from as its walk parent. The token then goes to a
    uniformly random unvisited neighbor, falling back to the walk parent,
    or to None when v is the walk origin with nothing left to explore.
    Returns (visited, parent, destination).
    """
    if v not in visited:
        visited = visited | {v}
        parent = pre_node
    cands = [u for u in neighbors if u not in visited]
    if cands:
        dest = int(cands[int(rng.integers(len(cands)))])
    elif parent != v:
        dest = int(parent)
    else:
        dest = None
    return visited, parent, dest


def schedule_round(t: int, period: int) -> int:
    """First slot after t that lies on the periodic round grid."""
    return t + period - (t % period)


@dataclass
class DigestPayload:
    model: np.ndarray
    visited: frozenset
    sender: int
    stream: int


class LocalSgdNode(NodeProgram):
    """Pipelined local SGD: start one gradient per slot, apply completions.

    A gradient started at slot t is evaluated at the model as of slot t and
    applied at t + lag, lag uniform on [0, max_lag].
    """

    def __init__(self, v: int, topo: Graph, task, sim, recorder, eta: float):
        super().__init__(v)
        self.task = task
        self.sim = sim
        self.recorder = recorder
        self.eta = float(eta)
        self.model = np.atleast_1d(
            np.asarray(task.init_model(), dtype=np.float64)).copy()
        self.weight = float(task.weights[v])
        self.pipeline = GradPipeline()
        self.rng_sample = make_rng(sim.seed, "sample", v)
        self.rng_noise = make_rng(sim.seed, "noise", v)
        self.rng_lag = make_rng(sim.seed, "lag", v) if sim.max_lag > 0 else None

    def _duration(self) -> int:
        if self.rng_lag is None:
            return 1
        return int(self.rng_lag.integers(1, self.sim.max_lag + 2))

    def compute_slot(self, t: int) -> None:
        idx = self.task.draw_index(self.v, self.rng_sample)
        grad = self.task.stoch_grad(self.v, idx, self.model, self.rng_noise)
        entry = self.pipeline.start_gradient(t, idx, self.eta, grad,
                                             self._duration())
        self.recorder.grad_started(self.v, t, entry.completes, self.eta, grad,
                                   idx)
        done = self.pipeline.completed_updates(t)
        if done:
            self.model = local_step(self.model, [(e.eta, e.grad) for e in done])

    def on_slot(self, t: int) -> None:
        self.compute_slot(t)


class LocalSgd:
    """Plain local SGD, no communication at all."""

    def __init__(self, eta: float):
        self.eta = eta

    def make_nodes(self, topo, task, sim, recorder):
        return [LocalSgdNode(v, topo, task, sim, recorder, self.eta)
                for v in range(topo.node_count)]


class _SingleStreamNode(LocalSgdNode):
    def __init__(self, v, topo, task, sim, recorder, eta, period, origin):
        super().__init__(v, topo, task, sim, recorder, eta)
        self.period = int(period)
        self.member_set = frozenset(range(topo.node_count))
        self.nbrs = topo.neighbors(v)
        self.rng_walk = make_rng(sim.seed, "walk", v)
        self.x_last = self.model.copy()
        self.global_model = self.model.copy() if v == origin else None
        self.visited: frozenset = frozenset()
        self.pre_node = v
        self.walk_parent = v
        self.wake: int | None = 0 if v == origin else None

    def on_slot(self, t: int) -> None:
        self.compute_slot(t)
        fire = False
        for msg in self.take_inbox():
            p = msg.payload
            self.global_model = p.model.copy()
            self.visited = p.visited
            self.pre_node = p.sender
            fire = True
        if self.wake == t:
            self.wake = None
            fire = True
        if not fire:
            return
        merged = merge_global_single(self.global_model, self.model,
                                     self.x_last, self.weight)
        self.global_model = merged
        self.model = merged.copy()
        self.x_last = merged.copy()
        self.recorder.synced(self.v, t, stream=0)
        self.recorder.merged(self.v, t, 0, merged)
        self.visited, self.walk_parent, dest = dfs_next(
            self.v, self.visited, self.pre_node, self.walk_parent,
            self.nbrs, self.rng_walk)
        done = self.visited == self.member_set
        if (done and t % self.period != 0) or dest is None:
            self.wake = schedule_round(t, self.period)
            self.visited = frozenset()
        else:
            payload = DigestPayload(self.global_model.copy(), self.visited,
                                    self.v, 0)
            self.send(dest, payload, size=self.global_model.size)
            self.global_model = None   # token left this node


class SingleStreamDigest:
    """One token walks the whole graph; rounds start every ``period`` slots."""

    def __init__(self, eta: float, period: int, origin: int = 0):
        if period < 1:
            raise ValueError("period must be >= 1")
        self.eta = eta
        self.period = period
        self.origin = origin

    def make_nodes(self, topo, task, sim, recorder):
        return [_SingleStreamNode(v, topo, task, sim, recorder, self.eta,
                                  self.period, self.origin)
                for v in range(topo.node_count)]


class _MultiStreamNode(LocalSgdNode):
    def __init__(self, v, topo, task, sim, recorder, eta, plan: StreamPlan):
        super().__init__(v, topo, task, sim, recorder, eta)
        self.rng_walk = make_rng(sim.seed, "walk", v)
        self.x_last = self.model.copy()
        self.member_ids = plan.membership[v]
        self.stream_set: dict[int, frozenset] = {}
        self.stream_nbrs: dict[int, tuple[int, ...]] = {}
        self.period: dict[int, int] = {}
        self.gm: dict[int, np.ndarray | None] = {}
        self.gm_last: dict[int, np.ndarray] = {}
        self.visited: dict[int, frozenset] = {}
        self.pre_node: dict[int, int] = {}
        self.walk_parent: dict[int, int] = {}
        self.wake: dict[int, int | None] = {}
        for m in self.member_ids:
            stream = plan.streams[m]
            members = plan.node_set(m)
            self.stream_set[m] = members
            self.stream_nbrs[m] = tuple(u for u in topo.neighbors(v)
                                        if u in members)
            self.period[m] = stream.period
            origin = stream.origin == v
            self.gm[m] = self.model.copy() if origin else None
            self.gm_last[m] = self.model.copy()
            self.visited[m] = frozenset()
            self.pre_node[m] = v
            self.walk_parent[m] = v
            self.wake[m] = 0 if origin else None

    def on_slot(self, t: int) -> None:
        self.compute_slot(t)
        fired = set()
        for msg in self.take_inbox():
            p = msg.payload
            m = p.stream
            self.gm[m] = p.model.copy()
            self.visited[m] = p.visited
            self.pre_node[m] = p.sender
            fired.add(m)
        for m in self.member_ids:
            if self.wake[m] == t:
                self.wake[m] = None
                fired.add(m)
        for m in sorted(fired):
            self._merge_and_route(t, m)

    def _merge_and_route(self, t: int, m: int) -> None:
        merged = merge_global_multi(self.gm[m], self.model, self.x_last,
                                    self.gm_last[m], self.weight)
        self.gm[m] = merged
        self.model = merged.copy()
        self.x_last = merged.copy()
        self.gm_last[m] = merged.copy()
        self.recorder.synced(self.v, t, stream=m)
        self.recorder.merged(self.v, t, m, merged)
        self.visited[m], self.walk_parent[m], dest = dfs_next(
            self.v, self.visited[m], self.pre_node[m], self.walk_parent[m],
            self.stream_nbrs[m], self.rng_walk)
        done = self.visited[m] == self.stream_set[m]
        if (done and t % self.period[m] != 0) or dest is None:
            self.wake[m] = schedule_round(t, self.period[m])
            self.visited[m] = frozenset()
        else:
            payload = DigestPayload(self.gm[m].copy(), self.visited[m],
                                    self.v, m)
            self.send(dest, payload, size=self.gm[m].size)
            self.gm[m] = None


class MultiStreamDigest:
    """One token per stream of the minimum-radius shortest-path tree.

    ``period`` may be an int (every stream uses it) or a callable
    ``(sid, nodes) -> period``. An explicit ``plan`` overrides the derived
    tree decomposition.
    """

    def __init__(self, eta: float, period=1, plan: StreamPlan | None = None):
        self.eta = eta
        self.period = period
        self.plan = plan

    def build_plan(self, topo: Graph) -> StreamPlan:
        if self.plan is not None:
            return self.plan
        tree = build_rooted_tree(topo, all_pairs_delay(topo))
        return decompose_streams(tree, self.period)

    def make_nodes(self, topo, task, sim, recorder):
        plan = self.build_plan(topo)
        return [_MultiStreamNode(v, topo, task, sim, recorder, self.eta, plan)
                for v in range(topo.node_count)]


def whole_graph_plan(topo: Graph, period: int, origin: int = 0) -> StreamPlan:
    """A degenerate plan with one stream spanning the whole graph.

    Useful to run the multi-stream program as a single-stream one; the walk
    then uses full graph neighborhoods exactly like SingleStreamDigest.
    """
    rest = sorted(set(range(topo.node_count)) - {origin})
    nodes = tuple([origin] + rest)
    stream = Stream(0, nodes, int(period))
    membership = tuple((0,) for _ in range(topo.node_count))
    root_paths = tuple(frozenset() if v == origin else frozenset({0})
                       for v in range(topo.node_count))
    return StreamPlan(streams=(stream,), membership=membership,
                      root_paths=root_paths)
