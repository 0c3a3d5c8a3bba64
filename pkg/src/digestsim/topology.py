"""Communication graphs: random generation, link delays, rooted trees, streams.

Everything here is pure and deterministic given the seed arguments, so any
number of concurrent experiment workers can call these functions safely.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "Graph",
    "RootedTree",
    "Stream",
    "StreamPlan",
    "DisconnectedGraphError",
    "generate_erdos_renyi",
    "assign_delays",
    "all_pairs_delay",
    "build_rooted_tree",
    "decompose_streams",
    "to_edgelist",
    "from_edgelist",
    "save_graph",
    "load_graph",
]

DEFAULT_RETRY_BUDGET = 1000


class DisconnectedGraphError(RuntimeError):
    """Raised when no connected sample is found within the retry budget."""


@dataclass
class Graph:
    """Undirected graph with a mean delay (in slots) attached to every link.

    Edges are stored as (i, j) pairs with i < j; ``delays`` is parallel to
    ``edges``. Treat instances as immutable.
    """

    node_count: int
    edges: tuple[tuple[int, int], ...]
    delays: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.node_count < 1:
            raise ValueError("node_count must be >= 1")
        if len(self.delays) != len(self.edges):
            raise ValueError("delays must be parallel to edges")
        norm = []
        seen = set()
        for i, j in self.edges:
            if i == j:
                raise ValueError(f"self-loop on node {i}")
            if not (0 <= i < self.node_count and 0 <= j < self.node_count):
                raise ValueError(f"edge ({i},{j}) out of range")
            e = (min(i, j), max(i, j))
            if e in seen:
                raise ValueError(f"duplicate edge {e}")
            seen.add(e)
            norm.append(e)
        self.edges = tuple(norm)
        for d in self.delays:
            if d < 0:
                raise ValueError("mean delays must be nonnegative")
        nbrs: list[list[int]] = [[] for _ in range(self.node_count)]
        dmap: dict[tuple[int, int], float] = {}
        for (i, j), d in zip(self.edges, self.delays):
            nbrs[i].append(j)
            nbrs[j].append(i)
            dmap[(i, j)] = float(d)
        self._neighbors = tuple(tuple(sorted(ns)) for ns in nbrs)
        self._delay_map = dmap

    def neighbors(self, v: int) -> tuple[int, ...]:
        return self._neighbors[v]

    def degree(self, v: int) -> int:
        return len(self._neighbors[v])

    def delay(self, u: int, v: int) -> float:
        return self._delay_map[(min(u, v), max(u, v))]

    def is_connected(self) -> bool:
        if self.node_count == 1:
            return True
        seen = {0}
        stack = [0]
        while stack:
            u = stack.pop()
            for w in self._neighbors[u]:
                if w not in seen:
                    seen.add(w)
                    stack.append(w)
        return len(seen) == self.node_count

    def with_delays(self, delays) -> "Graph":
        return Graph(self.node_count, self.edges, tuple(float(d) for d in delays))


@dataclass
class RootedTree:
    """Spanning tree of a graph, rooted at the node of minimum radius."""

    root: int
    parent: tuple[int, ...]            # parent[root] == root
    children: tuple[tuple[int, ...], ...]
    radius: tuple[float, ...]          # radius[v] = max_u dist[v][u]


@dataclass(frozen=True)
class Stream:
    sid: int
    nodes: tuple[int, ...]   # ordered root-end first
    period: int

    @property
    def origin(self) -> int:
        return self.nodes[0]


@dataclass
class StreamPlan:
    """Decomposition of a rooted tree into root-to-branch token streams."""

    streams: tuple[Stream, ...]
    membership: tuple[tuple[int, ...], ...]   # per node, stream ids through it
    root_paths: tuple[frozenset, ...]         # per node, stream ids on the root path

    def node_set(self, sid: int) -> frozenset:
        return frozenset(self.streams[sid].nodes)

    def h_prime(self) -> int:
        """Largest total period along any root-to-node chain of streams."""
        best = 0
        for path in self.root_paths:
            best = max(best, sum(self.streams[m].period for m in path))
        return best


def generate_erdos_renyi(v_count: int, p: float, seed: int,
                         retries: int = DEFAULT_RETRY_BUDGET) -> Graph:
    """Sample a connected Erdos-Renyi graph; resample on disconnection.

    Each attempt uses a seed derived from (seed, attempt) so retries are
    reproducible. Edge mean delays start at zero; see ``assign_delays``.
    """
    if v_count < 2:
        raise ValueError("v_count must be >= 2")
    if not (0.0 < p <= 1.0):
        raise ValueError("p must be in (0, 1]")
    iu, ju = np.triu_indices(v_count, k=1)
    for attempt in range(retries):
        rng = np.random.default_rng(np.random.SeedSequence([seed, attempt]))
        mask = rng.random(len(iu)) < p
        edges = tuple((int(i), int(j)) for i, j in zip(iu[mask], ju[mask]))
        g = Graph(v_count, edges, (0.0,) * len(edges))
        if g.is_connected():
            return g
    raise DisconnectedGraphError(
        f"disconnected after {retries} attempts (v={v_count}, p={p})")


def assign_delays(g: Graph, mean_range: tuple[float, float], seed: int) -> Graph:
    """Draw each link's mean delay uniformly from [lo, hi] slots."""
    lo, hi = float(mean_range[0]), float(mean_range[1])
    if not (0.0 <= lo <= hi):
        raise ValueError("mean_range must satisfy 0 <= lo <= hi")
    rng = np.random.default_rng(np.random.SeedSequence([seed, 777]))
    delays = lo + (hi - lo) * rng.random(len(g.edges))
    return g.with_delays(delays)


def all_pairs_delay(g: Graph) -> np.ndarray:
    """Shortest-path delay between every node pair.

    Computed by distance-vector relaxation (repeated min-plus updates over
    neighbors) until the fixed point is reached, which mirrors how nodes
    would learn the distances by message passing.
    """
    if not g.is_connected():
        raise ValueError("graph must be connected")
    v = g.node_count
    w = np.full((v, v), np.inf)
    for (i, j), d in zip(g.edges, g.delays):
        w[i, j] = d
        w[j, i] = d
    dist = np.full((v, v), np.inf)
    np.fill_diagonal(dist, 0.0)
    for _ in range(v):
        relaxed = np.minimum(dist, (w[:, :, None] + dist[None, :, :]).min(axis=1))
        if np.array_equal(relaxed, dist):
            break
        dist = relaxed
    # float addition is not associative, so the two directions of one path
    # can differ in the last ulp; both are achievable path sums, keep the min
    return np.minimum(dist, dist.T)


def build_rooted_tree(g: Graph, dm: np.ndarray) -> RootedTree:
    """Shortest-path tree rooted at the node of minimum radius.

    Ties for the root and for parents go to the smallest node id so repeated
    calls are byte-identical. Parents come from a root-side shortest-path
    search, which keeps the tree acyclic even when link delays tie (for
    example when they are all zero).
    """
    import heapq

    radius = dm.max(axis=1)
    root = int(np.argmin(radius))
    v = g.node_count
    dist = [np.inf] * v
    parent = [root] * v
    dist[root] = 0.0
    settled = [False] * v
    heap: list[tuple[float, int]] = [(0.0, root)]
    while heap:
        d, u = heapq.heappop(heap)
        if settled[u]:
            continue
        settled[u] = True
        for wnode in g.neighbors(u):
            if settled[wnode]:
                continue
            cand = d + g.delay(u, wnode)
            if cand < dist[wnode] or (cand == dist[wnode] and u < parent[wnode]):
                dist[wnode] = cand
                parent[wnode] = u
                heapq.heappush(heap, (cand, wnode))
    children: list[list[int]] = [[] for _ in range(v)]
    for u in range(v):
        if u != root:
            children[parent[u]].append(u)
    return RootedTree(
        root=root,
        parent=tuple(parent),
        children=tuple(tuple(sorted(cs)) for cs in children),
        radius=tuple(float(r) for r in radius),
    )


def decompose_streams(tree: RootedTree, h_policy) -> StreamPlan:
    """Split a rooted tree into streams, one per child of every branch node.

    A stream runs from its origin through any chain of single-child nodes and
    ends at the first node that is a leaf or has two or more children; branch
    endpoints then originate one new stream per child. ``h_policy`` is either
    a constant period for all streams or a callable ``(sid, nodes) -> period``.
    """
    def period_of(sid: int, nodes: tuple[int, ...]) -> int:
        h = h_policy(sid, nodes) if callable(h_policy) else h_policy
        h = int(h)
        if h < 1:
            raise ValueError("stream period must be >= 1")
        return h

    raw: list[tuple[int, ...]] = []
    origins = [tree.root]
    while origins:
        org = origins.pop(0)
        for child in tree.children[org]:
            nodes = [org, child]
            while len(tree.children[nodes[-1]]) == 1:
                nodes.append(tree.children[nodes[-1]][0])
            raw.append(tuple(nodes))
            if tree.children[nodes[-1]]:
                origins.append(nodes[-1])
    if not raw:
        raw = [(tree.root,)]

    streams = tuple(Stream(sid, nodes, period_of(sid, nodes))
                    for sid, nodes in enumerate(raw))

    v_count = len(tree.parent)
    member: list[list[int]] = [[] for _ in range(v_count)]
    incoming: dict[int, int] = {}     # non-origin node -> the stream it arrived by
    for s in streams:
        for pos, u in enumerate(s.nodes):
            member[u].append(s.sid)
            if pos > 0:
                incoming[u] = s.sid

    paths: dict[int, frozenset] = {tree.root: frozenset()}

    def root_path(u: int) -> frozenset:
        if u in paths:
            return paths[u]
        m = incoming[u]
        paths[u] = root_path(streams[m].origin) | {m}
        return paths[u]

    root_paths = tuple(root_path(u) for u in range(v_count))
    membership = tuple(tuple(ms) for ms in member)

    covered = set()
    for s in streams:
        covered.update(s.nodes)
    if covered != set(range(v_count)):
        raise AssertionError("stream decomposition does not cover the graph")
    return StreamPlan(streams=streams, membership=membership, root_paths=root_paths)


def to_edgelist(g: Graph) -> str:
    """Serialize as text: header 'V E', then one 'i j mean_delay' line per edge."""
    lines = [f"{g.node_count} {len(g.edges)}"]
    for (i, j), d in zip(g.edges, g.delays):
        lines.append(f"{i} {j} {d!r}")
    return "\n".join(lines) + "\n"


def from_edgelist(text: str) -> Graph:
    lines = [ln for ln in text.splitlines() if ln.strip()]
    if not lines:
        raise ValueError("empty edge-list text")
    head = lines[0].split()
    if len(head) != 2:
        raise ValueError("header must be 'V E'")
    v_count, e_count = int(head[0]), int(head[1])
    if len(lines) - 1 != e_count:
        raise ValueError(f"expected {e_count} edges, found {len(lines) - 1}")
    edges = []
    delays = []
    for ln in lines[1:]:
        parts = ln.split()
        if len(parts) != 3:
            raise ValueError(f"bad edge line: {ln!r}")
        edges.append((int(parts[0]), int(parts[1])))
        delays.append(float(parts[2]))
    return Graph(v_count, tuple(edges), tuple(delays))


def save_graph(g: Graph, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(to_edgelist(g))


def load_graph(path) -> Graph:
    with open(path, "r", encoding="utf-8") as fh:
        return from_edgelist(fh.read())
