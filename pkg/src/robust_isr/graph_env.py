"""Surveillance graphs: the six topology families, adjacency and reachability.

Nodes are integers ``0..S-1``; grids use row-major indexing. Every graph
carries a true threat type per node, drawn uniformly from ``1..n_types``.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, fields
from functools import cached_property
from itertools import combinations

import numpy as np

from ._validation import ConfigurationError, check_int, check_node, check_scalar

FAMILIES = ("grid", "grid-del", "erdos-renyi", "barabasi-albert", "sbm", "star")

SENSE, MOVE = 0, 1

# parameters each family requires (seed and n_types are always allowed)
_REQUIRED = {
    "grid": ("rows", "cols"),
    "grid-del": ("rows", "cols", "deletion_fraction"),
    "erdos-renyi": ("n_nodes", "p"),
    "barabasi-albert": ("n_nodes", "m"),
    "sbm": ("n_nodes", "n_blocks", "p_intra", "p_inter"),
    "star": ("n_leaves",),
}
_OPTIONAL = {"grid-del": ("require_connected",)}


@dataclass(frozen=True)
class TopologySpec:
    """Which graph to build. Only the parameters of ``family`` may be set."""

    family: str
    rows: int | None = None
    cols: int | None = None
    n_nodes: int | None = None
    p: float | None = None
    m: int | None = None
    n_blocks: int | None = None
    p_intra: float | None = None
    p_inter: float | None = None
    n_leaves: int | None = None
    deletion_fraction: float | None = None
    require_connected: bool | None = None
    seed: int = 0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ConfigurationError(
                f"unknown family {self.family!r}; expected one of {', '.join(FAMILIES)}",
                key="family",
            )
        allowed = set(_REQUIRED[self.family]) | set(_OPTIONAL.get(self.family, ()))
        for f in fields(self):
            if f.name in ("family", "seed"):
                continue
            value = getattr(self, f.name)
            if f.name in _REQUIRED[self.family] and value is None:
                raise ConfigurationError(f"required for family {self.family!r}", key=f.name)
            if f.name not in allowed and value is not None:
                raise ConfigurationError(f"not a parameter of family {self.family!r}", key=f.name)
        for name in ("rows", "cols", "n_nodes", "m", "n_blocks", "n_leaves"):
            if getattr(self, name) is not None:
                check_int(getattr(self, name), name, min_value=1)
        for name in ("p", "p_intra", "p_inter", "deletion_fraction"):
            if getattr(self, name) is not None:
                check_scalar(getattr(self, name), name, 0.0, 1.0)
        check_int(self.seed, "seed", min_value=0)
        if self.family == "barabasi-albert" and self.m >= self.n_nodes:
            raise ConfigurationError(
                f"m={self.m} must be smaller than n_nodes={self.n_nodes}", key="m"
            )
        if self.family == "sbm" and self.n_blocks > self.n_nodes:
            raise ConfigurationError("more blocks than nodes", key="n_blocks")

    @property
    def size(self):
        if self.family in ("grid", "grid-del"):
            return self.rows * self.cols
        if self.family == "star":
            return self.n_leaves + 1
        return self.n_nodes

    def params(self):
        """Set parameters as an ordered dict (excluding ``None``)."""
        return {f.name: getattr(self, f.name) for f in fields(self) if getattr(self, f.name) is not None}

    def describe(self):
        return " ".join(f"{k}={v}" for k, v in self.params().items())

    def replace(self, **changes):
        params = self.params()
        params.update(changes)
        return TopologySpec(**params)


@dataclass(frozen=True, eq=False)
class GraphEnvironment:
    """Immutable undirected graph with per-node true threat types."""

    n_nodes: int
    edges: tuple[tuple[int, int], ...]
    threat: tuple[int, ...]
    n_types: int
    spec: TopologySpec | None = None

    @cached_property
    def adjacency(self):
        nbrs = [[] for _ in range(self.n_nodes)]
        for u, v in self.edges:
            nbrs[u].append(v)
            nbrs[v].append(u)
        return tuple(tuple(sorted(x)) for x in nbrs)

    @cached_property
    def move_targets(self):
        """Per node, the admissible move targets (itself when isolated)."""
        return tuple(nb if nb else (v,) for v, nb in enumerate(self.adjacency))

    @cached_property
    def move_table(self):
        """Padded ``(S, max_deg)`` target array plus per-row counts, for vectorized sweeps."""
        counts = np.array([len(t) for t in self.move_targets], dtype=np.int64)
        table = np.zeros((self.n_nodes, counts.max()), dtype=np.int64)
        for v, targets in enumerate(self.move_targets):
            table[v, : len(targets)] = targets
            table[v, len(targets):] = targets[-1]
        table.setflags(write=False)
        return table, counts

    @property
    def n_edges(self):
        return len(self.edges)

    @property
    def n_states(self):
        """Size of the lifted (node, phase) state space."""
        return 2 * self.n_nodes

    def degree(self, v):
        return len(self.adjacency[v])

    def same_as(self, other):
        return (
            self.n_nodes == other.n_nodes
            and self.edges == other.edges
            and self.threat == other.threat
        )


def neighbors(g, v):
    """Sorted neighbors of ``v``; ``(v,)`` if the node is isolated."""
    v = check_node(v, g.n_nodes)
    return g.move_targets[v]


def reachable_nodes(g, start):
    """Breadth-first closure of ``start`` under adjacency."""
    start = check_node(start, g.n_nodes)
    seen = {start}
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for w in g.adjacency[u]:
            if w not in seen:
                seen.add(w)
                queue.append(w)
    return frozenset(seen)


def largest_component_root(g):
    """Lowest-index node of the largest connected component."""
    best, best_size, seen = 0, 0, set()
    for v in range(g.n_nodes):
        if v in seen:
            continue
        comp = reachable_nodes(g, v)
        seen |= comp
        if len(comp) > best_size:
            best, best_size = min(comp), len(comp)
    return best


def _grid_edges(rows, cols):
    edges = []
    for r in range(rows):
        for c in range(cols):
            v = r * cols + c
            if c + 1 < cols:
                edges.append((v, v + 1))
            if r + 1 < rows:
                edges.append((v, v + cols))
    return sorted(edges)


def _is_connected(n, edges):
    nbrs = [[] for _ in range(n)]
    for u, v in edges:
        nbrs[u].append(v)
        nbrs[v].append(u)
    seen = {0}
    stack = [0]
    while stack:
        for w in nbrs[stack.pop()]:
            if w not in seen:
                seen.add(w)
                stack.append(w)
    return len(seen) == n


def _grid_del_edges(spec, rng):
    full = _grid_edges(spec.rows, spec.cols)
    n_delete = int(round(spec.deletion_fraction * len(full)))
    n = spec.rows * spec.cols
    if not spec.require_connected:
        drop = set(rng.choice(len(full), size=n_delete, replace=False).tolist())
        return [e for i, e in enumerate(full) if i not in drop]
    kept = list(full)
    deleted = 0
    for i in rng.permutation(len(full)):
        if deleted == n_delete:
            break
        candidate = [e for e in kept if e != full[i]]
        if _is_connected(n, candidate):
            kept = candidate
            deleted += 1
    if deleted < n_delete:
        raise ConfigurationError(
            f"cannot delete {n_delete} edges while keeping the grid connected",
            key="deletion_fraction",
        )
    return kept


def _erdos_renyi_edges(n, p, rng):
    pairs = list(combinations(range(n), 2))
    keep = rng.random(len(pairs)) < p
    return [e for e, k in zip(pairs, keep) if k]


def _barabasi_albert_edges(n, m, rng):
    core = m + 1
    edges = list(combinations(range(min(core, n)), 2))
    degree = np.zeros(n, dtype=float)
    for u, v in edges:
        degree[u] += 1
        degree[v] += 1
    for new in range(core, n):
        weights = degree[:new] / degree[:new].sum()
        targets = rng.choice(new, size=m, replace=False, p=weights)
        for t in sorted(int(x) for x in targets):
            edges.append((t, new))
            degree[t] += 1
            degree[new] += 1
    return edges


def block_sizes(n, n_blocks):
    base, extra = divmod(n, n_blocks)
    return [base + (1 if i < extra else 0) for i in range(n_blocks)]


def _sbm_edges(spec, rng):
    block = np.repeat(np.arange(spec.n_blocks), block_sizes(spec.n_nodes, spec.n_blocks))
    pairs = list(combinations(range(spec.n_nodes), 2))
    draws = rng.random(len(pairs))
    edges = []
    for (u, v), x in zip(pairs, draws):
        prob = spec.p_intra if block[u] == block[v] else spec.p_inter
        if x < prob:
            edges.append((u, v))
    return edges


def build_topology(spec, n_types=3):
    """Build the graph described by ``spec`` and assign true threat types.

    Structure and threat assignment use independent substreams of
    ``spec.seed``, so the same seed gives the same threat layout whichever
    planner is run on it.
    """
    n_types = check_int(n_types, "n_types", min_value=1)
    ss_structure, ss_threat = np.random.SeedSequence(spec.seed).spawn(2)
    rng = np.random.default_rng(ss_structure)
    fam = spec.family
    if fam == "grid":
        edges = _grid_edges(spec.rows, spec.cols)
    elif fam == "grid-del":
        edges = _grid_del_edges(spec, rng)
    elif fam == "erdos-renyi":
        edges = _erdos_renyi_edges(spec.n_nodes, spec.p, rng)
    elif fam == "barabasi-albert":
        edges = _barabasi_albert_edges(spec.n_nodes, spec.m, rng)
    elif fam == "sbm":
        edges = _sbm_edges(spec, rng)
    else:
        edges = [(0, leaf) for leaf in range(1, spec.n_leaves + 1)]
    n = spec.size
    edges = tuple(sorted({(min(u, v), max(u, v)) for u, v in edges if u != v}))
    threat = np.random.default_rng(ss_threat).integers(1, n_types + 1, size=n)
    return GraphEnvironment(
        n_nodes=n, edges=edges, threat=tuple(int(x) for x in threat), n_types=n_types, spec=spec
    )


def write_edge_list(g, path):
    """Write ``u v`` lines with a comment header carrying the spec and threat layout."""
    lines = []
    if g.spec is not None:
        lines.append(f"# spec: {g.spec.describe()}")
        lines.append(f"# seed: {g.spec.seed}")
    lines.append(f"# nodes: {g.n_nodes}")
    lines.append("# threats: " + " ".join(str(t) for t in g.threat))
    lines.extend(f"{u} {v}" for u, v in g.edges)
    text = "\n".join(lines) + "\n"
    if path is None:
        return text
    with open(path, "w") as fh:
        fh.write(text)
    return text


def read_edge_list(path, n_types=3):
    n_nodes, threat, edges = None, None, []
    with open(path) as fh:
        for lineno, raw in enumerate(fh, 1):
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                key, _, value = line[1:].partition(":")
                key = key.strip()
                if key == "nodes":
                    n_nodes = int(value)
                elif key == "threats":
                    threat = tuple(int(x) for x in value.split())
                continue
            parts = line.split()
            if len(parts) != 2:
                raise ConfigurationError(f"expected 'u v', got {line!r}", line=lineno)
            u, v = (int(x) for x in parts)
            edges.append((min(u, v), max(u, v)))
    if n_nodes is None:
        n_nodes = 1 + max((max(e) for e in edges), default=0)
    if threat is None:
        threat = (1,) * n_nodes
    return GraphEnvironment(n_nodes, tuple(sorted(set(edges))), threat, n_types)
