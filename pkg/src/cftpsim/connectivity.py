"""Pivotality and component-count queries on edge configurations.

An edge e is pivotal to configuration A iff its endpoints are not
connected in A minus e, equivalently iff toggling e changes the number
of connected components.  The result does not depend on whether e is in
A.

Two interchangeable backends are provided and cross-checked in tests:

* ``PivotalityOracle`` (default): BFS from one endpoint over A minus e
  with early exit on reaching the other endpoint.  Scratch buffers are
  reused across queries via a generation counter, so queries allocate
  nothing; this is the dominant inner loop of the dynamics.
* ``LabelingOracle``: full component labeling recomputed per query.

Oracles hold mutable scratch state: use one instance per thread.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import _kernels
from .graph import Graph


@dataclass
class EdgeConfig:
    """Subset A of the edge set, stored as a 0/1 occupancy array."""

    graph: Graph
    occupied: np.ndarray  # uint8, length m

    def __post_init__(self):
        self.occupied = np.ascontiguousarray(self.occupied, dtype=np.uint8)
        if self.occupied.shape != (self.graph.m,):
            raise ValueError(
                f"occupancy length {self.occupied.shape} does not match m={self.graph.m}")

    @classmethod
    def empty(cls, graph: Graph) -> "EdgeConfig":
        return cls(graph, np.zeros(graph.m, dtype=np.uint8))

    @classmethod
    def full(cls, graph: Graph) -> "EdgeConfig":
        return cls(graph, np.ones(graph.m, dtype=np.uint8))

    @classmethod
    def from_bitmask(cls, graph: Graph, bits: int) -> "EdgeConfig":
        occ = np.fromiter(((bits >> i) & 1 for i in range(graph.m)),
                          dtype=np.uint8, count=graph.m)
        return cls(graph, occ)

    def bitmask(self) -> int:
        bits = 0
        for i in np.nonzero(self.occupied)[0]:
            bits |= 1 << int(i)
        return bits

    def n_occupied(self) -> int:
        return int(self.occupied.sum())

    def copy(self) -> "EdgeConfig":
        return EdgeConfig(self.graph, self.occupied.copy())

    def __eq__(self, other):
        return (isinstance(other, EdgeConfig)
                and self.graph is other.graph
                and np.array_equal(self.occupied, other.occupied))


def _as_occ(g: Graph, config) -> np.ndarray:
    if isinstance(config, EdgeConfig):
        if config.graph is not g and config.graph.edges != g.edges:
            raise ValueError("configuration belongs to a different graph")
        return config.occupied
    occ = np.ascontiguousarray(config, dtype=np.uint8)
    if occ.shape != (g.m,):
        raise ValueError(f"occupancy length {occ.shape} does not match m={g.m}")
    return occ


class PivotalityOracle:
    """BFS-per-query backend with reusable scratch buffers."""

    def __init__(self, graph: Graph):
        self.graph = graph
        self._visited = np.zeros(graph.n, dtype=np.int64)
        self._queue = np.empty(graph.n, dtype=np.int64)
        self._stamp = 0

    def is_pivotal(self, config, e: int) -> bool:
        g = self.graph
        if not 0 <= e < g.m:
            raise IndexError(f"edge index {e} out of range for m={g.m}")
        occ = _as_occ(g, config)
        piv, self._stamp = _kernels._bfs_pivotal(
            occ, e, g.inc_ptr, g.inc_edge, g.inc_other,
            g.edge_u, g.edge_v, self._visited, self._queue, self._stamp)
        return bool(piv)

    def component_count(self, config) -> int:
        g = self.graph
        occ = _as_occ(g, config)
        visited = self._visited
        queue = self._queue
        self._stamp += 1
        stamp = self._stamp
        components = 0
        for start in range(g.n):
            if visited[start] == stamp:
                continue
            components += 1
            visited[start] = stamp
            queue[0] = start
            head, tail = 0, 1
            while head < tail:
                v = queue[head]
                head += 1
                for k in range(g.inc_ptr[v], g.inc_ptr[v + 1]):
                    if occ[g.inc_edge[k]] == 0:
                        continue
                    w = g.inc_other[k]
                    if visited[w] != stamp:
                        visited[w] = stamp
                        queue[tail] = w
                        tail += 1
        return components


class LabelingOracle:
    """Cross-check backend: label all components on every query."""

    def __init__(self, graph: Graph):
        self.graph = graph

    def _labels(self, occ, skip_edge: int = -1) -> np.ndarray:
        g = self.graph
        labels = np.full(g.n, -1, dtype=np.int64)
        label = 0
        for start in range(g.n):
            if labels[start] >= 0:
                continue
            stack = [start]
            labels[start] = label
            while stack:
                v = stack.pop()
                for k in range(g.inc_ptr[v], g.inc_ptr[v + 1]):
                    f = g.inc_edge[k]
                    if f == skip_edge or occ[f] == 0:
                        continue
                    w = int(g.inc_other[k])
                    if labels[w] < 0:
                        labels[w] = label
                        stack.append(w)
            label += 1
        return labels

    def is_pivotal(self, config, e: int) -> bool:
        g = self.graph
        if not 0 <= e < g.m:
            raise IndexError(f"edge index {e} out of range for m={g.m}")
        occ = _as_occ(g, config)
        labels = self._labels(occ, skip_edge=e)
        return labels[g.edge_u[e]] != labels[g.edge_v[e]]

    def component_count(self, config) -> int:
        occ = _as_occ(self.graph, config)
        return int(self._labels(occ).max()) + 1


def component_count(g: Graph, config) -> int:
    """Number of connected components of the spanning subgraph (V, A)."""
    return PivotalityOracle(g).component_count(config)


def is_pivotal(g: Graph, config, e: int) -> bool:
    """Whether toggling edge e changes the component count of A."""
    return PivotalityOracle(g).is_pivotal(config, e)
