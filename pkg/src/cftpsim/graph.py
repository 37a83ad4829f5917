"""Finite graphs the dynamics run on: tori Z_L^d, trees, and small
hand-built graphs for the exact oracle.

Vertex and edge numbering is fixed and deterministic so that seeded runs
reproduce byte-for-byte: torus vertices are numbered row-major over
coordinates, and torus edges are enumerated direction-major then
vertex-major.  Graphs are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import json

import numpy as np


class Graph:
    """Immutable connected graph with stable edge indexing.

    Attributes
    ----------
    n, m : int
        Vertex and edge counts.
    edges : list of (u, v)
        Edge i is always the same pair, in construction order.
    edge_u, edge_v : int64 arrays
        Endpoint arrays, one entry per edge.
    inc_ptr, inc_edge, inc_other : int64 arrays
        CSR incidence: slots ``inc_ptr[v]:inc_ptr[v+1]`` hold the edge
        index and the opposite endpoint for each edge at vertex v.
    is_tree : bool
        True iff m == n - 1 (graphs are connected by construction).
    """

    def __init__(self, n: int, edges, descriptor: dict | None = None):
        if n < 1:
            raise ValueError("graph needs at least one vertex")
        edges = [(int(u), int(v)) for u, v in edges]
        for u, v in edges:
            if not (0 <= u < n and 0 <= v < n):
                raise ValueError(f"edge ({u}, {v}) out of range for n={n}")
            if u == v:
                raise ValueError(f"self-loop at vertex {u} not allowed")
        self.n = n
        self.m = len(edges)
        self.edges = edges
        self.edge_u = np.array([u for u, _ in edges], dtype=np.int64)
        self.edge_v = np.array([v for _, v in edges], dtype=np.int64)
        self._build_incidence()
        if not self._connected():
            raise ValueError("graph must be connected")
        self.is_tree = self.m == self.n - 1
        self._descriptor = descriptor or {
            "kind": "custom", "n": self.n, "m": self.m,
        }

    def _build_incidence(self):
        deg = np.zeros(self.n, dtype=np.int64)
        for u, v in self.edges:
            deg[u] += 1
            deg[v] += 1
        self.inc_ptr = np.zeros(self.n + 1, dtype=np.int64)
        np.cumsum(deg, out=self.inc_ptr[1:])
        self.inc_edge = np.empty(2 * self.m, dtype=np.int64)
        self.inc_other = np.empty(2 * self.m, dtype=np.int64)
        fill = self.inc_ptr[:-1].copy()
        for i, (u, v) in enumerate(self.edges):
            self.inc_edge[fill[u]] = i
            self.inc_other[fill[u]] = v
            fill[u] += 1
            self.inc_edge[fill[v]] = i
            self.inc_other[fill[v]] = u
            fill[v] += 1
        for a in (self.edge_u, self.edge_v, self.inc_ptr,
                  self.inc_edge, self.inc_other):
            a.setflags(write=False)

    def _connected(self) -> bool:
        if self.n == 1:
            return True
        seen = np.zeros(self.n, dtype=bool)
        stack = [0]
        seen[0] = True
        count = 1
        while stack:
            v = stack.pop()
            for k in range(self.inc_ptr[v], self.inc_ptr[v + 1]):
                w = int(self.inc_other[k])
                if not seen[w]:
                    seen[w] = True
                    count += 1
                    stack.append(w)
        return count == self.n

    def degrees(self) -> np.ndarray:
        return np.diff(self.inc_ptr)

    def description(self) -> dict:
        """JSON-serializable description for experiment manifests."""
        return dict(self._descriptor)

    def to_json(self) -> str:
        return json.dumps(self.description(), sort_keys=True)

    def __repr__(self):
        return f"Graph({self.to_json()})"


def make_torus(d: int, L: int) -> Graph:
    """Torus Z_L^d with n = L**d vertices, m = d * L**d edges.

    L >= 3 is required: L = 2 would create parallel edges, which the
    pivotality and component-count code does not model.
    """
    if d < 1:
        raise ValueError(f"torus dimension must be >= 1, got d={d}")
    if L < 3:
        raise ValueError(f"torus side must be >= 3 (no parallel edges), got L={L}")
    n = L ** d
    edges = []
    # direction-major, then vertex-major; vertices row-major over coords
    for axis in range(d):
        stride = L ** (d - 1 - axis)
        block = stride * L
        for v in range(n):
            coord = (v // stride) % L
            if coord == L - 1:
                w = v - (L - 1) * stride
            else:
                w = v + stride
            edges.append((v, w))
    return Graph(n, edges, descriptor={
        "kind": "torus", "d": d, "L": L, "n": n, "m": len(edges),
    })


def make_tree(shape: str, size: int) -> Graph:
    """Connected acyclic graph with m = n - 1 edges.

    shape "path": size vertices in a line.
    shape "star": a center plus `size` leaves (n = size + 1).
    shape "balanced-binary": heap-ordered complete binary tree on
    `size` vertices (children of i are 2i+1, 2i+2).
    """
    if size < 1:
        raise ValueError(f"tree size must be >= 1, got {size}")
    if shape == "path":
        n = size
        edges = [(i, i + 1) for i in range(n - 1)]
    elif shape == "star":
        n = size + 1
        edges = [(0, i) for i in range(1, n)]
    elif shape == "balanced-binary":
        n = size
        edges = []
        for i in range(n):
            for c in (2 * i + 1, 2 * i + 2):
                if c < n:
                    edges.append((i, c))
    else:
        raise ValueError(f"unknown tree shape {shape!r}")
    return Graph(n, edges, descriptor={
        "kind": "tree", "shape": shape, "size": size, "n": n, "m": len(edges),
    })


def graph_from_description(desc: dict) -> Graph:
    """Rebuild a constructor-made graph from its JSON description."""
    kind = desc.get("kind")
    if kind == "torus":
        return make_torus(int(desc["d"]), int(desc["L"]))
    if kind == "tree":
        return make_tree(desc["shape"], int(desc["size"]))
    raise ValueError(f"cannot rebuild graph of kind {kind!r}")
