"""l-infinity ultrametric fitting via a streaming spanning forest.

Single pass: maintain a minimum spanning forest under the cycle property;
the max-edge-on-path ultrametric of the forest (built by single linkage)
is the pointwise-maximal ultrametric below D and a 2-approximation.
Two passes: raise every level by half the worst undershoot, which is exactly
optimal.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .streams import StreamIntegrityError, StreamSource
from .trees import DomainError, UltrametricTree, single_linkage_tree


class MstState:
    """Spanning forest of the edges seen so far (at most n-1 kept)."""

    def __init__(self, n: int):
        self.n = n
        self.adj: list[dict] = [dict() for _ in range(n)]
        self.edge_count = 0

    def _path(self, start, goal):
        """Vertex path start..goal in the forest, or None."""
        prev = {start: start}
        stack = [start]
        while stack:
            x = stack.pop()
            if x == goal:
                path = [x]
                while path[-1] != start:
                    path.append(prev[path[-1]])
                return path
            for y in self.adj[x]:
                if y not in prev:
                    prev[y] = x
                    stack.append(y)
        return None

    def ingest(self, u: int, v: int, w: int):
        """Insert an edge; on a cycle, evict the lexicographically largest
        (weight, pair) edge so the forest stays minimum."""
        path = self._path(u, v)
        if path is None:
            self.adj[u][v] = w
            self.adj[v][u] = w
            self.edge_count += 1
            return
        worst = (w, max(u, v), min(u, v))
        worst_edge = None
        for a, b in zip(path, path[1:]):
            key = (self.adj[a][b], max(a, b), min(a, b))
            if key > worst:
                worst = key
                worst_edge = (a, b)
        if worst_edge is not None:
            a, b = worst_edge
            del self.adj[a][b]
            del self.adj[b][a]
            self.adj[u][v] = w
            self.adj[v][u] = w

    def edges(self):
        out = []
        for a in range(self.n):
            for b, w in self.adj[a].items():
                if a < b:
                    out.append((w, a, b))
        return sorted(out)


def mst_ingest(state: MstState, entry):
    state.ingest(entry.u, entry.v, entry.d)


def _build_forest(source: StreamSource, pass_index=0) -> MstState:
    n = source.n
    state = MstState(n)
    seen = np.zeros(source.expected_entries, dtype=bool)
    u_arr, v_arr, d_arr = source.arrays(pass_index)
    idx = u_arr * (2 * n - u_arr - 1) // 2 + (v_arr - u_arr - 1)
    for i in range(len(d_arr)):
        if seen[idx[i]]:
            raise StreamIntegrityError("duplicate pair in stream")
        seen[idx[i]] = True
        state.ingest(int(u_arr[i]), int(v_arr[i]), int(d_arr[i]))
    if not seen.all():
        raise StreamIntegrityError("stream is missing pairs")
    return state


@dataclass(frozen=True)
class LinfExactResult:
    tree: UltrametricTree
    optimal_cost: int
    slack: int                 # worst undershoot of the one-pass tree
    certificate_pair: tuple    # pair attaining the undershoot


def fit_linf_min_decrement(source: StreamSource) -> UltrametricTree:
    """One-pass pointwise-maximal ultrametric below D (2-approximate)."""
    state = _build_forest(source)
    if source.n == 1:
        return UltrametricTree.single_leaf()
    return single_linkage_tree(source.n, state.edges())


def fit_linf_exact(source: StreamSource) -> LinfExactResult:
    """Two passes: min-decrement tree, then raise all levels by slack/2."""
    under = fit_linf_min_decrement(source)
    slack = 0
    cert = None
    induced = under.induced_matrix()
    for u, v, d in zip(*source.arrays(1)):
        gap = int(d) - int(induced[u, v])
        if gap < 0:
            raise DomainError("min-decrement output exceeded an input distance")
        if gap > slack or cert is None:
            slack = gap
            cert = (int(u), int(v))
    if slack % 2 != 0:
        raise DomainError("half-unit shift not representable; use even inputs")
    tree = under.shift_levels(slack // 2) if slack else under
    return LinfExactResult(
        tree=tree, optimal_cost=slack // 2, slack=slack, certificate_pair=cert
    )
