"""Divisive l0 ultrametric fitting.

One top-down recursion over (vertex set, working threshold) pairs: cluster S
against the predecessor threshold, recurse into every cluster that lost at
least one percent of S, and peel low-degree rims off a dominant cluster
while stepping the threshold down through the stored weight set. Exact mode
answers every predicate from the dense matrix; sketch mode answers them from
the single-pass sketch pools, spending one fresh sketch instance per
recursion level.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .agreement import (
    AgreementParams,
    ExactView,
    SketchView,
    s_structural_clustering,
)
from .sketches import CompressedSet, SketchConfig, SketchPools
from .streams import MemoryMeter, StreamSource
from .trees import UltrametricTree, _Node


class SketchBudgetError(RuntimeError):
    """The recursion needed more fresh sketch instances than were built."""


@dataclass(frozen=True)
class L0FitReport:
    mode: str
    recursion_calls: int
    max_participation: int
    participation_bound: int
    instances_consumed: int
    peak_words: int
    levels_used: tuple


@dataclass(frozen=True)
class L0FitResult:
    tree: UltrametricTree
    report: L0FitReport


def fit_l0(
    source: StreamSource,
    params: AgreementParams = None,
    config: SketchConfig = None,
    depth_cap: int = 8,
    meter: MemoryMeter = None,
) -> L0FitResult:
    """Fit an ultrametric tree minimizing disagreement count (approximately).

    `params.mode` selects the predicate backend. Sketch mode consumes the
    stream once up front; exact mode materializes the matrix and is the
    deterministic reference path.
    """
    if params is None:
        params = AgreementParams()
    n = source.n
    if n < 1:
        raise ValueError("n must be >= 1")

    if params.mode == "exact":
        matrix = source.dense()
        iu, iv = np.triu_indices(n, k=1)
        values = np.unique(matrix[iu, iv]) if n > 1 else np.array([], dtype=np.int64)
        weights = CompressedSet(values)
        w_max = int(values[-1]) if len(values) else 0
        exact_view = ExactView(matrix)
        pools = None
        meter = meter if meter is not None else MemoryMeter()
        meter.set_words("dense_matrix", n * n)

        def make_view(depth):
            return exact_view

        def degree(u, w, depth):
            return int(exact_view.degrees(w)[u])

    elif params.mode == "sketch":
        if config is None:
            config = SketchConfig.scaled(n)
        pools = SketchPools(config, n, meter)
        meter = pools.meter
        u_arr, v_arr, d_arr = source.arrays(0)
        pools.bulk_ingest(u_arr, v_arr, d_arr)
        pools.finalize()
        weights = pools.build_compressed_set()
        w_max = pools.w_max_seen

        def make_view(depth):
            if depth >= config.instance_count:
                raise SketchBudgetError(
                    f"recursion depth {depth} exhausted the "
                    f"{config.instance_count} sketch instances"
                )
            return SketchView(pools, depth)

        def degree(u, w, depth):
            return pools.estimate_degree(u, w, min(depth, config.instance_count - 1))

    else:
        raise ValueError(f"unsupported mode {params.mode!r}")

    participation = np.zeros(n, dtype=np.int64)
    calls = [0]
    max_depth = [0]

    def recurse(s_arr: np.ndarray, w: int, depth: int) -> _Node:
        calls[0] += 1
        max_depth[0] = max(max_depth[0], depth)
        participation[s_arr] += 1
        if len(s_arr) == 1:
            return _Node(leaf=int(s_arr[0]))
        w_check = weights.pred(w)
        view = make_view(depth)
        clustering = s_structural_clustering(s_arr, w_check, params, view)
        size_s = len(s_arr)
        children = []
        big = None
        for cluster in clustering.clusters:
            if 100 * len(cluster) <= 99 * size_s:
                children.append(recurse(cluster, w_check, depth + 1))
            else:
                big = cluster
        if big is not None:
            cur = big
            w_lo = w_check
            w_probe = weights.pred(w_lo)
            while 100 * len(cur) > 99 * size_s:
                degs = np.array(
                    [degree(int(u), w_probe, depth) for u in cur], dtype=np.int64
                )
                if not 100 * int(np.count_nonzero(100 * degs > 66 * size_s)) > 99 * size_s:
                    break
                rim = cur[100 * degs < 65 * size_s]
                if len(rim):
                    children.append(recurse(rim, w_lo, depth + 1))
                    keep = np.ones(len(cur), dtype=bool)
                    keep[100 * degs < 65 * size_s] = False
                    cur = cur[keep]
                w_lo = w_probe
                w_probe = weights.pred(w_probe)
            children.append(recurse(cur, w_lo, depth + 1))
        return _Node(level=int(w), children=children)

    if n == 1:
        tree = UltrametricTree.single_leaf()
    else:
        root = recurse(np.arange(n, dtype=np.int64), w_max, 0)
        tree = UltrametricTree(n, root)

    bound = depth_cap * max(1, math.ceil(math.log2(max(n, 2))))
    report = L0FitReport(
        mode=params.mode,
        recursion_calls=calls[0],
        max_participation=int(participation.max()),
        participation_bound=bound,
        instances_consumed=(max_depth[0] + 1) if params.mode == "sketch" else 0,
        peak_words=meter.peak,
        levels_used=tuple(tree.internal_levels()),
    )
    return L0FitResult(tree=tree, report=report)
