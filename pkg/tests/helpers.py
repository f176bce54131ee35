"""Shared builders and independent oracles for the test suite.

Oracles here intentionally avoid the library's own code paths: neighbor
checks go through interval intersection, window tests through exact
integer arithmetic, connectivity through a set-based flood fill, so tests
compare two separately derived answers.
"""

from __future__ import annotations

import heapq
from fractions import Fraction

import numpy as np

from mspp.environments import GeneratorSpec, generate_map
from mspp.reduced import ReducedTree, RTNode
from mspp.tree import GridWorld, NodeIndex


def random_world(
    dim: int, depth: int, density: float, seed: int, free_corners: bool = False
) -> GridWorld:
    spec = GeneratorSpec(
        dim,
        depth,
        density,
        seed=seed,
        free_start=free_corners,
        free_goal=free_corners,
    )
    return generate_map(spec)


def random_index(rng, dim: int, depth: int, scale: int | None = None) -> NodeIndex:
    """Uniformly random valid node address."""
    k = int(rng.integers(0, depth + 1)) if scale is None else scale
    step = 2 << k
    per_axis = 1 << (depth - k)
    c2 = tuple(
        int(rng.integers(0, per_axis)) * step + (1 << k) for _ in range(dim)
    )
    return NodeIndex(k, c2)


def interval_face_test(a, b) -> bool:
    """Neighbor oracle: the two cubes share a (d-1)-dimensional face.

    Per axis the closed intervals must intersect; the intersection must be
    a single point on exactly one axis and have positive length on all
    others.
    """
    touching = 0
    ra, rb = 1 << a.scale, 1 << b.scale
    for ca, cb in zip(a.center2, b.center2):
        lo = max(ca - ra, cb - rb)
        hi = min(ca + ra, cb + rb)
        if hi < lo:
            return False
        if hi == lo:
            touching += 1
    return touching == 1


def pairwise_edges(leaves) -> set[tuple[NodeIndex, NodeIndex]]:
    """Vectorized quadratic neighbor scan over leaf nodes.

    Runs the center-distance conditions on all pairs at once: every axis
    within the scale-sum threshold and exactly one axis attaining it.
    """
    idx = [NodeIndex(n.scale, n.center2) for n in leaves]
    centers = np.array([n.center2 for n in leaves], dtype=np.int64)
    spans = np.array([1 << n.scale for n in leaves], dtype=np.int64)
    diffs = np.abs(centers[:, None, :] - centers[None, :, :])
    thresh = (spans[:, None] + spans[None, :])[:, :, None]
    hit = diffs == thresh
    ok = (diffs <= thresh).all(axis=2) & (hit.sum(axis=2) == 1)
    out: set[tuple[NodeIndex, NodeIndex]] = set()
    for i, j in zip(*np.nonzero(ok)):
        if i < j:
            a, b = idx[i], idx[j]
            out.add((a, b) if a <= b else (b, a))
    return out


def random_rtree(rng, dim: int, depth: int, split_prob: float = 0.5,
                 hole_prob: float = 0.06) -> ReducedTree:
    """Random pruned tree with mixed-scale leaves and removed subtrees."""
    tree = ReducedTree(dim, depth)

    def split(node: RTNode) -> None:
        if node.scale == 0 or rng.random() >= split_prob:
            return
        half = 1 << (node.scale - 1)
        kids = []
        for slot in range(1 << dim):
            q2 = tuple(
                node.center2[j] + (half if (slot >> j) & 1 else -half)
                for j in range(dim)
            )
            if rng.random() < hole_prob:
                kids.append(None)
            else:
                kids.append(RTNode(node.scale - 1, q2))
        if all(k is None for k in kids):
            return
        node.children = kids
        for child in kids:
            if child is not None:
                split(child)

    split(tree.root)
    return tree


def full_rtree(dim: int, depth: int) -> ReducedTree:
    """Reduced tree subdivided to unit cells everywhere."""
    tree = ReducedTree(dim, depth)

    def split(node: RTNode) -> None:
        if node.scale == 0:
            return
        half = 1 << (node.scale - 1)
        node.children = []
        for slot in range(1 << dim):
            q2 = tuple(
                node.center2[j] + (half if (slot >> j) & 1 else -half)
                for j in range(dim)
            )
            child = RTNode(node.scale - 1, q2)
            node.children.append(child)
            split(child)

    split(tree.root)
    return tree


def grid_bfs_reachable(world: GridWorld, a, b) -> bool:
    """Set-based breadth-first flood fill over free cells."""
    if world.occupied(a) or world.occupied(b):
        return False
    a, b = tuple(a), tuple(b)
    seen = {a}
    frontier = [a]
    while frontier:
        nxt = []
        for cell in frontier:
            if cell == b:
                return True
            for j in range(world.dim):
                for delta in (1, -1):
                    c = cell[j] + delta
                    if not 0 <= c < world.side:
                        continue
                    nb = cell[:j] + (c,) + cell[j + 1:]
                    if nb in seen or world.occupied(nb):
                        continue
                    seen.add(nb)
                    nxt.append(nb)
        frontier = nxt
    return b in seen


def dijkstra_vertex_path_cost(vertices, edges, value_of, weight, start, goal):
    """Eager shortest-path oracle over a fully materialized vertex graph.

    Edge cost is center distance times (1 + weight * value(target)).
    Returns the minimal cost to goal or None when unreachable.
    """
    adjacency: dict[NodeIndex, list[NodeIndex]] = {v: [] for v in vertices}
    for a, b in edges:
        adjacency[a].append(b)
        adjacency[b].append(a)

    def edge_cost(u, v):
        s = sum((ca - cb) ** 2 for ca, cb in zip(u.center2, v.center2))
        return 0.5 * s**0.5 * (1.0 + weight * value_of(v))

    dist = {start: 0.0}
    done = set()
    heap = [(0.0, start)]
    while heap:
        d, u = heapq.heappop(heap)
        if u in done:
            continue
        if u == goal:
            return d
        done.add(u)
        for v in adjacency[u]:
            nd = d + edge_cost(u, v)
            if nd < dist.get(v, float("inf")):
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return None


def window_far_oracle(idx: NodeIndex, current: NodeIndex, alpha) -> bool:
    """Exact far-window test by squaring twice in rational arithmetic.

    The node is far when den * ||c2 - cur2|| >= num * 2^(k+1) + den * sqrt(d)
    * 2^(k_i), with alpha = num / den.  Both sides are nonnegative, so after
    moving the rational part left the comparison squares exactly.
    """
    frac = Fraction(alpha)
    num, den = frac.numerator, frac.denominator
    s = sum((a - b) ** 2 for a, b in zip(idx.center2, current.center2))
    dim = len(idx.center2)
    a = num << (idx.scale + 1)
    b = den << current.scale
    lhs = den * den * s - a * a - dim * b * b
    if lhs < 0:
        return False
    return lhs * lhs >= 4 * a * a * b * b * dim
