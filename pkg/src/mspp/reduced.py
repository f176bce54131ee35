"""Reduced trees: the coarsened planning view rebuilt around a focus cell.

Each planning iteration keeps a mutable tree whose leaves are the graph
vertices.  Far from the focus cell the tree stops at coarse nodes, close to
it (and around every cell already on the traversed path) it refines to the
finest stored resolution.  A node stops subdividing when

    ||center - focus_center||_2  >=  alpha * 2**scale + circumradius(focus)

which is evaluated exactly: alpha is a dyadic float, so both sides can be
squared into integer comparisons on doubled coordinates; the lone square
root of dim is eliminated by squaring twice with sign checks, folded into a
per-scale integer threshold.

Scale-weighted obstacle nodes and explicitly blocked cells are removed
entirely (a removed child leaves a None hole in its parent's child list),
and internal nodes whose children were all removed are dropped too, so the
tree never retains obstacle regions.  The same node objects are reused
across refreshes; refreshing in place or from scratch yields identical
trees.
"""

from __future__ import annotations

from fractions import Fraction
from math import isqrt
from typing import AbstractSet

from .tree import COORD_BITS, NodeIndex, OccupancyTree

__all__ = [
    "RTNode",
    "ReducedTree",
    "CellTracker",
    "refresh",
    "window_far",
    "window_thresholds",
]


class RTNode:
    """One node of a reduced tree.

    children is None for a leaf (a graph vertex) or a list of length
    2**dim whose entries may be None where a subtree was removed.
    """

    __slots__ = ("scale", "center2", "children")

    def __init__(self, scale: int, center2: tuple[int, ...], children=None):
        self.scale = scale
        self.center2 = center2
        self.children = children

    def index(self) -> NodeIndex:
        return NodeIndex(self.scale, self.center2)

    def __repr__(self) -> str:
        kind = "leaf" if self.children is None else "internal"
        return f"RTNode({self.scale}, {self.center2}, {kind})"


def _pack_coords(center2: tuple[int, ...]) -> int:
    key = 0
    for c in center2:
        key = (key << COORD_BITS) | c
    return key


class CellTracker:
    """Multiset of cells with O(1) containment queries against tree nodes.

    For every member cell the tracker records, at each scale up to the tree
    depth, the coarser cell containing the member's center.  A node then
    holds some member's center strictly inside its cube exactly when the
    node's own coordinates appear in the tracker at the node's scale.
    Counts make removal exact when the same cell was added twice.
    """

    __slots__ = ("dim", "depth", "_anc", "_members")

    def __init__(self, dim: int, depth: int):
        self.dim = dim
        self.depth = depth
        self._anc: list[dict[int, int]] = [{} for _ in range(depth + 1)]
        self._members: list[dict[int, int]] = [{} for _ in range(depth + 1)]

    def _ancestor_key(self, center2: tuple[int, ...], k: int) -> int:
        key = 0
        step = 1 << k
        up = k + 1
        for c in center2:
            key = (key << COORD_BITS) | (((c >> up) << up) | step)
        return key

    def add(self, idx: NodeIndex) -> None:
        scale, c2 = idx
        members = self._members[scale]
        mk = _pack_coords(c2)
        members[mk] = members.get(mk, 0) + 1
        for k in range(scale, self.depth + 1):
            anc = self._anc[k]
            ak = self._ancestor_key(c2, k)
            anc[ak] = anc.get(ak, 0) + 1

    def discard(self, idx: NodeIndex) -> None:
        scale, c2 = idx
        members = self._members[scale]
        mk = _pack_coords(c2)
        left = members[mk] - 1
        if left:
            members[mk] = left
        else:
            del members[mk]
        for k in range(scale, self.depth + 1):
            anc = self._anc[k]
            ak = self._ancestor_key(c2, k)
            left = anc[ak] - 1
            if left:
                anc[ak] = left
            else:
                del anc[ak]

    def covers(self, scale: int, packed_coords: int) -> bool:
        """Some member center lies strictly inside the given node's cube."""
        return packed_coords in self._anc[scale]

    def is_member(self, scale: int, packed_coords: int) -> bool:
        return packed_coords in self._members[scale]

    def __len__(self) -> int:
        return sum(sum(m.values()) for m in self._members)


class ReducedTree:
    """Root container for the coarsened planning tree."""

    __slots__ = ("dim", "depth", "root")

    def __init__(self, dim: int, depth: int):
        self.dim = dim
        self.depth = depth
        self.root = RTNode(depth, (1 << depth,) * dim, None)

    def vertices(self) -> list[RTNode]:
        """All leaves in canonical (scale, center2) order."""
        out = []
        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.children is None:
                out.append(node)
            else:
                for child in node.children:
                    if child is not None:
                        stack.append(child)
        out.sort(key=lambda n: (n.scale, n.center2))
        return out

    def find_vertex(self, idx: NodeIndex) -> RTNode | None:
        """The leaf with exactly this address, if present."""
        node = self.root
        target = idx.center2
        while True:
            if node.center2 == target and node.scale == idx.scale:
                return node if node.children is None else None
            kids = node.children
            if kids is None or node.scale <= idx.scale:
                return None
            slot = 0
            for j, c in enumerate(node.center2):
                if target[j] >= c:
                    slot |= 1 << j
            node = kids[slot]
            if node is None:
                return None

    def leaf_at_point(self, point) -> RTNode | None:
        """Leaf whose cube contains the point (half-open), None if removed."""
        node = self.root
        doubled = [2.0 * x for x in point]
        for j, x in enumerate(doubled):
            if not 0.0 < x < 2.0 * node.center2[j]:
                raise ValueError(f"point {tuple(point)} not strictly inside")
        while node.children is not None:
            slot = 0
            for j, c in enumerate(node.center2):
                if doubled[j] >= c:
                    slot |= 1 << j
            node = node.children[slot]
            if node is None:
                return None
        return node

    def snapshot(self) -> dict[int, bool]:
        """Packed node key -> is_leaf, for structural equality checks."""
        out: dict[int, bool] = {}
        stack = [self.root]
        while stack:
            node = stack.pop()
            key = node.scale
            for c in node.center2:
                key = (key << COORD_BITS) | c
            leaf = node.children is None
            out[key] = leaf
            if not leaf:
                for child in node.children:
                    if child is not None:
                        stack.append(child)
        return out


def window_thresholds(
    dim: int, depth: int, alpha: float, focus_scale: int
) -> tuple[list[int], int]:
    """Integer far-window thresholds per scale.

    Returns (thresholds, den_sq): a node at scale k with squared doubled
    center distance S to the focus is far exactly when
    S * den_sq >= thresholds[k].
    """
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    frac = Fraction(alpha)
    num, den = frac.numerator, frac.denominator
    den_sq = den * den
    out = []
    b = den << focus_scale
    for k in range(depth + 1):
        a = num << (k + 1)
        base = a * a + dim * b * b
        rad = 4 * a * a * b * b * dim
        root = isqrt(rad)
        out.append(base + root + (0 if root * root == rad else 1))
    return out, den_sq


def window_far(idx: NodeIndex, current: NodeIndex, alpha: float) -> bool:
    """Exact far-window test for one node against a focus cell."""
    thresholds, den_sq = window_thresholds(
        len(idx.center2), max(idx.scale, current.scale), alpha, current.scale
    )
    s = 0
    for a, b in zip(idx.center2, current.center2):
        d = a - b
        s += d * d
    return s * den_sq >= thresholds[idx.scale]


def refresh(
    rtree: ReducedTree,
    tree: OccupancyTree | None,
    current: NodeIndex,
    path: CellTracker,
    blocked: CellTracker,
    eps: float,
    alpha: float,
    obstacles: AbstractSet[int] | None = None,
    free: AbstractSet[int] | None = None,
) -> None:
    """Rebuild the reduced tree in place around the current cell.

    tree is the exact occupancy map, or None to run map-free, in which case
    the partition refines to unit scale and no occupancy-based removal
    happens here (classification is the searcher's job).  Nodes become
    leaves when they are far from the focus, or cannot subdivide further;
    cells of the traversed path and blocked cells keep their surroundings
    refined.  Blocked cells and (with a map) scale-weighted obstacle nodes
    are removed along with their subtrees, as are nodes whose packed keys
    appear in `obstacles` (map-free classifications already paid for).
    Packed keys in `free` mark nodes proven fully free by enumeration;
    map-free descent stops at them the way map descent stops at pure
    stored leaves, except around path and blocked cells, which keep their
    surroundings fine.
    """
    dim, depth = rtree.dim, rtree.depth
    if current.scale > depth or len(current.center2) != dim:
        raise ValueError("current cell does not belong to this world")
    top = 2 << depth
    for c in current.center2:
        if not 0 < c < top:
            raise ValueError("current cell is outside the world box")

    thresholds, den_sq = window_thresholds(dim, depth, alpha, current.scale)
    cur2 = current.center2
    nslots = 1 << dim
    exact = tree is not None
    if exact:
        values = tree._values
        internal = tree._internal
        obs_at = [1.0 - eps * 2.0 ** (-dim * k) for k in range(depth + 1)]
    key_shift = COORD_BITS * dim
    path_anc = path._anc
    path_members = path._members
    blocked_anc = blocked._anc
    blocked_members = blocked._members
    obstacle_keys = obstacles if obstacles else None
    free_keys = free if free else None

    def far(c2: tuple[int, ...], k: int) -> bool:
        s = 0
        for a, b in zip(c2, cur2):
            d = a - b
            s += d * d
        return s * den_sq >= thresholds[k]

    def visit(node: RTNode) -> RTNode | None:
        k = node.scale
        c2 = node.center2
        cpk = 0
        for c in c2:
            cpk = (cpk << COORD_BITS) | c
        if exact:
            if ((k << key_shift) | cpk) not in internal:
                stop = True
            elif cpk in path_anc[k] or cpk in blocked_anc[k]:
                stop = False
            else:
                stop = far(c2, k)
        else:
            # Blocked cells can sit at any scale map-free; remove them
            # before the ancestor test would descend into them.
            if cpk in blocked_members[k]:
                return None
            if k == 0 or cpk in path_members[k]:
                stop = True
            elif cpk in path_anc[k] or cpk in blocked_anc[k]:
                stop = False
            elif free_keys is not None and ((k << key_shift) | cpk) in free_keys:
                stop = True
            else:
                stop = far(c2, k)
        if stop:
            if cpk in blocked_members[k]:
                return None
            if exact and values[(k << key_shift) | cpk] >= obs_at[k]:
                return None
            if obstacle_keys is not None and ((k << key_shift) | cpk) in obstacle_keys:
                return None
            node.children = None
            return node
        kids = node.children
        if kids is None:
            kids = node.children = [None] * nslots
        half = 1 << (k - 1)
        kept = False
        for slot in range(nslots):
            child = kids[slot]
            if child is None:
                q2 = tuple(
                    c2[j] + (half if (slot >> j) & 1 else -half)
                    for j in range(dim)
                )
                child = RTNode(k - 1, q2, None)
            if visit(child) is None:
                kids[slot] = None
            else:
                kids[slot] = child
                kept = True
        return node if kept else None

    if visit(rtree.root) is None:
        # Nothing survived: keep the root but with no leaves below it.
        rtree.root.children = [None] * nslots
