"""Multiscale planning loop and the lazy A* it runs each iteration.

The planner repeatedly rebuilds the reduced view around its current cell,
searches that view for a vertex path to the goal, and commits only the
first step of the found path before re-planning.  Failed cells are blocked
(removed from later views) and the walk backtracks along its own trail; a
(current, successor) pair is never committed twice, which bounds the total
number of iterations.

The A* is lazy in two ways matching the planner's cost structure: a
vertex's neighbors are computed only when it is popped from the open
queue, and occupancy values (map lookups in exact mode, cached sampling
estimates in map-free mode) are evaluated per vertex only when first
needed for a g-value.  Map-free obstacle classification happens here too:
flagged vertices enter the queue with infinite cost so they are counted as
touched but never expanded or routed through.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass
from itertools import product
from math import inf, sqrt

import numpy as np

from .neighbors import are_neighbors, collect_leaves, find_neighbors
from .reduced import CellTracker, ReducedTree, RTNode, refresh
from .sampling import ValueEstimator
from .tree import NodeIndex, OccupancyTree, grid_connected, pack_index

__all__ = [
    "BUDGET_EXCEEDED",
    "CostModel",
    "GOAL_BLOCKED",
    "NO_PATH",
    "PlanResult",
    "PlannerSession",
    "START_BLOCKED",
    "SUCCESS",
    "SearchStats",
    "astar_lazy",
    "plan",
    "verify_path",
    "verify_path_sampled",
]

SUCCESS = "success"
NO_PATH = "no_path"
START_BLOCKED = "start_blocked"
GOAL_BLOCKED = "goal_blocked"
BUDGET_EXCEEDED = "budget_exceeded"


@dataclass
class CostModel:
    """Edge cost: center distance scaled by the target's occupancy value."""

    weight: float = 1.0

    def __post_init__(self):
        if self.weight < 0:
            raise ValueError("weight must be nonnegative")

    def edge(self, u: NodeIndex, v: NodeIndex, v_value: float) -> float:
        s = 0
        for a, b in zip(u.center2, v.center2):
            d = a - b
            s += d * d
        return 0.5 * sqrt(s) * (1.0 + self.weight * v_value)


@dataclass
class SearchStats:
    """Work counters for one or more A* runs.

    pops counts unique vertex expansions (pops that computed neighbors);
    lazy-deletion duplicates and the final goal pop are not expansions.
    touched is the number of vertices ever given a g-value (open or
    closed), new_samples the occupancy estimates drawn during the runs.
    """

    pops: int = 0
    neighbor_calls: int = 0
    touched: int = 0
    new_samples: int = 0

    def add(self, other: "SearchStats") -> None:
        self.pops += other.pops
        self.neighbor_calls += other.neighbor_calls
        self.touched += other.touched
        self.new_samples += other.new_samples


def _center(idx: NodeIndex) -> tuple[float, ...]:
    return tuple(c / 2.0 for c in idx.center2)


def _dist(a: NodeIndex, b: NodeIndex) -> float:
    # On integer lattice coordinates math.dist is exact: the squared sum
    # is representable and the result is correctly rounded.
    return 0.5 * math.dist(a.center2, b.center2)


def node_contains(idx: NodeIndex, point, depth: int) -> bool:
    """Half-open cube membership, closed on the world's upper boundary."""
    half = 1 << idx.scale
    top = 2 << depth
    for c, x in zip(idx.center2, point):
        x2 = 2.0 * x
        hi = c + half
        if not (c - half <= x2 < hi or (hi == top and x2 == hi)):
            return False
    return True


def astar_lazy(
    rtree: ReducedTree,
    v_start: NodeIndex,
    v_goal: NodeIndex,
    cost: CostModel,
    value_fn,
    obstacle_fn=None,
    excluded_first=frozenset(),
    fine_first=None,
    neighbors_fn=None,
    stats: SearchStats | None = None,
) -> list[NodeIndex] | None:
    """Vertex path of minimal cost from v_start to v_goal, or None.

    value_fn maps a vertex index to its occupancy value; obstacle_fn, when
    given, marks vertices that must not be routed through (they still
    enter the queue, with infinite cost, so the touched count reflects
    them).  excluded_first lists vertices banned as the path's first hop,
    and fine_first, when given, restricts first hops to vertices it
    accepts.  neighbors_fn overrides vertex-neighbor enumeration.
    """
    if stats is None:
        stats = SearchStats()
    start_node = rtree.find_vertex(v_start)
    if start_node is None:
        raise RuntimeError(f"search started at a missing vertex {v_start}")
    if neighbors_fn is None:
        root, depth = rtree.root, rtree.depth

        def neighbors_fn(node: RTNode) -> list[RTNode]:
            return find_neighbors(root, node, depth)

    goal_center2 = v_goal.center2

    # Vertices are keyed by plain (scale, center2) tuples inside the loop;
    # NodeIndex is a tuple subclass so the keys hash and compare the same,
    # and heap entries (f, h, key) preserve the old lexicographic order.
    dist = math.dist
    weight = cost.weight
    heappush, heappop = heapq.heappush, heapq.heappop

    start_key = (v_start.scale, v_start.center2)
    goal_key = (v_goal.scale, v_goal.center2)
    g: dict = {start_key: 0.0}
    parent: dict = {}
    by_index: dict = {start_key: start_node}
    closed: set = set()
    g_get = g.get
    closed_add = closed.add
    h0 = 0.5 * dist(v_start.center2, goal_center2)
    heap: list[tuple] = [(h0, h0, start_key)]
    values: dict = {}
    values_get = values.get
    # Flag decisions are deterministic per vertex, so ask obstacle_fn only
    # on first encounter; a vertex is met again through every later
    # neighbor relation.
    flags: dict = {}
    flags_get = flags.get
    found = False

    while heap:
        f, hv, v = heappop(heap)
        if v in closed:
            continue
        if f == inf:
            break
        if v == goal_key:
            found = True
            break
        closed_add(v)
        stats.pops += 1
        nbrs = neighbors_fn(by_index[v])
        stats.neighbor_calls += 1
        gv = g[v]
        vc2 = v[1]
        first_hop = v == start_key
        for node in nbrs:
            nc2 = node.center2
            w = (node.scale, nc2)
            if w in closed:
                continue
            if first_hop:
                if w in excluded_first:
                    continue
                if fine_first is not None and not fine_first(w):
                    continue
            if obstacle_fn is not None:
                flagged = flags_get(w)
                if flagged is None:
                    flagged = flags[w] = obstacle_fn(w)
                if flagged:
                    if w not in g:
                        g[w] = inf
                        by_index[w] = node
                        hw = 0.5 * dist(nc2, goal_center2)
                        heappush(heap, (inf, hw, w))
                    continue
            value = values_get(w)
            if value is None:
                value = values[w] = value_fn(w)
            tentative = gv + 0.5 * dist(vc2, nc2) * (1.0 + weight * value)
            if tentative < g_get(w, inf):
                g[w] = tentative
                parent[w] = v
                by_index[w] = node
                hw = 0.5 * dist(nc2, goal_center2)
                heappush(heap, (tentative + hw, hw, w))

    stats.touched += len(g)
    assert stats.pops == stats.neighbor_calls
    if not found:
        return None
    path = [goal_key]
    while path[-1] != start_key:
        path.append(parent[path[-1]])
    path.reverse()
    return [NodeIndex(k, c2) for k, c2 in path]


@dataclass
class PlanResult:
    """Outcome of one planning session."""

    status: str
    path: list[NodeIndex] | None
    cost: float | None
    iterations: int
    stats: SearchStats
    blocked: int

    @property
    def success(self) -> bool:
        return self.status == SUCCESS


class PlannerSession:
    """One multiscale planning run from a start point to a goal point.

    Exactly one of tree (exact mode: occupancy values come from the map)
    or predicate (map-free mode: values are estimated by sampling) must be
    given; map-free mode also needs dim and depth.  The session exposes
    its iteration pieces (goal_reached, refresh_view, advance) so a caller
    can drive and inspect single iterations; run() drives to completion.
    """

    def __init__(
        self,
        *,
        tree: OccupancyTree | None = None,
        predicate=None,
        dim: int | None = None,
        depth: int | None = None,
        start,
        goal,
        eps: float = 0.5,
        gamma: float = 0.1,
        samples: int = 256,
        alpha: float = 1.0,
        cost: CostModel | None = None,
        seed: int = 0,
        budget: int | None = None,
        cell_picks: bool = False,
        neighbor_mode: str = "fast",
    ):
        if (tree is None) == (predicate is None):
            raise ValueError("give exactly one of tree or predicate")
        if not 0.0 < eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if neighbor_mode not in ("fast", "scan"):
            raise ValueError("neighbor_mode must be 'fast' or 'scan'")
        if tree is not None:
            dim, depth = tree.dim, tree.depth
        elif dim is None or depth is None:
            raise ValueError("map-free mode needs dim and depth")
        self.tree = tree
        self.dim = dim
        self.depth = depth
        self.eps = eps
        self.alpha = alpha
        self.cost = cost if cost is not None else CostModel()
        self.neighbor_mode = neighbor_mode
        self.budget = budget if budget is not None else 4 * (1 << (dim * depth))
        side = 1 << depth
        for name, point in (("start", start), ("goal", goal)):
            if len(point) != dim or any(not 0.0 <= x <= side for x in point):
                raise ValueError(f"{name} point {tuple(point)} outside the world box")
        self.estimator = None
        if predicate is not None:
            if gamma <= 0.0:
                raise ValueError("gamma must be positive in map-free mode")
            self.estimator = ValueEstimator(
                predicate, dim, depth, samples, seed, cell_picks=cell_picks
            )
        self.gamma = gamma

        start_v = self._locate(start)
        goal_v = self._locate(goal)
        self.goal_cell = goal_v
        self.goal_center = _center(goal_v)
        self.current = start_v
        self.trail: list[NodeIndex] = [start_v]
        self.path_cells = CellTracker(dim, depth)
        self.path_cells.add(start_v)
        self.blocked_cells = CellTracker(dim, depth)
        self.blocked = 0
        self.attempted: dict[NodeIndex, set[NodeIndex]] = {}
        self._value_cache: dict[NodeIndex, float] = {}
        self._flag_cache: dict[NodeIndex, bool] = {}
        # Packed keys of nodes already classified: refresh prunes known
        # obstacles from later views so A* stops re-touching them, and
        # stops descent at blocks proven fully free, which otherwise
        # would be split to unit scale on every iteration.
        self._known_obstacles: set[int] = set()
        self._known_free: set[int] = set()
        self.rtree = ReducedTree(dim, depth)
        self.stats = SearchStats()
        self.iterations = 0
        self.status: str | None = None
        if self._is_obstacle(start_v):
            self.status = START_BLOCKED
        elif self._is_obstacle(goal_v):
            self.status = GOAL_BLOCKED
        elif tree is not None and not grid_connected(
            tree.to_grid(), self._cell(start), self._cell(goal)
        ):
            # With the exact map at hand, unreachability is decidable up
            # front.  The iterative loop would reach the same verdict by
            # exhausting its alternatives, only much slower: coarse cells
            # that are not eps-obstacles keep suggesting optimistic routes,
            # so the walk visits a large share of the free component before
            # its backtracking stack drains.
            self.status = NO_PATH

    def _cell(self, point) -> tuple[int, ...]:
        side = 1 << self.depth
        return tuple(min(int(x), side - 1) for x in point)

    def _locate(self, point) -> NodeIndex:
        """Finest planning cell for a point: map leaf or unit cell."""
        side = 1 << self.depth
        cell2 = tuple(
            2 * min(int(x), side - 1) + 1 for x in point
        )
        if self.tree is not None:
            return self.tree.leaf_at(tuple(c / 2.0 for c in cell2))
        return NodeIndex(0, cell2)

    def _is_obstacle(self, idx: NodeIndex) -> bool:
        if self.tree is not None:
            return self.tree.is_eps_obstacle(idx, self.eps)
        return self._flagged(idx)

    def _value(self, idx) -> float:
        # Node values never change once known (exact map values are fixed,
        # estimator results are cached), so both modes memoize here.  The
        # search passes plain (scale, center2) tuples; they hash like
        # NodeIndex, which is only materialized on a cache miss.
        v = self._value_cache.get(idx)
        if v is None:
            idx = NodeIndex(idx[0], idx[1])
            if self.tree is not None:
                v = self.tree.value(idx)
            else:
                v = self.estimator.value(idx)
                if v == 0.0 and idx.scale > 0 and self.estimator.known_free(idx):
                    self._known_free.add(pack_index(idx.scale, idx.center2))
            self._value_cache[idx] = v
        return v

    def _is_fine(self, idx) -> bool:
        idx = NodeIndex(idx[0], idx[1])
        if self.tree is not None:
            return self.tree.is_leaf(idx)
        # A block proven fully free is as fine as map-free knowledge gets,
        # matching the role of stored leaves in map mode.
        return idx.scale == 0 or self.estimator.known_free(idx)

    def goal_reached(self) -> bool:
        return node_contains(self.current, self.goal_center, self.depth)

    def refresh_view(self) -> None:
        refresh(
            self.rtree,
            self.tree,
            self.current,
            self.path_cells,
            self.blocked_cells,
            self.eps,
            self.alpha,
            obstacles=self._known_obstacles,
            free=self._known_free,
        )

    def _neighbors_fn(self):
        if self.neighbor_mode == "fast":
            return None
        leaves = collect_leaves(self.rtree.root, sort=False)
        centers = np.array([node.center2 for node in leaves], dtype=np.int64)
        spans = np.array([1 << node.scale for node in leaves], dtype=np.int64)

        def scan(node: RTNode) -> list[RTNode]:
            # Pairwise interval test against every leaf: one axis touching
            # (|delta| equal to the half-span sum), all others overlapping.
            # The node itself fails the test (zero deltas touch no axis).
            diffs = np.abs(centers - np.array(node.center2, dtype=np.int64))
            touch = spans + (1 << node.scale)
            eq = diffs == touch[:, None]
            mask = (diffs <= touch[:, None]).all(axis=1) & (eq.sum(axis=1) == 1)
            return [leaves[i] for i in np.nonzero(mask)[0]]

        return scan

    def advance(self) -> str | None:
        """Run one A* attempt and commit a step or backtrack."""
        run = SearchStats()
        goal_node = self.rtree.leaf_at_point(self.goal_center)
        start_node = self.rtree.find_vertex(self.current)
        path = None
        if goal_node is not None and start_node is not None:
            before = len(self.estimator) if self.estimator else 0
            path = astar_lazy(
                self.rtree,
                self.current,
                goal_node.index(),
                self.cost,
                self._value,
                obstacle_fn=None if self.tree is not None else self._flagged,
                excluded_first=self.attempted.get(self.current, frozenset()),
                fine_first=self._is_fine,
                neighbors_fn=self._neighbors_fn(),
                stats=run,
            )
            if self.estimator:
                run.new_samples = len(self.estimator) - before
                assert run.new_samples <= run.touched
            self.stats.add(run)
        if path is None:
            if len(self.trail) == 1:
                self.status = NO_PATH
                return self.status
            dead = self.trail.pop()
            self.path_cells.discard(dead)
            self.blocked_cells.add(dead)
            self.blocked += 1
            self.attempted.pop(dead, None)
            self.current = self.trail[-1]
            return None
        step = path[1]
        if not are_neighbors(self.current, step):
            raise RuntimeError(
                f"planner committed a non-adjacent step {self.current} -> {step}"
            )
        self.attempted.setdefault(self.current, set()).add(step)
        self.trail.append(step)
        self.path_cells.add(step)
        self.current = step
        return None

    def _flagged(self, idx) -> bool:
        # eps and gamma are fixed for the session and estimates are cached,
        # so each node's flag decision is computed once.  Accepts plain
        # (scale, center2) tuples from the search loop.
        got = self._flag_cache.get(idx)
        if got is None:
            idx = NodeIndex(idx[0], idx[1])
            got, _ = self.estimator.classify(idx, self.eps, self.gamma)
            self._flag_cache[idx] = got
            if got:
                self._known_obstacles.add(pack_index(idx.scale, idx.center2))
            elif idx.scale > 0 and self.estimator.known_free(idx):
                self._known_free.add(pack_index(idx.scale, idx.center2))
        return got

    def step(self) -> str | None:
        """One planner iteration; returns the terminal status or None."""
        if self.status is not None:
            return self.status
        if self.goal_reached():
            self.status = SUCCESS
            return self.status
        if self.iterations >= self.budget:
            self.status = BUDGET_EXCEEDED
            return self.status
        self.iterations += 1
        self.refresh_view()
        return self.advance()

    def run(self) -> PlanResult:
        while self.status is None:
            self.step()
        return self.result()

    def result(self) -> PlanResult:
        if self.status is None:
            raise RuntimeError("session still running")
        path = cost = None
        if self.status == SUCCESS:
            path = list(self.trail)
            cost = 0.0
            for u, v in zip(path, path[1:]):
                cost += self.cost.edge(u, v, self._value(v))
        return PlanResult(
            self.status, path, cost, self.iterations, self.stats, self.blocked
        )


def plan(
    *,
    tree: OccupancyTree | None = None,
    predicate=None,
    dim: int | None = None,
    depth: int | None = None,
    start,
    goal,
    eps: float = 0.5,
    gamma: float = 0.1,
    samples: int = 256,
    alpha: float = 1.0,
    weight: float = 1.0,
    seed: int = 0,
    budget: int | None = None,
    cell_picks: bool = False,
    neighbor_mode: str = "fast",
) -> PlanResult:
    """Plan from start to goal; see PlannerSession for the two modes."""
    session = PlannerSession(
        tree=tree,
        predicate=predicate,
        dim=dim,
        depth=depth,
        start=start,
        goal=goal,
        eps=eps,
        gamma=gamma,
        samples=samples,
        alpha=alpha,
        cost=CostModel(weight),
        seed=seed,
        budget=budget,
        cell_picks=cell_picks,
        neighbor_mode=neighbor_mode,
    )
    return session.run()


def verify_path(
    tree: OccupancyTree,
    path: list[NodeIndex],
    eps: float,
    start=None,
    goal=None,
) -> tuple[bool, str | None]:
    """Check a path against the map: adjacency, leafness, obstacles, endpoints.

    Returns (True, None) or (False, description of the first violated
    clause), clauses checked in the order above.
    """
    if not path:
        return False, "empty path"
    for i, (u, v) in enumerate(zip(path, path[1:])):
        if not are_neighbors(u, v):
            return False, f"nodes {i} and {i + 1} are not neighbors"
    for i, idx in enumerate(path):
        try:
            if not tree.is_leaf(idx):
                return False, f"node {i} is not a leaf"
        except KeyError:
            return False, f"node {i} is not a leaf"
    for i, idx in enumerate(path):
        if tree.is_eps_obstacle(idx, eps):
            return False, f"node {i} is an obstacle"
    if start is not None and not node_contains(path[0], start, tree.depth):
        return False, "first node does not contain the start point"
    if goal is not None and not node_contains(path[-1], goal, tree.depth):
        return False, "last node does not contain the goal point"
    return True, None


def verify_path_sampled(
    predicate,
    path: list[NodeIndex],
    depth: int,
    start=None,
    goal=None,
) -> tuple[bool, str | None]:
    """Map-free path check: adjacency and every covered unit cell free."""
    if not path:
        return False, "empty path"
    for i, (u, v) in enumerate(zip(path, path[1:])):
        if not are_neighbors(u, v):
            return False, f"nodes {i} and {i + 1} are not neighbors"
    for i, idx in enumerate(path):
        if not 0 <= idx.scale <= depth:
            return False, f"node {i} has scale outside the world"
    for i, idx in enumerate(path):
        side = 1 << idx.scale
        low = [(c - side) >> 1 for c in idx.center2]
        for off in product(range(side), repeat=len(low)):
            if predicate(tuple(l + o + 0.5 for l, o in zip(low, off))):
                return False, f"node {i} covers an obstacle cell"
    if start is not None and not node_contains(path[0], start, depth):
        return False, "first node does not contain the start point"
    if goal is not None and not node_contains(path[-1], goal, depth):
        return False, "last node does not contain the goal point"
    return True, None
