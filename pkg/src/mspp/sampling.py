"""Monte Carlo occupancy estimation and its probability bounds.

Map-free planning never builds an occupancy tree.  Instead, each node's
occupancy value is estimated by sampling an obstacle predicate inside the
node's cube, with a per-node margin gamma absorbing the estimation error:
a node is flagged as an obstacle when

    estimate >= 1 - 2**(-dim*scale) * eps + gamma.

Two scale cutoffs shape the hybrid scheme.  At or below exact_scale_cutoff
a node holds no more unit cells than the sample budget, so full enumeration
is cheaper than sampling and exact classification is used.  At or above
flag_scale_cutoff the margin pushes the threshold past 1, so no estimate
can flag the node; only scales strictly between the cutoffs can be
misclassified, and band_node_count counts those nodes in closed form.
failure_bound combines the pieces into the standard probability bound on
planning failure.

Estimates are cached per node for the lifetime of an estimator, and each
node draws from its own counter-based random stream derived from the
session seed and the node address, so results do not depend on the order
in which a lazy search touches nodes.
"""

from __future__ import annotations

import hashlib
import struct
from dataclasses import dataclass
from fractions import Fraction
from math import ceil, exp, expm1, ldexp

import numpy as np

from .tree import NodeIndex

__all__ = [
    "BoundParams",
    "SampleEstimate",
    "ValueEstimator",
    "band_node_count",
    "exact_scale_cutoff",
    "failure_bound",
    "flag_scale_cutoff",
    "is_flagged_obstacle",
    "misclassification_bound",
]


@dataclass(frozen=True)
class SampleEstimate:
    """Occupancy estimate for one node: hits obstacle samples out of n."""

    idx: NodeIndex
    n: int
    hits: int
    exact: bool = False

    @property
    def value(self) -> float:
        return self.hits / self.n


@dataclass(frozen=True)
class BoundParams:
    """Parameters of the planning failure bound."""

    depth: int
    dim: int
    eps: float
    gamma: float
    samples: int
    regions: int = 1

    def __post_init__(self):
        if self.depth < 0 or self.dim < 1:
            raise ValueError("depth must be >= 0 and dim >= 1")
        if not 0.0 < self.eps < 1.0:
            raise ValueError("eps must lie in (0, 1)")
        if self.gamma <= 0.0:
            raise ValueError("gamma must be positive")
        if self.samples < 1 or self.regions < 1:
            raise ValueError("samples and regions must be >= 1")


def is_flagged_obstacle(
    value: float, scale: int, dim: int, eps: float, gamma: float
) -> bool:
    """Sampled obstacle test with margin gamma at the given scale."""
    return value >= 1.0 - ldexp(eps, -dim * scale) + gamma


def flag_scale_cutoff(dim: int, eps: float, gamma: float) -> int:
    """Smallest scale at which no estimate can be flagged as an obstacle.

    This is ceil(log2(eps/gamma) / dim), evaluated exactly: the smallest k
    with gamma * 2**(dim*k) >= eps.  Negative when gamma > eps; returned
    as-is in that case.
    """
    if not 0.0 < eps < 1.0:
        raise ValueError("eps must lie in (0, 1)")
    if gamma <= 0.0:
        raise ValueError("gamma must be positive")
    ratio = Fraction(eps) / Fraction(gamma)
    num, den = ratio.numerator, ratio.denominator
    k = ceil((num.bit_length() - den.bit_length()) / dim)

    def holds(k: int) -> bool:
        t = dim * k
        if t >= 0:
            return (den << t) >= num
        return den >= (num << -t)

    while not holds(k):
        k += 1
    while holds(k - 1):
        k -= 1
    return k


def exact_scale_cutoff(dim: int, samples: int) -> int:
    """Largest scale at which a node has at most `samples` unit cells.

    This is floor(log2(samples) / dim); full enumeration at such scales is
    no more expensive than drawing the samples.
    """
    if samples < 1:
        raise ValueError("samples must be >= 1")
    k = 0
    while (1 << (dim * (k + 1))) <= samples:
        k += 1
    return k


def misclassification_bound(gamma: float, n: int) -> float:
    """Hoeffding bound exp(-2 * gamma**2 * n) on one node's misclassification."""
    if gamma <= 0.0 or n < 1:
        raise ValueError("gamma must be positive and n >= 1")
    return exp(-2.0 * gamma * gamma * n)


def band_node_count(depth: int, dim: int, low: int, high: int) -> float:
    """Number of tree nodes at scales strictly between low and high.

    Closed form of sum_{low < k < high} 2**(dim*(depth-k)), evaluated in
    exact rational arithmetic before conversion to float; 0 when the band
    is empty.  Terms with k > depth contribute fractional amounts, so the
    result is a real number rather than an integer.
    """
    if low >= high - 1:
        return 0.0
    top = dim * (depth - low)
    bot = dim * (depth - high + 1)
    total = (_pow2(top) - _pow2(bot)) / (2**dim - 1)
    return float(total)


def _pow2(e: int) -> Fraction:
    return Fraction(1 << e) if e >= 0 else Fraction(1, 1 << -e)


def failure_bound(params: BoundParams) -> float:
    """Probability bound on planning failure from node misclassification.

    Evaluates 1 - (1 - exp(-2 gamma^2 n))^count over `regions` independent
    solution regions of count/regions nodes each, clamped to [0, 1]; zero
    when the misclassifiable band is empty.
    """
    low = exact_scale_cutoff(params.dim, params.samples)
    high = flag_scale_cutoff(params.dim, params.eps, params.gamma)
    count = band_node_count(params.depth, params.dim, low, high)
    if count == 0.0:
        return 0.0
    # 1 - exp(-2 g^2 n), kept accurate when the exponent is tiny.
    miss = -expm1(-2.0 * params.gamma * params.gamma * params.samples)
    keep = miss ** (count / params.regions)
    bound = (1.0 - keep) ** params.regions
    return min(1.0, max(0.0, bound))


def _stream_digest(seed: int, idx: NodeIndex) -> bytes:
    """16-byte stream key for one node, stable across evaluation orders."""
    h = hashlib.blake2b(digest_size=16)
    h.update(struct.pack("<Q", seed & (2**64 - 1)))
    h.update(struct.pack("<i", idx.scale))
    h.update(struct.pack(f"<{len(idx.center2)}I", *idx.center2))
    return h.digest()


def _stream_key(seed: int, idx: NodeIndex) -> int:
    """The stream key as a 128-bit integer (little-endian digest)."""
    return int.from_bytes(_stream_digest(seed, idx), "little")


class ValueEstimator:
    """Cached per-node occupancy estimation against an obstacle predicate.

    predicate maps a d-point to True on obstacles; a vectorized `batch`
    attribute taking an (n, d) array is used when present.  With
    cell_picks=True samples are uniform unit-cell centers (the discrete
    model of a grid world); otherwise they are continuous uniform points.
    Each node is sampled at most once; repeated queries hit the cache.
    Cell-centered mode also memoizes the oracle answer per unit cell, so
    cells shared between overlapping node tests are paid for once.
    """

    def __init__(
        self,
        predicate,
        dim: int,
        depth: int,
        samples: int,
        seed: int,
        cell_picks: bool = False,
    ):
        if samples < 1:
            raise ValueError("samples must be >= 1")
        self.predicate = predicate
        self.dim = dim
        self.depth = depth
        self.samples = samples
        self.seed = seed
        self.cell_picks = cell_picks
        self.exact_cutoff = exact_scale_cutoff(dim, samples)
        self._batch = getattr(predicate, "batch", None)
        self._cache: dict[NodeIndex, SampleEstimate] = {}
        # One bit generator shared by all nodes; each draw rekeys it with
        # the node's stream key and a zeroed counter, which reproduces the
        # stream of a freshly constructed instance without paying the
        # construction cost on every node.
        self._bits = np.random.Philox(key=0)
        self._rng = np.random.Generator(self._bits)
        self._stencils: dict[int, np.ndarray] = {}
        self._offsets: dict[int, np.ndarray] = {}
        # With cell-centered queries the predicate answer per unit cell is
        # a session constant, so it is remembered; overlapping nodes then
        # re-test shared cells at dictionary cost instead of oracle cost.
        self._cells: dict[tuple[int, ...], bool] | None = {} if cell_picks else None

    def __len__(self) -> int:
        return len(self._cache)

    def _count_hits(self, points: np.ndarray) -> int:
        if self._batch is not None:
            return int(np.count_nonzero(self._batch(points)))
        return sum(bool(self.predicate(tuple(p))) for p in points)

    def _hits_cells(self, cells) -> int:
        """Obstacle count over integer cells, consulting the cell memo.

        Repeated cells (within one draw or across nodes) are counted per
        occurrence but cost only a lookup after the first oracle call.
        """
        memo = self._cells
        hits = 0
        misses = []
        for cell in cells:
            got = memo.get(cell)
            if got is None:
                misses.append(cell)
            elif got:
                hits += 1
        if not misses:
            return hits
        if self._batch is not None:
            points = np.asarray(misses, dtype=np.float64) + 0.5
            for cell, flag in zip(misses, self._batch(points)):
                b = bool(flag)
                memo[cell] = b
                if b:
                    hits += 1
            return hits
        predicate = self.predicate
        for cell in misses:
            got = memo.get(cell)
            if got is None:
                got = memo[cell] = bool(
                    predicate(tuple(c + 0.5 for c in cell))
                )
            if got:
                hits += 1
        return hits

    def _box_low(self, idx: NodeIndex) -> np.ndarray:
        half = 1 << idx.scale
        return np.array([(c - half) >> 1 for c in idx.center2], dtype=np.float64)

    def _node_rng(self, idx: NodeIndex) -> np.random.Generator:
        self._bits.state = {
            "bit_generator": "Philox",
            "state": {
                "counter": np.zeros(4, dtype=np.uint64),
                "key": np.frombuffer(_stream_digest(self.seed, idx), dtype=np.uint64),
            },
            "buffer": np.zeros(4, dtype=np.uint64),
            "buffer_pos": 4,
            "has_uint32": 0,
            "uinteger": 0,
        }
        return self._rng

    def _cell_offsets(self, scale: int) -> np.ndarray:
        """Integer unit-cell offsets from the box low corner, cached per scale."""
        got = self._offsets.get(scale)
        if got is None:
            side = 1 << scale
            axes = [np.arange(side, dtype=np.int64)] * self.dim
            grid = np.meshgrid(*axes, indexing="ij")
            got = np.stack(grid, axis=-1).reshape(-1, self.dim)
            self._offsets[scale] = got
        return got

    def _cell_centers(self, scale: int) -> np.ndarray:
        """Unit-cell center offsets from the box low corner, cached per scale."""
        got = self._stencils.get(scale)
        if got is None:
            got = self._cell_offsets(scale).astype(np.float64) + 0.5
            self._stencils[scale] = got
        return got

    def estimate(self, idx: NodeIndex) -> SampleEstimate:
        """Sampled estimate of the node's occupancy value."""
        got = self._cache.get(idx)
        if got is not None:
            return got
        n = self.samples
        rng = self._node_rng(idx)
        side = 1 << idx.scale
        if self.cell_picks:
            low = np.array([(c - side) >> 1 for c in idx.center2], dtype=np.int64)
            draws = rng.integers(0, side, size=(n, self.dim))
            cells = [tuple(row) for row in (low + draws).tolist()]
            est = SampleEstimate(idx, n, self._hits_cells(cells))
        else:
            low = self._box_low(idx)
            points = low + rng.random((n, self.dim)) * side
            est = SampleEstimate(idx, n, self._count_hits(points))
        self._cache[idx] = est
        return est

    def exact(self, idx: NodeIndex) -> SampleEstimate:
        """Exact occupancy by enumerating every unit cell of the node."""
        got = self._cache.get(idx)
        if got is not None and got.exact:
            return got
        if idx.scale == 0:
            # A unit cell is a single predicate query at its center; skip
            # the array machinery that larger enumerations need.
            if self._cells is not None:
                cell = tuple((c - 1) >> 1 for c in idx.center2)
                hits = self._hits_cells((cell,))
            else:
                point = tuple(c * 0.5 for c in idx.center2)
                hits = int(bool(self.predicate(point)))
            est = SampleEstimate(idx, 1, hits, exact=True)
        elif self._cells is not None:
            side = 1 << idx.scale
            low = np.array([(c - side) >> 1 for c in idx.center2], dtype=np.int64)
            cells = [tuple(row) for row in (low + self._cell_offsets(idx.scale)).tolist()]
            est = SampleEstimate(idx, side**self.dim, self._hits_cells(cells), exact=True)
        else:
            side = 1 << idx.scale
            points = self._cell_centers(idx.scale) + self._box_low(idx)
            est = SampleEstimate(
                idx, side**self.dim, self._count_hits(points), exact=True
            )
        self._cache[idx] = est
        return est

    def classify(
        self, idx: NodeIndex, eps: float, gamma: float
    ) -> tuple[bool, str]:
        """Hybrid obstacle test: exact at coarse-enough-to-enumerate scales.

        Returns (is_obstacle, method) where method is "exact" below the
        enumeration cutoff (scale-weighted threshold, no margin) and
        "sampled" above it (margin gamma added).
        """
        if idx.scale <= self.exact_cutoff:
            est = self.exact(idx)
            obstacle = est.value >= 1.0 - ldexp(eps, -self.dim * idx.scale)
            return obstacle, "exact"
        est = self.estimate(idx)
        return is_flagged_obstacle(est.value, idx.scale, self.dim, eps, gamma), "sampled"

    def value(self, idx: NodeIndex) -> float:
        """Best cached occupancy value for cost weighting."""
        if idx.scale <= self.exact_cutoff:
            return self.exact(idx).value
        return self.estimate(idx).value

    def known_free(self, idx: NodeIndex) -> bool:
        """True when enumeration already proved every cell of the node free."""
        got = self._cache.get(idx)
        return got is not None and got.exact and got.hits == 0
