"""Obstacle predicates for map-free planning.

A predicate maps a d-dimensional point to True when the point lies inside
an obstacle.  Predicates must be pure: the same point always yields the
same answer.  Each built-in also provides a vectorized `batch` method
taking an (n, d) float array and returning a boolean array; the estimator
uses it when present but only the scalar call is required of user-supplied
predicates.

parse_predicate builds the built-ins from the compact command-line syntax
documented in each class.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "Checkerboard",
    "Slab",
    "SphereSet",
    "WallWithGap",
    "parse_predicate",
]


class SphereSet:
    """Union of balls; syntax `spheres:x1,..,xd,r[;x1,..,xd,r]...`."""

    def __init__(self, centers, radii):
        self.centers = np.asarray(centers, dtype=np.float64)
        self.radii = np.asarray(radii, dtype=np.float64)
        if self.centers.ndim != 2 or len(self.radii) != len(self.centers):
            raise ValueError("need one radius per center")
        if np.any(self.radii < 0):
            raise ValueError("radii must be nonnegative")

    def __call__(self, point) -> bool:
        p = np.asarray(point, dtype=np.float64)
        d2 = ((self.centers - p) ** 2).sum(axis=1)
        return bool(np.any(d2 <= self.radii**2))

    def batch(self, points: np.ndarray) -> np.ndarray:
        diff = points[:, None, :] - self.centers[None, :, :]
        d2 = (diff**2).sum(axis=2)
        return np.any(d2 <= self.radii**2, axis=1)


class Checkerboard:
    """Alternating obstacle blocks of the given period; syntax `checkerboard:period`."""

    def __init__(self, period: float):
        if period <= 0:
            raise ValueError("period must be positive")
        self.period = float(period)

    def __call__(self, point) -> bool:
        s = sum(int(np.floor(x / self.period)) for x in point)
        return s % 2 == 1

    def batch(self, points: np.ndarray) -> np.ndarray:
        blocks = np.floor(points / self.period).astype(np.int64)
        return (blocks.sum(axis=1) & 1) == 1


class WallWithGap:
    """Unit-thickness wall across one axis with a cubical opening.

    Obstacle where position <= x_axis < position + 1 except within
    max-norm distance gap/2 of gap_center on the remaining axes.
    Syntax `wall:axis,position,gap` (gap centered in the world box).
    """

    def __init__(self, axis: int, position: float, gap: float, gap_center):
        if axis < 0:
            raise ValueError("axis must be nonnegative")
        if gap < 0:
            raise ValueError("gap must be nonnegative")
        self.axis = axis
        self.position = float(position)
        self.gap = float(gap)
        self.gap_center = np.asarray(gap_center, dtype=np.float64)

    def __call__(self, point) -> bool:
        p = np.asarray(point, dtype=np.float64)
        if not self.position <= p[self.axis] < self.position + 1.0:
            return False
        rest = np.delete(p, self.axis) - np.delete(self.gap_center, self.axis)
        return bool(np.max(np.abs(rest), initial=0.0) >= self.gap / 2.0)

    def batch(self, points: np.ndarray) -> np.ndarray:
        x = points[:, self.axis]
        in_wall = (x >= self.position) & (x < self.position + 1.0)
        rest = np.delete(points, self.axis, axis=1)
        center = np.delete(self.gap_center, self.axis)
        if rest.shape[1] == 0:
            in_gap = np.zeros(len(points), dtype=bool)
        else:
            in_gap = np.max(np.abs(rest - center), axis=1) < self.gap / 2.0
        return in_wall & ~in_gap


class Slab:
    """Half-space obstacle x_axis < limit; syntax `slab:axis,limit`."""

    def __init__(self, axis: int, limit: float):
        if axis < 0:
            raise ValueError("axis must be nonnegative")
        self.axis = axis
        self.limit = float(limit)

    def __call__(self, point) -> bool:
        return point[self.axis] < self.limit

    def batch(self, points: np.ndarray) -> np.ndarray:
        return points[:, self.axis] < self.limit


def parse_predicate(text: str, dim: int, side: int):
    """Build a predicate from its command-line description.

    Supported forms (world box is [0, side]^dim):
      spheres:x1,..,xd,r[;x1,..,xd,r]...
      checkerboard:period
      wall:axis,position,gap
      slab:axis,limit
    """
    kind, sep, rest = text.partition(":")
    if not sep:
        raise ValueError(f"predicate {text!r} lacks parameters (expected kind:params)")
    if kind == "spheres":
        centers, radii = [], []
        for part in rest.split(";"):
            nums = [float(v) for v in part.split(",")]
            if len(nums) != dim + 1:
                raise ValueError(
                    f"sphere {part!r} needs {dim} center coordinates plus a radius"
                )
            centers.append(nums[:dim])
            radii.append(nums[dim])
        return SphereSet(centers, radii)
    if kind == "checkerboard":
        return Checkerboard(float(rest))
    if kind == "wall":
        nums = rest.split(",")
        if len(nums) != 3:
            raise ValueError("wall needs axis,position,gap")
        axis = int(nums[0])
        if not 0 <= axis < dim:
            raise ValueError(f"wall axis {axis} out of range for dim {dim}")
        center = [side / 2.0] * dim
        return WallWithGap(axis, float(nums[1]), float(nums[2]), center)
    if kind == "slab":
        nums = rest.split(",")
        if len(nums) != 2:
            raise ValueError("slab needs axis,limit")
        axis = int(nums[0])
        if not 0 <= axis < dim:
            raise ValueError(f"slab axis {axis} out of range for dim {dim}")
        return Slab(axis, float(nums[1]))
    raise ValueError(f"unknown predicate kind {kind!r}")
