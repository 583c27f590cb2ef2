"""Geometry of the hypercubic lattice Z^d.

Points are integer arrays of shape ``(d,)``; finite point sets are integer
arrays of shape ``(n, d)`` in lexicographic order. Dense work happens on a
:class:`Window`, an axis-aligned box with row-major indexing.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "WindowOverflowError",
    "LatticeBox",
    "Window",
    "as_point",
    "as_points",
    "ball",
    "sphere",
    "attached_box",
    "boundaries",
    "neighbors",
    "diameter",
    "translate",
    "block_anchors",
]


class WindowOverflowError(ValueError):
    """A shifted object no longer fits inside its window."""


def as_point(x, d: int | None = None) -> np.ndarray:
    p = np.asarray(x, dtype=np.int64).reshape(-1)
    if d is not None and p.size == 1 and d > 1 and int(p[0]) == 0:
        p = np.zeros(d, dtype=np.int64)
    if d is not None and p.size != d:
        raise ValueError(f"point {x!r} is not in Z^{d}")
    return p


def as_points(K, d: int | None = None) -> np.ndarray:
    pts = np.asarray(K, dtype=np.int64)
    if pts.ndim == 1:
        pts = pts.reshape(1, -1) if pts.size else pts.reshape(0, d or 0)
    if d is not None and pts.shape[1] != d:
        raise ValueError(f"points have dimension {pts.shape[1]}, expected {d}")
    return pts


def _lexsorted_unique(pts: np.ndarray) -> np.ndarray:
    if len(pts) == 0:
        return pts
    return np.unique(pts, axis=0)


def _grid(lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
    """All integer points of the closed box [lo, hi], lexicographic order."""
    axes = [np.arange(a, b + 1, dtype=np.int64) for a, b in zip(lo, hi)]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=1)


@dataclass(frozen=True)
class LatticeBox:
    """An axis-aligned box in Z^d.

    ``kind`` is one of ``"attached"`` (``anchor + [0, side)^d``), ``"ball"``
    (l-infinity ball of radius ``side`` around ``anchor``) or ``"sphere"``
    (l-infinity sphere of radius ``side``).
    """

    anchor: tuple
    side: int
    kind: str = "attached"

    def __post_init__(self):
        if self.kind not in ("attached", "ball", "sphere"):
            raise ValueError(f"unknown box kind {self.kind!r}")
        if self.kind == "attached" and self.side < 1:
            raise ValueError("attached box needs side >= 1")
        if self.side < 0:
            raise ValueError("radius must be non-negative")
        object.__setattr__(self, "anchor", tuple(int(a) for a in self.anchor))

    @property
    def d(self) -> int:
        return len(self.anchor)

    @property
    def lower(self) -> np.ndarray:
        a = np.array(self.anchor, dtype=np.int64)
        return a if self.kind == "attached" else a - self.side

    @property
    def upper(self) -> np.ndarray:
        a = np.array(self.anchor, dtype=np.int64)
        return a + self.side - 1 if self.kind == "attached" else a + self.side

    def __len__(self) -> int:
        if self.kind == "attached":
            return self.side**self.d
        if self.kind == "ball":
            return (2 * self.side + 1) ** self.d
        if self.side == 0:
            return 1
        return (2 * self.side + 1) ** self.d - (2 * self.side - 1) ** self.d

    def contains(self, pts) -> np.ndarray:
        pts = as_points(pts, self.d)
        if self.kind == "sphere":
            dist = np.abs(pts - np.array(self.anchor)).max(axis=1)
            return dist == self.side
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def points(self) -> np.ndarray:
        pts = _grid(self.lower, self.upper)
        if self.kind == "sphere":
            pts = pts[self.contains(pts)]
        return pts

    def window(self) -> "Window":
        return Window(tuple(self.lower), tuple(self.upper - self.lower + 1))


def ball(center, r: int, d: int | None = None) -> np.ndarray:
    """Points y with |y - center|_inf <= r. A scalar 0 center needs ``d``."""
    if r < 0:
        raise ValueError("radius must be non-negative")
    c = as_point(center, d)
    return LatticeBox(tuple(c), r, "ball").points()


def sphere(center, r: int, d: int | None = None) -> np.ndarray:
    c = as_point(center, d)
    return LatticeBox(tuple(c), r, "sphere").points()


def attached_box(x, L: int, d: int | None = None) -> np.ndarray:
    """Points of ``x + [0, L)^d``."""
    return LatticeBox(tuple(as_point(x, d)), L, "attached").points()


def _unit_steps(d: int) -> np.ndarray:
    eye = np.eye(d, dtype=np.int64)
    return np.concatenate([eye, -eye])


def _star_steps(d: int) -> np.ndarray:
    steps = np.array(list(itertools.product((-1, 0, 1), repeat=d)), dtype=np.int64)
    return steps[np.any(steps != 0, axis=1)]


def neighbors(x, star: bool = False) -> np.ndarray:
    """Nearest neighbours (2d of them) or *-neighbours (3^d - 1)."""
    p = as_point(x)
    steps = _star_steps(p.size) if star else _unit_steps(p.size)
    return p + steps


def boundaries(K) -> tuple[np.ndarray, np.ndarray]:
    """Inner and outer nearest-neighbour boundaries of a finite set.

    Returns ``(inner, outer)`` where ``inner`` holds the points of K with a
    neighbour outside K and ``outer`` the points outside K with a neighbour
    in K.
    """
    pts = _lexsorted_unique(as_points(K))
    if len(pts) == 0:
        return pts, pts
    d = pts.shape[1]
    members = set(map(tuple, pts.tolist()))
    steps = _unit_steps(d)
    inner, outer = [], set()
    for p in pts:
        on_edge = False
        for q in (p + steps).tolist():
            tq = tuple(q)
            if tq not in members:
                on_edge = True
                outer.add(tq)
        if on_edge:
            inner.append(p)
    inner_arr = np.array(inner, dtype=np.int64).reshape(-1, d)
    outer_arr = _lexsorted_unique(np.array(sorted(outer), dtype=np.int64).reshape(-1, d))
    return inner_arr, outer_arr


def diameter(K) -> int:
    """l-infinity diameter of a non-empty finite set."""
    pts = as_points(K)
    if len(pts) == 0:
        raise ValueError("diameter of the empty set is undefined")
    return int((pts.max(axis=0) - pts.min(axis=0)).max())


@dataclass(frozen=True)
class Window:
    """A finite box ``origin + [0, shape)`` with dense row-major indexing."""

    origin: tuple
    shape: tuple
    _strides: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        object.__setattr__(self, "origin", tuple(int(o) for o in self.origin))
        object.__setattr__(self, "shape", tuple(int(s) for s in self.shape))
        if len(self.origin) != len(self.shape) or min(self.shape) < 1:
            raise ValueError("window needs matching origin/shape with positive extents")
        strides = np.cumprod((1,) + self.shape[::-1])[:-1][::-1]
        object.__setattr__(self, "_strides", tuple(int(s) for s in strides))

    @classmethod
    def around(cls, center, r: int) -> "Window":
        c = as_point(center)
        return cls(tuple(c - r), (2 * r + 1,) * c.size)

    @property
    def d(self) -> int:
        return len(self.shape)

    @property
    def size(self) -> int:
        return int(np.prod(self.shape))

    @property
    def lower(self) -> np.ndarray:
        return np.array(self.origin, dtype=np.int64)

    @property
    def upper(self) -> np.ndarray:
        return self.lower + np.array(self.shape, dtype=np.int64) - 1

    def contains(self, pts) -> np.ndarray:
        pts = as_points(pts, self.d)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def index(self, pts) -> np.ndarray:
        """Dense indices of points; raises if any point is outside."""
        pts = as_points(pts, self.d)
        if not np.all(self.contains(pts)):
            raise WindowOverflowError("point outside window")
        return (pts - self.lower) @ np.array(self._strides, dtype=np.int64)

    def point(self, idx) -> np.ndarray:
        idx = np.asarray(idx, dtype=np.int64)
        coords = np.unravel_index(idx, self.shape)
        return np.stack(coords, axis=-1) + self.lower

    def points(self) -> np.ndarray:
        return _grid(self.lower, self.upper)

    def index_set(self, pts) -> np.ndarray:
        """Sorted unique dense indices for a set of points."""
        return np.unique(self.index(pts))

    def local(self, pts) -> tuple:
        """Tuple of index arrays suitable for fancy-indexing an array of ``shape``."""
        pts = as_points(pts, self.d)
        if not np.all(self.contains(pts)):
            raise WindowOverflowError("point outside window")
        rel = pts - self.lower
        return tuple(rel[:, j] for j in range(self.d))

    def shifted(self, z) -> "Window":
        return Window(tuple(self.lower + as_point(z, self.d)), self.shape)

    def grown(self, margin: int) -> "Window":
        return Window(tuple(self.lower - margin), tuple(s + 2 * margin for s in self.shape))


def translate(obj, z, window: Window | None = None):
    """Shift a point set, a window, or any object carrying a ``window``.

    Point sets are checked against ``window`` when one is given.
    """
    if isinstance(obj, Window):
        return obj.shifted(z)
    if hasattr(obj, "window") and hasattr(obj, "with_window"):
        return obj.with_window(obj.window.shifted(z))
    pts = as_points(obj)
    shifted = pts + as_point(z, pts.shape[1])
    if window is not None and not np.all(window.contains(shifted)):
        raise WindowOverflowError("translated set leaves the window")
    return shifted


def block_anchors(window: Window, L: int) -> np.ndarray:
    """Anchors x in L Z^d whose attached boxes B_x(L) meet the window."""
    lo = np.floor_divide(window.lower, L)
    hi = np.floor_divide(window.upper, L)
    return _grid(lo, hi) * L
