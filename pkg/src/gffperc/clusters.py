"""Excursion sets, connected components and the union-find threshold sweep."""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import ndimage

from .lattice import LatticeBox, Window

__all__ = [
    "BinaryConfig",
    "ClusterLabeling",
    "excursion_set",
    "label_clusters",
    "crossing",
    "sweep_threshold",
    "CrossingGeometry",
]


@dataclass(frozen=True)
class BinaryConfig:
    window: Window
    bits: np.ndarray
    level: float = float("nan")

    def __post_init__(self):
        if self.bits.shape != self.window.shape:
            raise ValueError("bits do not match window shape")

    def with_window(self, window: Window) -> "BinaryConfig":
        return BinaryConfig(window, self.bits, self.level)


def excursion_set(field, h: float) -> BinaryConfig:
    """Sites where the field is at least h."""
    return BinaryConfig(field.window, np.asarray(field.values) >= h, float(h))


@dataclass(frozen=True)
class ClusterLabeling:
    """Component labels (-1 on closed sites). A label is the smallest dense index in its cluster."""

    window: Window
    labels: np.ndarray
    ids: np.ndarray
    sizes: np.ndarray
    touches_boundary: np.ndarray

    @property
    def count(self) -> int:
        return len(self.ids)

    def size_of(self, label: int) -> int:
        return int(self.sizes[np.searchsorted(self.ids, label)])

    def members(self, label: int) -> np.ndarray:
        return np.flatnonzero(self.labels.ravel() == label)


def label_clusters(config: BinaryConfig, star: bool = False) -> ClusterLabeling:
    d = config.bits.ndim
    structure = ndimage.generate_binary_structure(d, d if star else 1)
    raw, n = ndimage.label(config.bits, structure=structure)
    flat = raw.ravel()
    labels = np.full(flat.shape, -1, dtype=np.int64)
    if n == 0:
        empty = np.zeros(0, dtype=np.int64)
        return ClusterLabeling(config.window, labels.reshape(raw.shape), empty, empty, np.zeros(0, dtype=bool))
    open_idx = np.flatnonzero(flat)
    # first occurrence in row-major order is the smallest index of each component
    first = np.full(n + 1, -1, dtype=np.int64)
    comp = flat[open_idx]
    _, pos = np.unique(comp, return_index=True)
    first[comp[pos]] = open_idx[pos]
    labels[open_idx] = first[comp]
    ids, sizes = np.unique(labels[open_idx], return_counts=True)

    edge = np.zeros(raw.shape, dtype=bool)
    for ax in range(d):
        sl = [slice(None)] * d
        sl[ax] = 0
        edge[tuple(sl)] = True
        sl[ax] = -1
        edge[tuple(sl)] = True
    touching = np.unique(labels.reshape(raw.shape)[edge & config.bits])
    return ClusterLabeling(config.window, labels.reshape(raw.shape), ids, sizes, np.isin(ids, touching))


@numba.njit(cache=True)
def _find(parent, i):
    while parent[i] != i:
        parent[i] = parent[parent[i]]
        i = parent[i]
    return i


@numba.njit(cache=True)
def _union(parent, size, a, b):
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra == rb:
        return
    if size[ra] < size[rb]:
        ra, rb = rb, ra
    parent[rb] = ra
    size[ra] += size[rb]


@numba.njit(cache=True)
def _sweep(values, order, shape, strides, source, sink):
    n = values.size
    src = n
    snk = n + 1
    parent = np.arange(n + 2, dtype=np.int64)
    size = np.ones(n + 2, dtype=np.int64)
    opened = np.zeros(n, dtype=np.bool_)
    d = shape.size
    for k in range(order.size):
        i = order[k]
        opened[i] = True
        if source[i]:
            _union(parent, size, i, src)
        if sink[i]:
            _union(parent, size, i, snk)
        rem = i
        for ax in range(d):
            c = rem // strides[ax]
            rem = rem - c * strides[ax]
            if c > 0:
                j = i - strides[ax]
                if opened[j]:
                    _union(parent, size, i, j)
            if c < shape[ax] - 1:
                j = i + strides[ax]
                if opened[j]:
                    _union(parent, size, i, j)
        if _find(parent, src) == _find(parent, snk):
            return values[i]
    return -np.inf


def sweep_threshold(values: np.ndarray, source: np.ndarray, sink: np.ndarray, floor: float = -np.inf) -> float:
    """Largest h such that {values >= h} connects source to sink by a nearest-neighbour path.

    Sites are opened in decreasing order of value and merged with a
    union-find structure carrying two virtual nodes. Returns ``-inf`` if no
    connection exists using only sites at or above ``floor``.

    Only sites above a trial cut are sorted; if they do not connect, the
    cut is lowered. A connection found above a cut is the true answer,
    since lower sites are opened later in the full sweep.
    """
    flat = np.ascontiguousarray(values, dtype=np.float64).ravel()
    shape = np.array(values.shape, dtype=np.int64)
    strides = np.array([int(np.prod(values.shape[a + 1:])) for a in range(values.ndim)], dtype=np.int64)
    src = source.ravel()
    snk = sink.ravel()
    cuts = []
    for frac in (0.2, 0.5):
        k = int(flat.size * (1 - frac))
        if 0 < k < flat.size:
            cuts.append(float(np.partition(flat, k)[k]))
    cuts = [c for c in cuts if c > floor] + [floor]
    for cut in cuts:
        cand = np.flatnonzero(flat >= cut)
        order = cand[np.argsort(-flat[cand], kind="stable")]
        t = float(_sweep(flat, order, shape, strides, src, snk))
        if t > -np.inf:
            return t
    return -np.inf


@dataclass(frozen=True)
class CrossingGeometry:
    """Source and sink masks on a window."""

    window: Window
    source: np.ndarray
    sink: np.ndarray

    @classmethod
    def box_to_sphere(cls, d: int, L: int) -> "CrossingGeometry":
        """B(0, L) to S(0, 2L) inside the window B(0, 2L)."""
        win = Window.around(np.zeros(d, dtype=np.int64), 2 * L)
        inner = np.zeros(win.shape, dtype=bool)
        inner[(slice(L, 3 * L + 1),) * d] = True
        sphere = np.ones(win.shape, dtype=bool)
        sphere[(slice(1, -1),) * d] = False
        return cls(win, inner, sphere)

    @classmethod
    def point_to_point(cls, window: Window, x, y) -> "CrossingGeometry":
        a = np.zeros(window.shape, dtype=bool)
        b = np.zeros(window.shape, dtype=bool)
        a[window.local(np.atleast_2d(x))] = True
        b[window.local(np.atleast_2d(y))] = True
        return cls(window, a, b)

    @classmethod
    def point_to_sphere(cls, d: int, R: int) -> "CrossingGeometry":
        win = Window.around(np.zeros(d, dtype=np.int64), R)
        a = np.zeros(win.shape, dtype=bool)
        a[(R,) * d] = True
        sphere = np.ones(win.shape, dtype=bool)
        sphere[(slice(1, -1),) * d] = False
        return cls(win, a, sphere)

    @classmethod
    def left_right(cls, window: Window, axis: int = 0) -> "CrossingGeometry":
        a = np.zeros(window.shape, dtype=bool)
        b = np.zeros(window.shape, dtype=bool)
        sl = [slice(None)] * window.d
        sl[axis] = 0
        a[tuple(sl)] = True
        sl[axis] = -1
        b[tuple(sl)] = True
        return cls(window, a, b)

    def threshold(self, values: np.ndarray, floor: float = -np.inf) -> float:
        return sweep_threshold(values, self.source, self.sink, floor)


def crossing(config: BinaryConfig, inner: LatticeBox, outer: LatticeBox) -> bool:
    """Is some open site of ``inner`` joined to an open site of the sphere ``outer`` by an open path?"""
    if outer.kind != "sphere":
        raise ValueError("outer must be a sphere")
    win = config.window
    if not (np.all(win.contains(np.stack([outer.lower, outer.upper])))):
        raise ValueError("sphere does not fit in the window")
    if np.any(inner.lower <= outer.lower) or np.any(inner.upper >= outer.upper):
        raise ValueError("inner box must lie strictly inside the sphere")
    # restrict paths to the closed ball bounded by the sphere
    ball = LatticeBox(outer.anchor, outer.side, "ball")
    sub = ball.window()
    off = sub.lower - win.lower
    sl = tuple(slice(int(o), int(o) + s) for o, s in zip(off, sub.shape))
    bits = config.bits[sl]
    src = np.zeros(sub.shape, dtype=bool)
    src[sub.local(inner.points())] = True
    snk = np.ones(sub.shape, dtype=bool)
    snk[(slice(1, -1),) * sub.d] = False
    vals = bits.astype(np.float64)
    return sweep_threshold(vals, src, snk, floor=0.5) >= 0.5
