"""Good and bad blocks for the slab argument, and *-circuits of bad blocks."""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import ndimage

from .clusters import BinaryConfig, label_clusters
from .greens import HighDimScalars, highdim_scalars
from .lattice import Window
from .percolation import McEstimate
from .sampler import _xi_factor
from .rng import sample_stream

__all__ = [
    "block_events",
    "surrounded",
    "circuit_probability_exact",
    "circuit_peierls_bound",
    "planted_circuit_mc",
    "bad_circuit_probe",
    "block_grid_points",
]


def _set_diameter(idx: np.ndarray, shape: tuple) -> int:
    coords = np.stack(np.unravel_index(idx, shape), axis=1)
    return int((coords.max(axis=0) - coords.min(axis=0)).max())


def block_events(psi: np.ndarray, xi: np.ndarray, L0: int, h: float) -> tuple[bool, bool]:
    """(F, G) for one block of side 2 L0 in Z^3.

    F: the largest cluster of {psi >= 2h} (ties broken by the smallest site
    in lexicographic order) touches both faces in directions 1 and 2, and no
    other cluster has diameter L0 - 1 or more.
    G: xi >= -h everywhere on the block.
    """
    psi = np.asarray(psi, dtype=float)
    xi = np.asarray(xi, dtype=float)
    if psi.shape != (2 * L0,) * 3 or xi.shape != psi.shape:
        raise ValueError("block arrays must have shape (2 L0,)^3")
    G = bool(xi.min() >= -h)
    win = Window((0, 0, 0), psi.shape)
    lab = label_clusters(BinaryConfig(win, psi >= 2 * h))
    if lab.count == 0:
        return False, G
    # ids are sorted smallest-site first, so argmax picks the lexicographic tie-break
    top = int(np.argmax(lab.sizes))
    big = int(lab.ids[top])
    members = lab.members(big)
    coords = np.stack(np.unravel_index(members, psi.shape), axis=1)
    side = psi.shape[0]
    crosses = all(coords[:, ax].min() == 0 and coords[:, ax].max() == side - 1 for ax in (0, 1))
    unique = True
    flat = lab.labels.ravel()
    for cid in lab.ids:
        if cid == big:
            continue
        if _set_diameter(np.flatnonzero(flat == cid), psi.shape) >= L0 - 1:
            unique = False
            break
    return bool(crosses and unique), G


def surrounded(bad: np.ndarray, centre: np.ndarray | None = None) -> bool:
    """Is the centre of a block grid enclosed by a *-connected circuit of bad blocks?

    By planar duality this holds exactly when no nearest-neighbour path of
    good blocks joins a good centre block to a good block on the outer ring.
    """
    bad = np.asarray(bad, dtype=bool)
    n0, n1 = bad.shape
    if centre is None:
        centre = np.zeros_like(bad)
        centre[(n0 - 1) // 2:n0 // 2 + 1, (n1 - 1) // 2:n1 // 2 + 1] = True
    good = ~bad
    lab, _ = ndimage.label(good)
    reach = np.unique(lab[centre & good])
    reach = reach[reach > 0]
    ring = np.ones_like(bad)
    ring[1:-1, 1:-1] = False
    return not bool(np.isin(lab[ring], reach).any())


@lru_cache(maxsize=16)
def _ring_layout(n: int):
    centre = np.zeros((n, n), dtype=bool)
    centre[(n - 1) // 2:n // 2 + 1, (n - 1) // 2:n // 2 + 1] = True
    ring = np.ones((n, n), dtype=bool)
    ring[1:-1, 1:-1] = False
    middle = ~centre & ~ring
    return centre, ring, middle


@lru_cache(maxsize=4)
def _circuit_counts(n: int) -> dict:
    """Number of inner configurations by (bad inner blocks, ring blocks adjacent to the centre's good component)."""
    centre, ring, middle = _ring_layout(n)
    inner_cells = np.argwhere(~ring)
    if len(inner_cells) > 20:
        raise ValueError("grid too large for exact enumeration")
    counts: dict = {}
    for bits in itertools.product((False, True), repeat=len(inner_cells)):
        bad = np.zeros((n, n), dtype=bool)
        for (i, j), b in zip(inner_cells, bits):
            bad[i, j] = b
        good = ~bad & ~ring
        lab, _ = ndimage.label(good)
        reach = np.unique(lab[centre & good])
        reach = reach[reach > 0]
        comp = np.isin(lab, reach)
        adj = np.zeros_like(comp)
        adj[1:, :] |= comp[:-1, :]
        adj[:-1, :] |= comp[1:, :]
        adj[:, 1:] |= comp[:, :-1]
        adj[:, :-1] |= comp[:, 1:]
        key = (sum(bits), int((adj & ring).sum()))
        counts[key] = counts.get(key, 0) + 1
    return {"cells": len(inner_cells), "counts": counts}


def circuit_probability_exact(q: float, n: int = 6) -> float:
    """Exact probability that the centre is surrounded when blocks are bad independently with probability q.

    Enumerates the centre and middle blocks once per grid size; the outer
    ring is summed analytically since only the number of ring blocks
    adjacent to the centre's good component matters.
    """
    table = _circuit_counts(n)
    cells = table["cells"]
    return float(sum(c * q**k * (1 - q) ** (cells - k) * q**m for (k, m), c in table["counts"].items()))


def circuit_peierls_bound(q: float, n: int = 6) -> float:
    """Path-counting bound: sum over circuit lengths k >= 2 of (ring starts) * 8^k q^k."""
    starts = n * n
    s = 0.0
    for k in range(2, 4 * n * n):
        s += starts * (8 * q) ** k
    return s


def planted_circuit_mc(q: float, n_grid: int, n: int, seed: int) -> McEstimate:
    hits = 0
    for i in range(n):
        rng = sample_stream(seed, "planted-circuit", i)
        hits += surrounded(rng.random((n_grid, n_grid)) < q)
    return McEstimate.bernoulli(hits, n, seed, q=q, grid=n_grid, what="planted-circuit")


def block_grid_points(L0: int, n_blocks: int) -> tuple[np.ndarray, tuple]:
    """Sites of Z^3 covered by the n x n grid of overlapping blocks x + [0, 2 L0)^3, x in L0 Z^2 x {0}."""
    extent = ((n_blocks + 1) * L0, (n_blocks + 1) * L0, 2 * L0)
    pts = np.stack(np.unravel_index(np.arange(np.prod(extent)), extent), axis=1).astype(np.int64)
    return pts, extent


def bad_circuit_probe(d: int, h0: float, L0: int, n_blocks: int, n: int, seed: int, scalars: HighDimScalars | None = None, force: str | None = None) -> McEstimate:
    """Frequency with which the centre of the block grid is surrounded by a *-circuit of h0-bad blocks."""
    if d < 6:
        raise ValueError("the decomposition needs d >= 6")
    if n_blocks > 8:
        raise ValueError("block grid is capped at 8 x 8")
    if force in ("good", "bad"):
        bad = np.full((n_blocks, n_blocks), force == "bad")
        hit = surrounded(bad)
        return McEstimate.bernoulli(n * hit, n, seed, d=d, h=h0, L=L0, what="bad-circuit", forced=force)
    s = scalars or highdim_scalars(d)
    pts, extent = block_grid_points(L0, n_blocks)
    chol = _xi_factor(d, pts, s)
    sd = math.sqrt(s.sigma2)
    side = 2 * L0
    hits = 0
    for i in range(n):
        rng = sample_stream(seed, f"slab-d{d}", i)
        psi = (sd * rng.standard_normal(len(pts))).reshape(extent)
        xi = (chol @ rng.standard_normal(len(pts))).reshape(extent)
        bad = np.zeros((n_blocks, n_blocks), dtype=bool)
        for a in range(n_blocks):
            for b in range(n_blocks):
                sl = (slice(a * L0, a * L0 + side), slice(b * L0, b * L0 + side), slice(0, side))
                F, G = block_events(psi[sl], xi[sl], L0, h0)
                bad[a, b] = not (F and G)
        hits += surrounded(bad)
    return McEstimate.bernoulli(hits, n, seed, d=d, h=h0, L=L0, what="bad-circuit")
