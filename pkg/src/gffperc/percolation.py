"""Monte Carlo estimators for level-set percolation of the free field.

All estimators reduce each sample to a single critical level (the largest h
at which the relevant connection event holds), found by one union-find
sweep. The estimate at any level h is then the fraction of samples whose
critical level is at least h, so curves over h use common random numbers
and are exactly monotone.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import partial

import numpy as np
from scipy import optimize, stats

from .clusters import CrossingGeometry
from .greens import green
from .lattice import Window, as_point
from .parallel import parallel_map
from .rng import sample_stream
from .sampler import sample_window

__all__ = [
    "McEstimate",
    "DecayFit",
    "HstarEstimate",
    "GridTooCoarseError",
    "default_margin",
    "crossing_thresholds",
    "estimate_crossing",
    "crossing_curve",
    "connectivity_thresholds",
    "estimate_connectivity",
    "plane_thresholds",
    "estimate_plane_crossing",
    "eta_proxy",
    "fit_decay",
    "half_crossing_level",
    "estimate_hstar",
    "fraction_above",
]


@dataclass(frozen=True)
class McEstimate:
    value: float
    se: float
    n: int
    seed: int
    meta: dict = field(default_factory=dict, compare=False)

    @classmethod
    def bernoulli(cls, hits: int, n: int, seed: int, **meta) -> "McEstimate":
        p = hits / n
        return cls(p, math.sqrt(p * (1 - p) / n), n, seed, meta)

    @property
    def hits(self) -> int:
        return int(round(self.value * self.n))

    def row(self) -> dict:
        m = self.meta
        return {"d": m.get("d"), "L": m.get("L"), "h": m.get("h"), "n": self.n, "seed": self.seed, "estimate": self.value, "se": self.se}


def default_margin(window_side: int) -> int:
    """Padding around an observation window: an eighth of its side, at least 8."""
    return max(8, window_side // 8)


def fraction_above(thresholds: np.ndarray, h: float) -> int:
    return int(np.count_nonzero(np.asarray(thresholds) >= h))


def _field_values(kind: str, window: Window, margin: int, seed: int, index: int, experiment: str) -> np.ndarray:
    if kind == "gff":
        return sample_window(window, margin, seed, index, experiment).values
    rng = sample_stream(seed, experiment, index)
    if kind == "iid-gaussian":
        return rng.standard_normal(window.shape)
    if kind == "iid-uniform":
        return rng.random(window.shape)
    raise ValueError(f"unknown field kind {kind!r}")


def _threshold_task(index: int, geometry: CrossingGeometry, kind: str, margin: int, seed: int, experiment: str, floor: float, squeeze: bool) -> float:
    vals = _field_values(kind, geometry.window, margin, seed, index, experiment)
    if squeeze:
        vals = vals.reshape(geometry.source.shape)
    return geometry.threshold(vals, floor)


def _thresholds(geometry: CrossingGeometry, n: int, seed: int, experiment: str, margin: int, floor: float, kind: str = "gff", workers: int | None = None, field_window: Window | None = None) -> np.ndarray:
    if field_window is not None:
        geo = CrossingGeometry(field_window, geometry.source, geometry.sink)
        task = partial(_threshold_task, geometry=geo, kind=kind, margin=margin, seed=seed, experiment=experiment, floor=floor, squeeze=True)
    else:
        task = partial(_threshold_task, geometry=geometry, kind=kind, margin=margin, seed=seed, experiment=experiment, floor=floor, squeeze=False)
    return np.array(parallel_map(task, range(n), workers))


def crossing_thresholds(d: int, L: int, n: int, seed: int, margin: int | None = None, floor: float = -np.inf, kind: str = "gff", workers: int | None = None) -> np.ndarray:
    """Per-sample critical levels for B(0, L) to S(0, 2L)."""
    geo = CrossingGeometry.box_to_sphere(d, L)
    m = default_margin(4 * L + 1) if margin is None else margin
    return _thresholds(geo, n, seed, f"crossing-{kind}-d{d}-L{L}", m, floor, kind, workers)


def crossing_curve(d: int, L: int, hs, n: int, seed: int, margin: int | None = None, workers: int | None = None, kind: str = "gff") -> list[McEstimate]:
    hs = [float(h) for h in hs]
    t = crossing_thresholds(d, L, n, seed, margin, min(hs), kind, workers)
    m = default_margin(4 * L + 1) if margin is None else margin
    return [McEstimate.bernoulli(fraction_above(t, h), n, seed, d=d, L=L, h=h, margin=m, what="crossing") for h in hs]


def estimate_crossing(d: int, L: int, h: float, n: int, seed: int, margin: int | None = None, workers: int | None = None) -> McEstimate:
    if n < 1:
        raise ValueError("n must be positive")
    return crossing_curve(d, L, [h], n, seed, margin, workers)[0]


def connectivity_thresholds(d: int, x, n: int, seed: int, margin: int | None = None, floor: float = -np.inf, workers: int | None = None, radius: int | None = None) -> np.ndarray:
    x = as_point(x, d)
    reach = int(np.abs(x).max())
    R = radius if radius is not None else max(2 * reach, reach + 8)
    win = Window.around(np.zeros(d, dtype=np.int64), R)
    geo = CrossingGeometry.point_to_point(win, np.zeros(d, dtype=np.int64), x)
    m = default_margin(2 * R + 1) if margin is None else margin
    key = "-".join(str(int(v)) for v in x)
    return _thresholds(geo, n, seed, f"connect-d{d}-x{key}", m, floor, "gff", workers)


def estimate_connectivity(d: int, x, h: float, n: int, seed: int, margin: int | None = None, workers: int | None = None) -> McEstimate:
    """P[0 and x joined inside E^{>=h}], with paths confined to a ball of radius max(2|x|, |x|+8)."""
    t = connectivity_thresholds(d, x, n, seed, margin, h, workers)
    return McEstimate.bernoulli(fraction_above(t, h), n, seed, d=d, L=int(np.abs(as_point(x, d)).max()), h=float(h), what="connectivity")


def plane_thresholds(L: int, n: int, seed: int, margin: int | None = None, floor: float = -np.inf, workers: int | None = None) -> np.ndarray:
    """Left-right crossing of [0, L]^2 x {0} by the three-dimensional field."""
    win3 = Window((0, 0, 0), (L + 1, L + 1, 1))
    win2 = Window((0, 0), (L + 1, L + 1))
    geo = CrossingGeometry.left_right(win2, axis=0)
    m = default_margin(L + 1) if margin is None else margin
    return _thresholds(geo, n, seed, f"plane-L{L}", m, floor, "gff", workers, field_window=win3)


def estimate_plane_crossing(L: int, h: float, n: int, seed: int, margin: int | None = None, workers: int | None = None) -> McEstimate:
    t = plane_thresholds(L, n, seed, margin, h, workers)
    return McEstimate.bernoulli(fraction_above(t, h), n, seed, d=3, L=L, h=float(h), what="plane")


def eta_proxy(d: int, radii, hs, n: int, seed: int, margin: int | None = None, workers: int | None = None) -> dict:
    """Origin-to-sphere connection probabilities, a finite-volume stand-in for the percolation density."""
    hs = [float(h) for h in hs]
    out = {}
    for R in radii:
        geo = CrossingGeometry.point_to_sphere(d, R)
        m = default_margin(2 * R + 1) if margin is None else margin
        t = _thresholds(geo, n, seed, f"eta-d{d}-R{R}", m, min(hs), "gff", workers)
        out[R] = [McEstimate.bernoulli(fraction_above(t, h), n, seed, d=d, L=R, h=h, what="eta-proxy") for h in hs]
    return out


@dataclass(frozen=True)
class DecayFit:
    Ls: tuple
    p: tuple
    classification: str
    rho: float | None = None
    c: float | None = None
    c_prime: float | None = None
    poly_exponent: float | None = None
    stretched_residual: float | None = None
    poly_residual: float | None = None
    method: str = ""
    notes: str = ""

    def to_json(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


_RHO_GRID = np.linspace(0.01, 1.0, 100)


def _binomial_nll(logp: np.ndarray, k: np.ndarray, n: np.ndarray) -> float:
    logp = np.minimum(logp, -1e-12)
    return float(-(k * logp + (n - k) * np.log(-np.expm1(logp))).sum())


def _fit_linear_binomial(x: np.ndarray, k: np.ndarray, n: np.ndarray, slope_sign: float = -1.0) -> tuple[float, float, float]:
    """Maximise the binomial likelihood of log p = a - b x with b >= 0."""
    p = np.clip(k / n, 0.5 / n, 1 - 0.5 / n)
    A = np.stack([np.ones_like(x), -x], axis=1)
    a0, b0 = np.linalg.lstsq(A, np.log(p), rcond=None)[0]
    b0 = max(b0, 1e-6)

    def nll(theta):
        a, lb = theta
        return _binomial_nll(a - math.exp(lb) * x, k, n)

    best = optimize.minimize(nll, [min(a0, -1e-6), math.log(b0)], method="Nelder-Mead", options={"xatol": 1e-10, "fatol": 1e-12, "maxiter": 4000})
    a, lb = best.x
    return float(a), float(math.exp(lb)), float(best.fun)


def fit_decay(curve, min_points: int = 3) -> DecayFit:
    """Classify a connection-probability curve p(L).

    ``curve`` is a list of ``(L, estimate)`` pairs where ``estimate`` is a
    :class:`McEstimate` or a bare probability. With sample counts the fits
    maximise the binomial likelihood; bare probabilities use least squares
    on log p. The stretched family log p = log c - c' L^rho is profiled over
    rho in (0, 1]; the polynomial family is log p = log c - k log L.
    """
    if len(curve) < min_points:
        raise ValueError(f"need at least {min_points} points")
    Ls = np.array([float(L) for L, _ in curve])
    ests = [e for _, e in curve]
    p = np.array([e.value if isinstance(e, McEstimate) else float(e) for e in ests])
    counted = all(isinstance(e, McEstimate) and e.n > 0 for e in ests)
    if np.all(p == 0):
        return DecayFit(tuple(Ls), tuple(p), "saturated", notes="no sample connected at any size")
    if np.all(p == 1):
        return DecayFit(tuple(Ls), tuple(p), "supercritical-like", notes="every sample connected at every size")
    order = np.argsort(Ls)
    if p[order[-1]] >= 0.8 * p[order[0]] and p.min() >= 0.5:
        return DecayFit(tuple(Ls), tuple(p), "supercritical-like", notes="flat curve")

    logL = np.log(Ls)
    if counted:
        n = np.array([e.n for e in ests], dtype=float)
        k = np.array([e.hits for e in ests], dtype=float)
        best = None
        for rho in _RHO_GRID:
            a, b, nll = _fit_linear_binomial(Ls**rho, k, n)
            if best is None or nll < best[3] - 1e-12:
                best = (rho, a, b, nll)
        rho, a, b, nll_s = best
        a_p, k_p, nll_p = _fit_linear_binomial(logL, k, n)
        # one extra parameter for the stretched family
        aic_s = 2 * 3 + 2 * nll_s
        aic_p = 2 * 2 + 2 * nll_p
        method = "binomial-likelihood"
        res_s, res_p = nll_s, nll_p
    else:
        if np.any(p <= 0):
            raise ValueError("least-squares fit needs p > 0 at every size")
        y = np.log(p)
        best = None
        for rho in _RHO_GRID:
            A = np.stack([np.ones_like(Ls), -(Ls**rho)], axis=1)
            coef, *_ = np.linalg.lstsq(A, y, rcond=None)
            r = float(((A @ coef - y) ** 2).sum())
            if best is None or r < best[3] - 1e-15:
                best = (rho, coef[0], coef[1], r)
        rho, a, b, res_s = best
        A = np.stack([np.ones_like(Ls), -logL], axis=1)
        coef, *_ = np.linalg.lstsq(A, y, rcond=None)
        a_p, k_p = coef
        res_p = float(((A @ coef - y) ** 2).sum())
        m = len(Ls)
        # Gaussian AIC with a floor on the residual to keep exact fits finite
        aic_s = m * math.log(max(res_s / m, 1e-12)) + 2 * 3
        aic_p = m * math.log(max(res_p / m, 1e-12)) + 2 * 2
        method = "least-squares"

    if rho <= 0.1 or aic_p <= aic_s:
        cls = "polynomial-like"
    else:
        cls = "stretched-exponential-like"
    return DecayFit(
        tuple(Ls), tuple(p), cls,
        rho=float(rho), c=float(math.exp(a)), c_prime=float(b), poly_exponent=float(k_p),
        stretched_residual=float(res_s), poly_residual=float(res_p), method=method,
        notes="rho at upper edge of grid: decay at least exponential" if rho >= 1.0 else "",
    )


class GridTooCoarseError(ValueError):
    pass


def half_crossing_level(thresholds: np.ndarray, grid, tol: float = 1e-10) -> float:
    """Level where the common-random-number curve crosses 1/2, by bisection inside the bracketing grid cell."""
    t = np.asarray(thresholds)
    grid = np.sort(np.asarray(grid, dtype=float))

    def p(h):
        return np.count_nonzero(t >= h) / t.size

    vals = np.array([p(h) for h in grid])
    if vals[0] < 0.5 or vals[-1] >= 0.5:
        raise GridTooCoarseError(f"curve does not cross 1/2 on [{grid[0]}, {grid[-1]}]: ends at {vals[0]:.3f}, {vals[-1]:.3f}")
    i = int(np.nonzero(vals >= 0.5)[0].max())
    lo, hi = grid[i], grid[i + 1]
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if p(mid) >= 0.5:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class HstarEstimate:
    loci: dict
    interval: tuple
    point: float
    tail_probability: float
    tail_interval: tuple
    n: int
    seed: int
    field: str

    def to_json(self) -> dict:
        return {
            "loci": {str(k): v for k, v in self.loci.items()},
            "interval": list(self.interval),
            "point": self.point,
            "tail_probability": self.tail_probability,
            "tail_interval": list(self.tail_interval),
            "n": self.n,
            "seed": self.seed,
            "field": self.field,
        }


def _marginal_sd(kind: str, d: int) -> float:
    if kind == "gff":
        return math.sqrt(green(d, 0).value)
    if kind == "iid-gaussian":
        return 1.0
    return float("nan")


def _tail(kind: str, h: float, sd: float) -> float:
    if kind == "iid-uniform":
        return float(min(1.0, max(0.0, 1.0 - h)))
    return float(stats.norm.sf(h / sd))


def estimate_hstar(d: int, sizes, h_grid, n: int, seed: int, margin: int | None = None, kind: str = "gff", workers: int | None = None) -> HstarEstimate:
    """Half-crossing loci over box sizes; the interval is their spread, the point is the largest size's locus."""
    sizes = sorted(int(L) for L in sizes)
    if len(sizes) < 3:
        raise ValueError("need at least three sizes")
    grid = np.sort(np.asarray(h_grid, dtype=float))
    loci = {}
    for L in sizes:
        t = crossing_thresholds(d, L, n if np.isscalar(n) else n[L], seed, margin, grid[0], kind, workers)
        loci[L] = half_crossing_level(t, grid)
    vals = list(loci.values())
    lo, hi = min(vals), max(vals)
    point = loci[sizes[-1]]
    sd = _marginal_sd(kind, d)
    return HstarEstimate(
        loci=loci,
        interval=(lo, hi),
        point=point,
        tail_probability=_tail(kind, point, sd),
        tail_interval=(_tail(kind, hi, sd), _tail(kind, lo, sd)),
        n=int(n) if np.isscalar(n) else int(sum(n.values())),
        seed=seed,
        field=kind,
    )
