"""Simple random walk potential theory on Z^d.

Two independent routes to the Green function are provided:

* ``quadrature``: g(x) = integral over t of prod_j ive(|x_j|, t/d), evaluated
  with adaptive quadrature on [0, T] plus an analytic tail from the
  large-argument expansion of the scaled Bessel functions. This is the
  reference value.
* ``box``: a conjugate-gradient solve of (I - P_U) u = delta_0 on an
  l-infinity ball, corrected by the harmonic extension of the far-field
  asymptotics c_d |w|^(2-d) from outside the ball.

On top of these sit killed Green operators, equilibrium measures,
capacities, hitting probabilities and the escape probability from a
three-dimensional coordinate subspace used by the high-dimension pipeline.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special
from scipy.sparse import coo_matrix, identity
from scipy.sparse.linalg import LinearOperator, cg, factorized

from .lattice import Window, as_point, as_points, boundaries, diameter
from .rng import stream

__all__ = [
    "GreenConvergenceError",
    "GreenValue",
    "GreenTable",
    "KilledGreenOperator",
    "Equilibrium",
    "HighDimScalars",
    "green",
    "green_quadrature",
    "green_box",
    "green_matrix",
    "far_field_constant",
    "killed_green",
    "equilibrium_and_capacity",
    "hitting_probability",
    "hitting_probability_mc",
    "kappa",
    "kappa_mc",
    "highdim_scalars",
    "gprime_matrix",
    "strong_markov_residual",
]

_TAIL_TERMS = 12
# ball radii for the box route; cost grows like (2R+1)^d
_BOX_RADIUS = {3: 32, 4: 12, 5: 8, 6: 5}
_DIRECT_SOLVE_MAX = 40_000


class GreenConvergenceError(RuntimeError):
    def __init__(self, message: str, diagnostics: dict):
        super().__init__(f"{message}: {diagnostics}")
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class GreenValue:
    value: float
    error: float
    method: str
    detail: dict = field(default_factory=dict, compare=False)

    def to_json(self) -> dict:
        out = {"value": self.value, "error": self.error, "method": self.method}
        out.update(self.detail)
        return out


def far_field_constant(d: int) -> float:
    """c_d in g(x) ~ c_d |x|^(2-d)."""
    return (d / 2) * math.gamma(d / 2 - 1) * math.pi ** (-d / 2)


def _far_field(d: int, w: np.ndarray) -> np.ndarray:
    r = np.sqrt((np.asarray(w, dtype=float) ** 2).sum(axis=-1))
    return far_field_constant(d) * r ** (2.0 - d)


def _canonical(x: np.ndarray, d: int) -> tuple:
    x = np.abs(as_point(x))
    if x.size < d:
        x = np.concatenate([x, np.zeros(d - x.size, dtype=np.int64)])
    elif x.size > d:
        raise ValueError(f"point of dimension {x.size} in Z^{d}")
    return tuple(sorted(int(v) for v in x))


def _tail_series(n: int, terms: int) -> np.ndarray:
    # ive(n, z) ~ (2 pi z)^(-1/2) sum_k c_k z^(-k)
    a = [1.0]
    for k in range(1, terms + 1):
        a.append(a[-1] * (4 * n * n - (2 * k - 1) ** 2) / (8 * k))
    return np.array([(-1) ** k * a[k] for k in range(terms + 1)])


@lru_cache(maxsize=200_000)
def _quadrature_canonical(d: int, key: tuple, tol: float) -> tuple[float, float]:
    orders, mult = np.unique(np.array(key, dtype=np.int64), return_counts=True)
    z0 = max(40.0, 4.0 * float(orders.max()) ** 2 + 40.0)
    T = z0 * d

    def integrand(t):
        z = np.asarray(t, dtype=float) / d
        with np.errstate(divide="ignore"):
            s = sum(m * np.log(special.ive(int(n), z)) for n, m in zip(orders, mult))
        return np.exp(s)

    edges = [0.0]
    e = 1.0
    while e < T:
        edges.append(e)
        e *= 2.0
    edges.append(T)
    total, err = 0.0, 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        v, er = integrate.quad(integrand, a, b, epsabs=tol / (10 * len(edges)), epsrel=1e-13, limit=200)
        total += v
        err += er

    poly = np.array([1.0])
    for n, m in zip(orders, mult):
        c = _tail_series(int(n), _TAIL_TERMS)
        for _ in range(int(m)):
            poly = np.convolve(poly, c)[: _TAIL_TERMS + 1]
    tail = 0.0
    last = 0.0
    for k, p in enumerate(poly):
        expo = d / 2 + k - 1
        logmag = (d / 2) * math.log(d / (2 * math.pi)) + k * math.log(d) - expo * math.log(T) - math.log(expo)
        term = p * math.exp(logmag) if logmag > -745 else 0.0
        tail += term
        last = term
    err += abs(last)
    return total + tail, err


def green_quadrature(d: int, x=0, tol: float = 1e-10) -> GreenValue:
    if d < 3:
        raise ValueError("the walk is recurrent for d <= 2")
    key = _canonical(np.atleast_1d(np.asarray(x, dtype=np.int64)), d)
    value, err = _quadrature_canonical(d, key, float(tol))
    if not np.isfinite(value) or err > tol:
        raise GreenConvergenceError("quadrature did not reach tolerance", {"d": d, "x": key, "value": value, "error": err, "tol": tol})
    return GreenValue(float(value), float(err), "quadrature")


def _stencil(u: np.ndarray) -> np.ndarray:
    """(I - P) u with zero values outside the array."""
    d = u.ndim
    acc = np.zeros_like(u)
    for ax in range(d):
        lo = [slice(None)] * d
        hi = [slice(None)] * d
        lo[ax] = slice(None, -1)
        hi[ax] = slice(1, None)
        acc[tuple(lo)] += u[tuple(hi)]
        acc[tuple(hi)] += u[tuple(lo)]
    return u - acc / (2 * d)


def _cg_box(rhs: np.ndarray, rtol: float) -> np.ndarray:
    shape = rhs.shape
    op = LinearOperator((rhs.size, rhs.size), matvec=lambda v: _stencil(v.reshape(shape)).ravel(), dtype=float)
    sol, info = cg(op, rhs.ravel(), rtol=rtol, maxiter=50_000)
    if info != 0:
        raise GreenConvergenceError("conjugate gradient stalled", {"shape": shape, "info": info})
    return sol.reshape(shape)


def _box_radius(d: int, reach: int) -> int:
    return max(_BOX_RADIUS.get(d, 4), reach + 2)


def green_box(d: int, points, radius: int | None = None, rtol: float = 1e-11) -> list[GreenValue]:
    """Green function at several displacements from one box solve."""
    pts = as_points(points, d)
    reach = int(np.abs(pts).max()) if len(pts) else 0
    R = radius if radius is not None else _box_radius(d, reach)
    if reach > R:
        raise ValueError("points outside the solve box")
    n = 2 * R + 1
    shape = (n,) * d
    rhs = np.zeros(shape)
    rhs[(R,) * d] = 1.0
    killed = _cg_box(rhs, rtol)

    forcing = np.zeros(shape)
    face = np.indices((n,) * (d - 1)).reshape(d - 1, -1).T - R
    for ax in range(d):
        for side, outside in ((0, -R - 1), (n - 1, R + 1)):
            w = np.insert(face, ax, outside, axis=1)
            vals = _far_field(d, w).reshape((n,) * (d - 1))
            idx = [slice(None)] * d
            idx[ax] = side
            forcing[tuple(idx)] += vals / (2 * d)
    extension = _cg_box(forcing, rtol)

    out = []
    for p in pts:
        at = tuple(p + R)
        corr = float(extension[at])
        # far-field error shrinks like R^-2 relative to the correction
        err = abs(corr) * d / R**2 + rtol
        out.append(GreenValue(float(killed[at]) + corr, err, "box-solve", {"radius": R, "killed": float(killed[at])}))
    return out


def green(d: int, x=0, tol: float = 1e-10, method: str = "quadrature") -> GreenValue:
    """g(x) for the simple random walk on Z^d.

    ``method="both"`` runs the two routes and raises if they disagree by
    more than their combined error estimates.
    """
    if method == "quadrature":
        return green_quadrature(d, x, tol)
    p = as_point(x, d)
    if method == "box":
        return green_box(d, p[None, :])[0]
    if method == "both":
        q = green_quadrature(d, p, tol)
        b = green_box(d, p[None, :])[0]
        diff = abs(q.value - b.value)
        if diff > q.error + b.error:
            raise GreenConvergenceError("quadrature and box solve disagree", {"quadrature": q.value, "box": b.value, "diff": diff})
        return GreenValue(q.value, q.error, "both", {"box_value": b.value, "box_error": b.error, "difference": float(diff)})
    raise ValueError(f"unknown method {method!r}")


@dataclass
class GreenTable:
    """Green values keyed by displacement, using the full hyperoctahedral symmetry."""

    d: int
    method: str = "quadrature"
    entries: dict = field(default_factory=dict)

    @classmethod
    def compute(cls, d: int, points, method: str = "quadrature", tol: float = 1e-10) -> "GreenTable":
        table = cls(d, method)
        pts = as_points(points)
        keys = sorted({_canonical(p, d) for p in pts})
        if method == "quadrature":
            for k in keys:
                table.entries[k] = _quadrature_canonical(d, k, tol)
        elif method == "box-solve":
            arr = np.array(keys, dtype=np.int64)
            for k, gv in zip(keys, green_box(d, arr)):
                table.entries[k] = (gv.value, gv.error)
        else:
            raise ValueError(f"unknown method {method!r}")
        return table

    def __getitem__(self, x) -> float:
        return self.entries[_canonical(x, self.d)][0]

    def error(self, x) -> float:
        return self.entries[_canonical(x, self.d)][1]

    def __len__(self) -> int:
        return len(self.entries)


def green_matrix(d: int, A, B=None, tol: float = 1e-10) -> np.ndarray:
    """Matrix g(a - b) for a in A, b in B. Points of lower dimension are embedded in Z^d."""
    A = as_points(A)
    B = A if B is None else as_points(B)
    diff = np.abs(A[:, None, :] - B[None, :, :])
    if diff.shape[-1] < d:
        diff = np.concatenate([diff, np.zeros(diff.shape[:2] + (d - diff.shape[-1],), dtype=np.int64)], axis=-1)
    flat = np.sort(diff.reshape(-1, d), axis=1)
    uniq, inv = np.unique(flat, axis=0, return_inverse=True)
    vals = np.array([_quadrature_canonical(d, tuple(int(v) for v in u), tol)[0] for u in uniq])
    return vals[inv.reshape(-1)].reshape(len(A), len(B))


class KilledGreenOperator:
    """Green function of the walk killed on leaving a finite set U.

    Internally holds the sparse precision I - P_U; columns of g_U come from a
    sparse LU factorization (small U) or conjugate gradient.
    """

    def __init__(self, U):
        if isinstance(U, Window):
            pts = U.points()
        elif hasattr(U, "points"):
            pts = U.points()
        else:
            pts = np.unique(as_points(U), axis=0)
        if len(pts) == 0:
            raise ValueError("empty set")
        self.points = pts
        self.d = pts.shape[1]
        self.n = len(pts)
        lo = pts.min(axis=0) - 1
        hi = pts.max(axis=0) + 1
        self.window = Window(tuple(lo), tuple(hi - lo + 1))
        self._lookup = np.full(self.window.size, -1, dtype=np.int64)
        self._lookup[self.window.index(pts)] = np.arange(self.n)

        rows, cols = [], []
        eye = np.eye(self.d, dtype=np.int64)
        for step in np.concatenate([eye, -eye]):
            j = self._lookup[self.window.index(pts + step)]
            ok = j >= 0
            rows.append(np.nonzero(ok)[0])
            cols.append(j[ok])
        r = np.concatenate(rows)
        c = np.concatenate(cols)
        adj = coo_matrix((np.full(r.size, 1.0 / (2 * self.d)), (r, c)), shape=(self.n, self.n))
        self.precision = (identity(self.n, format="csr") - adj.tocsr()).tocsr()
        self._solver = factorized(self.precision.tocsc()) if self.n <= _DIRECT_SOLVE_MAX else None
        self._columns: dict[int, np.ndarray] = {}

    def local_index(self, x) -> int:
        p = as_point(x, self.d)
        if not self.window.contains(p)[0]:
            return -1
        return int(self._lookup[self.window.index(p)[0]])

    def solve(self, rhs: np.ndarray, x0: np.ndarray | None = None) -> np.ndarray:
        if self._solver is not None:
            return self._solver(rhs)
        sol, info = cg(self.precision, rhs, x0=x0, rtol=1e-11, maxiter=50_000)
        if info != 0:
            raise GreenConvergenceError("conjugate gradient stalled", {"n": self.n, "info": info})
        return sol

    def column(self, y) -> np.ndarray:
        j = self.local_index(y)
        if j < 0:
            return np.zeros(self.n)
        if j not in self._columns:
            e = np.zeros(self.n)
            e[j] = 1.0
            self._columns[j] = self.solve(e)
        return self._columns[j]

    def __call__(self, x, y) -> float:
        i = self.local_index(x)
        if i < 0:
            return 0.0
        return float(self.column(y)[i])

    def dense(self) -> np.ndarray:
        if self.n > 6000:
            raise MemoryError("dense killed Green matrix too large")
        return np.linalg.inv(self.precision.toarray())

    def exit_distribution(self, x) -> tuple[np.ndarray, np.ndarray]:
        """Law of the first position outside U for the walk started at x in U."""
        col = self.column(x)
        eye = np.eye(self.d, dtype=np.int64)
        out_pts, out_w = [], []
        for step in np.concatenate([eye, -eye]):
            nb = self.points + step
            inside = self._lookup[self.window.index(nb)] >= 0
            out_pts.append(nb[~inside])
            out_w.append(col[~inside] / (2 * self.d))
        pts = np.concatenate(out_pts)
        w = np.concatenate(out_w)
        uniq, inv = np.unique(pts, axis=0, return_inverse=True)
        return uniq, np.bincount(inv.reshape(-1), weights=w)


def killed_green(U, x, y) -> float:
    """g_U(x, y); zero if either point is outside U."""
    op = U if isinstance(U, KilledGreenOperator) else KilledGreenOperator(U)
    return op(x, y)


def strong_markov_residual(U, x, y, tol: float = 1e-10) -> float:
    """g(x,y) - g_U(x,y) - E_x[g(X_exit, y)], which vanishes for the walk leaving U."""
    op = U if isinstance(U, KilledGreenOperator) else KilledGreenOperator(U)
    x = as_point(x, op.d)
    y = as_point(y, op.d)
    if op.local_index(x) < 0:
        return 0.0
    pts, w = op.exit_distribution(x)
    gz = green_matrix(op.d, pts, y[None, :], tol)[:, 0]
    gxy = green_matrix(op.d, x[None, :], y[None, :], tol)[0, 0]
    return float(gxy - op(x, y) - w @ gz)


@dataclass(frozen=True)
class Equilibrium:
    points: np.ndarray
    measure: np.ndarray
    capacity: float
    method: str
    error: float

    def of(self, x) -> float:
        x = as_point(x, self.points.shape[1])
        hit = np.all(self.points == x, axis=1)
        return float(self.measure[hit][0]) if hit.any() else 0.0


_EXACT_MAX = 2500


def _equilibrium_exact(K: np.ndarray, d: int, tol: float) -> Equilibrium:
    inner, _ = boundaries(K)
    G = green_matrix(d, inner, tol=tol)
    e = np.linalg.solve(G, np.ones(len(inner)))
    resid = float(np.abs(G @ e - 1).max())
    return Equilibrium(inner, e, float(e.sum()), "exact", resid + tol * len(inner))


def _equilibrium_box(K: np.ndarray, d: int, tol: float, margin: int | None) -> Equilibrium:
    span = diameter(K) + 1
    m = margin if margin is not None else max(span, 8)
    lo = K.min(axis=0) - m
    win = Window(tuple(lo), tuple(K.max(axis=0) - lo + m + 1))
    shape = win.shape
    inK = np.zeros(shape, dtype=bool)
    inK[win.local(K)] = True
    free = ~inK
    size = win.size

    def matvec(v):
        u = np.where(free, v.reshape(shape), 0.0)
        return np.where(free, _stencil(u), 0.0).ravel()

    op = LinearOperator((size, size), matvec=matvec, dtype=float)

    def dirichlet(rhs):
        u, info = cg(op, np.where(free, rhs, 0.0).ravel(), rtol=min(tol, 1e-10), maxiter=50_000)
        if info != 0:
            raise GreenConvergenceError("conjugate gradient stalled", {"shape": shape, "info": info})
        return np.where(free, u.reshape(shape), 0.0)

    inner, _ = boundaries(K)
    inner_local = win.local(inner)

    # escape to the box: unit data on K, zero outside
    unit = inK.astype(float)
    h0 = unit + dirichlet(-_stencil(unit))
    e0 = _stencil(h0)[inner_local]

    # return from outside the box: monopole far field of unit charge at the centre of K
    centre = (K.min(axis=0) + K.max(axis=0)) / 2.0
    rhs = np.zeros(shape)
    grid = np.indices(shape)
    for ax in range(d):
        for side, offset in ((0, -1), (shape[ax] - 1, 1)):
            cells = tuple(np.take(g, side, axis=ax).ravel() for g in grid)
            w = np.stack(cells, axis=1) + win.lower
            w[:, ax] += offset
            np.add.at(rhs, cells, _far_field(d, w - centre) / (2 * d))
    e1 = _stencil(dirichlet(rhs))[inner_local]

    # e = e0 + cap * e1 and cap = sum(e)
    cap = float(e0.sum() / (1.0 - e1.sum()))
    e = e0 + cap * e1
    returned = abs(cap * e1.sum())
    # kernel error O(m^-2) and higher multipoles of the returning mass
    err = returned * (1.0 + (span / 2.0) ** 2 / m**2) / m**2
    return Equilibrium(inner, e, cap, "box-solve", err)


def equilibrium_and_capacity(K, d: int | None = None, method: str = "auto", tol: float = 1e-9, margin: int | None = None) -> Equilibrium:
    """Equilibrium measure of a finite set and its capacity.

    ``exact`` inverts the Green matrix on the inner boundary; ``box-solve``
    computes escape probabilities on a surrounding box, then adds back the
    mass that returns from outside the box using a monopole far field.
    """
    K = np.unique(as_points(K, d), axis=0)
    if len(K) == 0:
        raise ValueError("K must be nonempty")
    d = K.shape[1]
    if d < 3:
        raise ValueError("capacity needs a transient walk (d >= 3)")
    if method == "auto":
        method = "exact" if len(boundaries(K)[0]) <= _EXACT_MAX else "box-solve"
    if method == "exact":
        return _equilibrium_exact(K, d, tol)
    if method == "box-solve":
        return _equilibrium_box(K, d, tol, margin)
    raise ValueError(f"unknown method {method!r}")


def hitting_probability(K, x, d: int | None = None, equilibrium: Equilibrium | None = None) -> float:
    """P_x[H_K < infinity] via the last-exit decomposition."""
    K = np.unique(as_points(K, d), axis=0)
    x = as_point(x, K.shape[1])
    if np.any(np.all(K == x, axis=1)):
        return 1.0
    eq = equilibrium or equilibrium_and_capacity(K)
    g = green_matrix(K.shape[1], x[None, :], eq.points)[0]
    return float(min(1.0, max(0.0, g @ eq.measure)))


def hitting_probability_mc(K, x, n: int, seed: int, radius: int = 20, batch: int = 8192) -> tuple[float, float]:
    """Walk simulation of P_x[H_K < infinity].

    Walks that leave the l-infinity ball of the given radius around the
    origin are scored with the potential-theoretic hitting probability from
    their exit point, so the estimate is unbiased up to that formula.
    Returns (estimate, standard error).
    """
    K = np.unique(as_points(K), axis=0)
    d = K.shape[1]
    x = as_point(x, d)
    eq = equilibrium_and_capacity(K)
    win = Window.around(np.zeros(d, dtype=np.int64), radius)
    target = np.zeros(win.size, dtype=bool)
    target[win.index(K)] = True
    eye = np.eye(d, dtype=np.int64)
    steps = np.concatenate([eye, -eye])
    scores = np.empty(n)
    for b0 in range(0, n, batch):
        rng = stream(seed, 0x5A17, b0 // batch)
        m = min(batch, n - b0)
        pos = np.tile(x, (m, 1))
        score = np.zeros(m)
        alive = np.arange(m)
        while alive.size:
            pos[alive] += steps[rng.integers(0, 2 * d, size=alive.size)]
            p = pos[alive]
            out = np.abs(p).max(axis=1) > radius
            hit = np.zeros(alive.size, dtype=bool)
            hit[~out] = target[win.index(p[~out])]
            score[alive[hit]] = 1.0
            if out.any():
                w = p[out]
                g = green_matrix(d, w, eq.points) if len(w) < 64 else _far_field(d, w[:, None, :] - eq.points[None, :, :])
                score[alive[out]] = np.clip(g @ eq.measure, 0.0, 1.0)
            alive = alive[~(hit | out)]
        scores[b0:b0 + m] = score
    return float(scores.mean()), float(scores.std(ddof=1) / math.sqrt(n))


def kappa(d: int, tol: float = 1e-11) -> float:
    """Probability that the walk on Z^d never returns to Z^3 x {0}."""
    if d < 6:
        raise ValueError("kappa is defined here for d >= 6")
    return float(1.0 / ((d / (d - 3)) * green_quadrature(d - 3, 0, tol).value))


def kappa_mc(d: int, n: int, seed: int, radius: int = 20) -> tuple[float, float]:
    """Walk estimate of kappa: project onto the last d-3 coordinates.

    The first step must leave Z^3 (probability (d-3)/d); afterwards the
    projected walk must never return to 0.
    """
    if d < 6:
        raise ValueError("kappa is defined here for d >= 6")
    m = d - 3
    start = np.zeros(m, dtype=np.int64)
    start[0] = 1
    p_return, se = hitting_probability_mc(np.zeros((1, m), dtype=np.int64), start, n, seed, radius)
    f = (d - 3) / d
    return f * (1.0 - p_return), f * se


@dataclass(frozen=True)
class HighDimScalars:
    d: int
    kappa: float
    sigma2: float
    a0: float
    rho_bound: float

    def to_json(self) -> dict:
        return {"d": self.d, "kappa": self.kappa, "sigma2": self.sigma2, "a0": self.a0, "rho_bound": self.rho_bound}


def highdim_scalars(d: int) -> HighDimScalars:
    k = kappa(d)
    return HighDimScalars(
        d=d,
        kappa=k,
        sigma2=1.0 / (2.0 - k),
        a0=2.0 * (1.0 - k) / (2.0 - k),
        rho_bound=2.0 * (1.0 - k) / (k * (2.0 - k)),
    )


def gprime_matrix(d: int, A, scalars: HighDimScalars | None = None) -> np.ndarray:
    """Covariance of the correlated part on A in Z^3: g restricted to Z^3 minus sigma^2 on the diagonal."""
    A = as_points(A, 3)
    s = scalars or highdim_scalars(d)
    G = green_matrix(d, A)
    return G - s.sigma2 * np.eye(len(A))
