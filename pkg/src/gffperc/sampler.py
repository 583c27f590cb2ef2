"""Exact Gaussian free field samplers.

Box-shaped domains use the sine transform, which diagonalises I - P_U with
zero boundary data exactly; any other finite set falls back to a dense
Cholesky factor of the precision matrix. Every sample draws its noise from
its own counter-based stream, so sample ``i`` is the same field no matter
which worker produced it.
"""
from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field, replace
from functools import lru_cache
from typing import Callable

import numpy as np
from scipy import fft, linalg

from .greens import HighDimScalars, KilledGreenOperator, gprime_matrix, green_matrix, highdim_scalars
from .lattice import Window, as_point, as_points
from .rng import sample_stream

__all__ = [
    "ScalarField",
    "ConditionalShift",
    "DecompositionSample",
    "BoxSampler",
    "DenseSampler",
    "sample_gff",
    "sample_window",
    "padded_box",
    "sample_batch",
    "pair_moments",
    "conditional_shift",
    "conditional_decomposition_check",
    "sample_decomposition",
    "decomposition_batch",
    "fkg_mc_check",
    "write_fields",
    "read_fields",
]

MAX_DENSE_SITES = 8000
JITTER = 1e-10


@dataclass(frozen=True)
class ScalarField:
    """Real values on a window; reads outside the window return 0."""

    window: Window
    values: np.ndarray
    seed: int | None = None
    sampler: str = ""
    boundary: str = "zero outside window"
    index: int | None = None

    def __post_init__(self):
        if self.values.shape != self.window.shape:
            raise ValueError("values do not match window shape")

    def at(self, pts) -> np.ndarray:
        pts = as_points(pts, self.window.d)
        out = np.zeros(len(pts))
        inside = self.window.contains(pts)
        out[inside] = self.values[self.window.local(pts[inside])]
        return out

    def __getitem__(self, x) -> float:
        return float(self.at(as_point(x, self.window.d)[None, :])[0])

    def with_window(self, window: Window) -> "ScalarField":
        return replace(self, window=window)

    def restrict(self, window: Window) -> "ScalarField":
        off = window.lower - self.window.lower
        if np.any(off < 0) or np.any(off + window.shape > self.window.shape):
            raise ValueError("restriction window not contained in field window")
        sl = tuple(slice(int(o), int(o) + s) for o, s in zip(off, window.shape))
        return replace(self, window=window, values=self.values[sl].copy())


@lru_cache(maxsize=8)
def _inverse_sqrt_eigenvalues(shape: tuple) -> np.ndarray:
    out = 1.0 / np.sqrt(_eigenvalues(shape))
    out.setflags(write=False)
    return out


def _eigenvalues(shape: tuple) -> np.ndarray:
    d = len(shape)
    lam = np.ones(shape)
    for ax, n in enumerate(shape):
        c = np.cos(np.pi * np.arange(1, n + 1) / (n + 1)) / d
        sh = [1] * d
        sh[ax] = n
        lam = lam - c.reshape(sh)
    return lam


class BoxSampler:
    """Zero-boundary field on a box via the type-I discrete sine transform."""

    tag = "dst"

    def __init__(self, window: Window):
        self.window = window
        self.scale = _inverse_sqrt_eigenvalues(tuple(window.shape))

    def from_noise(self, z: np.ndarray) -> np.ndarray:
        axes = tuple(range(z.ndim - self.window.d, z.ndim))
        return fft.dstn(z * self.scale, type=1, norm="ortho", axes=axes, workers=1)

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return self.from_noise(rng.standard_normal(self.window.shape))


class DenseSampler:
    """Zero-boundary field on an arbitrary finite set via Cholesky of the precision."""

    tag = "cholesky"

    def __init__(self, U):
        self.op = KilledGreenOperator(U)
        if self.op.n > MAX_DENSE_SITES:
            raise ValueError(f"dense sampler capped at {MAX_DENSE_SITES} sites")
        try:
            self.chol = linalg.cholesky(self.op.precision.toarray(), lower=True)
        except linalg.LinAlgError as exc:
            raise linalg.LinAlgError(f"precision factorization failed: {exc}") from exc
        self.points = self.op.points

    def from_noise(self, z: np.ndarray) -> np.ndarray:
        # Q = L L^T, x = L^{-T} z has covariance Q^{-1}
        return linalg.solve_triangular(self.chol, z.T, lower=True, trans="T").T

    def draw(self, rng: np.random.Generator) -> np.ndarray:
        return self.from_noise(rng.standard_normal(self.op.n))


def padded_box(window: Window, margin: int, fast: bool = True) -> Window:
    """``window`` grown by ``margin``, then enlarged so every side n has n+1 FFT-friendly."""
    grown = window.grown(margin)
    if not fast:
        return grown
    lo = grown.lower.copy()
    shape = list(grown.shape)
    for ax, n in enumerate(grown.shape):
        extra = fft.next_fast_len(n + 1) - 1 - n
        lo[ax] -= extra // 2
        shape[ax] = n + extra
    return Window(tuple(lo), tuple(shape))


def sample_gff(U, seed: int, index: int = 0, experiment: str = "sample") -> ScalarField | tuple[np.ndarray, np.ndarray]:
    """One zero-boundary GFF sample on U.

    A :class:`Window` gives a :class:`ScalarField`; a point set gives
    ``(points, values)`` on those points.
    """
    rng = sample_stream(seed, experiment, index)
    if isinstance(U, Window):
        s = BoxSampler(U)
        return ScalarField(U, s.draw(rng), seed, s.tag, index=index)
    s = DenseSampler(U)
    return s.points, s.draw(rng)


def sample_window(window: Window, margin: int, seed: int, index: int, experiment: str = "window", fast: bool = True) -> ScalarField:
    """Approximate infinite-volume field on ``window``: sample on a padded box, keep the window."""
    box = padded_box(window, margin, fast)
    rng = sample_stream(seed, experiment, index)
    vals = BoxSampler(box).draw(rng)
    full = ScalarField(box, vals, seed, "dst", f"zero outside margin {margin}", index)
    return full.restrict(window)


def _batch_noise(n_sites_shape: tuple, seed: int, experiment: str, start: int, count: int) -> np.ndarray:
    out = np.empty((count,) + tuple(n_sites_shape))
    for i in range(count):
        out[i] = sample_stream(seed, experiment, start + i).standard_normal(n_sites_shape)
    return out


def sample_batch(sampler, n: int, seed: int, experiment: str, chunk: int = 2048):
    """Yield (start, values) blocks of samples with per-sample streams."""
    shape = sampler.window.shape if isinstance(sampler, BoxSampler) else (sampler.op.n,)
    for start in range(0, n, chunk):
        count = min(chunk, n - start)
        yield start, sampler.from_noise(_batch_noise(shape, seed, experiment, start, count))


def _pair_chunk(start: int, window: Window, idx: np.ndarray, n: int, seed: int, experiment: str, chunk: int) -> np.ndarray:
    count = min(chunk, n - start)
    block = BoxSampler(window).from_noise(_batch_noise(window.shape, seed, experiment, start, count))
    flat = block.reshape(count, -1)
    prod = flat[:, idx[:, 0]] * flat[:, idx[:, 1]]
    return np.stack([prod.sum(axis=0), (prod**2).sum(axis=0)])


def pair_moments(window: Window, pairs, n: int, seed: int, experiment: str = "pair-moments", workers: int | None = None, chunk: int = 1000) -> tuple[np.ndarray, np.ndarray]:
    """Empirical E[phi_x phi_y] for each pair, with standard errors.

    Chunks of samples are spread over workers and summed in chunk order,
    so the numbers do not depend on the worker count.
    """
    from functools import partial

    from .parallel import parallel_map

    pairs = [(as_point(a, window.d), as_point(b, window.d)) for a, b in pairs]
    idx = np.array([[window.index(a[None, :])[0], window.index(b[None, :])[0]] for a, b in pairs], dtype=np.int64)
    task = partial(_pair_chunk, window=window, idx=idx, n=n, seed=seed, experiment=experiment, chunk=chunk)
    total = np.zeros((2, len(pairs)))
    for part in parallel_map(task, range(0, n, chunk), workers, chunksize=1):
        total += part
    mean = total[0] / n
    var = np.maximum(total[1] / n - mean**2, 0.0)
    return mean, np.sqrt(var / n)


@dataclass
class ConditionalShift:
    """Harmonic extension of boundary values on K (the conditional mean given the field on K).

    With ``U`` given, the walk is also killed on leaving U, matching the
    zero-boundary field on U.
    """

    K: np.ndarray
    values: np.ndarray
    U: object = None
    _weights: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self.K = as_points(self.K)
        self.values = np.broadcast_to(np.asarray(self.values, dtype=float), (len(self.K),)).copy()
        self.d = self.K.shape[1]
        if self.U is not None:
            self._op = self.U if isinstance(self.U, KilledGreenOperator) else KilledGreenOperator(self.U)
            idx = [self._op.local_index(k) for k in self.K]
            if min(idx) < 0:
                raise ValueError("K must lie inside U")
            self._kidx = np.array(idx)
            self._GK = np.array([[self._op(a, b) for b in self.K] for a in self.K])
        else:
            self._GK = green_matrix(self.d, self.K)

    def entrance(self, x) -> np.ndarray:
        """Entrance law of K from x: P_x[first visit to K at k] (killed outside U if given)."""
        x = as_point(x, self.d)
        key = tuple(x)
        if key not in self._weights:
            hit = np.all(self.K == x, axis=1)
            if hit.any():
                w = hit.astype(float)
            elif self.U is not None:
                if self._op.local_index(x) < 0:
                    w = np.zeros(len(self.K))
                else:
                    gx = np.array([self._op(x, k) for k in self.K])
                    w = np.linalg.solve(self._GK, gx)
            else:
                gx = green_matrix(self.d, x[None, :], self.K)[0]
                w = np.linalg.solve(self._GK, gx)
            self._weights[key] = w
        return self._weights[key]

    def __call__(self, x) -> float:
        return float(self.entrance(x) @ self.values)

    def hitting(self, x) -> float:
        return float(self.entrance(x).sum())

    def constant(self, alpha: float, x) -> float:
        """m_x(alpha) = alpha * P_x[H_K < infinity]."""
        return alpha * self.hitting(x)


def conditional_shift(K, boundary_values, x, U=None) -> float:
    return ConditionalShift(K, boundary_values, U)(x)


@dataclass
class CheckReport:
    passed: bool
    max_corr_z: float
    max_cov_z: float
    residual_on_K: float
    n_samples: int
    details: dict = field(default_factory=dict)


def conditional_decomposition_check(window: Window, K, n_samples: int, seed: int, probe_pairs=None, z_gate: float = 4.0) -> CheckReport:
    """Sample the field on ``window``, subtract the conditional mean given the field on K,
    and test independence from the K-values and the killed covariance on the rest."""
    K = as_points(K, window.d)
    sampler = BoxSampler(window)
    pts = window.points()
    kidx = window.index(K)
    free = np.ones(window.size, dtype=bool)
    free[kidx] = False
    # entrance weights from every site, killed outside the window
    op_w = KilledGreenOperator(window)
    cols = np.stack([op_w.column(k) for k in K], axis=1)
    H = cols @ np.linalg.inv(cols[kidx])
    H[kidx] = np.eye(len(K))
    U_pts = pts[free]
    op_u = KilledGreenOperator(U_pts)

    if probe_pairs is None:
        rng = np.random.default_rng(seed)
        cand = np.nonzero(free)[0]
        near = cand[np.argsort(np.abs(pts[cand] - K[0]).sum(axis=1), kind="stable")[:6]]
        probe_pairs = [(near[0], near[0]), (near[0], near[1]), (near[2], rng.choice(cand))]
    else:
        probe_pairs = [(int(window.index(a)[0]), int(window.index(b)[0])) for a, b in probe_pairs]

    s_kk = np.zeros((len(K), len(K)))
    s_tk = np.zeros((window.size, len(K)))
    s_tt = np.zeros(window.size)
    s_pair = np.zeros(len(probe_pairs))
    resid = 0.0
    for _, block in sample_batch(sampler, n_samples, seed, "decomposition"):
        flat = block.reshape(len(block), -1)
        phiK = flat[:, kidx]
        tilde = flat - phiK @ H.T
        resid = max(resid, float(np.abs(tilde[:, kidx]).max()))
        s_kk += phiK.T @ phiK
        s_tk += tilde.T @ phiK
        s_tt += (tilde**2).sum(axis=0)
        for j, (a, b) in enumerate(probe_pairs):
            s_pair[j] += tilde[:, a] @ tilde[:, b]
    n = n_samples
    # centred field: second moments are covariances
    var_k = np.diag(s_kk) / n
    var_t = s_tt / n
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = (s_tk / n) / np.sqrt(np.outer(var_t, var_k))
    corr_z = np.abs(corr[free]) * math.sqrt(n)
    cov_z = []
    for j, (a, b) in enumerate(probe_pairs):
        pa, pb = pts[a], pts[b]
        gab = op_u(pa, pb)
        se = math.sqrt((op_u(pa, pa) * op_u(pb, pb) + gab**2) / n)
        cov_z.append(abs(s_pair[j] / n - gab) / se)
    max_corr = float(np.nanmax(corr_z))
    max_cov = float(max(cov_z))
    return CheckReport(
        passed=max_corr <= z_gate and max_cov <= z_gate and resid == 0.0,
        max_corr_z=max_corr,
        max_cov_z=max_cov,
        residual_on_K=resid,
        n_samples=n,
        details={"probe_pairs": [(pts[a].tolist(), pts[b].tolist()) for a, b in probe_pairs], "cov_z": cov_z},
    )


@dataclass(frozen=True)
class DecompositionSample:
    A: np.ndarray
    psi: np.ndarray
    xi: np.ndarray
    scalars: HighDimScalars

    @property
    def total(self) -> np.ndarray:
        return self.psi + self.xi


def _xi_factor(d: int, A: np.ndarray, scalars: HighDimScalars) -> np.ndarray:
    if len(A) > 4000:
        raise ValueError("dense correlated-part sampler capped at 4000 sites")
    G = gprime_matrix(d, A, scalars)
    try:
        return linalg.cholesky(G + JITTER * np.eye(len(A)), lower=True)
    except linalg.LinAlgError as exc:
        raise linalg.LinAlgError("correlated covariance is not positive semidefinite; Green table is suspect") from exc


def decomposition_batch(d: int, A, n: int, seed: int, scalars: HighDimScalars | None = None, experiment: str = "decomposition"):
    """(psi, xi) arrays of shape (n, |A|): iid part with variance sigma^2(d) and the correlated remainder."""
    A = as_points(A, 3)
    s = scalars or highdim_scalars(d)
    L = _xi_factor(d, A, s)
    psi = np.empty((n, len(A)))
    z = np.empty((n, len(A)))
    for i in range(n):
        rng = sample_stream(seed, experiment, i)
        psi[i] = rng.standard_normal(len(A))
        z[i] = rng.standard_normal(len(A))
    return math.sqrt(s.sigma2) * psi, z @ L.T


def sample_decomposition(d: int, A, seed: int, index: int = 0, scalars: HighDimScalars | None = None) -> DecompositionSample:
    A = as_points(A, 3)
    s = scalars or highdim_scalars(d)
    L = _xi_factor(d, A, s)
    rng = sample_stream(seed, "decomposition", index)
    psi = math.sqrt(s.sigma2) * rng.standard_normal(len(A))
    xi = L @ rng.standard_normal(len(A))
    return DecompositionSample(A, psi, xi, s)


@dataclass
class FkgReport:
    p_pinned: float
    se_pinned: float
    p_above: float
    se_above: float
    accepted: int
    holds: bool
    conclusive: bool


def fkg_mc_check(window: Window, K, event: Callable[[ScalarField], bool], alpha: float, n_samples: int, seed: int, min_accepted: int = 200) -> FkgReport:
    """Compare P[A | field = alpha on K] with P[A | field >= alpha on K] for an increasing event A."""
    K = as_points(K, window.d)
    pts = window.points()
    kidx = window.index(K)
    free = np.ones(window.size, dtype=bool)
    free[kidx] = False
    shift = ConditionalShift(K, alpha, KilledGreenOperator(window))
    mean = np.array([shift(p) for p in pts])
    inner = DenseSampler(pts[free])

    pinned = 0
    for start, block in sample_batch(inner, n_samples, seed, "fkg-pinned"):
        for row in block:
            vals = mean.copy()
            vals[free] += row
            pinned += bool(event(ScalarField(window, vals.reshape(window.shape))))
    box = BoxSampler(window)
    above = accepted = 0
    for start, block in sample_batch(box, n_samples, seed, "fkg-above"):
        flat = block.reshape(len(block), -1)
        keep = np.all(flat[:, kidx] >= alpha, axis=1)
        for row in block[keep]:
            accepted += 1
            above += bool(event(ScalarField(window, row)))
    p1 = pinned / n_samples
    se1 = math.sqrt(max(p1 * (1 - p1), 1e-300) / n_samples)
    if accepted == 0:
        return FkgReport(p1, se1, float("nan"), float("nan"), 0, True, False)
    p2 = above / accepted
    se2 = math.sqrt(max(p2 * (1 - p2), 1e-300) / accepted)
    holds = p1 <= p2 + 4 * math.hypot(se1, se2)
    return FkgReport(p1, se1, p2, se2, accepted, holds, accepted >= min_accepted)


_MAGIC = b"GFFS"
_VERSION = 1


def write_fields(path, fields: list[ScalarField], seed: int) -> None:
    """Binary dump: header then little-endian float64 values, row-major, field after field."""
    if not fields:
        raise ValueError("nothing to write")
    w = fields[0].window
    d = w.d
    with open(path, "wb") as fh:
        fh.write(_MAGIC)
        fh.write(struct.pack("<II", _VERSION, d))
        fh.write(struct.pack(f"<{d}q", *w.shape))
        fh.write(struct.pack(f"<{d}q", *w.origin))
        fh.write(struct.pack("<QQ", len(fields), seed))
        for f in fields:
            if f.window != w:
                raise ValueError("all fields must share one window")
            fh.write(np.ascontiguousarray(f.values, dtype="<f8").tobytes())


def read_fields(path) -> tuple[dict, np.ndarray]:
    with open(path, "rb") as fh:
        if fh.read(4) != _MAGIC:
            raise ValueError("not a field dump")
        version, d = struct.unpack("<II", fh.read(8))
        shape = struct.unpack(f"<{d}q", fh.read(8 * d))
        origin = struct.unpack(f"<{d}q", fh.read(8 * d))
        count, seed = struct.unpack("<QQ", fh.read(16))
        data = np.frombuffer(fh.read(), dtype="<f8").reshape((count,) + shape)
    return {"version": version, "d": d, "shape": shape, "origin": origin, "count": count, "seed": seed}, data
