"""High-dimension slab arithmetic: the correlated-part tail bound, the Peierls sum and the search for d0."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache

import numpy as np
from scipy import stats

from .blocks import block_events
from .clusters import CrossingGeometry
from .greens import highdim_scalars
from .lattice import Window
from .percolation import McEstimate, _thresholds
from .rng import sample_stream
from .sampler import _xi_factor

__all__ = [
    "RegimeError",
    "vtilde",
    "xi_tail_bound",
    "peierls_sum",
    "peierls_tail",
    "gaussian_tail",
    "slab_condition",
    "find_d0",
    "SlabReport",
    "slab_pipeline",
    "estimate_pc_site",
    "block_good_probability",
    "xi_block_failure",
]

TARGET = Fraction(1, 40)
D_MIN = 6
D_MAX = 10**6


class RegimeError(ValueError):
    """The tail bound is used outside the range where it holds."""


def vtilde(u: float) -> float:
    """sqrt(2 e u) exp(-u); equals 1 at u = 1/2 and decreases afterwards."""
    if u < 0:
        raise ValueError("u must be nonnegative")
    return math.sqrt(2 * math.e * u) * math.exp(-u)


def _log_vtilde(u: float) -> float:
    return 0.5 * math.log(2 * math.e * u) - u


@lru_cache(maxsize=None)
def _rho_bound(d: int) -> float:
    return highdim_scalars(d).rho_bound


def xi_tail_bound(d: int, h: float, size: int) -> float:
    """Bound on P[|xi_x| > h for every x in A] with |A| = size."""
    u = h * h / (2 * _rho_bound(d))
    if u <= 0.5:
        raise RegimeError(f"regime not applicable: h^2 / (2 rho) = {u:.4g} <= 1/2")
    return vtilde(u) ** size


def peierls_sum(n: int) -> Fraction:
    """8^n sum_k C(n, k) 40^-k 40^-(n-k), evaluated exactly."""
    if n < 1:
        raise ValueError("n must be at least 1")
    total = sum(Fraction(math.comb(n, k)) * Fraction(1, 40) ** k * Fraction(1, 40) ** (n - k) for k in range(n + 1))
    value = 8**n * total
    if not value < Fraction(1, 2**n):
        raise AssertionError("Peierls sum is not below 2^-n")
    return value


def peierls_tail(start: int = 2) -> Fraction:
    """Sum of (2/5)^n over n >= start, in closed form."""
    r = Fraction(2, 5)
    return r**start / (1 - r)


def gaussian_tail(h: float, sigma: float) -> float:
    return float(stats.norm.sf(h / sigma))


def slab_condition(d: int, h0: float, L0: int) -> tuple[bool, float]:
    """Does (2 L0)^3 vtilde(h0^2 / (2 rho(d)))^(1/4) <= 1/40 hold? Returns (holds, log of the left side)."""
    u = h0 * h0 / (2 * _rho_bound(d))
    if u <= 0.5:
        return False, math.inf
    log_lhs = 3 * math.log(2 * L0) + 0.25 * _log_vtilde(u)
    return log_lhs <= math.log(1 / 40), log_lhs


def find_d0(h0: float, L0: int, d_max: int = D_MAX) -> int:
    """Smallest d >= 6 meeting the slab condition, by doubling then bisection."""
    if h0 <= 0:
        raise ValueError("h0 must be positive")
    if L0 < 1:
        raise ValueError("L0 must be at least 1")
    if slab_condition(D_MIN, h0, L0)[0]:
        return D_MIN
    lo, hi = D_MIN, D_MIN
    while not slab_condition(hi, h0, L0)[0]:
        lo = hi
        if hi >= d_max:
            raise ValueError("h0 too small for this L0")
        hi = min(2 * hi, d_max)
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if slab_condition(mid, h0, L0)[0]:
            hi = mid
        else:
            lo = mid
    return hi


def estimate_pc_site(n: int = 400, seed: int = 0, side: int = 32, workers: int | None = None) -> float:
    """Bernoulli site threshold on Z^3: one minus the median left-right crossing level of iid uniform cubes."""
    win = Window((0, 0, 0), (side,) * 3)
    geo = CrossingGeometry.left_right(win)
    t = _thresholds(geo, n, seed, f"pc-site-L{side}", 0, -np.inf, "iid-uniform", workers)
    return float(1.0 - np.median(t))


def block_good_probability(h0: float, L0: int, n: int, seed: int, variance: float = 0.5) -> McEstimate:
    """Frequency of the crossing-and-uniqueness event for an iid N(0, variance) field at level 2 h0."""
    side = 2 * L0
    hits = 0
    sd = math.sqrt(variance)
    dummy = np.zeros((side,) * 3)
    for i in range(n):
        psi = sd * sample_stream(seed, "slab-block", i).standard_normal((side,) * 3)
        F, _ = block_events(psi, dummy, L0, h0)
        hits += F
    return McEstimate.bernoulli(hits, n, seed, h=h0, L=L0, what="block-good", variance=variance)


def xi_block_failure(d: int, h0: float, L0: int, n: int, seed: int) -> McEstimate:
    """Frequency of min over a block of xi being below -h0."""
    side = 2 * L0
    pts = np.stack(np.meshgrid(*[np.arange(side)] * 3, indexing="ij"), axis=-1).reshape(-1, 3)
    chol = _xi_factor(d, pts, highdim_scalars(d))
    hits = 0
    for i in range(n):
        z = sample_stream(seed, f"slab-xi-d{d}", i).standard_normal(len(pts))
        hits += bool((chol @ z).min() < -h0)
    return McEstimate.bernoulli(hits, n, seed, d=d, h=h0, L=L0, what="xi-block-failure")


@dataclass
class SlabReport:
    d0: int
    h0: float
    L0: int
    pc_site: float
    pc_source: str
    gates: dict
    empirical_checks: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "d0": self.d0,
            "h0": self.h0,
            "L0": self.L0,
            "pc_site": self.pc_site,
            "pc_source": self.pc_source,
            "gates": self.gates,
            "empirical_checks": self.empirical_checks,
        }


def slab_pipeline(h0: float, L0: int, pc_site: float | None = None, n_mc: int = 0, seed: int = 0) -> SlabReport:
    """Smallest d0 for the perturbation bound, with the analytic gates and optional Monte Carlo counterparts.

    The gate on the iid part (probability 2 h0 is exceeded should sit at the
    midpoint between 1/2 and the site threshold) and the stochastic
    domination gate are reported, not proved. ``n_mc > 0`` adds
    frequencies of good blocks and of xi failing on a block.
    """
    d0 = find_d0(h0, L0)
    _, log_lhs = slab_condition(d0, h0, L0)
    prev = slab_condition(d0 - 1, h0, L0)[1] if d0 > D_MIN else None
    if pc_site is None:
        pc_site, source = estimate_pc_site(seed=seed), "median left-right crossing of iid uniform cubes"
    else:
        source = "user-supplied"
    target = 0.5 * (0.5 + pc_site)
    p_iid = gaussian_tail(2 * h0, 1 / math.sqrt(2))
    h0_target = 0.5 * (1 / math.sqrt(2)) * float(stats.norm.isf(target))
    rho0 = _rho_bound(d0)
    gates = {
        "perturbation": {
            "lhs": math.exp(log_lhs),
            "rhs": float(TARGET),
            "holds": True,
            "lhs_at_d0_minus_1": None if prev is None else (math.exp(prev) if prev < math.inf else "regime not applicable"),
            "rho_bound_d0": rho0,
            "u_d0": h0 * h0 / (2 * rho0),
        },
        "iid_level": {
            "target": target,
            "p_2h0": p_iid,
            "h0_for_target": h0_target,
            "status": "iid part supercritical at 2 h0" if p_iid >= target else "h0 above the target level",
        },
        "stochastic_domination": {"required": 1 - float(TARGET), "status": "analytic gate, unverified (domination function not explicit)"},
        "peierls": {"tail_from_2": str(peierls_tail(2)), "below_one": peierls_tail(2) < 1},
    }
    checks = {}
    if n_mc > 0:
        good = block_good_probability(h0, L0, n_mc, seed)
        checks["block_good"] = {**good.row(), "gate": 1 - float(TARGET), "meets_gate": good.value >= 1 - float(TARGET)}
        if (2 * L0) ** 3 <= 4000:
            fail = xi_block_failure(d0, h0, L0, n_mc, seed)
            union = min(1.0, (2 * L0) ** 3 * vtilde(h0 * h0 / (2 * rho0)))
            checks["xi_block_failure"] = {**fail.row(), "union_bound": union}
    return SlabReport(d0, h0, L0, float(pc_site), source, gates, checks)
