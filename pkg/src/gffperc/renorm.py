"""Executable arithmetic of the multiscale renormalization.

Scales are exact integers and every probability that can reach
``exp(-2**n)`` is carried as a logarithm. Constants live in a
:class:`ConstantsLedger` that records where each value came from.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from functools import lru_cache
from pathlib import Path

import numpy as np

from .clusters import CrossingGeometry
from .greens import equilibrium_and_capacity, far_field_constant, green
from .lattice import Window

__all__ = [
    "B_CONSTANT",
    "Constant",
    "ConstantsLedger",
    "RenormConfig",
    "RecursionTrace",
    "TreeCount",
    "HSequence",
    "KSequence",
    "scales",
    "h_set_sizes",
    "enumerate_h_sets",
    "tree_counts",
    "m_sequence",
    "beta_sequence",
    "h_sequence",
    "k_sequence",
    "generic_recursion",
    "certify_from_seed",
    "p0_upper_bound",
    "p0_estimate",
    "max_mean_bound",
    "rho",
]

B_CONSTANT = 3.0 / (1.0 - math.exp(-1.0))
PROVENANCES = ("paper-symbolic", "numeric-default", "user-supplied")
_REQUIRED = ("c0", "c1", "c2", "B")
_ENUM_CAP = 4_000_000


@dataclass(frozen=True)
class Constant:
    value: float
    provenance: str
    note: str = ""

    def __post_init__(self):
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")


@dataclass
class ConstantsLedger:
    """Named constants with provenance. ``B`` is fixed by the induction and cannot be overridden."""

    entries: dict[str, Constant] = field(default_factory=dict)

    def __post_init__(self):
        b = self.entries.get("B")
        if b is None:
            self.entries["B"] = Constant(B_CONSTANT, "paper-symbolic", "3 / (1 - e^-1)")
        elif b.value != B_CONSTANT:
            raise ValueError("B must equal 3 / (1 - e^-1)")

    def __getitem__(self, name: str) -> float:
        if name not in self.entries:
            raise KeyError(f"ledger has no entry for {name!r}")
        return self.entries[name].value

    def __contains__(self, name: str) -> bool:
        return name in self.entries

    def require(self, *names: str) -> None:
        missing = [n for n in names if n not in self.entries]
        if missing:
            raise KeyError(f"ledger is missing {missing}")

    def with_entry(self, name: str, value: float, provenance: str = "user-supplied", note: str = "") -> "ConstantsLedger":
        e = dict(self.entries)
        e[name] = Constant(float(value), provenance, note)
        return ConstantsLedger(e)

    def provenance(self) -> dict:
        return {k: {"value": c.value, "provenance": c.provenance, "note": c.note} for k, c in sorted(self.entries.items())}

    def to_json(self) -> str:
        return json.dumps({"schema_version": 1, "constants": self.provenance()}, indent=2, sort_keys=True)

    def save(self, path) -> None:
        Path(path).write_text(self.to_json() + "\n")

    @classmethod
    def from_json(cls, text: str) -> "ConstantsLedger":
        raw = json.loads(text)
        consts = raw.get("constants", raw)
        entries = {}
        for name, v in consts.items():
            if isinstance(v, dict):
                entries[name] = Constant(float(v["value"]), v.get("provenance", "user-supplied"), v.get("note", ""))
            else:
                entries[name] = Constant(float(v), "user-supplied")
        return cls(entries)

    @classmethod
    def load(cls, path) -> "ConstantsLedger":
        return cls.from_json(Path(path).read_text())

    @classmethod
    def unit(cls) -> "ConstantsLedger":
        """c0 = c1 = c2 = 1, handy for arithmetic checks."""
        return cls({n: Constant(1.0, "user-supplied", "unit ledger") for n in ("c0", "c1", "c2")})

    @classmethod
    def defaults(cls, d: int, L0: int, l0: int) -> "ConstantsLedger":
        return _default_ledger(d, L0, l0)


@dataclass(frozen=True)
class RenormConfig:
    d: int
    L0: int
    l0: int
    h0: float
    ledger: ConstantsLedger | None = None
    strict: bool = True

    def __post_init__(self):
        if self.d < 3:
            raise ValueError("d must be at least 3")
        if int(self.L0) != self.L0 or self.L0 < 1:
            raise ValueError("L0 must be a positive integer")
        if int(self.l0) != self.l0 or self.l0 < 2:
            raise ValueError("l0 must be an integer >= 2")
        if self.strict and self.l0 < 100:
            raise ValueError("l0 must be at least 100 (pass strict=False for small-scale counting)")
        if self.ledger is None:
            object.__setattr__(self, "ledger", ConstantsLedger.defaults(self.d, self.L0, self.l0))
        self.ledger.require(*_REQUIRED)

    @property
    def K0(self) -> float:
        return math.log(2 * self.ledger["c0"]) + 2 * (self.d - 1) * math.log(self.l0) + self.ledger["B"]

    @property
    def g0(self) -> float:
        return _g0(self.d)


@lru_cache(maxsize=None)
def _g0(d: int) -> float:
    return green(d, 0).value


def rho(l0: int) -> float:
    return math.log(2) / math.log(l0)


def scales(cfg: RenormConfig, n: int) -> int:
    if n < 0:
        raise ValueError("n must be nonnegative")
    return int(cfg.l0) ** n * int(cfg.L0)


# ---------------------------------------------------------------- tree counting


def _meeting(lo: int, hi: int, side: int) -> int:
    """Number of intervals [j s, j s + s - 1] meeting [lo, hi]."""
    return hi // side - lo // side + 1


def _contained(lo: int, hi: int, side: int) -> int:
    first = -((-lo) // side)
    last = (hi - side + 1) // side
    return max(0, last - first + 1)


def h_set_sizes(d: int, l0: int, L0: int, n: int) -> tuple[int, int]:
    """(|H1(n, x)|, |H2(n, x)|) from per-axis interval counts."""
    if n < 1:
        raise ValueError("n must be at least 1")
    L = l0**n * L0
    s = l0 ** (n - 1) * L0
    D = L // 2
    h1 = l0**d - max(l0 - 2, 0) ** d
    a = _meeting(-D, L - 1 + D, s)
    b = _contained(-D + 1, L - 2 + D, s)
    return h1, a**d - b**d


def _cube(lo: int, hi: int, d: int) -> np.ndarray:
    axes = [np.arange(lo, hi + 1, dtype=np.int64)] * d
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, d)


def enumerate_h_sets(d: int, l0: int, L0: int, n: int) -> tuple[np.ndarray, np.ndarray]:
    """H1 and H2 of the root box at level n, as level-(n-1) index vectors, by listing lattice points."""
    L = l0**n * L0
    s = l0 ** (n - 1) * L0
    D = L // 2
    if (L + 2 * D + 1) ** d > _ENUM_CAP:
        raise ValueError("enumeration size cap exceeded")
    inside = _cube(0, L - 1, d)
    on_edge = np.any((inside == 0) | (inside == L - 1), axis=1)
    h1 = np.unique(inside[on_edge] // s, axis=0)
    around = _cube(-D, L - 1 + D, d)
    dist = np.maximum(np.maximum(-around, around - (L - 1)), 0).max(axis=1)
    h2 = np.unique(around[dist == D] // s, axis=0)
    return h1, h2


def _reach(d: int, l0: int, L0: int, k: int) -> np.ndarray:
    """Level-0 indices of all nodes that a tree rooted at (k, 0) can contain."""
    if k == 0:
        return np.zeros((1, d), dtype=np.int64)
    h1, h2 = enumerate_h_sets(d, l0, L0, k)
    kids = np.concatenate([h1, h2])
    below = _reach(d, l0, L0, k - 1)
    if len(kids) * len(below) > _ENUM_CAP:
        raise ValueError("enumeration size cap exceeded")
    scale = l0 ** (k - 1)
    pts = (kids[:, None, :] * scale + below[None, :, :]).reshape(-1, d)
    return np.unique(pts, axis=0)


def _children_separable(d: int, l0: int, L0: int, k: int) -> bool:
    """Do the subtrees hanging off any H1 child and any H2 child of (k, 0) occupy disjoint level-0 sites?"""
    h1, h2 = enumerate_h_sets(d, l0, L0, k)
    if k == 1:
        return not (set(map(tuple, h1.tolist())) & set(map(tuple, h2.tolist())))
    sub = _reach(d, l0, L0, k - 1)
    if len(sub) ** 2 > _ENUM_CAP:
        raise ValueError("enumeration size cap exceeded")
    diffs = set(map(tuple, np.unique((sub[:, None, :] - sub[None, :, :]).reshape(-1, d), axis=0).tolist()))
    scale = l0 ** (k - 1)
    offsets = np.unique(((h2[None, :, :] - h1[:, None, :]) * scale).reshape(-1, d), axis=0)
    return not any(tuple(o) in diffs for o in offsets.tolist())


@dataclass(frozen=True)
class TreeCount:
    n: int
    log_bound: float
    bound: Fraction | None
    exact: int | None
    method: str
    h1: tuple
    h2: tuple

    def to_json(self) -> dict:
        return {
            "n": self.n,
            "log_bound": self.log_bound,
            "bound": None if self.bound is None else str(self.bound),
            "exact": self.exact,
            "method": self.method,
            "h1": list(self.h1),
            "h2": list(self.h2),
        }


def tree_counts(cfg: RenormConfig, n: int, exact_upto: int = 2) -> TreeCount:
    """Cardinality bound (c0 l0^(2(d-1)))^(2^n) and, for small cases, the exact count.

    The exact count uses |Lambda_n| = |H1(n)| |H2(n)| |Lambda_{n-1}|^2,
    which needs the two subtrees below the root to be recoverable from the
    union; that separation is checked by enumeration. At n = 1 the trees
    are listed explicitly.
    """
    if n < 0:
        raise ValueError("n must be nonnegative")
    d, l0, L0 = cfg.d, cfg.l0, cfg.L0
    base = Fraction(cfg.ledger["c0"]) * l0 ** (2 * (d - 1))
    log_bound = (2**n) * (math.log(cfg.ledger["c0"]) + 2 * (d - 1) * math.log(l0))
    bound = base ** (2**n) if n <= 4 else None
    sizes = [h_set_sizes(d, l0, L0, k) for k in range(1, n + 1)]
    h1s = tuple(s[0] for s in sizes)
    h2s = tuple(s[1] for s in sizes)
    if n == 0:
        return TreeCount(0, log_bound, bound, 1, "root only", h1s, h2s)
    if n > exact_upto:
        return TreeCount(n, log_bound, bound, None, "bound only", h1s, h2s)

    count = 1
    method = "enumerated"
    for k in range(1, n + 1):
        e1, e2 = enumerate_h_sets(d, l0, L0, k)
        if (len(e1), len(e2)) != sizes[k - 1]:
            raise AssertionError("interval counts disagree with enumeration")
        if k == 1:
            trees = {frozenset({(1, (0,) * d), (0, tuple(a)), (0, tuple(b))}) for a in e1.tolist() for b in e2.tolist()}
            count = len(trees)
        else:
            if not _children_separable(d, l0, L0, k):
                method = "product upper bound (subtrees overlap)"
            count = len(e1) * len(e2) * count**2
    if bound is not None and count > bound:
        raise AssertionError("tree count exceeds the cardinality bound")
    return TreeCount(n, log_bound, bound, count if method == "enumerated" else None, method, h1s, h2s)


# ---------------------------------------------------------------- sequences


def m_sequence(cfg: RenormConfig, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1, dtype=float)
    return cfg.ledger["c2"] * np.sqrt(n * math.log(2) + cfg.d * math.log(3 * cfg.L0))


def beta_sequence(cfg: RenormConfig, n_max: int) -> np.ndarray:
    n = np.arange(n_max + 1, dtype=float)
    return math.sqrt(math.log(2)) + m_sequence(cfg, n_max) + 2.0 ** ((n + 1) / 2) * (np.sqrt(n) + math.sqrt(cfg.K0))


@dataclass(frozen=True)
class HSequence:
    h: np.ndarray
    increments: np.ndarray
    h_infinity: float
    tail_bound: float
    terms: int


def _beta_ratio_bound(cfg: RenormConfig, N: int) -> float:
    """Upper bound on beta_{m+1} / beta_m valid for all m >= N."""
    K0 = cfg.K0
    r_growth = math.sqrt(2) * (math.sqrt(N + 1) + math.sqrt(K0)) / (math.sqrt(N) + math.sqrt(K0))
    base = cfg.d * math.log(3 * cfg.L0)
    r_max = math.sqrt(((N + 1) * math.log(2) + base) / (N * math.log(2) + base))
    return max(r_growth, r_max, 1.0)


def h_sequence(cfg: RenormConfig, n_max: int, tol: float = 1e-17) -> HSequence:
    """h_0 .. h_{n_max} with h_{n+1} - h_n = c1 beta_n (2 l0^-(d-2))^(n+1), plus the limit.

    The limit sums increments until they fall below ``tol`` relative to h_0
    and bounds the remainder by a geometric series.
    """
    c1 = cfg.ledger["c1"]
    log_q = math.log(2) - (cfg.d - 2) * math.log(cfg.l0)

    def increments(upto: int) -> np.ndarray:
        n = np.arange(upto + 1, dtype=float)
        return c1 * beta_sequence(cfg, upto) * np.exp((n + 1) * log_q)

    inc = increments(n_max)
    h = np.array([cfg.h0 + math.fsum(inc[:k]) for k in range(n_max + 1)])
    if c1 == 0:
        return HSequence(h, inc, float(cfg.h0), 0.0, 0)
    scale = max(abs(cfg.h0), 1.0)
    N = max(n_max, 8)
    while True:
        full = increments(N)
        if full[-1] < tol * scale or N > 4000:
            break
        N *= 2
    q = _beta_ratio_bound(cfg, N) * math.exp(log_q)
    tail = float(full[-1] * q / (1 - q)) if q < 1 else math.inf
    return HSequence(h, inc, cfg.h0 + math.fsum(full), tail, N + 1)


@dataclass(frozen=True)
class KSequence:
    K: np.ndarray
    K0: float
    B: float
    log_pn: np.ndarray
    lower_ok: bool
    upper_ok: bool


def _remainder_log(cfg: RenormConfig, n_max: int) -> np.ndarray:
    """log(3 exp(-(beta_n - M_n)^2)), the additive term of one renormalization step."""
    gap = beta_sequence(cfg, n_max) - m_sequence(cfg, n_max)
    return math.log(3) - gap**2


def k_sequence(cfg: RenormConfig, n_max: int, K0: float | None = None) -> KSequence:
    K0 = cfg.K0 if K0 is None else K0
    B = cfg.ledger["B"]
    gap2 = (beta_sequence(cfg, n_max) - m_sequence(cfg, n_max)) ** 2
    K = np.empty(n_max + 1)
    K[0] = K0
    for n in range(n_max):
        w = 2.0 ** (-(n + 1))
        # log(1 + e^{K_n} 3^w e^{-w gap^2}) without overflow
        K[n + 1] = K[n] - np.logaddexp(0.0, K[n] + w * math.log(3) - w * gap2[n])
    log_pn = -K * 2.0 ** np.arange(n_max + 1)
    return KSequence(K, K0, B, log_pn, bool(np.all(K >= K0 - B)), bool(np.all(K <= K0)))


def generic_recursion(cfg: RenormConfig, q0: float, direction: str = "increasing", n_max: int = 40) -> dict:
    """Iterate q_{n+1} = q_n^2 + 3 exp(-(beta_n - M_n)^2) in log space.

    For decreasing events the same bound holds along the reflected levels
    -h_n, so only the level sequence changes sign.
    """
    if not 0.0 <= q0 <= 1.0:
        raise ValueError("q0 must lie in [0, 1]")
    if direction not in ("increasing", "decreasing"):
        raise ValueError("direction must be 'increasing' or 'decreasing'")
    rem = _remainder_log(cfg, n_max)
    logq = np.empty(n_max + 1)
    logq[0] = math.log(q0) if q0 > 0 else -math.inf
    for n in range(n_max):
        logq[n + 1] = np.logaddexp(2 * logq[n], rem[n])
    hs = h_sequence(cfg, n_max).h
    levels = hs if direction == "increasing" else -hs
    return {"direction": direction, "levels": levels, "log_q": logq, "q": np.exp(logq), "log_remainder": rem}


# ---------------------------------------------------------------- seed and certificate


def max_mean_bound(g0: float, size: int) -> float:
    """A + size (g0 / A) exp(-A^2 / (2 g0)) with A = sqrt(2 g0 log size); bounds E[max] of ``size`` N(0, g0) variables."""
    if size < 2:
        return math.sqrt(g0)
    A = math.sqrt(2 * g0 * math.log(size))
    return A + size * (g0 / A) * math.exp(-A * A / (2 * g0))


def p0_upper_bound(cfg: RenormConfig) -> float:
    """Concentration bound on the probability that the field exceeds h0 somewhere on the seed box of side 3 L0."""
    g0 = cfg.g0
    emax = max_mean_bound(g0, (3 * cfg.L0) ** cfg.d)
    if cfg.h0 <= emax:
        raise ValueError(f"h0 = {cfg.h0} does not exceed the mean-maximum bound {emax:.6g}; increase h0")
    return math.exp(-((cfg.h0 - emax) ** 2) / (2 * g0))


def p0_estimate(cfg: RenormConfig, n: int, seed: int, margin: int | None = None, workers: int | None = None):
    """Monte Carlo frequency of a crossing from the seed box to the inner boundary of its neighbourhood."""
    from .percolation import McEstimate, _thresholds, default_margin, fraction_above

    d, L0 = cfg.d, cfg.L0
    win = Window((-L0,) * d, (3 * L0,) * d)
    src = np.zeros(win.shape, dtype=bool)
    src[(slice(L0, 2 * L0),) * d] = True
    sink = np.ones(win.shape, dtype=bool)
    sink[(slice(1, -1),) * d] = False
    geo = CrossingGeometry(win, src, sink)
    m = default_margin(3 * L0) if margin is None else margin
    t = _thresholds(geo, n, seed, f"seed-d{d}-L{L0}", m, cfg.h0, "gff", workers)
    return McEstimate.bernoulli(fraction_above(t, cfg.h0), n, seed, d=d, L=L0, h=cfg.h0, what="seed-crossing")


@dataclass(frozen=True)
class RecursionTrace:
    L: list
    M: np.ndarray
    beta: np.ndarray
    h: np.ndarray
    K: np.ndarray
    log_pn_bound: np.ndarray
    h_infinity: float
    h_tail_bound: float
    p0: float
    K0: float
    valid: bool
    certificate: str
    provenance: dict
    flags: dict

    @property
    def pn_bound(self) -> np.ndarray:
        return np.exp(self.log_pn_bound)

    def to_json(self) -> dict:
        return {
            "schema_version": 1,
            "Ln": [str(x) for x in self.L],
            "Mn": self.M.tolist(),
            "beta_n": self.beta.tolist(),
            "h_n": self.h.tolist(),
            "K_n": self.K.tolist(),
            "log_pn_bound": self.log_pn_bound.tolist(),
            "pn_bound": self.pn_bound.tolist(),
            "h_infinity": self.h_infinity,
            "h_tail_bound": self.h_tail_bound,
            "p0": self.p0,
            "K0": self.K0,
            "valid": self.valid,
            "certificate": self.certificate,
            "flags": self.flags,
            "provenance": self.provenance,
        }


def certify_from_seed(cfg: RenormConfig, p0: float, source: str = "analytic", n_max: int = 40) -> RecursionTrace:
    """Propagate a seed bound p0 <= exp(-K0) through the renormalization.

    ``source`` is ``analytic`` (p0 from :func:`p0_upper_bound`, certificate
    conditional on the ledger constants) or ``mc`` (a Monte Carlo seed,
    certificate only empirical). If the seed condition fails the trace is
    returned with ``valid`` false and no per-level bounds.
    """
    if source not in ("analytic", "mc"):
        raise ValueError("source must be 'analytic' or 'mc'")
    if not 0.0 <= p0 <= 1.0:
        raise ValueError("p0 must lie in [0, 1]")
    K0 = cfg.K0
    if K0 < cfg.ledger["B"]:
        raise ValueError("K0 must be at least B")
    ks = k_sequence(cfg, n_max)
    hs = h_sequence(cfg, n_max)
    seed_ok = p0 == 0.0 or p0 <= math.exp(-K0) or math.log(p0) <= -K0
    flags = {
        "seed_condition": seed_ok,
        "K_lower": ks.lower_ok,
        "K_upper": ks.upper_ok,
        "h_increasing": bool(np.all(hs.increments > 0)),
        "beta_condition": bool(np.all(beta_sequence(cfg, n_max) >= math.sqrt(math.log(2)) + m_sequence(cfg, n_max))),
    }
    valid = seed_ok and ks.lower_ok and ks.upper_ok
    if valid:
        log_pn = ks.log_pn.copy()
        if p0 == 0.0:
            # the recursion from zero stays below the K-chain
            log_pn = np.minimum(log_pn, generic_recursion(cfg, 0.0, n_max=n_max)["log_q"])
    else:
        log_pn = np.full(n_max + 1, np.nan)
    return RecursionTrace(
        L=[scales(cfg, n) for n in range(n_max + 1)],
        M=m_sequence(cfg, n_max),
        beta=beta_sequence(cfg, n_max),
        h=hs.h,
        K=ks.K,
        log_pn_bound=log_pn,
        h_infinity=hs.h_infinity,
        h_tail_bound=hs.tail_bound,
        p0=float(p0),
        K0=K0,
        valid=bool(valid),
        certificate=("analytic-conditional" if source == "analytic" else "empirical") if valid else "none",
        provenance={"p0_source": source, "constants": cfg.ledger.provenance(), "d": cfg.d, "L0": cfg.L0, "l0": cfg.l0, "h0": cfg.h0},
        flags=flags,
    )


# ---------------------------------------------------------------- default constants


def _c0_default(d: int, L0: int, l0: int, levels: int = 24) -> tuple[float, str]:
    best = Fraction(0)
    for k in range(1, levels + 1):
        h1, h2 = h_set_sizes(d, l0, L0, k)
        best = max(best, Fraction(h1 * h2, l0 ** (2 * (d - 1))))
    return float(max(best, 1)), f"max over levels 1..{levels} of |H1||H2| / l0^(2(d-1))"


def _separation(L0: int, l0: int, levels: int = 30) -> float:
    """Smallest (distance between the two subtrees' sites) / L_{n+1} over levels, in sup-norm."""
    worst = math.inf
    for n in range(levels):
        Ln = l0**n * L0
        Lnext = l0 * Ln
        D = Lnext // 2
        # outward reach of the sites a level-n subtree can visit, plus the seed neighbourhood
        reach = sum(l0**k * L0 // 2 + l0 ** (k - 1) * L0 for k in range(1, n + 1)) + L0
        gap = D - (Ln - 1) - 2 * reach
        worst = min(worst, gap / Lnext)
    return worst


@lru_cache(maxsize=None)
def _green_decay_constant(d: int) -> float:
    """sup of g(x) |x|^(d-2) over a probe set of points, and the far-field constant."""
    probes = [np.eye(d, dtype=int)[0] * k for k in range(1, 7)]
    probes += [np.r_[np.ones(j, dtype=int), np.zeros(d - j, dtype=int)] for j in range(2, d + 1)]
    vals = [green(d, p).value * float(np.linalg.norm(p)) ** (d - 2) for p in probes]
    return max(max(vals), far_field_constant(d))


@lru_cache(maxsize=None)
def _capacity_constant(d: int) -> float:
    """sup of cap(box of side s) / s^(d-2) over small s."""
    sides = [2, 3] if 3**d <= 3000 else [2]
    if 2**d > 3000:
        return 2**d / _g0(d) / 2 ** (d - 2)
    ratios = []
    for s in sides:
        pts = np.stack(np.meshgrid(*[np.arange(s)] * d, indexing="ij"), axis=-1).reshape(-1, d)
        ratios.append(equilibrium_and_capacity(pts, d, method="exact").capacity / s ** (d - 2))
    return max(ratios)


def _default_ledger(d: int, L0: int, l0: int) -> ConstantsLedger:
    c0, c0_note = _c0_default(d, L0, l0)
    size = (3 * L0) ** d
    c2 = 1.0 + 1.0 / (2.0 * math.log(size))
    g0 = _g0(d)
    sep = _separation(L0, l0)
    c_green = _green_decay_constant(d)
    c_cap = _capacity_constant(d)
    if sep > 0:
        c1 = math.sqrt(2 * g0) * c_cap * c_green * (3.0 / sep) ** (d - 2)
        c1_note = "sqrt(2 g0) c_cap c_green (3 / c_sep)^(d-2) from the hitting-probability chain; fitted, not a proof"
    else:
        c1 = math.inf
        c1_note = "subtrees are not separated at this l0; the chain gives no finite value"
    return ConstantsLedger(
        {
            "c0": Constant(c0, "numeric-default", c0_note),
            "c1": Constant(c1, "numeric-default", c1_note),
            "c2": Constant(c2, "numeric-default", "1 + 1/(2 log (3 L0)^d) from E[max] <= A + g0/A"),
            "c_green": Constant(c_green, "numeric-default", "sup g(x) |x|^(d-2) over probe points and the far field"),
            "c_cap": Constant(c_cap, "numeric-default", "sup cap(box side s) / s^(d-2) over small s"),
            "c_sep": Constant(sep, "numeric-default", "min over levels of subtree distance / L_{n+1}"),
        }
    )
