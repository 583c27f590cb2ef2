import itertools
import math

import numpy as np
import pytest

from gffperc.greens import green
from gffperc.lattice import Window
from gffperc.renorm import (
    B_CONSTANT,
    ConstantsLedger,
    RenormConfig,
    beta_sequence,
    certify_from_seed,
    generic_recursion,
    h_sequence,
    h_set_sizes,
    k_sequence,
    m_sequence,
    max_mean_bound,
    p0_upper_bound,
    rho,
    scales,
    tree_counts,
)
from gffperc.sampler import BoxSampler, sample_batch


@pytest.fixture(scope="module")
def default_cfg():
    return RenormConfig(3, 10, 100, 16.0)


@pytest.fixture(scope="module")
def unit_cfg():
    return RenormConfig(3, 10, 100, 1.0, ConstantsLedger.unit())


def small(l0, h0=1.0, L0=1, d=3):
    return RenormConfig(d, L0, l0, h0, strict=False)


def test_scales(unit_cfg):
    assert scales(unit_cfg, 0) == 10
    assert scales(unit_cfg, 1) == 1000
    assert scales(unit_cfg, 3) == 10**7
    assert scales(unit_cfg, 12) == 10**25


def test_l0_precondition():
    with pytest.raises(ValueError):
        RenormConfig(3, 10, 50, 1.0)
    assert small(4).l0 == 4


def test_B_constant():
    assert B_CONSTANT == 3 / (1 - math.exp(-1))
    assert B_CONSTANT == pytest.approx(4.7459301, abs=1e-7)
    assert ConstantsLedger.unit()["B"] == B_CONSTANT
    with pytest.raises(ValueError):
        ConstantsLedger.from_json('{"B": 4.0, "c0": 1, "c1": 1, "c2": 1}')


def test_ledger_round_trip(tmp_path, default_cfg):
    led = default_cfg.ledger
    path = tmp_path / "ledger.json"
    led.save(path)
    back = ConstantsLedger.load(path)
    assert back.provenance() == led.provenance()
    assert back.with_entry("c1", 2.0)["c1"] == 2.0
    assert back.with_entry("c1", 2.0).entries["c1"].provenance == "user-supplied"


def test_missing_constant_rejected():
    with pytest.raises(KeyError):
        RenormConfig(3, 10, 100, 1.0, ConstantsLedger.from_json('{"c0": 1, "c1": 1}'))


def _h1_brute(d, l0):
    # boxes of the lower level meeting the inner boundary of the upper box, L0 = 1
    L = l0
    found = set()
    for p in itertools.product(range(L), repeat=d):
        if any(c in (0, L - 1) for c in p):
            found.add(p)
    return len(found)


def _h2_brute(d, l0, n):
    L, s = l0**n, l0 ** (n - 1)
    D = L // 2
    found = set()
    for p in itertools.product(range(-D, L + D), repeat=d):
        dist = max(max(-c, c - (L - 1), 0) for c in p)
        if dist == D:
            found.add(tuple(c // s for c in p))
    return len(found)


def test_h1_count_d3_l4():
    assert h_set_sizes(3, 4, 1, 1)[0] == 56 == _h1_brute(3, 4) == 4**3 - 2**3


@pytest.mark.parametrize("d,l0,n", [(2, 4, 1), (3, 4, 1), (2, 5, 2), (3, 4, 2), (2, 6, 2)])
def test_h2_count_matches_brute_force(d, l0, n):
    assert h_set_sizes(d, l0, 1, n)[1] == _h2_brute(d, l0, n)


def test_tree_count_root():
    assert tree_counts(small(4), 0).exact == 1


def test_tree_count_level_one():
    tc = tree_counts(small(4), 1)
    assert tc.exact == 56 * 296
    assert tc.exact <= tc.bound


@pytest.mark.parametrize("d,l0,n", [(d, l0, n) for d in (3,) for l0 in (3, 4, 5, 6) for n in (1, 2)])
def test_exact_counts_within_bound(d, l0, n):
    try:
        tc = tree_counts(small(l0, d=d), n)
    except ValueError as exc:
        pytest.skip(f"not enumerable: {exc}")
    if tc.exact is None:
        pytest.skip(tc.method)
    assert tc.exact <= tc.bound


def test_beta_monotone_and_above_max_term(default_cfg):
    b = beta_sequence(default_cfg, 40)
    m = m_sequence(default_cfg, 40)
    assert np.all(b > 0)
    assert np.all(np.diff(b) > 0)
    assert np.all(b >= math.sqrt(math.log(2)) + m)


def test_beta_growth_bounded(default_cfg):
    b = beta_sequence(default_cfg, 40)
    ratio = b / 2.0 ** (np.arange(41) + 1)
    C = ratio.max()
    assert np.all(b <= C * 2.0 ** (np.arange(41) + 1))
    assert np.all(np.diff(ratio[5:]) < 0)


def test_h_increments_positive_and_summable(default_cfg):
    hs = h_sequence(default_cfg, 40)
    assert np.all(hs.increments > 0)
    assert np.all(np.diff(hs.h) >= 0)
    assert math.isfinite(hs.h_infinity)
    assert hs.h_infinity >= hs.h[-1]
    assert hs.tail_bound < 1e-15


def test_zero_c1_gives_constant_levels():
    cfg = RenormConfig(3, 10, 100, 2.5, ConstantsLedger.unit().with_entry("c1", 0.0))
    assert h_sequence(cfg, 20).h_infinity == 2.5


def test_h_infinity_against_direct_summation(unit_cfg):
    d, L0, l0, h0 = 3, 10, 100, 1.0
    K0 = math.log(2 * 1.0 * l0 ** (2 * (d - 1))) + 3 / (1 - math.exp(-1))
    terms = []
    for n in range(200):
        M = math.sqrt(math.log(2**n * (3 * L0) ** d))
        beta = math.sqrt(math.log(2)) + M + 2 ** ((n + 1) / 2) * (math.sqrt(n) + math.sqrt(K0))
        terms.append(beta * (2 * l0 ** -(d - 2)) ** (n + 1))
    direct = h0 + math.fsum(terms)
    assert abs(h_sequence(unit_cfg, 40).h_infinity - direct) <= 1e-12


def test_k_sequence_bounds(default_cfg):
    ks = k_sequence(default_cfg, 40)
    assert np.all(ks.K <= ks.K0)
    assert np.all(ks.K >= ks.K0 - B_CONSTANT)
    assert ks.lower_ok and ks.upper_ok
    assert ks.K0 - ks.K[-1] <= 3 * sum(math.exp(-m) for m in range(200))


def test_certificate_zero_seed(default_cfg):
    tr = certify_from_seed(default_cfg, 0.0)
    assert tr.valid
    assert np.all(tr.pn_bound <= np.exp(-(tr.K0 - B_CONSTANT) * 2.0 ** np.arange(41)))


def test_certificate_at_seed_gate(default_cfg):
    K0 = default_cfg.K0
    tr = certify_from_seed(default_cfg, math.exp(-K0))
    assert tr.valid and tr.certificate == "analytic-conditional"
    n = np.arange(len(tr.log_pn_bound))
    assert np.all(tr.log_pn_bound <= -(K0 - B_CONSTANT) * 2.0**n + 1e-9)


def test_certificate_rejects_large_seed(default_cfg):
    tr = certify_from_seed(default_cfg, 2 * math.exp(-default_cfg.K0))
    assert not tr.valid
    assert tr.certificate == "none"
    assert np.all(np.isnan(tr.log_pn_bound))


def test_mc_seed_is_empirical(default_cfg):
    tr = certify_from_seed(default_cfg, 0.0, source="mc")
    assert tr.certificate == "empirical"
    out = tr.to_json()
    assert out["Ln"][2] == str(10**5)
    assert out["provenance"]["p0_source"] == "mc"


def test_rho():
    assert rho(100) == pytest.approx(0.150515, abs=1e-6)


def test_p0_bound_in_unit_interval_and_decreasing():
    vals = [p0_upper_bound(RenormConfig(3, 10, 100, h)) for h in (8.0, 10.0, 12.0, 16.0)]
    assert all(0 < v < 1 for v in vals)
    assert all(b < a for a, b in zip(vals, vals[1:]))


def test_p0_bound_needs_large_level():
    with pytest.raises(ValueError, match="increase h0"):
        p0_upper_bound(RenormConfig(3, 10, 100, 2.0))


def test_max_mean_bound_above_simulated_maximum():
    g0 = green(3, 0).value
    bound = max_mean_bound(g0, 27000)
    A = math.sqrt(2 * g0 * math.log(27000))
    assert bound == pytest.approx(A + g0 / A, rel=1e-12)
    win = Window((0, 0, 0), (30, 30, 30))
    big = win.grown(16)
    sampler = BoxSampler(big)
    maxima = []
    for _, block in sample_batch(sampler, 1000, 17, "emax", chunk=50):
        maxima.extend(block[:, 16:46, 16:46, 16:46].reshape(len(block), -1).max(axis=1))
    assert bound >= np.mean(maxima)


def test_generic_recursion_from_zero(default_cfg):
    out = generic_recursion(default_cfg, 0.0, n_max=20)
    assert out["q"][0] == 0.0
    # only the additive terms remain, and they are astronomically small
    assert np.all(out["q"][1:] < 1e-25)


def test_generic_recursion_additive_structure(default_cfg):
    q0 = math.exp(-default_cfg.K0)
    out = generic_recursion(default_cfg, q0, n_max=10)
    gap = beta_sequence(default_cfg, 10)[0] - m_sequence(default_cfg, 10)[0]
    assert out["q"][1] == pytest.approx(q0**2 + 3 * math.exp(-(gap**2)), rel=1e-12)


def test_generic_recursion_dominated_by_certificate(default_cfg):
    q0 = math.exp(-default_cfg.K0)
    out = generic_recursion(default_cfg, q0, n_max=30)
    tr = certify_from_seed(default_cfg, q0, n_max=30)
    assert np.all(out["log_q"] <= tr.log_pn_bound + 1e-9)


def test_additive_term_bound(default_cfg):
    rem = generic_recursion(default_cfg, 0.5, n_max=20)["log_remainder"]
    n = np.arange(21)
    assert np.all(rem <= math.log(3) - math.log(2) - 2.0 ** (n + 1) * (n + default_cfg.K0) + 1e-9)


def test_decreasing_direction_reflects_levels(default_cfg):
    up = generic_recursion(default_cfg, 0.1, "increasing", n_max=5)
    down = generic_recursion(default_cfg, 0.1, "decreasing", n_max=5)
    assert np.array_equal(down["levels"], -up["levels"])
    assert np.array_equal(down["q"], up["q"])


def test_analytic_seed_certifies_at_large_level():
    cfg = RenormConfig(3, 10, 100, 16.0)
    assert certify_from_seed(cfg, p0_upper_bound(cfg)).valid
    low = RenormConfig(3, 10, 100, 12.0)
    assert not certify_from_seed(low, p0_upper_bound(low)).valid
