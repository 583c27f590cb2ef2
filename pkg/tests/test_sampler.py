import math

import numpy as np
import pytest
from scipy import stats

from gffperc.clusters import CrossingGeometry
from gffperc.greens import KilledGreenOperator, green, highdim_scalars, hitting_probability
from gffperc.lattice import Window
from gffperc.sampler import (
    BoxSampler,
    ConditionalShift,
    DenseSampler,
    ScalarField,
    conditional_decomposition_check,
    conditional_shift,
    decomposition_batch,
    fkg_mc_check,
    read_fields,
    sample_batch,
    sample_decomposition,
    sample_gff,
    sample_window,
    write_fields,
)

ORIGIN = np.zeros(3, dtype=np.int64)


def _draws(sampler, n, seed, name="t"):
    return np.concatenate([b for _, b in sample_batch(sampler, n, seed, name)])


@pytest.fixture(scope="module")
def ball10():
    win = Window.around(ORIGIN, 10)
    return win, _draws(BoxSampler(win), 10_000, 1).reshape(10_000, -1)


def test_mean_is_centred(ball10):
    win, vals = ball10
    op = KilledGreenOperator(win)
    for x in [(0, 0, 0), (5, -3, 2), (10, 10, 10)]:
        i = int(win.index(np.array(x)[None, :])[0])
        assert abs(vals[:, i].mean()) <= 4 * math.sqrt(op(x, x) / len(vals))


def test_origin_variance_matches_killed_green(ball10):
    win, vals = ball10
    target = KilledGreenOperator(win)(0, 0)
    i = int(win.index(ORIGIN[None, :])[0])
    v = vals[:, i]
    se = target * math.sqrt(2 / len(v))
    assert abs(v.var() - target) <= 4 * se


def test_box_and_dense_samplers_share_the_law():
    win = Window.around(ORIGIN, 2)
    dense = DenseSampler(win.points())
    a = _draws(BoxSampler(win), 4000, 2).reshape(4000, -1)
    b = _draws(dense, 4000, 3)
    exact = dense.op.dense()
    se = np.sqrt((np.diag(exact)[:, None] * np.diag(exact)[None, :] + exact**2) / 4000)
    assert np.all(np.abs(a.T @ a / 4000 - exact) <= 5 * se)
    assert np.all(np.abs(b.T @ b / 4000 - exact) <= 5 * se)


def test_zero_outside_window():
    win = Window.around(ORIGIN, 3)
    f = sample_gff(win, seed=4)
    assert f[(4, 0, 0)] == 0.0
    assert f[(0, 0, -7)] == 0.0
    assert f.at([[0, 0, 0], [9, 9, 9]])[1] == 0.0


def test_same_seed_same_sample():
    win = Window.around(ORIGIN, 4)
    a = sample_gff(win, seed=9, index=3)
    b = sample_gff(win, seed=9, index=3)
    c = sample_gff(win, seed=9, index=4)
    assert np.array_equal(a.values, b.values)
    assert not np.array_equal(a.values, c.values)


def test_batch_matches_single_draws():
    win = Window.around(ORIGIN, 2)
    s = BoxSampler(win)
    batch = _draws(s, 5, 12, "same")
    from gffperc.rng import sample_stream

    for i in range(5):
        assert np.allclose(batch[i], s.draw(sample_stream(12, "same", i)))


def test_sample_window_restricts():
    win = Window((0, 0, 0), (6, 6, 6))
    f = sample_window(win, margin=6, seed=1, index=0)
    assert f.window == win
    assert f.values.shape == (6, 6, 6)


def test_sign_symmetry_at_one_site(ball10):
    win, vals = ball10
    i = int(win.index(ORIGIN[None, :])[0])
    v = vals[:, i]
    assert stats.ks_2samp(v[:5000], -v[5000:]).pvalue > 0.001


def test_btis_tail_bound():
    win = Window.around(ORIGIN, 2)
    n = 20_000
    vals = _draws(BoxSampler(win), n, 21).reshape(n, -1)
    mx = vals.max(axis=1)
    mean_max = mx.mean()
    sigma2 = float(np.diag(KilledGreenOperator(win).dense()).max())
    for step in (1.0, 2.0):
        a = mean_max + step
        p = (mx > a).mean()
        se = math.sqrt(max(p * (1 - p), 1 / n) / n)
        assert p <= math.exp(-(a - mean_max) ** 2 / (2 * sigma2)) + 4 * se


def test_sign_indicator_correlation_decays():
    win = Window.around(ORIGIN, 16)
    n = 3000
    vals = _draws(BoxSampler(win), n, 31) >= 0
    # average over base points near the centre to reduce noise
    bases = [(16 - 8 + a, 16 + b, 16 + c) for a in (-2, 0, 2) for b in (-2, 0, 2) for c in (-2, 0, 2)]
    covs = []
    for r in (2, 4, 8, 16):
        acc = 0.0
        for x, y, z in bases:
            i0, i1 = vals[:, x, y, z], vals[:, x + r, y, z]
            acc += np.mean(i0 & i1) - i0.mean() * i1.mean()
        covs.append(acc / len(bases))
    assert covs[0] > covs[1] > covs[2]
    assert covs[3] < covs[0] / 2


def test_shift_on_K_returns_boundary_value():
    K = [[0, 0, 0], [2, 0, 0]]
    assert conditional_shift(K, [1.5, -0.5], (2, 0, 0)) == pytest.approx(-0.5)
    assert conditional_shift(K, [1.5, -0.5], (0, 0, 0)) == pytest.approx(1.5)


def test_zero_boundary_gives_zero_shift():
    s = ConditionalShift([[0, 0, 0], [1, 1, 0]], 0.0)
    for x in [(3, 0, 0), (-2, 5, 1)]:
        assert s(x) == 0.0


def test_constant_shift_singleton():
    expected = 2 * green(3, (1, 0, 0)).value / green(3, 0).value
    s = ConditionalShift([[0, 0, 0]], 2.0)
    assert s((1, 0, 0)) == pytest.approx(expected, rel=1e-9)
    assert s.constant(2.0, (1, 0, 0)) == pytest.approx(2 * hitting_probability([[0, 0, 0]], (1, 0, 0)), rel=1e-9)


def test_shift_is_linear():
    K = [[0, 0, 0], [1, 2, 0], [-1, 0, 1]]
    a, b = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.1, -1.0])
    x = (2, 2, 2)
    lhs = conditional_shift(K, 2 * a + b, x)
    rhs = 2 * conditional_shift(K, a, x) + conditional_shift(K, b, x)
    assert lhs == pytest.approx(rhs, abs=1e-12)


def test_decomposition_check_small_window():
    win = Window.around(ORIGIN, 2)
    rep = conditional_decomposition_check(win, [[0, 0, 0]], n_samples=20_000, seed=8)
    assert rep.residual_on_K == 0.0
    assert rep.max_corr_z <= 4.0
    assert rep.max_cov_z <= 4.0
    assert len(rep.details["cov_z"]) == 3


def test_psi_variance_and_xi_variance():
    d = 6
    s = highdim_scalars(d)
    n = 20_000
    A = [[0, 0, 0], [1, 0, 0]]
    psi, xi = decomposition_batch(d, A, n, seed=5, scalars=s)
    se = s.sigma2 * math.sqrt(2 / n)
    assert abs(psi[:, 0].var() - s.sigma2) <= 4 * se
    target_xi = green(d, 0).value - s.sigma2
    assert abs(xi[:, 0].var() - target_xi) <= 4 * target_xi * math.sqrt(2 / n)
    tot = psi + xi
    g0, g1 = green(d, 0).value, green(d, (1, 0, 0)).value
    cov = float(np.mean(tot[:, 0] * tot[:, 1]))
    assert abs(cov - g1) <= 4 * math.sqrt((g0 * g0 + g1 * g1) / n)


def test_decomposition_single_sample_fields():
    smp = sample_decomposition(8, [[0, 0, 0], [0, 1, 0], [3, 3, 3]], seed=2)
    assert smp.psi.shape == smp.xi.shape == (3,)
    assert np.allclose(smp.total, smp.psi + smp.xi)


def test_fkg_pinned_below_conditioned_above():
    win = Window.around(ORIGIN, 3)
    geo = CrossingGeometry.left_right(Window((-1, -1, -1), (3, 3, 3)))

    def event(f: ScalarField) -> bool:
        local = f.restrict(Window((-1, -1, -1), (3, 3, 3))).values
        return geo.threshold(local) >= 0.0

    rep = fkg_mc_check(win, [[0, 0, 0]], event, alpha=1.0, n_samples=3000, seed=4)
    assert rep.conclusive
    assert rep.holds


def test_fkg_trivial_event():
    win = Window.around(ORIGIN, 1)
    rep = fkg_mc_check(win, [[0, 0, 0]], lambda f: True, alpha=-50.0, n_samples=300, seed=1)
    assert rep.p_pinned == 1.0 and rep.p_above == 1.0


def test_binary_dump_round_trip(tmp_path):
    win = Window((0, 0, 0), (3, 4, 5))
    fields = [sample_gff(win, seed=3, index=i) for i in range(2)]
    path = tmp_path / "f.bin"
    write_fields(path, fields, seed=3)
    meta, data = read_fields(path)
    assert meta["shape"] == (3, 4, 5) and meta["count"] == 2 and meta["seed"] == 3
    assert np.array_equal(data[1], fields[1].values)
