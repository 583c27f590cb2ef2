import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gffperc.lattice import (
    LatticeBox,
    Window,
    WindowOverflowError,
    attached_box,
    ball,
    block_anchors,
    boundaries,
    diameter,
    neighbors,
    sphere,
    translate,
)


def as_set(pts):
    return set(map(tuple, np.asarray(pts).tolist()))


def test_ball_sizes():
    assert len(ball(0, 0, 3)) == 1
    assert len(ball(0, 1, 3)) == 27
    assert len(ball(0, 2, 2)) - len(ball(0, 1, 2)) == 16 == len(sphere(0, 2, 2))


@pytest.mark.parametrize("d", [1, 2, 3])
@pytest.mark.parametrize("r", [1, 2, 3, 4])
def test_sphere_is_shell(d, r):
    s = sphere(0, r, d)
    assert len(s) == (2 * r + 1) ** d - (2 * r - 1) ** d
    assert as_set(s) == as_set(ball(0, r, d)) - as_set(ball(0, r - 1, d))


def test_attached_box_and_lengths():
    assert len(attached_box((1, 2, 3), 4)) == 64
    assert len(LatticeBox((0, 0), 3, "ball")) == 49
    assert len(LatticeBox((0, 0, 0), 2, "sphere")) == 125 - 27


def test_boundaries_examples():
    inner, _ = boundaries(ball(0, 1, 2))
    assert len(inner) == 8 and (0, 0) not in as_set(inner)
    inner, outer = boundaries([(0, 0)])
    assert as_set(inner) == {(0, 0)}
    assert as_set(outer) == {(1, 0), (-1, 0), (0, 1), (0, -1)}
    inner, _ = boundaries(ball(0, 2, 3))
    assert len(inner) == 98


@settings(max_examples=40, deadline=None)
@given(st.sets(st.tuples(st.integers(-3, 3), st.integers(-3, 3)), min_size=1, max_size=20))
def test_boundaries_properties(pts):
    K = as_set(list(pts))
    inner, outer = boundaries(list(pts))
    assert as_set(inner) <= K
    assert not (as_set(outer) & K)
    for p in as_set(outer):
        assert any(tuple(q) in K for q in neighbors(p).tolist())


def test_neighbors_counts():
    assert len(neighbors((0, 0, 0))) == 6
    assert len(as_set(neighbors((0, 0, 0), star=True))) == 26
    assert len(neighbors((0, 0), star=True)) == 8


def test_diameter():
    assert diameter([(0, 0, 0)]) == 0
    assert diameter(attached_box((0, 0, 0), 5)) == 4
    assert diameter([(0, 0), (3, 1)]) == 3
    with pytest.raises(ValueError):
        diameter(np.zeros((0, 2), dtype=int))


def test_translate_group_law_and_overflow():
    X = ball(0, 1, 3)
    assert np.array_equal(translate(X, (0, 0, 0)), X)
    assert as_set(translate([(0, 0, 0)], (1, 0, 0))) == {(1, 0, 0)}
    a, b = np.array([2, -1, 0]), np.array([-5, 3, 1])
    assert np.array_equal(translate(translate(X, a), b), translate(X, a + b))
    assert np.array_equal(translate(translate(X, a), -a), X)
    with pytest.raises(WindowOverflowError):
        translate(X, (5, 0, 0), Window((-2, -2, -2), (5, 5, 5)))


def test_window_index_is_bijection():
    w = Window((-1, 2, 0), (3, 4, 2))
    idx = w.index(w.points())
    assert np.array_equal(np.sort(idx), np.arange(w.size))
    assert np.array_equal(w.point(idx), w.points())


@pytest.mark.parametrize("L", [2, 3, 5])
def test_blocks_partition_window(L):
    w = Window((-3, 1), (7, 9))
    seen = []
    for a in block_anchors(w, L):
        box = attached_box(a, L)
        seen += [p for p in map(tuple, box.tolist()) if w.contains([p])[0]]
    assert len(seen) == len(set(seen)) == w.size


def test_sphere_enumeration_matches_definition():
    for d, r in itertools.product((1, 2, 3), range(0, 4)):
        pts = ball(0, r, d)
        want = {tuple(p) for p in pts.tolist() if max(abs(c) for c in p) == r}
        assert as_set(sphere(0, r, d)) == want
