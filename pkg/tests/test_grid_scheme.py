import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from slitfb.elliptic import EllipticityPair, pucci_minus, pucci_plus
from slitfb.grid import Grid, GridFunction
from slitfb.scheme import (
    DirectionSet,
    StencilError,
    direction_set,
    discrete_extremal,
    second_difference,
)


def test_grid_basics():
    g = Grid.box(2, 1.0, 0.25)
    assert g.shape == (9, 5)
    assert g.n_nodes == 45
    assert g.thin.sum() == 9
    assert g.node_at([0.0, 0.0]) == g.lookup[4, 0]
    with pytest.raises(ValueError):
        Grid.box(2, 1.0, 0.3)
    with pytest.raises(ValueError):
        g.node_at([0.1, 0.0])


def test_half_ball_nodes_inside():
    g = Grid.half_ball(3, 1.0, 0.125)
    assert np.all(np.linalg.norm(g.points, axis=1) <= 1 + 1e-12)
    assert np.all(g.points[:, -1] >= 0)


def test_reflect_and_csv_roundtrip(tmp_path):
    g = Grid.box(2, 1.0, 0.25)
    f = GridFunction.sample(g, lambda P: P[:, 0] ** 3 + P[:, 1] ** 2)
    full = f.reflect_full()
    assert full.grid.n_nodes == 9 * 9
    np.testing.assert_array_equal(full.values, full.grid.points[:, 0] ** 3 + full.grid.points[:, 1] ** 2)
    path = f.to_csv(tmp_path / "f.csv")
    back = GridFunction.from_csv(path, g)
    np.testing.assert_array_equal(back.values, f.values)


def test_gridfunction_rejects_nonfinite():
    g = Grid.box(2, 1.0, 0.5)
    with pytest.raises(ValueError):
        GridFunction(g, np.full(g.n_nodes, np.nan))


@pytest.mark.parametrize("n, frames", [(2, 2), (4, 4), (None, 8), (12, 12)])
def test_direction_set_sizes(n, frames):
    assert len(direction_set(2, n).frames) == frames


def test_direction_set_validation():
    with pytest.raises(ValueError):
        DirectionSet(np.array([[1, 1], [1, -1]]), ((0, 1),))  # no axis frame
    with pytest.raises(ValueError):
        DirectionSet(np.array([[1, 0], [1, 1]]), ((0, 1),))
    with pytest.raises(ValueError):
        direction_set(2, 5)


def test_second_difference_examples():
    g = Grid.box(2, 1.0, 0.125, symmetric_in_xn=False)
    e = np.array([1, 2]) / np.sqrt(5)
    f = GridFunction.sample(g, lambda P: (P @ e) ** 2)
    node = g.node_at([0.0, 0.0])
    assert second_difference(f, node, (1, 2)) == pytest.approx(2.0, abs=1e-12)
    lin = GridFunction.sample(g, lambda P: 3 * P[:, 0] - P[:, 1] + 1)
    assert second_difference(lin, node, (1, 1), arm=2) == pytest.approx(0.0, abs=1e-12)
    with pytest.raises(StencilError):
        second_difference(f, g.node_at([1.0, 0.0]), (1, 0))


def test_discrete_laplacian_collapse():
    g = Grid.box(2, 1.0, 0.125, symmetric_in_xn=False)
    rng = np.random.Generator(np.random.Philox(3))
    f = GridFunction(g, rng.normal(size=g.n_nodes))
    axis = DirectionSet(np.eye(2, dtype=np.int64), ((0, 1),))
    nodes, vals = discrete_extremal(f, EllipticityPair(1, 1), axis)
    v = f.values
    h2 = g.h ** 2
    five = [
        (v[g.neighbor([i], (1, 0))[0]] + v[g.neighbor([i], (-1, 0))[0]]
         + v[g.neighbor([i], (0, 1))[0]] + v[g.neighbor([i], (0, -1))[0]] - 4 * v[i]) / h2
        for i in nodes
    ]
    np.testing.assert_allclose(vals, five, rtol=1e-12, atol=1e-9)


def test_constant_gives_zero():
    g = Grid.box(3, 1.0, 0.25)
    f = GridFunction(g, np.full(g.n_nodes, 2.5))
    _, vals = discrete_extremal(f, EllipticityPair(1, 2), direction_set(3))
    assert np.abs(vals).max() <= 1e-10


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(-3, 3), min_size=3, max_size=3),
    st.floats(1, 4),
    st.sampled_from(["plus", "minus"]),
)
def test_quadratic_consistency(entries, ratio, sign):
    # frame values are traces against admissible matrices, so M+ is approached
    # from below and M- from above; the gap is the frame-angle error
    a, b, c = entries
    H = np.array([[a, b], [b, c]])
    ell = EllipticityPair(1, ratio)
    g = Grid.box(2, 1.0, 0.125, symmetric_in_xn=False)
    f = GridFunction.sample(g, lambda P: 0.5 * np.einsum("ni,ij,nj->n", P, H, P))
    nodes, vals = discrete_extremal(f, ell, direction_set(2, 20), sign)
    centre = np.abs(g.points[nodes]).max(axis=1) <= 0.25 + 1e-12
    exact = pucci_plus(H, ell) if sign == "plus" else pucci_minus(H, ell)
    scale = ell.Lam * np.abs(np.linalg.eigvalsh(H)).max()
    v = vals[centre]
    if sign == "plus":
        assert np.all(v <= exact + 1e-9)
    else:
        assert np.all(v >= exact - 1e-9)
    assert np.abs(v - exact).max() <= 0.05 * scale + 1e-9
