import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from ecftest.core import FunctionalDataset, FunctionalGroup, Grid, group_cov
from ecftest.errors import DegenerateDataError
from ecftest.surfaces import (
    FSurface,
    f_ratio,
    globalize,
    quasi_f_surface,
    ssb_surface,
    sse_surface,
)

from conftest import datasets


def brute_sse(ds):
    """Quadruple loop over groups, subjects and grid cells."""
    J = ds.grid.J
    out = np.zeros((J, J))
    for g in ds.groups:
        curves = g.curves.tolist()
        n = len(curves)
        mean = [sum(c[s] for c in curves) / n for s in range(J)]
        eff = [[c[s] - mean[s] for s in range(J)] for c in curves]
        for s in range(J):
            for t in range(J):
                gam = sum(e[s] * e[t] for e in eff) / (n - 1)
                out[s, t] += sum((e[s] * e[t] - gam) ** 2 for e in eff)
    return out


def test_identical_groups_zero_ssb(small_dataset):
    g = small_dataset.groups[0]
    ds = FunctionalDataset(small_dataset.grid, (g, g))
    np.testing.assert_allclose(ssb_surface(ds), 0, atol=1e-28)
    f = quasi_f_surface(ds)
    np.testing.assert_allclose(f.values, 0, atol=1e-28)
    assert f.eps_hits == 0


def test_ssb_hand_example():
    grid = Grid.uniform(2)
    flat = FunctionalGroup(np.ones((2, 2)))
    spread = FunctionalGroup(np.array([[0.0, 0.0], [2.0, 2.0]]))
    ds = FunctionalDataset(grid, (flat, spread))
    # gamma_1 = 0, gamma_2 = 2, pooled = 1: 1*(0-1)^2 + 1*(2-1)^2
    np.testing.assert_array_equal(ssb_surface(ds), np.full((2, 2), 2.0))


def test_sse_hand_example():
    grid = Grid.uniform(2)
    spread = FunctionalGroup(np.array([[0.0, 0.0], [2.0, 2.0]]))
    flat = FunctionalGroup(np.ones((3, 2)))
    ds = FunctionalDataset(grid, (spread, flat))
    # products are 1 for both subjects, gamma = 2: 2 * (1 - 2)^2; flat group adds 0
    np.testing.assert_array_equal(sse_surface(ds), np.full((2, 2), 2.0))


def test_sse_identical_products():
    # every product equals p; gamma = n p / (n - 1), so SSE = n p^2 / (n - 1)^2
    grid = Grid.uniform(2)
    curves = np.array([[1.0, 1.0], [-1.0, -1.0], [1.0, 1.0], [-1.0, -1.0]])
    ds = FunctionalDataset(grid, (FunctionalGroup(curves), FunctionalGroup(curves)))
    n = 4
    np.testing.assert_allclose(sse_surface(ds), 2 * n / (n - 1) ** 2, rtol=1e-14)


@settings(max_examples=30, deadline=None)
@given(datasets(max_n=6, max_J=4))
def test_sse_matches_brute_force(ds):
    np.testing.assert_allclose(sse_surface(ds), brute_sse(ds), rtol=1e-10, atol=1e-12)


def test_sse_row_permutation(small_dataset, rng):
    shuffled = small_dataset.map_curves(lambda c: c[rng.permutation(c.shape[0])])
    np.testing.assert_allclose(sse_surface(small_dataset), sse_surface(shuffled), rtol=1e-12)


def ssb_quadratic_form(ds, anchor):
    """SSB as z' (I - b b'/(n - k)) z with z_i = sqrt(n_i - 1)(gamma_i - anchor)."""
    sizes = np.array(ds.sizes)
    b = np.sqrt(sizes - 1.0)
    proj = np.eye(ds.k) - np.outer(b, b) / (ds.n - ds.k)
    covs = [group_cov(g) for g in ds.groups]
    J = ds.grid.J
    out = np.empty((J, J))
    for s in range(J):
        for t in range(J):
            z = np.array([bi * (c[s, t] - anchor[s, t]) for bi, c in zip(b, covs)])
            out[s, t] = z @ proj @ z
    return out


@settings(max_examples=30, deadline=None)
@given(datasets(), st.integers(0, 2**32 - 1))
def test_ssb_quadratic_form_identity(ds, seed):
    anchor = np.random.default_rng(seed).normal(size=(ds.grid.J,) * 2) * 3
    anchor = anchor + anchor.T
    np.testing.assert_allclose(ssb_surface(ds), ssb_quadratic_form(ds, anchor), rtol=1e-10, atol=1e-10)


def test_scale_invariance(small_dataset):
    c = np.array([0.5, -2.0, 3.0, 0.1, 7.0, -0.3])
    scaled = small_dataset.map_curves(lambda x: x * c)
    f0, f1 = quasi_f_surface(small_dataset), quasi_f_surface(scaled)
    assert f0.eps_hits == f1.eps_hits == 0
    np.testing.assert_allclose(f1.values, f0.values, rtol=1e-10)
    g0, g1 = globalize(f0, small_dataset.grid), globalize(f1, scaled.grid)
    assert g0.argmax == g1.argmax
    assert g1.t_n == pytest.approx(g0.t_n, rel=1e-10)


def test_degenerate_sse_raises():
    # every group is a set of identical curves: all effects vanish
    grid = Grid.uniform(3)
    g1 = FunctionalGroup(np.tile([1.0, 2.0, 3.0], (3, 1)))
    g2 = FunctionalGroup(np.tile([-1.0, 0.0, 5.0], (2, 1)))
    with pytest.raises(DegenerateDataError):
        quasi_f_surface(FunctionalDataset(grid, (g1, g2)))


def test_sse_floor_counts_cells():
    # column 0 is constant within each group, so SSE vanishes on row/column 0
    rng = np.random.default_rng(1)
    a = rng.normal(size=(6, 4))
    b = rng.normal(size=(5, 4)) * 2
    a[:, 0] = 1.0
    b[:, 0] = 3.0
    ds = FunctionalDataset.from_arrays([a, b])
    f = quasi_f_surface(ds)
    assert f.eps_hits == 2 * 4 - 1
    assert np.all(np.isfinite(f.values))
    np.testing.assert_array_equal(f.values[0], 0)


def test_f_ratio_formula():
    ssb = np.array([[2.0, 1.0], [1.0, 4.0]])
    sse = np.array([[1.0, 2.0], [2.0, 8.0]])
    ratio, hits = f_ratio(ssb, sse, k=3, n=10)
    np.testing.assert_allclose(ratio, (ssb / 2) / (sse / 7))
    assert hits == 0


def test_f_surface_symmetric(small_dataset):
    f = quasi_f_surface(small_dataset).values
    np.testing.assert_array_equal(f, f.T)
    assert np.all(f >= 0)


def test_globalize_constant_surface():
    grid = Grid.uniform(7)
    g = globalize(FSurface(np.full((7, 7), 2.5)), grid)
    assert g.t_n == pytest.approx(2.5, rel=1e-14)
    assert g.f_max == 2.5
    assert g.argmax == (0, 0)


def test_globalize_zero_surface():
    g = globalize(np.zeros((3, 3)), Grid.uniform(3))
    assert (g.t_n, g.f_max) == (0.0, 0.0)


def test_globalize_tie_breaking():
    v = np.zeros((4, 4))
    v[2, 1] = v[1, 3] = v[3, 0] = 5.0
    assert globalize(v, Grid.uniform(4)).argmax == (1, 3)


def test_globalize_shape_mismatch():
    with pytest.raises(ValueError):
        globalize(np.zeros((3, 3)), Grid.uniform(4))


@settings(max_examples=100, deadline=None)
@given(datasets())
def test_integral_bounded_by_sup(ds):
    g = globalize(quasi_f_surface(ds), ds.grid)
    assert g.t_n <= ds.grid.length ** 2 * g.f_max + 1e-12 * max(1.0, g.f_max)

