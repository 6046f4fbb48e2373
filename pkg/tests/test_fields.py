from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g2flow.exterior import index_of
from g2flow.fields import (
    SPECTRAL,
    FormField,
    InvalidArgument,
    StructureField,
    TorusGrid,
    codiff_adjoint,
    codiff_analytic,
    d,
    dumps_field,
    l2_inner,
    laplacian,
    load_field,
    loads_field,
    save_field,
)
from g2flow.g2 import OMEGA0
from g2flow.scenarios import flat_background, make_rng, trig_field

seeds = st.integers(min_value=0, max_value=2**32 - 1)
orders = st.sampled_from([2, 4])


def _sine_field(grid, degree, index):
    x = grid.coordinates()[0]
    values = np.zeros(grid.n + (len(index_of(degree)),))
    values[..., index_of(degree)[index]] = np.broadcast_to(np.sin(2 * np.pi * x / grid.lengths[0]), grid.n)
    return FormField(grid, degree, values), x


def _perturbed(grid, rng, eps=0.05):
    return StructureField(flat_background(grid).omega + trig_field(grid, 3, rng) * eps)


@pytest.mark.parametrize(
    "kwargs",
    [
        dict(n=(4, 4, 1, 1, 1, 1)),
        dict(n=(0, 4, 1, 1, 1, 1, 1)),
        dict(n=(4,) * 7, lengths=(1.0, -1.0, 1, 1, 1, 1, 1)),
        dict(n=(4,) * 7, fd_order=3),
    ],
)
def test_grid_validation(kwargs):
    with pytest.raises(InvalidArgument):
        TorusGrid(**kwargs)


def test_grid_geometry():
    grid = TorusGrid.make((8, 4), lengths=(2.0, 1.0))
    assert grid.n == (8, 4, 1, 1, 1, 1, 1)
    assert grid.active_axes == (0, 1)
    assert grid.min_spacing == 0.25
    assert grid.cell_volume == pytest.approx(0.25 * 0.25)
    assert grid.refined().n == (16, 8, 1, 1, 1, 1, 1)


def test_field_shape_is_checked():
    grid = TorusGrid.make((4,))
    with pytest.raises(InvalidArgument):
        FormField(grid, 2, np.zeros((4, 1, 1, 1, 1, 1, 1, 35)))
    with pytest.raises(InvalidArgument):
        FormField.zeros(grid, 2) + FormField.zeros(grid, 3)


def test_d_of_constants_and_top_degree():
    grid = TorusGrid.make((6, 5))
    assert np.abs(d(FormField.constant(grid, OMEGA0)).values).max() == 0.0
    with pytest.raises(InvalidArgument):
        d(FormField.zeros(grid, 7))


@pytest.mark.parametrize("fd_order", [2, 4])
def test_d_of_sine_converges_at_stencil_order(fd_order):
    errs = []
    for n in (16, 32):
        grid = TorusGrid.make((n,), lengths=2.0, fd_order=fd_order)
        f, x = _sine_field(grid, 1, (1,))
        exact = (np.pi * np.cos(np.pi * x)).reshape(n)
        got = d(f).values[..., index_of(2)[(0, 1)]].reshape(n)
        errs.append(np.abs(got - exact).max())
    assert np.log2(errs[0] / errs[1]) == pytest.approx(fd_order, abs=0.1)


def test_stencil_symbol_matches_partial():
    for fd_order in (2, 4, SPECTRAL):
        grid = TorusGrid.make((12,), fd_order=fd_order)
        x = grid.coordinates()[0].reshape(-1)
        k = np.zeros(7)
        k[0] = 3
        s = grid.symbol(k)[0]
        got = grid.partial(np.cos(6 * np.pi * x)[:, None, None, None, None, None, None, None], 0).reshape(-1)
        assert np.allclose(got, -s * np.sin(6 * np.pi * x), atol=1e-12)
    assert TorusGrid.make((8,), fd_order=SPECTRAL).symbol(np.eye(7)[0] * 4)[0] == 0.0


@settings(max_examples=20, deadline=None)
@given(seeds, orders, st.integers(0, 5))
def test_d_squared_vanishes(seed, fd_order, p):
    grid = TorusGrid.make((6, 5, 4), fd_order=fd_order)
    f = trig_field(grid, p, make_rng(seed), kmax=2)
    assert np.abs(d(d(f)).values).max() <= 1e-12 * np.abs(f.values).max()


@settings(max_examples=15, deadline=None)
@given(seeds, orders, st.integers(1, 6))
def test_codifferential_is_adjoint(seed, fd_order, p):
    rng = make_rng(seed)
    grid = TorusGrid.make((6, 5), fd_order=fd_order)
    S = _perturbed(grid, rng)
    a = trig_field(grid, p - 1, rng)
    b = trig_field(grid, p, rng)
    lhs = l2_inner(d(a), b, S)
    rhs = l2_inner(a, codiff_adjoint(b, S), S)
    assert lhs == pytest.approx(rhs, rel=1e-12, abs=1e-12)


@settings(max_examples=15, deadline=None)
@given(seeds, st.integers(1, 7))
def test_codifferential_routes_agree_at_flat(seed, p):
    grid = TorusGrid.make((6, 5))
    bg = flat_background(grid)
    f = trig_field(grid, p, make_rng(seed))
    assert np.allclose(codiff_analytic(f, bg).values, codiff_adjoint(f, bg).values, atol=1e-12)


def test_codifferential_routes_agree_when_curved():
    grid = TorusGrid.make((8, 8))
    S = _perturbed(grid, make_rng(1))
    f = trig_field(grid, 3, make_rng(2))
    gap = np.abs(codiff_analytic(f, S).values - codiff_adjoint(f, S).values).max()
    assert gap <= 1e-12 * np.abs(codiff_adjoint(f, S).values).max()


def test_codifferential_examples():
    grid = TorusGrid.make((6, 6))
    bg = flat_background(grid)
    assert np.abs(codiff_adjoint(bg.omega, bg).values).max() == 0.0
    with pytest.raises(InvalidArgument):
        codiff_adjoint(FormField.zeros(grid, 0), bg)


def test_laplacian_of_sine_is_symbol_squared():
    grid = TorusGrid.make((16,))
    bg = flat_background(grid)
    f, _ = _sine_field(grid, 3, (1, 2, 3))
    s = grid.symbol(np.eye(7)[0])[0]
    assert np.allclose(laplacian(f, bg).values, s**2 * f.values, atol=1e-10)
    assert s**2 == pytest.approx((2 * np.pi) ** 2, rel=2e-3)


def test_flat_structure_has_norm_seven():
    grid = TorusGrid.make((4, 3), lengths=(2.0, 1.5))
    bg = flat_background(grid)
    assert l2_inner(bg.omega, bg.omega, bg) == pytest.approx(7 * 3.0)


def test_serialization_round_trip(tmp_path):
    grid = TorusGrid.make((5, 3), lengths=(1.0, 2.5), fd_order=2)
    f = trig_field(grid, 2, make_rng(7))
    blob = dumps_field(f)
    assert blob[:4] == b"G2FF"
    assert len(blob) == 4 + 3 * 4 + 7 * 4 + 7 * 8 + f.values.size * 8
    back = loads_field(blob)
    assert back.grid == f.grid and back.degree == 2
    assert np.array_equal(back.values, f.values)
    path = tmp_path / "f.g2ff"
    save_field(path, f)
    assert np.array_equal(load_field(path).values, f.values)


def test_serialization_rejects_foreign_bytes():
    blob = bytearray(dumps_field(FormField.zeros(TorusGrid.make((2,)), 1)))
    blob[:4] = b"NOPE"
    with pytest.raises(InvalidArgument):
        loads_field(bytes(blob))
