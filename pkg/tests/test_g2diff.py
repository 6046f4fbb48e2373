from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g2flow.fields import FormField, InvalidArgument, StructureField, TorusGrid, codiff_adjoint, l2_inner
from g2flow.g2diff import (
    ZERO_PAIRS,
    D,
    NotTorsionFree,
    assemble3,
    check_module,
    dpq,
    part,
    split3,
    torsion,
)
from g2flow.scenarios import flat_background, make_rng, trig_field
from g2flow.suites import table_rows

seeds = st.integers(min_value=0, max_value=2**32 - 1)
GRID = TorusGrid.make((8, 6))


def _components(rng, s=None):
    s = s or flat_background(GRID)
    return (
        trig_field(GRID, 0, rng),
        trig_field(GRID, 1, rng),
        part(trig_field(GRID, 2, rng), s, 14),
        part(trig_field(GRID, 3, rng), s, 27),
    )


def test_flat_background_is_torsion_free():
    assert torsion(flat_background(GRID)) == 0.0


def test_d17_of_constant_and_d71_is_codifferential():
    s = flat_background(GRID)
    const = FormField(GRID, 0, np.full(GRID.n + (1,), 2.0))
    assert np.abs(dpq(1, 7, const, s).values).max() == 0.0
    a = trig_field(GRID, 1, make_rng(0))
    assert np.allclose(dpq(7, 1, a, s).values, codiff_adjoint(a, s).values, atol=1e-12)


def test_zero_pairs_give_zero_fields():
    s = flat_background(GRID)
    comp = dict(zip((1, 7, 14, 27), _components(make_rng(1))))
    for p, q in ZERO_PAIRS:
        out = dpq(p, q, comp[p], s)
        assert not np.any(out.values)


def test_precondition_errors():
    s = flat_background(GRID)
    bent = StructureField(s.omega + trig_field(GRID, 3, make_rng(2)) * 0.05)
    a = trig_field(GRID, 1, make_rng(3))
    with pytest.raises(NotTorsionFree):
        dpq(7, 7, a, bent)
    with pytest.raises(InvalidArgument):
        dpq(27, 7, trig_field(GRID, 3, make_rng(4)), s)
    with pytest.raises(InvalidArgument):
        dpq(7, 7, trig_field(GRID, 2, make_rng(4)), s)
    with pytest.raises(InvalidArgument):
        dpq(7, 8, a, s)
    with pytest.raises(InvalidArgument):
        check_module(a, s, 5)


def test_table_rows_hold():
    rows = table_rows(GRID, seed=0)
    assert len(rows) == 34
    for key, (lhs, rhs) in rows.items():
        scale = max(1.0, np.abs(lhs.values).max())
        assert np.abs((lhs - rhs).values).max() <= 1e-10 * scale, key


@settings(max_examples=15, deadline=None)
@given(seeds)
def test_split_and_assemble_are_inverse(seed):
    rng = make_rng(seed)
    s = StructureField(flat_background(GRID).omega + trig_field(GRID, 3, rng) * 0.05)
    t = trig_field(GRID, 3, rng)
    f, a, c = split3(t, s)
    assert np.allclose(assemble3(f, a, c, s).values, t.values, atol=1e-11)
    check_module(c, s, 27)
    f2, a2, c2 = split3(assemble3(f, a, c, s), s)
    assert np.allclose(a2.values, a.values, atol=1e-11)


@settings(max_examples=10, deadline=None)
@given(seeds)
def test_module_operators_are_formally_adjoint(seed):
    s = flat_background(GRID)
    f, a, _, c = _components(make_rng(seed))
    _, a2, _, c2 = _components(make_rng(seed + 1))

    def close(x, y):
        assert x == pytest.approx(y, rel=1e-11, abs=1e-11)

    close(l2_inner(D(1, 7, f, s), a, s), l2_inner(f, D(7, 1, a, s), s))
    close(l2_inner(D(7, 7, a2, s), a, s), l2_inner(a2, D(7, 7, a, s), s))
    close(l2_inner(D(7, 27, a, s), c, s), l2_inner(a, D(27, 7, c, s), s))
    close(l2_inner(D(27, 27, c2, s), c, s), l2_inner(c2, D(27, 27, c, s), s))
