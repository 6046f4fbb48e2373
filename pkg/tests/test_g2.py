from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g2flow.exterior import AlternatingForm, InvalidArgument, compound, contract, e, hodge, wedge
from g2flow.g2 import (
    OMEGA0,
    THETA0,
    G2Structure,
    NotPositive,
    hitchin_derivative,
    is_positive,
    metric_derivative,
    metric_from_form,
    metric_vjp,
    p_apply,
    project2,
    project3,
    su3_decompose,
    su3_frame,
    su3_reassemble,
    theta_derivative,
)
from g2flow.scenarios import make_rng, random_frame, random_positive_form

seeds = st.integers(min_value=0, max_value=2**32 - 1)
E7 = np.eye(7)[6]


def _unit(s, rng):
    xi = rng.standard_normal(7)
    return xi / np.sqrt(xi @ s.ginv @ xi)


def test_metric_of_standard_form():
    m, vol = metric_from_form(OMEGA0)
    assert np.allclose(m.g, np.eye(7), atol=1e-14)
    assert vol == pytest.approx(1.0, abs=1e-14)


@pytest.mark.parametrize("lam", [0.25, 0.7, 1.9, 5.0])
def test_metric_of_scaled_form(lam):
    m, vol = metric_from_form(OMEGA0 * lam)
    assert np.allclose(m.g, lam ** (2 / 3) * np.eye(7), rtol=1e-13)
    assert vol == pytest.approx(lam ** (7 / 3), rel=1e-13)


def test_metric_is_pullback_metric():
    worst = 0.0
    for i in range(100):
        A = random_frame(make_rng(i))
        s = G2Structure(compound(A, 3).T @ OMEGA0.coeffs)
        worst = max(worst, np.abs(s.g - A.T @ A).max() / np.abs(A.T @ A).max())
        assert s.vol == pytest.approx(np.linalg.det(A), rel=1e-12)
    assert worst < 1e-12


def test_positivity_examples():
    assert is_positive(OMEGA0)[0]
    ok, sig = is_positive(-OMEGA0)
    assert not ok
    ok, sig = is_positive(e(1, 2, 3))
    assert not ok and sig[0] < 7
    with pytest.raises(NotPositive) as info:
        G2Structure(e(1, 2, 3))
    assert len(info.value.signature) == 3


def test_projector_examples():
    s = G2Structure(OMEGA0)
    one, seven, rest = project3(s, OMEGA0)
    assert one.allclose(OMEGA0) and seven.allclose(AlternatingForm.zero(3))
    t = hodge(wedge(e(1), OMEGA0))
    one, seven, rest = project3(s, t)
    assert seven.allclose(t, atol=1e-14) and rest.allclose(AlternatingForm.zero(3), atol=1e-14)
    assert float(t.coeffs @ t.coeffs) == pytest.approx(4.0)

    eta7 = contract(e(1), OMEGA0)
    a7, a14 = project2(s, eta7)
    assert a7.allclose(eta7, atol=1e-14) and a14.allclose(AlternatingForm.zero(2), atol=1e-14)
    eta = AlternatingForm(2, make_rng(2).standard_normal(21))
    b7, b14 = project2(s, eta)
    assert contract(b14, OMEGA0).allclose(AlternatingForm.zero(1), atol=1e-13)
    assert contract(contract(eta, OMEGA0), OMEGA0).allclose(3 * b7, atol=1e-13)


def test_p_examples():
    s = G2Structure(OMEGA0)
    assert p_apply(s, OMEGA0).allclose(OMEGA0 * (4 / 3), atol=1e-14)
    t27 = project3(s, AlternatingForm(3, make_rng(5).standard_normal(35)))[2]
    assert p_apply(s, t27).allclose(-t27, atol=1e-13)


def test_theta_and_volume_derivative_examples():
    s = G2Structure(OMEGA0)
    assert theta_derivative(s, OMEGA0).allclose(THETA0 * (4 / 3), atol=1e-14)
    t27 = project3(s, AlternatingForm(3, make_rng(6).standard_normal(35)))[2]
    assert theta_derivative(s, t27).allclose(-hodge(t27), atol=1e-13)
    assert hitchin_derivative(s, OMEGA0) == pytest.approx(7 / 3)
    assert hitchin_derivative(s, t27) == pytest.approx(0.0, abs=1e-13)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_theta_derivative_matches_difference_quotient(seed):
    rng = make_rng(seed)
    w = random_positive_form(rng)
    t = rng.standard_normal(35)
    h = 1e-5
    fd = (G2Structure(w + h * t).theta - G2Structure(w - h * t).theta) / (2 * h)
    assert np.abs(G2Structure(w).theta_derivative(t) - fd).max() <= 1e-7 * max(1.0, np.abs(fd).max())
    fdv = (G2Structure(w + h * t).vol - G2Structure(w - h * t).vol) / (2 * h)
    assert abs(G2Structure(w).hitchin_derivative(t) - fdv) <= 1e-7 * max(1.0, abs(fdv))


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_p_self_adjoint_and_projectors_complementary(seed):
    s = G2Structure(random_positive_form(make_rng(seed)))
    G = s.gram(3)
    assert np.allclose(G @ s.p_matrix, (G @ s.p_matrix).T, atol=1e-10)
    for P in (s.proj3_1, s.proj3_7, s.proj3_27, s.proj2_7, s.proj2_14):
        assert np.allclose(P @ P, P, atol=1e-10)
    assert np.allclose(s.proj3_1 + s.proj3_7 + s.proj3_27, np.eye(35))
    assert [round(np.trace(P)) for P in (s.proj3_1, s.proj3_7, s.proj3_27)] == [1, 7, 27]
    assert [round(np.trace(P)) for P in (s.proj2_7, s.proj2_14)] == [7, 14]


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_closed_form_projectors_match_generic(seed):
    s = G2Structure(random_positive_form(make_rng(seed)))
    assert np.allclose(s.proj2_7, s.proj2_7_generic(), atol=1e-10)
    assert np.allclose(s.proj3_7, s.proj3_7_generic(), atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_structure_is_equivariant(seed):
    rng = make_rng(seed)
    w = random_positive_form(rng)
    A = random_frame(rng)
    s, t = G2Structure(w), G2Structure(compound(A, 3).T @ w)
    assert np.allclose(t.g, A.T @ s.g @ A, atol=1e-11)
    assert np.allclose(t.theta, compound(A, 4).T @ s.theta, atol=1e-10)


@settings(max_examples=25, deadline=None)
@given(seeds, st.floats(0.2, 5.0))
def test_hodge_scales_with_form(seed, lam):
    w = random_positive_form(make_rng(seed))
    s, t = G2Structure(w), G2Structure(lam * w)
    for p in range(8):
        assert np.allclose(t.hodge_matrix(p), lam ** ((7 - 2 * p) / 3) * s.hodge_matrix(p), rtol=1e-12, atol=1e-13)


def test_reverse_mode_metric_matches_forward_mode():
    rng = make_rng(9)
    w = random_positive_form(rng)
    gbar = rng.standard_normal((7, 7))
    vbar = float(rng.standard_normal())
    _, _, dg, dvol = metric_derivative(w)
    fwd = np.einsum("kab,ab->k", dg, gbar) + vbar * dvol
    assert np.allclose(metric_vjp(w, gbar, vbar), fwd, atol=1e-11)


def test_su3_frame_at_last_axis():
    fr = su3_frame(G2Structure(OMEGA0), E7)
    assert fr.omega2.terms() == {"12": 1.0, "34": 1.0, "56": 1.0}
    assert fr.psi_plus.terms() == {"135": 1.0, "146": -1.0, "236": -1.0, "245": -1.0}
    assert fr.psi_minus.terms() == {"136": 1.0, "145": 1.0, "235": 1.0, "246": -1.0}
    with pytest.raises(InvalidArgument):
        su3_frame(G2Structure(OMEGA0), 2 * E7)


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_su3_frame_relations(seed):
    rng = make_rng(seed)
    s = G2Structure(random_positive_form(rng))
    xi = _unit(s, rng)
    fr = su3_frame(s, xi)
    assert np.abs(wedge(fr.omega2, fr.psi_plus).coeffs).max() < 1e-10
    X = rng.standard_normal(7)
    X = X - (X @ xi) * (s.ginv @ xi)
    c = s.contract(s.g @ X, fr.psi_minus.coeffs, 1, 3)
    assert s.inner(c, c, 2) == pytest.approx(2 * s.inner(s.g @ X, s.g @ X, 1), rel=1e-9)


def test_su3_decompose_singlets():
    s = G2Structure(OMEGA0)
    fr = su3_frame(s, E7)
    om_xi = wedge(fr.omega2, AlternatingForm(1, E7))
    cases = {"a": OMEGA0, "b": fr.psi_minus, "c": om_xi * -4 + fr.psi_plus * 3}
    for name, t in cases.items():
        comp = su3_decompose(s, E7, t)
        assert {k: round(getattr(comp, k), 12) for k in "abc"} == {k: float(k == name) for k in "abc"}
        assert np.abs(comp.X).max() < 1e-12 and np.abs(comp.Y).max() < 1e-12
        assert np.abs(comp.beta8.coeffs).max() < 1e-12 and np.abs(comp.gamma12.coeffs).max() < 1e-12


@settings(max_examples=25, deadline=None)
@given(seeds)
def test_su3_reassembly(seed):
    rng = make_rng(seed)
    s = G2Structure(random_positive_form(rng))
    xi = _unit(s, rng)
    t = AlternatingForm(3, rng.standard_normal(35))
    back = su3_reassemble(s, xi, su3_decompose(s, xi, t))
    assert back.allclose(t, atol=1e-9)
