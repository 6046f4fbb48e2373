"""Pointwise G2 linear algebra: positivity, induced metric, Θ, module projectors, p, SU(3) splitting.

:class:`G2Structure` is batched: it accepts coefficient arrays of shape
``(..., 35)`` so a whole grid of nodes is handled at once, and it also wraps a
single :class:`~g2flow.exterior.AlternatingForm`.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

from . import dual
from .exterior import (
    DIM,
    AlternatingForm,
    InvalidArgument,
    MetricTensor,
    complement_matrix,
    compound,
    contract_arrays,
    coordinate_interior,
    coordinate_wedge,
    hodge_arrays,
    hodge_matrix_arrays,
    wedge_arrays,
    matvec,
    wedge_tensor,
)

OMEGA0 = AlternatingForm.from_terms(
    {"127": 1, "347": 1, "567": 1, "135": 1, "146": -1, "236": -1, "245": -1}
)
THETA0 = AlternatingForm.from_terms(
    {"1234": 1, "1256": 1, "3456": 1, "1367": 1, "1457": 1, "2357": 1, "2467": -1}
)

POSITIVITY_RTOL = 1e-10


class NotPositive(ValueError):
    """The 3-form does not induce a positive-definite metric.

    ``signature`` is (#positive, #negative, #near-zero) eigenvalues of the
    bilinear form B at the first offending node.
    """

    def __init__(self, signature, node=None):
        self.signature = tuple(int(s) for s in signature)
        self.node = node
        where = "" if node is None else f" at node {node}"
        super().__init__(f"3-form is not positive{where}; signature of B = {self.signature}")


def _coeffs(x):
    if isinstance(x, AlternatingForm):
        return x.coeffs
    return x


# ---------------------------------------------------------------------------
# form -> metric


def _bilinear_factors(omega: np.ndarray):
    # B = U W Uᵀ / 6 with U_a = e_a⌟Ω and W the pairing (β, γ) ↦ β∧γ∧Ω
    U = matvec(coordinate_interior(3), omega[..., None, :])
    v = omega @ complement_matrix(3).T
    W = (v @ wedge_tensor(2, 2).reshape(-1, 35).T).reshape(omega.shape[:-1] + (21, 21))
    return U, W


def bilinear_form(omega):
    """B(e_i, e_j) = (1/6) coefficient of (e_i⌟Ω)∧(e_j⌟Ω)∧Ω on e^{1…7}.

    Works for plain arrays ``(..., 35)`` and for :class:`~g2flow.dual.Dual` inputs.
    """
    if isinstance(omega, np.ndarray):
        U, W = _bilinear_factors(omega)
        return U @ W @ np.swapaxes(U, -1, -2) / 6.0
    U = dual.einsum("aij,...j->...ai", coordinate_interior(3), omega)
    v = dual.einsum("kj,...j->...k", complement_matrix(3), omega)
    W = dual.einsum("abk,...k->...ab", wedge_tensor(2, 2), v)
    return dual.einsum("...ia,...ab,...jb->...ij", U, W, U) * (1.0 / 6.0)


def metric_vjp(omega: np.ndarray, g_bar: np.ndarray, vol_bar=None) -> np.ndarray:
    """Pull a cotangent (ḡ, v̄ol) on (g, vol) back to Ω, node by node (reverse mode)."""
    omega = np.asarray(omega, float)
    U, W = _bilinear_factors(omega)
    Ut = np.swapaxes(U, -1, -2)
    B = U @ W @ Ut / 6.0
    detB = np.linalg.det(B)
    Binv_t = np.swapaxes(np.linalg.inv(B), -1, -2)
    s = np.power(detB, -1.0 / 9.0)[..., None, None]
    gb = np.sum(g_bar * B, axis=(-2, -1))[..., None, None]
    B_bar = s * (g_bar - gb * Binv_t / 9.0)
    if vol_bar is not None:
        vb = np.asarray(vol_bar) * np.power(detB, 1.0 / 9.0)
        B_bar = B_bar + (vb / 9.0)[..., None, None] * Binv_t
    U_bar = (B_bar @ U @ np.swapaxes(W, -1, -2) + np.swapaxes(B_bar, -1, -2) @ U @ W) / 6.0
    W_bar = Ut @ B_bar @ U / 6.0
    CI = coordinate_interior(3)
    out = U_bar.reshape(U_bar.shape[:-2] + (-1,)) @ CI.reshape(-1, 35)
    v_bar = W_bar.reshape(W_bar.shape[:-2] + (-1,)) @ wedge_tensor(2, 2).reshape(-1, 35)
    return out + v_bar @ complement_matrix(3)


def metric_and_volume(omega):
    """(g, vol) from a positive 3-form; g = (det B)^{-1/9} B and vol = (det B)^{1/9}."""
    B = bilinear_form(omega)
    detB = dual.det(B)
    scale = dual.power(detB, -1.0 / 9.0)
    g = B * scale[..., None, None]
    vol = dual.power(detB, 1.0 / 9.0)
    return g, vol


def signature_of(B: np.ndarray):
    ev = np.linalg.eigvalsh(B)
    cut = POSITIVITY_RTOL * np.abs(np.trace(B, axis1=-2, axis2=-1))[..., None] / DIM
    return (
        np.sum(ev > cut, axis=-1),
        np.sum(ev < -cut, axis=-1),
        np.sum(np.abs(ev) <= cut, axis=-1),
    )


def positive_mask(omega: np.ndarray) -> np.ndarray:
    B = bilinear_form(np.asarray(omega, float))
    ev = np.linalg.eigvalsh(B)
    tr = np.trace(B, axis1=-2, axis2=-1)
    return (ev[..., 0] > POSITIVITY_RTOL * tr / DIM) & (tr > 0)


def metric_derivative(omega: np.ndarray):
    """Forward-mode derivatives of (g, vol) along all 35 coordinate directions.

    Returns ``(g, vol, dg, dvol)`` with ``dg`` of shape (35, ..., 7, 7).
    """
    g, vol = metric_and_volume(dual.Dual.seed(np.asarray(omega, float)))
    return g.re, vol.re, g.du, vol.du


# ---------------------------------------------------------------------------
# batched structure


class G2Structure:
    """The pointwise G2 structure induced by a positive 3-form (or a stack of them)."""

    def __init__(self, omega, check: bool = True):
        self.single = isinstance(omega, AlternatingForm)
        if self.single and omega.degree != 3:
            raise InvalidArgument("a G2 structure needs a 3-form")
        w = np.array(_coeffs(omega), dtype=float)
        if w.shape[-1] != 35:
            raise InvalidArgument("3-form coefficient arrays must end in 35")
        self.omega = w
        self.batch_shape = w.shape[:-1]
        self.B = bilinear_form(w)
        if check:
            ok = positive_mask(w)
            if not np.all(ok):
                bad = np.argwhere(~ok)[0] if ok.ndim else None
                B_bad = self.B[tuple(bad)] if bad is not None else self.B
                pos, neg, zer = signature_of(B_bad)
                raise NotPositive((pos, neg, zer), None if bad is None else tuple(int(i) for i in bad))
        detB = np.linalg.det(self.B)
        self.g = self.B * np.power(detB, -1.0 / 9.0)[..., None, None]
        self.vol = np.power(detB, 1.0 / 9.0)
        self.ginv = np.linalg.inv(self.g)
        self._grams: dict[int, np.ndarray] = {}
        self._igrams: dict[int, np.ndarray] = {}
        self._hodge: dict[int, np.ndarray] = {}

    # metric-level pieces ---------------------------------------------------
    def gram(self, p: int) -> np.ndarray:
        if p not in self._grams:
            if p <= 3:
                self._grams[p] = compound(self.ginv, p)
            else:
                # ⋆ is an isometry, so gram_p = vol⁻² C gram_{7−p}⁻¹ Cᵀ
                C = complement_matrix(7 - p)
                w = self.vol[..., None, None] ** -2
                self._grams[p] = w * (C @ self.inverse_gram(7 - p) @ C.T)
        return self._grams[p]

    def inverse_gram(self, p: int) -> np.ndarray:
        if p not in self._igrams:
            if p <= 3:
                self._igrams[p] = compound(self.g, p)
            else:
                C = complement_matrix(7 - p)
                w = self.vol[..., None, None] ** 2
                self._igrams[p] = w * (C @ self.gram(7 - p) @ C.T)
        return self._igrams[p]

    @property
    def metric(self) -> MetricTensor:
        if self.batch_shape:
            raise InvalidArgument("metric tensor is only defined for a single node")
        return MetricTensor(self.g)

    def hodge_matrix(self, p: int) -> np.ndarray:
        if p not in self._hodge:
            self._hodge[p] = hodge_matrix_arrays(p, self.gram(p), self.vol)
        return self._hodge[p]

    def hodge(self, values, p: int):
        return hodge_arrays(values, p, self.gram(p), self.vol)

    def inner(self, a, b, p: int):
        return np.sum(a * matvec(self.gram(p), b), axis=-1)

    def contract(self, a, b, k: int, l: int):
        return contract_arrays(a, b, k, l, self.g, self.ginv)

    def wedge_omega_matrix(self, p: int) -> np.ndarray:
        """Matrix of t ↦ t ∧ Ω on p-forms."""
        return np.einsum("...i,jik->...kj", self.omega, wedge_tensor(p, 3))

    def wedge_theta_matrix(self, p: int) -> np.ndarray:
        """Matrix of t ↦ t ∧ Θ on p-forms."""
        return np.einsum("...i,jik->...kj", self.theta, wedge_tensor(p, 4))

    @cached_property
    def theta(self) -> np.ndarray:
        return self.hodge(self.omega, 3)

    @cached_property
    def min_metric_eigenvalue(self):
        return np.linalg.eigvalsh(self.g)[..., 0]

    # projectors ------------------------------------------------------------
    def _gram_projector(self, V: np.ndarray, p: int) -> np.ndarray:
        G = self.gram(p)
        VtG = np.einsum("...ia,...ij->...aj", V, G)
        K = np.einsum("...aj,...jb->...ab", VtG, V)
        return np.einsum("...ia,...ab,...bj->...ij", V, np.linalg.inv(K), VtG)

    def _span_projector(self, V: np.ndarray, p: int, scale: float) -> np.ndarray:
        # V has Gram matrix scale·g, so the projector is V g⁻¹ Vᵀ gram_p / scale
        VtG = np.swapaxes(V, -1, -2) @ self.gram(p)
        return V @ (self.ginv / scale) @ VtG

    @cached_property
    def proj2_7(self) -> np.ndarray:
        # span of X⌟Ω, with |X⌟Ω|² = 3|X|²
        V = np.swapaxes(matvec(coordinate_interior(3), self.omega[..., None, :]), -1, -2)
        return self._span_projector(V, 2, 3.0)

    def proj2_7_generic(self) -> np.ndarray:
        """Projector onto span{e^i⌟Ω} via metric contraction and an explicit Gram inverse."""
        eye = np.broadcast_to(np.eye(DIM), self.batch_shape + (DIM, DIM))
        om = np.broadcast_to(self.omega[..., None, :], self.batch_shape + (DIM, 35))
        gg = np.broadcast_to(self.g[..., None, :, :], self.batch_shape + (DIM, DIM, DIM))
        gi = np.broadcast_to(self.ginv[..., None, :, :], self.batch_shape + (DIM, DIM, DIM))
        V = contract_arrays(eye, om, 1, 3, gg, gi)
        return self._gram_projector(np.swapaxes(V, -1, -2), 2)

    @cached_property
    def proj2_14(self) -> np.ndarray:
        return np.eye(21) - self.proj2_7

    @cached_property
    def proj3_1(self) -> np.ndarray:
        # |Ω|² = 7
        w = self.omega[..., :, None]
        return w @ (np.swapaxes(w, -1, -2) @ self.gram(3)) / 7.0

    @cached_property
    def proj3_7(self) -> np.ndarray:
        # span of X⌟Θ, with |X⌟Θ|² = 4|X|²
        V = np.swapaxes(matvec(coordinate_interior(4), self.theta[..., None, :]), -1, -2)
        return self._span_projector(V, 3, 4.0)

    def proj3_7_generic(self) -> np.ndarray:
        """Projector onto span{⋆(e^i∧Ω)} with an explicit Gram inverse."""
        E = coordinate_wedge(3)
        V4 = np.einsum("akj,...j->...ak", E, self.omega)
        V = np.einsum("...ij,...aj->...ia", self.hodge_matrix(4), V4)
        return self._gram_projector(V, 3)

    @cached_property
    def proj3_27(self) -> np.ndarray:
        return np.eye(35) - self.proj3_1 - self.proj3_7

    @cached_property
    def p_matrix(self) -> np.ndarray:
        # (4/3)π₁ + π₇ − π₂₇
        return (7.0 / 3.0) * self.proj3_1 + 2.0 * self.proj3_7 - np.eye(35)

    def project3(self, t):
        t1 = matvec(self.proj3_1, t)
        t7 = matvec(self.proj3_7, t)
        return t1, t7, t - t1 - t7

    def project2(self, t):
        t7 = matvec(self.proj2_7, t)
        return t7, t - t7

    def project4(self, t):
        """Components of a 4-form in ⋆Λ³₁, ⋆Λ³₇, ⋆Λ³₂₇."""
        s = self.hodge(t, 4)
        return tuple(self.hodge(c, 3) for c in self.project3(s))

    def p_apply(self, t):
        return matvec(self.p_matrix, t)

    def theta_derivative(self, tdot):
        """Θ̇ = ⋆ p(Ω̇)."""
        return self.hodge(self.p_apply(tdot), 3)

    def hitchin_derivative(self, tdot):
        """Derivative of the volume density: (1/3) Θ∧Ω̇ against e^{1…7}."""
        return wedge_arrays(self.theta, tdot, 4, 3)[..., 0] / 3.0

    # single-node convenience --------------------------------------------------
    def at(self, *node) -> "G2Structure":
        return G2Structure(AlternatingForm(3, self.omega[node]))


def g2_structure(omega3: AlternatingForm) -> G2Structure:
    return G2Structure(omega3)


def metric_from_form(omega3: AlternatingForm) -> tuple[MetricTensor, float]:
    s = G2Structure(omega3)
    return MetricTensor(s.g), float(s.vol)


def is_positive(omega3) -> tuple[bool, tuple[int, int, int]]:
    w = np.asarray(_coeffs(omega3), float)
    B = bilinear_form(w)
    sig = tuple(int(x) for x in signature_of(B))
    return bool(positive_mask(w)), sig


def _form(p, arr):
    return AlternatingForm(p, arr)


def project3(s: G2Structure, t: AlternatingForm):
    return tuple(_form(3, c) for c in s.project3(t.coeffs))


def project2(s: G2Structure, t: AlternatingForm):
    return tuple(_form(2, c) for c in s.project2(t.coeffs))


def p_apply(s: G2Structure, t: AlternatingForm) -> AlternatingForm:
    return _form(3, s.p_apply(t.coeffs))


def theta_derivative(s: G2Structure, tdot: AlternatingForm) -> AlternatingForm:
    return _form(4, s.theta_derivative(tdot.coeffs))


def hitchin_derivative(s: G2Structure, tdot: AlternatingForm) -> float:
    return float(s.hitchin_derivative(tdot.coeffs))


# ---------------------------------------------------------------------------
# SU(3) refinement


@dataclass(frozen=True)
class SU3Frame:
    xi: AlternatingForm
    omega2: AlternatingForm
    psi_plus: AlternatingForm
    psi_minus: AlternatingForm


@dataclass(frozen=True)
class Su3Components:
    a: float
    b: float
    c: float
    X: np.ndarray
    Y: np.ndarray
    beta8: AlternatingForm
    gamma12: AlternatingForm


def _unit_check(s: G2Structure, xi: np.ndarray, tol: float = 1e-10):
    n2 = float(xi @ s.ginv @ xi)
    if abs(n2 - 1.0) > tol:
        raise InvalidArgument(f"ξ must have unit length, |ξ|² = {n2}")


def _as_covector(xi) -> np.ndarray:
    if isinstance(xi, AlternatingForm):
        if xi.degree != 1:
            raise InvalidArgument("ξ must be a 1-form")
        return xi.coeffs
    return np.asarray(xi, float)


def su3_frame(s: G2Structure, xi) -> SU3Frame:
    xi = _as_covector(xi)
    _unit_check(s, xi)
    om = s.contract(xi, s.omega, 1, 3)
    psi_p = s.omega - wedge_arrays(om, xi, 2, 1)
    # ψ₋ is Θ contracted by ξ from the right, so that Θ = ψ₋∧ξ + ½ω²
    psi_m = -s.contract(xi, s.theta, 1, 4)
    return SU3Frame(_form(1, xi), _form(2, om), _form(3, psi_p), _form(3, psi_m))


def _six_maps(s: G2Structure, fr: SU3Frame):
    """Matrices (35×7) of X ↦ (X⌟ψ₋)∧ξ + (X⌟ω)∧ω and Y ↦ (Y⌟ψ₋)∧ξ − (Y⌟ω)∧ω."""
    xi, om, pm = fr.xi.coeffs, fr.omega2.coeffs, fr.psi_minus.coeffs
    cols_plus, cols_minus = [], []
    for i in range(DIM):
        X = np.eye(DIM)[i]
        a = wedge_arrays(s.contract(X, pm, 1, 3), xi, 2, 1)
        b = wedge_arrays(s.contract(X, om, 1, 2), om, 1, 2)
        cols_plus.append(a + b)
        cols_minus.append(a - b)
    return np.array(cols_plus).T, np.array(cols_minus).T


def su3_decompose(s: G2Structure, xi, tdot) -> Su3Components:
    xi = _as_covector(xi)
    fr = su3_frame(s, xi)
    t = np.asarray(_coeffs(tdot), float)
    om, pp, pm = fr.omega2.coeffs, fr.psi_plus.coeffs, fr.psi_minus.coeffs
    beta = s.contract(xi, t, 1, 3)
    gamma = t - wedge_arrays(beta, xi, 2, 1)
    i_bw = s.inner(beta, om, 2) / 3.0
    i_gp = s.inner(gamma, pp, 3) / 4.0
    c = (i_gp - i_bw) / 7.0
    a = i_bw + 4.0 * c
    b = s.inner(gamma, pm, 3) / 4.0
    rest = t - a * s.omega - b * pm - c * (-4.0 * wedge_arrays(om, xi, 2, 1) + 3.0 * pp)
    Ap, Am = _six_maps(s, fr)
    A = np.hstack([Ap, Am])
    L = np.linalg.cholesky(s.gram(3))
    sol, *_ = np.linalg.lstsq(L.T @ A, L.T @ rest, rcond=None)
    xi_vec = s.ginv @ xi

    def perp(Z):
        return Z - (Z @ xi_vec) * xi

    X, Y = perp(sol[:DIM]), perp(sol[DIM:])
    beta8 = beta - (a - 4.0 * c) * om - s.contract(X + Y, pm, 1, 3)
    gamma12 = (
        gamma
        - (a + 3.0 * c) * pp
        - b * pm
        - wedge_arrays(s.contract(X - Y, om, 1, 2), om, 1, 2)
    )
    return Su3Components(float(a), float(b), float(c), X, Y, _form(2, beta8), _form(3, gamma12))


def su3_reassemble(s: G2Structure, xi, comp: Su3Components) -> AlternatingForm:
    xi = _as_covector(xi)
    fr = su3_frame(s, xi)
    om, pp, pm = fr.omega2.coeffs, fr.psi_plus.coeffs, fr.psi_minus.coeffs
    beta = (
        (comp.a - 4.0 * comp.c) * om
        + s.contract(comp.X + comp.Y, pm, 1, 3)
        + comp.beta8.coeffs
    )
    gamma = (
        (comp.a + 3.0 * comp.c) * pp
        + comp.b * pm
        + wedge_arrays(s.contract(comp.X - comp.Y, om, 1, 2), om, 1, 2)
        + comp.gamma12.coeffs
    )
    return _form(3, wedge_arrays(beta, xi, 2, 1) + gamma)
