"""Dirichlet energy, Hitchin volume and the exact discrete L² gradient Q.

The discrete energy is the midpoint quadrature

    D(Ω) = ½ Σ_x (|dΩ|²_g + |dΘ(Ω)|²_g) vol(x) Πh,

and Q is minus its exact gradient with respect to the weighted L²_Ω product,
so the finite-difference contract holds to truncation error of the FD
quotient, independent of the stencil order.

Three pieces make up the gradient at each node:

* ``dᵀ(M₄ dΩ)``: variation of dΩ,
* ``J_Θᵀ dᵀ(M₅ dΘ)`` with ``J_Θ = ⋆p``: variation of Θ(Ω),
* the metric variation of the pointwise weights ``M_p = vol·gram_p``,
  pulled back to Ω node by node in reverse mode through B, det B and g
  (``metric_vjp``). The weight sensitivity uses
  d(αᵀ gram_p α)[ġ⁻¹] = Σ ġ⁻¹_ab ⟨e_a⌟α, e_b⌟α⟩. A forward-mode dual-number
  route (``weight_gradient_dual``) is kept as an independent reference.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import dual
from .exterior import compound, complement_matrix, coordinate_interior, matvec
from .fields import (
    FormField,
    InvalidArgument,
    StructureField,
    codiff_analytic,
    d,
    d_transpose,
    l2_inner,
    laplacian_analytic,
)
from .g2 import metric_and_volume, metric_derivative, metric_vjp


@dataclass(frozen=True)
class EnergyReport:
    dirichlet: float
    torsion_d: float
    torsion_delta: float
    hitchin: float
    isometry_residual: float = 0.0


def _weighted_norm2(geom, values, p, cell):
    w = np.sum(values * matvec(geom.gram(p), values), axis=-1)
    return float(np.sum(w * geom.vol) * cell)


def energy(S: StructureField, check_isometry: bool = True) -> EnergyReport:
    """Discrete D, ‖dΩ‖², ‖dΘ‖² (= ‖δΩ‖²) and H = ∫vol."""
    geom, cell = S.geom, S.grid.cell_volume
    a = d(S.omega).values
    b = d(S.theta).values
    td = _weighted_norm2(geom, a, 4, cell)
    tt = _weighted_norm2(geom, b, 5, cell)
    resid = 0.0
    if check_isometry:
        delta = codiff_analytic(S.omega, S)
        alt = _weighted_norm2(geom, delta.values, 2, cell)
        resid = abs(alt - tt) / max(1.0, tt)
    return EnergyReport(0.5 * (td + tt), td, tt, float(np.sum(geom.vol) * cell), resid)


def dirichlet(S: StructureField) -> float:
    return energy(S, check_isometry=False).dirichlet


def hitchin(S: StructureField) -> float:
    return float(np.sum(S.geom.vol) * S.grid.cell_volume)


def _weight_sensitivity(geom, alpha, p):
    """∂/∂g of αᵀ vol·gram_p(g⁻¹) α at fixed α, shape (..., 7, 7)."""
    Ia = matvec(coordinate_interior(p), alpha[..., None, :])
    S = Ia @ geom.gram(p - 1) @ np.swapaxes(Ia, -1, -2)
    n2 = np.sum(alpha * matvec(geom.gram(p), alpha), axis=-1)
    gi = geom.ginv
    out = 0.5 * n2[..., None, None] * gi - gi @ S @ gi
    return out * geom.vol[..., None, None]


def weight_gradient(geom, alpha, p, dg=None):
    """Gradient in Ω (35 components per node) of αᵀ vol·gram_p α at fixed α."""
    if dg is None:
        _, _, dg, _ = metric_derivative(geom.omega)
    sens = _weight_sensitivity(geom, alpha, p)
    return np.einsum("...ab,k...ab->...k", sens, dg)


def weight_gradient_dual(omega, alpha, p):
    """Reference route: dual numbers through form → metric → gram_p in one pass."""
    g, vol = metric_and_volume(dual.Dual.seed(np.asarray(omega, float)))
    G = compound(dual.inv(g), p)
    w = dual.einsum("...i,...ij,...j->...", alpha, G, alpha) * vol
    return np.moveaxis(w.du, 0, -1)


def hodge_tangents(omega, alpha, p):
    """Tangent stack ⋆̇_Ω[e_k] α for the 35 coordinate directions e_k (dual numbers)."""
    g, vol = metric_and_volume(dual.Dual.seed(np.asarray(omega, float)))
    G = compound(dual.inv(g), p)
    star = dual.einsum("ij,...jk,...k->...i", complement_matrix(p), G, alpha) * vol[..., None]
    return star.du


def _euclidean_gradient(S: StructureField):
    """Euclidean gradient of D in the per-node coefficients, plus the energy report."""
    geom, grid = S.geom, S.grid
    a = d(S.omega).values
    b = d(S.theta).values
    Ma = matvec(geom.gram(4), a) * geom.vol[..., None]
    Mb = matvec(geom.gram(5), b) * geom.vol[..., None]
    cell = grid.cell_volume
    td = float(np.sum(a * Ma) * cell)
    tt = float(np.sum(b * Mb) * cell)
    grad = d_transpose(grid, Ma, 3)
    y = d_transpose(grid, Mb, 4)
    # J_Θ = ⋆₃ p, so J_Θᵀ y = pᵀ ⋆₃ᵀ y
    z = matvec(np.swapaxes(geom.hodge_matrix(3), -1, -2), y)
    grad = grad + matvec(np.swapaxes(geom.p_matrix, -1, -2), z)
    sens = _weight_sensitivity(geom, a, 4) + _weight_sensitivity(geom, b, 5)
    grad = grad + 0.5 * metric_vjp(geom.omega, sens)
    rep = EnergyReport(0.5 * (td + tt), td, tt, float(np.sum(geom.vol) * cell))
    return grad, rep


def gradient_and_energy(S: StructureField) -> tuple[FormField, EnergyReport]:
    geom = S.geom
    grad, rep = _euclidean_gradient(S)
    q = -matvec(geom.inverse_gram(3), grad) / geom.vol[..., None]
    return FormField(S.grid, 3, q), rep


def gradient_Q(S: StructureField) -> FormField:
    """Q = −grad D in the L²_Ω metric: ⟨Q, Ω̇⟩_{L²_Ω} = −dD(Ω + tΩ̇)/dt at t = 0."""
    return gradient_and_energy(S)[0]


def laplacian_flow_rhs(S: StructureField) -> FormField:
    """Δ_Ω Ω with the analytic codifferential."""
    return laplacian_analytic(S.omega, S)


def second_variation(background: StructureField, tdot: FormField, tol: float = 1e-8) -> float:
    """Σ (|dΩ̇|² + |d⋆pΩ̇|²) vol Πh at a torsion-free background."""
    rep = energy(background, check_isometry=False)
    if np.sqrt(rep.torsion_d) + np.sqrt(rep.torsion_delta) > tol:
        raise InvalidArgument("second variation needs a torsion-free background")
    geom = background.geom
    a = d(tdot)
    b = d(FormField(tdot.grid, 4, geom.theta_derivative(tdot.values)))
    return l2_inner(a, a, background) + l2_inner(b, b, background)


def fd_directional(S: StructureField, direction: FormField, h: float = 1e-4) -> float:
    """Central difference (D(Ω+hΩ̇) − D(Ω−hΩ̇)) / 2h of the discrete energy."""
    plus = StructureField(S.omega + direction * h)
    minus = StructureField(S.omega - direction * h)
    return (dirichlet(plus) - dirichlet(minus)) / (2.0 * h)
