"""Principal symbols of the gradient, DeTurck, Laplacian-flow and orbit operators.

All symbols are given in real form: the matrix returned at a covector ξ is the
Fourier multiplier of the operator on e^{i⟨ξ,x⟩} (constant coefficients),
with the factor i² = −1 of a second-order operator already absorbed. With this
convention the gradient symbol is negative semi-definite.

Definiteness and singular values are always measured in the metric induced by
the structure: a matrix A acting from (V, G_in) to (W, G_out) is classified via
R_out A R_in⁻¹, where G = RᵀR is the Cholesky factorization.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .exterior import DIM, InvalidArgument, coordinate_interior, coordinate_wedge, contract_arrays
from .g2 import G2Structure

KERNEL_RTOL = 1e-9


def _xi(xi) -> np.ndarray:
    xi = np.asarray(getattr(xi, "coeffs", xi), float)
    if xi.shape != (DIM,):
        raise InvalidArgument("ξ must be a covector with 7 components")
    if not np.any(xi):
        raise InvalidArgument("symbol at ξ = 0")
    return xi


def wedge_by(xi: np.ndarray, p: int) -> np.ndarray:
    """Matrix of t ↦ ξ∧t on p-forms."""
    return np.tensordot(xi, coordinate_wedge(p), axes=1)


def interior_by(v: np.ndarray, p: int) -> np.ndarray:
    """Matrix of t ↦ v⌟t on p-forms for a vector v."""
    return np.tensordot(v, coordinate_interior(p), axes=1)


def _upper_chol(G: np.ndarray) -> np.ndarray:
    return np.linalg.cholesky(G).T


@dataclass
class SymbolMatrix:
    matrix: np.ndarray
    xi_norm: float
    gram_in: np.ndarray
    gram_out: np.ndarray
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.meta:
            self.meta = self.classify()

    def normalized(self) -> np.ndarray:
        """The matrix in orthonormal coordinates for the induced inner products."""
        Ri = _upper_chol(self.gram_in)
        Ro = _upper_chol(self.gram_out)
        return Ro @ self.matrix @ np.linalg.inv(Ri)

    def singular_values(self) -> np.ndarray:
        return np.linalg.svd(self.normalized(), compute_uv=False)

    def kernel_dim(self) -> int:
        sv = self.singular_values()
        n_in = self.matrix.shape[1]
        small = int(np.sum(sv < KERNEL_RTOL * sv.max()))
        return small + max(0, n_in - sv.size)

    def kernel_basis(self) -> np.ndarray:
        """Columns spanning the kernel, in the original coordinates."""
        A = self.normalized()
        _, sv, vt = np.linalg.svd(A)
        sv = np.concatenate([sv, np.zeros(vt.shape[0] - sv.size)])
        null = vt[sv < KERNEL_RTOL * sv.max()].T
        return np.linalg.solve(_upper_chol(self.gram_in), null)

    def symmetric_eigenvalues(self) -> np.ndarray:
        A = self.normalized()
        if A.shape[0] != A.shape[1]:
            raise InvalidArgument("symmetric part needs a square symbol")
        return np.linalg.eigvalsh(0.5 * (A + A.T))

    def quadratic_form(self, t: np.ndarray) -> float:
        return float(t @ self.gram_out @ self.matrix @ t)

    def classify(self) -> dict:
        sv = self.singular_values()
        out = {
            "xi_norm": self.xi_norm,
            "kernel_dim": self.kernel_dim(),
            "rank": int(self.matrix.shape[1] - self.kernel_dim()),
            "sigma_max": float(sv.max()),
        }
        if self.matrix.shape[0] == self.matrix.shape[1]:
            ev = self.symmetric_eigenvalues()
            scale = max(abs(ev[0]), abs(ev[-1]), 1e-300)
            lo, hi = float(ev[0]), float(ev[-1])
            if lo >= -1e-9 * scale:
                sign = "positive semi-definite" if lo <= 1e-9 * scale else "positive definite"
            elif hi <= 1e-9 * scale:
                sign = "negative semi-definite" if hi >= -1e-9 * scale else "negative definite"
            else:
                sign = "indefinite"
            out.update(sym_min=lo, sym_max=hi, definiteness=sign)
        return out


def _structure(s) -> G2Structure:
    return s if isinstance(s, G2Structure) else G2Structure(s)


def _norm(s: G2Structure, xi: np.ndarray) -> float:
    return float(np.sqrt(xi @ s.ginv @ xi))


def gradient_matrix(s: G2Structure, xi: np.ndarray) -> np.ndarray:
    v = s.ginv @ xi
    P = s.p_matrix
    return -interior_by(v, 4) @ wedge_by(xi, 3) - P @ wedge_by(xi, 2) @ interior_by(v, 3) @ P


def contract2_into_omega(s: G2Structure) -> np.ndarray:
    """Matrix (7×21) of β ↦ β⌟Ω for 2-forms β (metric contraction, a 1-form)."""
    return contract_arrays(np.eye(21), s.omega, 2, 3, s.g, s.ginv).T


def gauge_matrix(s: G2Structure, xi: np.ndarray) -> np.ndarray:
    """Real symbol of the DeTurck term: Ω̇ ↦ −ξ∧(((ξ⌟Ω̇)⌟Ω)⌟Ω)."""
    v = s.ginv @ xi
    beta = interior_by(v, 3)
    one = contract2_into_omega(s) @ beta
    back = np.stack([interior_by(s.ginv[:, a], 3) @ s.omega for a in range(DIM)], axis=1)
    return -wedge_by(xi, 2) @ back @ one


def symbol_gradient(s, xi) -> SymbolMatrix:
    s, xi = _structure(s), _xi(xi)
    G = s.gram(3)
    return SymbolMatrix(gradient_matrix(s, xi), _norm(s, xi), G, G)


def symbol_deturck(s, xi) -> SymbolMatrix:
    s, xi = _structure(s), _xi(xi)
    G = s.gram(3)
    return SymbolMatrix(gradient_matrix(s, xi) + gauge_matrix(s, xi), _norm(s, xi), G, G)


def symbol_gauge(s, xi) -> SymbolMatrix:
    s, xi = _structure(s), _xi(xi)
    G = s.gram(3)
    return SymbolMatrix(gauge_matrix(s, xi), _norm(s, xi), G, G)


def symbol_laplacian_flow(s, xi) -> SymbolMatrix:
    """|ξ|²Ω̇ + ξ∧(ξ⌟([Ω̇]₁/3 − 2[Ω̇]₂₇))."""
    s, xi = _structure(s), _xi(xi)
    v = s.ginv @ xi
    n2 = float(xi @ v)
    mix = s.proj3_1 / 3.0 - 2.0 * s.proj3_27
    A = n2 * np.eye(35) + wedge_by(xi, 2) @ interior_by(v, 3) @ mix
    G = s.gram(3)
    return SymbolMatrix(A, np.sqrt(n2), G, G)


def symbol_orbit_map(s, xi) -> SymbolMatrix:
    """v ↦ ξ∧(v⌟Ω) from vectors to 3-forms (35×7)."""
    s, xi = _structure(s), _xi(xi)
    cols = np.stack([interior_by(np.eye(DIM)[a], 3) @ s.omega for a in range(DIM)], axis=1)
    return SymbolMatrix(wedge_by(xi, 2) @ cols, _norm(s, xi), s.g, s.gram(3))


def gradient_kernel_span(s, xi) -> np.ndarray:
    """Columns (v̇ω + V̇⌟ψ₋)∧ξ for v̇ ∈ ℝ and V̇ ⊥ ξ, built from the SU(3) frame at unit ξ."""
    from .exterior import wedge_arrays
    from .g2 import su3_frame

    s, xi = _structure(s), _xi(xi)
    fr = su3_frame(s, xi)
    om, pm = fr.omega2.coeffs, fr.psi_minus.coeffs
    cols = [wedge_arrays(om, xi, 2, 1)]
    xv = s.ginv @ xi
    for a in range(DIM):
        V = np.eye(DIM)[a]
        V = V - (V @ xi) * xv  # ⊥ ξ
        cols.append(wedge_arrays(interior_by(V, 3) @ pm, xi, 2, 1))
    return np.array(cols).T


def principal_angle(s, A: np.ndarray, B: np.ndarray) -> float:
    """Largest principal angle between column spans of A and B in the Λ³ metric."""
    from scipy.linalg import subspace_angles

    R = _upper_chol(_structure(s).gram(3))
    return float(np.max(subspace_angles(R @ A, R @ B)))


def spectral_radius_bound(s, samples: int = 64, seed: int = 0) -> float:
    """Largest |eigenvalue| of the DeTurck symbol's symmetric part over unit ξ.

    The bound depends only on |ξ| for a positive form (G2 acts transitively on
    unit covectors), so a handful of samples suffice; the maximum is taken
    anyway for safety.
    """
    s = _structure(s)
    rng = np.random.default_rng(seed)
    best = 0.0
    for _ in range(samples):
        xi = rng.standard_normal(DIM)
        xi = xi / _norm(s, xi)
        A = symbol_deturck(s, xi).normalized()
        best = max(best, float(np.max(np.abs(np.linalg.eigvals(A)))))
    return best
