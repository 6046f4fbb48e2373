"""DeTurck gauge term, the gauged operator Q̃ and its linearization L at a flat background.

Linear operators on 3-form fields are wrapped in :class:`OperatorMatrix`,
which applies the operator matrix-free and assembles dense entries on demand
up to ``DENSE_CAP`` unknowns.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.sparse.linalg import LinearOperator, cg

from .energy import gradient_and_energy
from .exterior import DIM, contract_arrays, coordinate_interior, matvec, size
from .fields import (
    FormField,
    InvalidArgument,
    StructureField,
    TorusGrid,
    codiff_adjoint,
    d,
    d_transpose,
    interior_fields,
    l2_inner,
    laplacian,
)
from .g2diff import part, pseudowb_rhs, require_torsion_free
from .symbols import symbol_deturck

DENSE_CAP = 5000
KERNEL_RTOL = 1e-8


class CapacityError(RuntimeError):
    """Dense assembly or eigensolve requested above ``DENSE_CAP`` unknowns."""


class SolverError(RuntimeError):
    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


# ---------------------------------------------------------------------------
# gauge vector field, Lie derivative, Q̃


def _check_grid(a, b):
    if a.grid != b.grid:
        raise InvalidArgument("fields live on different grids")


def deturck_vector_field(omega_bar: StructureField, f: FormField) -> np.ndarray:
    """X(f) = −(δf ⌟ Ω̄)^♯ with δ, ⌟ and ♯ taken in the background metric."""
    _check_grid(omega_bar.omega, f)
    if f.degree != 3:
        raise InvalidArgument("the gauge field is defined for 3-forms")
    geom = omega_bar.geom
    beta = codiff_adjoint(f, omega_bar).values
    one = contract_arrays(beta, geom.omega, 2, 3, geom.g, geom.ginv)
    return -matvec(geom.ginv, one)


def lie_derivative(X: np.ndarray, f: FormField) -> FormField:
    """L_X f = X⌟df + d(X⌟f)."""
    out = FormField(f.grid, f.degree, np.zeros(np.broadcast_shapes(X.shape[:-1], f.values.shape[:-1]) + (size(f.degree),)))
    if f.degree < DIM:
        out = out + interior_fields(X, d(f))
    if f.degree > 0:
        out = out + d(interior_fields(X, f))
    return out


def q_tilde_and_energy(omega_bar: StructureField, S: StructureField):
    Q, rep = gradient_and_energy(S)
    X = deturck_vector_field(omega_bar, S.omega)
    return Q + lie_derivative(X, S.omega), rep, Q


def q_tilde(omega_bar: StructureField, S: StructureField) -> FormField:
    """Q̃(Ω) = Q(Ω) + L_{X(Ω)}Ω with the gauge field taken relative to Ω̄."""
    return q_tilde_and_energy(omega_bar, S)[0]


def jvp(fn: Callable[[FormField], FormField], at: FormField, direction: FormField, step: float = 1e-5):
    """Central-difference directional derivative of a field map."""
    plus = fn(at + direction * step)
    minus = fn(at - direction * step)
    return (plus - minus) / (2.0 * step)


def q_tilde_jvp(omega_bar, at: FormField, direction: FormField, step: float = 1e-5) -> FormField:
    return jvp(lambda w: q_tilde(omega_bar, StructureField(w)), at, direction, step)


def remainder(omega_bar, omega_prime: StructureField, w: FormField, eps: float, step: float = 1e-5) -> FormField:
    """Q̃(Ω′ + εw) − Q̃(Ω′) − ε·DQ̃_{Ω′}(w).

    At a slice point Q̃(Ω′) vanishes, so this is the nonlinear remainder of the
    gauged operator about Ω′.
    """
    if eps == 0:
        return FormField.zeros(w.grid, 3)
    moved = StructureField(omega_prime.omega + w * eps)
    base = q_tilde(omega_bar, omega_prime)
    lin = q_tilde_jvp(omega_bar, omega_prime.omega, w, step)
    return q_tilde(omega_bar, moved) - base - lin * eps


# ---------------------------------------------------------------------------
# operator container


@dataclass
class OperatorMatrix:
    grid: TorusGrid
    background: StructureField
    kind: str
    apply: Callable[[FormField], FormField]
    degree_in: int = 3
    degree_out: int = 3
    cap: int = DENSE_CAP
    _dense: np.ndarray | None = field(default=None, repr=False)

    @property
    def dim(self) -> int:
        return size(self.degree_in) * self.grid.node_count

    @property
    def dim_out(self) -> int:
        return size(self.degree_out) * self.grid.node_count

    def _field(self, x: np.ndarray) -> FormField:
        lead = x.shape[:-1]
        return FormField(self.grid, self.degree_in, x.reshape(lead + self.grid.n + (size(self.degree_in),)))

    def matvec(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, float)
        y = self.apply(self._field(x[None]))
        return y.values.reshape(-1)

    def __call__(self, f: FormField) -> FormField:
        return self.apply(f)

    @property
    def entries(self) -> np.ndarray:
        if self._dense is None:
            if max(self.dim, self.dim_out) > self.cap:
                raise CapacityError(
                    f"dense assembly of {self.dim} unknowns exceeds the cap of {self.cap}"
                )
            cols = []
            chunk = 256
            for start in range(0, self.dim, chunk):
                stop = min(self.dim, start + chunk)
                basis = np.zeros((stop - start, self.dim))
                basis[np.arange(stop - start), np.arange(start, stop)] = 1.0
                out = self.apply(self._field(basis)).values.reshape(stop - start, -1)
                cols.append(out)
            self._dense = np.concatenate(cols, axis=0).T
        return self._dense

    def weight(self) -> np.ndarray:
        """Dense weight matrix of the discrete L² product on the input space."""
        geom = self.background.geom
        if not self.background.is_constant:
            raise InvalidArgument("weights are only assembled for constant backgrounds")
        G = geom.g if self.kind == "lambda_star_normal" else geom.gram(self.degree_in)
        G = G.reshape(-1, *G.shape[-2:])[0]
        v = float(np.ravel(geom.vol)[0])
        return np.kron(np.eye(self.grid.node_count), v * G * self.grid.cell_volume)

    def symmetry_residual(self) -> float:
        """‖WA − (WA)ᵀ‖ / ‖WA‖ for the weighted product."""
        WA = self.weight() @ self.entries
        return float(np.linalg.norm(WA - WA.T, 2) / max(np.linalg.norm(WA, 2), 1e-300))


def _require_flat(omega_bar: StructureField):
    require_torsion_free(omega_bar)
    if not omega_bar.is_constant:
        raise InvalidArgument("the linearization is assembled at a constant torsion-free background")


def apply_L_secvar(omega_bar: StructureField, t: FormField) -> FormField:
    """−δdΩ̇ − p dδ pΩ̇ − 3 d[δΩ̇]₇ with the adjoint codifferential."""
    s = omega_bar
    P = s.geom.p_matrix

    def pmap(f):
        return FormField(f.grid, 3, matvec(P, f.values))

    first = codiff_adjoint(d(t), s)
    second = pmap(d(codiff_adjoint(pmap(t), s)))
    third = d(part(codiff_adjoint(t, s), s, 7))
    return (first + second + third * 3.0) * -1.0


def apply_L_modules(omega_bar: StructureField, t: FormField) -> FormField:
    """−L from the module expansion, negated."""
    return pseudowb_rhs(t, omega_bar) * -1.0


def assemble_L(omega_bar: StructureField, method: str = "secvar") -> OperatorMatrix:
    """Linearization of Q̃ at a flat background, by the direct formula or the module expansion."""
    _require_flat(omega_bar)
    fn = {"secvar": apply_L_secvar, "modules": apply_L_modules}.get(method)
    if fn is None:
        raise InvalidArgument(f"unknown assembly {method!r}")
    return OperatorMatrix(omega_bar.grid, omega_bar, "L", lambda t: fn(omega_bar, t))


def hodge_laplacian_operator(omega_bar: StructureField) -> OperatorMatrix:
    return OperatorMatrix(
        omega_bar.grid, omega_bar, "hodge_laplacian", lambda t: laplacian(t, omega_bar)
    )


def quadratic_form_terms(omega_bar: StructureField, t: FormField) -> dict:
    """‖dΩ̇‖², ‖δpΩ̇‖², ‖[δΩ̇]₇‖², ‖δΩ̇‖² in the discrete L² product."""
    s = omega_bar
    dt = d(t)
    pt = FormField(t.grid, 3, matvec(s.geom.p_matrix, t.values))
    dpt = codiff_adjoint(pt, s)
    dl = codiff_adjoint(t, s)
    d7 = part(dl, s, 7)
    return {
        "d": l2_inner(dt, dt, s),
        "delta_p": l2_inner(dpt, dpt, s),
        "delta_7": l2_inner(d7, d7, s),
        "delta": l2_inner(dl, dl, s),
    }


# ---------------------------------------------------------------------------
# spectra


@dataclass(frozen=True)
class SpectrumReport:
    eigenvalues: np.ndarray  # of the operator, ascending
    kernel_count: int
    lambda1: float  # smallest nonzero eigenvalue of −L (or of a positive operator)
    cut: float
    symmetry_residual: float


def spectrum(op: OperatorMatrix, rtol: float = KERNEL_RTOL) -> SpectrumReport:
    """Dense symmetric eigensolve in the weighted product (W^{1/2} A W^{-1/2})."""
    A = op.entries
    R = np.linalg.cholesky(op.weight()).T
    B = R @ A @ np.linalg.inv(R)
    asym = float(np.linalg.norm(B - B.T, 2) / max(np.linalg.norm(B, 2), 1e-300))
    ev = np.linalg.eigvalsh(0.5 * (B + B.T))
    sign = -1.0 if op.kind == "L" else 1.0
    mags = np.sort(sign * ev)
    cut = rtol * max(np.abs(ev).max(), 1e-300)
    kern = int(np.sum(np.abs(ev) < cut))
    above = mags[mags > cut]
    lam1 = float(above[0]) if above.size else float("nan")
    return SpectrumReport(ev, kern, lam1, cut, asym)


def grid_wavevectors(grid: TorusGrid) -> np.ndarray:
    """All integer wavevectors resolved by the grid, one per Fourier mode."""
    axes = [np.fft.fftfreq(n, d=1.0 / n).round().astype(int) if n > 1 else np.zeros(1, int) for n in grid.n]
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def fourier_spectrum(omega_bar: StructureField) -> np.ndarray:
    """Eigenvalues of L from the symbol at the stencil wavevectors (ascending)."""
    _require_flat(omega_bar)
    grid = omega_bar.grid
    geom = omega_bar.geom.at(*([0] * DIM))
    R = np.linalg.cholesky(geom.gram(3)).T
    Rinv = np.linalg.inv(R)
    out = []
    for k in grid_wavevectors(grid):
        xi = grid.symbol(k)
        if not np.any(xi):
            out.append(np.zeros(35))
            continue
        A = R @ symbol_deturck(geom, xi).matrix @ Rinv
        out.append(np.linalg.eigvalsh(0.5 * (A + A.T)))
    return np.sort(np.concatenate(out))


def fourier_lambda1(omega_bar: StructureField, rtol: float = KERNEL_RTOL) -> float:
    ev = -fourier_spectrum(omega_bar)
    cut = rtol * np.abs(ev).max()
    return float(np.min(ev[ev > cut]))


# ---------------------------------------------------------------------------
# Gårding


@dataclass(frozen=True)
class GardingReport:
    margins: np.ndarray  # (⟨−LΩ̇,Ω̇⟩ − ‖dΩ̇‖² − ‖δΩ̇‖²) / ‖Ω̇‖²_{W¹}
    worst: float
    empirical_C: float  # min over samples of (⟨−LΩ̇,Ω̇⟩ + ‖Ω̇‖²) / ‖Ω̇‖²_{W¹}


def _w12_norm2(t: FormField, s: StructureField) -> float:
    total = l2_inner(t, t, s)
    for i in t.grid.active_axes:
        g = FormField(t.grid, 3, t.grid.partial(t.values, i))
        total += l2_inner(g, g, s)
    return total


def garding_check(Lop: OperatorMatrix, samples) -> GardingReport:
    s = Lop.background
    margins, cs = [], []
    for t in samples:
        lhs = -l2_inner(Lop(t), t, s)
        terms = quadratic_form_terms(s, t)
        w = _w12_norm2(t, s)
        if w == 0:
            margins.append(0.0)
            continue
        margins.append((lhs - terms["d"] - terms["delta"]) / w)
        cs.append((lhs + l2_inner(t, t, s)) / w)
    m = np.array(margins)
    return GardingReport(m, float(m.min()), float(min(cs)) if cs else float("nan"))


# ---------------------------------------------------------------------------
# orbit / slice split


@dataclass(frozen=True)
class SplitResult:
    omega0: FormField
    X: np.ndarray
    lie_part: FormField
    orthogonality: float
    gauge_residual: float
    reconstruction: float
    iterations: int


def _interior_omega(omega_bar):
    # (…,21,7): X ↦ X⌟Ω̄
    return np.swapaxes(matvec(coordinate_interior(3), omega_bar.geom.omega[..., None, :]), -1, -2)


def orbit_map(omega_bar: StructureField, X: np.ndarray) -> FormField:
    """λ*(X) = L_XΩ̄ = d(X⌟Ω̄) at a closed background."""
    J = _interior_omega(omega_bar)
    return d(FormField(omega_bar.grid, 2, matvec(J, X)))


def orbit_map_transpose(omega_bar: StructureField, y: np.ndarray) -> np.ndarray:
    """Euclidean transpose of the coefficient map X ↦ λ*(X)."""
    J = _interior_omega(omega_bar)
    z = d_transpose(omega_bar.grid, y, 2)
    return matvec(np.swapaxes(J, -1, -2), z)


def _w3(omega_bar):
    geom = omega_bar.geom
    return geom.gram(3) * (geom.vol * omega_bar.grid.cell_volume)[..., None, None]


def gauge_defect(omega_bar: StructureField, f: FormField) -> np.ndarray:
    """λ(f) as a vector field: the L²-adjoint of λ* applied to f."""
    geom = omega_bar.geom
    y = matvec(_w3(omega_bar), f.values)
    z = orbit_map_transpose(omega_bar, y)
    wv = geom.g * (geom.vol * omega_bar.grid.cell_volume)[..., None, None]
    return matvec(np.linalg.inv(wv), z)


def orbit_slice_split(omega_bar: StructureField, f: FormField, rtol: float = 1e-13, maxiter: int = 5000) -> SplitResult:
    """f = Ω̇₀ + L_XΩ̄ with λ(Ω̇₀) = 0, via CG on the normal equations."""
    _require_flat(omega_bar)
    grid = omega_bar.grid
    W = _w3(omega_bar)
    shape = grid.n + (DIM,)
    nvec = int(np.prod(shape))

    def normal(x):
        X = x.reshape(shape)
        y = matvec(W, orbit_map(omega_bar, X).values)
        return orbit_map_transpose(omega_bar, y).reshape(-1)

    A = LinearOperator((nvec, nvec), matvec=normal, dtype=float)
    b = orbit_map_transpose(omega_bar, matvec(W, f.values)).reshape(-1)
    bnorm = float(np.linalg.norm(b))
    iters = [0]

    def count(_):
        iters[0] += 1

    if bnorm == 0.0:
        x = np.zeros(nvec)
    else:
        x, info = cg(A, b, rtol=rtol, atol=0.0, maxiter=maxiter, callback=count)
        res = float(np.linalg.norm(normal(x) - b) / bnorm)
        if info != 0 and res > 1e-8:
            raise SolverError("conjugate gradient did not converge", res)
    X = x.reshape(shape)
    lie = orbit_map(omega_bar, X)
    omega0 = f - lie
    n0 = float(np.sqrt(max(l2_inner(omega0, omega0, omega_bar), 0.0)))
    nl = float(np.sqrt(max(l2_inner(lie, lie, omega_bar), 0.0)))
    nf = float(np.sqrt(max(l2_inner(f, f, omega_bar), 0.0)))
    ortho = abs(l2_inner(omega0, lie, omega_bar)) / max(n0 * nl, 1e-300) if n0 * nl > 0 else 0.0
    gd = gauge_defect(omega_bar, omega0)
    gnorm = float(np.sqrt(np.sum(gd * gd)))
    gauge = gnorm / max(nf, 1e-300) if nf > 0 else 0.0
    recon = float(np.abs((omega0 + lie - f).values).max())
    return SplitResult(omega0, X, lie, float(ortho), gauge, recon, iters[0])


def lambda_star_operator(omega_bar: StructureField) -> OperatorMatrix:
    """λλ* on vector fields, viewed as 1-form coefficient fields."""
    geom = omega_bar.geom

    def apply(f: FormField) -> FormField:
        X = f.values
        lie = orbit_map(omega_bar, X)
        return FormField(f.grid, 1, gauge_defect(omega_bar, lie))

    return OperatorMatrix(omega_bar.grid, omega_bar, "lambda_star_normal", apply, 1, 1)
