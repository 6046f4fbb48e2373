"""First-order G2 operators between the reference modules at a torsion-free background.

Reference modules are tagged by dimension: 1 (functions), 7 (1-forms),
14 (2-forms in Λ²₁₄) and 27 (3-forms in Λ³₂₇). ``dpq(p, q, field, s)`` maps a
field in module p to module q. The identities tabulated for these operators
(first-order decompositions of d, second-order relations, Laplacians) are
available as residual helpers for verification.
"""

from __future__ import annotations

import numpy as np

from .exterior import size
from .fields import (
    FormField,
    InvalidArgument,
    StructureField,
    codiff_adjoint,
    d,
    hodge_field,
    laplacian,
    wedge_fields,
)

MODULES = (1, 7, 14, 27)
MODULE_DEGREE = {1: 0, 7: 1, 14: 2, 27: 3}
ZERO_PAIRS = {(1, 1), (1, 14), (1, 27), (14, 1), (14, 14), (27, 1)}
TORSION_TOL = 1e-8
MODULE_TOL = 1e-8


class NotTorsionFree(ValueError):
    pass


def torsion(s: StructureField) -> float:
    """‖dΩ‖ + ‖δΩ‖ in the discrete L²_Ω norm."""
    from .fields import codiff_analytic, l2_norm

    return float(l2_norm(d(s.omega), s) + l2_norm(codiff_analytic(s.omega, s), s))


def require_torsion_free(s: StructureField, tol: float = TORSION_TOL):
    t = torsion(s)
    if t > tol:
        raise NotTorsionFree(f"background torsion {t:.3e} exceeds {tol:.1e}")


# pointwise helpers ----------------------------------------------------------


def wedge_omega(f: FormField, s: StructureField) -> FormField:
    return wedge_fields(f, s.omega)


def wedge_theta(f: FormField, s: StructureField) -> FormField:
    return wedge_fields(f, s.theta)


def star(f: FormField, s: StructureField) -> FormField:
    return hodge_field(f, s)


def delta(f: FormField, s: StructureField) -> FormField:
    return codiff_adjoint(f, s)


def _with(f, values, degree=None):
    return FormField(f.grid, f.degree if degree is None else degree, values)


def part(f: FormField, s: StructureField, q: int) -> FormField:
    """Pointwise module component [f]_q for 2-, 3- and 4-forms."""
    g = s.geom
    if f.degree == 2:
        t7, t14 = g.project2(f.values)
        comp = {7: t7, 14: t14}
    elif f.degree == 3:
        t1, t7, t27 = g.project3(f.values)
        comp = {1: t1, 7: t7, 27: t27}
    elif f.degree == 4:
        t1, t7, t27 = g.project4(f.values)
        comp = {1: t1, 7: t7, 27: t27}
    else:
        raise InvalidArgument(f"no module split coded for degree {f.degree}")
    if q not in comp:
        raise InvalidArgument(f"degree {f.degree} has no {q}-dimensional module")
    return _with(f, comp[q])


def module_defect(f: FormField, s: StructureField, module: int) -> float:
    """Relative size of the part of f outside the reference module."""
    if f.degree != MODULE_DEGREE[module]:
        return np.inf
    if module in (1, 7):
        return 0.0
    scale = max(np.abs(f.values).max(), 1e-300)
    own = part(f, s, module).values
    return float(np.abs(f.values - own).max() / scale)


def check_module(f: FormField, s: StructureField, module: int, tol: float = MODULE_TOL):
    if module not in MODULES:
        raise InvalidArgument(f"unknown module {module}")
    if f.degree != MODULE_DEGREE[module]:
        raise InvalidArgument(f"module {module} holds {MODULE_DEGREE[module]}-forms, got degree {f.degree}")
    if not np.any(f.values):
        return
    defect = module_defect(f, s, module)
    if defect > tol:
        raise InvalidArgument(f"field is not in module {module} (defect {defect:.2e})")


# the operators ----------------------------------------------------------------


def _zero(f, q):
    lead = f.values.shape[:-1]
    return FormField(f.grid, MODULE_DEGREE[q], np.zeros(lead + (size(MODULE_DEGREE[q]),)))


def _d17(f, s):
    return d(f)


def _d71(a, s):
    return delta(a, s)


def _d77(a, s):
    return star(wedge_theta(d(a), s), s)


def _d714(a, s):
    return part(d(a), s, 14)


def _d727(a, s):
    return part(d(star(wedge_theta(a, s), s)), s, 27)


def _d147(b, s):
    return star(wedge_omega(part(d(b), s, 7), s), s) * -1.0


def _d1427(b, s):
    return part(d(b), s, 27)


def _d2714(c, s):
    return part(delta(c, s), s, 14)


def _d277(c, s):
    return star(wedge_theta(delta(c, s), s), s)


def _d2727(c, s):
    return star(part(d(c), s, 27), s)


_OPS = {
    (1, 7): _d17,
    (7, 1): _d71,
    (7, 7): _d77,
    (7, 14): _d714,
    (7, 27): _d727,
    (14, 7): _d147,
    (14, 27): _d1427,
    (27, 14): _d2714,
    (27, 7): _d277,
    (27, 27): _d2727,
}


def dpq(p: int, q: int, field: FormField, s: StructureField, check: bool = True) -> FormField:
    """The G2 operator from module p to module q at a torsion-free background."""
    if p not in MODULES or q not in MODULES:
        raise InvalidArgument(f"unknown module pair ({p}, {q})")
    if check:
        require_torsion_free(s)
        check_module(field, s, p)
    if (p, q) in ZERO_PAIRS:
        return _zero(field, q)
    return _OPS[(p, q)](field, s)


def D(p, q, f, s):
    return dpq(p, q, f, s, check=False)


# assembling 3-forms from components -------------------------------------------


def scalar_times(f: FormField, form: FormField) -> FormField:
    """Pointwise product of a function (degree 0) with a form field."""
    return _with(form, f.values[..., :1] * form.values)


def seven_to_three(a: FormField, s: StructureField) -> FormField:
    """α ↦ ⋆(α∧Ω)."""
    return star(wedge_omega(a, s), s)


def assemble3(f: FormField, a: FormField, c: FormField, s: StructureField) -> FormField:
    """ḟΩ + ⋆(α̇∧Ω) + γ̇."""
    return scalar_times(f, s.omega) + seven_to_three(a, s) + c


def split3(t: FormField, s: StructureField):
    """Inverse of :func:`assemble3`: (ḟ, α̇, γ̇) with ḟ = ⟨t,Ω⟩/7 and α̇ = −¼⋆([t]₇∧Ω)."""
    g = s.geom
    t1, t7, t27 = g.project3(t.values)
    fval = np.sum(t.values * np.einsum("...ij,...j->...i", g.gram(3), g.omega), axis=-1) / 7.0
    f = FormField(t.grid, 0, fval[..., None])
    a = star(wedge_omega(_with(t, t7), s), s) * -0.25
    return f, a, _with(t, t27)


# identity rows ------------------------------------------------------------------
# Each row returns (lhs, rhs) as fields; the residual is lhs − rhs.


def table1_rows(f: FormField, a: FormField, b: FormField, c: FormField, s: StructureField):
    """First-order decomposition rows for random reference fields f, α, β, γ."""
    om, th = s.omega, s.theta
    vol = star(FormField(f.grid, 0, np.ones(f.values.shape)), s)
    d77a = D(7, 7, a, s)
    d71a = D(7, 1, a, s)
    rows = {
        "df": (d(f), D(1, 7, f, s)),
        "d(f omega)": (d(scalar_times(f, om)), wedge_omega(D(1, 7, f, s), s)),
        "d(f theta)": (d(scalar_times(f, th)), wedge_theta(D(1, 7, f, s), s)),
        "d alpha": (d(a), star(wedge_theta(d77a, s), s) * (1 / 3) + D(7, 14, a, s)),
        "d star(alpha^theta)": (
            d(star(wedge_theta(a, s), s)),
            scalar_times(d71a, om) * (-3 / 7) - star(wedge_omega(d77a, s), s) * 0.5 + D(7, 27, a, s),
        ),
        "d star(alpha^omega)": (
            d(seven_to_three(a, s)),
            scalar_times(d71a, th) * (4 / 7) + wedge_omega(d77a, s) * 0.5 + star(D(7, 27, a, s), s),
        ),
        "d(alpha^omega)": (
            d(wedge_omega(a, s)),
            wedge_theta(d77a, s) * (2 / 3) - star(D(7, 14, a, s), s),
        ),
        "d(alpha^theta)": (d(wedge_theta(a, s)), star(d77a, s)),
        "d star alpha": (d(star(a, s)), scalar_times(d71a, vol) * -1.0),
        "d beta": (
            d(b),
            star(wedge_omega(D(14, 7, b, s), s), s) * 0.25 + D(14, 27, b, s),
        ),
        "d star beta": (d(star(b, s)), star(D(14, 7, b, s), s)),
        "d gamma": (
            d(c),
            wedge_omega(D(27, 7, c, s), s) * 0.25 + star(D(27, 27, c, s), s),
        ),
        "d star gamma": (
            d(star(c, s)),
            wedge_theta(D(27, 7, c, s), s) * (-1 / 3) - star(D(27, 14, c, s), s),
        ),
    }
    return rows


def table2_rows(f: FormField, a: FormField, b: FormField, c: FormField, s: StructureField):
    """Second-order relations; each pair is (lhs, rhs)."""
    f7 = D(1, 7, f, s)
    a7, a14, a27, a1 = D(7, 7, a, s), D(7, 14, a, s), D(7, 27, a, s), D(7, 1, a, s)
    b7, b27 = D(14, 7, b, s), D(14, 27, b, s)
    c7, c14, c27 = D(27, 7, c, s), D(27, 14, c, s), D(27, 27, c, s)

    def zero(like):
        return like * 0.0

    rows = {
        "d77 d17 = 0": (D(7, 7, f7, s), zero(D(7, 7, f7, s))),
        "d714 d17 = 0": (D(7, 14, f7, s), zero(D(7, 14, f7, s))),
        "d71 d77 = 0": (D(7, 1, a7, s), zero(D(7, 1, a7, s))),
        "d147 d714 = 2/3 d77 d77": (D(14, 7, a14, s), D(7, 7, a7, s) * (2 / 3)),
        "d714 d77 + 2 d2714 d727 = 0": (D(7, 14, a7, s) + D(27, 14, a27, s) * 2.0, zero(a14)),
        "3 d1427 d714 + d727 d77 = 0": (D(14, 27, a14, s) * 3.0 + D(7, 27, a7, s), zero(a27)),
        "d277 d727 = d77 d77 + 12/7 d17 d71": (
            D(27, 7, a27, s),
            D(7, 7, a7, s) + D(1, 7, a1, s) * (12 / 7),
        ),
        "2 d2727 d727 - d727 d77 = 0": (D(27, 27, a27, s) * 2.0 - D(7, 27, a7, s), zero(a27)),
        "d71 d147 = 0": (D(7, 1, b7, s), zero(D(7, 1, b7, s))),
        "d77 d147 + 2 d277 d1427 = 0": (D(7, 7, b7, s) + D(27, 7, b27, s) * 2.0, zero(b7)),
        "d727 d147 + 4 d2727 d1427 = 0": (D(7, 27, b7, s) + D(27, 27, b27, s) * 4.0, zero(b27)),
        "3 d147 d2714 + d77 d277 = 0": (D(14, 7, c14, s) * 3.0 + D(7, 7, c7, s), zero(c7)),
        "d714 d277 + 4 d2714 d2727 = 0": (D(7, 14, c7, s) + D(27, 14, c27, s) * 4.0, zero(c14)),
        "2 d277 d2727 - d77 d277 = 0": (D(27, 7, c27, s) * 2.0 - D(7, 7, c7, s), zero(c7)),
    }
    return rows


def table3_rows(f: FormField, a: FormField, b: FormField, c: FormField, s: StructureField):
    """Laplacians of reference fields in terms of the module operators."""
    def lap(x):
        return laplacian(x, s)

    rows = {
        "lap f": (lap(f), D(7, 1, D(1, 7, f, s), s)),
        "lap alpha": (lap(a), D(7, 7, D(7, 7, a, s), s) + D(1, 7, D(7, 1, a, s), s)),
        "lap beta": (
            lap(b),
            D(7, 14, D(14, 7, b, s), s) * (5 / 4) + D(27, 14, D(14, 27, b, s), s),
        ),
        "lap gamma": (
            lap(c),
            D(7, 27, D(27, 7, c, s), s) * (7 / 12)
            + D(14, 27, D(27, 14, c, s), s)
            + D(27, 27, D(27, 27, c, s), s),
        ),
        "lap of assembled 3-form": (
            lap(assemble3(f, a, c, s)),
            assemble3(lap(f), lap(a), lap(c), s),
        ),
    }
    return rows


def deltapq_rows(f: FormField, a: FormField, c: FormField, s: StructureField):
    """d and δ of ḟΩ + ⋆(α̇∧Ω) + γ̇ in module components."""
    t = assemble3(f, a, c, s)
    f7 = D(1, 7, f, s)
    a1, a7, a14, a27 = D(7, 1, a, s), D(7, 7, a, s), D(7, 14, a, s), D(7, 27, a, s)
    c7, c14, c27 = D(27, 7, c, s), D(27, 14, c, s), D(27, 27, c, s)
    d_rhs = (
        scalar_times(a1, s.theta) * (4 / 7)
        + wedge_omega(f7 + a7 * 0.5 + c7 * 0.25, s)
        + star(a27 + c27, s)
    )
    delta_rhs = star(wedge_theta(f7 * -1.0 - a7 * (2 / 3) + c7 * (1 / 3), s), s) + a14 + c14
    return {
        "d of 3-form": (d(t), d_rhs),
        "delta of 3-form": (delta(t, s), delta_rhs),
    }


def pseudowb_rhs(t: FormField, s: StructureField) -> FormField:
    """−L t assembled from module operators: Δt + 34/21 d71d17 ḟ Ω + ⋆(d77d77 α̇∧Ω)
    + d727 d277 γ̇ − 2/21 d71 d277 γ̇ Ω − 2/3 d727 d17 ḟ."""
    f, a, c = split3(t, s)
    f7 = D(1, 7, f, s)
    c7 = D(27, 7, c, s)
    out = laplacian(t, s)
    out = out + scalar_times(D(7, 1, f7, s), s.omega) * (34 / 21)
    out = out + seven_to_three(D(7, 7, D(7, 7, a, s), s), s)
    out = out + D(7, 27, c7, s)
    out = out - scalar_times(D(7, 1, c7, s), s.omega) * (2 / 21)
    out = out - D(7, 27, f7, s) * (2 / 3)
    return out
