"""Exterior algebra of R^7 with an arbitrary positive-definite metric.

Forms are stored as coefficient vectors over the lexicographically ordered
multi-indices of their degree. Most routines come in two flavours: a small
value-type API (``AlternatingForm``, ``MetricTensor``) for single forms, and
array-level helpers that act on stacks of coefficient vectors ``(..., C(7,p))``
so the same tables drive the per-node field kernels.
"""

from __future__ import annotations

import functools
import itertools
from dataclasses import dataclass, field
from math import comb

import numpy as np

DIM = 7


class InvalidArgument(ValueError):
    """Raised on degree mismatches and similar contract violations."""


# ---------------------------------------------------------------------------
# basis tables


@functools.lru_cache(maxsize=None)
def basis(p: int) -> tuple[tuple[int, ...], ...]:
    """Increasing 0-based multi-indices of length ``p`` in lexicographic order."""
    return tuple(itertools.combinations(range(DIM), p))


@functools.lru_cache(maxsize=None)
def index_of(p: int) -> dict[tuple[int, ...], int]:
    return {I: k for k, I in enumerate(basis(p))}


def size(p: int) -> int:
    return comb(DIM, p)


def _sort_sign(seq) -> int:
    seq = list(seq)
    sign = 1
    for i in range(len(seq)):
        for j in range(i + 1, len(seq)):
            if seq[i] > seq[j]:
                sign = -sign
    return sign


@functools.lru_cache(maxsize=None)
def wedge_tensor(p: int, q: int) -> np.ndarray:
    """Dense structure constants W[I, J, K] with e^I ∧ e^J = Σ_K W[I,J,K] e^K."""
    if p + q > DIM:
        raise InvalidArgument(f"wedge of degrees {p} and {q} exceeds {DIM}")
    W = np.zeros((size(p), size(q), size(p + q)))
    out = index_of(p + q)
    for a, I in enumerate(basis(p)):
        for b, J in enumerate(basis(q)):
            if set(I) & set(J):
                continue
            W[a, b, out[tuple(sorted(I + J))]] = _sort_sign(I + J)
    W.flags.writeable = False
    return W


@functools.lru_cache(maxsize=None)
def coordinate_wedge(p: int) -> np.ndarray:
    """Stack E[i] of matrices for α ↦ e^i ∧ α on p-forms, shape (7, C(7,p+1), C(7,p))."""
    E = np.ascontiguousarray(np.transpose(wedge_tensor(1, p), (0, 2, 1)))
    E.flags.writeable = False
    return E


@functools.lru_cache(maxsize=None)
def coordinate_interior(p: int) -> np.ndarray:
    """Stack I[i] of plain interior products by e_i on p-forms, shape (7, C(7,p-1), C(7,p))."""
    I = np.ascontiguousarray(np.transpose(coordinate_wedge(p - 1), (0, 2, 1)))
    I.flags.writeable = False
    return I


@functools.lru_cache(maxsize=None)
def complement_matrix(p: int) -> np.ndarray:
    """Signed complement: e^I ↦ ε(I, I^c) e^{I^c}, shape (C(7,7-p), C(7,p))."""
    M = np.zeros((size(DIM - p), size(p)))
    target = index_of(DIM - p)
    for a, I in enumerate(basis(p)):
        Ic = tuple(k for k in range(DIM) if k not in I)
        M[target[Ic], a] = _sort_sign(I + Ic)
    M.flags.writeable = False
    return M


@functools.lru_cache(maxsize=None)
def _laplace_tables(p: int):
    rows = basis(p)
    prev = index_of(p - 1)
    minor = np.array([[prev[I[:r] + I[r + 1:]] for r in range(p)] for I in rows])
    elem = np.array([list(I) for I in rows])
    sign = np.array([[(-1) ** (r + p - 1) for r in range(p)] for _ in rows], dtype=float)
    col_prev = np.array([prev[J[:-1]] for J in rows])
    col_last = np.array([J[-1] for J in rows])
    return minor, elem, sign, col_prev, col_last


def compound(M, p: int):
    """p-th compound (matrix of p×p minors) of a stack of 7×7 matrices.

    Column J of the k-th compound is the wedge of column J[:-1] of the
    (k−1)-th compound with column J[-1] of M. Plain arrays run this as one
    matmul per degree; :class:`g2flow.dual.Dual` inputs use the equivalent
    Laplace expansion, which needs only indexing, products and sums.
    """
    if p == 0:
        ones = np.ones(np.shape(_value(M))[:-2] + (1, 1))
        return ones
    if not isinstance(M, np.ndarray):
        return _compound_laplace(M, p)
    C = M
    for k in range(2, p + 1):
        _, _, _, col_prev, col_last = _laplace_tables(k)
        W = wedge_tensor(k - 1, 1)
        Z = C[..., :, None, col_prev] * M[..., None, :, col_last]
        Z = np.swapaxes(Z.reshape(Z.shape[:-3] + (-1, Z.shape[-1])), -1, -2)
        C = np.swapaxes(Z @ W.reshape(-1, W.shape[-1]), -1, -2)
    return C


def _compound_laplace(M, p: int):
    C = M
    for k in range(2, p + 1):
        minor, elem, sign, col_prev, col_last = _laplace_tables(k)
        A = M[..., elem[:, :, None], col_last[None, None, :]]
        B = C[..., minor[:, :, None], col_prev[None, None, :]]
        C = _einsum("...irj,ir->...ij", A * B, sign)
    return C


def matvec(M, v):
    """Batched M @ v over leading axes."""
    return np.matmul(M, np.asarray(v)[..., None])[..., 0]


def _value(x):
    return getattr(x, "re", x)


def _einsum(subs, *ops):
    from .dual import einsum

    return einsum(subs, *ops)


# ---------------------------------------------------------------------------
# array-level kernels


def wedge_arrays(a, b, p: int, q: int):
    return np.einsum("...i,...j,ijk->...k", a, b, wedge_tensor(p, q), optimize=True)


def wedge_matrix(a: np.ndarray, p: int, q: int) -> np.ndarray:
    """Matrix of c ↦ a ∧ c for a fixed p-form ``a`` acting on q-forms."""
    return np.einsum("i,ijk->kj", a, wedge_tensor(p, q))


def interior_arrays(X, b, q: int):
    """Plain interior product of vectors ``X`` (..., 7) into q-forms ``b``."""
    return np.einsum("...a,aij,...j->...i", X, coordinate_interior(q), b, optimize=True)


def gram(ginv, p: int):
    """Induced inner-product matrix on Λ^p from the inverse metric (gram_1 = g⁻¹)."""
    return compound(ginv, p)


def hodge_arrays(values, p: int, gram_p, vol):
    """⋆ on p-forms: raise indices with gram_p, complement with sign, scale by vol."""
    raised = matvec(gram_p, values)
    return raised @ complement_matrix(p).T * np.asarray(vol)[..., None]


def hodge_matrix_arrays(p: int, gram_p, vol):
    return (complement_matrix(p) @ gram_p) * np.asarray(vol)[..., None, None]


def contract_arrays(a, b, k: int, l: int, g, ginv):
    """Metric contraction a⌟b, the adjoint of c ↦ a∧c for the induced inner products."""
    if k > l:
        raise InvalidArgument(f"cannot contract degree {k} into degree {l}")
    y = np.einsum("...ij,...j->...i", gram(ginv, l), b)
    z = np.einsum("...i,ijk,...k->...j", a, wedge_tensor(k, l - k), y, optimize=True)
    return np.einsum("...ij,...j->...i", compound(g, l - k), z)


# ---------------------------------------------------------------------------
# value types


@dataclass(frozen=True, eq=False)
class AlternatingForm:
    degree: int
    coeffs: np.ndarray

    def __post_init__(self):
        if not 0 <= self.degree <= DIM:
            raise InvalidArgument(f"degree {self.degree} outside 0..{DIM}")
        c = np.array(self.coeffs, dtype=float).reshape(-1)
        if c.shape[0] != size(self.degree):
            raise InvalidArgument(
                f"degree {self.degree} needs {size(self.degree)} coefficients, got {c.shape[0]}"
            )
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    @classmethod
    def zero(cls, degree: int) -> "AlternatingForm":
        return cls(degree, np.zeros(size(degree)))

    @classmethod
    def from_terms(cls, terms: dict[str, float]) -> "AlternatingForm":
        """Build from 1-based index strings, e.g. ``{"127": 1, "146": -1}``."""
        degrees = {len(k) for k in terms}
        if len(degrees) != 1:
            raise InvalidArgument("all terms must share one degree")
        p = degrees.pop()
        c = np.zeros(size(p))
        for key, val in terms.items():
            idx = [int(ch) - 1 for ch in key]
            sign = _sort_sign(idx)
            c[index_of(p)[tuple(sorted(idx))]] += sign * val
        return cls(p, c)

    def _check(self, other):
        if not isinstance(other, AlternatingForm):
            return NotImplemented
        if other.degree != self.degree:
            raise InvalidArgument(f"cannot add degrees {self.degree} and {other.degree}")
        return None

    def __add__(self, other):
        bad = self._check(other)
        if bad is NotImplemented:
            return bad
        return AlternatingForm(self.degree, self.coeffs + other.coeffs)

    def __sub__(self, other):
        bad = self._check(other)
        if bad is NotImplemented:
            return bad
        return AlternatingForm(self.degree, self.coeffs - other.coeffs)

    def __neg__(self):
        return AlternatingForm(self.degree, -self.coeffs)

    def __mul__(self, scalar):
        return AlternatingForm(self.degree, float(scalar) * self.coeffs)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return AlternatingForm(self.degree, self.coeffs / float(scalar))

    def allclose(self, other: "AlternatingForm", atol: float = 1e-12) -> bool:
        return self.degree == other.degree and np.allclose(self.coeffs, other.coeffs, atol=atol, rtol=0)

    def terms(self, tol: float = 1e-12) -> dict[str, float]:
        return {
            "".join(str(i + 1) for i in I): float(v)
            for I, v in zip(basis(self.degree), self.coeffs)
            if abs(v) > tol
        }

    def __repr__(self):
        body = " ".join(f"{v:+g}·e{k}" for k, v in self.terms().items()) or "0"
        return f"AlternatingForm({self.degree}: {body})"


def e(*indices: int) -> AlternatingForm:
    """Basis form e^{i1…ip} from 1-based indices (any order, sign applied)."""
    if not indices:
        return AlternatingForm(0, [1.0])
    return AlternatingForm.from_terms({"".join(map(str, indices)): 1.0})


@dataclass(frozen=True, eq=False)
class MetricTensor:
    g: np.ndarray
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        g = np.array(self.g, dtype=float)
        if g.shape != (DIM, DIM):
            raise InvalidArgument("metric must be 7×7")
        if not np.allclose(g, g.T, atol=1e-12 * max(1.0, np.abs(g).max())):
            raise InvalidArgument("metric must be symmetric")
        g = 0.5 * (g + g.T)
        if np.linalg.eigvalsh(g)[0] <= 0:
            raise InvalidArgument("metric must be positive definite")
        g.flags.writeable = False
        object.__setattr__(self, "g", g)

    @classmethod
    def identity(cls) -> "MetricTensor":
        return cls(np.eye(DIM))

    @property
    def ginv(self) -> np.ndarray:
        if "ginv" not in self._cache:
            self._cache["ginv"] = np.linalg.inv(self.g)
        return self._cache["ginv"]

    def gram(self, p: int) -> np.ndarray:
        key = ("gram", p)
        if key not in self._cache:
            self._cache[key] = gram(self.ginv, p)
        return self._cache[key]

    def inverse_gram(self, p: int) -> np.ndarray:
        key = ("igram", p)
        if key not in self._cache:
            self._cache[key] = compound(self.g, p)
        return self._cache[key]

    @property
    def vol_scale(self) -> float:
        return float(np.sqrt(np.linalg.det(self.g)))


def wedge(a: AlternatingForm, b: AlternatingForm) -> AlternatingForm:
    if a.degree + b.degree > DIM:
        raise InvalidArgument(f"wedge of degrees {a.degree} and {b.degree} exceeds {DIM}")
    return AlternatingForm(a.degree + b.degree, wedge_arrays(a.coeffs, b.coeffs, a.degree, b.degree))


def contract(a: AlternatingForm, b: AlternatingForm, m: MetricTensor | None = None) -> AlternatingForm:
    """a⌟b, defined by ⟨a⌟b, c⟩ = ⟨b, a∧c⟩ in the metric ``m`` (identity if omitted)."""
    m = m or MetricTensor.identity()
    if a.degree > b.degree:
        raise InvalidArgument(f"cannot contract degree {a.degree} into degree {b.degree}")
    return AlternatingForm(
        b.degree - a.degree, contract_arrays(a.coeffs, b.coeffs, a.degree, b.degree, m.g, m.ginv)
    )


def inner(a: AlternatingForm, b: AlternatingForm, m: MetricTensor | None = None) -> float:
    m = m or MetricTensor.identity()
    if a.degree != b.degree:
        raise InvalidArgument(f"inner product of degrees {a.degree} and {b.degree}")
    return float(a.coeffs @ m.gram(a.degree) @ b.coeffs)


def norm2(a: AlternatingForm, m: MetricTensor | None = None) -> float:
    return inner(a, a, m)


def hodge(a: AlternatingForm, m: MetricTensor | None = None) -> AlternatingForm:
    m = m or MetricTensor.identity()
    return AlternatingForm(
        DIM - a.degree, hodge_arrays(a.coeffs, a.degree, m.gram(a.degree), m.vol_scale)
    )


def interior(X: np.ndarray, b: AlternatingForm) -> AlternatingForm:
    """Plain interior product of a vector (components in the e_i basis)."""
    if b.degree == 0:
        raise InvalidArgument("interior product into a 0-form")
    return AlternatingForm(b.degree - 1, interior_arrays(np.asarray(X, float), b.coeffs, b.degree))


def pullback(a: AlternatingForm, A: np.ndarray) -> AlternatingForm:
    """Pullback A*a of a constant form by the linear map x ↦ A x."""
    C = compound(np.asarray(A, float), a.degree)
    return AlternatingForm(a.degree, C.T @ a.coeffs)


def pullback_matrix(A: np.ndarray, p: int) -> np.ndarray:
    return compound(np.asarray(A, float), p).T


def volume_form(m: MetricTensor | None = None) -> AlternatingForm:
    m = m or MetricTensor.identity()
    return AlternatingForm(DIM, [m.vol_scale])


def top_coefficient(a: AlternatingForm) -> float:
    if a.degree != DIM:
        raise InvalidArgument("expected a top-degree form")
    return float(a.coeffs[0])
