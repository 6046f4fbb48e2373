"""Discrete exterior calculus on a periodic 7-torus grid.

Field values are stored as arrays of shape ``(*n, C(7,p))`` (node-major,
axis 1 slowest). Operators also accept extra leading batch axes, which the
dense operator assembly uses to push many basis fields through at once.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass
from functools import cached_property
from math import prod

import numpy as np

from .exterior import DIM, InvalidArgument, coordinate_wedge, matvec, size
from .g2 import G2Structure

SPECTRAL = 0  # fd_order value selecting exact Fourier differentiation (test oracle only)


@dataclass(frozen=True)
class TorusGrid:
    n: tuple[int, ...]
    lengths: tuple[float, ...] = (1.0,) * DIM
    fd_order: int = 4

    def __post_init__(self):
        n = tuple(int(k) for k in self.n)
        lengths = tuple(float(x) for x in self.lengths)
        if len(n) != DIM or len(lengths) != DIM:
            raise InvalidArgument("grid needs 7 node counts and 7 lengths")
        if min(n) < 1:
            raise InvalidArgument("node counts must be positive")
        if min(lengths) <= 0:
            raise InvalidArgument("periods must be positive")
        if self.fd_order not in (2, 4, SPECTRAL):
            raise InvalidArgument(f"fd_order must be 2 or 4, got {self.fd_order}")
        object.__setattr__(self, "n", n)
        object.__setattr__(self, "lengths", lengths)

    @classmethod
    def make(cls, active: dict[int, int] | tuple, lengths=None, fd_order: int = 4) -> "TorusGrid":
        """Grid with the given node counts, e.g. ``TorusGrid.make((16, 16))``; missing axes get n=1."""
        if isinstance(active, dict):
            n = [1] * DIM
            for k, v in active.items():
                n[k] = v
        else:
            n = list(active) + [1] * (DIM - len(active))
        if lengths is None:
            lengths = (1.0,) * DIM
        elif np.isscalar(lengths):
            lengths = (float(lengths),) * DIM
        else:
            lengths = tuple(lengths) + (1.0,) * (DIM - len(lengths))
        return cls(tuple(n), tuple(lengths), fd_order)

    @property
    def h(self) -> np.ndarray:
        return np.array(self.lengths) / np.array(self.n)

    @property
    def shape(self) -> tuple[int, ...]:
        return self.n

    @property
    def node_count(self) -> int:
        return prod(self.n)

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.h))

    @property
    def volume(self) -> float:
        return float(np.prod(self.lengths))

    @property
    def active_axes(self) -> tuple[int, ...]:
        return tuple(i for i in range(DIM) if self.n[i] > 1)

    @property
    def min_spacing(self) -> float:
        act = self.active_axes
        return float(min(self.h[i] for i in act)) if act else float(min(self.lengths))

    def with_order(self, fd_order: int) -> "TorusGrid":
        return TorusGrid(self.n, self.lengths, fd_order)

    def refined(self, factor: int = 2) -> "TorusGrid":
        return TorusGrid(tuple(k * factor if k > 1 else 1 for k in self.n), self.lengths, self.fd_order)

    def coordinates(self) -> list[np.ndarray]:
        """Broadcastable node coordinates x_i (shape ``n`` after broadcasting)."""
        out = []
        for i in range(DIM):
            shape = [1] * DIM
            shape[i] = self.n[i]
            out.append((np.arange(self.n[i]) * self.h[i]).reshape(shape))
        return out

    # ---------------------------------------------------------------------
    def partial(self, values: np.ndarray, axis: int) -> np.ndarray:
        """Derivative along grid axis ``axis`` of an array laid out as (..., *n, C)."""
        if self.n[axis] == 1:
            return np.zeros_like(values)
        ax = axis - DIM - 1
        h = self.h[axis]
        if self.fd_order == 2:
            return (np.roll(values, -1, ax) - np.roll(values, 1, ax)) / (2.0 * h)
        if self.fd_order == 4:
            near = np.roll(values, -1, ax) - np.roll(values, 1, ax)
            far = np.roll(values, -2, ax) - np.roll(values, 2, ax)
            return (8.0 * near - far) / (12.0 * h)
        return self._spectral_partial(values, axis, ax)

    def _spectral_partial(self, values, axis, ax):
        n = self.n[axis]
        k = np.fft.fftfreq(n, d=1.0 / n)
        if n % 2 == 0:
            k[n // 2] = 0.0
        mult = 2j * np.pi * k / self.lengths[axis]
        shape = [1] * values.ndim
        shape[ax] = n
        return np.real(np.fft.ifft(np.fft.fft(values, axis=ax) * mult.reshape(shape), axis=ax))

    def symbol(self, k: np.ndarray) -> np.ndarray:
        """Stencil symbol s(k): ∂_i e^{i κ·x} = i s_i e^{i κ·x}, κ_i = 2π k_i / L_i."""
        k = np.asarray(k, float)
        out = np.zeros(DIM)
        for i in range(DIM):
            if self.n[i] == 1:
                continue
            theta = 2.0 * np.pi * k[i] / self.n[i]
            h = self.h[i]
            if self.fd_order == 2:
                out[i] = np.sin(theta) / h
            elif self.fd_order == 4:
                out[i] = (8.0 * np.sin(theta) - np.sin(2.0 * theta)) / (6.0 * h)
            else:
                kk = k[i] if not (self.n[i] % 2 == 0 and abs(k[i]) == self.n[i] // 2) else 0.0
                out[i] = 2.0 * np.pi * kk / self.lengths[i]
        return out

    def stencil_bound(self) -> float:
        """Upper bound of Σ_i s_i(k)² over all wavevectors, times h_min²."""
        c2 = {2: 1.0, 4: 1.883, SPECTRAL: np.pi**2}[self.fd_order]
        hmin = self.min_spacing
        return float(sum(c2 * (hmin / self.h[i]) ** 2 for i in self.active_axes))


@dataclass(frozen=True, eq=False)
class FormField:
    grid: TorusGrid
    degree: int
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        want = self.grid.n + (size(self.degree),)
        if v.shape[-(DIM + 1):] != want:
            raise InvalidArgument(f"field values must end in shape {want}, got {v.shape}")
        object.__setattr__(self, "values", v)

    @classmethod
    def zeros(cls, grid: TorusGrid, degree: int) -> "FormField":
        return cls(grid, degree, np.zeros(grid.n + (size(degree),)))

    @classmethod
    def constant(cls, grid: TorusGrid, form) -> "FormField":
        """Field equal to the AlternatingForm ``form`` at every node."""
        return cls(grid, form.degree, np.broadcast_to(form.coeffs, grid.n + form.coeffs.shape).copy())

    @property
    def batch_shape(self):
        return self.values.shape[: -(DIM + 1)]

    def _same(self, other: "FormField"):
        if not isinstance(other, FormField):
            return False
        if other.grid != self.grid or other.degree != self.degree:
            raise InvalidArgument("field arithmetic needs matching grids and degrees")
        return True

    def __add__(self, other):
        if not self._same(other):
            return NotImplemented
        return FormField(self.grid, self.degree, self.values + other.values)

    def __sub__(self, other):
        if not self._same(other):
            return NotImplemented
        return FormField(self.grid, self.degree, self.values - other.values)

    def __neg__(self):
        return FormField(self.grid, self.degree, -self.values)

    def __mul__(self, scalar):
        return FormField(self.grid, self.degree, self.values * scalar)

    __rmul__ = __mul__

    def __truediv__(self, scalar):
        return FormField(self.grid, self.degree, self.values / scalar)

    def with_values(self, values) -> "FormField":
        return FormField(self.grid, self.degree, values)

    def max_abs(self) -> float:
        return float(np.max(np.abs(self.values))) if self.values.size else 0.0


class StructureField:
    """A positive 3-form field together with its per-node G2 structure."""

    def __init__(self, omega: FormField, check: bool = True):
        if omega.degree != 3:
            raise InvalidArgument("a structure field needs a 3-form")
        if omega.batch_shape:
            raise InvalidArgument("structure fields cannot carry batch axes")
        self.omega = omega
        self.grid = omega.grid
        self.geom = G2Structure(omega.values, check=check)

    @classmethod
    def constant(cls, grid: TorusGrid, form) -> "StructureField":
        return cls(FormField.constant(grid, form))

    @cached_property
    def theta(self) -> FormField:
        return FormField(self.grid, 4, self.geom.theta)

    @cached_property
    def is_constant(self) -> bool:
        v = self.omega.values.reshape(-1, 35)
        return bool(np.all(v == v[0]))

    def scaled(self, lam: float) -> "StructureField":
        return StructureField(self.omega * lam)


# ---------------------------------------------------------------------------
# operators


def _apply(matrix: np.ndarray, values: np.ndarray) -> np.ndarray:
    """Apply a pointwise matrix (constant (a,b) or per-node (*n,a,b)) to field values."""
    if matrix.ndim == 2:
        return values @ matrix.T
    return matvec(matrix, values)


def pointwise(f: FormField, matrix: np.ndarray, degree: int) -> FormField:
    return FormField(f.grid, degree, _apply(matrix, f.values))


def d(f: FormField) -> FormField:
    """Exterior derivative by per-axis central differences wedged into the derivative slot."""
    if f.degree >= DIM:
        raise InvalidArgument("d of a 7-form")
    E = coordinate_wedge(f.degree)
    out = np.zeros(f.values.shape[:-1] + (size(f.degree + 1),))
    for i in f.grid.active_axes:
        out += f.grid.partial(f.values, i) @ E[i].T
    return FormField(f.grid, f.degree + 1, out)


def d_transpose(grid: TorusGrid, values: np.ndarray, degree: int) -> np.ndarray:
    """Euclidean transpose of d acting on (degree+1)-form values, giving degree-form values."""
    E = coordinate_wedge(degree)
    out = np.zeros(values.shape[:-1] + (size(degree),))
    for i in grid.active_axes:
        out -= grid.partial(values @ E[i], i)
    return out


def _check_grid(f: FormField, s: StructureField):
    if f.grid != s.grid:
        raise InvalidArgument("field and structure live on different grids")


def hodge_field(f: FormField, s: StructureField) -> FormField:
    _check_grid(f, s)
    return FormField(f.grid, DIM - f.degree, s.geom.hodge(f.values, f.degree))


def codiff_adjoint(f: FormField, s: StructureField) -> FormField:
    """Exact adjoint of the discrete d under the weighted discrete L² product."""
    _check_grid(f, s)
    p = f.degree
    if p == 0:
        raise InvalidArgument("codifferential of a 0-form")
    geom = s.geom
    weighted = _apply(geom.gram(p), f.values) * geom.vol[..., None]
    z = d_transpose(f.grid, weighted, p - 1)
    out = _apply(geom.inverse_gram(p - 1), z) / geom.vol[..., None]
    return FormField(f.grid, p - 1, out)


def codiff_analytic(f: FormField, s: StructureField) -> FormField:
    """(−1)^p ⋆ d ⋆ with pointwise Hodge stars."""
    _check_grid(f, s)
    p = f.degree
    if p == 0:
        raise InvalidArgument("codifferential of a 0-form")
    out = hodge_field(d(hodge_field(f, s)), s)
    return out * (-1.0) ** p


def laplacian(f: FormField, s: StructureField) -> FormField:
    """dδ + δd with the adjoint codifferential."""
    p = f.degree
    out = FormField(f.grid, p, np.zeros_like(f.values))
    if p > 0:
        out = out + d(codiff_adjoint(f, s))
    if p < DIM:
        out = out + codiff_adjoint(d(f), s)
    return out


def laplacian_analytic(f: FormField, s: StructureField) -> FormField:
    p = f.degree
    out = FormField(f.grid, p, np.zeros_like(f.values))
    if p > 0:
        out = out + d(codiff_analytic(f, s))
    if p < DIM:
        out = out + codiff_analytic(d(f), s)
    return out


def _grid_sum(x: np.ndarray) -> np.ndarray:
    return x.reshape(x.shape[: x.ndim - DIM] + (-1,)).sum(axis=-1)


def l2_inner(a: FormField, b: FormField, s: StructureField):
    """Σ_nodes ⟨a,b⟩_g · vol · Πh."""
    if a.grid != b.grid or a.degree != b.degree:
        raise InvalidArgument("L² product needs matching grids and degrees")
    _check_grid(a, s)
    pw = np.einsum("...i,...i->...", _apply(s.geom.gram(a.degree), a.values), b.values)
    out = _grid_sum(pw * s.geom.vol) * a.grid.cell_volume
    return float(out) if np.ndim(out) == 0 else out


def l2_norm(a: FormField, s: StructureField):
    return np.sqrt(np.maximum(l2_inner(a, a, s), 0.0))


def wedge_fields(a: FormField, b: FormField) -> FormField:
    from .exterior import wedge_arrays

    if a.grid != b.grid:
        raise InvalidArgument("wedge of fields on different grids")
    return FormField(a.grid, a.degree + b.degree, wedge_arrays(a.values, b.values, a.degree, b.degree))


def interior_fields(X: np.ndarray, f: FormField) -> FormField:
    """Plain interior product of a vector field X (…, *n, 7) into f."""
    from .exterior import interior_arrays

    if f.degree == 0:
        raise InvalidArgument("interior product into a 0-form")
    return FormField(f.grid, f.degree - 1, interior_arrays(X, f.values, f.degree))


# ---------------------------------------------------------------------------
# serialization

_MAGIC = b"G2FF"
_VERSION = 1
_HEADER = struct.Struct("<4sIII7I7d")


def dumps_field(f: FormField) -> bytes:
    """Binary layout (little endian): magic 'G2FF', u32 version, u32 degree,
    u32 fd_order, 7×u32 node counts, 7×f64 periods, then the node-major f64
    coefficient array (axis 1 slowest, coefficients fastest)."""
    if f.batch_shape:
        raise InvalidArgument("only unbatched fields can be serialized")
    head = _HEADER.pack(_MAGIC, _VERSION, f.degree, f.grid.fd_order, *f.grid.n, *f.grid.lengths)
    return head + np.ascontiguousarray(f.values, dtype="<f8").tobytes()


def loads_field(blob: bytes) -> FormField:
    magic, version, degree, order, *rest = _HEADER.unpack_from(blob, 0)
    if magic != _MAGIC or version != _VERSION:
        raise InvalidArgument("not a serialized form field")
    n, lengths = tuple(rest[:DIM]), tuple(rest[DIM:])
    grid = TorusGrid(n, lengths, order)
    data = np.frombuffer(blob, dtype="<f8", offset=_HEADER.size)
    return FormField(grid, degree, data.reshape(n + (size(degree),)).astype(float))


def save_field(path, f: FormField) -> None:
    with open(path, "wb") as fh:
        fh.write(dumps_field(f))


def load_field(path) -> FormField:
    with open(path, "rb") as fh:
        return loads_field(fh.read())
