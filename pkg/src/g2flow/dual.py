"""Forward-mode dual numbers carrying several tangent directions at once.

A :class:`Dual` holds a value array ``re`` of shape ``S`` and a tangent array
``du`` of shape ``(T,) + S``; tangent ``t`` is the directional derivative of
the value along the t-th seed direction. Only the handful of operations the
metric pipeline needs are provided.
"""

from __future__ import annotations

import numpy as np


class Dual:
    __array_priority__ = 1000

    def __init__(self, re, du):
        self.re = np.asarray(re, dtype=float)
        self.du = np.asarray(du, dtype=float)
        if self.du.shape[1:] != self.re.shape:
            self.du = np.broadcast_to(self.du, self.du.shape[:1] + self.re.shape).copy()

    @classmethod
    def seed(cls, x: np.ndarray, directions: np.ndarray | None = None) -> "Dual":
        """Seed ``x`` (..., n) with tangent directions (T, n); defaults to the unit basis."""
        x = np.asarray(x, dtype=float)
        n = x.shape[-1]
        directions = np.eye(n) if directions is None else np.asarray(directions, float)
        du = np.broadcast_to(
            directions.reshape((directions.shape[0],) + (1,) * (x.ndim - 1) + (n,)),
            (directions.shape[0],) + x.shape,
        ).copy()
        return cls(x, du)

    @property
    def shape(self):
        return self.re.shape

    @property
    def ndim(self):
        return self.re.ndim

    @property
    def ntan(self):
        return self.du.shape[0]

    def _lift(self, ndim):
        extra = ndim - self.re.ndim
        if extra <= 0:
            return self.re, self.du
        re = self.re.reshape((1,) * extra + self.re.shape)
        du = self.du.reshape(self.du.shape[:1] + (1,) * extra + self.re.shape)
        return re, du

    def __getitem__(self, key):
        if not isinstance(key, tuple):
            key = (key,)
        return Dual(self.re[key], self.du[(slice(None),) + key])

    def __neg__(self):
        return Dual(-self.re, -self.du)

    def __add__(self, other):
        if isinstance(other, Dual):
            nd = max(self.ndim, other.ndim)
            ar, ad = self._lift(nd)
            br, bd = other._lift(nd)
            return Dual(ar + br, ad + bd)
        other = np.asarray(other)
        re = self.re + other
        return Dual(re, np.broadcast_to(self._lift(re.ndim)[1], (self.ntan,) + re.shape))

    __radd__ = __add__

    def __sub__(self, other):
        return self + (-other)

    def __rsub__(self, other):
        return (-self) + other

    def __mul__(self, other):
        if isinstance(other, Dual):
            nd = max(self.ndim, other.ndim)
            ar, ad = self._lift(nd)
            br, bd = other._lift(nd)
            return Dual(ar * br, ad * br + ar * bd)
        other = np.asarray(other)
        nd = max(self.ndim, other.ndim)
        ar, ad = self._lift(nd)
        return Dual(ar * other, ad * other)

    __rmul__ = __mul__

    def __truediv__(self, other):
        if isinstance(other, Dual):
            return self * power(other, -1.0)
        return self * (1.0 / np.asarray(other))

    def __rtruediv__(self, other):
        return power(self, -1.0) * other

    def __matmul__(self, other):
        return einsum("...ij,...jk->...ik", self, other)

    def __rmatmul__(self, other):
        return einsum("...ij,...jk->...ik", other, self)

    @property
    def T(self):
        return Dual(self.re.T, np.moveaxis(self.du.T, -1, 0))

    def swap_last(self):
        return Dual(np.swapaxes(self.re, -1, -2), np.swapaxes(self.du, -1, -2))

    def sum(self, axis):
        axes = axis if isinstance(axis, tuple) else (axis,)
        axes_re = tuple(a if a < 0 else a for a in axes)
        axes_du = tuple(a if a < 0 else a + 1 for a in axes)
        return Dual(self.re.sum(axis=axes_re), self.du.sum(axis=axes_du))

    def __repr__(self):
        return f"Dual(shape={self.shape}, ntan={self.ntan})"


def value(x):
    return x.re if isinstance(x, Dual) else np.asarray(x)


def tangent(x, ntan: int | None = None):
    if isinstance(x, Dual):
        return x.du
    x = np.asarray(x)
    return np.zeros(((ntan or 1),) + x.shape)


def _tangent_letter(subs: str) -> str:
    for ch in "ZYXWVUTSRQ":
        if ch not in subs:
            return ch
    raise ValueError("no free einsum letter")


def einsum(subs: str, *ops):
    """``np.einsum`` with the product rule applied to any :class:`Dual` operands."""
    if not any(isinstance(o, Dual) for o in ops):
        return np.einsum(subs, *ops, optimize=True)
    lhs, out = subs.split("->")
    parts = lhs.split(",")
    t = _tangent_letter(subs)
    values = [value(o) for o in ops]
    re = np.einsum(subs, *values, optimize=True)
    du = None
    for k, o in enumerate(ops):
        if not isinstance(o, Dual):
            continue
        sub_k = ",".join(t + p if j == k else p for j, p in enumerate(parts)) + "->" + t + out
        args = [o.du if j == k else values[j] for j in range(len(ops))]
        term = np.einsum(sub_k, *args, optimize=True)
        du = term if du is None else du + term
    return Dual(re, du)


def det(A):
    if not isinstance(A, Dual):
        return np.linalg.det(A)
    d = np.linalg.det(A.re)
    Ainv = np.linalg.inv(A.re)
    return Dual(d, d * np.einsum("...ij,t...ji->t...", Ainv, A.du))


def inv(A):
    if not isinstance(A, Dual):
        return np.linalg.inv(A)
    Ainv = np.linalg.inv(A.re)
    return Dual(Ainv, -(Ainv @ A.du @ Ainv))


def power(x, a: float):
    if not isinstance(x, Dual):
        return np.power(x, a)
    return Dual(np.power(x.re, a), a * np.power(x.re, a - 1.0) * x.du)


def sqrt(x):
    return power(x, 0.5)
