"""Seeded test fields and backgrounds.

All randomness flows through ``numpy.random.Generator(numpy.random.Philox(seed))``
(Philox-4x64 counter-based bit generator), so scenarios are reproducible
from the integer seed alone.
"""

from __future__ import annotations

import itertools

import numpy as np

from .exterior import DIM, compound, size
from .fields import FormField, StructureField, TorusGrid
from .g2 import OMEGA0


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(int(seed)))


def wavevectors(grid: TorusGrid, kmax: int = 1, include_zero: bool = False):
    """Integer wavevectors in the box |k_i| ≤ kmax over active axes, one per ± pair."""
    act = grid.active_axes
    out = []
    for ks in itertools.product(range(-kmax, kmax + 1), repeat=len(act)):
        first = next((k for k in ks if k != 0), 0)
        if first < 0 or (first == 0 and not include_zero):
            continue
        k = np.zeros(DIM, dtype=int)
        for ax, kk in zip(act, ks):
            k[ax] = kk
        out.append(k)
    return out


def trig_field(
    grid: TorusGrid,
    degree: int,
    rng: np.random.Generator,
    kmax: int = 1,
    include_zero: bool = False,
    amplitude: float = 1.0,
) -> FormField:
    """Random real trigonometric polynomial with Gaussian coefficient vectors."""
    xs = grid.coordinates()
    values = np.zeros(grid.n + (size(degree),))
    for k in wavevectors(grid, kmax, include_zero):
        phase = sum(2.0 * np.pi * k[i] * xs[i] / grid.lengths[i] for i in range(DIM))
        a = rng.standard_normal(size(degree))
        b = rng.standard_normal(size(degree))
        values = values + np.cos(phase)[..., None] * a + np.sin(phase)[..., None] * b
    return FormField(grid, degree, amplitude * values)


def trig_vector_field(grid: TorusGrid, rng: np.random.Generator, kmax: int = 1) -> np.ndarray:
    return trig_field(grid, 1, rng, kmax).values


def flat_background(grid: TorusGrid, scale: float = 1.0) -> StructureField:
    return StructureField(FormField.constant(grid, OMEGA0 * scale))


def perturbed(background: StructureField, direction: FormField, eps: float) -> StructureField:
    return StructureField(background.omega + direction * eps)


def random_frame(rng: np.random.Generator, spread: float = 0.3, max_cond: float = 4.0) -> np.ndarray:
    """A ∈ GL(7)₊ near the identity; redrawn until its condition number is at most ``max_cond``."""
    while True:
        A = np.eye(DIM) + spread * rng.standard_normal((DIM, DIM))
        if np.linalg.cond(A) <= max_cond:
            break
    if np.linalg.det(A) < 0:
        A[0] = -A[0]
    return A


def random_positive_form(rng: np.random.Generator, spread: float = 0.3) -> np.ndarray:
    """Coefficients of A*Ω₀ for a random A ∈ GL(7)₊; positive by construction."""
    A = random_frame(rng, spread)
    return compound(A, 3).T @ OMEGA0.coeffs
