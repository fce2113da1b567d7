"""Brownian drivers, transport-noise bases and the Stratonovich-to-Ito correction."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .torus import TorusGrid, divergence


@dataclass(frozen=True)
class BrownianDriver:
    """Counter-based source of Brownian increments.

    The increment vector for ``(path, step)`` depends only on
    ``(master_seed, path, step)``: each fine step seeds a Philox generator
    keyed by ``(master_seed, path)`` with the step number in its counter. With
    ``substeps > 1`` a step's increment is the sum of that many fine
    increments of size ``dt / substeps``, so runs at ``dt`` and ``dt / 2``
    (with twice the substeps) see the same Brownian path.
    """

    master_seed: int
    n_modes: int
    dt: float
    substeps: int = 1

    def __post_init__(self):
        if not self.dt > 0:
            raise ValueError("dt must be positive")
        if self.n_modes < 0 or self.substeps < 1:
            raise ValueError("n_modes must be >= 0 and substeps >= 1")
        if not 0 <= self.master_seed < 2**64:
            raise ValueError("master_seed must fit in 64 unsigned bits")

    def fine_normals(self, path: int, fine_step: int) -> np.ndarray:
        """Standard normals for one fine step; entry i drives mode i."""
        bg = np.random.Philox(
            key=np.array([self.master_seed, path], dtype=np.uint64),
            counter=np.array([0, fine_step, 0, 0], dtype=np.uint64),
        )
        return np.random.Generator(bg).standard_normal(self.n_modes)

    def increments(self, path: int, step: int) -> np.ndarray:
        """Increments ``Delta w`` of all modes over step ``step`` (i.i.d. N(0, dt))."""
        if self.n_modes == 0:
            return np.zeros(0)
        s = self.substeps
        total = np.zeros(self.n_modes)
        for j in range(s):
            total += self.fine_normals(path, step * s + j)
        return total * math.sqrt(self.dt / s)


@dataclass(frozen=True)
class NoiseBasis:
    """A finite family of transport fields ``b_n``, shape ``(M, d, n, ..., n)``."""

    grid: TorusGrid
    fields: np.ndarray
    divergence_free: bool = False
    spectral_slope: float = 0.0
    amplitude: float = 0.0
    tail_bound: float = 0.0

    def __post_init__(self):
        f = np.asarray(self.fields, dtype=float)
        if f.size == 0:
            f = np.zeros((0, self.grid.d) + self.grid.shape)
        if f.shape[1:] != (self.grid.d,) + self.grid.shape:
            raise ValueError(f"basis shape {f.shape} does not match grid")
        f.flags.writeable = False
        object.__setattr__(self, "fields", f)

    @property
    def n_modes(self) -> int:
        return self.fields.shape[0]

    def sup_bound(self) -> float:
        """``sum_n sup_x |b_n(x)|^2`` over the family."""
        if self.n_modes == 0:
            return 0.0
        return float(np.sum(np.max(np.sum(self.fields**2, axis=1).reshape(self.n_modes, -1), axis=1)))

    def velocity(self, dw: np.ndarray) -> np.ndarray:
        """``sum_n dw_n b_n``, shape ``(d, ...)``."""
        return np.tensordot(dw, self.fields, axes=(0, 0))


@dataclass(frozen=True)
class ItoCorrection:
    a_b: np.ndarray  # (d, d, ...)
    r_b: np.ndarray  # (d, ...)


@dataclass(frozen=True)
class ParabolicityReport:
    nu_min: float
    location: tuple[int, ...]

    @property
    def admissible(self) -> bool:
        return self.nu_min > 0


def empty_basis(grid: TorusGrid) -> NoiseBasis:
    return NoiseBasis(grid, np.zeros((0, grid.d) + grid.shape), divergence_free=True)


def kraichnan_basis(grid: TorusGrid, k_max: int, slope: float, amplitude: float) -> NoiseBasis:
    """Trigonometric transport basis with spectral decay ``|k|^(-slope)``.

    For d = 2 each wavevector ``0 < |k| <= k_max`` (one per +/- pair) yields
    the divergence-free fields ``amplitude |k|^-slope (k_perp/|k|) cos(2 pi k.x)``
    and the same with ``sin``. For d = 1 the scalar fields
    ``amplitude k^-slope cos/sin(2 pi k x)`` are used; they have zero mean
    but are not divergence-free.
    """
    if grid.d not in (1, 2):
        raise ValueError(f"kraichnan basis unsupported for d={grid.d}")
    if k_max < 1:
        raise ValueError("k_max must be at least 1")
    if k_max >= grid.n // 2:
        raise ValueError("k_max must be below the Nyquist wavenumber")
    if amplitude == 0:
        return empty_basis(grid)
    x = grid.coords
    fields = []
    if grid.d == 2:
        for k0 in range(0, k_max + 1):
            for k1 in range(-k_max, k_max + 1):
                if (k0 == 0 and k1 <= 0) or k0 * k0 + k1 * k1 > k_max * k_max:
                    continue
                kn = math.hypot(k0, k1)
                scale = amplitude * kn ** (-slope)
                perp = np.array([-k1, k0]) / kn
                phase = 2 * np.pi * (k0 * x[0] + k1 * x[1])
                for trig in (np.cos, np.sin):
                    fields.append(scale * perp[:, None, None] * trig(phase)[None])
        tail = math.inf if slope <= 1 else amplitude**2 * 2 * np.pi * k_max ** (2 - 2 * slope) / (2 * slope - 2)
        div_free = True
    else:
        for k in range(1, k_max + 1):
            scale = amplitude * k ** (-slope)
            for trig in (np.cos, np.sin):
                fields.append(scale * trig(2 * np.pi * k * x))
        tail = math.inf if slope <= 0.5 else 2 * amplitude**2 * k_max ** (1 - 2 * slope) / (2 * slope - 1)
        div_free = False
    return NoiseBasis(grid, np.array(fields), div_free, float(slope), float(amplitude), float(tail))


def constant_basis(grid: TorusGrid, vectors: Sequence[Sequence[float]]) -> NoiseBasis:
    """Spatially constant transport fields ``b_n = vectors[n]``."""
    v = np.asarray(vectors, dtype=float).reshape(-1, grid.d)
    fields = np.broadcast_to(v.reshape(v.shape + (1,) * grid.d), v.shape + grid.shape).copy()
    return NoiseBasis(grid, fields, divergence_free=True)


def half_sum_bbT(basis: NoiseBasis) -> np.ndarray:
    """``(1/2) sum_n b_n b_n^T`` pointwise, shape ``(d, d, ...)``."""
    b = basis.fields
    return 0.5 * np.einsum("mj...,mk...->jk...", b, b)


def stratonovich_to_ito(basis: NoiseBasis) -> ItoCorrection:
    """Drift correction turning Stratonovich transport into Ito form.

    ``a_b = (1/2) sum b b^T`` and ``r_b = -(1/2) sum (div b) b``.
    """
    g = basis.grid
    a_b = half_sum_bbT(basis)
    if basis.divergence_free or basis.n_modes == 0:
        r_b = np.zeros((g.d,) + g.shape)
    else:
        div = divergence(g, basis.fields)
        r_b = -0.5 * np.einsum("m...,mj...->j...", div, basis.fields)
    return ItoCorrection(a_b, r_b)


def _min_eig(m: np.ndarray, d: int) -> np.ndarray:
    if d == 1:
        return m[0, 0]
    half_tr = 0.5 * (m[0, 0] + m[1, 1])
    rad = np.hypot(0.5 * (m[0, 0] - m[1, 1]), 0.5 * (m[0, 1] + m[1, 0]))
    return half_tr - rad


def check_parabolicity(a: np.ndarray, basis: Optional[NoiseBasis], grid: Optional[TorusGrid] = None) -> ParabolicityReport:
    """Smallest eigenvalue over the grid of ``a(x) - (1/2) sum b_n(x) b_n(x)^T``.

    ``a`` is a constant ``(d, d)`` matrix or a ``(d, d, n, ..., n)`` field.
    """
    grid = grid or basis.grid
    a = np.asarray(a, dtype=float)
    if a.shape == (grid.d, grid.d):
        a = np.broadcast_to(a.reshape(a.shape + (1,) * grid.d), a.shape + grid.shape)
    if not np.allclose(a, np.swapaxes(a, 0, 1), rtol=0, atol=1e-12):
        raise ValueError("diffusion matrix must be symmetric")
    m = a - half_sum_bbT(basis) if basis is not None and basis.n_modes else a
    eig = np.broadcast_to(_min_eig(m, grid.d), grid.shape)
    loc = np.unravel_index(int(np.argmin(eig)), grid.shape)
    return ParabolicityReport(float(eig[loc]), tuple(int(i) for i in loc))
