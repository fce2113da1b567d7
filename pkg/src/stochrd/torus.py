"""Uniform grids and spectral fields on the unit torus T^d, d in {1, 2}.

Spectral coefficients are stored in real-FFT layout (last axis halved) and
normalised so that the k = 0 coefficient is the spatial mean. All Fourier
multipliers carry the explicit 2*pi of a unit-side torus.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from functools import cached_property
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import scipy.fft as sfft

TWO_PI = 2.0 * np.pi


class NumericError(ArithmeticError):
    """Raised when an operation meets non-finite data."""


@dataclass(frozen=True)
class TorusGrid:
    """Uniform grid with ``n`` points per axis on the unit torus ``T^d``."""

    d: int
    n: int

    def __post_init__(self):
        if self.d not in (1, 2):
            raise ValueError(f"only d in (1, 2) is supported, got d={self.d}")
        if self.n < 8 or self.n & (self.n - 1):
            raise ValueError(f"n must be a power of two >= 8, got n={self.n}")

    @property
    def shape(self) -> tuple[int, ...]:
        return (self.n,) * self.d

    @property
    def size(self) -> int:
        return self.n**self.d

    @property
    def spacing(self) -> float:
        return 1.0 / self.n

    @property
    def axes(self) -> tuple[int, ...]:
        return tuple(range(-self.d, 0))

    @cached_property
    def coords(self) -> np.ndarray:
        """Grid coordinates, shape ``(d, n, ..., n)``."""
        x = np.arange(self.n) / self.n
        return np.stack(np.meshgrid(*([x] * self.d), indexing="ij"))

    @cached_property
    def spectral_shape(self) -> tuple[int, ...]:
        return (self.n,) * (self.d - 1) + (self.n // 2 + 1,)

    @cached_property
    def wavenumbers(self) -> np.ndarray:
        """Integer wavevectors in real-FFT layout, shape ``(d, *spectral_shape)``."""
        full = np.fft.fftfreq(self.n, 1.0 / self.n)
        half = np.fft.rfftfreq(self.n, 1.0 / self.n)
        comps = [full] * (self.d - 1) + [half]
        return np.stack(np.meshgrid(*comps, indexing="ij"))

    @cached_property
    def k_squared(self) -> np.ndarray:
        return np.sum(self.wavenumbers**2, axis=0)

    @cached_property
    def k_abs(self) -> np.ndarray:
        return np.sqrt(self.k_squared)

    @cached_property
    def nyquist_mask(self) -> np.ndarray:
        """True where any component of k sits at the Nyquist frequency n/2."""
        return np.any(np.abs(self.wavenumbers) == self.n // 2, axis=0)

    @cached_property
    def derivative_multipliers(self) -> np.ndarray:
        """``i 2 pi k_j`` per axis with the Nyquist mode zeroed, shape ``(d, ...)``."""
        k = self.wavenumbers.copy()
        k[np.abs(k) == self.n // 2] = 0.0
        return 1j * TWO_PI * k

    @cached_property
    def hermitian_weights(self) -> np.ndarray:
        """Multiplicity of each real-FFT coefficient in the full spectrum."""
        w = np.full(self.spectral_shape, 2.0)
        w[..., 0] = 1.0
        w[..., self.n // 2] = 1.0
        return w

    def rfft(self, values: np.ndarray) -> np.ndarray:
        """Normalised spectral coefficients over the trailing ``d`` axes."""
        return sfft.rfftn(values, axes=self.axes) / self.size

    def irfft(self, coeffs: np.ndarray) -> np.ndarray:
        return sfft.irfftn(coeffs * self.size, s=self.shape, axes=self.axes)

    def dealias_size(self, degree: int) -> int:
        return math.ceil((degree + 1) / 2) * self.n


@dataclass(frozen=True)
class TorusField:
    """An ``ell``-component real field sampled on a :class:`TorusGrid`.

    ``values`` has shape ``(ell, n, ..., n)``; a bare grid-shaped array is
    promoted to a single component. The array is copied and frozen.
    """

    grid: TorusGrid
    values: np.ndarray
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.shape == self.grid.shape:
            v = v[None]
        if v.shape[1:] != self.grid.shape:
            raise ValueError(f"values shape {v.shape} does not match grid {self.grid.shape}")
        v.flags.writeable = False
        object.__setattr__(self, "values", v)

    @classmethod
    def from_function(cls, grid: TorusGrid, fn) -> "TorusField":
        """Build a field from ``fn(*coords)`` evaluated on the grid."""
        return cls(grid, fn(*grid.coords))

    @classmethod
    def from_coeffs(cls, grid: TorusGrid, coeffs: np.ndarray) -> "TorusField":
        out = cls(grid, grid.irfft(coeffs))
        c = np.array(coeffs)
        c.flags.writeable = False
        out._cache["coeffs"] = c
        return out

    @property
    def ell(self) -> int:
        return self.values.shape[0]

    @property
    def coeffs(self) -> np.ndarray:
        c = self._cache.get("coeffs")
        if c is None:
            c = self.grid.rfft(self.values)
            c.flags.writeable = False
            self._cache["coeffs"] = c
        return c

    def mean(self) -> np.ndarray:
        """Spatial mean per component (unit measure)."""
        return self.values.reshape(self.ell, -1).mean(axis=1)


FieldLike = Union[TorusField, np.ndarray]


def _check_finite(arr: np.ndarray):
    if not np.all(np.isfinite(arr)):
        raise NumericError("non-finite values in field")


# ---------------------------------------------------------------------------
# derivatives


def gradient(f: TorusField) -> np.ndarray:
    """Spectral gradient, shape ``(ell, d, n, ..., n)``."""
    _check_finite(f.values)
    g = f.grid
    c = f.coeffs[:, None] * g.derivative_multipliers[None]
    return g.irfft(c)


def divergence(grid: TorusGrid, vec: np.ndarray) -> np.ndarray:
    """Spectral divergence of ``(ell, d, ...)`` vector fields, shape ``(ell, ...)``."""
    _check_finite(vec)
    c = grid.rfft(vec)
    return grid.irfft(np.sum(c * grid.derivative_multipliers[None], axis=1))


def div_a_grad(f: TorusField, a: np.ndarray) -> np.ndarray:
    """``div(a grad u)`` per component.

    A constant ``(d, d)`` matrix is applied as the multiplier ``-4 pi^2 k^T a k``.
    A variable field of shape ``(d, d, n, ..., n)`` is applied via gradient,
    pointwise product and divergence.
    """
    g = f.grid
    a = np.asarray(a, dtype=float)
    if a.shape == (g.d, g.d):
        k = g.wavenumbers
        sym = -(TWO_PI**2) * np.einsum("i...,ij,j...->...", k, a, k)
        # odd-derivative Nyquist modes of off-diagonal terms are dropped
        if g.d == 2 and a[0, 1] + a[1, 0] != 0:
            off = -(TWO_PI**2) * (a[0, 1] + a[1, 0]) * k[0] * k[1]
            sym = sym - np.where(g.nyquist_mask, off, 0.0)
        return g.irfft(f.coeffs * sym)
    grad = gradient(f)
    flux = np.einsum("jk...,lk...->lj...", a, grad)
    return divergence(g, flux)


def laplacian(f: TorusField) -> np.ndarray:
    return f.grid.irfft(f.coeffs * (-(TWO_PI**2) * f.grid.k_squared))


# ---------------------------------------------------------------------------
# norms


@dataclass(frozen=True)
class NormSpec:
    """Which norm to evaluate: ``Lq``, ``SobolevHsq`` or ``BesovBsqp``."""

    kind: str
    s: float = 0.0
    q: float = 2.0
    p: float = 2.0

    def __post_init__(self):
        if self.kind not in ("Lq", "SobolevHsq", "BesovBsqp"):
            raise ValueError(f"unknown norm kind {self.kind!r}")
        if not self.q >= 1:
            raise ValueError("q must lie in [1, inf]")
        if self.kind == "BesovBsqp" and not self.p >= 1:
            raise ValueError("p must lie in [1, inf]")


def lq_norm(values: np.ndarray, q: float) -> float:
    """Mean-power L^q norm of an ``(ell, ...)`` array; pointwise Euclidean in components."""
    mag = np.sqrt(np.sum(np.square(values), axis=0)) if values.shape[0] > 1 else np.abs(values[0])
    if math.isinf(q):
        return float(mag.max())
    if q == 2:
        return float(np.sqrt(np.mean(mag * mag)))
    return float(np.mean(mag**q) ** (1.0 / q))


def bessel_multiplier(grid: TorusGrid, s: float) -> np.ndarray:
    return (1.0 + TWO_PI**2 * grid.k_squared) ** (s / 2.0)


def dyadic_block_index(grid: TorusGrid) -> np.ndarray:
    """Block j of each coefficient: 0 for k = 0, j for 2^(j-1) <= |k| < 2^j."""
    k = grid.k_abs
    j = np.zeros(k.shape, dtype=int)
    nz = k >= 1
    j[nz] = np.floor(np.log2(k[nz])).astype(int) + 1
    # guard against log2 rounding at exact powers of two
    j[nz & (2.0 ** (j - 1) > k)] -= 1
    j[nz & (2.0**j <= k)] += 1
    return j


def besov_blocks(f: TorusField, s: float, q: float) -> np.ndarray:
    """Per-block values ``2^(j s) ||Delta_j u||_{L^q}``."""
    g = f.grid
    idx = dyadic_block_index(g)
    out = []
    for j in range(int(idx.max()) + 1):
        mask = idx == j
        if not mask.any():
            out.append(0.0)
            continue
        block = g.irfft(np.where(mask, f.coeffs, 0.0))
        out.append(2.0 ** (j * s) * lq_norm(block, q))
    return np.array(out)


def norm(f: TorusField, spec: NormSpec) -> float:
    """Discrete L^q, Bessel-potential H^{s,q} or sharp-cutoff Besov B^s_{q,p} norm."""
    _check_finite(f.values)
    if spec.kind == "Lq":
        return lq_norm(f.values, spec.q)
    if spec.kind == "SobolevHsq":
        if spec.s == 0:
            return lq_norm(f.values, spec.q)
        vals = f.grid.irfft(f.coeffs * bessel_multiplier(f.grid, spec.s))
        return lq_norm(vals, spec.q)
    blocks = besov_blocks(f, spec.s, spec.q)
    if math.isinf(spec.p):
        return float(blocks.max())
    return float(np.sum(blocks**spec.p) ** (1.0 / spec.p))


# ---------------------------------------------------------------------------
# dealiased products


def _pad_axis(c: np.ndarray, axis: int, n: int, m: int, half: bool) -> np.ndarray:
    shape = list(c.shape)
    shape[axis] = m // 2 + 1 if half else m
    out = np.zeros(shape, dtype=complex)
    src = np.moveaxis(c, axis, 0)
    dst = np.moveaxis(out, axis, 0)
    h = n // 2
    if half:
        dst[:h] = src[:h]
        dst[h] = 0.5 * src[h]
    else:
        dst[:h] = src[:h]
        dst[m - h + 1 :] = src[h + 1 :]
        dst[h] = 0.5 * src[h]
        dst[m - h] = 0.5 * src[h]
    return out


def _truncate_axis(c: np.ndarray, axis: int, n: int, m: int, half: bool) -> np.ndarray:
    src = np.moveaxis(c, axis, 0)
    h = n // 2
    if half:
        out = src[: h + 1].copy()
        out[h] = 0.0
    else:
        out = np.concatenate([src[:h], np.zeros((1,) + src.shape[1:], complex), src[m - h + 1 :]])
    return np.moveaxis(out, 0, axis)


def pad_coeffs(grid: TorusGrid, coeffs: np.ndarray, m: int) -> np.ndarray:
    """Zero-pad normalised coefficients to an ``m``-point grid (Nyquist split in halves)."""
    c = coeffs
    for i, ax in enumerate(grid.axes):
        c = _pad_axis(c, ax, grid.n, m, half=(i == grid.d - 1))
    return c


def truncate_coeffs(grid: TorusGrid, coeffs: np.ndarray, m: int) -> np.ndarray:
    """Keep modes with |k_j| < n/2 from an ``m``-point spectrum."""
    c = coeffs
    for i, ax in enumerate(grid.axes):
        c = _truncate_axis(c, ax, grid.n, m, half=(i == grid.d - 1))
    return c


def to_fine(grid: TorusGrid, values: np.ndarray, m: int) -> np.ndarray:
    """Trigonometric interpolation of grid values onto the ``m``-point grid."""
    c = pad_coeffs(grid, grid.rfft(values), m)
    return sfft.irfftn(c * m**grid.d, s=(m,) * grid.d, axes=grid.axes)


def from_fine(grid: TorusGrid, values: np.ndarray, m: int) -> np.ndarray:
    """Project values on the ``m``-point grid back to resolved modes of ``grid``."""
    c = sfft.rfftn(values, axes=grid.axes) / m**grid.d
    return grid.irfft(truncate_coeffs(grid, c, m))


def dealias_product(*fields: FieldLike, degree: Optional[int] = None, grid: Optional[TorusGrid] = None) -> TorusField:
    """Alias-free product of up to ``degree`` fields (default: number of factors)."""
    if grid is None:
        grid = next(f.grid for f in fields if isinstance(f, TorusField))
    arrays = [f.values if isinstance(f, TorusField) else np.asarray(f, float) for f in fields]
    degree = len(arrays) if degree is None else degree
    if degree < 2:
        raise ValueError("degree must be at least 2")
    m = grid.dealias_size(degree)
    prod = None
    for a in arrays:
        fine = to_fine(grid, a, m)
        prod = fine if prod is None else prod * fine
    return TorusField(grid, from_fine(grid, prod, m))


# ---------------------------------------------------------------------------
# snapshots


def write_snapshot(path: Union[str, Path], f: TorusField, t: float) -> None:
    """CSV snapshot: header ``d n ell t``, one row per grid point (row-major), one column per component."""
    header = f"d={f.grid.d} n={f.grid.n} ell={f.ell} t={t!r}"
    np.savetxt(path, f.values.reshape(f.ell, -1).T, delimiter=",", header=header, fmt="%.17g")


def read_snapshot(path: Union[str, Path]) -> tuple[TorusField, float]:
    with open(path) as fh:
        header = fh.readline().lstrip("#").split()
    meta = dict(item.split("=", 1) for item in header)
    grid = TorusGrid(int(meta["d"]), int(meta["n"]))
    ell = int(meta["ell"])
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    return TorusField(grid, data.T.reshape((ell,) + grid.shape)), float(meta["t"])
