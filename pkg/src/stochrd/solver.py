"""Time integration of stochastic reaction-diffusion systems with transport noise.

Two spatial modes share one driver:

* ``spectral``: exponential IMEX step. The constant part of the diffusion
  matrix is applied exactly as a Fourier multiplier; everything else is
  explicit. Stratonovich transport noise uses the commutative Milstein
  expansion ``u + B_V u + (1/2) B_V^2 u`` with ``V = sum_n dw_n b_n``, whose
  mean reproduces the Ito correction, so the scheme is exact on single modes
  for constant ``b``.
* ``fd``: a Lie splitting of reaction (explicit), transport (upwind flow of the
  random vector field ``V``) and diffusion (backward Euler with a monotone
  stencil). Every sub-step maps nonnegative data to nonnegative data.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .noise import BrownianDriver, NoiseBasis, check_parabolicity, empty_basis, stratonovich_to_ito
from .reactions import ReactionModel
from .torus import TWO_PI, TorusField, TorusGrid, pad_coeffs, truncate_coeffs
import scipy.fft as sfft


class SolverError(ValueError):
    """A precondition of the solver failed; ``reason`` names it."""

    def __init__(self, reason: str, message: str, report=None):
        self.reason = reason
        self.report = report
        super().__init__(f"{reason}: {message}")


@dataclass(frozen=True)
class SolverConfig:
    dt: float
    T: float
    scheme: str = "exponential"
    spatial: str = "spectral"
    blowup_threshold: float = 1e6
    milstein: bool = True
    monitor_stride: int = 1
    snapshot_stride: int = 0
    substeps: int = 1

    def __post_init__(self):
        if not (self.dt > 0 and self.T > 0):
            raise ValueError("dt and T must be positive")
        if self.scheme not in ("exponential", "explicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.spatial not in ("spectral", "fd"):
            raise ValueError(f"unknown spatial mode {self.spatial!r}")
        if not self.blowup_threshold > 0:
            raise ValueError("blowup_threshold must be positive")
        if self.monitor_stride < 1 or self.substeps < 1 or self.snapshot_stride < 0:
            raise ValueError("strides and substeps must be positive")

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


@dataclass(frozen=True)
class DiffusionSpec:
    """Per-component diffusion ``nu_i I + matrix_i + variable_i(x)``.

    With ``stratonovich`` the noise is read in Stratonovich form and the Ito
    correction of the basis is added to the drift automatically.
    """

    nu: tuple[float, ...]
    matrix: Optional[tuple[np.ndarray, ...]] = None
    variable: Optional[tuple[Optional[np.ndarray], ...]] = None
    stratonovich: bool = True


@dataclass
class SolverState:
    t: float
    u: np.ndarray
    path: int = 0
    step: int = 0
    alive: bool = True
    reason: str = "alive"


# ---------------------------------------------------------------------------
# finite-difference building blocks


def _roll(u, shift, axis):
    return np.roll(u, shift, axis=axis)


def upwind_rate(u: np.ndarray, V: np.ndarray, h: float, d: int) -> np.ndarray:
    """Monotone upwind approximation of ``(V . grad) u`` on ``(ell, ...)`` arrays."""
    out = np.zeros_like(u)
    for j in range(d):
        ax = u.ndim - d + j
        vj = V[:, j]
        fwd = _roll(u, -1, ax) - u
        bwd = u - _roll(u, 1, ax)
        out += (np.maximum(vj, 0.0) * fwd + np.minimum(vj, 0.0) * bwd) / h
    return out


def transport_flow(u: np.ndarray, V: np.ndarray, h: float, d: int, cfl: float = 0.9, c: Optional[np.ndarray] = None) -> np.ndarray:
    """Flow ``u_tau = (V . grad) u`` over ``tau in [0, 1]`` then multiply by ``exp(c)``.

    SSP-RK2 with upwinding; the number of sub-steps keeps the CFL number at
    most ``cfl`` so every stage is a convex combination of grid values.
    """
    speed = np.max(np.sum(np.abs(V), axis=1)) / h if V.size else 0.0
    if speed > 0:
        k = max(1, int(math.ceil(speed / cfl)))
        tau = 1.0 / k
        for _ in range(k):
            u1 = u + tau * upwind_rate(u, V, h, d)
            u2 = u1 + tau * upwind_rate(u1, V, h, d)
            u = 0.5 * (u + u2)
    if c is not None:
        u = u * np.exp(c)
    return u


def assemble_fd_operator(grid: TorusGrid, A: np.ndarray, beta: np.ndarray, c: np.ndarray) -> sp.csc_matrix:
    """Monotone FD matrix for ``A:D^2 u + beta . grad u + c u`` (A, beta, c grid fields).

    Cross derivatives use the seven-point stencil oriented by the sign of
    ``A_12``; first-order terms are upwinded. Requires ``A_jj >= |A_12|`` so
    that all off-diagonal entries are nonnegative.
    """
    d, n, h = grid.d, grid.n, grid.spacing
    shape = grid.shape
    idx = np.arange(grid.size).reshape(shape)
    A = np.broadcast_to(A, (d, d) + shape)
    beta = np.broadcast_to(beta, (d,) + shape)
    c = np.broadcast_to(c, shape)
    rows, cols, vals = [], [], []

    def add(coef, shift):
        nb = idx
        for ax, s in enumerate(shift):
            if s:
                nb = np.roll(nb, -s, axis=ax)
        rows.append(idx.ravel())
        cols.append(nb.ravel())
        vals.append(np.broadcast_to(coef, shape).ravel())

    diag = np.array(c, dtype=float)
    if d == 2:
        off = np.abs(A[0, 1])
        if np.any(A[0, 0] < off - 1e-14) or np.any(A[1, 1] < off - 1e-14):
            raise SolverError("fd-monotonicity", "FD stencil needs A_11, A_22 >= |A_12|")
    for j in range(d):
        e = [0] * d
        e[j] = 1
        ajj = A[j, j] - (np.abs(A[0, 1]) if d == 2 else 0.0)
        bp, bm = np.maximum(beta[j], 0), np.minimum(beta[j], 0)
        add(ajj / h**2 + bp / h, tuple(e))
        add(ajj / h**2 - bm / h, tuple(-x for x in e))
        diag = diag - 2 * ajj / h**2 - bp / h + bm / h
    if d == 2:
        off = np.abs(A[0, 1])
        pos = A[0, 1] >= 0
        add(np.where(pos, off, 0) / h**2, (1, 1))
        add(np.where(pos, off, 0) / h**2, (-1, -1))
        add(np.where(pos, 0, off) / h**2, (1, -1))
        add(np.where(pos, 0, off) / h**2, (-1, 1))
        # axis neighbours of the cross stencil were folded into ajj above
        diag = diag - 2 * off / h**2
    add(diag, (0,) * d)
    L = sp.coo_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(grid.size, grid.size))
    return L.tocsc()


def spectral_derivative(grid: TorusGrid, f: np.ndarray, axis: int) -> np.ndarray:
    """``d f / d x_axis`` of a grid field (leading dims allowed)."""
    return grid.irfft(grid.rfft(f) * grid.derivative_multipliers[axis])


def stratonovich_operator(grid: TorusGrid, a, a_vec, b, c, sigma, nu):
    """Nondivergence Stratonovich coefficients of an Ito linear operator.

    Ito form: ``du = (div(a grad u) + div(a_vec u) + b.grad u + c u) dt
    + sum_k (sigma_k . grad u + nu_k u) dw_k``. Returns ``(A, beta, c_tilde)``
    such that the drift equals ``A:D^2 u + beta.grad u + c_tilde u`` once the
    noise is read in Stratonovich form.
    """
    d = grid.d
    shape = grid.shape
    a = np.asarray(a, dtype=float)
    if a.shape == (d, d):
        a = a.reshape((d, d) + (1,) * d)
    a = np.broadcast_to(a, (d, d) + shape)
    a_vec = np.zeros((d,) + shape) if a_vec is None else np.broadcast_to(a_vec, (d,) + shape)
    b = np.zeros((d,) + shape) if b is None else np.broadcast_to(b, (d,) + shape)
    c = np.zeros(shape) if c is None else np.broadcast_to(c, shape)
    sigma = np.zeros((0, d) + shape) if sigma is None else np.asarray(sigma)
    K = sigma.shape[0]
    nu = np.zeros((K,) + shape) if nu is None else np.broadcast_to(nu, (K,) + shape)
    A = a - 0.5 * np.einsum("kj...,kl...->jl...", sigma, sigma)
    beta = np.array(a_vec + b, dtype=float)
    ctil = np.array(c, dtype=float)
    for j in range(d):
        for i in range(d):
            beta[j] += spectral_derivative(grid, a[i, j], i)
        ctil += spectral_derivative(grid, a_vec[j], j)
    for k in range(K):
        for j in range(d):
            for i in range(d):
                beta[j] -= 0.5 * sigma[k, i] * spectral_derivative(grid, sigma[k, j], i)
            beta[j] -= nu[k] * sigma[k, j]
        dnu = sum(sigma[k, i] * spectral_derivative(grid, nu[k], i) for i in range(d))
        ctil -= 0.5 * (dnu + nu[k] ** 2)
    return A, beta, ctil


class _BackwardEuler:
    """Factorised ``(I - dt L)^{-1}`` for a fixed FD operator."""

    def __init__(self, grid: TorusGrid, L: sp.csc_matrix, dt: float):
        M = sp.identity(grid.size, format="csc") - dt * L
        self.lu = splu(M.tocsc())
        self.shape = grid.shape

    def __call__(self, u: np.ndarray) -> np.ndarray:
        return self.lu.solve(u.ravel()).reshape(self.shape)


# ---------------------------------------------------------------------------
# the reaction-diffusion simulator


def _as_bases(grid: TorusGrid, basis, ell: int) -> list[NoiseBasis]:
    if basis is None:
        basis = empty_basis(grid)
    if isinstance(basis, NoiseBasis):
        return [basis] * ell
    basis = list(basis)
    if len(basis) != ell:
        raise ValueError("need one noise basis per component")
    return basis


class Simulator:
    """Validated integrator for one configuration; paths are run with :meth:`run`."""

    def __init__(
        self,
        grid: TorusGrid,
        model: ReactionModel,
        diffusion: DiffusionSpec,
        config: SolverConfig,
        basis: Union[None, NoiseBasis, Sequence[NoiseBasis]] = None,
    ):
        self.grid, self.model, self.diffusion, self.config = grid, model, diffusion, config
        ell, d = model.ell, grid.d
        self.ell = ell
        self.bases = _as_bases(grid, basis, ell)
        self.shared = all(b is self.bases[0] for b in self.bases)
        self.n_transport = max(b.n_modes for b in self.bases)
        if any(b.n_modes not in (0, self.n_transport) for b in self.bases):
            raise ValueError("per-component bases must have equal mode counts")
        self.n_modes = max(self.n_transport, model.n_noise)
        if model.F is not None and model.flux_dim != d:
            raise SolverError("flux", f"flux has {model.flux_dim} directions but d = {d}")
        if len(diffusion.nu) != ell:
            raise ValueError("need one nu per component")
        self.strat = diffusion.stratonovich
        self.use_milstein = config.milstein and self.strat and config.spatial == "spectral"
        self.div_free = all(b.divergence_free for b in self.bases)
        self._setup_coefficients()
        self.parabolicity = self._check_parabolicity()
        if config.spatial == "spectral":
            self._setup_spectral()
        else:
            self._setup_fd()

    # -- coefficients ----------------------------------------------------

    def _setup_coefficients(self):
        g, d = self.grid, self.grid.d
        eye = np.eye(d)
        self.const = []
        self.var = []
        self.ito = [stratonovich_to_ito(b) for b in self.bases]
        for i in range(self.ell):
            A = self.diffusion.nu[i] * eye
            if self.diffusion.matrix is not None and self.diffusion.matrix[i] is not None:
                A = A + np.asarray(self.diffusion.matrix[i], float)
            v = None
            if self.diffusion.variable is not None and self.diffusion.variable[i] is not None:
                v = np.broadcast_to(np.asarray(self.diffusion.variable[i], float), (d, d) + g.shape)
            self.const.append(A)
            self.var.append(v)

    def ito_matrix(self, i: int) -> np.ndarray:
        """Full Ito diffusion matrix field of component ``i``."""
        g, d = self.grid, self.grid.d
        a = np.broadcast_to(self.const[i].reshape((d, d) + (1,) * d), (d, d) + g.shape).copy()
        if self.var[i] is not None:
            a += self.var[i]
        if self.strat:
            a += self.ito[i].a_b
        return a

    def _check_parabolicity(self):
        reports = []
        for i in range(self.ell):
            rep = check_parabolicity(self.ito_matrix(i), self.bases[i], grid=self.grid)
            if not rep.admissible:
                raise SolverError(
                    "parabolicity",
                    f"component {i}: smallest eigenvalue of a - (1/2) sum b b^T is {rep.nu_min:.3g} <= 0 "
                    f"at grid index {rep.location}",
                    rep,
                )
            reports.append(rep)
        return reports

    # -- spectral ------------------------------------------------------------

    def _setup_spectral(self):
        g, cfg, d = self.grid, self.config, self.grid.d
        k = g.wavenumbers
        self.zero = (slice(None),) + (0,) * d
        self.m_fine = g.dealias_size(max(2, self.model.degree))
        self.sym = []  # -4 pi^2 k^T A k for the implicit part
        self.mean_ab = []
        self.explicit_a = []
        self.r_b = []
        for i in range(self.ell):
            A = self.const[i].copy()
            ab = self.ito[i].a_b
            mean_ab = ab.reshape(d, d, -1).mean(axis=-1) if self.strat else np.zeros((d, d))
            A = A + mean_ab
            self.mean_ab.append(mean_ab)
            sym = -(TWO_PI**2) * np.einsum("i...,ij,j...->...", k, A, k)
            self.sym.append(sym)
            ex = self.var[i]
            rb = None
            if self.strat and not self.use_milstein:
                rest = ab - mean_ab.reshape((d, d) + (1,) * d)
                if np.any(rest != 0):
                    ex = rest if ex is None else ex + rest
                if np.any(self.ito[i].r_b != 0):
                    rb = self.ito[i].r_b
            self.explicit_a.append(ex)
            self.r_b.append(rb)
        self.sym_ab = np.stack([-(TWO_PI**2) * np.einsum("i...,ij,j...->...", k, m, k) for m in self.mean_ab])
        self.sym = np.stack(self.sym)
        if cfg.scheme == "exponential":
            self.S = np.exp(cfg.dt * self.sym)
        else:
            bound = 2.0 / np.max(-self.sym)
            if cfg.dt > bound:
                raise SolverError("stability", f"explicit scheme needs dt <= {bound:.3g}")
            self.S = None
        kmax2 = d * (g.n / 2) ** 2
        for ex in self.explicit_a:
            if ex is not None:
                lam = np.max(np.abs(ex).sum(axis=1))
                est = cfg.dt * TWO_PI**2 * lam * kmax2
                if est > 1.0:
                    raise SolverError(
                        "stability",
                        f"explicit diffusion correction too stiff: dt*4pi^2*|a~|*|k|^2 = {est:.3g} > 1",
                    )
        self.stability_estimate = max(
            (cfg.dt * TWO_PI**2 * np.max(np.abs(ex).sum(axis=1)) * kmax2 for ex in self.explicit_a if ex is not None),
            default=0.0,
        )

    def _rfft_fine(self, v):
        return truncate_coeffs(self.grid, sfft.rfftn(v, axes=self.grid.axes) / self.m_fine**self.grid.d, self.m_fine)

    def _fine(self, c):
        m, g = self.m_fine, self.grid
        return sfft.irfftn(pad_coeffs(g, c, m) * m**g.d, s=(m,) * g.d, axes=g.axes)

    def _transport_hat(self, c: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Spectral coefficients of ``(V . grad) u`` for each component."""
        g = self.grid
        grad = g.irfft(c[:, None] * g.derivative_multipliers[None])
        T = np.sum(V * grad, axis=1)
        out = g.rfft(T)
        if self.div_free:
            out[self.zero] = 0.0
        return out

    def _velocity(self, dw: np.ndarray) -> Optional[np.ndarray]:
        if self.n_transport == 0:
            return None
        w = dw[: self.n_transport]
        if self.shared:
            return self.bases[0].velocity(w)[None]
        return np.stack([b.velocity(w) if b.n_modes else np.zeros((self.grid.d,) + self.grid.shape) for b in self.bases])

    def _spectral_step(self, u: np.ndarray, dw: np.ndarray) -> np.ndarray:
        g, dt, model, d = self.grid, self.config.dt, self.model, self.grid.d
        c = g.rfft(u)
        rhs = c
        if not (model.trivial_f and model.F is None and model.g is None):
            uf = self._fine(c)
            R = 0.0 if model.trivial_f else dt * model.f(uf)
            if model.g is not None:
                R = R + np.tensordot(model.g(uf), dw[: model.n_noise], axes=(1, 0))
            if not np.isscalar(R):
                rhs = rhs + self._rfft_fine(R)
            if model.F is not None:
                Fh = self._rfft_fine(model.F(uf))
                rhs = rhs + dt * np.sum(Fh * g.derivative_multipliers[None], axis=1)
        for i in range(self.ell):
            ex = self.explicit_a[i]
            if ex is not None:
                grad = g.irfft(c[i][None] * g.derivative_multipliers)
                flux = np.einsum("jk...,k...->j...", ex, grad)
                rhs[i] += dt * np.sum(g.rfft(flux) * g.derivative_multipliers, axis=0)
            if self.r_b[i] is not None:
                grad = g.irfft(c[i][None] * g.derivative_multipliers)
                rhs[i] += dt * g.rfft(np.sum(self.r_b[i] * grad, axis=0))
        V = self._velocity(dw)
        if V is not None:
            T1 = self._transport_hat(c, V)
            rhs = rhs + T1
            if self.use_milstein:
                # the mean Ito correction is already inside the implicit multiplier
                rhs = rhs + 0.5 * self._transport_hat(T1, V) - dt * self.sym_ab * c
        if self.S is not None:
            new = rhs * self.S
        else:
            new = rhs + dt * self.sym * c
        return g.irfft(new)

    # -- finite differences ---------------------------------------------------

    def _setup_fd(self):
        g, cfg = self.grid, self.config
        if cfg.scheme != "exponential":
            raise SolverError("scheme", "fd mode always uses backward Euler diffusion")
        self.solvers = []
        cache = {}
        for i in range(self.ell):
            b = self.bases[i]
            sigma = b.fields if b.n_modes else None
            r_b = self.ito[i].r_b if self.strat else None
            A, beta, ctil = stratonovich_operator(g, self.ito_matrix(i), None, r_b, None, sigma, None)
            key = (A.tobytes(), beta.tobytes(), ctil.tobytes())
            if key not in cache:
                cache[key] = _BackwardEuler(g, assemble_fd_operator(g, A, beta, ctil), cfg.dt)
            self.solvers.append(cache[key])

    def _fd_divergence(self, F: np.ndarray) -> np.ndarray:
        g = self.grid
        out = np.zeros(F.shape[:1] + F.shape[2:])
        for j in range(g.d):
            ax = F.ndim - g.d + j - 1
            out += (np.roll(F[:, j], -1, ax) - np.roll(F[:, j], 1, ax)) / (2 * g.spacing)
        return out

    def _fd_step(self, u: np.ndarray, dw: np.ndarray) -> np.ndarray:
        g, dt, model = self.grid, self.config.dt, self.model
        u = u + dt * model.f(u)
        if model.F is not None:
            u = u + dt * self._fd_divergence(model.F(u))
        if model.g is not None:
            u = u + np.tensordot(model.g(u), dw[: model.n_noise], axes=(1, 0))
        V = self._velocity(dw)
        if V is not None:
            u = transport_flow(u, V, g.spacing, g.d)
        return np.stack([self.solvers[i](u[i]) for i in range(self.ell)])

    # -- driver ------------------------------------------------------------------

    def step(self, state: SolverState, dw: np.ndarray) -> SolverState:
        if not state.alive:
            raise RuntimeError("cannot step a dead state")
        # overflow is expected on the way to blow-up and is detected below
        with np.errstate(over="ignore", invalid="ignore"):
            if self.config.spatial == "spectral":
                u = self._spectral_step(state.u, dw)
            else:
                u = self._fd_step(state.u, dw)
        t = (state.step + 1) * self.config.dt
        new = SolverState(t, u, state.path, state.step + 1)
        if not np.all(np.isfinite(u)):
            new.alive, new.reason = False, "numerical"
        elif np.max(np.abs(u)) > self.config.blowup_threshold:
            new.alive, new.reason = False, "blowup"
        return new

    def driver(self, seed: int) -> BrownianDriver:
        return BrownianDriver(seed, self.n_modes, self.config.dt, self.config.substeps)

    def run(self, u0, seed: int = 0, path: int = 0, monitor=None, snapshot: Optional[Callable] = None):
        """Integrate one path to ``T`` or until death; returns ``monitor.report()``."""
        from .diagnostics import Monitor, MonitorSpec

        u = np.array(u0.values if isinstance(u0, TorusField) else u0, dtype=float)
        if u.shape == self.grid.shape:
            u = u[None]
        if u.shape != (self.ell,) + self.grid.shape:
            raise ValueError("initial data has the wrong shape")
        if monitor is None:
            monitor = Monitor(self.grid, MonitorSpec.default(self.ell))
        drv = self.driver(seed)
        state = SolverState(0.0, u, path, 0)
        monitor.record(state, force=True)
        if snapshot is not None:
            snapshot(state)
        stride, snap = self.config.monitor_stride, self.config.snapshot_stride
        for m in range(self.config.n_steps):
            dw = drv.increments(path, m) if self.n_modes else np.zeros(0)
            state = self.step(state, dw)
            last = m == self.config.n_steps - 1
            if not state.alive:
                monitor.record(state, force=True)
                break
            monitor.record(state, force=last or (state.step % stride == 0))
            if snapshot is not None and snap and (state.step % snap == 0 or last):
                snapshot(state)
        return monitor.report(state)


# ---------------------------------------------------------------------------
# linear scalar equations (maximum principle setting)


@dataclass(frozen=True)
class LinearScalarSpec:
    """Coefficients of the linear scalar Ito SPDE

    ``du = (div(a grad u) + div(a_vec u) + b.grad u + c u + f) dt
    + sum_k (sigma_k . grad u + nu_k u) dw_k``.
    """

    grid: TorusGrid
    a: np.ndarray
    u0: np.ndarray
    a_vec: Optional[np.ndarray] = None
    b: Optional[np.ndarray] = None
    c: Optional[np.ndarray] = None
    sigma: Optional[np.ndarray] = None
    nu: Optional[np.ndarray] = None
    f: Optional[np.ndarray] = None

    def _field(self, x, shape):
        if x is None:
            return np.zeros(shape)
        return np.broadcast_to(np.asarray(x, dtype=float), shape)

    @property
    def n_noise(self) -> int:
        return 0 if self.sigma is None else int(np.shape(self.sigma)[0])

    def margin(self) -> float:
        """Smallest eigenvalue of ``a - (1/2) sum_k sigma_k sigma_k^T`` over the grid."""
        g = self.grid
        basis = NoiseBasis(g, self.sigma) if self.n_noise else None
        a = self.a
        if np.ndim(a) == 2:
            a = np.broadcast_to(np.asarray(a, float).reshape((g.d, g.d) + (1,) * g.d), (g.d, g.d) + g.shape)
        return check_parabolicity(a, basis, grid=g).nu_min


def _constant_part(x):
    return float(np.mean(x)) if x is not None else 0.0


def run_linear_scalar(spec: LinearScalarSpec, config: SolverConfig, seed: int = 0, path: int = 0, monitor=None):
    """Integrate the linear scalar SPDE and record ``min u`` at every step."""
    from .diagnostics import Monitor, MonitorSpec

    g, d, dt = spec.grid, spec.grid.d, config.dt
    gamma = spec.margin()
    if not gamma > 0:
        raise SolverError("parabolicity", f"margin gamma = {gamma:.3g} <= 0")
    u0 = np.asarray(spec.u0, float).reshape(g.shape)
    if np.any(u0 < 0):
        raise SolverError("initial-data", "u0 must be nonnegative")
    if spec.f is not None and np.any(np.asarray(spec.f) < 0):
        raise SolverError("forcing", "f must be nonnegative")
    K = spec.n_noise
    shape = g.shape
    a = spec.a
    if np.ndim(a) == 2:
        a = np.broadcast_to(np.asarray(a, float).reshape((d, d) + (1,) * d), (d, d) + shape)
    a = np.array(a, dtype=float)
    a_vec = spec._field(spec.a_vec, (d,) + shape)
    b = spec._field(spec.b, (d,) + shape)
    c = spec._field(spec.c, shape)
    f = spec._field(spec.f, shape)
    sigma = spec._field(spec.sigma, (K, d) + shape) if K else np.zeros((0, d) + shape)
    nu = spec._field(spec.nu, (K,) + shape) if K else np.zeros((0,) + shape)
    cbar = _constant_part(c)
    growth = math.exp(cbar * dt)

    if config.spatial == "fd":
        A, beta, ctil = stratonovich_operator(g, a, a_vec, b, c, sigma, nu)
        L = assemble_fd_operator(g, A, beta, ctil - cbar)
        if dt * max(0.0, float(np.max(ctil - cbar))) >= 1:
            raise SolverError("stability", "dt too large for a monotone backward Euler step")
        solve = _BackwardEuler(g, L, dt)

        def advance(u, dw):
            u = u + dt * f
            if K:
                V = np.tensordot(dw, sigma, axes=(0, 0))[None]
                cV = np.tensordot(dw, nu, axes=(0, 0))[None]
                u = transport_flow(u[None], V, g.spacing, d, c=cV)[0]
            return growth * solve(u)

    else:
        abar = a.reshape(d, d, -1).mean(axis=-1)
        k = g.wavenumbers
        S = np.exp(dt * (-(TWO_PI**2) * np.einsum("i...,ij,j...->...", k, abar, k) + cbar))
        a_rest = a - abar.reshape((d, d) + (1,) * d)
        c_rest = c - cbar
        D = g.derivative_multipliers
        has_rest = bool(np.any(a_rest != 0))

        def advance(u, dw):
            ch = g.rfft(u)
            grad = g.irfft(ch[None] * D)
            drift = c_rest * u + f + np.sum(b * grad, axis=0)
            flux = a_vec * u
            if has_rest:
                flux = flux + np.einsum("jk...,k...->j...", a_rest, grad)
            rhs = ch + dt * (g.rfft(drift) + np.sum(g.rfft(flux) * D, axis=0))
            if K:
                noise = np.tensordot(dw, np.sum(sigma * grad[None], axis=1) + nu * u[None], axes=(0, 0))
                rhs = rhs + g.rfft(noise)
            return g.irfft(rhs * S)

    if monitor is None:
        monitor = Monitor(g, MonitorSpec.default(1))
    drv = BrownianDriver(seed, K, dt, config.substeps)
    state = SolverState(0.0, u0[None].copy(), path, 0)
    monitor.record(state, force=True)
    for m in range(config.n_steps):
        dw = drv.increments(path, m) if K else np.zeros(0)
        with np.errstate(over="ignore", invalid="ignore"):
            u = advance(state.u[0], dw)
        state = SolverState((m + 1) * dt, u[None], path, m + 1)
        if not np.all(np.isfinite(u)):
            state.alive, state.reason = False, "numerical"
        elif np.max(np.abs(u)) > config.blowup_threshold:
            state.alive, state.reason = False, "blowup"
        monitor.record(state, force=True)
        if not state.alive:
            break
    return monitor.report(state)


def random_linear_scalar(grid: TorusGrid, gamma: float, rng: np.random.Generator, n_noise: int = 2, modes: int = 2, strength: float = 0.3) -> LinearScalarSpec:
    """Random smooth bounded coefficients with margin at least ``gamma``.

    Coefficient fields are random trigonometric polynomials of low degree.
    The Stratonovich part ``A = a - (1/2) sum sigma sigma^T`` is built as
    ``gamma I + P`` with ``P`` pointwise positive semidefinite and diagonally
    dominant, so both the margin and the FD monotonicity hold by construction.
    The initial data is ``max(sin(2 pi x_1), 0)`` and the forcing is 0.1.
    """
    d, shape = grid.d, grid.shape
    x = grid.coords

    def smooth(scale=1.0):
        out = np.zeros(shape)
        for _ in range(modes):
            kvec = rng.integers(-2, 3, size=d)
            phase = rng.uniform(0, 2 * np.pi)
            out += rng.uniform(-1, 1) * np.cos(2 * np.pi * np.tensordot(kvec, x, axes=(0, 0)) + phase)
        return scale * out / modes

    p = [strength * (1 + smooth()) for _ in range(d)]  # in [0, 2 strength]
    A = np.zeros((d, d) + shape)
    for j in range(d):
        A[j, j] = gamma + p[j]
    if d == 2:
        A[0, 1] = A[1, 0] = np.minimum(p[0], p[1]) * np.tanh(smooth())
    sigma = np.stack([np.stack([smooth(strength) for _ in range(d)]) for _ in range(n_noise)])
    a = A + 0.5 * np.einsum("kj...,kl...->jl...", sigma, sigma)
    return LinearScalarSpec(
        grid=grid,
        a=a,
        u0=np.maximum(np.sin(2 * np.pi * x[0]), 0.0),
        a_vec=np.stack([smooth(strength) for _ in range(d)]),
        b=np.stack([smooth(strength) for _ in range(d)]),
        c=smooth(strength),
        sigma=sigma,
        nu=np.stack([smooth(strength) for _ in range(n_noise)]),
        f=np.full(shape, 0.1),
    )
