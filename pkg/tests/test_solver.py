import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochrd.diagnostics import Monitor, MonitorSpec
from stochrd.noise import NoiseBasis, constant_basis, kraichnan_basis
from stochrd.reactions import Stoichiometry, lotka_volterra, mass_action, scalar_power
from stochrd.solver import (
    DiffusionSpec,
    LinearScalarSpec,
    Simulator,
    SolverConfig,
    SolverError,
    assemble_fd_operator,
    random_linear_scalar,
    run_linear_scalar,
    stratonovich_operator,
    transport_flow,
    upwind_rate,
)
from stochrd.torus import TorusGrid

G1 = TorusGrid(1, 16)
G2 = TorusGrid(2, 16)
HEAT = scalar_power(3, sign=0.0)


def quiet(grid, ell=1):
    return Monitor(grid, MonitorSpec.default(ell, norms=False))


def test_config_validation():
    with pytest.raises(ValueError):
        SolverConfig(dt=0, T=1)
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, T=1, scheme="rk4")
    with pytest.raises(ValueError):
        SolverConfig(dt=0.1, T=1, spatial="fem")
    assert SolverConfig(dt=1e-3, T=0.25).n_steps == 250


@pytest.mark.parametrize("spatial", ["spectral", "fd"])
def test_heat_single_mode(spatial):
    g = TorusGrid(2, 32)
    x, y = g.coords
    u0 = np.cos(2 * np.pi * (x + 2 * y))
    nu, T = 0.01, 0.1
    sim = Simulator(g, HEAT, DiffusionSpec((nu,)), SolverConfig(dt=1e-3, T=T, spatial=spatial))
    rep = sim.run(u0, monitor=quiet(g))
    exact = u0 * math.exp(-4 * np.pi**2 * nu * 5 * T)
    err = np.max(np.abs(rep.final[0] - exact))
    assert err < (1e-12 if spatial == "spectral" else 2e-3)


def test_wrong_shape_rejected():
    sim = Simulator(G1, HEAT, DiffusionSpec((0.1,)), SolverConfig(dt=1e-3, T=0.01))
    with pytest.raises(ValueError):
        sim.run(np.zeros(8))


def test_parabolicity_violation():
    b = constant_basis(G2, [[1.0, 0.0]])
    # Ito matrix nu + 1/2 b b^T; nu = 0 makes the Stratonovich part degenerate
    with pytest.raises(SolverError) as exc:
        Simulator(G2, HEAT, DiffusionSpec((0.0,)), SolverConfig(dt=1e-3, T=0.1), b)
    assert exc.value.reason == "parabolicity"
    assert exc.value.report.nu_min <= 0


def test_explicit_scheme_stability_guard():
    with pytest.raises(SolverError) as exc:
        Simulator(G2, HEAT, DiffusionSpec((1.0,)), SolverConfig(dt=1.0, T=1.0, scheme="explicit"))
    assert exc.value.reason == "stability"


def test_flux_dimension_checked():
    m = scalar_power(3, 1.0, e=(0.1,))
    with pytest.raises(SolverError):
        Simulator(G2, m, DiffusionSpec((0.1,)), SolverConfig(dt=1e-3, T=0.1))


def test_deterministic_paths():
    b = kraichnan_basis(G2, 2, 1.0, 0.1)
    sim = Simulator(G2, lotka_volterra(), DiffusionSpec((0.02, 0.02)), SolverConfig(dt=1e-2, T=0.1), b)
    x, y = G2.coords
    u0 = np.stack([1 + 0.5 * np.cos(2 * np.pi * x), 1 + 0.5 * np.sin(2 * np.pi * y)])
    a = sim.run(u0, seed=3, path=5, monitor=quiet(G2, 2)).final
    b2 = sim.run(u0, seed=3, path=5, monitor=quiet(G2, 2)).final
    c = sim.run(u0, seed=3, path=6, monitor=quiet(G2, 2)).final
    assert np.array_equal(a, b2)
    assert not np.array_equal(a, c)


def test_constant_transport_shift():
    g = TorusGrid(2, 32)
    x, y = g.coords
    u0 = np.sin(2 * np.pi * x)
    nu, T, dt = 0.01, 0.05, 1e-4
    sim = Simulator(g, HEAT, DiffusionSpec((nu,)), SolverConfig(dt=dt, T=T), constant_basis(g, [[1.0, 0.0]]))
    rep = sim.run(u0, path=2, monitor=quiet(g))
    w = sum(sim.driver(0).increments(2, m)[0] for m in range(sim.config.n_steps))
    exact = math.exp(-4 * np.pi**2 * nu * T) * np.sin(2 * np.pi * (x + w))
    assert np.sqrt(np.mean((rep.final[0] - exact) ** 2)) < 1e-3


def test_ode_blowup_time():
    m = scalar_power(2, 1.0)
    sim = Simulator(G1, m, DiffusionSpec((0.1,)), SolverConfig(dt=1e-4, T=1.0, blowup_threshold=1e5))
    rep = sim.run(np.full(G1.shape, 2.0), monitor=quiet(G1))
    assert rep.reason == "blowup"
    assert abs(rep.sigma_hat - 0.5) < 0.01


def test_cubic_blowup_time():
    # u' = u^3 from u0 = 2 blows up at 1/(2 u0^2) = 1/8
    sim = Simulator(G1, scalar_power(3, 1.0), DiffusionSpec((0.1,)), SolverConfig(dt=1e-5, T=0.2, blowup_threshold=1e5))
    rep = sim.run(np.full(G1.shape, 2.0), monitor=quiet(G1))
    assert rep.reason == "blowup"
    assert abs(rep.sigma_hat - 0.125) < 0.125 * 0.01


def test_mass_conservation_spectral():
    st_ = Stoichiometry((1, 1, 0), (0, 0, 1), 1.0, 0.5)
    m = mass_action(st_)
    b = kraichnan_basis(G2, 2, 1.0, 0.1)
    sim = Simulator(G2, m, DiffusionSpec((0.02,) * 3), SolverConfig(dt=1e-2, T=0.2), b)
    x, y = G2.coords
    u0 = np.stack([1 + 0.5 * np.cos(2 * np.pi * x), 1 + 0.5 * np.sin(2 * np.pi * y), 0.2 + 0 * x])
    rep = sim.run(u0, monitor=Monitor(G2, MonitorSpec(alpha=m.mass_vector, norms=False)))
    assert rep.mass_drift < 1e-12


def test_fd_positivity_lotka_volterra():
    g = TorusGrid(2, 32)
    x, y = g.coords
    b = kraichnan_basis(g, 2, 1.0, 0.1)
    u0 = np.stack([np.exp(-(np.sin(np.pi * (x - 0.3)) ** 2 + np.sin(np.pi * (y - 0.3)) ** 2) / 0.1), 0 * x])
    sim = Simulator(g, lotka_volterra(), DiffusionSpec((0.01, 0.01)), SolverConfig(dt=1e-2, T=0.2, spatial="fd"), b)
    rep = sim.run(u0, monitor=quiet(g, 2))
    assert rep.min_u >= -1e-12


def test_upwind_constant_annihilated():
    rng = np.random.default_rng(0)
    V = rng.normal(size=(1, 2) + G2.shape)
    assert np.allclose(upwind_rate(np.full((1,) + G2.shape, 3.0), V, G2.spacing, 2), 0)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 2**32 - 1), st.floats(0.1, 20.0))
def test_transport_flow_monotone(seed, scale):
    rng = np.random.default_rng(seed)
    u = rng.uniform(0, 1, size=(1,) + G2.shape)
    V = scale * rng.normal(size=(1, 2) + G2.shape) * G2.spacing
    out = transport_flow(u, V, G2.spacing, 2)
    assert out.min() >= u.min() - 1e-12
    assert out.max() <= u.max() + 1e-12


def test_transport_flow_constant_velocity_shift():
    g = TorusGrid(1, 256)
    x = g.coords[0]
    u = np.sin(2 * np.pi * x)[None]
    V = np.full((1, 1) + g.shape, 0.01)
    out = transport_flow(u, V, g.spacing, 1)
    assert np.max(np.abs(out - np.sin(2 * np.pi * (x + 0.01)))) < 1e-3


def _diag_dominant(rng, grid):
    p = rng.uniform(0, 1, size=(2,) + grid.shape)
    A = np.zeros((2, 2) + grid.shape)
    A[0, 0], A[1, 1] = 0.1 + p[0], 0.1 + p[1]
    A[0, 1] = A[1, 0] = np.minimum(p[0], p[1]) * rng.uniform(-1, 1, size=grid.shape)
    return A


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_fd_operator_monotone(seed):
    rng = np.random.default_rng(seed)
    g = TorusGrid(2, 8)
    A = _diag_dominant(rng, g)
    beta = rng.normal(size=(2,) + g.shape)
    c = rng.normal(size=g.shape)
    L = assemble_fd_operator(g, A, beta, c).toarray()
    off = L - np.diag(np.diag(L))
    assert off.min() >= -1e-12
    assert np.allclose(L.sum(axis=1), c.ravel())


def test_fd_operator_rejects_non_dominant():
    g = TorusGrid(2, 8)
    A = np.zeros((2, 2) + g.shape)
    A[0, 0] = A[1, 1] = 0.1
    A[0, 1] = A[1, 0] = 0.5
    with pytest.raises(SolverError):
        assemble_fd_operator(g, A, np.zeros((2,) + g.shape), np.zeros(g.shape))


def test_fd_operator_second_derivative():
    g = TorusGrid(2, 64)
    x, y = g.coords
    u = np.sin(2 * np.pi * (x + y))
    A = np.zeros((2, 2) + g.shape)
    A[0, 0] = A[1, 1] = 1.0
    A[0, 1] = A[1, 0] = 0.5
    L = assemble_fd_operator(g, A, np.zeros((2,) + g.shape), np.zeros(g.shape))
    exact = -(2 * np.pi) ** 2 * (1 + 1 + 2 * 0.5) * u
    assert np.max(np.abs(L @ u.ravel() - exact.ravel())) < 0.05 * np.max(np.abs(exact))


def test_stratonovich_operator_constant_coefficients():
    g = TorusGrid(2, 8)
    a = np.array([[1.0, 0.2], [0.2, 0.8]])
    sigma = np.array([[0.5, 0.1]]).reshape(1, 2, 1, 1) * np.ones((1, 2) + g.shape)
    nu = np.full((1,) + g.shape, 0.3)
    A, beta, ctil = stratonovich_operator(g, a, None, None, np.full(g.shape, -0.1), sigma, nu)
    expect_A = a - 0.5 * np.outer([0.5, 0.1], [0.5, 0.1])
    assert np.allclose(A[:, :, 0, 0], expect_A)
    assert np.allclose(beta[:, 0, 0], [-0.3 * 0.5, -0.3 * 0.1])
    assert np.allclose(ctil, -0.1 - 0.5 * 0.09)


def test_linear_scalar_rejects_negative_data():
    spec = random_linear_scalar(G2, 0.2, np.random.default_rng(0))
    bad = LinearScalarSpec(**{**spec.__dict__, "u0": spec.u0 - 1.0})
    with pytest.raises(SolverError):
        run_linear_scalar(bad, SolverConfig(dt=1e-3, T=0.01, spatial="fd"))


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**32 - 1))
def test_random_linear_scalar_margin(seed):
    spec = random_linear_scalar(G2, 0.2, np.random.default_rng(seed))
    assert spec.margin() >= 0.2 - 1e-12


@pytest.mark.parametrize("spatial", ["fd", "spectral"])
def test_linear_scalar_constant_coefficients(spatial):
    # with constant c and no noise the mean solves m' = c m + f
    g = TorusGrid(1, 16)
    x = g.coords[0]
    spec = LinearScalarSpec(grid=g, a=np.array([[0.1]]), u0=1 + np.cos(2 * np.pi * x), c=np.full(g.shape, -0.5),
                            f=np.full(g.shape, 0.2))
    rep = run_linear_scalar(spec, SolverConfig(dt=1e-3, T=0.5, spatial=spatial), monitor=quiet(g))
    exact = 0.4 + (1 - 0.4) * math.exp(-0.25)
    assert abs(rep.final[0].mean() - exact) < 1e-3


def test_linear_scalar_max_principle_fd():
    spec = random_linear_scalar(G2, 0.2, np.random.default_rng(4))
    rep = run_linear_scalar(spec, SolverConfig(dt=1e-3, T=0.05, spatial="fd"), path=1, monitor=quiet(G2))
    assert rep.min_u >= -1e-12


def test_per_component_bases():
    b = kraichnan_basis(G2, 2, 1.0, 0.1)
    empty = NoiseBasis(G2, np.zeros((0, 2) + G2.shape))
    sim = Simulator(G2, lotka_volterra(), DiffusionSpec((0.02, 0.02)), SolverConfig(dt=1e-2, T=0.05), [b, empty])
    rep = sim.run(np.ones((2,) + G2.shape), monitor=quiet(G2, 2))
    assert rep.survived


def test_zero_amplitude_noise_matches_deterministic():
    g = TorusGrid(2, 16)
    x, y = g.coords
    u0 = 1 + np.cos(2 * np.pi * x) * np.sin(2 * np.pi * y)
    cfg = SolverConfig(dt=1e-2, T=0.1)
    plain = Simulator(g, HEAT, DiffusionSpec((0.05,)), cfg).run(u0, monitor=quiet(g))
    noisy = Simulator(g, HEAT, DiffusionSpec((0.05,)), cfg, kraichnan_basis(g, 2, 1.0, 0.0)).run(u0, monitor=quiet(g))
    assert np.array_equal(plain.final, noisy.final)


def test_zero_data_fixed_point():
    b = kraichnan_basis(G2, 2, 1.0, 0.1)
    sim = Simulator(G2, lotka_volterra(), DiffusionSpec((0.02, 0.02)), SolverConfig(dt=1e-2, T=0.1), b)
    rep = sim.run(np.zeros((2,) + G2.shape), monitor=quiet(G2, 2))
    assert rep.survived and np.all(rep.final == 0)


@pytest.mark.parametrize("spatial", ["fd", "spectral"])
def test_linear_scalar_constant_growth(spatial):
    g = TorusGrid(2, 8)
    lam = 0.7
    spec = LinearScalarSpec(grid=g, a=np.eye(2), u0=np.ones(g.shape), c=np.full(g.shape, lam))
    rep = run_linear_scalar(spec, SolverConfig(dt=1e-4, T=0.1, spatial=spatial), monitor=quiet(g))
    assert np.max(np.abs(rep.final / math.exp(lam * 0.1) - 1)) < 1e-6
    harmonic = LinearScalarSpec(grid=g, a=np.eye(2), u0=np.ones(g.shape))
    rep = run_linear_scalar(harmonic, SolverConfig(dt=1e-2, T=0.1, spatial=spatial), monitor=quiet(g))
    assert np.allclose(rep.final, 1.0, atol=1e-14) and rep.min_u == pytest.approx(1.0)
