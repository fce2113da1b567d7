from fractions import Fraction as F

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from stochrd.reactions import (
    ReactionModel,
    Stoichiometry,
    brusselator,
    check_growth,
    check_positivity_conditions,
    lotka_volterra,
    mass_action,
    mass_defect,
    preset,
    scalar_power,
    solve_mass_vector,
)


def col(*v):
    return np.array(v, dtype=float).reshape(-1, 1)


def test_mass_action_exchange():
    m = mass_action(Stoichiometry((1, 0), (0, 1), 2.0, 0.5))
    y = col(3.0, 4.0)
    rate = 2.0 * 3.0 - 0.5 * 4.0
    assert np.allclose(m.f(y)[:, 0], [-rate, rate])
    assert m.h == 1


def test_mass_action_equilibrium():
    m = mass_action(Stoichiometry((1, 1, 0), (0, 0, 1), 2.0, 3.0))
    y = col(1.5, 2.0, 2.0)  # R+ y1 y2 = 6 = R- y3
    assert np.allclose(m.f(y), 0)


def test_mass_action_three_species():
    m = mass_action(Stoichiometry((1, 1, 0), (0, 0, 1), 2.0, 3.0))
    y = col(1.0, 2.0, 5.0)
    assert m.f(y)[2, 0] == pytest.approx(2.0 * 2.0 - 3.0 * 5.0)
    assert m.h == 2


def test_stoichiometry_validation():
    with pytest.raises(ValueError):
        Stoichiometry((1, 0), (1, 0))
    with pytest.raises(ValueError):
        Stoichiometry((1,), (0, 1))


@pytest.mark.parametrize(
    "q,p,alpha",
    [((1, 1, 0), (0, 0, 1), (1, 1, 2)), ((1, 0), (0, 1), (1, 1)), ((1,), (0,), None), ((2, 0), (0, 3), (3, 2))],
)
def test_solve_mass_vector(q, p, alpha):
    spec = solve_mass_vector(Stoichiometry(q, p))
    if alpha is None:
        assert spec is None
        return
    assert spec.alpha == tuple(F(a) for a in alpha)
    assert spec.C0 == 0
    assert sum(a * (qi - pi) for a, qi, pi in zip(spec.alpha, q, p)) == 0


orders = st.lists(st.integers(0, 3), min_size=1, max_size=4)


@settings(max_examples=100, deadline=None)
@given(orders, orders, st.floats(0, 5), st.floats(0, 5), st.integers(0, 2**31))
def test_mass_vector_cancels(q, p, rp, rm, seed):
    n = min(len(q), len(p))
    q, p = q[:n], p[:n]
    if q == p:
        return
    st_ = Stoichiometry(tuple(q), tuple(p), rp, rm)
    spec = solve_mass_vector(st_)
    v = np.array(q) - np.array(p)
    feasible = (v > 0).any() and (v < 0).any()
    assert (spec is not None) == feasible
    if spec is None:
        return
    assert all(a > 0 for a in spec.alpha)
    model = mass_action(st_)
    y = np.random.default_rng(seed).uniform(0, 2, (n, 50))
    scale = 1 + np.max(np.abs(model.f(y)))
    assert np.max(np.abs(mass_defect(model, model.mass_vector, y))) <= 1e-14 * scale * 10


def test_scalar_power_values():
    m = scalar_power(h=3, sign=1.0)
    assert m.f(col(2.0))[0, 0] == 8.0
    assert m.f(col(-2.0))[0, 0] == -8.0
    m2 = scalar_power(h=2, sign=-1.0, e=(1.0, 2.0), theta=(0.5,))
    y = col(-3.0)
    assert m2.f(y)[0, 0] == pytest.approx(9.0)
    assert np.allclose(m2.F(y)[0, :, 0], [-3.0 * 3**0.5, -6.0 * 3**0.5])
    assert np.allclose(m2.g(y)[0, :, 0], [-1.5 * 3**0.5])


def test_brusselator_fixed_point():
    a, b = 1.3, 2.7
    m = brusselator(alpha=a, beta=b)
    assert np.allclose(m.f(col(a, b / a)), 0, atol=1e-14)


def test_lv_boundary():
    m = lotka_volterra(1.0, 0.5, 1.0, 2.0, 0.3, 1.0)
    y = np.array([[0.0, 1.0, 5.0], [0.0, 0.0, 0.0]])
    assert np.all(m.f(y)[1] == 0)


def test_preset_dispatch():
    assert preset("brusselator").h == 3
    with pytest.raises(ValueError, match="unknown preset"):
        preset("gray_scott")


@pytest.mark.parametrize(
    "model",
    [
        lotka_volterra(),
        brusselator(),
        scalar_power(h=3, e=(1.0, 0.0), theta=(0.2, 0.1)),
        mass_action(Stoichiometry((1, 0), (0, 1), 1.0, 2.0)),
        mass_action(Stoichiometry((1, 1, 0), (0, 0, 1), 1.0, 2.0)),
    ],
    ids=lambda m: m.name,
)
def test_positivity_passes(model):
    rep = check_positivity_conditions(model, samples=1024)
    assert rep.passed, rep.failures


def test_positivity_exchange_witness_value():
    m = mass_action(Stoichiometry((1, 0), (0, 1), 1.0, 2.0))
    y = col(0.0, 3.0)
    assert m.f(y)[0, 0] == 6.0


def test_positivity_additive_noise_fails():
    base = scalar_power(h=3)
    m = ReactionModel("additive", 1, base.f, 3, 3, g=lambda y: np.ones((1, 1) + y.shape[1:]), n_noise=1)
    rep = check_positivity_conditions(m, samples=256)
    assert not rep.passed
    assert rep.failures[0][0].startswith("g_")


def test_positivity_nonconstant_flux_fails():
    base = lotka_volterra()
    m = ReactionModel("flux", 2, base.f, 2, 2, F=lambda y: y[:, None] + y[::-1, None], flux_dim=1)
    rep = check_positivity_conditions(m, samples=256)
    assert not rep.passed and rep.failures[0][0].startswith("F_i")


def test_positivity_negative_reaction_fails():
    m = ReactionModel("decay_source", 1, lambda y: y - 1.0, 1, 2)
    rep = check_positivity_conditions(m, samples=64)
    assert not rep.passed
    name, i, witness, value = rep.failures[0]
    assert i == 0 and witness == (0.0,) and value == -1.0


def test_flux_zero_constant():
    rep = check_positivity_conditions(lotka_volterra(), samples=64)
    assert rep.flux_constants == (None, None)


def test_growth_scalar_power():
    rep = check_growth(scalar_power(h=3), samples=2048)
    assert rep.passed
    assert rep.M1 == 0 and rep.M2 <= 1.0 + 1e-12


def test_growth_brusselator_needs_alpha():
    m = brusselator(alpha=2.0)
    rep = check_growth(m, samples=512, M1=1.0, M2=100.0)
    assert not rep.passed
    rep = check_growth(m, samples=512)
    assert rep.M1 == pytest.approx(2.0)
    assert check_growth(m, samples=512, M1=rep.M1, M2=rep.M2).passed


def test_growth_lipschitz_exchange():
    m = mass_action(Stoichiometry((1, 0), (0, 1), 3.0, 1.0))
    rep = check_growth(m, samples=1024, h=2.0)
    # |f(y)-f(y')| <= sqrt(2) * |R+ dy1 - R- dy2| <= sqrt(2) * sqrt(R+^2 + R-^2) |dy|
    assert rep.lipschitz <= np.sqrt(2) * np.hypot(3.0, 1.0)


@settings(max_examples=20, deadline=None)
@given(st.floats(3.0, 6.0))
def test_growth_monotone_in_h(h2):
    m = scalar_power(h=3)
    base = check_growth(m, samples=512, box_size=5.0)
    assert base.passed
    # for |y| <= box, |y|^3 <= |y| + |y|^h2 whenever h2 >= 3
    assert check_growth(m, samples=512, box_size=5.0, h=h2, M1=base.M1, M2=base.M2).passed


def test_growth_sample_guard():
    with pytest.raises(ValueError):
        check_growth(scalar_power(), samples=1)
