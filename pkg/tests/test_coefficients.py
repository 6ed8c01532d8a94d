import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sigmahom import coefficients as C


def test_identity_flux():
    m = C.power_law_model(p=2)
    np.testing.assert_allclose(C.eval_flux(m, [0.3], 0.1, [0.2], 0.0, 0.0, [3.0]), [3.0])


def test_quartic_constant_flux():
    m = C.power_law_model(p=4, g=2.0)
    np.testing.assert_allclose(C.eval_flux(m, [0.3], 0.1, [0.2], 0.0, 0.0, [1.0]), [2.0])


@pytest.mark.parametrize("p", [2.0, 3.0, 4.0])
def test_flux_vanishes_at_zero_gradient(example_family, p):
    m = C.power_law_model(p=p, g=C.sine_profile(2, 1), mu_coupling=0.3)
    lam = np.zeros((5, 1))
    out = m.flux(np.random.rand(5, 1), 0.2, np.random.rand(5, 1), 0.1, np.linspace(-2, 2, 5), lam)
    assert np.array_equal(out, np.zeros_like(out))


def test_nonfinite_arguments_rejected(example_family):
    with pytest.raises(ValueError):
        C.eval_flux(example_family, [0.1], 0.0, [0.2], 0.0, 0.0, [np.nan])
    with pytest.raises(ValueError):
        C.eval_lower_order(example_family, "drift", [0.1], np.inf, [0.2], 0.0, 1.0)


def test_lower_order_examples():
    m = C.power_law_model(g0=1.0, h={"kind": "linear", "scale": 1.0}, g1=1.0, weights=[1.0])
    assert C.eval_lower_order(m, "drift", [0.5], 0.0, [0.1], 0.0, 2.0) == pytest.approx(2.0)
    assert C.eval_lower_order(m, "noise", [0.5], 0.0, [0.1], 0.0, 0.0, k=1) == 0.0
    m2 = C.power_law_model(g1=C.sine_profile(1.0, 0.5), weights=[0.5, 0.25])
    assert C.eval_lower_order(m2, "noise", [0.0], 0.0, [0.0], 0.0, 2.0, k=2) == pytest.approx(0.5)
    with pytest.raises(IndexError):
        C.eval_lower_order(m2, "noise", [0.0], 0.0, [0.0], 0.0, 2.0, k=3)


def test_noise_weights_square_summable():
    w = C.noise_weights(0.5, 1.0, 1000)
    assert sum(v * v for v in w) < 0.25 * math.pi ** 2 / 6 + 1e-12


def test_periodic_means():
    alg = C.AlgebraSpec()
    mv = C.mean_value(lambda y, t: np.cos(2 * np.pi * y[..., 0]) ** 2, alg)
    assert mv.estimate == pytest.approx(0.5, abs=1e-14)
    assert C.mean_value(lambda y, t: 3.0 + 0 * t, alg).estimate == pytest.approx(3.0)
    assert C.profile_mean(C.sine_profile(2.0, 1.0), alg) == pytest.approx(2.0, abs=1e-14)


def test_quasiperiodic_mean_of_product_of_incommensurate_waves():
    alg = C.AlgebraSpec("quasiperiodic", 1, ((1.0, 0.0), (math.sqrt(2.0), 0.0)))
    mv = C.mean_value(lambda y, t: np.sin(y[..., 0]) * np.sin(math.sqrt(2.0) * y[..., 0]), alg)
    assert abs(mv.estimate) < 1e-6
    assert mv.method == "box" and len(mv.partials) == 3


def test_quasiperiodic_mean_failure_carries_partials():
    alg = C.AlgebraSpec("quasiperiodic", 1, ((1.0, 0.0), (math.sqrt(2.0), 0.0)), box_radii=(10.0, 20.0))
    with pytest.raises(C.MeanValueConvergenceError) as info:
        C.mean_value(lambda y, t: np.sin(0.01 * y[..., 0]), alg, C.QuadSettings(tol=1e-12))
    assert len(info.value.partials) == 2


def test_rationally_dependent_frequencies_rejected():
    with pytest.raises(ValueError, match="integer relation"):
        C.AlgebraSpec("quasiperiodic", 1, ((1.0, 0.0), (1.5, 0.0)))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(-3, 3), b=st.floats(-3, 3), k=st.integers(1, 4), shift=st.floats(0, 1))
def test_mean_value_linear_and_translation_invariant(a, b, k, shift):
    alg = C.AlgebraSpec()
    f = lambda y, t: np.sin(2 * np.pi * k * y[..., 0]) ** 2
    g = lambda y, t: np.cos(2 * np.pi * y[..., 0]) + t
    lhs = C.mean_value(lambda y, t: a * f(y, t) + b * g(y, t), alg).estimate
    rhs = a * C.mean_value(f, alg).estimate + b * C.mean_value(g, alg).estimate
    assert abs(lhs - rhs) < 1e-12
    shifted = C.mean_value(lambda y, t: f(y + shift, t), alg).estimate
    assert abs(shifted - C.mean_value(f, alg).estimate) < 1e-12


def test_example_family_passes_all_conditions():
    m = C.power_law_model(p=2, g=C.sine_profile(2, 1), g0=C.sine_profile(0.5, 0.25, fn="cos"),
                          g1=C.sine_profile(1, 0.5), weights=C.noise_weights(0.5, 1, 8))
    rep = C.verify_structure(m, samples=10_000, seed=3)
    assert rep.passed, rep.failed()


def test_coupled_quartic_family_passes():
    m = C.power_law_model(p=3, g=C.Profile(2.0, C.sine_profile(2, 1).terms, slow_amp=0.3),
                          g0=C.Profile(0.5, (), slow_amp=0.2), h={"kind": "tanh", "scale": 1.0},
                          g1=1.0, weights=[0.3, 0.1], mu_coupling=0.2)
    assert C.verify_structure(m, samples=4000, seed=1).passed


def test_sign_changing_coefficient_flagged_with_witness():
    m = C.power_law_model(p=2, g=C.sine_profile(0.0, 1.0))
    rep = C.verify_structure(m, samples=10_000, seed=0)
    assert "A2" in rep.failed()
    assert rep.conditions["A2"].witness is not None


def test_zero_model_first_condition_trivial():
    m = C.power_law_model(p=2, g=0.0)
    rep = C.verify_structure(m, samples=200)
    assert rep.conditions["A1"].passed


def test_monotonicity_margin_against_declared_constant(example_family, rng):
    c1 = example_family.constants().c1
    lam, lam2 = rng.normal(size=(500, 1)), rng.normal(size=(500, 1))
    y = rng.random((500, 1))
    a = example_family.flux(0.5, 0.0, y, 0.0, 0.0, lam)
    b = example_family.flux(0.5, 0.0, y, 0.0, 0.0, lam2)
    lhs = np.sum((a - b) * (lam - lam2), axis=1)
    assert np.all(lhs >= c1 * np.abs(lam - lam2)[:, 0] ** 2 - 1e-12)


def test_profile_dict_round_trip():
    p = C.Profile(1.5, (C.Term(0.5, (C.Factor("cos", (1, 0)), C.Factor("sin", (0, 2), 0.3))),), slow_amp=0.1)
    assert C.Profile.from_dict(p.to_dict()) == p
