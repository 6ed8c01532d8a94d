import math

import numpy as np
import pytest

from sigmahom import coefficients as C
from sigmahom.cell import CellGrid, corrector_1d_oracle
from sigmahom.effective import (EffectiveTable, axis_covering, build_effective_table, effective_flux,
                                effective_growth_constant, effective_lower_order, table_properties)

QP = C.AlgebraSpec("quasiperiodic", 1, ((1.0, 0.0), (math.sqrt(2.0), 0.0)))


def test_identity_medium_in_two_dimensions():
    m = C.power_law_model(p=2, g=1.0, algebra=C.AlgebraSpec(dim=2))
    np.testing.assert_allclose(effective_flux(m, None, 0.0, 0.0, [1.0, 0.0], CellGrid(8)), [1.0, 0.0],
                               atol=1e-14)


def test_harmonic_mean_flux(harmonic_medium):
    assert effective_flux(harmonic_medium, None, 0.0, 0.0, [1.0], CellGrid(256))[0] == pytest.approx(
        math.sqrt(3.0), abs=1e-4)


def test_homogeneity_of_power_law(quartic_medium):
    grid = CellGrid(128)
    q1 = effective_flux(quartic_medium, None, 0.0, 0.0, [0.6], grid)[0]
    q2 = effective_flux(quartic_medium, None, 0.0, 0.0, [1.2], grid)[0]
    assert q2 / q1 == pytest.approx(8.0, rel=1e-3)


def test_one_dimensional_bounds_ordering():
    g = C.sine_profile(1.5, 1.0, fn="cos")
    m = C.power_law_model(p=2, g=g)
    q = effective_flux(m, None, 0.0, 0.0, [1.0], CellGrid(128))[0]
    y = (np.arange(4096) + 0.5) / 4096
    vals = 1.5 + np.cos(2 * np.pi * y)
    assert 1.0 / np.mean(1.0 / vals) - 1e-10 <= q <= np.mean(vals)


def test_quasiperiodic_flux_is_torus_harmonic_mean():
    g = C.Profile(2.0, (C.Term(0.5, (C.Factor("cos", (1, 0)),)), C.Term(0.5, (C.Factor("cos", (0, 1)),))))
    m = C.power_law_model(p=2, g=g, algebra=QP)
    th = np.arange(256) * 2 * np.pi / 256
    a, b = np.meshgrid(th, th, indexing="ij")
    expected = 1.0 / np.mean(1.0 / (2.0 + 0.5 * np.cos(a) + 0.5 * np.cos(b)))
    q = effective_flux(m, None, 0.0, 0.0, [1.0], CellGrid(256))[0]
    assert q == pytest.approx(expected, rel=1e-12)


def test_lower_order_examples():
    m = C.power_law_model(g0=0.7, h={"kind": "tanh", "scale": 1.0}, g1=C.sine_profile(1.0, 0.5),
                          weights=[1.0, 0.25])
    assert effective_lower_order(m, "drift", 0.4) == pytest.approx(0.7 * math.tanh(0.4))
    assert effective_lower_order(m, "noise", 2.0, k=2) == pytest.approx(0.5)
    with pytest.raises(IndexError):
        effective_lower_order(m, "noise", 2.0, k=0)
    with pytest.raises(ValueError):
        effective_lower_order(m, "bogus", 2.0)


def test_quasiperiodic_drift_mean():
    g0 = C.Profile(3.0, (C.Term(1.0, (C.Factor("cos", (1, 0)), C.Factor("cos", (0, 1)))),))
    m = C.power_law_model(g0=g0, algebra=QP)
    assert effective_lower_order(m, "drift", 1.0) == pytest.approx(3.0, abs=1e-5)


@pytest.fixture(scope="module")
def harmonic_table():
    m = C.power_law_model(p=2, g=C.sine_profile(2.0, 1.0), g0=0.5, g1=1.0, weights=[1.0, 0.5])
    return build_effective_table(m, np.linspace(-2, 2, 5), np.linspace(-2, 2, 5), CellGrid(128)), m


def test_table_node_and_between_node_queries(harmonic_table):
    table, m = harmonic_table
    val, jac = table.flux([0.0], [[1.0]])
    assert val[0, 0] == table.q_values[0, 2, 3, 0]
    val, _ = table.flux([0.3], [[1.5]])
    direct = effective_flux(m, None, 0.0, 0.3, [1.5], CellGrid(128))[0]
    assert val[0, 0] == pytest.approx(direct, rel=1e-10)  # linear data: exact
    assert jac[0, 0, 0] == pytest.approx(math.sqrt(3.0), abs=1e-4)


def test_table_extrapolation_is_homogeneous_and_counted(harmonic_table):
    table, _ = harmonic_table
    before = table.extrapolations
    val, _ = table.flux([5.0], [[4.0]])
    assert val[0, 0] == pytest.approx(2 * table.flux([0.0], [[2.0]])[0][0, 0])
    assert table.extrapolations == before + 1


def test_table_lower_order_rows(harmonic_table):
    table, _ = harmonic_table
    np.testing.assert_allclose(table.drift([1.0]), [0.5])
    np.testing.assert_allclose(table.noise_rows([2.0]), [[2.0, 1.0]])
    # Lipschitz with the averaged constant
    rows = table.mtilde_values[0]
    lip = np.max(np.abs(np.diff(rows, axis=0)) / np.diff(table.r_axis)[:, None])
    assert lip <= 1.0 + 1e-12


def test_table_properties(harmonic_table):
    table, m = harmonic_table
    props = table_properties(table, effective_growth_constant(m))
    assert props["zero_at_origin"] and props["monotone"] and props["growth"]


def test_table_json_round_trip(harmonic_table, tmp_path):
    table, _ = harmonic_table
    path = tmp_path / "t.json"
    table.to_json(path)
    back = EffectiveTable.from_json(path)
    np.testing.assert_array_equal(back.q_values, table.q_values)
    np.testing.assert_array_equal(back.mtilde_values, table.mtilde_values)
    assert back.to_json() == table.to_json()


def test_table_rejects_bad_axes():
    with pytest.raises(ValueError):
        EffectiveTable(2.0, [0.0, 0.0], [[-1.0, 1.0]], np.zeros((1, 2, 2, 1)), np.zeros((1, 2)),
                       np.zeros((1, 2, 0)))
    with pytest.raises(ValueError):
        EffectiveTable(2.0, [0.0, 1.0], [[0.5, 1.0]], np.zeros((1, 2, 2, 1)), np.zeros((1, 2)),
                       np.zeros((1, 2, 0)))


def test_axis_covering_contains_zero_and_margin():
    ax = axis_covering(0.2, 1.0, 9, margin=1.5)
    assert 0.0 in ax and ax[0] <= 0.0 and ax[-1] >= 1.2


def test_mu_dependent_table_matches_direct_solves():
    m = C.power_law_model(p=3, g=C.sine_profile(2.0, 1.0), mu_coupling=0.5)
    table = build_effective_table(m, [-1.0, 0.0, 1.0], [-1.0, 0.0, 1.0], CellGrid(64))
    for ir, r in enumerate([-1.0, 0.0, 1.0]):
        orc = corrector_1d_oracle(m, r, 1.0, 64)
        assert table.q_values[0, ir, 2, 0] == pytest.approx(orc.flux[0], rel=1e-9)
    assert table.q_values[0, 0, 2, 0] < table.q_values[0, 1, 2, 0]
