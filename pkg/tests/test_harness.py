import math

import numpy as np
import pytest

from sigmahom import harness as H
from sigmahom.config import parse_config
from sigmahom.solver import FieldTrajectory, SpaceTimeGrid, initial_condition

SMALL = {
    "eps_list": [0.25, 0.125],
    "model": {"p": 2.0, "g": {"mean": 0.4, "terms": [{"amp": 0.2, "fn": "cos", "winding": [1]}]},
              "g0": 0.5, "g1": 1.0, "lambda0": 1.0},
    "grid": {"n_x": 32, "T": 0.2, "M": 20},
    "table": {"n_r": 3, "n_xi": 5},
    "cell": {"n_y": 32},
    "experiment": {"K": 2, "N": 4, "pilot_samples": 1, "increment_deltas": [0.02, 0.04]},
}


@pytest.fixture(scope="module")
def small_cfg():
    return parse_config(SMALL)


@pytest.fixture(scope="module")
def small_setup(small_cfg):
    return H.prepare(small_cfg, correctors=True)


@pytest.fixture(scope="module")
def small_records(small_setup, small_cfg):
    return H.run_ensemble(small_setup, small_cfg.eps_list, 4, with_corrector=True)


def test_probability_table_bounds_and_monotone(small_cfg, small_setup, small_records):
    rep = H.convergence_in_probability(small_cfg, deltas=[1e-4, 1e-3, 1e-2], setup=small_setup,
                                       records=small_records)
    assert np.all((rep.probabilities >= 0) & (rep.probabilities <= 1))
    assert np.all(np.diff(rep.probabilities, axis=1) <= 0)
    assert rep.checksums_shared and rep.failures == 0
    d = rep.to_dict()
    assert d["samples_ok"] == 4 and len(d["probabilities"]) == 6


def test_probability_radius():
    P, radii = H.probability_table(np.array([[0.1], [0.3], [0.5], [0.7]]), [0.4])
    assert P[0, 0] == 0.5
    assert radii[0, 0] == pytest.approx(1.959963984540054 * 0.25)


def test_corrector_and_apriori_from_records(small_cfg, small_setup, small_records):
    out = H.corrector_error(small_cfg, setup=small_setup, records=small_records)
    assert [r["eps"] for r in out["rows"]] == small_cfg.eps_list
    assert all(r["G_corr"] >= 0 and r["G_plain"] > 0 for r in out["rows"])
    ap = H.apriori_experiment(small_cfg, records=small_records)
    assert all(math.isfinite(v) for v in ap["spread"].values())


def test_samples_share_noise(small_records):
    for r in small_records:
        assert {row["checksum"] for row in r["eps"].values()} == {r["checksum"]}


def test_linear_field_modulus_matches_closed_form():
    grid = SpaceTimeGrid(1, 64, 1.0, 200)
    s = initial_condition(grid.mesh)
    traj = FieldTrajectory(grid, np.outer(grid.times, s), "test")
    norm = H.field_norm(s, "dual", mesh=grid.mesh)
    for ext in ("zero", "none"):
        rep = H.increment_modulus([traj], [0.02, 0.05, 0.1], 2.0, ext)
        for d, v in zip(rep.deltas, rep.values):
            assert v == pytest.approx(H.linear_field_modulus(d, 1.0, norm, 2.0, ext), rel=0.05)
    rep = H.increment_modulus([traj], [0.02, 0.04, 0.08], 2.0, "none")
    assert rep.slope == pytest.approx(2.0, abs=0.1)


def test_increment_modulus_rejects_sub_step_lags():
    grid = SpaceTimeGrid(1, 8, 1.0, 10)
    traj = FieldTrajectory(grid, np.zeros((11, 9)), "test")
    with pytest.raises(ValueError):
        H.increment_modulus([traj], [0.05])
    with pytest.raises(ValueError):
        H.increment_modulus([], [0.5])
    with pytest.raises(ValueError):
        H.increment_modulus([traj], [0.5], extension="periodic")


def test_apriori_report_of_static_field():
    grid = SpaceTimeGrid(1, 128, 1.0, 4)
    s = initial_condition(grid.mesh)
    traj = FieldTrajectory(grid, np.tile(s, (5, 1)), "test")
    rep = H.apriori_report([traj, traj])
    assert rep["sup_u4"] == pytest.approx(0.25, rel=1e-3)
    assert rep["grad_p"] == pytest.approx(math.pi ** 2 / 2, rel=1e-3)
    assert rep["sup_u4_se"] == 0.0


def test_ensemble_aborts_when_too_many_samples_fail(small_cfg, small_setup):
    import copy

    broken = copy.copy(small_setup)
    cfg = parse_config({**SMALL, "solver": {"max_iter": 1, "tol": 1e-30}})
    broken.cfg = cfg
    with pytest.raises(H.ExperimentAborted):
        H.run_ensemble(broken, [0.25], 2)


@pytest.mark.parametrize("case", ["oscillating", "plain", "tau_oscillating", "mixed", "gradient"])
def test_sigma_catalog(case):
    res = H.weak_sigma_test(case, [0.25, 0.125, 0.0625, 0.03125])
    assert res.decreasing(1e-9)
    assert res.gaps[-1] <= 1e-2
    if res.rhs_closed_form is not None:
        assert res.rhs == pytest.approx(res.rhs_closed_form, abs=1e-3)


def test_sigma_unknown_case():
    with pytest.raises(ValueError):
        H.weak_sigma_test("nope", [0.5])


def test_resonance_check(small_cfg):
    with pytest.raises(ValueError):
        H.check_resonance(small_cfg, [0.3])


def test_apriori_scales_with_initial_amplitude():
    base = {**SMALL, "experiment": {**SMALL["experiment"], "N": 3}}
    one = H.apriori_experiment(parse_config(base))
    two = H.apriori_experiment(parse_config({**base, "grid": {**SMALL["grid"], "u0_amplitude": 2.0}}))
    for a, b in zip(one["rows"], two["rows"]):
        assert a["sup_u4"] >= 0 and a["grad_p"] >= 0
        assert b["sup_u4"] == pytest.approx(16 * a["sup_u4"], rel=1e-8)
        assert b["grad_p"] == pytest.approx(4 * a["grad_p"], rel=1e-8)
