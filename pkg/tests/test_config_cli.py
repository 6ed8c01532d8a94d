import json

import pytest

from sigmahom import cli
from sigmahom.config import ConfigError, parse_config, serialize

MINIMAL = 'eps_list = [0.25]\n[model]\np = 2.0\n'


def test_minimal_config_defaults():
    cfg = parse_config(MINIMAL)
    assert cfg["grid"]["n_x"] == 128
    assert cfg["experiment"]["K"] == 8 and cfg["experiment"]["N"] == 64
    assert cfg.eps_list == [0.25]


def test_missing_model():
    with pytest.raises(ConfigError, match="missing required key: model"):
        parse_config("eps_list = [0.25]\n")


def test_missing_eps_list():
    with pytest.raises(ConfigError, match="missing required key: eps_list"):
        parse_config("[model]\np = 2.0\n")


def test_unknown_key():
    with pytest.raises(ConfigError, match="unknown key: grid.nx"):
        parse_config(MINIMAL + "[grid]\nnx = 4\n")


def test_type_mismatch_has_location():
    with pytest.raises(ConfigError, match="type mismatch at model.p"):
        parse_config('eps_list = [0.25]\n[model]\np = "two"\n')


def test_resonance_is_enforced():
    with pytest.raises(ConfigError, match="resonant"):
        parse_config("eps_list = [0.3]\n[model]\n")
    assert parse_config("eps_list = [0.3]\n[model]\n[grid]\nallow_aliasing = true\n")


def test_bad_toml():
    with pytest.raises(ConfigError):
        parse_config("eps_list = [\n")


@pytest.mark.parametrize("name", cli.list_presets())
def test_round_trip_is_idempotent(name):
    cfg = parse_config(cli.preset_path(name))
    again = parse_config(serialize(cfg))
    assert again.to_dict() == cfg.to_dict()
    assert serialize(again) == serialize(cfg)


def test_presets_build_models():
    for name in cli.list_presets():
        cfg = parse_config(cli.preset_path(name))
        assert cfg.model().p >= 2


def _write(tmp_path, text, name="exp.toml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


CELL = '''eps_list = [0.25]
output_dir = "out"
[model]
p = 2.0
g = 1.0
[cell]
n_y = 16
xi = [1.5]
'''


def test_cell_subcommand_on_identity_medium(tmp_path, monkeypatch):
    monkeypatch.setenv("SIGMAHOM_OUTPUT_ROOT", str(tmp_path / "root"))
    assert cli.main(["cell", "--config", _write(tmp_path, CELL)]) == 0
    out = tmp_path / "root" / "out" / "cell"
    result = json.loads((out / "result.json").read_text())
    assert result["flux"] == [1.5] and result["residual"] <= 1e-12
    meta = json.loads((out / "metadata.json").read_text())
    assert meta["status"] == "ok" and meta["tolerances"]["tol"] == 1e-10
    assert sorted(p.name for p in out.glob("*.toml")) == ["config.toml"]
    assert sorted(p.name for p in out.glob("metadata*")) == ["metadata.json"]


def test_payloads_byte_identical_and_seed_free_without_noise(tmp_path, monkeypatch):
    text = '''eps_list = [0.25]
output_dir = "a"
[model]
p = 2.0
g = {mean = 1.0, terms = [{amp = 0.5, fn = "cos", winding = [1]}]}
g1 = 1.0
[grid]
n_x = 16
T = 0.1
M = 10
[table]
n_r = 3
n_xi = 5
[cell]
n_y = 8
[experiment]
K = 0
N = 2
pilot_samples = 1
'''
    monkeypatch.setenv("SIGMAHOM_OUTPUT_ROOT", str(tmp_path))
    cfg = _write(tmp_path, text)
    for outdir, seed in (("a", "1"), ("b", "1"), ("c", "777")):
        assert cli.main(["solve-fine", "--config", cfg, "--output-dir", outdir, "--seed", seed]) == 0
    a, b, c = (tmp_path / d / "solve-fine" for d in "abc")
    for name in ("result.json", "summary.csv", "snapshots_eps_0.25.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes()
    # K = 0: only the seed echo in the noise description may differ
    ra, rc = json.loads((a / "result.json").read_text()), json.loads((c / "result.json").read_text())
    assert ra["runs"] == rc["runs"]
    assert (a / "snapshots_eps_0.25.csv").read_bytes() == (c / "snapshots_eps_0.25.csv").read_bytes()


def test_verify_structure_flags_counterexample(tmp_path, monkeypatch):
    monkeypatch.setenv("SIGMAHOM_OUTPUT_ROOT", str(tmp_path))
    text = 'eps_list = [0.25]\n[model]\ng = {mean = 0.0, terms = [{amp = 1.0, fn = "sin", winding = [1]}]}\n'
    assert cli.main(["verify-structure", "--config", _write(tmp_path, text), "--samples", "500"]) == 1
    res = json.loads((tmp_path / "runs" / "verify-structure" / "result.json").read_text())
    assert res["passed"] is False


def test_module_error_gives_failure_record(tmp_path, monkeypatch):
    monkeypatch.setenv("SIGMAHOM_OUTPUT_ROOT", str(tmp_path))
    text = 'eps_list = [0.25]\n[model]\n[algebra]\ndim = 3\n'
    assert cli.main(["cell", "--config", _write(tmp_path, text)]) == 2
    meta = json.loads((tmp_path / "runs" / "cell" / "metadata.json").read_text())
    assert meta["status"] == "failed" and meta["error"]["type"]


def test_config_error_is_machine_readable(tmp_path, capsys):
    assert cli.main(["cell", "--config", _write(tmp_path, "eps_list = [0.25]\n")]) == 2
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert err["error"]["message"] == "missing required key: model"


def test_sigma_subcommand(tmp_path, monkeypatch):
    monkeypatch.setenv("SIGMAHOM_OUTPUT_ROOT", str(tmp_path))
    text = 'eps_list = [0.25]\n[model]\n[sigma]\ncases = ["oscillating", "gradient"]\nn_x = 1024\nn_t = 64\neps_list = [0.25, 0.125]\n'
    assert cli.main(["sigma-test", "--config", _write(tmp_path, text)]) == 0
    out = tmp_path / "runs" / "sigma-test"
    assert (out / "sigma.csv").read_text().count("\n") == 1 + 4
    assert (out / "gap_gradient.dat").exists()


def test_parser_requires_source():
    with pytest.raises(SystemExit):
        cli.build_parser().parse_args(["cell"])
