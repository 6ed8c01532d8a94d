"""Experiment configuration: strict TOML schema, defaults and round-tripping.

Grammar (TOML): two required keys, ``eps_list`` (top level) and the
``[model]`` table; every other section is optional::

    eps_list = [0.25, 0.125, 0.0625]
    output_dir = "runs/bench"

    [model]             # family, p, g, g0, g1, h, mu_coupling, lambda0, decay, weights
    [algebra]           # kind, dim, frequency_matrix
    [grid]              # n_x, T, M, u0, u0_amplitude, u0_path, allow_aliasing
    [cell]              # n_y, n_tau, r, xi
    [table]             # n_r, n_xi, margin, path
    [experiment]        # K, N, base_seed, deltas, increment_deltas, increment_extension, workers
    [solver]            # tol, max_iter, max_halvings, picard_relax
    [sigma]             # cases, eps_list, n_x, n_t

Profiles (g, g0, g1) are either a number or a table
``{mean = ..., slow_amp = ..., terms = [{amp = ..., fn = "sin"|"cos", winding = [...], phase = ...}]}``.
"""

from __future__ import annotations

import copy
import os
import sys
from dataclasses import dataclass, field

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib
import tomli_w

from . import coefficients as C
from .cell import CellGrid
from .discretization import SolverOptions

REQUIRED = object()


class ConfigError(ValueError):
    pass


_num = (int, float)

SCHEMA = {
    "eps_list": (list, REQUIRED),
    "output_dir": (str, "runs"),
    "model": {
        "family": (str, "power_law"),
        "p": (_num, 2.0),
        "g": ((dict,) + _num, 1.0),
        "g0": ((dict,) + _num, 0.0),
        "g1": ((dict,) + _num, 0.0),
        "h": (dict, {"kind": "linear", "scale": 1.0}),
        "mu_coupling": (_num, 0.0),
        "lambda0": (_num, 0.5),
        "decay": (_num, 1.0),
        "weights": (list, None),
    },
    "algebra": {
        "kind": (str, "periodic"),
        "dim": (int, 1),
        "frequency_matrix": (list, None),
    },
    "grid": {
        "n_x": (int, 128),
        "T": (_num, 1.0),
        "M": (int, 200),
        "u0": (str, "sine"),
        "u0_amplitude": (_num, 1.0),
        "u0_path": (str, ""),
        "allow_aliasing": (bool, False),
    },
    "cell": {
        "n_y": (int, 64),
        "n_tau": (int, 1),
        "r": (_num, 0.0),
        "xi": (list, [1.0]),
    },
    "table": {
        "n_r": (int, 5),
        "n_xi": (int, 9),
        "margin": (_num, 1.5),
        "path": (str, ""),
    },
    "experiment": {
        "K": (int, 8),
        "N": (int, 64),
        "base_seed": (int, 1000),
        "deltas": (list, []),
        "increment_deltas": (list, [0.01, 0.02, 0.04, 0.08]),
        "increment_extension": (str, "zero"),
        "pilot_samples": (int, 4),
        "workers": (int, 1),
    },
    "solver": {
        "tol": (_num, 1e-10),
        "max_iter": (int, 50),
        "max_halvings": (int, 12),
        "picard_relax": (_num, 0.5),
    },
    "sigma": {
        "cases": (list, ["oscillating", "plain", "tau_oscillating", "mixed", "gradient"]),
        "eps_list": (list, [0.25, 0.125, 0.0625, 0.03125]),
        "n_x": (int, 8192),
        "n_t": (int, 256),
    },
}


def _check_type(value, types, where):
    if types is bool:
        ok = isinstance(value, bool)
    else:
        ok = isinstance(value, types) and not (isinstance(value, bool) and types is not bool)
    if not ok:
        names = types.__name__ if isinstance(types, type) else "/".join(t.__name__ for t in types)
        raise ConfigError(f"type mismatch at {where}: expected {names}, got {type(value).__name__}")


def _resolve(raw: dict, schema: dict, prefix: str = "") -> dict:
    out = {}
    for key in raw:
        if key not in schema:
            raise ConfigError(f"unknown key: {prefix}{key}")
    for key, spec in schema.items():
        where = f"{prefix}{key}"
        if isinstance(spec, dict):
            sub = raw.get(key, {})
            if key in raw and not isinstance(sub, dict):
                raise ConfigError(f"type mismatch at {where}: expected a table")
            if key == "model" and key not in raw:
                raise ConfigError("missing required key: model")
            out[key] = _resolve(sub, spec, where + ".")
            continue
        types, default = spec
        if key not in raw:
            if default is REQUIRED:
                raise ConfigError(f"missing required key: {where}")
            out[key] = copy.deepcopy(default)
            continue
        value = raw[key]
        _check_type(value, types, where)
        if types == _num or types is float:
            value = float(value)
        out[key] = value
    return out


@dataclass
class ExperimentConfig:
    """Fully resolved experiment settings (plain nested dicts, see module docstring)."""

    data: dict = field(default_factory=dict)

    def __getitem__(self, key):
        return self.data[key]

    @property
    def eps_list(self) -> list:
        return [float(e) for e in self.data["eps_list"]]

    @property
    def output_dir(self) -> str:
        return self.data["output_dir"]

    def algebra(self) -> C.AlgebraSpec:
        a = self.data["algebra"]
        fm = a["frequency_matrix"]
        return C.AlgebraSpec(kind=a["kind"], dim=a["dim"], frequency_matrix=None if fm is None else tuple(map(tuple, fm)))

    def model(self) -> C.CoefficientModel:
        m = self.data["model"]
        if m["family"] not in C.FAMILIES:
            raise ConfigError(f"unknown model family {m['family']!r}")
        weights = C.noise_weights(m["lambda0"], m["decay"], self.data["experiment"]["K"], m["weights"])
        return C.power_law_model(
            p=m["p"], g=m["g"], g0=m["g0"], g1=m["g1"], h=dict(m["h"]), weights=weights,
            mu_coupling=m["mu_coupling"], algebra=self.algebra(),
        )

    def solver_options(self) -> SolverOptions:
        s = self.data["solver"]
        return SolverOptions(tol=s["tol"], max_iter=s["max_iter"], max_halvings=s["max_halvings"],
                             picard_relax=s["picard_relax"])

    def cell_grid(self) -> CellGrid:
        c = self.data["cell"]
        return CellGrid(n_y=c["n_y"], n_tau=c["n_tau"])

    def to_dict(self) -> dict:
        return copy.deepcopy(self.data)


def _validate(data: dict):
    eps = data["eps_list"]
    if not eps or not all(isinstance(e, _num) and not isinstance(e, bool) and e > 0 for e in eps):
        raise ConfigError("type mismatch at eps_list: expected a nonempty list of positive numbers")
    data["eps_list"] = [float(e) for e in eps]
    if data["algebra"]["kind"] not in ("periodic", "quasiperiodic"):
        raise ConfigError(f"invalid value at algebra.kind: {data['algebra']['kind']!r}")
    if data["grid"]["u0"] not in ("sine", "hat", "zero", "csv"):
        raise ConfigError(f"invalid value at grid.u0: {data['grid']['u0']!r}")
    if data["experiment"]["increment_extension"] not in ("zero", "none"):
        raise ConfigError("invalid value at experiment.increment_extension")
    if not data["grid"]["allow_aliasing"]:
        n_x = data["grid"]["n_x"]
        from .solver import is_resonant

        bad = [e for e in data["eps_list"] if not is_resonant(e, n_x)]
        if bad:
            raise ConfigError(f"eps values {bad} are not resonant with n_x={n_x} "
                              "(set grid.allow_aliasing = true to accept aliasing)")


def parse_config(source) -> ExperimentConfig:
    """Resolve a config from a TOML path, TOML text, or a dict; apply defaults; validate strictly."""
    if isinstance(source, dict):
        raw = copy.deepcopy(source)
    elif isinstance(source, os.PathLike) or (isinstance(source, str) and "\n" not in source
                                                and os.path.exists(source)):
        with open(source, "rb") as fh:
            raw = tomllib.load(fh)
    else:
        try:
            raw = tomllib.loads(str(source))
        except tomllib.TOMLDecodeError as exc:
            raise ConfigError(f"cannot parse config: {exc}") from exc
    data = _resolve(raw, SCHEMA)
    _validate(data)
    return ExperimentConfig(data)


def _strip_none(obj):
    if isinstance(obj, dict):
        return {k: _strip_none(v) for k, v in obj.items() if v is not None}
    if isinstance(obj, list):
        return [_strip_none(v) for v in obj]
    return obj


def serialize(cfg: ExperimentConfig) -> str:
    """TOML text of the resolved config (None-valued optional keys omitted)."""
    return tomli_w.dumps(_strip_none(cfg.to_dict()))
