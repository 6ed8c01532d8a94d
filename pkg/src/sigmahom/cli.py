"""Command-line entry point: ``sigmahom <subcommand> --config FILE``.

Every run writes into ``<output root>/<output_dir>/<subcommand>/``:

* ``config.toml``   -- the fully resolved configuration (written first)
* ``metadata.json`` -- versions, wall time, warnings, failure counts, status
* payload files     -- ``result.json``, CSV tables and ``*.dat`` plot data

Payload files are deterministic functions of the resolved config; anything
time-dependent lives in ``metadata.json``. ``SIGMAHOM_OUTPUT_ROOT`` replaces
the output root (default: the current directory) and nothing else.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import platform
import sys
import time
from importlib import metadata as importlib_metadata
from importlib import resources
from pathlib import Path

import numpy as np

from . import harness, kernels
from .cell import solve_cell
from .coefficients import verify_structure
from .config import ConfigError, ExperimentConfig, parse_config, serialize
from .noise import sample_noise_path
from .solver import FineProvider, HomogenizedProvider, field_norm, solve_trajectory, write_snapshots

logger = logging.getLogger("sigmahom")

SUBCOMMANDS = (
    "verify-structure", "cell", "effective", "solve-fine", "solve-hom", "converge",
    "corrector", "sigma-test", "apriori", "increments",
)
OUTPUT_ROOT_ENV = "SIGMAHOM_OUTPUT_ROOT"


class _WarningCounter(logging.Handler):
    def __init__(self):
        super().__init__(level=logging.WARNING)
        self.messages = []

    def emit(self, record):
        self.messages.append(record.getMessage())


def _version(dist: str) -> str:
    try:
        return importlib_metadata.version(dist)
    except importlib_metadata.PackageNotFoundError:
        return "unknown"


def preset_path(name: str) -> Path:
    path = resources.files("sigmahom") / "presets" / f"{name}.toml"
    if not path.is_file():
        raise ConfigError(f"unknown preset {name!r}")
    return Path(str(path))


def list_presets() -> list:
    return sorted(p.name[:-5] for p in (resources.files("sigmahom") / "presets").iterdir()
                  if p.name.endswith(".toml"))


# --------------------------------------------------------------------------
# writers (sorted keys, repr floats -> byte-stable)


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    if isinstance(obj, (np.floating,)):
        return float(obj)
    if isinstance(obj, (np.integer,)):
        return int(obj)
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    return obj


def write_json(path: Path, payload):
    path.write_text(json.dumps(_jsonable(payload), indent=2, sort_keys=True) + "\n", encoding="utf-8")


def write_csv(path: Path, rows: list, columns: list):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for row in rows:
            w.writerow([repr(float(row[c])) if isinstance(row[c], (float, np.floating)) else row[c]
                        for c in columns])


def write_plot(path: Path, xs, ys, header: str):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(f"# {header}\n")
        for x, y in zip(xs, ys):
            fh.write(f"{float(x)!r} {float(y)!r}\n")


# --------------------------------------------------------------------------
# subcommands; each returns (status, result payload) and writes its extra files


def _cmd_verify(cfg, out, args):
    report = verify_structure(cfg.model(), samples=args.samples, seed=cfg["experiment"]["base_seed"])
    write_json(out / "result.json", report.to_dict())
    return (0 if report.passed else 1), {"passed": report.passed, "failed": report.failed()}


def _cmd_cell(cfg, out, args):
    c = cfg["cell"]
    sol = solve_cell(cfg.model(), None, 0.0, c["r"], c["xi"], cfg.cell_grid(), cfg.solver_options())
    payload = sol.to_dict()
    write_json(out / "result.json", payload)
    if cfg.model().dim == 1:
        y = np.arange(sol.grid.n_y) / sol.grid.n_y
        rows = [{"y": float(yv), "pi": float(pv)} for yv, pv in zip(y, sol.corrector[0])]
        write_csv(out / "corrector.csv", rows, ["y", "pi"])
        write_plot(out / "corrector.dat", y, sol.corrector[0], "y pi(y)")
    return 0, {"flux": sol.flux.tolist(), "residual": sol.residual}


def _cmd_effective(cfg, out, args):
    setup = harness.prepare(cfg)
    table = setup.table
    if table is None:
        return 0, {"note": "medium does not oscillate; effective coefficients equal the original ones"}
    table.to_json(out / "table.json")
    if table.dim == 1:
        xi = table.xi_axes[0]
        q = table.q_values[0, 0, :, 0]
        write_csv(out / "q.csv", [{"xi": a, "q": b} for a, b in zip(xi, q)], ["xi", "q"])
        write_plot(out / "q.dat", xi, q, "xi q(r0, xi)")
    return 0, {"r_axis": table.r_axis.tolist(), "xi_axes": [a.tolist() for a in table.xi_axes]}


def _cmd_solve(cfg, out, args, homogenized: bool):
    setup = harness.prepare(cfg)
    exp = cfg["experiment"]
    path = sample_noise_path(exp["base_seed"], setup.grid.T, setup.grid.M, exp["K"])
    opts = cfg.solver_options()
    runs = []
    providers = ([("hom", HomogenizedProvider(setup.table, setup.model))] if homogenized else
                 [(f"eps_{e:g}", FineProvider(setup.model, e)) for e in cfg.eps_list])
    for tag, prov in providers:
        tr = solve_trajectory(setup.grid, prov, path, setup.u0, opts, cfg["grid"]["allow_aliasing"])
        write_snapshots(tr, out / f"snapshots_{tag}.csv", every=args.snapshot_every)
        runs.append({"run": tag, "L2_QT": field_norm(tr, "L2_QT"),
                     "grad_p": field_norm(tr, "Lp_grad", p=setup.model.p),
                     "max_newton_iterations": max(tr.iterations), "noise_checksum": tr.noise_checksum})
    write_json(out / "result.json", {"noise": path.describe(), "runs": runs})
    write_csv(out / "summary.csv", runs, ["run", "L2_QT", "grad_p", "max_newton_iterations"])
    return 0, {"runs": len(runs)}


def _cmd_converge(cfg, out, args):
    setup = harness.prepare(cfg)
    records = harness.run_ensemble(setup, cfg.eps_list, cfg["experiment"]["N"])
    rep = harness.convergence_in_probability(cfg, setup=setup, records=records)
    write_json(out / "result.json", rep.to_dict())
    write_csv(out / "probabilities.csv", rep.rows(), ["eps", "delta", "P", "radius"])
    sample_rows = [{"eps": e, "sample": i, "error": float(rep.errors[i, j])}
                   for j, e in enumerate(rep.eps_list) for i in range(rep.errors.shape[0])]
    write_csv(out / "errors.csv", sample_rows, ["eps", "sample", "error"])
    write_plot(out / "median_error_vs_eps.dat", rep.eps_list, rep.medians, "eps median ||u_eps - u_0||")
    write_plot(out / "probability_vs_eps.dat", rep.eps_list, rep.probabilities[:, 0],
               f"eps P(error > {rep.deltas[0]!r})")
    return 0, {"failures": rep.failures}


def _cmd_corrector(cfg, out, args):
    setup = harness.prepare(cfg, correctors=True)
    res = harness.corrector_error(cfg, setup=setup)
    write_json(out / "result.json", res)
    write_csv(out / "corrector.csv", res["rows"], ["eps", "G_plain", "G_corr", "G_plain_se", "G_corr_se"])
    eps = [r["eps"] for r in res["rows"]]
    write_plot(out / "G_plain_vs_eps.dat", eps, [r["G_plain"] for r in res["rows"]], "eps G_plain")
    write_plot(out / "G_corr_vs_eps.dat", eps, [r["G_corr"] for r in res["rows"]], "eps G_corr")
    return 0, {"failures": res["failures"]}


def _cmd_sigma(cfg, out, args):
    s = cfg["sigma"]
    results, rows = [], []
    for case in s["cases"]:
        r = harness.weak_sigma_test(case, s["eps_list"], s["n_x"], s["n_t"])
        results.append(r.to_dict())
        rows += [{"case": case, "eps": e, "lhs": l, "rhs": r.rhs, "gap": g}
                 for e, l, g in zip(r.eps_list, r.lhs, r.gaps)]
        write_plot(out / f"gap_{case}.dat", r.eps_list, r.gaps, "eps |LHS - RHS|")
    write_json(out / "result.json", {"cases": results})
    write_csv(out / "sigma.csv", rows, ["case", "eps", "lhs", "rhs", "gap"])
    return 0, {"cases": len(results)}


def _cmd_apriori(cfg, out, args):
    res = harness.apriori_experiment(cfg)
    write_json(out / "result.json", res)
    write_csv(out / "apriori.csv", res["rows"], ["eps", "n", "sup_u4", "sup_u4_se", "grad_p", "grad_p_se"])
    return 0, {"failures": res["failures"]}


def _cmd_increments(cfg, out, args):
    rep = harness.increment_experiment(cfg)
    write_json(out / "result.json", rep.to_dict())
    write_csv(out / "increments.csv", [{"delta": d, "modulus": v} for d, v in zip(rep.deltas, rep.values)],
              ["delta", "modulus"])
    write_plot(out / "modulus_vs_delta.dat", rep.deltas, rep.values, "delta modulus")
    return 0, {"slope": rep.slope}


DISPATCH = {
    "verify-structure": _cmd_verify,
    "cell": _cmd_cell,
    "effective": _cmd_effective,
    "solve-fine": lambda c, o, a: _cmd_solve(c, o, a, False),
    "solve-hom": lambda c, o, a: _cmd_solve(c, o, a, True),
    "converge": _cmd_converge,
    "corrector": _cmd_corrector,
    "sigma-test": _cmd_sigma,
    "apriori": _cmd_apriori,
    "increments": _cmd_increments,
}


def output_directory(cfg: ExperimentConfig, subcommand: str) -> Path:
    root = Path(os.environ.get(OUTPUT_ROOT_ENV, "."))
    return root / cfg.output_dir / subcommand


def run_experiment(cfg: ExperimentConfig, subcommand: str, args=None) -> int:
    """Run one subcommand; always leaves config.toml and metadata.json behind."""
    if subcommand not in DISPATCH:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    args = args or argparse.Namespace(samples=10_000, snapshot_every=10)
    out = output_directory(cfg, subcommand)
    out.mkdir(parents=True, exist_ok=True)
    (out / "config.toml").write_text(serialize(cfg), encoding="utf-8")
    counter = _WarningCounter()
    root_logger = logging.getLogger("sigmahom")
    root_logger.addHandler(counter)
    started = time.time()
    meta = {
        "subcommand": subcommand,
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z", time.localtime(started)),
        "versions": {
            "sigmahom": _version("artifact"),
            "numpy": np.__version__,
            "scipy": _version("scipy"),
            "python": platform.python_version(),
            "kernel_backend": kernels.BACKEND,
        },
        "seeds": {"base_seed": cfg["experiment"]["base_seed"], "N": cfg["experiment"]["N"]},
        "tolerances": dict(cfg["solver"]),
    }
    try:
        status, summary = DISPATCH[subcommand](cfg, out, args)
        meta.update(status="ok" if status == 0 else "check_failed", summary=summary)
    except Exception as exc:  # any module error becomes a failure record
        logger.debug("run failed", exc_info=True)
        status = 2
        meta.update(status="failed", error={"type": type(exc).__name__, "message": str(exc)})
    finally:
        root_logger.removeHandler(counter)
    meta["wall_time_s"] = time.time() - started
    meta["warnings"] = counter.messages
    meta["warning_count"] = len(counter.messages)
    meta["failure_count"] = (meta.get("summary") or {}).get("failures", 0) if status != 2 else None
    write_json(out / "metadata.json", meta)
    return status


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sigmahom", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="subcommand", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name)
        src = p.add_mutually_exclusive_group(required=True)
        src.add_argument("--config", help="TOML experiment file")
        src.add_argument("--preset", choices=list_presets(), help="shipped experiment")
        p.add_argument("--output-dir", help="override output_dir (relative to the output root)")
        p.add_argument("--table", help="precomputed effective table (JSON)")
        p.add_argument("--eps", type=float, nargs="+", help="override eps_list")
        p.add_argument("--samples-n", dest="N", type=int, help="override experiment.N")
        p.add_argument("--seed", type=int, help="override experiment.base_seed")
        p.add_argument("--workers", type=int, help="parallel samples / table nodes")
        p.add_argument("--allow-aliasing", action="store_true", help="accept non-resonant eps")
        p.add_argument("--samples", type=int, default=10_000, help="structure-check samples")
        p.add_argument("--snapshot-every", type=int, default=10, help="time stride of CSV snapshots")
    return parser


def _load(args) -> ExperimentConfig:
    from .config import tomllib

    path = preset_path(args.preset) if args.preset else Path(args.config)
    with open(path, "rb") as fh:
        raw = tomllib.load(fh)
    if args.output_dir:
        raw["output_dir"] = args.output_dir
    if args.eps:
        raw["eps_list"] = args.eps
    if args.allow_aliasing:
        raw.setdefault("grid", {})["allow_aliasing"] = True
    if args.table:
        raw.setdefault("table", {})["path"] = args.table
    for key, val in (("N", args.N), ("base_seed", args.seed), ("workers", args.workers)):
        if val is not None:
            raw.setdefault("experiment", {})[key] = val
    return parse_config(raw)


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load(args)
    except (ConfigError, OSError) as exc:
        print(json.dumps({"status": "failed", "error": {"type": type(exc).__name__, "message": str(exc)}}),
              file=sys.stderr)
        return 2
    return run_experiment(cfg, args.subcommand, args)


if __name__ == "__main__":
    sys.exit(main())
