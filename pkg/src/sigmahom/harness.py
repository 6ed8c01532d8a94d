"""Ensemble experiments: a priori bounds, time-increment modulus, coupled
fine/homogenized convergence, corrector improvement, and two-scale pairing
tests on synthetic oscillating families."""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cell import CellGrid
from .config import ExperimentConfig
from .effective import EffectiveTable, axis_covering, build_effective_table
from .noise import refine_noise_path, sample_noise_path
from .solver import (
    CorrectorCache,
    FieldTrajectory,
    FineProvider,
    HomogenizedProvider,
    SpaceTimeGrid,
    StepFailure,
    difference,
    field_norm,
    initial_condition,
    is_resonant,
    reconstruct_first_order,
)

logger = logging.getLogger(__name__)

FAILURE_LIMIT = 0.10
Z95 = 1.959963984540054


class ExperimentAborted(RuntimeError):
    pass


# --------------------------------------------------------------------------
# a priori bounds


def slice_l2(traj: FieldTrajectory) -> np.ndarray:
    w = traj.grid.mesh.trapezoid_weights
    return np.sqrt((traj.values ** 2) @ w)


def apriori_report(ensemble, p: float = 2.0) -> dict:
    """Monte Carlo estimates of ``E sup_t ||u(t)||^4`` and ``E int_0^T ||Du||_p^p`` with standard errors."""
    ensemble = list(ensemble)
    if not ensemble:
        raise ValueError("empty ensemble")
    sup4 = np.array([float(np.max(slice_l2(tr))) ** 4 for tr in ensemble])
    grad = np.array([field_norm(tr, "Lp_grad", p=p) for tr in ensemble])
    return _apriori_from_samples(sup4, grad)


def _apriori_from_samples(sup4, grad) -> dict:
    n = len(sup4)
    se = (lambda a: float(np.std(a, ddof=1) / math.sqrt(n)) if n > 1 else 0.0)
    return {
        "n": n,
        "sup_u4": float(np.mean(sup4)),
        "sup_u4_se": se(sup4),
        "grad_p": float(np.mean(grad)),
        "grad_p_se": se(grad),
    }


# --------------------------------------------------------------------------
# increment modulus


def _dual_gradients(traj: FieldTrajectory) -> np.ndarray:
    """Gradients (M+1, n_elem*d) of the Poisson potentials of every slice, weighted by sqrt(|e|)."""
    mesh = traj.grid.mesh
    w = np.sqrt(np.repeat(mesh.elem_measure, mesh.dim))
    return np.array([w * (mesh.G @ mesh.dirichlet_poisson(v)) for v in traj.values])


def _modulus_single(grads: np.ndarray, dt: float, steps: int, q: float, extension: str) -> float:
    """Max over lags ``s*dt`` (0 < |s| <= steps) of the time integral, interval by interval.

    An interval whose shifted image leaves [0, T] sees the zero extension on
    all of it, so the jump at ``t = T - theta`` falls on an interval boundary
    instead of being smeared by the trapezoid rule.
    """
    M1 = grads.shape[0]
    own = np.sqrt(np.sum(grads ** 2, axis=1)) ** q
    best = 0.0
    for s in range(-steps, steps + 1):
        if s == 0:
            continue
        idx = np.arange(M1) + s
        inside = (idx >= 0) & (idx < M1)
        shifted = np.zeros_like(grads)
        shifted[inside] = grads[idx[inside]]
        diff = np.sqrt(np.sum((shifted - grads) ** 2, axis=1)) ** q
        interval_in = inside[:-1] & inside[1:]
        if extension == "none":
            left, right = np.where(interval_in, diff[:-1], 0.0), np.where(interval_in, diff[1:], 0.0)
        else:
            left = np.where(interval_in, diff[:-1], own[:-1])
            right = np.where(interval_in, diff[1:], own[1:])
        best = max(best, float(0.5 * dt * np.sum(left + right)))
    return best


@dataclass
class IncrementReport:
    deltas: list
    values: list
    slope: float | None
    extension: str
    surrogate: str = "H^-1 (exact dual norm for p = 2, monitored proxy otherwise)"
    theta_sweep: str = "grid multiples of dt; sup replaced by max over the grid"

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def increment_modulus(ensemble, deltas, p: float = 2.0, extension: str = "zero") -> IncrementReport:
    """``E max_{|theta| <= delta} int_0^T ||u(t+theta) - u(t)||_*^{p'} dt`` per delta, with a log-log fit.

    ``extension='zero'`` extends trajectories by zero outside [0, T];
    ``'none'`` restricts the integral to ``t, t+theta`` inside [0, T].
    """
    ensemble = list(ensemble)
    if not ensemble:
        raise ValueError("empty ensemble")
    if extension not in ("zero", "none"):
        raise ValueError(f"unknown extension {extension!r}")
    dt = ensemble[0].grid.dt
    q = p / (p - 1.0)
    deltas = [float(d) for d in deltas]
    for d in deltas:
        if not 0.0 < d < 1.0:
            raise ValueError("increment lags must lie in (0, 1)")
        if d < dt * (1 - 1e-9):
            raise ValueError(f"lag {d} is smaller than the time step {dt}")
    grads = [_dual_gradients(tr) for tr in ensemble]
    values = []
    for d in deltas:
        steps = int(math.floor(d / dt + 1e-9))
        values.append(float(np.mean([_modulus_single(g, dt, steps, q, extension) for g in grads])))
    pos = [(d, v) for d, v in zip(deltas, values) if v > 0.0]
    slope = None
    if len(pos) >= 2:
        slope = float(np.polyfit(np.log([d for d, _ in pos]), np.log([v for _, v in pos]), 1)[0])
    return IncrementReport(deltas, values, slope, extension)


def linear_field_modulus(delta: float, T: float, norm: float, p: float = 2.0, extension: str = "zero") -> float:
    """Closed-form modulus of ``u(t) = t * s`` with ``||s||_* = norm``.

    With zero extension the lag ``theta = +delta`` dominates and the tail
    ``t > T - delta`` contributes ``int t^{p'}``; without it only the
    ``delta^{p'} (T - delta)`` bulk term remains.
    """
    q = p / (p - 1.0)
    bulk = delta ** q * (T - delta)
    if extension == "none":
        return norm ** q * bulk
    tail = (T ** (q + 1.0) - (T - delta) ** (q + 1.0)) / (q + 1.0)
    return norm ** q * (bulk + tail)


# --------------------------------------------------------------------------
# coupled ensembles


@dataclass
class Setup:
    """Everything a sample needs, built once per experiment."""

    cfg: ExperimentConfig
    model: object
    grid: SpaceTimeGrid
    u0: np.ndarray
    table: EffectiveTable | None
    caches: dict = field(default_factory=dict)

    @property
    def K(self) -> int:
        return self.cfg["experiment"]["K"]


def make_grid(cfg: ExperimentConfig) -> SpaceTimeGrid:
    g = cfg["grid"]
    return SpaceTimeGrid(cfg["algebra"]["dim"], g["n_x"], g["T"], g["M"])


def make_u0(cfg: ExperimentConfig, grid: SpaceTimeGrid) -> np.ndarray:
    g = cfg["grid"]
    return initial_condition(grid.mesh, g["u0"], g["u0_amplitude"], g["u0_path"] or None)


def check_resonance(cfg: ExperimentConfig, eps_list):
    n_x = cfg["grid"]["n_x"]
    for e in eps_list:
        if not is_resonant(e, n_x):
            if not cfg["grid"]["allow_aliasing"]:
                raise ValueError(f"eps={e} is not resonant with n_x={n_x}")
            logger.warning("eps=%s is not resonant with n_x=%d: oscillations are aliased", e, n_x)


def pilot_ranges(cfg: ExperimentConfig, model=None, samples: int | None = None):
    """Observed (r, grad) ranges of a few fine-scale runs at the coarsest eps."""
    model = model or cfg.model()
    grid = make_grid(cfg)
    u0 = make_u0(cfg, grid)
    exp = cfg["experiment"]
    n = samples if samples is not None else exp["pilot_samples"]
    eps = max(cfg.eps_list)
    r_lo, r_hi = float(u0.min()), float(u0.max())
    g_lo = np.full(model.dim, 0.0)
    g_hi = np.full(model.dim, 0.0)
    opts = cfg.solver_options()
    for i in range(n):
        path = sample_noise_path(exp["base_seed"] + i, grid.T, grid.M, exp["K"])
        tr = _solve(grid, FineProvider(model, eps), path, u0, opts, cfg)
        r_lo, r_hi = min(r_lo, tr.values.min()), max(r_hi, tr.values.max())
        for v in tr.values:
            g = grid.mesh.gradient(v)
            g_lo = np.minimum(g_lo, g.min(axis=0))
            g_hi = np.maximum(g_hi, g.max(axis=0))
    return (r_lo, r_hi), list(zip(g_lo, g_hi))


def prepare(cfg: ExperimentConfig, table: EffectiveTable | None = None, correctors: bool = False) -> Setup:
    """Model, grids, effective table (loaded, or built on pilot-covering axes) and corrector caches."""
    model = cfg.model()
    grid = make_grid(cfg)
    u0 = make_u0(cfg, grid)
    check_resonance(cfg, cfg.eps_list)
    tcfg = cfg["table"]
    xi_axes = None
    if table is None and tcfg["path"]:
        table = EffectiveTable.from_json(tcfg["path"])
    if table is None and model.oscillates or correctors:
        (r_lo, r_hi), g_ranges = pilot_ranges(cfg, model)
        xi_axes = [axis_covering(lo, hi, tcfg["n_xi"], tcfg["margin"]) for lo, hi in g_ranges]
        if table is None and model.oscillates:
            r_axis = axis_covering(r_lo, r_hi, tcfg["n_r"], tcfg["margin"], include_zero=False)
            table = build_effective_table(model, r_axis, xi_axes, cfg.cell_grid(), cfg.solver_options(),
                                          workers=cfg["experiment"]["workers"])
    setup = Setup(cfg, model, grid, u0, table)
    if correctors:
        axes = table.xi_axes if table is not None else xi_axes
        r_axis = table.r_axis if table is not None else (0.0, 1.0)
        for eps in cfg.eps_list:
            n_y = max(4, int(round(grid.n_x * eps)))
            setup.caches[eps] = CorrectorCache(model, axes, r_axis, CellGrid(n_y, cfg["cell"]["n_tau"]),
                                               cfg.solver_options())
    return setup


def _solve(grid, provider, path, u0, opts, cfg):
    from .solver import solve_trajectory

    return solve_trajectory(grid, provider, path, u0, opts, allow_aliasing=True)


def run_sample(setup: Setup, index: int, eps_list, with_homogenized: bool = True,
               with_corrector: bool = False) -> dict:
    """Fine runs for every eps (and the homogenized run) on one shared noise path."""
    cfg = setup.cfg
    exp = cfg["experiment"]
    seed = exp["base_seed"] + index
    opts = cfg.solver_options()
    grid, model = setup.grid, setup.model
    path = sample_noise_path(seed, grid.T, grid.M, setup.K)
    rec = {"index": index, "seed": seed, "checksum": path.checksum(), "eps": {}}
    try:
        hom = None
        if with_homogenized:
            hom = _solve(grid, HomogenizedProvider(setup.table, model), path, setup.u0, opts, cfg)
            rec["hom_checksum"] = hom.noise_checksum
        for eps in eps_list:
            fine = _solve(grid, FineProvider(model, eps), path, setup.u0, opts, cfg)
            row = {
                "sup_u4": float(np.max(slice_l2(fine))) ** 4,
                "grad_p": field_norm(fine, "Lp_grad", p=model.p),
                "checksum": fine.noise_checksum,
            }
            if hom is not None:
                diff = difference(fine, hom)
                row["error"] = field_norm(diff, "L2_QT")
                if with_corrector:
                    rec_traj = reconstruct_first_order(hom, setup.caches[eps], eps)
                    row["G_plain"] = field_norm(diff, "Lp_grad_norm", p=model.p)
                    row["G_corr"] = field_norm(difference(fine, rec_traj), "Lp_grad_norm", p=model.p)
            rec["eps"][eps] = row
    except StepFailure as exc:
        rec["failure"] = str(exc)
    return rec


def _worker(args):
    setup, index, eps_list, hom, corr = args
    return run_sample(setup, index, eps_list, hom, corr)


def run_ensemble(setup: Setup, eps_list, N: int, with_homogenized=True, with_corrector=False) -> list:
    """All N samples (in parallel with ``experiment.workers`` > 1); aborts above 10% failures."""
    workers = setup.cfg["experiment"]["workers"]
    tasks = [(setup, i, list(eps_list), with_homogenized, with_corrector) for i in range(N)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            records = list(pool.map(_worker, tasks))
    else:
        records = [_worker(t) for t in tasks]
    failures = [r for r in records if "failure" in r]
    if len(failures) > FAILURE_LIMIT * N:
        raise ExperimentAborted(f"{len(failures)} of {N} samples failed (limit {FAILURE_LIMIT:.0%}): "
                                f"first failure: {failures[0]['failure']}")
    for r in failures:
        logger.warning("sample %d failed: %s", r["index"], r["failure"])
    return records


@dataclass
class ConvergenceReport:
    eps_list: list
    N: int
    deltas: list
    errors: np.ndarray  # (n_ok, n_eps)
    probabilities: np.ndarray  # (n_eps, n_delta)
    radii: np.ndarray
    failures: int = 0
    checksums_shared: bool = True

    def stats(self) -> list:
        out = []
        for j, eps in enumerate(self.eps_list):
            e = self.errors[:, j]
            out.append({
                "eps": eps,
                "mean": float(np.mean(e)),
                "median": float(np.median(e)),
                "q10": float(np.quantile(e, 0.1)),
                "q90": float(np.quantile(e, 0.9)),
                "max": float(np.max(e)),
            })
        return out

    @property
    def medians(self) -> np.ndarray:
        return np.median(self.errors, axis=0)

    def rows(self) -> list:
        rows = []
        for j, eps in enumerate(self.eps_list):
            for i, d in enumerate(self.deltas):
                rows.append({"eps": eps, "delta": d, "P": float(self.probabilities[j, i]),
                             "radius": float(self.radii[j, i])})
        return rows

    def to_dict(self) -> dict:
        return {
            "eps_list": self.eps_list,
            "N": self.N,
            "samples_ok": int(self.errors.shape[0]),
            "failures": self.failures,
            "deltas": self.deltas,
            "stats": self.stats(),
            "probabilities": self.rows(),
            "confidence": "95% normal approximation to the binomial",
            "shared_noise": self.checksums_shared,
        }


def probability_table(errors: np.ndarray, deltas) -> tuple:
    n = errors.shape[0]
    P = np.array([[float(np.mean(errors[:, j] > d)) for d in deltas] for j in range(errors.shape[1])])
    radii = Z95 * np.sqrt(P * (1.0 - P) / max(n, 1))
    return P, radii


def _shared(records) -> bool:
    for r in records:
        if "failure" in r:
            continue
        sums = {row["checksum"] for row in r["eps"].values()}
        if "hom_checksum" in r:
            sums.add(r["hom_checksum"])
        if sums != {r["checksum"]}:
            return False
    return True


def convergence_in_probability(cfg: ExperimentConfig, eps_list=None, deltas=None, N: int | None = None,
                               setup: Setup | None = None, records=None) -> ConvergenceReport:
    """Coupled fine/homogenized runs; ``P(||u_eps - u_0||_{L2(Q_T)} > delta)`` per (eps, delta).

    Without explicit deltas the median error at the coarsest eps is used.
    """
    eps_list = list(eps_list or cfg.eps_list)
    N = N or cfg["experiment"]["N"]
    setup = setup or prepare(cfg)
    if records is None:
        records = run_ensemble(setup, eps_list, N)
    ok = [r for r in records if "failure" not in r]
    errors = np.array([[r["eps"][e]["error"] for e in eps_list] for r in ok])
    if deltas is None or len(deltas) == 0:
        deltas = list(cfg["experiment"]["deltas"]) or [float(np.median(errors[:, 0]))]
    P, radii = probability_table(errors, deltas)
    return ConvergenceReport(eps_list, N, [float(d) for d in deltas], errors, P, radii,
                             failures=len(records) - len(ok), checksums_shared=_shared(records))


def corrector_error(cfg: ExperimentConfig, eps_list=None, N: int | None = None, setup: Setup | None = None,
                    records=None) -> dict:
    """Ensemble means of ``||D(u_eps - u_0)||_p`` and ``||D(u_eps - u_0 - eps u_1)||_p`` per eps."""
    eps_list = list(eps_list or cfg.eps_list)
    N = N or cfg["experiment"]["N"]
    setup = setup or prepare(cfg, correctors=True)
    if records is None:
        records = run_ensemble(setup, eps_list, N, with_corrector=True)
    ok = [r for r in records if "failure" not in r]
    rows = []
    for e in eps_list:
        gp = np.array([r["eps"][e]["G_plain"] for r in ok])
        gc = np.array([r["eps"][e]["G_corr"] for r in ok])
        rows.append({"eps": e, "G_plain": float(gp.mean()), "G_corr": float(gc.mean()),
                     "G_plain_se": float(gp.std(ddof=1) / math.sqrt(len(gp))) if len(gp) > 1 else 0.0,
                     "G_corr_se": float(gc.std(ddof=1) / math.sqrt(len(gc))) if len(gc) > 1 else 0.0})
    return {"N": N, "samples_ok": len(ok), "failures": len(records) - len(ok), "rows": rows}


def apriori_experiment(cfg: ExperimentConfig, eps_list=None, N: int | None = None, setup: Setup | None = None,
                       records=None) -> dict:
    eps_list = list(eps_list or cfg.eps_list)
    N = N or cfg["experiment"]["N"]
    if records is None:
        setup = setup or prepare(cfg)
        records = run_ensemble(setup, eps_list, N, with_homogenized=False)
    ok = [r for r in records if "failure" not in r]
    rows = []
    for e in eps_list:
        sup4 = np.array([r["eps"][e]["sup_u4"] for r in ok])
        grad = np.array([r["eps"][e]["grad_p"] for r in ok])
        rows.append({"eps": e, **_apriori_from_samples(sup4, grad)})
    spread = {}
    for key in ("sup_u4", "grad_p"):
        vals = [row[key] for row in rows]
        spread[key] = max(vals) / min(vals) if min(vals) > 0 else (1.0 if max(vals) == 0 else math.inf)
    return {"N": N, "failures": len(records) - len(ok), "rows": rows, "spread": spread}


def increment_experiment(cfg: ExperimentConfig, eps: float | None = None, N: int | None = None) -> IncrementReport:
    """Increment modulus of the fine-scale ensemble at one eps (coarsest by default)."""
    model = cfg.model()
    grid = make_grid(cfg)
    u0 = make_u0(cfg, grid)
    exp = cfg["experiment"]
    eps = eps or max(cfg.eps_list)
    N = N or exp["N"]
    opts = cfg.solver_options()
    ensemble = []
    for i in range(N):
        path = sample_noise_path(exp["base_seed"] + i, grid.T, grid.M, exp["K"])
        ensemble.append(_solve(grid, FineProvider(model, eps), path, u0, opts, cfg))
    return increment_modulus(ensemble, exp["increment_deltas"], model.p, exp["increment_extension"])


# --------------------------------------------------------------------------
# two-scale pairing on synthetic families


def _v(x):
    return np.sin(np.pi * x)


CATALOG = {
    # name: (F(x,t,y,tau), f(x,t,y,tau), closed-form RHS or None)
    "oscillating": (lambda x, t, y, s: _v(x) * np.cos(2 * np.pi * y),
                    lambda x, t, y, s: np.cos(2 * np.pi * y), 1.0 / np.pi),
    "plain": (lambda x, t, y, s: _v(x) * (1.0 + t),
              lambda x, t, y, s: np.cos(np.pi * x) ** 2 + 0.0 * y, None),
    "tau_oscillating": (lambda x, t, y, s: _v(x) * np.exp(-t) * np.cos(2 * np.pi * s),
                        lambda x, t, y, s: np.cos(2 * np.pi * s) + 0.0 * y,
                        (1.0 / np.pi) * (1.0 - np.exp(-1.0))),
    "mixed": (lambda x, t, y, s: _v(x) * np.cos(2 * np.pi * (y - s)),
              lambda x, t, y, s: np.cos(2 * np.pi * (y - s)), 1.0 / np.pi),
}


@dataclass
class SigmaResult:
    case: str
    eps_list: list
    lhs: list
    rhs: float
    gaps: list
    rhs_closed_form: float | None = None

    def decreasing(self, tol: float = 1e-9) -> bool:
        g = self.gaps
        return all(g[i + 1] <= g[i] + tol for i in range(len(g) - 1)) and all(
            g[i + 1] < g[i] for i in range(len(g) - 1) if g[i] > tol)

    def to_dict(self) -> dict:
        return dict(self.__dict__)


def _midpoints(n, a=0.0, b=1.0):
    return a + (np.arange(n) + 0.5) * (b - a) / n


def _gradient_case(eps_list, n_x):
    """u_eps = sin(pi x) + eps w(x) sin(2 pi x/eps), paired (gradient) with cos(2 pi x/eps)."""
    w = _v
    dw = lambda x: np.pi * np.cos(np.pi * x)
    x = _midpoints(n_x)
    lhs = []
    for eps in eps_list:
        y = x / eps
        du = np.pi * np.cos(np.pi * x) + eps * dw(x) * np.sin(2 * np.pi * y) + 2 * np.pi * w(x) * np.cos(2 * np.pi * y)
        lhs.append(float(np.mean(du * np.cos(2 * np.pi * y))))
    # RHS = int int (Du0 + d_y u1) f dy dx on a product grid
    yc = _midpoints(64)
    X, Y = np.meshgrid(x, yc, indexing="ij")
    rhs = float(np.mean((np.pi * np.cos(np.pi * X) + 2 * np.pi * w(X) * np.cos(2 * np.pi * Y)) * np.cos(2 * np.pi * Y)))
    return lhs, rhs, 2.0


def weak_sigma_test(case: str, eps_list, n_x: int = 8192, n_t: int = 256, n_cell: int = 8) -> SigmaResult:
    """``int u_eps f(x, t, x/eps, t/eps)`` against the cell-averaged limit on (0,1)^2."""
    eps_list = [float(e) for e in eps_list]
    for e in eps_list:
        if abs(1.0 / e - round(1.0 / e)) > 1e-9:
            logger.warning("eps=%s does not tile the unit interval: quadrature is not resonant", e)
    if case == "gradient":
        lhs, rhs, exact = _gradient_case(eps_list, n_x)
        return SigmaResult(case, eps_list, lhs, rhs, [abs(v - rhs) for v in lhs], exact)
    if case not in CATALOG:
        raise ValueError(f"unknown catalog case {case!r}")
    F, f, exact = CATALOG[case]
    x = _midpoints(n_x)
    t = _midpoints(n_t)
    X, Tm = np.meshgrid(x, t, indexing="ij")
    lhs = []
    for eps in eps_list:
        Y, S = X / eps, Tm / eps
        lhs.append(float(np.mean(F(X, Tm, Y, S) * f(X, Tm, Y, S))))
    # cell average in (y, tau) at each slow quadrature point, one time row at a time;
    # the catalog is trigonometric of low degree in (y, tau), so a small cell grid is exact
    c = _midpoints(n_cell)
    Yc, Sc = np.meshgrid(c, c, indexing="ij")
    Yc, Sc = Yc[None, :, :], Sc[None, :, :]
    xcol = x[:, None, None]
    total = 0.0
    for tv in t:
        total += float(np.mean(F(xcol, tv, Yc, Sc) * f(xcol, tv, Yc, Sc)))
    rhs = total / len(t)
    return SigmaResult(case, eps_list, lhs, rhs, [abs(v - rhs) for v in lhs], exact)
