"""Cell problem for the corrector and its closed-form 1-D counterpart."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.optimize import brentq

from .coefficients import CoefficientModel
from .discretization import SolverOptions, StructuredMesh, solve_monotone

logger = logging.getLogger(__name__)


class OracleFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class CellGrid:
    n_y: int = 64
    n_tau: int = 1

    def __post_init__(self):
        if self.n_y < 4:
            raise ValueError("cell grid needs n_y >= 4")
        if self.n_tau < 1:
            raise ValueError("cell grid needs n_tau >= 1")

    @property
    def tau_nodes(self) -> np.ndarray:
        return np.arange(self.n_tau) / self.n_tau


@lru_cache(maxsize=16)
def cell_mesh(dim: int, n_y: int) -> StructuredMesh:
    return StructuredMesh(dim, n_y, periodic=True)


@dataclass
class CellSolution:
    """Mean-zero corrector per tau-slice and the resulting cell-averaged flux."""

    corrector: np.ndarray  # (n_tau, n_nodes)
    gradient: np.ndarray  # (n_tau, n_elem, dim): grad_y of the corrector
    residual: float
    flux: np.ndarray  # (dim,)
    iterations: int
    xi: np.ndarray
    r: float
    grid: CellGrid
    slice_fluxes: np.ndarray = field(default=None)
    history: list = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "xi": self.xi.tolist(),
            "r": self.r,
            "flux": self.flux.tolist(),
            "residual": self.residual,
            "iterations": self.iterations,
            "n_y": self.grid.n_y,
            "n_tau": self.grid.n_tau,
            "corrector": self.corrector.tolist(),
        }


def _point(x, dim):
    return np.zeros(dim) if x is None else np.asarray(x, dtype=float).reshape(dim)


def _cell_average(weights, values):
    """Weighted mean of per-element values, shifted by the first element.

    Summing deviations keeps the rounding proportional to the variation of
    the field, so a constant flux averages to itself exactly.
    """
    ref = values[0]
    return ref + (weights[:, None] * (values - ref)).sum(axis=0) / weights.sum()


def solve_cell(model: CoefficientModel, x, t: float, r: float, xi, grid: CellGrid | None = None,
               opts: SolverOptions | None = None, initial=None) -> CellSolution:
    """Solve the periodic cell problem for the corrector at state ``r`` and gradient ``xi``.

    The problem has no tau-derivative, so each tau-node is an independent
    elliptic problem in y; the returned flux averages the slices.
    """
    grid = grid or CellGrid()
    opts = opts or SolverOptions()
    dim = model.dim
    if model.algebra.kind != "periodic":
        raise NotImplementedError(
            "the discrete cell solver needs a periodic algebra; use effective_flux for "
            "1-D quasi-periodic media"
        )
    xi = np.asarray(xi, dtype=float).reshape(dim)
    if not np.all(np.isfinite(xi)):
        raise ValueError("non-finite macroscopic gradient")
    if grid.n_tau == 1 and model.g.depends_on_tau(model.algebra):
        logger.warning("flux depends on tau but the cell grid has a single tau-node")
    mesh = cell_mesh(dim, grid.n_y)
    x = _point(x, dim)
    xe = np.broadcast_to(x, mesh.centroids.shape)
    correctors, grads, fluxes = [], [], []
    residual, iterations, history = 0.0, 0, []
    for j, tau in enumerate(grid.tau_nodes):
        coef = model.coefficient(xe, t, mesh.centroids, tau, r)

        def flux_eval(lam, coef=coef):
            return model.flux_parts(coef, lam)

        start = np.zeros(mesh.n_nodes) if initial is None else np.asarray(initial, dtype=float)[j]
        result = solve_monotone(mesh, flux_eval, start, xi=xi, opts=opts, mean_zero=True)
        pi = result.u - result.u.mean()
        lam = xi + mesh.gradient(pi)
        flux, _, _ = model.flux_parts(coef, lam)
        correctors.append(pi)
        grads.append(lam - xi)
        fluxes.append(_cell_average(mesh.elem_measure, flux))
        residual = max(residual, result.residual)
        iterations += result.iterations
        history.append(result.history)
    fluxes = np.array(fluxes)
    return CellSolution(
        corrector=np.array(correctors),
        gradient=np.array(grads),
        residual=residual,
        flux=_cell_average(np.ones(len(fluxes)), fluxes),
        iterations=iterations,
        xi=xi,
        r=float(r),
        grid=grid,
        slice_fluxes=fluxes,
        history=history,
    )


def invert_power(v, p):
    """Inverse of ``lam -> |lam|^(p-2) lam``."""
    v = np.asarray(v, dtype=float)
    if p == 2.0:
        return v
    return np.sign(v) * np.abs(v) ** (1.0 / (p - 1.0))


def flux_constancy_root(coef, xi: float, p: float, mean=np.mean, xtol: float = 1e-15):
    """Solve ``mean(inv(q / coef)) = xi`` for q; returns (q, iterations)."""
    if xi == 0.0:
        return 0.0, 0
    f = lambda q: float(mean(invert_power(q / coef, p))) - xi
    base = abs(xi) ** (p - 2.0) * xi
    lo_c, hi_c = float(np.min(coef)), float(np.max(coef))
    if lo_c <= 0.0:
        raise OracleFailure("flux coefficient is not positive; root cannot be bracketed")
    a, b = sorted((0.5 * lo_c * base, 2.0 * hi_c * base))
    try:
        q, info = brentq(f, a, b, xtol=xtol * max(1.0, abs(base)), rtol=4 * np.finfo(float).eps,
                         full_output=True)
    except ValueError as exc:
        raise OracleFailure(f"bracketing failed on [{a}, {b}]") from exc
    return q, info.iterations


def corrector_1d_oracle(model: CoefficientModel, r: float, xi: float, n: int, x=None, t: float = 0.0,
                        tau: float = 0.0) -> CellSolution:
    """1-D cell corrector from flux constancy.

    In one dimension the cell equation forces ``a(y, r, xi + pi'(y)) = q``
    for a constant q. Inverting the monotone flux pointwise at the ``n``
    midpoints and imposing zero mean on ``pi'`` gives a scalar equation
    for q, solved by bracketing; ``pi`` follows by cumulative summation.
    """
    if model.dim != 1:
        raise ValueError("the flux-constancy oracle is one-dimensional")
    xi = float(np.asarray(xi, dtype=float).reshape(()))
    h = 1.0 / n
    y_mid = (np.arange(n) + 0.5) * h
    x = _point(x, 1)
    coef = np.asarray(model.coefficient(np.broadcast_to(x, (n, 1)), t, y_mid[:, None], tau, r), dtype=float)
    q, iterations = flux_constancy_root(coef, xi, model.p)
    dpi = invert_power(q / coef, model.p) - xi
    pi = np.concatenate([[0.0], np.cumsum(dpi[:-1]) * h])
    pi -= pi.mean()
    lam = xi + dpi
    achieved = coef * np.abs(lam) ** (model.p - 2.0) * lam
    grid = CellGrid(n_y=n, n_tau=1)
    return CellSolution(
        corrector=pi[None, :],
        gradient=dpi[None, :, None],
        residual=float(np.max(np.abs(achieved - q))),
        flux=np.array([q]),
        iterations=iterations,
        xi=np.array([xi]),
        r=float(r),
        grid=grid,
        slice_fluxes=np.array([[q]]),
    )
