"""Semi-implicit Euler-Maruyama for the oscillating and the homogenized SPDE.

One step solves

    (u^{n+1} - u^n)/dt - div a(x, t, x/eps, t/eps, u^n, D u^{n+1})
        = -a0(x, t, x/eps, t/eps, u^n) + sum_k M_k(x/eps, t/eps, u^n) dW_k / dt

on the unit square/interval with zero boundary values. Diffusion is implicit
(damped Newton); the state argument of the flux, the drift and the noise are
lagged. The homogenized equation has the same form with the tabulated
effective coefficients.
"""

from __future__ import annotations

import csv
import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .cell import CellGrid, corrector_1d_oracle, solve_cell
from .coefficients import CoefficientModel, profile_mean
from .discretization import SolverFailure, SolverOptions, StructuredMesh, solve_monotone
from .effective import EffectiveTable, _locate
from .noise import NoisePath

logger = logging.getLogger(__name__)


class InvalidState(ValueError):
    pass


class StepFailure(RuntimeError):
    def __init__(self, message, step=None, history=None, last_iterate=None):
        super().__init__(message)
        self.step = step
        self.history = history or []
        self.last_iterate = last_iterate


@dataclass
class SpaceTimeGrid:
    """Uniform nodes on (0,1)^d with ``n_x`` intervals per side, and ``M`` steps on [0, T]."""

    dim: int = 1
    n_x: int = 128
    T: float = 1.0
    M: int = 100

    def __post_init__(self):
        if self.M < 1:
            raise ValueError("need at least one time step")
        self.mesh = StructuredMesh(self.dim, self.n_x, periodic=False)

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def times(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)

    def same_as(self, other: "SpaceTimeGrid") -> bool:
        return (self.dim, self.n_x, self.M) == (other.dim, other.n_x, other.M) and math.isclose(self.T, other.T)

    def describe(self) -> dict:
        return {"dim": self.dim, "n_x": self.n_x, "T": self.T, "M": self.M}


@dataclass
class FieldTrajectory:
    grid: SpaceTimeGrid
    values: np.ndarray  # (M+1, n_nodes)
    provenance: str
    eps: float | None = None
    iterations: list = field(default_factory=list)
    noise_checksum: str | None = None

    def slice(self, n: int) -> np.ndarray:
        return self.values[n]

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def is_resonant(eps: float, n_x: int, tol: float = 1e-9) -> bool:
    """True when every fine cell of size eps holds an integer number of mesh intervals."""
    m = n_x * eps
    return abs(m - round(m)) < tol and round(m) >= 1


# --------------------------------------------------------------------------
# coefficient providers


class FineProvider:
    """Oscillating coefficients sampled at ``x/eps`` (element centroids for the flux, nodes otherwise)."""

    provenance = "fine"

    def __init__(self, model: CoefficientModel, eps: float):
        if not eps > 0:
            raise ValueError("eps must be positive")
        self.model = model
        self.eps = float(eps)

    @property
    def k_max(self) -> int:
        return self.model.k_max

    def check_grid(self, grid: SpaceTimeGrid, allow_aliasing: bool = True):
        if grid.dim != self.model.dim:
            raise ValueError(f"model is {self.model.dim}-D but the grid is {grid.dim}-D")
        if self.model.oscillates and not is_resonant(self.eps, grid.n_x):
            msg = f"eps={self.eps} is not resonant with n_x={grid.n_x}: oscillations are aliased"
            if not allow_aliasing:
                raise ValueError(msg)
            logger.warning(msg)

    def _fast(self, pts, t):
        y = np.mod(pts / self.eps, 1.0) if self.model.algebra.kind == "periodic" else pts / self.eps
        return y, t / self.eps

    def flux_eval(self, mesh: StructuredMesh, u_prev, t: float):
        model = self.model
        mu = mesh.element_average(u_prev)
        y, tau = self._fast(mesh.centroids, t)
        coef = model.coefficient(mesh.centroids, t, y, tau, mu)
        return lambda lam: model.flux_parts(coef, lam)

    def drift(self, mesh: StructuredMesh, u, t: float):
        y, tau = self._fast(mesh.coords, t)
        return self.model.drift(mesh.coords, t, y, tau, u)

    def noise(self, mesh: StructuredMesh, u, t: float, K: int):
        y, tau = self._fast(mesh.coords, t)
        return self.model.noise_rows(y, tau, u, K)


class HomogenizedProvider:
    """Effective coefficients: tabulated ``q`` and cell-mean drift/noise.

    With a model whose coefficients do not depend on the fast variables the
    effective flux coincides with the original one and is used as is.
    """

    provenance = "homogenized"
    eps = None

    def __init__(self, table: EffectiveTable | None = None, model: CoefficientModel | None = None):
        if table is None and (model is None or model.oscillates):
            raise ValueError("an effective table is required for oscillating media")
        self.table = table
        self.model = model
        self._exact = model is not None and not model.oscillates
        self._means = None
        if model is not None:
            self._means = (profile_mean(model.g0, model.algebra), profile_mean(model.g1, model.algebra))

    @property
    def k_max(self) -> int:
        if self.model is not None:
            return self.model.k_max
        return self.table.k_max

    def check_grid(self, grid, allow_aliasing=True):
        dim = self.model.dim if self.model is not None else self.table.dim
        if grid.dim != dim:
            raise ValueError(f"coefficients are {dim}-D but the grid is {grid.dim}-D")

    def flux_eval(self, mesh: StructuredMesh, u_prev, t: float):
        mu = mesh.element_average(u_prev)
        if self._exact:
            model = self.model
            coef = model.coefficient(mesh.centroids, t, np.zeros_like(mesh.centroids), 0.0, mu)
            return lambda lam: model.flux_parts(coef, lam)
        table, x = self.table, mesh.centroids
        return lambda lam: table.flux_parts(mu, lam, x)

    def drift(self, mesh: StructuredMesh, u, t: float):
        if self.model is not None:
            return self._means[0] * self.model.g0.slow(mesh.coords) * self.model.h(u)
        return self.table.drift(u, mesh.coords)

    def noise(self, mesh: StructuredMesh, u, t: float, K: int):
        if self.model is not None:
            return (self._means[1] * np.asarray(u))[:, None] * np.asarray(self.model.weights[:K])
        return self.table.noise_rows(u, mesh.coords, K)


# --------------------------------------------------------------------------
# time stepping


def advance_step(u, provider, grid: SpaceTimeGrid, t: float, dW, opts: SolverOptions | None = None):
    """One semi-implicit step from time ``t``; returns (new state, Newton result)."""
    mesh = grid.mesh
    u = np.asarray(u, dtype=float)
    if not np.all(np.isfinite(u)):
        raise InvalidState("state contains non-finite values")
    if np.any(u[mesh.boundary] != 0.0):
        raise InvalidState("state violates the zero boundary condition")
    dt = grid.dt
    b = u - dt * provider.drift(mesh, u, t)
    dW = np.asarray(dW, dtype=float)
    if dW.size:
        b = b + provider.noise(mesh, u, t, dW.size) @ dW
    b[mesh.boundary] = 0.0
    flux_eval = provider.flux_eval(mesh, u, t + dt)
    result = solve_monotone(mesh, flux_eval, u, mass=1.0 / dt, b=b, opts=opts)
    if not np.all(np.isfinite(result.u)):
        raise InvalidState("step produced non-finite values")
    return result.u, result


def solve_trajectory(grid: SpaceTimeGrid, provider, noise: NoisePath, u0, opts: SolverOptions | None = None,
                     allow_aliasing: bool = True) -> FieldTrajectory:
    """March ``u0`` over the grid, consuming ``noise`` (same number of steps as the grid)."""
    if noise.M != grid.M or not math.isclose(noise.T, grid.T):
        raise ValueError(f"noise grid (M={noise.M}, T={noise.T}) does not match time grid "
                         f"(M={grid.M}, T={grid.T})")
    provider.check_grid(grid, allow_aliasing)
    K = min(noise.K, provider.k_max)
    inc = noise.increments[:, :K]
    values = np.empty((grid.M + 1, grid.mesh.n_nodes))
    u = np.array(u0, dtype=float)
    u[grid.mesh.boundary] = 0.0
    values[0] = u
    iterations = []
    times = grid.times
    for n in range(grid.M):
        try:
            u, res = advance_step(u, provider, grid, times[n], inc[n], opts)
        except SolverFailure as exc:
            raise StepFailure(f"step {n}: {exc}", step=n, history=exc.history,
                              last_iterate=exc.last_iterate) from exc
        except InvalidState as exc:
            raise StepFailure(f"step {n}: {exc}", step=n) from exc
        values[n + 1] = u
        iterations.append(res.iterations)
    return FieldTrajectory(grid, values, provider.provenance, getattr(provider, "eps", None), iterations,
                           noise.checksum())


# --------------------------------------------------------------------------
# initial data


def initial_condition(mesh: StructuredMesh, kind: str = "sine", amplitude: float = 1.0, path=None) -> np.ndarray:
    """Sine bump, hat, or values tabulated in a CSV file (columns x[, y], value)."""
    x = mesh.coords
    if kind == "sine":
        u = amplitude * np.prod(np.sin(np.pi * x), axis=1)
    elif kind == "hat":
        u = amplitude * np.prod(1.0 - np.abs(2.0 * x - 1.0), axis=1)
    elif kind == "zero":
        u = np.zeros(mesh.n_nodes)
    elif kind == "csv":
        if path is None:
            raise ValueError("csv initial data needs a path")
        data = np.loadtxt(path, delimiter=",", ndmin=2, comments="#")
        if data.shape[1] != mesh.dim + 1:
            raise ValueError(f"expected {mesh.dim + 1} columns in {path}, got {data.shape[1]}")
        if mesh.dim == 1:
            order = np.argsort(data[:, 0])
            u = np.interp(x[:, 0], data[order, 0], data[order, 1])
        else:
            from scipy.interpolate import griddata

            u = griddata(data[:, :2], data[:, 2], x, method="linear", fill_value=0.0)
        u = amplitude * u
    else:
        raise ValueError(f"unknown initial condition {kind!r}")
    u = np.asarray(u, dtype=float)
    u[mesh.boundary] = 0.0
    return u


def write_snapshots(traj: FieldTrajectory, path, every: int = 1):
    """CSV rows ``x_index, t_index, value``."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["x_index", "t_index", "value"])
        for n in range(0, traj.values.shape[0], every):
            for i, v in enumerate(traj.values[n]):
                w.writerow([i, n, repr(float(v))])


# --------------------------------------------------------------------------
# correctors


class CorrectorCache:
    """Cell correctors on a grid of (r, xi) nodes, interpolated multilinearly.

    The power-law corrector is 1-homogeneous in ``xi``, which is used to
    extend beyond the ``xi`` axes; ``r`` is clamped.
    """

    def __init__(self, model: CoefficientModel, xi_axes, r_axis=(0.0,), grid: CellGrid | None = None,
                 opts: SolverOptions | None = None, from_oracle: bool = False, x=None):
        self.model = model
        self.grid = grid or CellGrid()
        if model.dim == 1 and np.ndim(xi_axes[0]) == 0:
            xi_axes = [xi_axes]
        self.xi_axes = [np.asarray(a, dtype=float) for a in xi_axes]
        self.r_axis = np.asarray(r_axis if model.mu_dependent else (0.0, 1.0), dtype=float)
        d, n_y = model.dim, self.grid.n_y
        shape_xi = tuple(len(a) for a in self.xi_axes)
        self.pi = np.zeros((len(self.r_axis),) + shape_xi + (self.grid.n_tau,) + (n_y,) * d)
        r_nodes = self.r_axis if model.mu_dependent else self.r_axis[:1]
        for ir, r in enumerate(r_nodes):
            for idx in np.ndindex(*shape_xi):
                xi = np.array([self.xi_axes[j][i] for j, i in enumerate(idx)])
                if from_oracle:
                    if d != 1 or self.grid.n_tau != 1:
                        raise ValueError("the oracle corrector covers 1-D, tau-independent cells only")
                    sol = corrector_1d_oracle(model, r, xi[0], n_y, x=x)
                else:
                    sol = solve_cell(model, x, 0.0, r, xi, self.grid, opts)
                self.pi[(ir,) + idx] = sol.corrector.reshape((self.grid.n_tau,) + (n_y,) * d)
        if not model.mu_dependent:
            self.pi[1:] = self.pi[:1]
        self.sup = float(np.max(np.abs(self.pi))) if self.pi.size else 0.0

    def _cell_values(self, field_, y, tau):
        """Periodic multilinear interpolation of cell fields (n, n_tau, n_y[, n_y]) at y, tau."""
        n_y, n_tau, d = self.grid.n_y, self.grid.n_tau, self.model.dim
        n = y.shape[0]
        rows = np.arange(n)
        s = np.mod(tau, 1.0) * n_tau
        t0 = np.floor(s).astype(int) % n_tau
        wt = s - np.floor(s)
        out = np.zeros(n)
        pos = np.mod(y, 1.0) * n_y
        base = np.floor(pos).astype(int)
        frac = pos - base
        for ct in (0, 1):
            w_t = wt if ct else 1.0 - wt
            ti = (t0 + ct) % n_tau
            for corner in np.ndindex(*([2] * d)):
                w = w_t.copy()
                idx = [rows, ti]
                for j in range(d):
                    w = w * (frac[:, j] if corner[j] else 1.0 - frac[:, j])
                    idx.append((base[:, j] + corner[j]) % n_y)
                out += w * field_[tuple(idx)]
        return out

    def evaluate(self, r, xi, y, tau=0.0):
        """``pi(r, xi)(y, tau)`` at n points: r (n,), xi (n, d), y (n, d)."""
        d = self.model.dim
        xi = np.asarray(xi, dtype=float).reshape(-1, d)
        y = np.asarray(y, dtype=float).reshape(-1, d)
        n = xi.shape[0]
        r = np.clip(np.broadcast_to(np.asarray(r, dtype=float), (n,)), self.r_axis[0], self.r_axis[-1])
        tau = np.broadcast_to(np.asarray(tau, dtype=float), (n,))
        ratios = np.ones(n)
        for j, ax in enumerate(self.xi_axes):
            v = xi[:, j]
            ratios = np.maximum(ratios, np.where(v > 0, v / ax[-1], v / ax[0]))
        xi_s = xi / ratios[:, None]
        ir, wr, _ = _locate(self.r_axis, r)
        locs = [_locate(ax, xi_s[:, j]) for j, ax in enumerate(self.xi_axes)]
        out = np.zeros(n)
        for corner in np.ndindex(*([2] * (d + 1))):
            w = wr if corner[0] else 1.0 - wr
            idx = [ir + corner[0]]
            for j in range(d):
                w = w * (locs[j][1] if corner[j + 1] else 1.0 - locs[j][1])
                idx.append(locs[j][0] + corner[j + 1])
            nodes = self.pi[tuple(idx)]
            out += w * self._cell_values(nodes, y, tau)
        return out * ratios


def reconstruct_first_order(u0: FieldTrajectory, cache: CorrectorCache, eps: float) -> FieldTrajectory:
    """``u0 + eps * pi(u0, D u0)(x/eps, t/eps)`` at every node and time."""
    grid = u0.grid
    mesh = grid.mesh
    values = np.empty_like(u0.values)
    y = mesh.coords / eps
    for n, t in enumerate(grid.times):
        u = u0.values[n]
        du = mesh.nodal_gradient(u)
        corr = cache.evaluate(u, du, y, t / eps)
        v = u + eps * corr
        v[mesh.boundary] = 0.0
        values[n] = v
    return FieldTrajectory(grid, values, "reconstructed", eps, noise_checksum=u0.noise_checksum)


# --------------------------------------------------------------------------
# norms


def _time_weights(grid: SpaceTimeGrid) -> np.ndarray:
    w = np.full(grid.M + 1, grid.dt)
    w[[0, -1]] *= 0.5
    return w


def dual_norm(mesh: StructuredMesh, v) -> float:
    """H^{-1} surrogate: ``||D w||_{L2}`` with ``-Laplace w = v``, ``w = 0`` on the boundary."""
    w = mesh.dirichlet_poisson(v)
    g = mesh.gradient(w)
    return float(math.sqrt(np.sum(mesh.elem_measure[:, None] * g * g)))


def dual_potentials(mesh: StructuredMesh, values) -> np.ndarray:
    """Poisson potentials for each row of ``values`` (linear, so increments can be formed later)."""
    return np.array([mesh.dirichlet_poisson(v) for v in np.atleast_2d(values)])


def field_norm(obj, kind: str, p: float = 2.0, mesh: StructuredMesh | None = None):
    """Norms used by the harness.

    ``L2_QT``: space-time L2 (trapezoid); ``Lp_grad``: ``int_0^T ||Du||_p^p dt``
    (the p-th power); ``Lp_grad_norm``: its p-th root; ``L2``/``dual``: a single
    slice (pass ``mesh``), the latter the H^{-1} surrogate.
    """
    if isinstance(obj, FieldTrajectory):
        grid, vals = obj.grid, obj.values
        mesh = grid.mesh
        wt = _time_weights(grid)
        if kind == "L2_QT":
            return float(math.sqrt(np.sum(wt * ((vals ** 2) @ mesh.trapezoid_weights))))
        if kind in ("Lp_grad", "Lp_grad_norm"):
            total = 0.0
            for n in range(vals.shape[0]):
                g = mesh.gradient(vals[n])
                mag = np.sqrt(np.sum(g * g, axis=1))
                total += wt[n] * float(np.sum(mesh.elem_measure * mag ** p))
            return total if kind == "Lp_grad" else total ** (1.0 / p)
        raise ValueError(f"unknown trajectory norm {kind!r}")
    if mesh is None:
        raise ValueError("slice norms need the mesh")
    v = np.asarray(obj, dtype=float)
    if v.shape != (mesh.n_nodes,):
        raise ValueError("slice does not match the mesh")
    if kind == "L2":
        return float(math.sqrt(np.sum(mesh.trapezoid_weights * v * v)))
    if kind == "dual":
        return dual_norm(mesh, v)
    raise ValueError(f"unknown slice norm {kind!r}")


def difference(a: FieldTrajectory, b: FieldTrajectory, provenance: str = "difference") -> FieldTrajectory:
    if not a.grid.same_as(b.grid):
        raise ValueError("trajectories live on different grids")
    return FieldTrajectory(a.grid, a.values - b.values, provenance)
