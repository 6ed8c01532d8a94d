"""Homogenized coefficients and the interpolation table used by the macro solver."""

from __future__ import annotations

import itertools
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .cell import CellGrid, invert_power, solve_cell
from .coefficients import TWO_PI, CoefficientModel, MeanValue, QuadSettings, mean_value
from .discretization import SolverFailure, SolverOptions

logger = logging.getLogger(__name__)

TABLE_VERSION = 1


class TableBuildError(RuntimeError):
    def __init__(self, message, r=None, xi=None):
        super().__init__(message)
        self.r = r
        self.xi = xi


def _torus_mean_of(fn, m: int, n: int) -> float:
    axes = [np.arange(n) * (TWO_PI / n)] * m
    theta = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return float(np.mean(fn(theta)))


def effective_flux(model: CoefficientModel, x, t: float, r: float, xi, grid: CellGrid | None = None,
                   opts: SolverOptions | None = None) -> np.ndarray:
    """Cell-averaged flux ``q(x, t, r, xi)``.

    Periodic media go through :func:`solve_cell`. One-dimensional
    quasi-periodic media with tau-independent flux use flux constancy
    directly: ``q = sign(xi) * (|xi| / <coef^(-1/(p-1))>)^(p-1)`` with the
    mean taken on the torus the coefficient lives on.
    """
    xi = np.asarray(xi, dtype=float).reshape(model.dim)
    if model.algebra.kind == "periodic":
        return solve_cell(model, x, t, r, xi, grid, opts).flux
    if model.dim != 1 or model.g.depends_on_tau(model.algebra):
        raise NotImplementedError(
            "quasi-periodic effective flux is available for 1-D tau-independent media only"
        )
    p = model.p
    x = np.zeros(1) if x is None else np.asarray(x, dtype=float).reshape(1)
    scale = model.g.slow(x) * model._mu_factor(r)
    nodes = (grid.n_y if grid else 64)
    lo, _ = model.g.bounds()
    if lo <= 0.0:
        raise ValueError("flux coefficient must be positive for the flux-constancy formula")
    m = _torus_mean_of(lambda th: model.g.torus(th) ** (-1.0 / (p - 1.0)), model.algebra.torus_dim, nodes)
    m *= float(scale) ** (-1.0 / (p - 1.0))
    return np.array([float(invert_power(np.array(xi[0] / m), 1.0 + 1.0 / (p - 1.0)))])


def effective_lower_order(model: CoefficientModel, which: str, r: float, x=None, t: float = 0.0,
                          k: int | None = None, quad: QuadSettings | None = None) -> float:
    """Cell mean of the drift (``which='drift'``) or of noise row ``k`` (``which='noise'``)."""
    if which == "drift":
        mv = mean_value(model.g0, model.algebra, quad)
        slow = model.g0.slow(np.zeros(model.dim) if x is None else np.asarray(x, dtype=float))
        return float(mv.estimate * slow * model.h(r))
    if which == "noise":
        if k is None or not 1 <= k <= model.k_max:
            raise IndexError(f"noise row {k} outside 1..{model.k_max}")
        mv = mean_value(model.g1, model.algebra, quad)
        return float(mv.estimate * model.weights[k - 1] * r)
    raise ValueError(f"unknown lower-order term {which!r}")


def lower_order_mean(model: CoefficientModel, integrand, quad: QuadSettings | None = None) -> MeanValue:
    """Mean value of an arbitrary cell integrand ``integrand(y, tau)`` (with error indicator)."""
    return mean_value(integrand, model.algebra, quad)


def effective_growth_constant(model: CoefficientModel) -> float:
    """Constant ``C`` with ``|q(r, xi)| <= C |xi|^(p-1)`` for the power-law family.

    The corrector minimizes the cell energy, so ``<g|xi+grad pi|^p> <= g_hi |xi|^p``;
    Hoelder then gives ``|q| <= c2 (c2 / coef_lo)^((p-1)/p) |xi|^(p-1)``.
    """
    c = model.constants()
    lo, _ = model.g.bounds()
    coef_lo = lo * model.g.slow_range()[0]
    if coef_lo <= 0.0:
        return float("inf")
    return c.c2 * (c.c2 / coef_lo) ** ((model.p - 1.0) / model.p)


# --------------------------------------------------------------------------
# table


def _locate(axis, v):
    axis = np.asarray(axis)
    i = np.clip(np.searchsorted(axis, v, side="right") - 1, 0, len(axis) - 2)
    width = axis[i + 1] - axis[i]
    return i, (v - axis[i]) / width, width


@dataclass
class EffectiveTable:
    """Tabulated ``q(r, xi)``, ``q0(r)`` and ``M~_k(r)`` with multilinear lookup.

    Arrays carry a leading slow-x axis (length 1 for x-independent media).
    Out-of-range queries are extrapolated — homogeneously in ``xi``,
    clamped (flux) or linearly (lower order) in ``r`` — and counted.
    """

    p: float
    r_axis: np.ndarray
    xi_axes: list
    q_values: np.ndarray  # (n_xs, n_r, *n_xi, dim)
    q0_values: np.ndarray  # (n_xs, n_r)
    mtilde_values: np.ndarray  # (n_xs, n_r, K)
    x_axis: np.ndarray | None = None
    extrapolations: int = 0
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.r_axis = np.asarray(self.r_axis, dtype=float)
        self.xi_axes = [np.asarray(a, dtype=float) for a in self.xi_axes]
        for name, ax in [("r", self.r_axis)] + [(f"xi{d}", a) for d, a in enumerate(self.xi_axes)]:
            if len(ax) < 2 or np.any(np.diff(ax) <= 0):
                raise ValueError(f"axis {name} must be strictly increasing with at least two nodes")
        for d, a in enumerate(self.xi_axes):
            if not a[0] < 0.0 < a[-1]:
                raise ValueError(f"axis xi{d} must straddle 0")
        self.q_values = np.asarray(self.q_values, dtype=float)
        self.q0_values = np.asarray(self.q0_values, dtype=float)
        self.mtilde_values = np.asarray(self.mtilde_values, dtype=float)
        if self.x_axis is not None:
            self.x_axis = np.asarray(self.x_axis, dtype=float)
        self._warned = False

    @property
    def dim(self) -> int:
        return len(self.xi_axes)

    @property
    def k_max(self) -> int:
        return self.mtilde_values.shape[-1]

    def _note_extrapolation(self, count: int, what: str):
        if count:
            self.extrapolations += int(count)
            if not self._warned:
                logger.warning("effective table extrapolated %s (further occurrences counted)", what)
                self._warned = True

    def _x_index(self, x, n):
        if self.x_axis is None or x is None:
            return np.zeros(n, dtype=int)
        x = np.asarray(x, dtype=float).reshape(n, -1)[:, 0]
        return np.abs(x[:, None] - self.x_axis[None, :]).argmin(axis=1)

    def _interp_xi(self, xs, r, xi):
        """Multilinear value and xi-Jacobian inside the table (r clamped)."""
        n, d = xi.shape
        ir, wr, _ = _locate(self.r_axis, r)
        locs = [_locate(ax, xi[:, j]) for j, ax in enumerate(self.xi_axes)]
        val = np.zeros((n, d))
        jac = np.zeros((n, d, d))
        for corner in itertools.product((0, 1), repeat=d + 1):
            cr = corner[0]
            idx = [xs, ir + cr] + [locs[j][0] + corner[j + 1] for j in range(d)]
            node = self.q_values[tuple(idx)]
            w_r = wr if cr else 1.0 - wr
            ws = [locs[j][1] if corner[j + 1] else 1.0 - locs[j][1] for j in range(d)]
            weight = w_r * np.prod(ws, axis=0) if d else w_r
            val += weight[:, None] * node
            for j in range(d):
                dw = (1.0 if corner[j + 1] else -1.0) / locs[j][2]
                others = np.prod([ws[i] for i in range(d) if i != j], axis=0) if d > 1 else 1.0
                jac[:, :, j] += (w_r * dw * others)[:, None] * node
        return val, jac

    def flux(self, r, xi, x=None):
        """``q`` and its xi-Jacobian at ``n`` query points (r: (n,), xi: (n, dim))."""
        xi = np.asarray(xi, dtype=float).reshape(-1, self.dim)
        n = xi.shape[0]
        r = np.broadcast_to(np.asarray(r, dtype=float), (n,))
        lo_r, hi_r = self.r_axis[0], self.r_axis[-1]
        out_r = (r < lo_r) | (r > hi_r)
        r_c = np.clip(r, lo_r, hi_r)
        # homogeneous rescaling into the xi box
        ratios = np.ones(n)
        for j, ax in enumerate(self.xi_axes):
            v = xi[:, j]
            ratios = np.maximum(ratios, np.where(v > 0, v / ax[-1], v / ax[0]))
        outside = ratios > 1.0
        self._note_extrapolation(int(np.count_nonzero(out_r | outside)), "beyond its axes")
        xs = self._x_index(x, n)
        val, jac = self._interp_xi(xs, r_c, xi / ratios[:, None])
        val = val * (ratios ** (self.p - 1.0))[:, None]
        jac = jac * (ratios ** (self.p - 2.0))[:, None, None]
        return val, jac

    def flux_parts(self, r, xi, x=None):
        """Flux, Jacobian and a nonnegative secant ``q.xi/|xi|^2`` (for Picard steps)."""
        val, jac = self.flux(r, xi, x)
        xi = np.asarray(xi, dtype=float).reshape(val.shape)
        sq = np.einsum("ij,ij->i", xi, xi)
        qx = np.einsum("ij,ij->i", val, xi)
        diag = np.einsum("ijj->i", jac) / self.dim
        secant = np.where(sq > 1e-24, np.maximum(qx, 0.0) / np.maximum(sq, 1e-300), diag)
        return val, jac, secant

    def _lower(self, values, r, x):
        r = np.atleast_1d(np.asarray(r, dtype=float))
        n = r.shape[0]
        self._note_extrapolation(int(np.count_nonzero((r < self.r_axis[0]) | (r > self.r_axis[-1]))),
                                 "in r")
        i, w, _ = _locate(self.r_axis, r)  # w outside [0,1] extrapolates linearly
        xs = self._x_index(x, n)
        a, b = values[xs, i], values[xs, i + 1]
        if values.ndim == 3:
            w = w[:, None]
        return (1.0 - w) * a + w * b

    def drift(self, r, x=None):
        return self._lower(self.q0_values, r, x)

    def noise_rows(self, r, x=None, k: int | None = None):
        out = self._lower(self.mtilde_values, r, x)
        return out if k is None else out[:, :k]

    # -- persistence ---------------------------------------------------

    def to_dict(self) -> dict:
        return {
            "version": TABLE_VERSION,
            "p": self.p,
            "r_axis": self.r_axis.tolist(),
            "xi_axes": [a.tolist() for a in self.xi_axes],
            "x_axis": None if self.x_axis is None else self.x_axis.tolist(),
            "q_values": self.q_values.tolist(),
            "q0_values": self.q0_values.tolist(),
            "mtilde_values": self.mtilde_values.tolist(),
            "meta": self.meta,
        }

    def to_json(self, path=None) -> str:
        text = json.dumps(self.to_dict(), indent=1, sort_keys=True)
        if path is not None:
            with open(path, "w", encoding="utf-8") as fh:
                fh.write(text)
        return text

    @classmethod
    def from_dict(cls, data: dict) -> "EffectiveTable":
        version = data.get("version")
        if version != TABLE_VERSION:
            raise ValueError(f"unsupported table version {version!r}")
        k = len(data["mtilde_values"][0][0]) if data["mtilde_values"] and data["mtilde_values"][0] else 0
        n_xs, n_r = len(data["q0_values"]), len(data["r_axis"])
        mt = np.asarray(data["mtilde_values"], dtype=float).reshape(n_xs, n_r, k)
        return cls(
            p=float(data["p"]),
            r_axis=data["r_axis"],
            xi_axes=data["xi_axes"],
            q_values=data["q_values"],
            q0_values=data["q0_values"],
            mtilde_values=mt,
            x_axis=data.get("x_axis"),
            meta=data.get("meta", {}),
        )

    @classmethod
    def from_json(cls, path) -> "EffectiveTable":
        with open(path, encoding="utf-8") as fh:
            return cls.from_dict(json.load(fh))


def _node_task(args):
    model, x, r, xi, grid, opts = args
    try:
        return effective_flux(model, x, 0.0, r, xi, grid, opts), None
    except (SolverFailure, ValueError, NotImplementedError) as exc:
        return None, f"{type(exc).__name__}: {exc}"


def axis_covering(lo: float, hi: float, n: int, margin: float = 1.5, include_zero: bool = True):
    """Uniform axis covering ``margin`` times the observed range ``[lo, hi]``."""
    center, half = 0.5 * (lo + hi), 0.5 * (hi - lo)
    half = max(half * margin, 1e-3)
    a, b = center - half, center + half
    if include_zero:
        a, b = min(a, -half / n), max(b, half / n)
    axis = np.linspace(a, b, n)
    if include_zero and not np.any(axis == 0.0):
        axis = np.unique(np.append(axis, 0.0))
    return axis


def build_effective_table(model: CoefficientModel, r_axis, xi_axes, grid: CellGrid | None = None,
                          opts: SolverOptions | None = None, x_axis=None, workers: int | None = None,
                          quad: QuadSettings | None = None) -> EffectiveTable:
    """Fill an :class:`EffectiveTable` by solving the cell problem at every node.

    μ-free media are solved once per ``xi`` node and broadcast over ``r``.
    Any node failure aborts with the failing ``(r, xi)`` attached.
    """
    grid = grid or CellGrid()
    r_axis = np.asarray(r_axis, dtype=float)
    if model.dim == 1 and np.ndim(xi_axes[0]) == 0:
        xi_axes = [xi_axes]
    xi_axes = [np.asarray(a, dtype=float) for a in xi_axes]
    if len(xi_axes) != model.dim:
        raise ValueError("need one xi axis per space dimension")
    xs_nodes = [None] if x_axis is None else [np.full(model.dim, xv) for xv in np.asarray(x_axis, float)]
    r_nodes = r_axis if model.mu_dependent else r_axis[:1]
    xi_grid = list(itertools.product(*[range(len(a)) for a in xi_axes]))

    tasks, keys = [], []
    for ix, xv in enumerate(xs_nodes):
        for ir, r in enumerate(r_nodes):
            for idx in xi_grid:
                xi = np.array([xi_axes[d][i] for d, i in enumerate(idx)])
                tasks.append((model, xv, float(r), xi, grid, opts))
                keys.append((ix, ir, idx))
    if workers and workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(_node_task, tasks, chunksize=max(1, len(tasks) // (4 * workers))))
    else:
        results = [_node_task(t) for t in tasks]

    shape = (len(xs_nodes), len(r_axis)) + tuple(len(a) for a in xi_axes) + (model.dim,)
    q = np.zeros(shape)
    for (ix, ir, idx), task, (flux, err) in zip(keys, tasks, results):
        if err is not None:
            raise TableBuildError(f"cell solve failed at r={task[2]}, xi={task[3].tolist()}: {err}",
                                  r=task[2], xi=task[3])
        if model.mu_dependent:
            q[(ix, ir) + idx] = flux
        else:
            q[(ix, slice(None)) + idx] = flux

    q0 = np.zeros((len(xs_nodes), len(r_axis)))
    mt = np.zeros((len(xs_nodes), len(r_axis), model.k_max))
    for ix, xv in enumerate(xs_nodes):
        for ir, r in enumerate(r_axis):
            q0[ix, ir] = effective_lower_order(model, "drift", r, x=xv, quad=quad)
            for k in range(1, model.k_max + 1):
                mt[ix, ir, k - 1] = effective_lower_order(model, "noise", r, k=k, quad=quad)
    meta = {"n_y": grid.n_y, "n_tau": grid.n_tau, "model": model.to_dict()}
    return EffectiveTable(model.p, r_axis, xi_axes, q, q0, mt,
                          x_axis=None if x_axis is None else np.asarray(x_axis, dtype=float), meta=meta)


def table_properties(table: EffectiveTable, growth_constant: float | None = None,
                     homogeneity_pairs: int = 0) -> dict:
    """Check zero-at-origin, pairwise strict monotonicity and growth on the tabulated nodes."""
    d = table.dim
    xi_nodes = np.array(list(itertools.product(*table.xi_axes)))
    out = {"zero_at_origin": True, "monotone": True, "min_monotonicity": np.inf, "growth": True,
           "max_growth_ratio": 0.0}
    for ix in range(table.q_values.shape[0]):
        for ir, r in enumerate(table.r_axis):
            qs = table.q_values[ix, ir].reshape(-1, d)
            zero = np.all(xi_nodes == 0.0, axis=1)
            if np.any(zero) and np.max(np.abs(qs[zero])) != 0.0:
                out["zero_at_origin"] = False
            dq = qs[:, None, :] - qs[None, :, :]
            dx = xi_nodes[:, None, :] - xi_nodes[None, :, :]
            inner = np.einsum("ijk,ijk->ij", dq, dx)
            off = ~np.eye(len(qs), dtype=bool)
            mono = float(np.min(inner[off])) if np.any(off) else np.inf
            out["min_monotonicity"] = min(out["min_monotonicity"], mono)
            if mono <= 0.0:
                out["monotone"] = False
            if growth_constant is not None:
                bound = growth_constant * (1.0 + abs(r) ** (table.p - 1.0)
                                           + np.linalg.norm(xi_nodes, axis=1) ** (table.p - 1.0))
                ratio = float(np.max(np.linalg.norm(qs, axis=1) / bound))
                out["max_growth_ratio"] = max(out["max_growth_ratio"], ratio)
                out["growth"] = out["growth"] and ratio <= 1.0
    return out
