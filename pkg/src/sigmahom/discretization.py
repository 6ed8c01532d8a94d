"""Structured grids and the damped Newton solver for monotone flux problems.

Both the periodic cell and the Dirichlet domain use the same discrete weak
form: piecewise-linear nodal fields, one gradient per element (intervals in
1-D, two triangles per square in 2-D), flux evaluated at element centroids.
In 1-D this is the standard finite-difference scheme with midpoint fluxes.

The nonlinear problems solved here all have the form

    mass * |node| * (u - b) + G^T W a(xi + G u) = 0      on free nodes

with ``a`` monotone in its argument.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from . import kernels

logger = logging.getLogger(__name__)

FluxEval = Callable[[np.ndarray], tuple]


class SolverFailure(RuntimeError):
    """Damped Newton (with Picard fallback) did not reach the tolerance."""

    def __init__(self, message, last_iterate=None, history=None):
        super().__init__(message)
        self.last_iterate = last_iterate
        self.history = history or []


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 50
    max_halvings: int = 12
    picard_relax: float = 0.5


@dataclass
class NewtonResult:
    u: np.ndarray
    residual: float
    iterations: int
    history: list = field(default_factory=list)
    picard_steps: int = 0


class StructuredMesh:
    """Uniform mesh of the unit cube, periodic (cell) or with Dirichlet boundary."""

    def __init__(self, dim: int, n: int, periodic: bool):
        if dim not in (1, 2):
            raise ValueError("only 1-D and 2-D grids are supported")
        if n < 2:
            raise ValueError("need at least two intervals per dimension")
        self.dim = dim
        self.n = n
        self.periodic = periodic
        self.h = 1.0 / n
        nn = n if periodic else n + 1
        self.shape = (nn,) * dim
        self.n_nodes = nn ** dim
        axis = np.arange(nn) * self.h
        grids = np.meshgrid(*([axis] * dim), indexing="ij")
        self.coords = np.stack([g.ravel() for g in grids], axis=-1)
        self._build(nn)
        if periodic:
            self.boundary = np.zeros(self.n_nodes, dtype=bool)
            # one pinned node removes the constant null space
            self.free = np.arange(1, self.n_nodes)
        else:
            on_edge = np.zeros(self.n_nodes, dtype=bool)
            for d in range(dim):
                on_edge |= (self.coords[:, d] == 0.0) | (np.isclose(self.coords[:, d], 1.0))
            self.boundary = on_edge
            self.free = np.nonzero(~on_edge)[0]
        self.node_measure = self.h ** dim
        self.trapezoid_weights = self._trapezoid()
        self._laplacian_lu = None

    def _index(self, nn, *ij):
        idx = 0
        for k in ij:
            idx = idx * nn + (k % nn if self.periodic else k)
        return idx

    def _build(self, nn):
        n, h, dim = self.n, self.h, self.dim
        rows, cols, vals = [], [], []
        centroids = []
        if dim == 1:
            e = np.arange(n)
            left = e
            right = (e + 1) % nn if self.periodic else e + 1
            rows = np.concatenate([e, e])
            cols = np.concatenate([left, right])
            vals = np.concatenate([-np.ones(n), np.ones(n)]) / h
            centroids = ((e + 0.5) * h)[:, None]
            measure = np.full(n, h)
            self.elements = np.stack([left, right], axis=1)
        else:
            tris, cents = [], []
            for i in range(n):
                for j in range(n):
                    a = self._index(nn, i, j)
                    b = self._index(nn, i + 1, j)
                    c = self._index(nn, i + 1, j + 1)
                    d = self._index(nn, i, j + 1)
                    # lower-right triangle: d/dx1 from a->b, d/dx2 from b->c
                    tris.append(((a, b, c), ((b, a), (c, b))))
                    cents.append(((i + 2.0 / 3.0) * h, (j + 1.0 / 3.0) * h))
                    # upper-left triangle: d/dx1 from d->c, d/dx2 from a->d
                    tris.append(((a, c, d), ((c, d), (d, a))))
                    cents.append(((i + 1.0 / 3.0) * h, (j + 2.0 / 3.0) * h))
            r_, c_, v_ = [], [], []
            for e, (_, comps) in enumerate(tris):
                for comp, (plus, minus) in enumerate(comps):
                    r_ += [2 * e + comp, 2 * e + comp]
                    c_ += [plus, minus]
                    v_ += [1.0 / h, -1.0 / h]
            rows, cols, vals = np.array(r_), np.array(c_), np.array(v_)
            centroids = np.array(cents)
            measure = np.full(len(tris), 0.5 * h * h)
            self.elements = np.array([t[0] for t in tris])
        self.n_elem = len(measure)
        self.G = sp.csr_matrix((vals, (rows, cols)), shape=(self.n_elem * dim, self.n_nodes))
        self.GT = self.G.T.tocsr()
        self.centroids = np.asarray(centroids, dtype=float)
        self.elem_measure = measure
        # node-to-element averaging for nodal gradients
        k = self.elements.shape[1]
        inc = sp.csr_matrix(
            (np.repeat(measure, k), (self.elements.ravel(), np.repeat(np.arange(self.n_elem), k))),
            shape=(self.n_nodes, self.n_elem),
        )
        weight = np.asarray(inc.sum(axis=1)).ravel()
        self._node_avg = sp.diags(1.0 / weight) @ inc

    def _trapezoid(self):
        if self.periodic:
            return np.full(self.n_nodes, self.node_measure)
        w1 = np.full(self.n + 1, self.h)
        w1[[0, -1]] *= 0.5
        w = w1
        for _ in range(self.dim - 1):
            w = np.outer(w, w1).ravel()
        return w

    # -- field operations -------------------------------------------------

    def gradient(self, u) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        return (self.G @ u).reshape(self.n_elem, self.dim)

    def nodal_gradient(self, u) -> np.ndarray:
        return self._node_avg @ self.gradient(u)

    def element_average(self, u) -> np.ndarray:
        return np.asarray(u, dtype=float)[self.elements].mean(axis=1)

    def weak_divergence(self, flux) -> np.ndarray:
        return self.GT @ (self.elem_measure[:, None] * flux).ravel()

    def stiffness(self, jac, free=None):
        """``G^T W J G`` restricted to ``free`` (all nodes if None)."""
        ne, d = self.n_elem, self.dim
        wj = self.elem_measure[:, None, None] * np.asarray(jac).reshape(ne, d, d)
        if d == 1:
            block = sp.diags(wj.ravel())
        else:
            base = (np.arange(ne) * d)[:, None, None]
            r = np.broadcast_to(base + np.arange(d)[None, :, None], wj.shape).ravel()
            c = np.broadcast_to(base + np.arange(d)[None, None, :], wj.shape).ravel()
            block = sp.csr_matrix((wj.ravel(), (r, c)), shape=(ne * d, ne * d))
        K = (self.GT @ block @ self.G).tocsr()
        if free is not None:
            K = K[free][:, free]
        return K

    def dirichlet_poisson(self, v) -> np.ndarray:
        """Solve ``-Laplace_h w = v`` with zero boundary values (lumped right-hand side)."""
        if self.periodic:
            raise ValueError("Poisson surrogate needs the Dirichlet mesh")
        if self._laplacian_lu is None:
            K = self.stiffness(np.ones((self.n_elem, self.dim, self.dim)) * np.eye(self.dim), self.free)
            self._laplacian_lu = splu(K.tocsc())
        w = np.zeros(self.n_nodes)
        w[self.free] = self._laplacian_lu.solve(self.node_measure * np.asarray(v, dtype=float)[self.free])
        return w


def _tridiagonal_solve(mesh: StructuredMesh, jac, mass_diag, rhs):
    """Fast path for 1-D meshes whose free nodes are 1..n-1 (both mesh kinds)."""
    k = mesh.elem_measure * np.asarray(jac).reshape(-1) / (mesh.h * mesh.h)
    n = mesh.n
    diag = k[0 : n - 1] + k[1:n] + mass_diag
    lower = np.empty(n - 1)
    upper = np.empty(n - 1)
    lower[1:] = -k[1 : n - 1]
    lower[0] = 0.0
    upper[:-1] = -k[1 : n - 1]
    upper[-1] = 0.0
    return kernels.tridiag_solve(lower, diag, upper, rhs)


def solve_monotone(mesh: StructuredMesh, flux_eval: FluxEval, u0, *, xi=None, mass: float = 0.0,
                   b=None, opts: SolverOptions | None = None, mean_zero: bool = False) -> NewtonResult:
    """Damped Newton for ``mass*|node|*(u-b) + G^T W a(xi + G u) = 0`` on free nodes.

    Backtracks on the residual norm; when halving is exhausted a relaxed
    Picard (secant) step is taken instead. Raises :class:`SolverFailure`
    after ``opts.max_iter`` iterations.
    """
    opts = opts or SolverOptions()
    free = mesh.free
    u = np.array(u0, dtype=float, copy=True)
    xi_arr = np.zeros(mesh.dim) if xi is None else np.asarray(xi, dtype=float).reshape(mesh.dim)
    b = np.zeros(mesh.n_nodes) if b is None else np.asarray(b, dtype=float)
    mass_diag = mass * mesh.node_measure
    scale = mesh.h ** (mesh.dim - 1)
    fast = mesh.dim == 1

    def evaluate(v):
        lam = xi_arr + mesh.gradient(v)
        flux, jac, secant = flux_eval(lam)
        res = mesh.weak_divergence(flux)
        if mass:
            res = res + mass_diag * (v - b)
        return res[free], flux, jac, secant

    def linsolve(jac, rhs):
        if fast:
            return _tridiagonal_solve(mesh, jac, mass_diag, rhs)
        K = mesh.stiffness(jac, free)
        if mass:
            K = K + mass_diag * sp.identity(len(free), format="csr")
        return splu(K.tocsc()).solve(rhs)

    def norm(r):
        return float(np.max(np.abs(r))) / scale if r.size else 0.0

    res, flux, jac, secant = evaluate(u)
    r_norm = norm(res)
    history = [r_norm]
    picard = 0
    for it in range(opts.max_iter + 1):
        flux_scale = max(1.0, float(np.max(np.abs(flux))) if flux.size else 1.0)
        if r_norm <= opts.tol * flux_scale:
            return NewtonResult(u, r_norm, it, history, picard)
        if it == opts.max_iter:
            break
        step = np.zeros_like(u)
        step[free] = -linsolve(jac, res)
        alpha, accepted = 1.0, False
        for _ in range(opts.max_halvings):
            trial = u + alpha * step
            t_res, t_flux, t_jac, t_sec = evaluate(trial)
            t_norm = norm(t_res)
            if t_norm < (1.0 - 1e-4 * alpha) * r_norm:
                accepted = True
                break
            alpha *= 0.5
        if not accepted:
            # secant (Picard) step for the frozen coefficient, relaxed
            sec_jac = secant[:, None, None] * np.eye(mesh.dim)
            rhs = mass_diag * (b[free] - u[free]) - mesh.weak_divergence(
                secant[:, None] * (xi_arr + mesh.gradient(u)))[free]
            trial = u.copy()
            trial[free] += opts.picard_relax * linsolve(sec_jac, rhs)
            t_res, t_flux, t_jac, t_sec = evaluate(trial)
            t_norm = norm(t_res)
            picard += 1
        u = trial
        if mean_zero:
            u -= u.mean()
        res, flux, jac, secant, r_norm = t_res, t_flux, t_jac, t_sec, t_norm
        history.append(r_norm)
    raise SolverFailure(
        f"Newton did not converge in {opts.max_iter} iterations (residual {r_norm:.3e})",
        last_iterate=u, history=history,
    )
