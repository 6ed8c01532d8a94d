"""Coefficient families, oscillation algebras and mean values.

A coefficient model is the triple (flux ``a``, drift ``a0``, noise rows ``M_k``)
of the power-law family

    a(x, t, y, tau, mu, lam) = g(x, t, y, tau) * s(mu) * |lam|^(p-2) lam
    a0(x, t, y, tau, mu)     = g0(x, t, y, tau) * h(mu)
    M_k(y, tau, mu)          = g1(y, tau) * lambda_k * mu

where ``s(mu) = 1 + beta / (1 + mu^2)`` (``beta = 0`` by default) and each of
``g, g0, g1`` is a :class:`Profile`: a trigonometric polynomial on a torus
composed with the algebra's winding matrix, optionally times a slow factor
in ``x``.
"""

from __future__ import annotations

import itertools
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels

logger = logging.getLogger(__name__)

TWO_PI = 2.0 * math.pi
# max of |d/dmu 1/(1+mu^2)|
_SECANT_SLOPE = 3.0 * math.sqrt(3.0) / 8.0


class MeanValueConvergenceError(RuntimeError):
    """Box averages did not settle within tolerance; carries partial estimates."""

    def __init__(self, message, partials):
        super().__init__(message)
        self.partials = partials


# --------------------------------------------------------------------------
# algebras


@dataclass(frozen=True)
class AlgebraSpec:
    """Concrete realization of the oscillation algebra on R^N_y x R_tau.

    ``frequency_matrix`` (m x (N+1), radians) maps (y, tau) to torus angles.
    For the periodic kind it defaults to ``2*pi*I`` so windings are integer
    wavenumbers on the unit cell.
    """

    kind: str = "periodic"
    dim: int = 1
    frequency_matrix: tuple | None = None
    box_radii: tuple = (1e2, 1e3, 1e4)
    relation_bound: int = 50

    def __post_init__(self):
        if self.kind not in ("periodic", "quasiperiodic"):
            raise ValueError(f"unknown algebra kind {self.kind!r}")
        if self.dim < 1:
            raise ValueError("spatial dimension must be >= 1")
        if self.frequency_matrix is not None:
            mat = np.atleast_2d(np.asarray(self.frequency_matrix, dtype=float))
            if mat.shape[1] != self.dim + 1:
                raise ValueError(
                    f"frequency_matrix needs {self.dim + 1} columns (y..., tau), got {mat.shape[1]}"
                )
            object.__setattr__(self, "frequency_matrix", tuple(map(tuple, mat.tolist())))
        elif self.kind == "quasiperiodic":
            raise ValueError("quasiperiodic algebra needs a frequency_matrix")
        if list(self.box_radii) != sorted(self.box_radii):
            raise ValueError("box_radii must be increasing")
        object.__setattr__(self, "box_radii", tuple(float(r) for r in self.box_radii))
        if self.kind == "quasiperiodic":
            relation = self.integer_relation()
            if relation is not None:
                raise ValueError(
                    f"frequency rows are rationally dependent: integer relation {relation}"
                )
            logger.warning(
                "rational independence of frequency rows verified only for integer "
                "coefficients up to %d", self.relation_bound,
            )

    @property
    def winding(self) -> np.ndarray:
        if self.frequency_matrix is None:
            return TWO_PI * np.eye(self.dim + 1)
        return np.asarray(self.frequency_matrix, dtype=float)

    @property
    def torus_dim(self) -> int:
        return self.winding.shape[0]

    def integer_relation(self, tol: float = 1e-9):
        """Smallest-norm integer vector ``n`` with ``n @ frequency_matrix ~ 0``, if any.

        Exhaustive up to ``relation_bound`` per entry when that is cheap,
        otherwise pairwise between rows.
        """
        omega = self.winding
        m = omega.shape[0]
        bound = self.relation_bound
        scale = max(np.abs(omega).max(), 1.0)
        rng = np.arange(-bound, bound + 1)
        if (2 * bound + 1) ** m <= 2_000_000:
            grids = np.stack(np.meshgrid(*([rng] * m), indexing="ij"), axis=-1).reshape(-1, m)
            grids = grids[np.any(grids != 0, axis=1)]
            resid = np.abs(grids @ omega).max(axis=1)
            hits = np.nonzero(resid < tol * scale * bound)[0]
            if hits.size:
                best = hits[np.argmin(np.abs(grids[hits]).sum(axis=1))]
                return tuple(int(v) for v in grids[best])
            return None
        pairs = np.stack(np.meshgrid(rng, rng, indexing="ij"), axis=-1).reshape(-1, 2)
        pairs = pairs[np.any(pairs != 0, axis=1)]
        for i, j in itertools.combinations(range(m), 2):
            resid = np.abs(pairs @ omega[[i, j]]).max(axis=1)
            hits = np.nonzero(resid < tol * scale * bound)[0]
            if hits.size:
                n = np.zeros(m, dtype=int)
                n[[i, j]] = pairs[hits[0]]
                return tuple(int(v) for v in n)
        return None

    def angles(self, y, tau) -> np.ndarray:
        """Torus angles for points ``y`` (..., N) and ``tau`` (...)."""
        y = np.asarray(y, dtype=float)
        if y.ndim == 0 or y.shape[-1] != self.dim:
            y = y[..., None]
        tau = np.broadcast_to(np.asarray(tau, dtype=float), y.shape[:-1])
        z = np.concatenate([y, tau[..., None]], axis=-1)
        return z @ self.winding.T


# --------------------------------------------------------------------------
# profiles


@dataclass(frozen=True)
class Factor:
    fn: str
    winding: tuple
    phase: float = 0.0

    def __post_init__(self):
        if self.fn not in ("sin", "cos"):
            raise ValueError(f"unknown trig factor {self.fn!r}")
        object.__setattr__(self, "winding", tuple(float(w) for w in self.winding))


@dataclass(frozen=True)
class Term:
    amp: float
    factors: tuple

    def __post_init__(self):
        object.__setattr__(self, "factors", tuple(self.factors))


@dataclass(frozen=True)
class Profile:
    """Trigonometric polynomial on the torus, ``mean + sum amp * prod trig(n . theta + phase)``.

    ``slow_amp`` adds the slow multiplicative factor ``1 + slow_amp * x_1``.
    """

    mean: float = 1.0
    terms: tuple = ()
    slow_amp: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "terms", tuple(self.terms))
        if abs(self.slow_amp) >= 1.0:
            raise ValueError("slow_amp must lie in (-1, 1)")

    @classmethod
    def constant(cls, value: float) -> "Profile":
        return cls(mean=float(value))

    @classmethod
    def from_dict(cls, spec) -> "Profile":
        if isinstance(spec, (int, float)):
            return cls.constant(spec)
        spec = dict(spec)
        terms = []
        for raw in spec.get("terms", ()):
            raw = dict(raw)
            if "factors" in raw:
                factors = [Factor(f["fn"], tuple(f["winding"]), float(f.get("phase", 0.0)))
                           for f in raw["factors"]]
            else:
                factors = [Factor(raw["fn"], tuple(raw["winding"]), float(raw.get("phase", 0.0)))]
            terms.append(Term(float(raw.get("amp", 1.0)), tuple(factors)))
        return cls(float(spec.get("mean", 1.0)), tuple(terms), float(spec.get("slow_amp", 0.0)))

    def to_dict(self) -> dict:
        out = {"mean": self.mean, "slow_amp": self.slow_amp, "terms": []}
        for term in self.terms:
            out["terms"].append({
                "amp": term.amp,
                "factors": [{"fn": f.fn, "winding": list(f.winding), "phase": f.phase}
                            for f in term.factors],
            })
        return out

    @property
    def is_constant(self) -> bool:
        return all(t.amp == 0.0 for t in self.terms)

    def bounds(self) -> tuple:
        """(lower, upper) bound of the torus function."""
        spread = sum(abs(t.amp) for t in self.terms)
        return self.mean - spread, self.mean + spread

    @property
    def sup_abs(self) -> float:
        lo, hi = self.bounds()
        return max(abs(lo), abs(hi))

    def slow_range(self) -> tuple:
        a = self.slow_amp
        return min(1.0, 1.0 + a), max(1.0, 1.0 + a)

    def depends_on_tau(self, algebra: AlgebraSpec) -> bool:
        omega = algebra.winding
        for term in self.terms:
            for f in term.factors:
                n = _pad(f.winding, omega.shape[0])
                if term.amp != 0.0 and abs(n @ omega[:, -1]) > 0.0:
                    return True
        return False

    def torus(self, theta) -> np.ndarray:
        theta = np.asarray(theta, dtype=float)
        m = theta.shape[-1]
        out = np.full(theta.shape[:-1], float(self.mean))
        for term in self.terms:
            val = np.full(theta.shape[:-1], float(term.amp))
            for f in term.factors:
                arg = theta @ _pad(f.winding, m) + f.phase
                val = val * (np.sin(arg) if f.fn == "sin" else np.cos(arg))
            out = out + val
        return out

    def slow(self, x) -> np.ndarray:
        if self.slow_amp == 0.0:
            return 1.0
        x = np.asarray(x, dtype=float)
        # points carry a trailing coordinate axis
        return 1.0 + self.slow_amp * (x if x.ndim == 0 else x[..., 0])

    def fast(self, algebra: AlgebraSpec, y, tau) -> np.ndarray:
        return self.torus(algebra.angles(y, tau))

    def evaluate(self, algebra: AlgebraSpec, x, t, y, tau) -> np.ndarray:
        return self.slow(x) * self.fast(algebra, y, tau)


def _pad(winding, m):
    n = np.zeros(m)
    w = np.asarray(winding, dtype=float)
    if w.size > m:
        raise ValueError(f"winding {tuple(winding)} longer than torus dimension {m}")
    n[: w.size] = w
    return n


@dataclass(frozen=True)
class LowerOrderMap:
    """The scalar Lipschitz map ``h`` in the drift ``a0 = g0 * h(mu)``."""

    kind: str = "linear"
    scale: float = 1.0

    def __post_init__(self):
        if self.kind not in ("linear", "tanh", "constant", "zero"):
            raise ValueError(f"unknown drift map {self.kind!r}")

    def __call__(self, mu):
        mu = np.asarray(mu, dtype=float)
        if self.kind == "linear":
            return self.scale * mu
        if self.kind == "tanh":
            return self.scale * np.tanh(mu)
        if self.kind == "constant":
            return np.full_like(mu, self.scale)
        return np.zeros_like(mu)

    @property
    def lipschitz(self) -> float:
        return 0.0 if self.kind in ("zero", "constant") else abs(self.scale)


def noise_weights(lambda0: float = 0.5, decay: float = 1.0, k_max: int = 8, weights=None):
    """Square-summable noise weights ``lambda_k = lambda0 * k^-decay``."""
    if weights is not None:
        return tuple(float(w) for w in weights)
    return tuple(float(lambda0) * k ** (-float(decay)) for k in range(1, int(k_max) + 1))


# --------------------------------------------------------------------------
# the model


@dataclass(frozen=True)
class StructureConstants:
    c1: float
    c2: float
    c3: float
    c4: float
    c6: float
    c7: float
    modulus_slope: float
    c_mixed: float

    def modulus(self, r):
        return np.minimum(1.0, self.modulus_slope * np.asarray(r, dtype=float))


@dataclass(frozen=True)
class CoefficientModel:
    p: float = 2.0
    algebra: AlgebraSpec = field(default_factory=AlgebraSpec)
    g: Profile = field(default_factory=Profile)
    g0: Profile = field(default_factory=lambda: Profile.constant(0.0))
    g1: Profile = field(default_factory=lambda: Profile.constant(0.0))
    h: LowerOrderMap = field(default_factory=LowerOrderMap)
    weights: tuple = ()
    mu_coupling: float = 0.0
    family: str = "power_law"
    delta: float = 1e-8

    def __post_init__(self):
        if not self.p >= 2.0:
            raise ValueError("exponent p must be >= 2")
        if self.mu_coupling < 0.0:
            raise ValueError("mu_coupling must be nonnegative")
        object.__setattr__(self, "weights", tuple(float(w) for w in self.weights))

    @property
    def dim(self) -> int:
        return self.algebra.dim

    @property
    def k_max(self) -> int:
        return len(self.weights)

    @property
    def oscillates(self) -> bool:
        return not (self.g.is_constant and self.g0.is_constant and self.g1.is_constant)

    @property
    def mu_dependent(self) -> bool:
        return self.mu_coupling != 0.0

    def _mu_factor(self, mu):
        if self.mu_coupling == 0.0:
            return 1.0
        mu = np.asarray(mu, dtype=float)
        return 1.0 + self.mu_coupling / (1.0 + mu * mu)

    def coefficient(self, x, t, y, tau, mu):
        """Scalar prefactor ``g * s(mu)`` of the flux."""
        return self.g.evaluate(self.algebra, x, t, y, tau) * self._mu_factor(mu)

    def flux(self, x, t, y, tau, mu, lam):
        lam = np.asarray(lam, dtype=float)
        coef = self.coefficient(x, t, y, tau, mu)
        norm = np.linalg.norm(lam, axis=-1)
        if self.p == 2.0:
            return np.asarray(coef)[..., None] * lam
        return (np.asarray(coef) * norm ** (self.p - 2.0))[..., None] * lam

    def flux_parts(self, coef, lam):
        """Flux, regularized Jacobian and secant for a precomputed prefactor.

        ``lam`` has shape (n, N); returns arrays of shape (n, N), (n, N, N), (n,).
        """
        lam = np.asarray(lam, dtype=float)
        n, dim = lam.shape
        coef = np.broadcast_to(np.asarray(coef, dtype=float), (n,))
        if dim == 1:
            flux, deriv, secant = kernels.power_flux_1d(coef, lam[:, 0], self.p, self.delta)
            return flux[:, None], deriv[:, None, None], secant
        e = self.p - 2.0
        sq = np.einsum("ij,ij->i", lam, lam)
        reg = (sq + self.delta ** 2) ** (0.5 * e)
        flux = (coef * np.sqrt(sq) ** e)[:, None] * lam
        secant = coef * reg
        jac = secant[:, None, None] * np.eye(dim)
        if e != 0.0:
            outer = lam[:, :, None] * lam[:, None, :]
            jac = jac + (e * coef * (sq + self.delta ** 2) ** (0.5 * e - 1.0))[:, None, None] * outer
        return flux, jac, secant

    def drift(self, x, t, y, tau, mu):
        return self.g0.evaluate(self.algebra, x, t, y, tau) * self.h(mu)

    def noise_row(self, k: int, y, tau, mu):
        if not 1 <= k <= self.k_max:
            raise IndexError(f"noise row {k} outside 1..{self.k_max}")
        return self.g1.fast(self.algebra, y, tau) * self.weights[k - 1] * np.asarray(mu, dtype=float)

    def noise_rows(self, y, tau, mu, k: int | None = None):
        """All rows ``M_k``, k = 1..K, stacked on a trailing axis."""
        k = self.k_max if k is None else min(k, self.k_max)
        base = self.g1.fast(self.algebra, y, tau) * np.asarray(mu, dtype=float)
        return np.asarray(base)[..., None] * np.asarray(self.weights[:k])

    def constants(self) -> StructureConstants:
        """Structure constants the family declares for its parameters."""
        p, beta = self.p, self.mu_coupling
        s_lo, s_hi = self.g.slow_range()
        g_lo, _ = self.g.bounds()
        lo = g_lo * (s_lo if g_lo >= 0 else s_hi)
        g_sup = self.g.sup_abs * s_hi
        g0_sup = self.g0.sup_abs * self.g0.slow_range()[1]
        lip_h = self.h.lipschitz
        lam_norm = math.sqrt(sum(w * w for w in self.weights))
        c6 = self.g1.sup_abs * lam_norm
        slope_a0 = abs(self.g0.slow_amp) * self.g0.sup_abs * lip_h + g0_sup * lip_h
        slope_a = abs(self.g.slow_amp) * self.g.sup_abs * (1.0 + beta) + g_sup * beta * _SECANT_SLOPE
        return StructureConstants(
            c1=max(lo, 0.0) * 2.0 ** (2.0 - p),
            c2=g_sup * (1.0 + beta),
            c3=g0_sup * lip_h,
            c4=g0_sup * lip_h,
            c6=c6,
            c7=c6,
            modulus_slope=max(slope_a0, slope_a, 1e-12),
            c_mixed=g_sup * (1.0 + beta) * (p - 1.0),
        )

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "p": self.p,
            "mu_coupling": self.mu_coupling,
            "g": self.g.to_dict(),
            "g0": self.g0.to_dict(),
            "g1": self.g1.to_dict(),
            "h": {"kind": self.h.kind, "scale": self.h.scale},
            "weights": list(self.weights),
        }


FAMILIES = ("power_law",)


def power_law_model(p=2.0, g=None, g0=0.0, g1=0.0, h=None, weights=(), mu_coupling=0.0,
                    algebra: AlgebraSpec | None = None) -> CoefficientModel:
    """Build the power-law family; profiles may be given as numbers, dicts or Profiles."""

    def prof(v, default):
        if v is None:
            return default
        if isinstance(v, Profile):
            return v
        return Profile.from_dict(v)

    if isinstance(h, dict):
        h = LowerOrderMap(**h)
    return CoefficientModel(
        p=float(p),
        algebra=algebra or AlgebraSpec(),
        g=prof(g, Profile.constant(1.0)),
        g0=prof(g0, Profile.constant(0.0)),
        g1=prof(g1, Profile.constant(0.0)),
        h=h or LowerOrderMap(),
        weights=tuple(weights),
        mu_coupling=float(mu_coupling),
    )


def example_family(p: float = 2.0, k_max: int = 8, mu_coupling: float = 0.0) -> CoefficientModel:
    """Reference medium with oscillating flux, drift and noise intensity.

    ``g = 2 + sin(2 pi y)``, ``g0 = 1/2 + cos(2 pi y)/4`` with ``h(mu) = mu``,
    ``g1 = 1 + sin(2 pi y)/2`` and ``lambda_k = 1/(2k)``.
    """
    return power_law_model(
        p=p,
        g=sine_profile(2.0, 1.0),
        g0=sine_profile(0.5, 0.25, fn="cos"),
        g1=sine_profile(1.0, 0.5),
        weights=noise_weights(0.5, 1.0, k_max),
        mu_coupling=mu_coupling,
    )


def sine_profile(mean: float, amp: float, winding=(1,), fn: str = "sin", phase: float = 0.0) -> Profile:
    """``mean + amp * fn(2*pi*n.y + phase)`` on the periodic cell (shorthand)."""
    return Profile(mean, (Term(amp, (Factor(fn, tuple(winding), phase),)),))


# --------------------------------------------------------------------------
# pointwise evaluation with argument checks


def _finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(np.asarray(a, dtype=float))):
            raise ValueError("non-finite argument")


def eval_flux(model: CoefficientModel, x, t, y, tau, mu, lam):
    _finite(x, t, y, tau, mu, lam)
    lam = np.atleast_1d(np.asarray(lam, dtype=float))
    return model.flux(x, t, y, tau, mu, lam)


def eval_lower_order(model: CoefficientModel, which: str, x, t, y, tau, mu, k: int | None = None):
    """Drift ``a0`` (``which='drift'``) or noise row ``M_k`` (``which='noise'``)."""
    _finite(x, t, y, tau, mu)
    if which == "drift":
        return model.drift(x, t, y, tau, mu)
    if which == "noise":
        if k is None:
            raise IndexError("noise row index required")
        return model.noise_row(k, y, tau, mu)
    raise ValueError(f"unknown lower-order term {which!r}")


# --------------------------------------------------------------------------
# mean values


@dataclass(frozen=True)
class QuadSettings:
    nodes: int = 64
    tol: float = 1e-6
    samples_per_unit: int = 16
    radii: tuple | None = None


@dataclass
class MeanValue:
    estimate: float
    error: float
    method: str
    partials: list = field(default_factory=list)

    def __float__(self):
        return float(self.estimate)


_RAY = np.array([1.0, (math.sqrt(5.0) - 1.0) / 2.0, math.sqrt(3.0) - 1.0, math.sqrt(7.0) - 2.0])


def _torus_mean(fn: Callable, m: int, n: int) -> float:
    axes = [np.arange(n) * (TWO_PI / n)] * m
    theta = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return float(np.mean(fn(theta)))


def _cell_mean(f: Callable, dim: int, n: int) -> float:
    axes = [np.arange(n) / n] * (dim + 1)
    z = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)
    return float(np.mean(f(z[..., :dim], z[..., dim])))


def _ray_mean(f: Callable, dim: int, radius: float, density: int) -> float:
    direction = _RAY[: dim + 1]
    n = int(radius * density)
    s = (np.arange(n) + 0.5) * (radius / n)
    w = 1.0 - np.cos(TWO_PI * s / radius)
    z = s[:, None] * direction
    vals = np.asarray(f(z[:, :dim], z[:, dim]), dtype=float)
    return float(np.sum(w * vals) / np.sum(w))


def mean_value(f, algebra: AlgebraSpec, quad: QuadSettings | None = None) -> MeanValue:
    """Mean value of a cell function over the oscillation variables.

    ``f`` is either a :class:`Profile` (averaged on the torus it lives on) or
    a callable ``f(y, tau)``. Callables are averaged by the trapezoid rule on
    the unit cell (periodic kind) or by Hann-windowed averages along a
    generic line over the radius schedule (quasi-periodic kind).
    """
    quad = quad or QuadSettings()
    if isinstance(f, Profile):
        m = algebra.torus_dim
        fine = _torus_mean(f.torus, m, quad.nodes)
        coarse = _torus_mean(f.torus, m, max(quad.nodes // 2, 2))
        return MeanValue(fine, abs(fine - coarse), "torus")
    if algebra.kind == "periodic":
        fine = _cell_mean(f, algebra.dim, quad.nodes)
        coarse = _cell_mean(f, algebra.dim, max(quad.nodes // 2, 2))
        return MeanValue(fine, abs(fine - coarse), "cell")
    radii = quad.radii or algebra.box_radii
    partials = []
    for radius in radii:
        partials.append((radius, _ray_mean(f, algebra.dim, radius, quad.samples_per_unit)))
    estimate = partials[-1][1]
    error = abs(partials[-1][1] - partials[-2][1]) if len(partials) > 1 else math.inf
    if error > quad.tol:
        raise MeanValueConvergenceError(
            f"box averages did not converge: indicator {error:.3e} > {quad.tol:.1e}", partials
        )
    return MeanValue(estimate, error, "box", partials)


def profile_mean(profile: Profile, algebra: AlgebraSpec, quad: QuadSettings | None = None) -> float:
    return mean_value(profile, algebra, quad).estimate


# --------------------------------------------------------------------------
# structure verification


@dataclass
class ConditionResult:
    passed: bool
    worst_margin: float
    witness: dict | None = None


@dataclass
class StructureReport:
    conditions: dict
    samples: int
    seed: int
    constants: StructureConstants

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.conditions.values())

    def failed(self) -> list:
        return [name for name, c in self.conditions.items() if not c.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed,
            "samples": self.samples,
            "seed": self.seed,
            "constants": self.constants.__dict__,
            "conditions": {k: {"passed": v.passed, "worst_margin": v.worst_margin,
                               "witness": v.witness} for k, v in self.conditions.items()},
        }


def _check(lhs, rhs, tol, sample, extra=None) -> ConditionResult:
    """Condition ``lhs <= rhs``; margins are relative to ``max(1, rhs)``."""
    margin = (rhs - lhs) / np.maximum(1.0, np.abs(rhs))
    i = int(np.argmin(margin))
    worst = float(margin[i])
    passed = worst >= -tol
    witness = None
    if not passed:
        witness = {k: np.asarray(v)[i].tolist() for k, v in sample.items()}
        witness["lhs"] = float(np.asarray(lhs)[i])
        witness["rhs"] = float(np.asarray(rhs)[i])
    if extra is not None and not extra[0]:
        passed = False
        witness = dict(witness or {}, reason=extra[1])
    return ConditionResult(passed, worst, witness)


def verify_structure(model: CoefficientModel, samples: int = 10_000, tol: float = 1e-9,
                     seed: int = 0) -> StructureReport:
    """Sample the structure inequalities with the family's declared constants."""
    if samples < 1:
        raise ValueError("samples must be >= 1")
    rng = np.random.default_rng(seed)
    n, dim, p = samples, model.dim, model.p
    const = model.constants()
    span = 1.0 if model.algebra.kind == "periodic" else 100.0
    x = rng.random((n, dim))
    t = rng.random(n)
    y = rng.random((n, dim)) * span
    tau = rng.random(n) * span
    mu = 3.0 * rng.standard_normal(n)
    lam = 3.0 * rng.standard_normal((n, dim))
    # half the pairs are close, to probe the small-argument regime of m
    near = rng.random(n) < 0.5
    scale = np.where(near, 1e-3, 3.0)
    x2 = np.clip(x + scale[:, None] * rng.standard_normal((n, dim)), 0.0, 1.0)
    t2 = np.clip(t + scale * rng.standard_normal(n), 0.0, 1.0)
    mu2 = np.where(near, mu + 1e-3 * rng.standard_normal(n), 3.0 * rng.standard_normal(n))
    lam2 = np.where(near[:, None], lam + 1e-3 * rng.standard_normal((n, dim)),
                    3.0 * rng.standard_normal((n, dim)))
    sample = {"x": x, "t": t, "y": y, "tau": tau, "mu": mu, "lam": lam,
              "x2": x2, "t2": t2, "mu2": mu2, "lam2": lam2}

    a = model.flux(x, t, y, tau, mu, lam)
    a_same = model.flux(x, t, y, tau, mu, lam2)
    a_other = model.flux(x2, t2, y, tau, mu2, lam2)
    a_zero = model.flux(x, t, y, tau, mu, np.zeros_like(lam))
    d0 = model.drift(x, t, y, tau, mu)
    d_mu = model.drift(x, t, y, tau, mu2)
    d_other = model.drift(x2, t2, y, tau, mu2)
    noise = model.noise_rows(y, tau, mu)
    noise2 = model.noise_rows(y, tau, mu2)
    nrm = lambda v: np.linalg.norm(v, axis=-1)
    lam_n, lam2_n = nrm(lam), nrm(lam2)
    dlam = nrm(lam - lam2)
    r = nrm(x - x2) + np.abs(t - t2) + np.abs(mu - mu2)
    m_r = const.modulus(r)

    conditions = {}
    conditions["A1"] = _check(nrm(a_zero), np.zeros(n), tol, sample)
    mono = np.einsum("ij,ij->i", a - a_same, lam - lam2)
    conditions["A2"] = _check(const.c1 * dlam ** p, mono, tol, sample,
                              extra=(const.c1 > 0.0, "declared c1 is not positive"))
    conditions["A3"] = _check(nrm(a), const.c2 * (1 + np.abs(mu) ** (p - 1) + lam_n ** (p - 1)), tol, sample)
    conditions["A4"] = _check(np.abs(d0), const.c3 * (1 + np.abs(mu)), tol, sample)
    conditions["A5"] = _check(np.abs(d0 - d_mu), const.c4 * np.abs(mu - mu2), tol, sample)
    conditions["A6a"] = _check(np.abs(d0 - d_other), m_r * (1 + np.abs(mu) + np.abs(mu2)), tol, sample)
    growth = 1 + np.abs(mu) ** (p - 1) + np.abs(mu2) ** (p - 1) + lam_n ** (p - 1) + lam2_n ** (p - 1)
    mixed = const.c_mixed * (1 + np.abs(mu) + np.abs(mu2) + lam_n + lam2_n) ** (p - 2) * dlam
    conditions["A6b"] = _check(nrm(a - a_other), m_r * growth + mixed, tol, sample)
    conditions["A7a"] = _check(nrm(noise - noise2), const.c6 * np.abs(mu - mu2), tol, sample)
    conditions["A7b"] = _check(nrm(noise), const.c7 * (1 + np.abs(mu)), tol, sample)
    return StructureReport(conditions, samples, seed, const)
