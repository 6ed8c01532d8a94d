"""Truncated cylindrical Wiener increments from a counter-based generator.

Every normal draw is a pure function of (seed, step index, mode index,
refinement chain), so paths can be regenerated anywhere without shared
generator state, and refined time grids embed the coarse increments exactly.
"""

from __future__ import annotations

import hashlib
import zlib
from dataclasses import dataclass

import numpy as np

from . import kernels

_TWO_NEG53 = 2.0 ** -53


def _chain_word(chain: tuple) -> int:
    if not chain:
        return 0
    return zlib.crc32(",".join(str(int(f)) for f in chain).encode()) & 0xFFFFFFFF


def philox_normals(seed: int, n_steps: int, n_modes: int, chain: tuple = ()) -> np.ndarray:
    """Standard normals indexed by (step, mode), shape (n_steps, n_modes).

    One Philox block (four 32-bit words) yields two 53-bit uniforms and,
    via Box-Muller, two normals; steps 2j and 2j+1 share block j.
    """
    if n_steps == 0 or n_modes == 0:
        return np.zeros((n_steps, n_modes))
    seed = int(seed) & 0xFFFFFFFFFFFFFFFF
    key0, key1 = seed & 0xFFFFFFFF, seed >> 32
    n_blocks = (n_steps + 1) // 2
    j, k = np.meshgrid(np.arange(n_blocks, dtype=np.uint64), np.arange(n_modes, dtype=np.uint64),
                       indexing="ij")
    ctr = np.empty((n_blocks * n_modes, 4), dtype=np.uint32)
    ctr[:, 0] = j.ravel().astype(np.uint32)
    ctr[:, 1] = k.ravel().astype(np.uint32)
    ctr[:, 2] = len(chain)
    ctr[:, 3] = _chain_word(chain)
    words = kernels.philox4x32(ctr, key0, key1).astype(np.uint64)
    u1 = ((words[:, 0] >> np.uint64(5)) * np.uint64(1 << 26) + (words[:, 1] >> np.uint64(6)))
    u2 = ((words[:, 2] >> np.uint64(5)) * np.uint64(1 << 26) + (words[:, 3] >> np.uint64(6)))
    u1 = (u1.astype(float) + 0.5) * _TWO_NEG53  # in (0, 1)
    u2 = u2.astype(float) * _TWO_NEG53
    rad = np.sqrt(-2.0 * np.log(u1))
    z = np.empty((n_blocks, 2, n_modes))
    z[:, 0, :] = (rad * np.cos(2.0 * np.pi * u2)).reshape(n_blocks, n_modes)
    z[:, 1, :] = (rad * np.sin(2.0 * np.pi * u2)).reshape(n_blocks, n_modes)
    return z.reshape(2 * n_blocks, n_modes)[:n_steps]


@dataclass(frozen=True)
class NoisePath:
    """Increments ``dW[n, k]`` of K independent Brownian motions on a uniform grid."""

    seed: int
    T: float
    increments: np.ndarray  # (M, K)
    chain: tuple = ()

    def __post_init__(self):
        inc = np.asarray(self.increments, dtype=float)
        inc.setflags(write=False)
        object.__setattr__(self, "increments", inc)

    @property
    def M(self) -> int:
        return self.increments.shape[0]

    @property
    def K(self) -> int:
        return self.increments.shape[1]

    @property
    def dt(self) -> float:
        return self.T / self.M

    @property
    def time_grid(self) -> np.ndarray:
        return np.linspace(0.0, self.T, self.M + 1)

    def truncate(self, K: int) -> "NoisePath":
        return NoisePath(self.seed, self.T, self.increments[:, : min(K, self.K)], self.chain)

    def checksum(self) -> str:
        return checksum(self.increments)

    def describe(self) -> dict:
        return {"seed": self.seed, "T": self.T, "M": self.M, "K": self.K,
                "refinement": list(self.chain), "checksum": self.checksum()}


def checksum(increments) -> str:
    arr = np.ascontiguousarray(np.asarray(increments, dtype="<f8"))
    h = hashlib.sha256()
    h.update(np.asarray(arr.shape, dtype="<i8").tobytes())
    h.update(arr.tobytes())
    return h.hexdigest()


def sample_noise_path(seed: int, T: float, M: int, K: int) -> NoisePath:
    if M < 1:
        raise ValueError("need at least one time step")
    if K < 0:
        raise ValueError("truncation level must be nonnegative")
    if not T > 0:
        raise ValueError("final time must be positive")
    dt = T / M
    return NoisePath(int(seed), float(T), np.sqrt(dt) * philox_normals(seed, M, K))


def refine_noise_path(path: NoisePath, factor: int) -> NoisePath:
    """Brownian-bridge subdivision of every increment into ``factor`` pieces.

    Given the coarse increment D, fine increments ``Z_i - mean(Z) + D/factor``
    with ``Z_i ~ N(0, dt/factor)`` have the correct conditional law and sum
    to D up to rounding.
    """
    factor = int(factor)
    if factor < 1:
        raise ValueError("refinement factor must be >= 1")
    if factor == 1:
        return path
    M, K = path.increments.shape
    chain = path.chain + (factor,)
    fine_dt = path.dt / factor
    z = np.sqrt(fine_dt) * philox_normals(path.seed, M * factor, K, chain)
    z = z.reshape(M, factor, K)
    fine = z - z.mean(axis=1, keepdims=True) + path.increments[:, None, :] / factor
    return NoisePath(path.seed, path.T, fine.reshape(M * factor, K), chain)


def path_for_grid(seed: int, T: float, M_coarse: int, factor: int, K: int) -> NoisePath:
    """Coarse path refined to ``M_coarse * factor`` steps (shared across resolutions)."""
    return refine_noise_path(sample_noise_path(seed, T, M_coarse, K), factor)
