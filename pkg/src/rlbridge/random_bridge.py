"""Bridges whose pinning time is itself random.

Conditionally on ``tau = r`` the process is the deterministic bridge of
length ``r``; it is identically zero from ``tau`` on.  Zeros after the
pinning time are written as exact ``0.0`` so that ``{xi_t == 0}`` can be
decided without a tolerance.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import kernels
from . import length_law as ll
from .bridge import _grid
from .covariance import CovarianceModel
from .errors import DomainError, IntegrityError

NOT_STOPPED = -1


@dataclass(frozen=True)
class BridgePath:
    grid: np.ndarray
    values: np.ndarray
    tau: float
    seed: tuple[int, int]

    def __post_init__(self):
        if self.grid.shape != self.values.shape:
            raise DomainError("grid and values differ in shape")
        if not self.tau > 0:
            raise DomainError("tau must be positive")

    def prefix(self, t: float) -> "BridgePath":
        """The path observed on grid points ``<= t``."""
        keep = self.grid <= t
        if not np.any(keep):
            raise DomainError(f"no grid point at or before t={t}")
        return BridgePath(self.grid[keep], self.values[keep], self.tau, self.seed)


@dataclass(frozen=True)
class PathBatch:
    """Many paths on a common grid, stored as arrays."""

    grid: np.ndarray
    values: np.ndarray  # (n_paths, len(grid))
    tau: np.ndarray
    seed: int
    first_index: int = 0

    def __len__(self):
        return len(self.tau)

    def path(self, i: int) -> BridgePath:
        return BridgePath(self.grid, self.values[i], float(self.tau[i]), (self.seed, self.first_index + i))

    def paths(self) -> list[BridgePath]:
        return [self.path(i) for i in range(len(self))]


def draw_lengths(law: ll.LengthLaw, keys: np.ndarray) -> np.ndarray:
    """Length of each path from uniform 0 of its stream."""
    u = kernels.uniforms(keys, [0])[:, 0]
    return ll.quantile(law, u)


def simulate(model: CovarianceModel, law: ll.LengthLaw, grid, n_paths: int, seed: int,
             first_index: int = 0) -> PathBatch:
    """Array form of :func:`sample_random_bridge`."""
    g = _grid(grid)
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    keys = kernels.path_keys(seed, np.arange(first_index, first_index + n_paths))
    tau = draw_lengths(law, keys)
    # factors are only needed strictly before the largest length
    need = g < tau.max()
    rho_g = np.zeros_like(g)
    q_g = np.ones_like(g)
    rho_g[need] = model.rho_at(g[need])
    q_g[need] = model.q_at(g[need])
    values = kernels.sample_bridge_batch(
        g, rho_g, q_g, tau, model.rho_at(tau), model.q_at(tau), keys,
        float(model.q_at(np.zeros(1))[0]))
    return PathBatch(g, values, tau, int(seed), int(first_index))


def sample_random_bridge(model: CovarianceModel, law: ll.LengthLaw, grid, n_paths: int,
                         seed: int) -> list[BridgePath]:
    """Draw ``tau`` from ``law``, then the bridge of that length on the grid.

    The length is never snapped to the grid: kernels pin at the exact
    ``tau`` and every grid point ``>= tau`` holds 0.
    """
    return simulate(model, law, grid, n_paths, seed).paths()


def zero_set_detector(path: BridgePath) -> int:
    """Index of the first grid point from which the path stays at zero.

    Returns :data:`NOT_STOPPED` when the stored length lies beyond the grid.
    Raises :class:`IntegrityError` if zeros and the stored length disagree.
    """
    g, v = path.grid, path.values
    expected = int(np.searchsorted(g, path.tau, side="left"))  # first g >= tau
    nonzero = np.nonzero(v != 0.0)[0]
    tail = v[expected:]
    if np.any(tail != 0.0):
        raise IntegrityError(f"non-zero value after tau={path.tau} on path {path.seed}")
    # before tau a zero is a probability-zero event except at t = 0
    inner = v[:expected][g[:expected] > 0]
    if np.any(inner == 0.0):
        raise IntegrityError(f"exact zero before tau={path.tau} on path {path.seed}")
    if expected >= len(g):
        return NOT_STOPPED
    if nonzero.size and nonzero[-1] >= expected:
        raise IntegrityError("zero set inconsistent with tau")
    return expected
