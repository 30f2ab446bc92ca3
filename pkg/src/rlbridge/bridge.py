"""Bridges of deterministic length built from a Gaussian-Markov process.

Everything is expressed through the antisymmetric building block

    B(s, t) = rho(max) q(min) - rho(min) q(max),

which is positive for ``s != t`` whenever ``rho / q`` is strictly increasing.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import kernels
from .covariance import CovarianceModel, _check_times, _scalar_or_array, covariance
from .errors import DomainError, NumericalError

_LOG_2PI = math.log(2.0 * math.pi)
_VAR_FLOOR = 1e-15


@dataclass(frozen=True)
class BridgeSpec:
    model: CovarianceModel
    length: float

    def __post_init__(self):
        if not (self.length > 0 and math.isfinite(self.length)):
            raise DomainError(f"bridge length must be positive and finite, got {self.length}")


@dataclass(frozen=True)
class GaussianKernel:
    """Conditional law ``y | x ~ Normal(slope * x, variance)``."""

    slope: float
    variance: float

    def mean(self, x):
        return self.slope * np.asarray(x, dtype=float)

    def logpdf(self, y, x):
        y = np.asarray(y, dtype=float)
        d = y - self.slope * np.asarray(x, dtype=float)
        return -0.5 * (_LOG_2PI + math.log(self.variance)) - 0.5 * d * d / self.variance

    def pdf(self, y, x):
        return np.exp(self.logpdf(y, x))

    def expect(self, g, x: float, degree: int = 64) -> float:
        """``E[g(Y) | X = x]`` by Gauss-Hermite quadrature."""
        nodes, weights = _hermite(degree)
        y = self.slope * x + math.sqrt(2.0 * self.variance) * nodes
        return float(np.dot(weights, np.asarray(g(y), dtype=float)) / math.sqrt(math.pi))


_HERMITE_CACHE: dict[int, tuple[np.ndarray, np.ndarray]] = {}


def _hermite(degree: int):
    if degree not in _HERMITE_CACHE:
        _HERMITE_CACHE[degree] = np.polynomial.hermite.hermgauss(degree)
    return _HERMITE_CACHE[degree]


def _clamp_variance(var, scale):
    var = np.asarray(var, dtype=float)
    tiny = np.abs(var) <= _VAR_FLOOR * np.maximum(np.abs(scale), 1e-300)
    if np.any((var < 0) & ~tiny):
        raise NumericalError(f"negative conditional variance {var.min():.3g}: inconsistent model")
    return np.where(var < 0, 0.0, var)


# ------------------------------------------------------------------ factors


def b_factor(model: CovarianceModel, s, t):
    s = _check_times(s, model.horizon)
    t = _check_times(t, model.horizon)
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    return _scalar_or_array(model.rho(hi) * model.q(lo) - model.rho(lo) * model.q(hi))


def a_factor(model: CovarianceModel, s, t):
    """``R(s,s) R(t,t) - R(s,t)^2`` from raw covariances."""
    return covariance(model, s, s) * covariance(model, t, t) - covariance(model, s, t) ** 2


def bridge_covariance(spec: BridgeSpec, s, t):
    """``rho(min) * qtilde(max)`` with ``qtilde(u) = q(u) - rho(u) q(r) / rho(r)``."""
    s, t = _in_span(spec, s), _in_span(spec, t)
    m = spec.model
    r = spec.length
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    ratio = float(m.q(np.float64(r)) / m.rho(np.float64(r)))
    qt = m.q(hi) - m.rho(hi) * ratio
    return _scalar_or_array(np.where(hi >= r, 0.0, m.rho(lo) * qt))


def bridge_covariance_raw(spec: BridgeSpec, s, t):
    """``R(s,t) - R(s,r) R(t,r) / R(r,r)`` evaluated from the process covariance."""
    s, t = _in_span(spec, s), _in_span(spec, t)
    m, r = spec.model, spec.length
    return _scalar_or_array(
        np.asarray(covariance(m, s, t))
        - np.asarray(covariance(m, s, r)) * np.asarray(covariance(m, t, r)) / covariance(m, r, r)
    )


def _in_span(spec, t):
    t = _check_times(t, spec.model.horizon)
    if np.any(t > spec.length):
        raise DomainError(f"time beyond bridge length {spec.length}: {t}")
    return t


# ----------------------------------------------------------------- marginals


def marginal_variance(spec: BridgeSpec, t):
    """``rho(t) B(t, r) / rho(r)`` for ``0 < t < r``."""
    t = _check_times(t, spec.model.horizon)
    if np.any(t <= 0) or np.any(t >= spec.length):
        raise DomainError(f"marginal density needs 0 < t < {spec.length}, got {t}")
    m, r = spec.model, spec.length
    return _scalar_or_array(m.rho(t) * np.asarray(b_factor(m, t, r)) / m.rho(np.float64(r)))


def marginal_variance_raw(spec: BridgeSpec, t):
    """``A(t, r) / R(r, r)``; the covariance-only route to the same variance."""
    t = _check_times(t, spec.model.horizon)
    r = spec.length
    return _scalar_or_array(np.asarray(a_factor(spec.model, t, r)) / covariance(spec.model, r, r))


def marginal_logpdf(spec: BridgeSpec, t, x):
    v = np.asarray(marginal_variance(spec, t))
    x = np.asarray(x, dtype=float)
    return _scalar_or_array(-0.5 * (_LOG_2PI + np.log(v)) - 0.5 * x * x / v)


def marginal_density(spec: BridgeSpec, t, x):
    return _scalar_or_array(np.exp(marginal_logpdf(spec, t, x)))


# ------------------------------------------------------------------- kernels


def kernel_params(model: CovarianceModel, t, u, r):
    """Slope and variance of the Markov kernel from ``t`` to ``u`` for bridges of length ``r``.

    Broadcasts over arrays; needs ``0 <= t < u < r`` elementwise.
    """
    t, u, r = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, u, r)))
    if not np.all((0 <= t) & (t < u) & (u < r)):
        raise DomainError(f"transition kernel needs 0 <= t < u < r, got t={t}, u={u}, r={r}")
    b_tu = np.asarray(b_factor(model, t, u))
    b_ur = np.asarray(b_factor(model, u, r))
    b_tr = np.asarray(b_factor(model, t, r))
    return b_ur / b_tr, _clamp_variance(b_tu * b_ur / b_tr, b_tu)


def general_kernel_params(model: CovarianceModel, t, u, r):
    """The same slope and variance from raw covariances only (no Markov factorisation).

    ``mu = (R(u,t) R(r,r) - R(u,r) R(t,r)) / A(t,r)`` and
    ``sigma = A(u,r)/R(r,r) - (R(u,t) R(r,r) - R(u,r) R(t,r))^2 / (R(r,r) A(t,r))``.
    Needs ``0 < t``; at ``t = 0`` the conditioning variable is degenerate.
    """
    t, u, r = np.broadcast_arrays(*(np.asarray(a, dtype=float) for a in (t, u, r)))
    if not np.all((0 < t) & (t < r) & (0 < u) & (u < r) & (t != u)):
        raise DomainError("general kernel needs distinct t, u in (0, r)")
    R = lambda a, b: np.asarray(covariance(model, a, b))
    a_tr = np.asarray(a_factor(model, t, r))
    a_ur = np.asarray(a_factor(model, u, r))
    r_rr = R(r, r)
    c = R(u, t) * r_rr - R(u, r) * R(t, r)
    var = a_ur / r_rr - c * c / (r_rr * a_tr)
    return c / a_tr, _clamp_variance(var, a_ur / r_rr)


def transition_kernel(spec: BridgeSpec, t: float, u: float) -> GaussianKernel:
    """Law of the bridge at ``u`` given its value at ``t`` (``0 <= t < u < r``)."""
    slope, var = kernel_params(spec.model, t, u, spec.length)
    return GaussianKernel(slope=float(slope), variance=float(var))


def general_kernel(spec: BridgeSpec, t: float, u: float) -> GaussianKernel:
    """:func:`transition_kernel` computed by :func:`general_kernel_params`."""
    slope, var = general_kernel_params(spec.model, t, u, spec.length)
    return GaussianKernel(slope=float(slope), variance=float(var))


# ------------------------------------------------------------ joint density


def _check_increasing(spec: BridgeSpec, times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size == 0:
        raise DomainError("need a non-empty 1-D array of times")
    if np.any(np.diff(times) <= 0):
        raise DomainError("times must be strictly increasing")
    if times[0] <= 0 or times[-1] >= spec.length:
        raise DomainError(f"times must lie in (0, {spec.length})")
    return times


def joint_logpdf(spec: BridgeSpec, times, values) -> float:
    """Log of the closed-form n-point density of the bridge (tridiagonal precision)."""
    times = _check_increasing(spec, times)
    x = np.asarray(values, dtype=float)
    if x.shape != times.shape:
        raise DomainError("times and values differ in length")
    n = len(times)
    if n == 1:
        return float(marginal_logpdf(spec, times[0], x[0]))
    m, r = spec.model, spec.length
    rho = np.asarray(m.rho(times), dtype=float)
    rho_r = float(m.rho(np.float64(r)))
    b_step = np.asarray(b_factor(m, times[:-1], times[1:]))  # B(t_{k-1}, t_k)
    b_last_r = float(b_factor(m, times[-1], r))
    b_prev_r = float(b_factor(m, times[-2], r))

    log_det = math.log(rho_r / (rho[0] * b_last_r)) - np.sum(np.log(b_step))
    quad = -0.5 * rho[1] / (rho[0] * b_step[0]) * x[0] ** 2
    if n > 2:
        b_skip = np.asarray(b_factor(m, times[:-2], times[2:]))  # B(t_{k-1}, t_{k+1})
        quad -= 0.5 * np.sum(b_skip / (b_step[:-1] * b_step[1:]) * x[1:-1] ** 2)
    quad += np.sum(x[:-1] * x[1:] / b_step)
    quad -= 0.5 * b_prev_r / (b_last_r * b_step[-1]) * x[-1] ** 2
    return float(-0.5 * n * _LOG_2PI + 0.5 * log_det + quad)


def joint_density(spec: BridgeSpec, times, values) -> float:
    return math.exp(joint_logpdf(spec, times, values))


def covariance_matrix(spec: BridgeSpec, times) -> np.ndarray:
    t = np.asarray(times, dtype=float)
    return np.asarray(bridge_covariance(spec, t[:, None], t[None, :]), dtype=float)


# ------------------------------------------------------------------ sampling


def _grid(grid) -> np.ndarray:
    g = np.asarray(grid, dtype=float)
    if g.ndim != 1 or g.size == 0:
        raise DomainError("grid must be a non-empty 1-D array")
    if g[0] < 0 or np.any(np.diff(g) <= 0):
        raise DomainError("grid must start at t >= 0 and strictly increase")
    return g


def sample_paths(spec: BridgeSpec, grid, n_paths: int, seed: int, first_index: int = 0) -> np.ndarray:
    """Sequential-kernel sampler, shape ``(n_paths, len(grid))``.

    Path ``i`` uses the stream keyed by ``(seed, first_index + i)``.
    """
    g = _grid(grid)
    if n_paths < 1:
        raise DomainError("n_paths must be >= 1")
    m, r = spec.model, spec.length
    keys = kernels.path_keys(seed, np.arange(first_index, first_index + n_paths))
    inside = g[g < r]
    rho_g = np.zeros_like(g)
    q_g = np.ones_like(g)
    rho_g[: len(inside)] = m.rho(inside)
    q_g[: len(inside)] = m.q(inside)
    tau = np.full(n_paths, float(r))
    return kernels.sample_bridge_batch(
        g, rho_g, q_g, tau, np.full(n_paths, float(m.rho(np.float64(r)))),
        np.full(n_paths, float(m.q(np.float64(r)))), keys, float(m.q(np.float64(0.0))))


def sample_path(spec: BridgeSpec, grid, seed: int, path_index: int = 0) -> np.ndarray:
    return sample_paths(spec, grid, 1, seed, first_index=path_index)[0]


def sample_paths_cholesky(spec: BridgeSpec, grid, n_paths: int, rng: np.random.Generator) -> np.ndarray:
    """Joint-Gaussian sampler: Cholesky factor of the bridge covariance on the grid."""
    g = _grid(grid)
    out = np.zeros((n_paths, len(g)))
    inner = (g > 0) & (g < spec.length)
    if np.any(inner):
        cov = covariance_matrix(spec, g[inner])
        chol = np.linalg.cholesky(cov)
        out[:, inner] = rng.standard_normal((n_paths, int(inner.sum()))) @ chol.T
    return out
