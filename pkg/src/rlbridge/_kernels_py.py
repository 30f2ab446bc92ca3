"""Pure numpy implementation of the hot kernels.

Mirrors ``_kernels.pyx`` operation for operation; used when the compiled
extension is missing or ``RLBRIDGE_PURE_PYTHON`` is set.  Integer streams
are identical across backends; floating results can differ by a few ulps
because numpy and the C library implement ``log``, ``cos`` and ``exp``
differently.

Random streams are counter based: path ``i`` of a run seeded with ``seed``
owns the key ``mix64(mix64(seed) ^ mix64((i + 1) * GOLDEN))`` and its
``j``-th uniform is ``mix64(key + (j + 1) * GOLDEN)`` mapped to (0, 1).
Uniform 0 drives the length draw; uniforms ``2k + 1, 2k + 2`` feed the
Box-Muller normal used at grid index ``k``.
"""
from __future__ import annotations

import numpy as np

GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_TWO_M53 = 2.0**-53
_TWO_PI = 6.283185307179586

BACKEND = "python"


def _mix64(z: np.ndarray) -> np.ndarray:
    z = np.asarray(z, dtype=np.uint64)
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def path_keys(seed: int, path_index) -> np.ndarray:
    idx = np.atleast_1d(np.asarray(path_index, dtype=np.uint64))
    base = _mix64(np.array([seed % 2**64], dtype=np.uint64))
    with np.errstate(over="ignore"):
        return _mix64(base ^ _mix64((idx + np.uint64(1)) * GOLDEN))


def uniforms(keys: np.ndarray, counters) -> np.ndarray:
    """Uniforms on (0, 1); ``keys`` (n,) against ``counters`` (m,) gives (n, m)."""
    keys = np.asarray(keys, dtype=np.uint64)[:, None]
    ctr = np.atleast_1d(np.asarray(counters, dtype=np.uint64))[None, :]
    with np.errstate(over="ignore"):
        bits = _mix64(keys + (ctr + np.uint64(1)) * GOLDEN)
    return ((bits >> np.uint64(11)).astype(np.float64) + 0.5) * _TWO_M53


def normals(keys: np.ndarray, m: int) -> np.ndarray:
    """Standard normals at stream positions ``0..m-1`` for each key, shape (n, m)."""
    k = np.arange(m, dtype=np.uint64)
    u1 = uniforms(keys, 2 * k + 1)
    u2 = uniforms(keys, 2 * k + 2)
    return np.sqrt(-2.0 * np.log(u1)) * np.cos(_TWO_PI * u2)


def sample_bridge_batch(grid, rho_g, q_g, tau, rho_tau, q_tau, keys, q0):
    """Sequential-kernel sampler for a batch of bridges with per-path lengths.

    Grid points at or beyond a path's length are exact zeros; the value at a
    grid point ``0`` is 0 and the pinning start is ``(t, x) = (0, 0)``.
    """
    grid = np.asarray(grid, dtype=float)
    n, m = len(tau), len(grid)
    z = normals(keys, m)
    out = np.zeros((n, m))
    x = np.zeros(n)
    rho_p = np.zeros(n)
    q_p = np.full(n, float(q0))
    for k in range(m):
        u = grid[k]
        live = tau > u
        if u <= 0.0:
            continue
        ru, qu = rho_g[k], q_g[k]
        b_pu = ru * q_p - rho_p * qu
        b_ur = rho_tau * qu - ru * q_tau
        b_pr = rho_tau * q_p - rho_p * q_tau
        with np.errstate(divide="ignore", invalid="ignore"):
            slope = np.where(live, b_ur / b_pr, 0.0)
            var = np.where(live, b_pu * b_ur / b_pr, 0.0)
        var = np.where(var < 0.0, 0.0, var)
        xk = np.where(live, slope * x + np.sqrt(var) * z[:, k], 0.0)
        out[:, k] = xk
        x = xk
        rho_p = np.where(live, ru, rho_p)
        q_p = np.where(live, qu, q_p)
    return out


def atom_posterior_batch(x, rho_t, q_t, rho_p, q_p, rho_r, q_r, log_mass):
    """Posterior masses over atoms for many observed values at one time.

    Scores are ``0.5 log(rho(r)/B(t,r)) - 0.5 x^2 B(p,r) / (B(t,r) B(p,t))``
    plus the log prior mass, normalised by log-sum-exp per row.  ``p`` is the
    previous observation time (0 for a single observation).
    """
    x = np.asarray(x, dtype=float)[:, None]
    rho_r = np.asarray(rho_r, dtype=float)[None, :]
    q_r = np.asarray(q_r, dtype=float)[None, :]
    b_tr = rho_r * q_t - rho_t * q_r
    b_pr = rho_r * q_p - rho_p * q_r
    b_pt = rho_t * q_p - rho_p * q_t
    coef = 0.5 * b_pr / (b_tr * b_pt)
    base = 0.5 * np.log(rho_r / b_tr) + np.asarray(log_mass, dtype=float)[None, :]
    score = base - coef * x * x
    score -= score.max(axis=1, keepdims=True)
    w = np.exp(score)
    return w / w.sum(axis=1, keepdims=True)
