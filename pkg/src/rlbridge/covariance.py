"""Gaussian-Markov covariance models.

A centred Gaussian-Markov process started at zero has covariance

    R(s, t) = rho(min(s, t)) * q(max(s, t)),

with ``rho(0) = 0`` and ``rho / q`` strictly increasing.  Models here are
immutable bundles of the two factor functions, evaluated on numpy arrays.
"""
from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.interpolate import PchipInterpolator

from .errors import DomainError

ArrayFunc = Callable[[np.ndarray], np.ndarray]


@dataclass(frozen=True)
class CovarianceModel:
    """Factor pair ``(rho, q)`` of a Gaussian-Markov covariance.

    ``rho`` and ``q`` must accept and return float arrays.  ``q_inf`` is the
    infimum of ``q`` over ``(0, inf)`` when known in closed form, ``None``
    otherwise.
    """

    rho: ArrayFunc
    q: ArrayFunc
    name: str = "custom"
    q_inf: float | None = None
    params: dict = field(default_factory=dict)
    horizon: float = math.inf

    def rho_at(self, t) -> np.ndarray:
        return self.rho(_check_times(t, self.horizon))

    def q_at(self, t) -> np.ndarray:
        return self.q(_check_times(t, self.horizon))

    def describe(self) -> dict:
        return {"name": self.name, **self.params}


def _check_times(t, horizon=math.inf) -> np.ndarray:
    arr = np.asarray(t, dtype=float)
    if np.any(~np.isfinite(arr)) or np.any(arr < 0):
        raise DomainError(f"times must be finite and >= 0, got {t!r}")
    if np.any(arr > horizon):
        raise DomainError(f"time beyond tabulated horizon {horizon}: {t!r}")
    return arr


def _scalar_or_array(values: np.ndarray):
    return float(values) if np.ndim(values) == 0 else values


def covariance(model: CovarianceModel, s, t):
    """``R(s, t) = rho(min(s, t)) q(max(s, t))``; broadcasts over arrays."""
    s = _check_times(s, model.horizon)
    t = _check_times(t, model.horizon)
    lo, hi = np.minimum(s, t), np.maximum(s, t)
    return _scalar_or_array(model.rho(lo) * model.q(hi))


def brownian() -> CovarianceModel:
    return CovarianceModel(
        rho=lambda t: np.asarray(t, dtype=float) * 1.0,
        q=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        name="brownian",
        q_inf=1.0,
    )


def scaled_brownian(sigma: float = 1.0) -> CovarianceModel:
    if not sigma > 0:
        raise DomainError("sigma must be positive")
    s2 = float(sigma) ** 2
    return CovarianceModel(
        rho=lambda t: s2 * np.asarray(t, dtype=float),
        q=lambda t: np.ones_like(np.asarray(t, dtype=float)),
        name="scaled-brownian",
        q_inf=1.0,
        params={"sigma": float(sigma)},
    )


def ou_from_zero(theta: float = 1.0, sigma: float = 1.0) -> CovarianceModel:
    """Ornstein-Uhlenbeck process started at 0: ``dX = -theta X dt + sigma dW``."""
    if not (theta > 0 and sigma > 0):
        raise DomainError("theta and sigma must be positive")
    theta, sigma = float(theta), float(sigma)
    c = sigma**2 / (2.0 * theta)

    def rho(t):
        t = np.asarray(t, dtype=float)
        return c * (np.exp(theta * t) - np.exp(-theta * t))

    def q(t):
        return np.exp(-theta * np.asarray(t, dtype=float))

    return CovarianceModel(
        rho=rho, q=q, name="ou-from-zero", q_inf=0.0,
        params={"theta": theta, "sigma": sigma},
    )


def tabulated(t, rho, q, name: str = "tabulated") -> CovarianceModel:
    """Model from samples, interpolated with monotone cubics (PCHIP).

    The table must start at ``t = 0`` with ``rho = 0``; evaluating beyond the
    last tabulated time raises :class:`DomainError`.
    """
    t = np.asarray(t, dtype=float)
    rho = np.asarray(rho, dtype=float)
    q = np.asarray(q, dtype=float)
    if not (t.ndim == rho.ndim == q.ndim == 1 and len(t) == len(rho) == len(q)):
        raise DomainError("t, rho, q must be 1-D arrays of equal length")
    if len(t) < 2 or t[0] != 0.0 or np.any(np.diff(t) <= 0):
        raise DomainError("tabulated times must start at 0 and strictly increase")
    if rho[0] != 0.0:
        raise DomainError("rho(0) must be 0")
    if np.any(q <= 0) or np.any(rho[1:] <= 0):
        raise DomainError("rho and q must be positive for t > 0")
    rho_i = PchipInterpolator(t, rho, extrapolate=False)
    q_i = PchipInterpolator(t, q, extrapolate=False)
    horizon = float(t[-1])
    return CovarianceModel(
        rho=lambda s: rho_i(np.asarray(s, dtype=float)),
        q=lambda s: q_i(np.asarray(s, dtype=float)),
        name=name,
        q_inf=None,
        params={"points": len(t)},
        horizon=horizon,
    )


def load_table(path: str | Path) -> CovarianceModel:
    """Read a ``t,rho,q`` CSV file into a tabulated model."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames is None or [f.strip() for f in reader.fieldnames] != ["t", "rho", "q"]:
            raise DomainError(f"{path}: expected header 't,rho,q'")
        try:
            rows = [(float(r["t"]), float(r["rho"]), float(r["q"])) for r in reader]
        except (TypeError, ValueError) as exc:
            raise DomainError(f"{path}: {exc}") from None
    if not rows:
        raise DomainError(f"{path}: empty table")
    t, rho, q = map(np.array, zip(*rows))
    return tabulated(t, rho, q, name=f"tabulated:{Path(path).name}")


MODELS = {
    "brownian": brownian,
    "scaled-brownian": scaled_brownian,
    "ou-from-zero": ou_from_zero,
}


def from_config(cfg: dict | str) -> CovarianceModel:
    """Build a model from ``{"kind": ..., **params}`` or a bare kind name."""
    if isinstance(cfg, str):
        cfg = {"kind": cfg}
    cfg = dict(cfg)
    kind = cfg.pop("kind", None)
    if kind == "tabulated":
        return load_table(cfg["file"])
    if kind not in MODELS:
        raise DomainError(f"unknown model kind {kind!r}; choose from {sorted(MODELS)} or 'tabulated'")
    try:
        return MODELS[kind](**cfg)
    except TypeError as exc:
        raise DomainError(f"bad parameters for model {kind!r}: {exc}") from None


# ---------------------------------------------------------------- validation


@dataclass(frozen=True)
class Check:
    name: str
    passed: bool
    detail: str = ""
    warning: bool = False


@dataclass(frozen=True)
class ValidationReport:
    model: str
    horizon: float
    grid_step: float
    checks: tuple[Check, ...]
    alpha_estimate: float
    first_violation: tuple[float, float] | None = None

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def warnings(self) -> list[str]:
        return [c.detail for c in self.checks if c.warning]

    def check(self, name: str) -> Check:
        for c in self.checks:
            if c.name == name:
                return c
        raise KeyError(name)


def validate(model: CovarianceModel, horizon: float, grid_step: float) -> ValidationReport:
    """Scan the standing assumptions on the grid ``step, 2 step, ..., horizon``.

    Failures are reported, never raised.
    """
    if not (horizon > 0 and 0 < grid_step < horizon):
        raise DomainError("need horizon > 0 and 0 < grid_step < horizon")
    n = int(math.floor(horizon / grid_step + 1e-9))
    grid = grid_step * np.arange(1, n + 1)
    rho = np.asarray(model.rho(grid), dtype=float)
    q = np.asarray(model.q(grid), dtype=float)
    checks = []

    pos = bool(np.all(rho > 0) and np.all(q > 0))
    checks.append(Check("positivity", pos, "" if pos else
                        f"non-positive factor at t={grid[np.argmin(np.minimum(rho, q))]:.6g}"))

    ratio = rho / q
    bad = np.nonzero(np.diff(ratio) <= 0)[0]
    first = None
    if bad.size:
        i = int(bad[0])
        first = (float(grid[i]), float(grid[i + 1]))
        checks.append(Check("rho/q strictly increasing", False,
                            f"first violation between t={first[0]:.6g} and t={first[1]:.6g}"))
    else:
        checks.append(Check("rho/q strictly increasing", True))

    zero = np.zeros(1)
    rho0 = float(np.asarray(model.rho(zero))[0])
    checks.append(Check("rho(0) = 0", rho0 == 0.0, f"rho(0) = {rho0!r}"))

    # |f(t+h) - f(t)| <= 10 (|f(t)| + 1) sqrt(h)
    h = grid_step
    cont_ok, cont_detail = True, ""
    for label, f in (("rho", rho), ("q", q)):
        jumps = np.abs(np.diff(f)) > 10.0 * (np.abs(f[:-1]) + 1.0) * math.sqrt(h)
        if np.any(jumps):
            cont_ok = False
            cont_detail = f"{label} jumps near t={grid[np.argmax(jumps)]:.6g}"
            break
    checks.append(Check("continuity", cont_ok, cont_detail))

    checks.append(_markov_triples(grid, rho, q))

    alpha = float(np.min(q))
    margin_ok = alpha > 1e-8 * max(1.0, float(np.max(q)))
    checks.append(Check("inf q > 0 on horizon", margin_ok, f"min q over grid = {alpha:.6g}"))
    if model.q_inf is not None and model.q_inf <= 0:
        checks.append(Check(
            "inf q > 0 on (0, inf)", True,
            f"inf q over (0, inf) is {model.q_inf:g}; right-continuity limits only hold "
            f"on bounded horizons (grid minimum {alpha:.6g})", warning=True))
    return ValidationReport(model.name, float(horizon), float(grid_step), tuple(checks), alpha, first)


def _markov_triples(grid, rho, q, rtol=1e-12) -> Check:
    # R(s,t) R(t,u) = R(t,t) R(s,u) for s < t < u, on every grid triple
    n = len(grid)
    worst = 0.0
    for j in range(1, n - 1):
        i = np.arange(j)[:, None]
        k = np.arange(j + 1, n)[None, :]
        lhs = (rho[i] * q[j]) * (rho[j] * q[k])
        rhs = (rho[j] * q[j]) * (rho[i] * q[k])
        scale = np.maximum(np.abs(lhs), np.abs(rhs))
        rel = np.abs(lhs - rhs) / np.where(scale > 0, scale, 1.0)
        worst = max(worst, float(rel.max()))
    return Check("markov triple identity", worst <= rtol, f"max relative defect {worst:.3g}")
