"""Laws of the random length: atoms plus density pieces on ``(0, inf)``.

Every Bayes formula integrates over windows ``(lo, hi]``: an atom sitting
exactly at ``hi`` is counted, one at ``lo`` is not.
"""
from __future__ import annotations

import math
import re
import warnings
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate as _sci_integrate
from scipy.integrate import IntegrationWarning

from .errors import DomainError, NumericalError

MASS_TOL = 1e-9
TAIL_MASS = 1e-12


@dataclass(frozen=True)
class Atom:
    loc: float
    mass: float


@dataclass(frozen=True)
class DensityPiece:
    """Absolutely continuous part carrying ``mass`` on ``[a, b)``.

    ``pdf`` integrates to ``mass`` over the piece; ``cdf(x)`` is the mass in
    ``[a, x]`` and ``isf(p)`` the point leaving mass ``p`` above it.
    """

    a: float
    b: float
    mass: float
    pdf: Callable[[np.ndarray], np.ndarray]
    cdf: Callable[[np.ndarray], np.ndarray]
    isf: Callable[[float], float]
    label: str = ""

    def upper(self) -> float:
        """Effective right end: ``b`` or the point where residual mass drops below TAIL_MASS."""
        if math.isfinite(self.b):
            return self.b
        return float(self.isf(TAIL_MASS))


def exponential_piece(rate: float, mass: float = 1.0) -> DensityPiece:
    if not rate > 0:
        raise DomainError("exponential rate must be positive")
    return DensityPiece(
        0.0, math.inf, mass,
        pdf=lambda r: mass * rate * np.exp(-rate * np.asarray(r, dtype=float)),
        cdf=lambda r: mass * -np.expm1(-rate * np.maximum(np.asarray(r, dtype=float), 0.0)),
        isf=lambda p: -math.log(min(p / mass, 1.0)) / rate,
        label=f"exponential(rate={rate:g})",
    )


def uniform_piece(a: float, b: float, mass: float = 1.0) -> DensityPiece:
    if not (0 <= a < b < math.inf):
        raise DomainError("uniform piece needs 0 <= a < b < inf")
    h = mass / (b - a)

    def pdf(r):
        r = np.asarray(r, dtype=float)
        return np.where((r >= a) & (r <= b), h, 0.0)

    return DensityPiece(
        a, b, mass, pdf=pdf,
        cdf=lambda r: h * (np.clip(np.asarray(r, dtype=float), a, b) - a),
        isf=lambda p: b - p / h,
        label=f"uniform({a:g},{b:g})",
    )


@dataclass(frozen=True)
class LengthLaw:
    atoms: tuple[Atom, ...] = ()
    pieces: tuple[DensityPiece, ...] = ()
    name: str = ""

    def __post_init__(self):
        for at in self.atoms:
            if not (at.loc > 0 and math.isfinite(at.loc)):
                raise DomainError(f"atom locations must be positive and finite, got {at.loc}")
            if not at.mass > 0:
                raise DomainError(f"atom masses must be positive, got {at.mass}")
        for pc in self.pieces:
            if not (pc.a >= 0 and pc.b > pc.a and pc.mass > 0):
                raise DomainError(f"bad density piece {pc.label}")
        locs = [a.loc for a in self.atoms]
        if len(set(locs)) != len(locs):
            raise DomainError("duplicate atom locations")
        total = self.total_mass
        if abs(total - 1.0) > MASS_TOL:
            raise DomainError(f"total mass is {total!r}, expected 1")

    @property
    def total_mass(self) -> float:
        return sum(a.mass for a in self.atoms) + sum(p.mass for p in self.pieces)

    @property
    def is_discrete(self) -> bool:
        return not self.pieces

    @property
    def atom_locs(self) -> np.ndarray:
        return np.array([a.loc for a in self.atoms], dtype=float)

    @property
    def atom_masses(self) -> np.ndarray:
        return np.array([a.mass for a in self.atoms], dtype=float)

    def support_bounds(self) -> tuple[float, float]:
        """Smallest and largest point of the (tail-truncated) support."""
        lo = [a.loc for a in self.atoms] + [p.a for p in self.pieces]
        hi = [a.loc for a in self.atoms] + [p.upper() for p in self.pieces]
        return min(lo), max(hi)

    def describe(self) -> str:
        if self.name:
            return self.name
        parts = [f"{a.loc:g}={a.mass:g}" for a in self.atoms] + [p.label for p in self.pieces]
        return "+".join(parts)


# --------------------------------------------------------------- constructors


def atoms(points) -> LengthLaw:
    """Discrete law from ``{loc: mass}`` or ``[(loc, mass), ...]``."""
    items = points.items() if isinstance(points, dict) else points
    ats = tuple(sorted((Atom(float(r), float(p)) for r, p in items), key=lambda a: a.loc))
    return LengthLaw(atoms=ats)


def exponential(rate: float = 1.0) -> LengthLaw:
    return LengthLaw(pieces=(exponential_piece(rate),), name=f"exp:{rate:g}")


def uniform(a: float, b: float) -> LengthLaw:
    return LengthLaw(pieces=(uniform_piece(a, b),), name=f"uniform:{a:g},{b:g}")


def mixture(parts) -> LengthLaw:
    """``parts`` is a list of ``(weight, LengthLaw)``; weights must sum to one."""
    ats: dict[float, float] = {}
    pcs = []
    for w, law in parts:
        if not w > 0:
            raise DomainError("mixture weights must be positive")
        for a in law.atoms:
            ats[a.loc] = ats.get(a.loc, 0.0) + w * a.mass
        for p in law.pieces:
            pcs.append(_scale_piece(p, w))
    return LengthLaw(tuple(Atom(r, m) for r, m in sorted(ats.items())), tuple(pcs))


def _scale_piece(p: DensityPiece, w: float) -> DensityPiece:
    return DensityPiece(
        p.a, p.b, w * p.mass,
        pdf=lambda r, f=p.pdf: w * f(r),
        cdf=lambda r, f=p.cdf: w * f(r),
        isf=lambda q, f=p.isf: f(q / w),
        label=f"{w:g}*{p.label}",
    )


def from_config(cfg: dict) -> LengthLaw:
    """Build a law from its JSON form (``kind`` = atoms | exponential | uniform | mixture)."""
    cfg = dict(cfg)
    kind = cfg.get("kind")
    try:
        if kind == "atoms":
            return atoms([(float(r), float(p)) for r, p in cfg["points"]])
        if kind == "exponential":
            return exponential(float(cfg.get("rate", 1.0)))
        if kind == "uniform":
            return uniform(float(cfg["a"]), float(cfg["b"]))
        if kind == "mixture":
            parts = []
            for part in cfg["parts"]:
                part = dict(part)
                w = float(part.pop("weight"))
                parts.append((w, from_config(part)))
            return mixture(parts)
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"bad length-law config {cfg!r}: {exc}") from None
    raise DomainError(f"unknown length-law kind {kind!r}")


def parse_spec(text: str) -> LengthLaw:
    """Parse the compact CLI form: ``atoms:1=0.5,2=0.5``, ``exp:1.0``, ``uniform:1,2``."""
    text = text.strip()
    if text.startswith("{"):
        import json

        return from_config(json.loads(text))
    kind, _, rest = text.partition(":")
    try:
        if kind == "atoms":
            pts = []
            for item in filter(None, re.split(r"\s*,\s*", rest)):
                r, _, p = item.partition("=")
                pts.append((float(r), float(p)))
            return atoms(pts)
        if kind in ("exp", "exponential"):
            return exponential(float(rest) if rest else 1.0)
        if kind == "uniform":
            a, b = (float(v) for v in rest.split(","))
            return uniform(a, b)
    except ValueError as exc:
        if isinstance(exc, DomainError):
            raise
        raise DomainError(f"cannot parse length law {text!r}: {exc}") from None
    raise DomainError(f"cannot parse length law {text!r}")


# ------------------------------------------------------------------ operations


def cdf(law: LengthLaw, t) -> np.ndarray | float:
    """``P(tau <= t)``."""
    t_arr = np.asarray(t, dtype=float)
    out = np.zeros_like(t_arr)
    for a in law.atoms:
        out = out + np.where(t_arr >= a.loc, a.mass, 0.0)
    for p in law.pieces:
        out = out + np.where(t_arr > p.a, p.cdf(np.minimum(t_arr, p.b) if math.isfinite(p.b) else t_arr), 0.0)
    out = np.minimum(out, 1.0)
    return float(out) if out.ndim == 0 else out


def _quad(func, a, b, points=None):
    """Vectorised tanh-sinh quadrature of ``func`` on ``[a, b]`` split at ``points``."""
    gap = 1e-9 * (b - a)
    edges = [a]
    for p in sorted(points or ()):
        if edges[-1] + gap < p < b - gap:
            edges.append(p)
    edges = np.array([*edges, b], dtype=float)
    res = _sci_integrate.tanhsinh(func, edges[:-1], edges[1:], atol=1e-14, rtol=1e-11, minlevel=4, maxlevel=10)
    parts = np.atleast_1d(np.asarray(res.integral, dtype=float)).copy()
    # tanh-sinh can stall at the rounding floor of a noisy integrand; redo
    # those pieces with adaptive Gauss-Kronrod
    for i in np.nonzero(~np.atleast_1d(res.success))[0]:
        parts[i] = _gauss_kronrod(func, float(edges[i]), float(edges[i + 1]))
    val = float(parts.sum())
    if not math.isfinite(val):
        raise NumericalError(f"non-finite quadrature result on [{a:.6g}, {b:.6g}]")
    return val


def _gauss_kronrod(func, a, b):
    with warnings.catch_warnings():
        warnings.simplefilter("error", IntegrationWarning)
        try:
            val, _ = _sci_integrate.quad(lambda r: float(func(np.array([r]))[0]), a, b,
                                         epsabs=1e-13, epsrel=1e-10, limit=200)
        except IntegrationWarning as exc:
            raise NumericalError(f"quadrature on [{a:.6g}, {b:.6g}] did not converge: {exc}") from None
    return val


def integrate(law: LengthLaw, f, window=(0.0, math.inf), points=None) -> float:
    """``int_{(lo, hi]} f(r) P(dr)``.

    ``f`` must act elementwise on float arrays of any shape.  Density
    pieces are integrated by tanh-sinh quadrature, which tolerates
    endpoint singularities; unbounded pieces are cut where the remaining
    mass falls below ``TAIL_MASS``.  ``points`` are optional breakpoints
    (for instance around a sharp peak).
    """
    lo, hi = float(window[0]), float(window[1])
    if lo < 0 or hi < lo:
        raise DomainError(f"bad window ({lo}, {hi}]")
    total = 0.0
    if law.atoms:
        locs = law.atom_locs
        sel = (locs > lo) & (locs <= hi)
        if np.any(sel):
            vals = np.asarray(f(locs[sel]), dtype=float)
            total += float(np.dot(np.broadcast_to(vals, locs[sel].shape), law.atom_masses[sel]))
    for p in law.pieces:
        a, b = max(p.a, lo), min(p.upper(), hi)
        if b > a:
            total += _quad(lambda r, pdf=p.pdf: np.asarray(f(r), dtype=float) * pdf(r), a, b, points)
    return total


def quadrature_nodes(law: LengthLaw, window=(0.0, math.inf), panels: int = 24, order: int = 24):
    """Fixed nodes and weights representing ``P`` restricted to ``(lo, hi]``.

    Atoms are kept exactly; density pieces get composite Gauss-Legendre
    rules on panels of equal prior mass.
    """
    lo, hi = float(window[0]), float(window[1])
    nodes, weights = [], []
    if law.atoms:
        locs = law.atom_locs
        sel = (locs > lo) & (locs <= hi)
        nodes.append(locs[sel])
        weights.append(law.atom_masses[sel])
    if law.pieces:
        x, w = np.polynomial.legendre.leggauss(order)
        for p in law.pieces:
            a, b = max(p.a, lo), min(p.upper(), hi)
            if not b > a:
                continue
            m_a, m_b = float(p.cdf(a)), float(p.cdf(b))
            probs = np.linspace(m_a, m_b, panels + 1)[1:-1]
            inner = [_piece_quantile(p, q) for q in probs]
            edges = np.unique(np.concatenate(([a], inner, [b])))
            for e0, e1 in zip(edges[:-1], edges[1:]):
                r = 0.5 * (e1 - e0) * x + 0.5 * (e1 + e0)
                nodes.append(r)
                weights.append(0.5 * (e1 - e0) * w * p.pdf(r))
    if not nodes:
        return np.zeros(0), np.zeros(0)
    return np.concatenate(nodes), np.concatenate(weights)


def _piece_quantile(p: DensityPiece, level: float) -> float:
    """Point where the piece's accumulated mass reaches ``level``."""
    return float(p.isf(p.mass - level)) if level < p.mass else p.upper()


def quantile(law: LengthLaw, u) -> np.ndarray:
    """Generalised inverse ``inf{t : F(t) >= u}`` for ``u`` in (0, 1)."""
    u = np.atleast_1d(np.asarray(u, dtype=float))
    out = np.empty_like(u)
    todo = np.ones(u.shape, dtype=bool)
    if law.atoms:
        locs = law.atom_locs
        f_at = np.asarray(cdf(law, locs))
        f_left = f_at - law.atom_masses
        for loc, fl, fa in zip(locs, f_left, f_at):
            hit = todo & (u > fl) & (u <= fa)
            out[hit] = loc
            todo &= ~hit
    if law.is_discrete:
        # round-off above the last cumulative mass
        out[todo] = law.atom_locs[-1]
        return out
    if len(law.pieces) == 1 and not law.atoms:
        p = law.pieces[0]
        out[todo] = _vector_isf(p, u[todo])
        return out
    lo_b, hi_b = law.support_bounds()
    lo = np.full(int(todo.sum()), lo_b)
    hi = np.full(int(todo.sum()), hi_b)
    target = u[todo]
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        below = np.asarray(cdf(law, mid)) < target
        lo = np.where(below, mid, lo)
        hi = np.where(below, hi, mid)
        if np.all(hi - lo <= 1e-12 * np.maximum(1.0, hi)):
            break
    out[todo] = hi
    return out


def _vector_isf(p: DensityPiece, u: np.ndarray) -> np.ndarray:
    vec = np.vectorize(lambda v: _piece_quantile(p, v), otypes=[float])
    return vec(u)


def sample_tau(law: LengthLaw, rng: np.random.Generator, size=None):
    """Inverse-CDF draws of the length."""
    u = rng.random(size if size is not None else 1)
    u = np.where(u == 0.0, np.nextafter(0.0, 1.0), u)
    draws = quantile(law, u)
    return float(draws[0]) if size is None else draws.reshape(np.shape(u))


def mean(law: LengthLaw) -> float:
    return integrate(law, lambda r: np.asarray(r, dtype=float))
