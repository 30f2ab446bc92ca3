"""Exact posterior of the pinning time and predictive laws of the bridge.

Observing ``xi_t = 0`` means the bridge is already pinned (``tau <= t``);
any other value means it is still live (``tau > t``).  Live-branch weights
are formed from log-likelihood scores

    score(r) = 0.5 log(rho(r) / B(t, r)) - 0.5 x^2 B(p, r) / (B(t, r) B(p, t)),

where ``p`` is the previous observation time (0 when there is none).  Only
differences of scores are ever exponentiated, so tiny or huge Gaussian
densities never appear as such.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq
from scipy.special import ndtr

from . import kernels
from . import length_law as ll
from .bridge import GaussianKernel, _hermite
from .covariance import CovarianceModel
from .errors import DomainError, InconsistentObservationError, NumericalError, PreconditionError
from .random_bridge import BridgePath, PathBatch, zero_set_detector

GH_DEGREE = 64


@dataclass(frozen=True)
class Observation:
    t: float
    x: float

    def __post_init__(self):
        if not (self.t > 0 and math.isfinite(self.t)):
            raise DomainError(f"observation time must be positive, got {self.t}")
        if not math.isfinite(self.x):
            raise DomainError(f"observation value must be finite, got {self.x}")

    @property
    def pinned(self) -> bool:
        return self.x == 0.0


def _as_obs(o) -> Observation:
    return o if isinstance(o, Observation) else Observation(float(o[0]), float(o[1]))


# --------------------------------------------------------------- score helpers


def live_score(model: CovarianceModel, t_prev: float, t: float, x: float):
    """Vectorised ``r -> score(r)`` for ``r > t``; ``-inf`` for ``r <= t``."""
    rho_t, q_t = float(model.rho_at(t)), float(model.q_at(t))
    rho_p, q_p = float(model.rho_at(t_prev)), float(model.q_at(t_prev))
    b_pt = rho_t * q_p - rho_p * q_t
    x2 = float(x) ** 2

    def score(r):
        r = np.asarray(r, dtype=float)
        rr, qr = model.rho_at(r), model.q_at(r)
        b_tr = rr * q_t - rho_t * qr
        b_pr = rr * q_p - rho_p * qr
        with np.errstate(divide="ignore", invalid="ignore"):
            s = 0.5 * np.log(rr / b_tr) - 0.5 * x2 * b_pr / (b_tr * b_pt)
        return np.where((r > t) & (b_tr > 0), s, -np.inf)

    return score


def _probe_points(law: ll.LengthLaw, lo: float, hi: float) -> np.ndarray:
    pts = []
    for p in law.pieces:
        a, b = max(p.a, lo), min(p.upper(), hi)
        if b > a:
            span = b - a
            pts.append(a + span * np.linspace(0.0, 1.0, 129)[1:-1])
            pts.append(a + span * np.logspace(-9, -1, 33))
    return np.concatenate(pts) if pts else np.zeros(0)


def _breakpoints(lo: float, hi: float, peak: float) -> list[float]:
    """Peak location plus a geometric ladder away from the window start."""
    d = peak - lo
    if not d > 0:
        return []
    pts = [peak, lo + 0.1 * d]
    step = 4.0
    while lo + step * d < min(hi, lo + 1e6 * d):
        pts.append(lo + step * d)
        step *= 4.0
    return sorted(p for p in pts if lo < p < hi)


def _peak(law: ll.LengthLaw, fn, lo: float, hi: float):
    probes = _probe_points(law, lo, hi)
    if not probes.size:
        return -np.inf, None
    vals = np.asarray(fn(probes), dtype=float)
    i = int(np.argmax(vals))
    return float(vals[i]), float(probes[i])


def log_integral_exp(law: ll.LengthLaw, fn, window, points=None) -> float:
    """``log int_{(lo, hi]} exp(fn(r)) P(dr)`` without overflow or underflow."""
    lo, hi = window
    best = -np.inf
    if law.atoms:
        locs = law.atom_locs
        sel = (locs > lo) & (locs <= hi)
        if np.any(sel):
            best = max(best, float(np.max(fn(locs[sel]))))
    peak_val, peak = _peak(law, fn, lo, hi)
    best = max(best, peak_val)
    if points is None and peak is not None:
        points = _breakpoints(lo, hi, peak)
    mass_in_window = float(ll.cdf(law, hi) - ll.cdf(law, lo)) if math.isfinite(hi) else 1.0 - float(ll.cdf(law, lo))
    if mass_in_window <= 0.0:
        raise InconsistentObservationError(
            f"the length law puts no mass on ({lo:g}, {hi:g}]; the observations are impossible")
    if not math.isfinite(best):
        raise NumericalError(f"likelihood vanishes on ({lo:g}, {hi:g}]")
    total = ll.integrate(law, lambda r: np.exp(np.asarray(fn(r), dtype=float) - best), (lo, hi),
                         points=points)
    if not total > 0:
        raise NumericalError(
            f"normaliser underflow on ({lo:g}, {hi:g}] (peak log-score {best:.6g})")
    return best + math.log(total)


# ----------------------------------------------------------------- posteriors


@dataclass(frozen=True)
class PosteriorMeasure:
    """Law of the length given observations, as a weight against the prior.

    ``log_weight`` is the log of ``dPosterior/dPrior`` on ``window``; the
    weight vanishes outside the window.  ``branch`` is ``"pinned"``,
    ``"psi"`` (first zero between two observations; ``index`` is ``k``) or
    ``"live"``.
    """

    base: ll.LengthLaw
    window: tuple[float, float]
    branch: str
    log_weight: Callable[[np.ndarray], np.ndarray]
    index: int | None = None
    points: tuple[float, ...] = ()

    def weight(self, r):
        r = np.asarray(r, dtype=float)
        lo, hi = self.window
        inside = (r > lo) & (r <= hi)
        with np.errstate(invalid="ignore"):
            w = np.where(inside, np.exp(np.where(inside, self.log_weight(r), -np.inf)), 0.0)
        return float(w) if w.ndim == 0 else w

    def integrate(self, f, window=None, points=()) -> float:
        """``int f dPosterior``; ``f`` must act elementwise on arrays."""
        lo, hi = self.window
        if window is not None:
            lo, hi = max(lo, window[0]), min(hi, window[1])
            if hi <= lo:
                return 0.0
        return ll.integrate(self.base, lambda r: np.asarray(f(r), dtype=float) * self.weight(r), (lo, hi),
                            points=[*self.points, *points])

    def total_mass(self) -> float:
        return self.integrate(lambda r: np.ones_like(np.asarray(r, dtype=float)))

    def cdf(self, s: float) -> float:
        return self.integrate(lambda r: np.ones_like(np.asarray(r, dtype=float)), (0.0, s))

    def survival(self, s: float) -> float:
        return 1.0 - self.cdf(s)

    def mean(self) -> float:
        return self.integrate(lambda r: np.asarray(r, dtype=float))

    def atom_masses(self) -> dict[float, float]:
        lo, hi = self.window
        locs = self.base.atom_locs
        sel = (locs > lo) & (locs <= hi)
        w = np.atleast_1d(self.weight(locs[sel])) * self.base.atom_masses[sel]
        return {float(r): float(m) for r, m in zip(locs[sel], w)}

    def quantile(self, level: float) -> float:
        """Smallest ``s`` in the window with posterior CDF ``>= level``."""
        if not 0.0 < level < 1.0:
            raise DomainError("quantile level must lie in (0, 1)")
        if self.base.is_discrete:
            masses = sorted(self.atom_masses().items())
            acc = np.cumsum([m for _, m in masses])
            i = min(int(np.searchsorted(acc, level - 1e-12)), len(masses) - 1)
            return masses[i][0]
        lo, hi = self.window
        hi = min(hi, self.base.support_bounds()[1])
        return float(brentq(lambda s: self.cdf(s) - level, lo, hi, xtol=1e-12, rtol=1e-12))


def _pinned_posterior(law: ll.LengthLaw, t: float) -> PosteriorMeasure:
    f_t = float(ll.cdf(law, t))
    if not f_t > 0:
        raise PreconditionError(
            f"observed xi_t = 0 at t={t:g} but F(t) = 0; the pinned-branch formula needs F(t) > 0")
    lw = -math.log(f_t)
    return PosteriorMeasure(law, (0.0, float(t)), "pinned",
                            lambda r: np.full(np.shape(r), lw))


def _score_posterior(law, score, window, branch, index=None) -> PosteriorMeasure:
    _, peak = _peak(law, score, *window)
    points = _breakpoints(window[0], window[1], peak) if peak is not None else []
    log_z = log_integral_exp(law, score, window, points)
    return PosteriorMeasure(law, window, branch,
                            lambda r: np.asarray(score(r), dtype=float) - log_z, index, tuple(points))


def posterior_single(model: CovarianceModel, law: ll.LengthLaw, obs) -> PosteriorMeasure:
    """Conditional law of the length given one observation ``xi_t = x``."""
    obs = _as_obs(obs)
    if obs.pinned:
        return _pinned_posterior(law, obs.t)
    return _score_posterior(law, live_score(model, 0.0, obs.t, obs.x), (obs.t, math.inf), "live")


def check_observations(observations: Sequence) -> list[Observation]:
    obs = [_as_obs(o) for o in observations]
    if not obs:
        raise DomainError("need at least one observation")
    times = np.array([o.t for o in obs])
    if np.any(np.diff(times) <= 0):
        raise DomainError("observation times must be strictly increasing")
    seen_zero = False
    for o in obs:
        if seen_zero and not o.pinned:
            raise DomainError(
                f"value {o.x} at t={o.t} follows a zero: a pinned bridge stays at 0")
        seen_zero |= o.pinned
    return obs


def posterior_multi(model: CovarianceModel, law: ll.LengthLaw, observations) -> PosteriorMeasure:
    """Conditional law of the length given observations at increasing times.

    Only the last live value enters: the value just before the first zero
    (with the window between the two times) or the final value when no zero
    was seen.
    """
    obs = check_observations(observations)
    first_zero = next((i for i, o in enumerate(obs) if o.pinned), None)
    if first_zero == 0:
        return _pinned_posterior(law, obs[0].t)
    if first_zero is None:
        last = obs[-1]
        # earlier values only shift the score by a constant in r
        return _score_posterior(law, live_score(model, 0.0, last.t, last.x), (last.t, math.inf), "live")
    k = first_zero  # 1-based index of the last live observation
    t_k, x_k = obs[k - 1].t, obs[k - 1].x
    t_prev = obs[k - 2].t if k >= 2 else 0.0
    score = live_score(model, t_prev, t_k, x_k)
    return _score_posterior(law, score, (t_k, obs[k].t), "psi", index=k)


def phi_weight(model: CovarianceModel, law: ll.LengthLaw, t: float, r, x: float):
    """Posterior density of the length against the prior on ``{xi_t = x != 0}``.

    Evaluated as ``1 / int_{(t, inf)} exp(D(s, r)) P(ds)`` with the exponent
    difference ``D(s, r) = 0.5 log(rho(s) B(t,r) / (rho(r) B(t,s)))
    + 0.5 x^2 (rho(s) q(r) - rho(r) q(s)) / (B(t,r) B(t,s))``.
    """
    if x == 0.0:
        raise DomainError("x = 0 belongs to the pinned branch; use posterior_single")
    if not t > 0:
        raise DomainError("t must be positive")
    r_arr = np.atleast_1d(np.asarray(r, dtype=float))
    if np.any(r_arr <= t):
        raise DomainError(f"phi weight needs r > t={t}")
    rho_t, q_t = float(model.rho_at(t)), float(model.q_at(t))
    x2 = float(x) ** 2
    out = np.empty_like(r_arr)
    for i, rv in enumerate(r_arr):
        rho_r, q_r = float(model.rho_at(rv)), float(model.q_at(rv))
        b_tr = rho_r * q_t - rho_t * q_r

        def diff(s, rho_r=rho_r, q_r=q_r, b_tr=b_tr):
            s = np.asarray(s, dtype=float)
            rs, qs = model.rho_at(s), model.q_at(s)
            b_ts = rs * q_t - rho_t * qs
            with np.errstate(divide="ignore", invalid="ignore"):
                d = 0.5 * np.log(rs * b_tr / (rho_r * b_ts)) + 0.5 * x2 * (rs * q_r - rho_r * qs) / (b_tr * b_ts)
            return np.where((s > t) & (b_ts > 0), d, -np.inf)

        out[i] = math.exp(-log_integral_exp(law, diff, (t, math.inf)))
    return float(out[0]) if np.ndim(r) == 0 else out


# ---------------------------------------------------------------- predictions


@dataclass(frozen=True)
class PredictiveLaw:
    """Law of ``xi_u`` given observations: an atom at 0 plus a Gaussian mixture.

    Component ``j`` is ``Normal(slopes[j] * x, variances[j])`` with mixing
    weight ``weights[j]``; ``x`` is the last observed live value.
    """

    zero_mass: float
    weights: np.ndarray
    slopes: np.ndarray
    variances: np.ndarray
    x: float
    nodes: np.ndarray

    def total_mass(self) -> float:
        return self.zero_mass + float(np.sum(self.weights))

    def components(self) -> list[tuple[float, GaussianKernel]]:
        return [(float(w), GaussianKernel(float(s), float(v)))
                for w, s, v in zip(self.weights, self.slopes, self.variances)]

    def expect(self, g, degree: int = GH_DEGREE) -> float:
        """``E[g(xi_u) | observations]``."""
        val = self.zero_mass * float(np.asarray(g(np.zeros(1)), dtype=float)[0])
        if self.weights.size:
            z, w = _hermite(degree)
            y = self.slopes[:, None] * self.x + np.sqrt(2.0 * self.variances)[:, None] * z[None, :]
            gy = np.asarray(g(y), dtype=float)
            val += float(np.sum(self.weights * (gy @ w))) / math.sqrt(math.pi)
        return val

    def mean(self) -> float:
        return float(np.sum(self.weights * self.slopes)) * self.x

    def prob(self, a: float, b: float) -> float:
        """``P(a < xi_u <= b)``, the atom at zero included when inside."""
        p = self.zero_mass if a < 0.0 <= b else 0.0
        if self.weights.size:
            m = self.slopes * self.x
            sd = np.sqrt(self.variances)
            p += float(np.sum(self.weights * (ndtr((b - m) / sd) - ndtr((a - m) / sd))))
        return p


def _kernel_arrays(model: CovarianceModel, t: float, u: float, r: np.ndarray):
    rho_t, q_t = float(model.rho_at(t)), float(model.q_at(t))
    rho_u, q_u = float(model.rho_at(u)), float(model.q_at(u))
    rr, qr = model.rho_at(r), model.q_at(r)
    b_tu = rho_u * q_t - rho_t * q_u
    b_ur = rr * q_u - rho_u * qr
    b_tr = rr * q_t - rho_t * qr
    var = b_tu * b_ur / b_tr
    return b_ur / b_tr, np.where(var < 0, 0.0, var)


def predict_from_posterior(model: CovarianceModel, post: PosteriorMeasure, last: Observation,
                           u: float, panels: int = 24, order: int = 24) -> PredictiveLaw:
    if not u > last.t:
        raise DomainError(f"prediction time u={u} must exceed the last observation time {last.t}")
    if post.branch != "live":
        return PredictiveLaw(1.0, np.zeros(0), np.zeros(0), np.zeros(0), 0.0, np.zeros(0))
    zero_mass = post.cdf(u)
    nodes, w = ll.quadrature_nodes(post.base, (u, math.inf), panels, order)
    mix = w * np.asarray(post.weight(nodes))
    slopes, variances = _kernel_arrays(model, last.t, u, nodes)
    keep = mix > 0
    return PredictiveLaw(zero_mass, mix[keep], slopes[keep], variances[keep], last.x, nodes[keep])


def predict(model: CovarianceModel, law: ll.LengthLaw, obs, u: float) -> PredictiveLaw:
    """Conditional law of ``xi_u`` given ``xi_t`` (``u > t``)."""
    obs = _as_obs(obs)
    return predict_from_posterior(model, posterior_single(model, law, obs), obs, u)


def predict_multi(model: CovarianceModel, law: ll.LengthLaw, observations, u: float) -> PredictiveLaw:
    obs = check_observations(observations)
    return predict_from_posterior(model, posterior_multi(model, law, obs), obs[-1], u)


def expect_joint(model: CovarianceModel, law: ll.LengthLaw, observations, u: float, g,
                 degree: int = GH_DEGREE) -> float:
    """``E[g(tau, xi_u) | observations]`` for ``u`` after the last observation.

    ``g(r, y)`` is called with an ``(n, 1)`` column of lengths and an
    ``(n, m)`` array of values and must broadcast.  The pinned
    part and ``(t_n, u]`` use ``g(r, 0)``; beyond ``u`` the conditional
    expectation of ``g(r, .)`` under the bridge kernel is taken by
    Gauss-Hermite quadrature.
    """
    if isinstance(observations, Observation):
        observations = [observations]
    obs = check_observations(observations)
    last = obs[-1]
    if not u > last.t:
        raise DomainError(f"u={u} must exceed the last observation time {last.t}")
    post = posterior_multi(model, law, obs)
    z, w = _hermite(degree)

    def integrand(r):
        r = np.asarray(r, dtype=float)
        flat = r.reshape(-1)
        out = np.empty(flat.shape)
        below = flat <= u
        if np.any(below):
            rb = flat[below][:, None]
            out[below] = np.asarray(g(rb, np.zeros_like(rb)), dtype=float).reshape(-1)
        if np.any(~below):
            ra = flat[~below]
            slope, var = _kernel_arrays(model, last.t, u, ra)
            y = (slope * last.x)[:, None] + np.sqrt(2.0 * var)[:, None] * z[None, :]
            gy = np.broadcast_to(np.asarray(g(ra[:, None], y), dtype=float), y.shape)
            out[~below] = gy @ w / math.sqrt(math.pi)
        return out.reshape(r.shape)

    return post.integrate(integrand, points=(u,))


# ----------------------------------------------------------- path estimates


def filtration_estimate(model: CovarianceModel, law: ll.LengthLaw, path: BridgePath, t: float, g) -> float:
    """``E[g(tau) | path up to t]``.

    A pinned prefix reveals the length exactly; a live one only matters
    through its final value.
    """
    prefix = path.prefix(t)
    t_obs, x_t = float(prefix.grid[-1]), float(prefix.values[-1])
    if t_obs <= 0.0:
        return ll.integrate(law, g)
    if x_t == 0.0:
        idx = zero_set_detector(path)
        if idx == -1 or path.grid[idx] > t_obs:
            raise DomainError("zero value before the detected pinning time")
        return float(np.asarray(g(np.array([path.tau])), dtype=float)[0])
    return posterior_single(model, law, Observation(t_obs, x_t)).integrate(g)


def filtration_estimate_batch(model: CovarianceModel, law: ll.LengthLaw, batch: PathBatch,
                              t: float, g) -> np.ndarray:
    """Vectorised :func:`filtration_estimate` over a batch of paths."""
    k = int(np.searchsorted(batch.grid, t, side="right")) - 1
    if k < 0:
        raise DomainError(f"no grid point at or before t={t}")
    t_obs = float(batch.grid[k])
    x = batch.values[:, k]
    out = np.empty(len(batch))
    pinned = x == 0.0
    if t_obs > 0 and np.any(pinned):
        if np.any(batch.tau[pinned] > t_obs):
            raise DomainError("zero value before the pinning time")
        out[pinned] = np.asarray(g(batch.tau[pinned]), dtype=float)
    live = ~pinned if t_obs > 0 else np.ones(len(batch), dtype=bool)
    if t_obs <= 0:
        out[:] = ll.integrate(law, g)
        return out
    if not np.any(live):
        return out
    if law.is_discrete:
        locs = law.atom_locs
        sel = locs > t_obs
        if not np.any(sel):
            raise InconsistentObservationError("live values after the last atom of the length law")
        post = atom_posterior(model, law, t_obs, x[live])
        out[live] = post @ np.asarray(g(locs[sel]), dtype=float)
    else:
        for i in np.nonzero(live)[0]:
            out[i] = posterior_single(model, law, Observation(t_obs, float(x[i]))).integrate(g)
    return out


def atom_posterior(model: CovarianceModel, law: ll.LengthLaw, t: float, x, t_prev: float = 0.0,
                   window_hi: float = math.inf) -> np.ndarray:
    """Posterior masses over the atoms in ``(t, window_hi]`` for many live values.

    Rows follow ``x``, columns the atoms in the window in increasing order.
    """
    locs = law.atom_locs
    sel = (locs > t) & (locs <= window_hi)
    if not np.any(sel):
        raise InconsistentObservationError(f"no atom of the length law in ({t:g}, {window_hi:g}]")
    r = locs[sel]
    return kernels.atom_posterior_batch(
        np.atleast_1d(np.asarray(x, dtype=float)),
        float(model.rho_at(t)), float(model.q_at(t)),
        float(model.rho_at(t_prev)), float(model.q_at(t_prev)),
        model.rho_at(r), model.q_at(r), np.log(law.atom_masses[sel]))
