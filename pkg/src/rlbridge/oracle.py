"""Brute-force references for the closed-form machinery.

Nothing here uses the bridge kernels, the factorised joint density or the
posterior scores.  Paths come straight from the definition: simulate the
underlying process ``X`` at the observation times and at ``tau``, then
project out the component along ``X_tau``:

    xi_t = X_t - R(t, tau v t) / R(tau v t, tau v t) * X_{tau v t}.

Conditional laws are estimated by binning, and the exact-inference
counterparts are rebuilt from dense Gaussian conditioning.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate as sp_integrate
from scipy.special import logsumexp

from . import bayes
from . import length_law as ll
from .bridge import BridgeSpec, covariance_matrix
from .covariance import CovarianceModel, covariance
from .errors import DomainError, InsufficientSampleError

MIN_RETAINED = 100


# ------------------------------------------------------------------ sampler


def sample_definition(model: CovarianceModel, law: ll.LengthLaw, times, n_paths: int,
                      rng: np.random.Generator, tau=None):
    """Values of the random-length bridge at ``times`` by projection of ``X``.

    Returns ``(values, tau)`` with ``values`` of shape ``(n_paths, len(times))``.
    """
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or np.any(np.diff(times) <= 0) or times[0] < 0:
        raise DomainError("times must be increasing and non-negative")
    if tau is None:
        tau = ll.sample_tau(law, rng, n_paths)
    tau = np.asarray(tau, dtype=float)
    n, m = len(tau), len(times)
    pts = np.concatenate([np.broadcast_to(times, (n, m)), tau[:, None]], axis=1)
    order = np.argsort(pts, axis=1, kind="stable")
    srt = np.take_along_axis(pts, order, axis=1)
    rho = model.rho_at(srt)
    q = model.q_at(srt)
    z = rng.standard_normal((n, m + 1))
    x_srt = np.empty((n, m + 1))
    prev_x = np.zeros(n)
    prev_rho = np.zeros(n)
    prev_q = np.full(n, float(model.q_at(np.zeros(1))[0]))
    for j in range(m + 1):
        # X is Gauss-Markov: X_b | X_a ~ N(q_b/q_a X_a, rho_b q_b - rho_a q_b^2 / q_a)
        ratio = q[:, j] / prev_q
        var = rho[:, j] * q[:, j] - prev_rho * q[:, j] * ratio
        x_srt[:, j] = ratio * prev_x + np.sqrt(np.maximum(var, 0.0)) * z[:, j]
        prev_x, prev_rho, prev_q = x_srt[:, j], rho[:, j], q[:, j]
    x = np.empty_like(x_srt)
    np.put_along_axis(x, order, x_srt, axis=1)
    x_t, x_tau = x[:, :m], x[:, m]
    out = np.empty((n, m))
    for j, t in enumerate(times):
        pin = np.maximum(t, tau)
        c = np.asarray(covariance(model, t, pin)) / np.asarray(covariance(model, pin, pin)) if t > 0 else 0.0
        x_pin = np.where(tau > t, x_tau, x_t[:, j])
        out[:, j] = x_t[:, j] - c * x_pin
    out[:, times == 0] = 0.0
    return out, tau


# -------------------------------------------------------- binned conditionals


@dataclass(frozen=True)
class BinnedConditional:
    """Empirical law of a target among paths with ``|xi_t - x| < h``.

    ``support`` holds atom locations (discrete target) or bin edges;
    ``frequencies`` sum to one.
    """

    t: float
    target: str
    h: float
    center: float
    count: int
    support: np.ndarray
    frequencies: np.ndarray
    std_errors: np.ndarray
    discrete: bool
    samples: np.ndarray = field(repr=False)
    seed: int | None = None
    n_paths: int | None = None

    def mean(self) -> tuple[float, float]:
        s = self.samples
        return float(s.mean()), float(s.std(ddof=1) / math.sqrt(len(s)))


def _summarise(samples, t, target, h, center, discrete_support=None, edges=None, seed=None, n_paths=None):
    n = len(samples)
    if n < MIN_RETAINED:
        raise InsufficientSampleError(
            f"only {n} paths retained near x={center:g} at t={t:g}; increase n_paths or h (h={h:g})")
    if discrete_support is not None:
        support = np.asarray(discrete_support, dtype=float)
        counts = np.array([np.count_nonzero(samples == a) for a in support], dtype=float)
        discrete = True
    else:
        support = np.asarray(edges if edges is not None else np.quantile(samples, np.linspace(0, 1, 11)))
        counts, _ = np.histogram(samples, bins=support)
        counts = counts.astype(float)
        discrete = False
    freq = counts / max(counts.sum(), 1.0)
    se = np.sqrt(freq * (1 - freq) / n)
    return BinnedConditional(float(t), target, float(h), float(center), n, support, freq, se, discrete,
                             np.asarray(samples), seed, n_paths)


def _select(xi_t, x, h):
    return xi_t == 0.0 if x == 0.0 else np.abs(xi_t - x) < h


def default_bandwidth(xi_t) -> float:
    live = xi_t[xi_t != 0.0]
    return 0.01 * float(live.std()) if live.size > 1 else 0.01


def empirical_posterior(model: CovarianceModel, law: ll.LengthLaw, t: float, x: float, h: float | None,
                        n_paths: int, seed: int, edges=None, chunk: int = 250_000) -> BinnedConditional:
    """Law of ``tau`` among simulated paths whose value at ``t`` is near ``x``.

    ``x = 0`` keeps exact zeros only.  ``h = None`` picks ``0.01 * std``
    of the live values at ``t``.
    """
    if h is not None and not h > 0:
        raise DomainError("h must be positive")
    rng = np.random.default_rng(seed)
    xi_all, tau_all = [], []
    for start in range(0, n_paths, chunk):
        v, tau = sample_definition(model, law, [t], min(chunk, n_paths - start), rng)
        xi_all.append(v[:, 0])
        tau_all.append(tau)
    xi_t, tau = np.concatenate(xi_all), np.concatenate(tau_all)
    if h is None:
        h = default_bandwidth(xi_t)
    kept = tau[_select(xi_t, x, h)]
    support = law.atom_locs if law.is_discrete else None
    return _summarise(kept, t, "tau", h, x, support, edges, seed, n_paths)


def empirical_predictive(model: CovarianceModel, law: ll.LengthLaw, t: float, x: float, u: float,
                         h: float | None, n_paths: int, seed: int, edges=None) -> BinnedConditional:
    """Law of ``xi_u`` among simulated paths with ``xi_t`` near ``x``."""
    if not u > t:
        raise DomainError("u must exceed t")
    rng = np.random.default_rng(seed)
    v, _ = sample_definition(model, law, [t, u], n_paths, rng)
    if h is None:
        h = default_bandwidth(v[:, 0])
    kept = v[_select(v[:, 0], x, h), 1]
    return _summarise(kept, t, "xi_u", h, x, None, edges, seed, n_paths)


def total_variation(post: bayes.PosteriorMeasure, emp: BinnedConditional) -> float:
    """Total variation between an exact posterior and a binned estimate."""
    if emp.discrete:
        masses = post.atom_masses()
        exact = np.array([masses.get(float(a), 0.0) for a in emp.support])
    else:
        cdf = np.array([post.cdf(e) for e in emp.support])
        exact = np.diff(cdf)
        exact = np.append(exact, max(0.0, 1.0 - cdf[-1]) + cdf[0])
        freq = np.append(emp.frequencies, 0.0)
        return 0.5 * float(np.sum(np.abs(exact - freq)))
    return 0.5 * float(np.sum(np.abs(exact - emp.frequencies)))


def report(check: str, parameters: dict, statistic, tolerance, passed: bool, **extra) -> dict:
    out = {"check": check, "parameters": parameters, "statistic": statistic,
           "tolerance": tolerance, "pass": bool(passed)}
    out.update(extra)
    return out


# ----------------------------------------------- conditional-independence test


def markov_ci_test(model: CovarianceModel, law: ll.LengthLaw, times, g, n_paths: int, seed: int,
                   conditioning: str = "state", n_bins: int = 10, min_count: int = 200,
                   z_max: float = 3.0) -> dict:
    """Does ``xi_{t1}`` carry information on ``g(xi_u)`` beyond the conditioning variable?

    The conditioning variable is ``xi_{t2}`` (``"state"``) or the increment
    ``xi_{t2} - xi_{t1}`` (``"increment"``, a non-Markov negative control).
    Live paths are split into quantile bins of the conditioning variable;
    inside each bin ``g(xi_u)`` is fitted by a quadratic in it, and the mean
    residuals of the lower and upper halves in ``xi_{t1}`` are compared.
    Under conditional independence every difference is zero up to noise.
    """
    t1, t2, u = map(float, times)
    if not (0 < t1 < t2 < u):
        raise DomainError("need 0 < t1 < t2 < u")
    if conditioning not in ("state", "increment"):
        raise DomainError(f"unknown conditioning {conditioning!r}")
    rng = np.random.default_rng(seed)
    v, _ = sample_definition(model, law, [t1, t2, u], n_paths, rng)
    live = v[:, 1] != 0.0
    x1, x2, y = v[live, 0], v[live, 1], np.asarray(g(v[live, 2]), dtype=float)
    cond = x2 if conditioning == "state" else x2 - x1
    edges = np.quantile(cond, np.linspace(0, 1, n_bins + 1))
    which = np.clip(np.searchsorted(edges, cond, side="right") - 1, 0, n_bins - 1)
    rows, excluded = [], []
    for b in range(n_bins):
        sel = which == b
        c, xb, yb = cond[sel], x1[sel], y[sel]
        if sel.sum() < 2 * min_count:
            excluded.append({"bin": b, "count": int(sel.sum())})
            continue
        centre, scale = c.mean(), c.std() or 1.0
        design = np.vander((c - centre) / scale, 3)
        coef, *_ = np.linalg.lstsq(design, yb, rcond=None)
        resid = yb - design @ coef
        lower = xb <= np.median(xb)
        r0, r1 = resid[lower], resid[~lower]
        diff = r1.mean() - r0.mean()
        se = math.sqrt(r0.var(ddof=1) / len(r0) + r1.var(ddof=1) / len(r1))
        rows.append({"bin": b, "count": int(sel.sum()), "discrepancy": float(diff), "se": float(se),
                     "z": float(diff / se) if se > 0 else 0.0})
    if not rows:
        raise InsufficientSampleError("no populated bins; increase n_paths")
    worst = max(abs(r["z"]) for r in rows)
    return report("markov", {"times": [t1, t2, u], "n_paths": n_paths, "seed": seed,
                             "conditioning": conditioning, "n_bins": n_bins},
                  worst, z_max, worst < z_max, bins=rows, excluded=excluded, n_live=int(live.sum()))


# ----------------------------------------------------- small-time convergence


def convergence_check(model: CovarianceModel, law: ll.LengthLaw, u: float, eps: float = 0.0,
                      n_max: int = 14, n_paths: int = 1000, seed: int = 0, tolerance: float = 0.02) -> dict:
    """Behaviour of the exact posterior and predictive laws as ``t -> 0``.

    Along ``t_n = 2^-n`` each simulated path gives ``P(tau in (eps, u] | xi_{t_n})``,
    which must approach ``P(eps < tau <= u)``; the mean absolute gap at the
    smallest time is the pass statistic.  The predictive mean and second
    moment of ``xi_u`` must approach their unconditional values, whose
    variance given ``tau = r > u`` is ``rho(u) B(u, r) / rho(r)``.
    """
    if float(ll.cdf(law, eps)) > 0:
        raise DomainError(f"the length law must put no mass on (0, {eps}]")
    times = 2.0 ** -np.arange(n_max, 0, -1)
    rng = np.random.default_rng(seed)
    v, _ = sample_definition(model, law, times, n_paths, rng)
    target = float(ll.cdf(law, u) - ll.cdf(law, eps))
    gaps = np.empty((n_paths, n_max))
    for j, t in enumerate(times):
        if law.is_discrete:
            post = bayes.atom_posterior(model, law, float(t), v[:, j])
            locs = law.atom_locs[law.atom_locs > t]
            mass = post[:, (locs > eps) & (locs <= u)].sum(axis=1)
        else:
            mass = np.array([bayes.posterior_single(model, law, (float(t), float(x))).integrate(
                np.ones_like, (eps, u)) for x in v[:, j]])
        gaps[:, j] = mass - target
    mean_abs = np.abs(gaps).mean(axis=0)[::-1]  # indexed by n = 1..n_max

    rho_u, q_u = float(model.rho_at(u)), float(model.q_at(u))

    def limit_var(r):
        r = np.asarray(r, dtype=float)
        b_ur = model.rho_at(r) * q_u - rho_u * model.q_at(r)
        return rho_u * b_ur / model.rho_at(r)

    second_limit = ll.integrate(law, limit_var, (u, math.inf))
    t_last = float(times[0])
    m1, m2 = [], []
    for x in v[:, 0]:
        pred = bayes.predict(model, law, (t_last, float(x)), u)
        m1.append(pred.mean())
        m2.append(pred.expect(lambda y: y * y))
    m1, m2 = np.asarray(m1), np.asarray(m2)
    return report("convergence",
                  {"u": u, "eps": eps, "n_max": n_max, "n_paths": n_paths, "seed": seed},
                  float(mean_abs[-1]), tolerance, bool(mean_abs[-1] < tolerance),
                  target=target, mean_abs_gap=[float(a) for a in mean_abs],
                  signed_gap=float(gaps[:, 0].mean()),
                  predictive_first_moment={"mean_abs": float(np.abs(m1).mean()), "limit": 0.0},
                  predictive_second_moment={"mean": float(m2.mean()),
                                            "mean_abs_gap": float(np.abs(m2 - second_limit).mean()),
                                            "limit": float(second_limit)})


# ------------------------------------------- dense-Gaussian exact inference


def _conditional_gaussian(cov: np.ndarray, x: np.ndarray):
    """Mean coefficient and variance of the last coordinate given the others."""
    s11, s12, s22 = cov[:-1, :-1], cov[:-1, -1], cov[-1, -1]
    coef = np.linalg.solve(s11, s12)
    return float(coef @ x), float(s22 - s12 @ coef)


def _dense_loglik(model, r, times, values) -> float:
    cov = covariance_matrix(BridgeSpec(model, r), times)
    sign, logdet = np.linalg.slogdet(cov)
    if sign <= 0:
        return -np.inf
    sol = np.linalg.solve(cov, values)
    return float(-0.5 * (len(times) * math.log(2 * math.pi) + logdet + values @ sol))


def _split(observations):
    obs = bayes.check_observations(observations)
    times = np.array([o.t for o in obs])
    values = np.array([o.x for o in obs])
    live = values != 0.0
    return obs, times, values, live


def dense_posterior(model: CovarianceModel, law: ll.LengthLaw, observations):
    """Posterior of ``tau`` from the dense likelihood of every live value.

    Returns ``(nodes, weights, window)``: a discrete measure on prior
    quadrature nodes (exact for atom laws) summing to one.
    """
    obs, times, values, live = _split(observations)
    if not live[0]:
        lo, hi = 0.0, times[0]
    else:
        k = int(np.count_nonzero(live))
        lo = times[k - 1]
        hi = times[k] if k < len(times) else math.inf
    nodes, w = ll.quadrature_nodes(law, (lo, hi), panels=48, order=32)
    if not live[0]:
        return nodes, w / w.sum(), (lo, hi)
    t_live, x_live = times[live], values[live]
    logl = np.array([_dense_loglik(model, r, t_live, x_live) for r in nodes])
    lw = logl + np.log(w)
    return nodes, np.exp(lw - logsumexp(lw)), (lo, hi)


def dense_expectation(model: CovarianceModel, law: ll.LengthLaw, observations, u: float, g) -> float:
    """``E[g(xi_u) | observations]`` by dense Gaussian conditioning.

    For each length ``r > u`` the law of ``xi_u`` given all live values is
    obtained from the full covariance matrix, and ``g`` is integrated
    against it with adaptive quadrature.
    """
    obs, times, values, live = _split(observations)
    if not u > times[-1]:
        raise DomainError("u must exceed the last observation time")
    nodes, w, _ = dense_posterior(model, law, obs)
    g0 = float(np.asarray(g(np.zeros(1)), dtype=float)[0])
    t_live, x_live = times[live], values[live]
    total = 0.0
    for r, wr in zip(nodes, w):
        if r <= u or not live[-1]:
            total += wr * g0
            continue
        cov = covariance_matrix(BridgeSpec(model, r), np.append(t_live, u))
        m, var = _conditional_gaussian(cov, x_live)
        sd = math.sqrt(max(var, 0.0))
        if sd == 0.0:
            total += wr * float(np.asarray(g(np.array([m])), dtype=float)[0])
            continue
        dens = lambda y: math.exp(-0.5 * ((y - m) / sd) ** 2) / (sd * math.sqrt(2 * math.pi))
        val, _ = sp_integrate.quad(lambda y: float(np.asarray(g(np.array([y])), dtype=float)[0]) * dens(y),
                                   m - 12 * sd, m + 12 * sd, epsabs=1e-13, epsrel=1e-11, limit=200)
        total += wr * val
    return float(total)
