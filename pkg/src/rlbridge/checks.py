"""Registered verification checks, shared by ``rlbridge verify`` and the test suite.

Each check takes ``(model, law, n_paths, seed)`` and returns a report dict
``{check, parameters, statistic, tolerance, pass, ...}``.  ``n_paths=None``
selects the check's own default size.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np
from scipy import stats

from . import bayes, bridge, oracle
from . import covariance as cm
from . import length_law as ll
from .bridge import BridgeSpec
from .errors import BridgeError
from .random_bridge import simulate

ATOMS_12 = ll.atoms({1.0: 0.5, 2.0: 0.5})


def _rel(a, b, floor=1e-300):
    a, b = np.asarray(a, dtype=float), np.asarray(b, dtype=float)
    return np.abs(a - b) / np.maximum(np.abs(b), floor)


def _models(model):
    out = {m.name: m for m in (cm.brownian(), cm.ou_from_zero(1.0, 1.0))}
    if model.name not in out or model.params != out[model.name].params:
        out[f"{model.name}{model.params or ''}"] = model
    return out


# ----------------------------------------------------------- closed forms


def check_covariance(model, law, n_paths=None, seed=0, tol=1e-12):
    worst = 0.0
    for m in _models(model).values():
        r = min(1.5, 0.9 * m.horizon) if math.isfinite(m.horizon) else 1.5
        grid = np.linspace(0.0, r, 52)[1:-1]
        spec = BridgeSpec(m, r)
        a = bridge.bridge_covariance(spec, grid[:, None], grid[None, :])
        b = bridge.bridge_covariance_raw(spec, grid[:, None], grid[None, :])
        worst = max(worst, float(_rel(a, b).max()))
    return oracle.report("covariance", {"grid_points": 50, "models": list(_models(model))},
                         worst, tol, worst < tol)


def _random_triples(rng, n, horizon):
    top = min(3.0, 0.95 * horizon) if math.isfinite(horizon) else 3.0
    r = rng.uniform(0.1, top, n)
    tu = np.sort(rng.uniform(0.0, 1.0, (n, 2)), axis=1) * r[:, None]
    return tu[:, 0], tu[:, 1], r


def check_kernel(model, law, n_paths=None, seed=0, tol=1e-12, n=1000):
    rng = np.random.default_rng(seed)
    worst = 0.0
    for m in _models(model).values():
        t, u, r = _random_triples(rng, n, m.horizon)
        s1, v1 = bridge.kernel_params(m, t, u, r)
        s2, v2 = bridge.general_kernel_params(m, t, u, r)
        worst = max(worst, float(np.max(np.abs(s1 - s2) / np.maximum(1.0, np.abs(s2)))),
                    float(np.max(np.abs(v1 - v2) / np.maximum(1.0, np.abs(v2)))))
    return oracle.report("kernel", {"triples": n, "seed": seed, "models": list(_models(model))},
                         worst, tol, worst < tol)


def check_joint_density(model, law, n_paths=None, seed=0, tol=1e-10, n=1000):
    rng = np.random.default_rng(seed)
    worst = 0.0
    mods = list(_models(model).values())
    for i in range(n):
        m = mods[i % len(mods)]
        top = min(3.0, 0.95 * m.horizon) if math.isfinite(m.horizon) else 3.0
        r = rng.uniform(0.2, top)
        k = int(rng.integers(1, 6))
        times = np.sort(rng.uniform(0.02, 0.98, k)) * r
        if np.any(np.diff(times) < 1e-3 * r):
            times = np.linspace(0.1, 0.9, k) * r
        spec = BridgeSpec(m, r)
        cov = bridge.covariance_matrix(spec, times)
        x = rng.standard_normal(k) * np.sqrt(np.diag(cov))
        dense = stats.multivariate_normal(np.zeros(k), cov).logpdf(x)
        ours = bridge.joint_logpdf(spec, times, x)
        worst = max(worst, abs(math.expm1(ours - dense)))
    return oracle.report("joint_density", {"inputs": n, "seed": seed, "max_points": 5},
                         worst, tol, worst < tol)


# ------------------------------------------------------------- samplers


def check_sampler_ks(model, law, n_paths=None, seed=0, n_seeds=10, alpha=0.01, need=9):
    n_paths = n_paths or 50_000
    spec = BridgeSpec(cm.brownian(), 1.0)
    grid = np.linspace(0.0, 1.0, 101)
    k = 50
    pvals = []
    for s in range(seed, seed + n_seeds):
        seq = bridge.sample_paths(spec, grid, n_paths, seed=s)[:, k]
        chol = bridge.sample_paths_cholesky(spec, grid, n_paths, np.random.default_rng(s))[:, k]
        pvals.append(float(stats.ks_2samp(seq, chol).pvalue))
    passed = sum(p > alpha for p in pvals)
    return oracle.report("sampler_ks", {"n_paths": n_paths, "seeds": list(range(seed, seed + n_seeds)),
                                        "time": 0.5, "alpha": alpha},
                         passed, need, passed >= need, pvalues=pvals)


def check_stopping_law(model, law, n_paths=None, seed=0, z=3.0):
    n_paths = n_paths or 50_000
    hi = min(law.support_bounds()[1], 10.0) * 1.25
    grid = np.round(np.arange(0.0, hi + 1e-12, 0.05), 12)
    if math.isfinite(model.horizon):
        grid = grid[grid < model.horizon]
    batch = simulate(model, law, grid, n_paths, seed)
    emp = (batch.values == 0.0).mean(axis=0)
    f = np.asarray(ll.cdf(law, grid), dtype=float)
    # at t = 0 the value is 0 by construction whatever tau is
    emp, f, g = emp[1:], f[1:], grid[1:]
    se = np.sqrt(f * (1 - f) / n_paths)
    dev = np.abs(emp - f)
    ok = np.where(se > 0, dev <= z * se, dev == 0.0)
    zs = np.where(se > 0, dev / np.where(se > 0, se, 1.0), np.where(dev == 0.0, 0.0, np.inf))
    return oracle.report("stopping_law", {"n_paths": n_paths, "seed": seed, "grid_points": len(g)},
                         float(zs.max()), z, bool(ok.all()),
                         failing_times=[float(x) for x in g[~ok]])


# -------------------------------------------------------------- inference


def check_posterior_mc(model, law, n_paths=None, seed=0, t=0.5, x=0.8, h=0.01, tol=0.05):
    n_paths = n_paths or 1_000_000
    params = {"t": t, "x": x, "h": h, "n_paths": n_paths, "seed": seed}
    try:
        emp = oracle.empirical_posterior(model, law, t, x, h, n_paths, seed)
    except BridgeError as exc:
        return oracle.report("posterior_mc", params, None, tol, False, error=str(exc))
    post = bayes.posterior_single(model, law, bayes.Observation(t, x))
    tv = oracle.total_variation(post, emp)
    extra = {"retained": emp.count}
    if emp.discrete:
        extra["exact"] = {str(k): v for k, v in post.atom_masses().items()}
        extra["empirical"] = {str(a): float(f) for a, f in zip(emp.support, emp.frequencies)}
        extra["std_errors"] = [float(s) for s in emp.std_errors]
    return oracle.report("posterior_mc", params, tv, tol, tv < tol, **extra)


def _random_model(rng):
    kind = int(rng.integers(0, 3))
    if kind == 0:
        return cm.brownian()
    if kind == 1:
        return cm.scaled_brownian(float(rng.uniform(0.5, 2.0)))
    return cm.ou_from_zero(float(rng.uniform(0.2, 2.0)), float(rng.uniform(0.5, 1.5)))


def _random_law(rng, continuous=True):
    kinds = 4 if continuous else 1
    kind = int(rng.integers(0, kinds))
    if kind == 0:
        k = int(rng.integers(1, 5))
        locs = np.round(np.sort(rng.choice(np.arange(1, 60), k, replace=False)) * 0.05, 10)
        w = rng.dirichlet(np.ones(k))
        return ll.atoms(dict(zip(locs.tolist(), w.tolist())))
    if kind == 1:
        return ll.exponential(float(rng.uniform(0.3, 2.0)))
    if kind == 2:
        a = float(rng.uniform(0.1, 1.5))
        return ll.uniform(a, a + float(rng.uniform(0.2, 2.0)))
    return ll.mixture([(0.5, ll.atoms({float(rng.uniform(0.5, 2.5)): 1.0})),
                       (0.5, ll.exponential(float(rng.uniform(0.5, 2.0))))])


def _live_time(rng, law):
    """An observation time leaving prior mass after it."""
    hi = ll.quantile(law, np.array([0.9]))[0]
    return float(rng.uniform(0.05, 0.95) * hi)


def check_normalization(model, law, n_paths=None, seed=0, tol=1e-9, n=1000):
    """Mass of the live weight (literal ratio form on atom laws) and of the
    first-zero-between-observations weight, over random configurations."""
    rng = np.random.default_rng(seed)
    worst_phi = worst_psi = 0.0
    for i in range(n):
        m, lw = _random_model(rng), _random_law(rng)
        t = _live_time(rng, lw)
        x = float(rng.normal(0.0, 1.0)) * math.sqrt(float(m.rho_at(t)) * float(m.q_at(t)))
        if lw.is_discrete:
            locs = lw.atom_locs[lw.atom_locs > t]
            masses = lw.atom_masses[lw.atom_locs > t]
            total = float(np.dot(bayes.phi_weight(m, lw, t, locs, x), masses))
        else:
            total = bayes.posterior_single(m, lw, (t, x)).total_mass()
        worst_phi = max(worst_phi, abs(total - 1.0))
        # window (t, t2] must carry prior mass
        t2 = float(ll.quantile(lw, np.array([min(0.999, float(ll.cdf(lw, t)) + 0.5 * (1 - float(ll.cdf(lw, t))))]))[0])
        t2 = max(t2, t + 1e-3)
        t0 = t * float(rng.uniform(0.1, 0.9))
        x0 = float(rng.normal(0.0, 0.5))
        post = bayes.posterior_multi(m, lw, [(t0, x0 or 0.1), (t, x), (t2, 0.0)])
        worst_psi = max(worst_psi, abs(post.total_mass() - 1.0))
    worst = max(worst_phi, worst_psi)
    return oracle.report("normalization", {"configurations": n, "seed": seed}, worst, tol, worst < tol,
                         live_weight_error=worst_phi, window_weight_error=worst_psi)


def check_markov_reduction(model, law, n_paths=None, seed=0, tol=1e-8, n=1000):
    """Prediction from all observations against prediction from the last one.

    On atom laws both are also compared with dense Gaussian conditioning on
    every observed value, which uses no Markov structure at all.
    """
    rng = np.random.default_rng(seed)
    tests = [lambda y: y, lambda y: y * y, lambda y: np.cos(y)]
    worst = worst_dense = 0.0
    n_dense = 0
    for i in range(n):
        m, lw = _random_model(rng), _random_law(rng)
        k = int(rng.integers(1, 5))
        t_last = _live_time(rng, lw)
        times = np.sort(rng.uniform(0.05, 1.0, k)) * t_last
        times[-1] = t_last
        if np.any(np.diff(times) <= 1e-6):
            times = np.linspace(0.2, 1.0, k) * t_last
        sd = np.sqrt(m.rho_at(times) * m.q_at(times))
        xs = rng.normal(0.0, 1.0, k) * sd
        xs[xs == 0.0] = 0.1
        u = t_last + float(rng.uniform(0.05, 1.0))
        g = tests[i % len(tests)]
        obs = list(zip(times.tolist(), xs.tolist()))
        multi = bayes.expect_joint(m, lw, obs, u, lambda r, y: g(y))
        single = bayes.predict(m, lw, obs[-1], u).expect(g)
        worst = max(worst, abs(multi - single))
        if lw.is_discrete:
            dense = oracle.dense_expectation(m, lw, obs, u, g)
            worst_dense = max(worst_dense, abs(dense - single))
            n_dense += 1
    stat = max(worst, worst_dense)
    return oracle.report("markov_reduction", {"vectors": n, "seed": seed, "max_observations": 4},
                         stat, tol, stat < tol, formula_gap=worst, dense_gap=worst_dense,
                         dense_comparisons=n_dense)


def check_markov(model, law, n_paths=None, seed=0, times=(0.3, 0.6, 0.9)):
    n_paths = n_paths or 1_000_000
    params = {"n_paths": n_paths, "seed": seed, "times": list(times)}
    try:
        ok = oracle.markov_ci_test(model, law, times, lambda y: y, n_paths, seed, "state")
        ctrl = oracle.markov_ci_test(model, law, times, lambda y: y, n_paths, seed + 1, "increment")
    except BridgeError as exc:
        return oracle.report("markov", params, None, 3.0, False, error=str(exc))
    return oracle.report("markov", params, ok["statistic"], ok["tolerance"],
                         ok["pass"] and not ctrl["pass"],
                         markov_state=ok["pass"], negative_control_rejected=not ctrl["pass"],
                         negative_control_statistic=ctrl["statistic"])


def check_convergence(model, law, n_paths=None, seed=0, u=1.5, tol=0.02):
    n_paths = n_paths or 1000
    eps = 0.5 * float(law.support_bounds()[0])
    try:
        return oracle.convergence_check(model, law, u, eps=eps, n_paths=n_paths, seed=seed, tolerance=tol)
    except BridgeError as exc:
        return oracle.report("convergence", {"u": u, "n_paths": n_paths}, None, tol, False, error=str(exc))


def check_tower(model, law, n_paths=None, seed=0, t=1.0, z=3.0):
    n_paths = n_paths or 100_000
    grid = np.round(np.arange(0.0, t + 1e-12, 0.05), 12)
    batch = simulate(model, law, grid, n_paths, seed)
    est = bayes.filtration_estimate_batch(model, law, batch, t, lambda r: np.asarray(r, dtype=float))
    mu = ll.mean(law)
    se = float(est.std(ddof=1) / math.sqrt(n_paths))
    zs = abs(float(est.mean()) - mu) / se if se > 0 else 0.0
    return oracle.report("tower", {"n_paths": n_paths, "seed": seed, "t": t}, zs, z, zs < z,
                         estimate=float(est.mean()), expected=mu, std_error=se)


REGISTRY: dict[str, Callable[..., dict]] = {
    "covariance": check_covariance,
    "kernel": check_kernel,
    "joint_density": check_joint_density,
    "sampler_ks": check_sampler_ks,
    "stopping_law": check_stopping_law,
    "posterior_mc": check_posterior_mc,
    "normalization": check_normalization,
    "markov_reduction": check_markov_reduction,
    "markov": check_markov,
    "convergence": check_convergence,
    "tower": check_tower,
}


def run(names=None, model=None, law=None, n_paths=None, seed=0) -> list[dict]:
    model = model or cm.brownian()
    law = law or ATOMS_12
    names = list(REGISTRY) if not names else list(names)
    unknown = [n for n in names if n not in REGISTRY]
    if unknown:
        raise KeyError(f"unknown checks: {', '.join(unknown)}")
    out = []
    for name in names:
        try:
            out.append(REGISTRY[name](model, law, n_paths=n_paths, seed=seed))
        except BridgeError as exc:
            out.append(oracle.report(name, {"n_paths": n_paths, "seed": seed}, None, None, False, error=str(exc)))
    return out
