import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, stats

from rlbridge import bayes, oracle
from rlbridge import covariance as cm
from rlbridge import length_law as ll
from rlbridge.bayes import Observation
from rlbridge.errors import DomainError, InconsistentObservationError, PreconditionError
from rlbridge.random_bridge import simulate


def brownian_atom_oracle(t, x, locs, masses):
    """Posterior over atoms from the bridge marginal N(0, t(r-t)/r) via scipy."""
    locs, masses = np.asarray(locs, float), np.asarray(masses, float)
    live = locs > t
    w = np.zeros_like(locs)
    w[live] = masses[live] * stats.norm.pdf(x, 0, np.sqrt(t * (locs[live] - t) / locs[live]))
    return w / w.sum()


def test_single_observation_atom_split(brownian, two_atoms):
    post = bayes.posterior_single(brownian, two_atoms, (0.5, 0.8))
    masses = post.atom_masses()
    exact = brownian_atom_oracle(0.5, 0.8, [1.0, 2.0], [0.5, 0.5])
    assert masses[1.0] == pytest.approx(exact[0], rel=1e-12)
    assert masses[2.0] == pytest.approx(exact[1], rel=1e-12)
    assert round(masses[1.0], 3) == 0.444 and round(masses[2.0], 3) == 0.556
    assert post.branch == "live" and post.window == (0.5, math.inf)


def test_pinned_branch(brownian, two_atoms):
    post = bayes.posterior_single(brownian, two_atoms, (1.5, 0.0))
    assert post.branch == "pinned"
    assert post.atom_masses() == pytest.approx({1.0: 1.0})
    law = ll.exponential(1.0)
    post = bayes.posterior_single(brownian, law, (0.7, 0.0))
    # truncated exponential on (0, 0.7]
    exact_mean = 1.0 - 0.7 * math.exp(-0.7) / (1 - math.exp(-0.7))
    assert post.mean() == pytest.approx(exact_mean, rel=1e-10)
    assert post.total_mass() == pytest.approx(1.0, abs=1e-12)


def test_pinned_needs_mass(brownian, two_atoms):
    with pytest.raises(PreconditionError):
        bayes.posterior_single(brownian, two_atoms, (0.5, 0.0))


def test_impossible_live_value(brownian, two_atoms):
    with pytest.raises(InconsistentObservationError):
        bayes.posterior_single(brownian, two_atoms, (2.5, 0.3))


def test_continuous_posterior_against_direct_quadrature(ou):
    law = ll.exponential(1.3)
    t, x = 0.6, -0.4
    post = bayes.posterior_single(ou, law, (t, x))

    def unnorm(r):
        # conditional variance of X_t given X_r, from the covariance of the underlying process
        cov_tt = ou.rho(t) * ou.q(t)
        cov_tr = ou.rho(t) * ou.q(r)
        cov_rr = ou.rho(r) * ou.q(r)
        var = cov_tt - cov_tr**2 / cov_rr
        return 1.3 * math.exp(-1.3 * r) * stats.norm.pdf(x, 0, math.sqrt(var))

    z = integrate.quad(unnorm, t, 40.0, epsabs=0, epsrel=1e-12, limit=200)[0]
    m = integrate.quad(lambda r: r * unnorm(r), t, 40.0, epsabs=0, epsrel=1e-12, limit=200)[0] / z
    c = integrate.quad(unnorm, t, 1.5, epsabs=0, epsrel=1e-12, limit=200)[0] / z
    assert post.total_mass() == pytest.approx(1.0, abs=1e-9)
    assert post.mean() == pytest.approx(m, rel=1e-8)
    assert post.cdf(1.5) == pytest.approx(c, rel=1e-8)
    assert post.survival(1.5) == pytest.approx(1 - c, rel=1e-8)
    assert post.cdf(post.quantile(0.3)) == pytest.approx(0.3, abs=1e-9)


def test_posterior_depends_on_the_time(brownian):
    law = ll.exponential(1.0)
    a = bayes.posterior_single(brownian, law, (0.3, 0.5)).cdf(1.0)
    b = bayes.posterior_single(brownian, law, (0.5, 0.7)).cdf(1.0)
    assert abs(a - b) > 1e-3


def test_literal_weight_matches_score_form(ou):
    law = ll.mixture([(0.5, ll.exponential(1.0)), (0.5, ll.atoms({1.2: 0.5, 3.0: 0.5}))])
    t, x = 0.4, 0.6
    post = bayes.posterior_single(ou, law, (t, x))
    r = np.array([0.5, 1.2, 2.0, 3.0])
    assert np.allclose(bayes.phi_weight(ou, law, t, r, x), post.weight(r), rtol=1e-9)


@settings(max_examples=40, deadline=None)
@given(t=st.floats(0.05, 1.5), x=st.floats(-2.0, 2.0).filter(lambda v: abs(v) > 1e-3),
       rate=st.floats(0.2, 3.0))
def test_posterior_normalises(t, x, rate):
    model = cm.ou_from_zero(0.7, 1.2)
    post = bayes.posterior_single(model, ll.exponential(rate), (t, x))
    assert post.total_mass() == pytest.approx(1.0, abs=1e-9)


def test_multi_branches(brownian):
    law = ll.atoms({0.75: 0.3, 1.5: 0.3, 3.0: 0.4})
    live = bayes.posterior_multi(brownian, law, [(0.2, 0.1), (0.5, -0.3)])
    assert live.branch == "live"
    single = bayes.posterior_single(brownian, law, (0.5, -0.3)).atom_masses()
    assert live.atom_masses() == pytest.approx(single, rel=1e-12)

    psi = bayes.posterior_multi(brownian, law, [(0.2, 0.1), (0.5, -0.3), (1.0, 0.0)])
    assert psi.branch == "psi" and psi.index == 2 and psi.window == (0.5, 1.0)
    assert psi.atom_masses() == pytest.approx({0.75: 1.0})

    pinned = bayes.posterior_multi(brownian, law, [(0.8, 0.0), (1.0, 0.0)])
    assert pinned.branch == "pinned" and pinned.window == (0.0, 0.8)


def test_psi_branch_against_dense_oracle(ou):
    law = ll.atoms({0.6: 0.2, 0.9: 0.3, 1.4: 0.5})
    obs = [(0.3, 0.2), (0.5, -0.1), (1.0, 0.0)]
    post = bayes.posterior_multi(ou, law, obs).atom_masses()
    nodes, w, window = oracle.dense_posterior(ou, law, obs)
    assert window == (0.5, 1.0)
    for r, m in zip(nodes, w):
        assert post.get(float(r), 0.0) == pytest.approx(m, abs=1e-12)


def test_multi_validation(brownian, two_atoms):
    with pytest.raises(DomainError):
        bayes.posterior_multi(brownian, two_atoms, [(0.5, 0.1), (0.4, 0.1)])
    with pytest.raises(DomainError):
        bayes.posterior_multi(brownian, two_atoms, [(1.2, 0.0), (1.5, 0.2)])
    with pytest.raises(DomainError):
        bayes.posterior_multi(brownian, two_atoms, [])
    with pytest.raises(DomainError):
        Observation(0.0, 1.0)
    with pytest.raises(DomainError):
        Observation(1.0, math.nan)


def test_predict_example(brownian, two_atoms):
    pred = bayes.predict(brownian, two_atoms, (0.5, 0.8), 1.0)
    w = brownian_atom_oracle(0.5, 0.8, [1.0, 2.0], [0.5, 0.5])
    assert pred.zero_mass == pytest.approx(w[0], rel=1e-12)
    (weight, k), = pred.components()
    # bridge of length 2 from (0.5, x) to time 1: slope (2-1)/(2-0.5), variance 0.5 * 1 / 1.5
    assert weight == pytest.approx(w[1], rel=1e-12)
    assert k.slope == pytest.approx(2 / 3, rel=1e-14)
    assert k.variance == pytest.approx(1 / 3, rel=1e-14)
    assert pred.mean() == pytest.approx(w[1] * 0.8 * 2 / 3, rel=1e-12)
    assert pred.total_mass() == pytest.approx(1.0, abs=1e-14)
    assert pred.prob(-np.inf, np.inf) == pytest.approx(1.0, abs=1e-14)
    assert pred.prob(-1e-9, 1e-9) == pytest.approx(w[0], abs=1e-8)


def test_prediction_after_pinning(brownian, two_atoms):
    pred = bayes.predict(brownian, two_atoms, (1.5, 0.0), 1.8)
    assert pred.zero_mass == 1.0 and pred.mean() == 0.0


def test_predict_validation(brownian, two_atoms):
    with pytest.raises(DomainError):
        bayes.predict(brownian, two_atoms, (0.5, 0.8), 0.5)


def test_expect_joint(brownian, two_atoms):
    obs = [(0.5, 0.8)]
    assert bayes.expect_joint(brownian, two_atoms, obs, 1.0, lambda r, y: np.ones_like(y)) == pytest.approx(1.0)
    single = ll.atoms({2.0: 1.0})
    assert bayes.expect_joint(brownian, single, obs, 1.0, lambda r, y: y) == pytest.approx(0.8 * 2 / 3, rel=1e-12)
    law = ll.exponential(1.0)
    cdf = bayes.posterior_single(brownian, law, obs[0]).cdf(1.7)
    got = bayes.expect_joint(brownian, law, obs, 1.0, lambda r, y: (r <= 1.7) + 0 * y)
    assert got == pytest.approx(cdf, abs=1e-9)


def test_expect_joint_matches_dense_oracle(ou):
    law = ll.atoms({0.8: 0.3, 1.6: 0.3, 2.5: 0.4})
    obs = [(0.2, 0.15), (0.6, -0.2)]
    got = bayes.expect_joint(ou, law, obs, 1.2, lambda r, y: y**2)
    assert got == pytest.approx(oracle.dense_expectation(ou, law, obs, 1.2, lambda y: y**2), rel=1e-8)


def test_atom_posterior_batch(brownian):
    law = ll.atoms({1.0: 0.2, 2.0: 0.5, 4.0: 0.3})
    xs = np.array([-1.0, 0.2, 0.9])
    got = bayes.atom_posterior(brownian, law, 0.5, xs)
    for row, x in zip(got, xs):
        assert np.allclose(row, brownian_atom_oracle(0.5, x, [1.0, 2.0, 4.0], [0.2, 0.5, 0.3]), rtol=1e-12)
    with pytest.raises(InconsistentObservationError):
        bayes.atom_posterior(brownian, law, 4.5, xs)


def test_filtration_estimates(brownian, two_atoms):
    grid = np.linspace(0, 2.5, 26)
    batch = simulate(brownian, two_atoms, grid, 200, seed=2)
    g = lambda r: np.asarray(r, dtype=float)
    for t in (0.0, 0.5, 1.2, 2.2):
        est = bayes.filtration_estimate_batch(brownian, two_atoms, batch, t, g)
        one = [bayes.filtration_estimate(brownian, two_atoms, batch.path(i), t, g) for i in range(10)]
        assert np.allclose(est[:10], one, rtol=1e-12)
        if t == 0.0:
            assert np.allclose(est, 1.5)
        if t >= 2.0:
            assert np.array_equal(est, batch.tau)


def test_predict_example_later_time(brownian, two_atoms):
    pred = bayes.predict(brownian, two_atoms, (0.5, 0.8), 1.5)
    (weight, k), = pred.components()
    assert pred.zero_mass == pytest.approx(0.4443, abs=5e-4)
    assert k.slope * 0.8 == pytest.approx(0.5 / 1.5 * 0.8, rel=1e-14)
    assert round(k.slope * 0.8, 4) == 0.2667
    assert k.variance == pytest.approx(1.0 * 0.5 / 1.5, rel=1e-14)
